import sys

from hypolab.cli import main

sys.exit(main())
