"""
Minimal LaTeX object model used to render hypolab reports. Objects build to LaTeX strings and carry the packages they need, which are collected by the enclosing document at build time.
"""
import os
from subprocess import DEVNULL, STDOUT, check_call

_SPECIAL_CHARACTERS = {
    '\\': r'\textbackslash{}',
    '&': r'\&',
    '%': r'\%',
    '$': r'\$',
    '#': r'\#',
    '_': r'\_',
    '{': r'\{',
    '}': r'\}',
    '~': r'\textasciitilde{}',
    '^': r'\textasciicircum{}',
}


def escape(text):
    """
    Escapes the LaTeX special characters of a plain string, e.g. 'case2_schur' becomes 'case2\\_schur'.
    """
    return ''.join(_SPECIAL_CHARACTERS.get(char, char) for char in str(text))


def build(obj, parent=None):
    """
    Builds 'obj' with its 'build' method when it has one, else converts it with 'str'. When a parent is given, the packages and preamble lines of a TexObject are passed on to it.
    """
    if isinstance(obj, TexObject):
        tex = obj.build()
        if parent is not None:
            for name, package in obj.packages.items():
                parent.add_package(name, *package.options, **package.kwoptions)
            for line in obj.preamble:
                parent.add_to_preamble(line)
        return tex
    if hasattr(obj, 'build'):
        return obj.build()
    return str(obj)


class TexFile:
    """
    A .tex file on disk, optionally compiled with pdflatex.
    """
    def __init__(self, filename, filepath):
        self.filename = filename
        self.filepath = filepath

    @property
    def path(self):
        return os.path.join(self.filepath, self.filename + '.tex').replace('\\', '/')

    def save(self, tex):
        os.makedirs(self.filepath, exist_ok=True)
        with open(self.path, 'w', encoding='utf8') as file:
            file.write(tex)

    def compile_to_pdf(self, build_from_dir='source'):
        """
        Args:
            build_from_dir (str, either 'source' or 'cwd'): Directory pdflatex is called from, either the directory of the .tex file or the current working directory.
        """
        if build_from_dir == 'cwd':
            call = ['pdflatex', '-halt-on-error', '--output-directory', self.filepath, self.path]
            cwd = '.'
        elif build_from_dir == 'source':
            call = ['pdflatex', '-halt-on-error', self.filename + '.tex']
            cwd = self.filepath
        else:
            raise ValueError("Invalid 'build_from_dir' option. Should be one of 'source' or 'cwd'.")
        check_call(call, stdout=DEVNULL, stderr=STDOUT, cwd=cwd)


class TexObject:
    """
    Base of every LaTeX object. Subclasses redefine 'build', which must not modify the object.
    """
    def __init__(self, obj_name):
        """
        Args:
            obj_name (str): Name of the object.
        """
        self.name = obj_name
        self.packages = {}
        self.preamble = []

    def add_package(self, package, *options, **kwoptions):
        """
        Adds a package to the preamble. Options of a package added twice are merged.

        Args:
            package (str): The package name.
            options (tuple of str): Options passed to the package in brackets.
            kwoptions (dict of str): Keyword options passed to the package in brackets.
        """
        if package not in self.packages:
            self.packages[package] = Package(package, *options, **kwoptions)
        else:
            known = self.packages[package].options
            self.packages[package].options = known + [option for option in options if option not in known]
            self.packages[package].kwoptions.update(kwoptions)

    def add_to_preamble(self, line):
        self.preamble.append(line)

    def build_packages(self):
        return '\n'.join(build(package, self) for package in self.packages.values())

    def build_preamble(self):
        lines = list(dict.fromkeys(build(line, self) for line in self.preamble))
        return '\n'.join([self.build_packages()] + lines)

    def __repr__(self):
        return f'{self.__class__.__name__} {self.name}'

    def __str__(self):
        return self.build()

    def build(self):
        return ''


class TexCommand(TexObject):
    def __init__(self, command, *parameters, options=(), options_pos='second', **kwoptions):
        r"""
        Args:
            command (str): Name of the command, rendered as '\command'.
            parameters: Parameters of the command, each inside curly braces {}.
            options (str or sequence of str): Options of the command, inside brackets [].
            options_pos (str, either 'first', 'second' or 'last'): Position of the brackets with respect to the parameters.
            kwoptions (dict of str): Keyword options, inside the same brackets as the options.
        """
        super().__init__(command)
        if options_pos not in ('first', 'second', 'last'):
            raise ValueError(f"Invalid options_pos '{options_pos}'. Should be one of 'first', 'second' or 'last'.")
        self.command = command
        self.parameters = list(parameters)
        self.options = list(options) if isinstance(options, (tuple, list)) else [options]
        self.kwoptions = kwoptions
        self.options_pos = options_pos

    def _build_options(self):
        if not self.options and not self.kwoptions:
            return ''
        items = [build(option, self) for option in self.options]
        items += [f"{key.replace('_', ' ')}={build(value, self)}" for key, value in self.kwoptions.items()]
        return '[' + ', '.join(items) + ']'

    def build(self):
        parameters = [f'{{{build(parameter, self)}}}' for parameter in self.parameters]
        options = self._build_options()
        split = {'first': 0, 'second': min(1, len(parameters)), 'last': len(parameters)}[self.options_pos]
        return f'\\{self.command}' + ''.join(parameters[:split]) + options + ''.join(parameters[split:])


class Package(TexCommand):
    """
    'usepackage' command.
    """
    def __init__(self, package_name, *options, **kwoptions):
        super().__init__('usepackage', package_name, options=options, options_pos='first', **kwoptions)


class bold(TexCommand):
    def __init__(self, text):
        super().__init__('textbf', text)


class italic(TexCommand):
    def __init__(self, text):
        super().__init__('textit', text)


class begin(TexCommand):
    def __init__(self, environment, *parameters, options=(), **kwoptions):
        super().__init__('begin', environment, *parameters, options=options, **kwoptions)


class end(TexCommand):
    def __init__(self, environment):
        super().__init__('end', environment)


class Label(TexCommand):
    """
    'label' command, prefixed by the environment name. Builds to an empty string when no label is set.
    """
    def __init__(self, label, prefix=None):
        super().__init__('label')
        self.label = label
        self.prefix = prefix

    def build(self):
        if not self.label:
            return ''
        prefix = f'{self.prefix}:' if self.prefix else ''
        return f'\\label{{{prefix}{self.label}}}'


class TexEnvironment(TexObject):
    r"""
    A \begin{env} ... \end{env} block whose body holds strings and other TexObjects, built recursively.
    """
    def __init__(self, env_name, *parameters, options=(), label='', **kwoptions):
        """
        Args:
            env_name (str): Name of the environment.
            parameters (tuple of str): Parameters of the environment, inside curly braces {}.
            options (tuple of str): Options of the environment, inside brackets [].
            label (str): Label of the environment, placed right after the head.
        """
        super().__init__(env_name)
        self.head = begin(env_name, *parameters, options=options, **kwoptions)
        self.tail = end(env_name)
        self.body = []
        self.label = Label(label, env_name)

    def append(self, obj):
        self.body.append(obj)

    def add_text(self, text):
        self.append(text)

    def __iadd__(self, other):
        self.append(other)
        return self

    def new(self, obj):
        """
        Appends obj to the body and returns it.
        """
        self.append(obj)
        return obj

    def _build_list(self, parts):
        tex = [build(part, self) for part in parts]
        return '\n'.join(part for part in tex if part)

    def build(self):
        return self._build_list([self.head, self.label, self._build_list(self.body), self.tail])
