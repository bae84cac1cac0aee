import setuptools

with open("README.md", "r") as fh:
    long_description = fh.read()

setuptools.setup(
    name="hypolab",
    version="0.1.0",
    description="Certification of hypocoercive decay constants for mean-field kinetic Fokker-Planck equations",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=['tests']),
    package_data={'hypolab': ['schemas/*.json']},
    install_requires=['numpy', 'scipy'],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['hypolab=hypolab.cli:main']},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.8',
    data_files=[('', ['version.py'])]
)
