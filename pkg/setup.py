#!/usr/bin/env python3
# coding: utf-8

"""A setuptools based setup module.

See:
https://packaging.python.org/en/latest/distributing.html
https://github.com/pypa/sampleproject
"""

# https://github.com/pypa/setuptools/issues/2345
from setuptools import setup, find_packages  # type: ignore

with open("README.rst") as readme_file:
    README = readme_file.read()

setup(
    name="smilansky",
    use_scm_version=True,
    description="A Laboratory for the Smilansky Model on a Finite Circle",
    long_description=README,
    long_description_content_type="text/x-rst",
    license="LGPLv2+",
    package_dir={"": "src"},
    packages=find_packages("src"),
    include_package_data=True,
    python_requires=">=3.7",
    setup_requires=["setuptools_scm >= 4.1"],
    install_requires=[
        "attrs >= 21.2",
        "mpmath >= 1.2",
        "numpy >= 1.21",
        "scipy >= 1.7",
        "setuptools>=57.0",
    ],
    entry_points={
        "console_scripts": [
            "smilansky = smilansky.cli:main",
        ],
    },
    keywords="smilansky point interaction spectral theory",
    classifiers=[
        "License :: OSI Approved ::"
        " GNU Lesser General Public License v2 or later (LGPLv2+)",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Physics",
        "Development Status :: 4 - Beta",
    ],
)
