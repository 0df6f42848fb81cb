#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024 tempco developers

# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.

# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.

# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.

"""Temporal consistency tools for online liveness scores: smoothing, losses and metrics."""

from setuptools import setup

requires = ['numpy', 'xarray', 'dask', 'trollsift', 'h5netcdf', 'matplotlib', 'pandas']

NAME = "tempco"
README = open('README.md', 'r').read()

setup(name=NAME,
      version='0.1.0',
      description='Uncertainty-aware smoothing and segment level evaluation of liveness score streams',
      long_description=README,
      long_description_content_type='text/markdown',
      author='tempco developers',
      classifiers=["Development Status :: 3 - Alpha",
                   "Intended Audience :: Science/Research",
                   "License :: OSI Approved :: GNU General Public License v3 " +
                   "or later (GPLv3+)",
                   "Operating System :: OS Independent",
                   "Programming Language :: Python",
                   "Topic :: Scientific/Engineering"],
      packages=['tempco', 'tempco.tests'],
      scripts=['bin/tempco_cli.py'],
      data_files=[],
      zip_safe=False,
      python_requires='>=3.8',
      install_requires=requires,
      test_suite='tempco.tests.suite',
      )
