#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (c) 2024 tempco developers
#
# This file is part of tempco.
#
# tempco is free software: you can redistribute it and/or modify it
# under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# tempco is distributed in the hope that it will be useful, but
# WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the GNU
# General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with tempco.  If not, see <http://www.gnu.org/licenses/>.

"""Test Initializer for tempco."""

import unittest

from tempco.tests import (test_init, test_stream, test_filter, test_loss, test_metric,
                          test_synth, test_plot, test_cli)


def suite():
    """Test global test suite."""
    mysuite = unittest.TestSuite()
    mysuite.addTests(test_init.suite())
    mysuite.addTests(test_stream.suite())
    mysuite.addTests(test_filter.suite())
    mysuite.addTests(test_loss.suite())
    mysuite.addTests(test_metric.suite())
    mysuite.addTests(test_synth.suite())
    mysuite.addTests(test_plot.suite())
    mysuite.addTests(test_cli.suite())
    return mysuite


def load_tests(loader, tests, pattern):
    """Load all tests."""
    return suite()
