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

"""Script to smooth, evaluate, generate and plot liveness score streams."""

import sys

from tempco.cli_lib import main

# -----------------------------------------------------------------------------
# Main:
if __name__ == "__main__":
    # python3 tempco_cli.py synth -o corpus.jsonl
    # python3 tempco_cli.py smooth -i corpus.jsonl -m fastco -w 5
    # python3 tempco_cli.py eval -i corpus.jsonl -K 1,3,5,10,15,30
    sys.exit(main())
