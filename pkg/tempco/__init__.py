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

"""Package Initializer for tempco."""

import math
import os
import logging

import numpy as np
from trollsift import compose

try:
    from importlib.metadata import version, PackageNotFoundError
except ImportError:  # pragma: no cover
    version = None
    PackageNotFoundError = Exception

logging.basicConfig(
    format='tempco %(levelname)s: |%(asctime)s|: %(message)s',
    level=logging.INFO,
    # datefmt='%Y-%m-%d %H:%M:%S')
    datefmt='%H:%M:%S')
logger = logging.getLogger('tempco')

__version__ = 'unknown'
if version is not None:
    try:
        __version__ = version(__name__)
    except PackageNotFoundError:
        # package is not installed
        pass

# Identifier of segment number `segment` cut out of tracklet `tracklet_id`
SEGMENT_ID_PATTERN = '{tracklet_id}#{segment:04d}'

# Default output names, composed from the input stem
OUTPUT_PATTERNS = {
    'smooth': '{stem}_{method}.jsonl',
    'eval': '{stem}_{method}_report.json',
    'csv': '{stem}_{method}_report.csv',
    'plot': '{stem}_{tracklet_id}.svg',
    'synth': 'synth_{kind}_s{seed:d}.jsonl',
}


def logistic(value):
    """Map a logit to a probability.

    Evaluated so that neither branch overflows for large |value|.
    """
    if value >= 0:
        return 1.0 / (1.0 + math.exp(-value))
    expv = math.exp(value)
    return expv / (1.0 + expv)


def logistic_array(values):
    """Vectorised logistic of a numpy array."""
    values = np.asarray(values, dtype=np.float64)
    out = np.empty_like(values)
    pos = values >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-values[pos]))
    expv = np.exp(values[~pos])
    out[~pos] = expv / (1.0 + expv)
    return out


def is_finite_number(value):
    """Check that value is a real, finite number (bools are not numbers here)."""
    if isinstance(value, bool):
        return False
    if not isinstance(value, (int, float, np.integer, np.floating)):
        return False
    try:
        return math.isfinite(value)
    except OverflowError:
        return False


def compose_filename(pattern_name, out_path, **keyvals):
    """Compose an output filename from one of the OUTPUT_PATTERNS.

    Args:
        pattern_name: key into OUTPUT_PATTERNS
        out_path: output directory (string)
        keyvals: values for the pattern fields

    """
    return os.path.join(out_path, compose(OUTPUT_PATTERNS[pattern_name], keyvals))


def compose_segment_id(tracklet_id, segment):
    """Compose the identifier of one segment of a tracklet."""
    return compose(SEGMENT_ID_PATTERN, {'tracklet_id': str(tracklet_id),
                                        'segment': int(segment)})


def get_num_threads(environ=None):
    """Read the TEMPCO_THREADS cap on parallelism.

    Returns None when unset (dask decides).
    """
    if environ is None:
        environ = os.environ
    value = environ.get('TEMPCO_THREADS', '').strip()
    if not value:
        return None
    try:
        nthreads = int(value)
    except ValueError:
        raise ValueError('TEMPCO_THREADS must be a positive integer, got {!r}'.format(value))
    if nthreads < 1:
        raise ValueError('TEMPCO_THREADS must be a positive integer, got {!r}'.format(value))
    return nthreads
