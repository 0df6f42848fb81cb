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

"""Static SVG plots of one smoothed tracklet."""

import io
import logging

import matplotlib
import numpy as np

from tempco import logistic_array

matplotlib.use('agg')
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger('tempco.plot')

BAND_DESCRIPTION = 'band: logistic(mu_hat - sqrt(var_hat)) to logistic(mu_hat + sqrt(var_hat)), clipped to [0, 1]'
FIGSIZE = (8.0, 3.6)


def probability_band(smoothed):
    """Lower and upper edge of the uncertainty band in probability space."""
    mu_hat = np.array([frame.mu_hat for frame in smoothed], dtype=np.float64)
    spread = np.sqrt(np.array([frame.var_hat for frame in smoothed], dtype=np.float64))
    lower = np.clip(logistic_array(mu_hat - spread), 0.0, 1.0)
    upper = np.clip(logistic_array(mu_hat + spread), 0.0, 1.0)
    return lower, upper


def render_svg(tracklet, smoothed, title=None):
    """Plot raw and smoothed probability with the uncertainty band.

    Args:
        tracklet: the Tracklet
        smoothed: its list of SmoothedFrame

    Returns:
        SVG document as bytes, identical for identical inputs

    """
    if len(smoothed) != len(tracklet):
        raise ValueError('tracklet {!r} has {:d} frames but {:d} smoothed frames'.format(
            tracklet.id, len(tracklet), len(smoothed)))
    t = np.arange(len(tracklet))
    raw_p = logistic_array(tracklet.logits)
    smooth_p = np.array([frame.p for frame in smoothed], dtype=np.float64)
    lower, upper = probability_band(smoothed)

    with matplotlib.rc_context({'svg.hashsalt': 'tempco', 'svg.fonttype': 'none'}):
        fig, ax = plt.subplots(figsize=FIGSIZE)
        band = ax.fill_between(t, lower, upper, color='tab:blue', alpha=0.25, linewidth=0)
        band.set_gid('band')
        ax.plot(t, raw_p, color='tab:gray', linewidth=0.8, label='raw p', gid='raw')
        ax.plot(t, smooth_p, color='tab:blue', linewidth=2.0, label='smoothed p', gid='smoothed')
        ax.set_xlabel('frame index')
        ax.set_ylabel('probability')
        ax.set_ylim(-0.02, 1.02)
        ax.set_title(title or '{} ({})'.format(tracklet.id, tracklet.label.kind.value))
        ax.legend(loc='lower right')
        buf = io.BytesIO()
        fig.savefig(buf, format='svg', metadata={'Date': None, 'Description': BAND_DESCRIPTION})
        plt.close(fig)
    logger.debug('Rendered tracklet %s', tracklet.id)
    return buf.getvalue()
