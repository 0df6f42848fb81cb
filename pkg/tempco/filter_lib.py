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

"""Online smoothing of liveness logits with uncertainty estimation.

The prior estimate mu_prev with variance var_prev is combined with the
current logit q_t, whose variance is taken as delta2 = (q_t - mu_prev)**2::

    theta = var_prev / (delta2 + var_prev)
    mu_hat = theta * q_t + (1 - theta) * mu_prev
    var_hat = theta * delta2

In the windowed mode mu_prev and var_prev are the mean and population
variance of the last w logits, in the recursive mode they are the previous
outputs. Everything is done in logit space; p = logistic(mu_hat).
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import dask
import numpy as np

from tempco import logistic
from tempco.stream_lib import SmoothedFrame

logger = logging.getLogger('tempco.filter')

DEFAULT_WINDOW = 5
DEFAULT_EMA_ALPHA = 0.1
DEFAULT_INIT_VAR = 1.0
DEFAULT_DEGENERATE_EPS = 0.0
WINDOW_SOURCES = ('raw', 'smoothed')


class FilterError(ValueError):
    """Filter input or state is not valid."""

    pass


class FilterMethod(Enum):
    """Smoothing methods, valued by their command line names."""

    FASTCO_WINDOWED = 'fastco'
    FASTCO_RECURSIVE = 'fastco-recursive'
    EMA = 'ema'
    SMA = 'sma'
    NONE = 'none'


FASTCO_METHODS = (FilterMethod.FASTCO_WINDOWED, FilterMethod.FASTCO_RECURSIVE)


@dataclass(frozen=True)
class FilterConfig:
    """Configuration of one smoothing method."""

    method: FilterMethod = FilterMethod.FASTCO_WINDOWED
    window: int = DEFAULT_WINDOW
    ema_alpha: float = DEFAULT_EMA_ALPHA
    init_var: float = DEFAULT_INIT_VAR
    degenerate_eps: float = DEFAULT_DEGENERATE_EPS
    # Keep raw logits or previous mu_hat values in the window
    window_source: str = 'raw'
    # Use init_var as prior variance while the window holds < 2 values
    init_var_carry: bool = False
    # Constant theta without uncertainty, for the EMA degeneration
    pinned_theta: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.method, FilterMethod):
            object.__setattr__(self, 'method', FilterMethod(self.method))
        if isinstance(self.window, bool) or not isinstance(self.window, int) or self.window < 1:
            raise ValueError('window must be a positive integer, got {!r}'.format(self.window))
        if not 0.0 < self.ema_alpha <= 1.0:
            raise ValueError('ema_alpha must be in (0, 1], got {!r}'.format(self.ema_alpha))
        if not (math.isfinite(self.init_var) and self.init_var >= 0):
            raise ValueError('init_var must be a non-negative number, got {!r}'.format(self.init_var))
        if not (math.isfinite(self.degenerate_eps) and self.degenerate_eps >= 0):
            raise ValueError('degenerate_eps must be non-negative, got {!r}'.format(self.degenerate_eps))
        if self.window_source not in WINDOW_SOURCES:
            raise ValueError('window_source must be one of {}'.format(', '.join(WINDOW_SOURCES)))
        if self.pinned_theta is not None and not 0.0 < self.pinned_theta <= 1.0:
            raise ValueError('pinned_theta must be in (0, 1], got {!r}'.format(self.pinned_theta))


@dataclass(frozen=True)
class FilterState:
    """State of the filter before frame t of one tracklet."""

    method: FilterMethod
    window: int
    history: Tuple[float, ...] = ()
    mu_prev: float = 0.0
    var_prev: float = 0.0
    t: int = 0

    def __post_init__(self):
        if len(self.history) > self.window:
            raise FilterError('history holds {:d} values, window is {:d}'.format(len(self.history), self.window))
        if not self.var_prev >= 0:
            raise FilterError('var_prev must be non-negative')


def initial_state(config):
    """Fresh state for the first frame of a tracklet."""
    return FilterState(config.method, config.window)


def _mean(values):
    return float(np.mean(values))


def _pvariance(values):
    return float(np.var(values))


def blend(theta, q_t, mu_prev):
    """Convex combination of the current logit and the prior estimate."""
    return theta * q_t + (1.0 - theta) * mu_prev


def _prior(state, config):
    """Prior mean and variance for the FasTCo methods (t >= 1)."""
    if config.method is FilterMethod.FASTCO_RECURSIVE:
        return state.mu_prev, state.var_prev
    mu_prev = _mean(state.history)
    if config.init_var_carry and len(state.history) < 2:
        return mu_prev, config.init_var
    return mu_prev, _pvariance(state.history)


def _fastco_step(state, q_t, config):
    """Return mu_hat, var_hat, theta of one FasTCo step."""
    if state.t == 0:
        if config.pinned_theta is not None:
            return q_t, 0.0, 1.0
        return q_t, config.init_var, 1.0
    if config.pinned_theta is not None:
        if config.method is FilterMethod.FASTCO_RECURSIVE:
            mu_prev = state.mu_prev
        else:
            mu_prev = _mean(state.history)
        return blend(config.pinned_theta, q_t, mu_prev), 0.0, config.pinned_theta
    if (config.method is FilterMethod.FASTCO_WINDOWED and len(state.history) < 2
            and not config.init_var_carry):
        # one-value window: zero prior variance, degenerate rule
        return q_t, 0.0, 1.0
    mu_prev, var_prev = _prior(state, config)
    delta2 = (q_t - mu_prev) ** 2
    denom = delta2 + var_prev
    if denom <= config.degenerate_eps:
        return q_t, 0.0, 1.0
    theta = var_prev / denom
    return blend(theta, q_t, mu_prev), theta * delta2, theta


def filter_step(state, q_t, config):
    """Smooth one logit.

    Returns:
        SmoothedFrame of frame state.t and the state for the next frame

    """
    if isinstance(q_t, bool):
        raise FilterError('logit must be a real number, got {!r}'.format(q_t))
    try:
        q_t = float(q_t)
    except (TypeError, ValueError):
        raise FilterError('logit must be a real number, got {!r}'.format(q_t))
    if not math.isfinite(q_t):
        raise FilterError('non-finite logit {!r} at t={:d}'.format(q_t, state.t))
    if state.method is not config.method or state.window != config.window:
        raise FilterError('state was made for method {} window {:d}, config has {} window {:d}'.format(
            state.method.value, state.window, config.method.value, config.window))

    method = config.method
    theta = None
    if method is FilterMethod.NONE:
        mu_hat, var_hat, theta = q_t, 0.0, 1.0
    elif method is FilterMethod.SMA:
        values = (state.history + (q_t,))[-config.window:]
        mu_hat, var_hat = _mean(values), 0.0
    elif method is FilterMethod.EMA:
        theta = config.ema_alpha
        mu_hat = q_t if state.t == 0 else blend(theta, q_t, state.mu_prev)
        var_hat = 0.0
    elif method in FASTCO_METHODS:
        mu_hat, var_hat, theta = _fastco_step(state, q_t, config)
    else:
        raise FilterError('unknown method {!r}'.format(method))

    pushed = mu_hat if (method is FilterMethod.FASTCO_WINDOWED and config.window_source == 'smoothed') else q_t
    history = (state.history + (pushed,))[-config.window:]
    new_state = FilterState(method, config.window, history, mu_hat, var_hat, state.t + 1)
    frame = SmoothedFrame(state.t, q_t, mu_hat, logistic(mu_hat), var_hat, theta)
    return frame, new_state


def smooth_logits(logits, config):
    """Run the filter over a sequence of logits from a fresh state."""
    state = initial_state(config)
    frames = []
    for q_t in logits:
        frame, state = filter_step(state, q_t, config)
        frames.append(frame)
    return frames


def run_filter(tracklet, config):
    """Smooth all frames of a tracklet in t order."""
    return smooth_logits([frame.q for frame in tracklet.frames], config)


def run_filter_all(tracklets, config, num_workers=None):
    """Smooth many tracklets, in parallel over tracklets.

    Output order follows the input order whatever the number of workers.
    """
    tasks = [dask.delayed(run_filter)(tracklet, config) for tracklet in tracklets]
    if not tasks:
        return []
    if num_workers == 1:
        results = dask.compute(*tasks, scheduler='synchronous')
    else:
        results = dask.compute(*tasks, scheduler='threads', num_workers=num_workers)
    logger.debug('Smoothed %d tracklets with %s', len(tracklets), config.method.value)
    return list(results)
