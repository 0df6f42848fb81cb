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

"""Synthetic logit streams with short inconsistency events.

Every frame gets Gaussian logit noise around the class mean. Inconsistency
events (a subject moving, a reflection) push the logit spike_shift towards
the other class for spike_len frames; spike_prob is the expected fraction of
frames inside an event.

Tracklet k draws from the k-th child of SeedSequence(seed) with PCG64, so a
corpus does not depend on how the work is scheduled.
"""

import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

import dask
import numpy as np

from tempco import logistic_array, is_finite_number
from tempco.loss_lib import EmbeddingBatch, TIE_MARGIN, tie_gap
from tempco.stream_lib import ClassLabel, make_tracklet

logger = logging.getLogger('tempco.synth')

DEFAULT_PROB_STD = 0.2
DEFAULT_ATTACK_TYPE = 'synthetic'
# Live tracklets drawn for sigma calibration
CALIBRATION_TRACKLETS = 200
CALIBRATION_TOLERANCE = 0.05
# Separates the calibration corpus from generated corpora of the same seed
CALIBRATION_STREAM = 0x5CA1E
MAX_SIGMA = 1024.0
MAX_BATCH_DRAWS = 1000


class UnattainableTargetError(ValueError):
    """No noise level gives the requested probability spread."""

    pass


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of a synthetic corpus; sigma=None means calibrated to DEFAULT_PROB_STD."""

    n_live: int = 20
    n_attack: int = 20
    length: int = 90
    mu_live: float = 2.5
    mu_attack: float = -2.5
    sigma: Optional[float] = None
    spike_prob: float = 0.05
    spike_shift: float = 4.0
    spike_len: int = 2
    seed: int = 0
    attack_type: str = DEFAULT_ATTACK_TYPE

    def __post_init__(self):
        for name in ('n_live', 'n_attack', 'length', 'spike_len', 'seed'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ValueError('{} must be a non-negative integer, got {!r}'.format(name, value))
        if self.length < 1 or self.spike_len < 1:
            raise ValueError('length and spike_len must be positive')
        for name in ('mu_live', 'mu_attack', 'spike_shift'):
            if not is_finite_number(getattr(self, name)):
                raise ValueError('{} must be a finite number'.format(name))
        if self.sigma is not None and not (is_finite_number(self.sigma) and self.sigma >= 0):
            raise ValueError('sigma must be a non-negative number, got {!r}'.format(self.sigma))
        if not (is_finite_number(self.spike_prob) and 0.0 <= self.spike_prob <= 1.0):
            raise ValueError('spike_prob must be in [0, 1], got {!r}'.format(self.spike_prob))
        if self.spike_shift < 0:
            raise ValueError('spike_shift must be non-negative')
        if not self.attack_type:
            raise ValueError('attack_type must not be empty')


def spike_mask(uniform, spike_prob, spike_len):
    """Boolean event mask from one uniform draw per frame."""
    p_start = spike_prob / spike_len
    mask = np.zeros(uniform.shape, dtype=bool)
    remaining = 0
    for t, value in enumerate(uniform):
        if remaining > 0:
            mask[t] = True
            remaining -= 1
        elif value < p_start:
            mask[t] = True
            remaining = spike_len - 1
    return mask


def _draw(rng, length, spike_prob, spike_len):
    """Noise and event mask of one tracklet; the draw order is fixed."""
    noise = rng.standard_normal(length)
    mask = spike_mask(rng.random(length), spike_prob, spike_len)
    return noise, mask


def _logits(mean, sigma, noise, mask, shift):
    """Logits of one tracklet; shift is signed towards the other class."""
    return mean + sigma * noise + shift * mask


def _make_one(config, sigma, child, ordinal):
    rng = np.random.default_rng(child)
    noise, mask = _draw(rng, config.length, config.spike_prob, config.spike_len)
    if ordinal < config.n_live:
        label = ClassLabel.live()
        logits = _logits(config.mu_live, sigma, noise, mask, -config.spike_shift)
        tracklet_id = 'live{:04d}'.format(ordinal)
    else:
        label = ClassLabel.attack(config.attack_type)
        logits = _logits(config.mu_attack, sigma, noise, mask, config.spike_shift)
        tracklet_id = 'attack{:04d}'.format(ordinal - config.n_live)
    return make_tracklet(tracklet_id, logits, label)


def resolve_sigma(config):
    """Noise std of a config, calibrating when sigma is None."""
    if config.sigma is not None:
        return float(config.sigma)
    return calibrate_sigma(DEFAULT_PROB_STD, config)


def generate(config, num_workers=None):
    """Generate the live tracklets followed by the attack tracklets."""
    sigma = resolve_sigma(config)
    total = config.n_live + config.n_attack
    if total == 0:
        return []
    children = np.random.SeedSequence(config.seed).spawn(total)
    tasks = [dask.delayed(_make_one)(config, sigma, child, ordinal) for ordinal, child in enumerate(children)]
    if num_workers == 1:
        tracklets = dask.compute(*tasks, scheduler='synchronous')
    else:
        tracklets = dask.compute(*tasks, scheduler='threads', num_workers=num_workers)
    logger.debug('Generated %d tracklets with sigma %.4f', total, sigma)
    return list(tracklets)


@lru_cache(maxsize=32)
def _calibrate(target, key_config):
    rng = np.random.default_rng(np.random.SeedSequence([key_config.seed, CALIBRATION_STREAM]))
    shape = (CALIBRATION_TRACKLETS, key_config.length)
    noise = np.empty(shape)
    mask = np.empty(shape, dtype=bool)
    for row in range(CALIBRATION_TRACKLETS):
        noise[row], mask[row] = _draw(rng, key_config.length, key_config.spike_prob, key_config.spike_len)

    def prob_std(sigma):
        logits = _logits(key_config.mu_live, sigma, noise, mask, -key_config.spike_shift)
        return float(np.std(logistic_array(logits)))

    std_zero = prob_std(0.0)
    if abs(std_zero - target) <= CALIBRATION_TOLERANCE * target:
        return 0.0
    if std_zero > target:
        raise UnattainableTargetError(
            'events alone give a probability std of {:.4f}, above the target {:.4f}'.format(std_zero, target))
    high = 1.0
    while prob_std(high) < target:
        high *= 2.0
        if high > MAX_SIGMA:
            raise UnattainableTargetError('no sigma up to {:g} reaches std {:.4f}'.format(MAX_SIGMA, target))
    low = 0.0
    for _ in range(60):
        mid = 0.5 * (low + high)
        if prob_std(mid) < target:
            low = mid
        else:
            high = mid
    sigma = 0.5 * (low + high)
    if abs(prob_std(sigma) - target) > CALIBRATION_TOLERANCE * target:
        raise UnattainableTargetError('calibration did not converge to std {:.4f}'.format(target))
    logger.debug('Calibrated sigma %.4f for probability std %.3f', sigma, target)
    return sigma


def calibrate_sigma(target_prob_std, config=None):
    """Noise std whose live corpus has the target probability std.

    Bisection over sigma on a fixed draw of noise and events, so the result
    is deterministic given the seed.
    """
    if config is None:
        config = SynthConfig()
    if not is_finite_number(target_prob_std) or not 0.0 <= target_prob_std < 0.5:
        raise UnattainableTargetError('target std must be in [0, 0.5), got {!r}'.format(target_prob_std))
    if target_prob_std == 0:
        return 0.0
    key_config = replace(config, sigma=None, n_live=0, n_attack=0, mu_attack=-2.5, attack_type=DEFAULT_ATTACK_TYPE)
    return _calibrate(float(target_prob_std), key_config)


def generate_batch(m=12, d=8, n_classes=5, n_videos=3, seed=0, margin=TIE_MARGIN * 10, with_logits=True):
    """Random embedding batch whose maxima are at least margin away from a tie.

    Rows are assigned to videos round robin; every video carries one class.
    """
    if n_videos < 1 or m < n_videos or n_classes < 2:
        raise ValueError('need m >= n_videos >= 1 and at least two classes')
    rng = np.random.default_rng(seed)
    video_id = tuple('video{:d}'.format(row % n_videos) for row in range(m))
    video_class = rng.integers(0, n_classes, n_videos)
    class_id = np.array([video_class[row % n_videos] for row in range(m)], dtype=np.int64)
    for _ in range(MAX_BATCH_DRAWS):
        x = rng.standard_normal((m, d))
        logits = rng.standard_normal((m, n_classes)) if with_logits else None
        if min(tie_gap(x, video_id), tie_gap(x, class_id)) > margin:
            return EmbeddingBatch(x, video_id, class_id, logits, n_classes)
    raise UnattainableTargetError('no batch {:d}x{:d} with tie margin {:g}'.format(m, d, margin))
