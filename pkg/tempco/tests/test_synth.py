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

"""Unit tests for the synth_lib module."""

import unittest
from dataclasses import replace

import numpy as np

from tempco import logistic_array
from tempco.synth_lib import (DEFAULT_PROB_STD, SynthConfig, UnattainableTargetError, calibrate_sigma, generate,
                              generate_batch, spike_mask)


def _live_prob_std(tracklets):
    logits = np.concatenate([tracklet.logits for tracklet in tracklets if tracklet.label.is_live])
    return float(np.std(logistic_array(logits)))


class TestSynthConfig(unittest.TestCase):
    """Test configuration validation."""

    def test_invalid(self):
        for kwargs in ({'n_live': -1}, {'length': 0}, {'sigma': -0.1}, {'spike_prob': 1.5},
                       {'spike_len': 0}, {'spike_shift': -1.0}, {'mu_live': float('inf')}, {'attack_type': ''}):
            self.assertRaises(ValueError, SynthConfig, **kwargs)


class TestGenerate(unittest.TestCase):
    """Test corpus generation."""

    def test_noiseless(self):
        tracklets = generate(SynthConfig(n_live=3, n_attack=2, length=10, sigma=0.0, spike_prob=0.0))
        self.assertEqual(len(tracklets), 5)
        for tracklet in tracklets[:3]:
            self.assertTrue(tracklet.label.is_live)
            self.assertEqual(tracklet.logits.tolist(), [2.5] * 10)
        for tracklet in tracklets[3:]:
            self.assertEqual(tracklet.label.attack_type, 'synthetic')
            self.assertEqual(tracklet.logits.tolist(), [-2.5] * 10)
        self.assertEqual([tracklet.id for tracklet in tracklets],
                         ['live0000', 'live0001', 'live0002', 'attack0000', 'attack0001'])

    def test_determinism(self):
        """Test the same seed gives the same corpus for any number of workers."""
        config = SynthConfig(n_live=4, n_attack=4, length=50, sigma=1.0, seed=12)
        first = generate(config, num_workers=1)
        self.assertEqual(generate(config, num_workers=4), first)
        self.assertEqual(generate(config), first)
        self.assertNotEqual(generate(replace(config, seed=13)), first)

    def test_spike_direction(self):
        """Test events push live logits down and attack logits up."""
        tracklets = generate(SynthConfig(n_live=2, n_attack=2, length=400, sigma=0.0, spike_prob=0.2))
        live = np.concatenate([tracklets[0].logits, tracklets[1].logits])
        attack = np.concatenate([tracklets[2].logits, tracklets[3].logits])
        self.assertEqual(set(live.tolist()), {2.5, -1.5})
        self.assertEqual(set(attack.tolist()), {-2.5, 1.5})

    def test_class_symmetry(self):
        """Test swapped means and mirrored events negate the class means."""
        config = SynthConfig(n_live=30, n_attack=30, length=100, sigma=1.0, seed=4)
        tracklets = generate(config)
        live_mean = np.mean([tracklet.logits for tracklet in tracklets[:30]])
        attack_mean = np.mean([tracklet.logits for tracklet in tracklets[30:]])
        self.assertAlmostEqual(live_mean, -attack_mean, delta=0.1)

    def test_default_spread(self):
        """Test the calibrated default gives live probabilities a spread near 0.2."""
        self.assertTrue(0.15 <= _live_prob_std(generate(SynthConfig(seed=3))) <= 0.25)


class TestSpikeMask(unittest.TestCase):
    """Test the event model."""

    def test_event_length(self):
        mask = spike_mask(np.array([0.0, 0.9, 0.9, 0.0, 0.0, 0.0, 0.9]), 0.5, 3)
        self.assertEqual(mask.tolist(), [True, True, True, True, True, True, False])

    def test_fraction(self):
        rng = np.random.default_rng(0)
        mask = spike_mask(rng.random(200000), 0.05, 2)
        self.assertAlmostEqual(mask.mean(), 0.1 / 2.05, delta=0.003)


class TestCalibrateSigma(unittest.TestCase):
    """Test the sigma search."""

    def test_zero_target(self):
        self.assertEqual(calibrate_sigma(0.0), 0.0)

    def test_reproduces_target(self):
        """Test the calibrated sigma gives std 0.2 on a corpus with another seed."""
        sigma = calibrate_sigma(DEFAULT_PROB_STD, SynthConfig(seed=0))
        fresh = generate(SynthConfig(n_live=200, n_attack=0, sigma=sigma, seed=99))
        self.assertAlmostEqual(_live_prob_std(fresh), DEFAULT_PROB_STD, delta=0.01)

    def test_monotone(self):
        config = SynthConfig(spike_prob=0.0)
        sigmas = [calibrate_sigma(target, config) for target in (0.1, 0.2, 0.3)]
        self.assertTrue(0.0 < sigmas[0] < sigmas[1] < sigmas[2])

    def test_deterministic(self):
        config = SynthConfig(spike_prob=0.0, seed=6)
        self.assertEqual(calibrate_sigma(0.15, config), calibrate_sigma(0.15, replace(config, n_live=3)))

    def test_unattainable(self):
        self.assertRaises(UnattainableTargetError, calibrate_sigma, 0.05, SynthConfig(spike_prob=0.5))
        self.assertRaises(UnattainableTargetError, calibrate_sigma, 0.6)
        self.assertRaises(UnattainableTargetError, calibrate_sigma, -0.1)


class TestGenerateBatch(unittest.TestCase):
    """Test synthetic embedding batches."""

    def test_shape(self):
        batch = generate_batch(m=12, d=8, n_classes=5, n_videos=3, seed=0)
        self.assertEqual((batch.m, batch.d, batch.n_classes), (12, 8, 5))
        self.assertEqual(batch.logits.shape, (12, 5))
        self.assertEqual(len(set(batch.video_id)), 3)
        self.assertIsNone(generate_batch(with_logits=False).logits)
        np.testing.assert_array_equal(generate_batch(seed=5).x, generate_batch(seed=5).x)

    def test_invalid(self):
        self.assertRaises(ValueError, generate_batch, m=2, n_videos=3)
        self.assertRaises(ValueError, generate_batch, n_classes=1)


def suite():
    """Create the test suite for test_synth."""
    loader = unittest.TestLoader()
    mysuite = unittest.TestSuite()
    mysuite.addTest(loader.loadTestsFromTestCase(TestSynthConfig))
    mysuite.addTest(loader.loadTestsFromTestCase(TestGenerate))
    mysuite.addTest(loader.loadTestsFromTestCase(TestSpikeMask))
    mysuite.addTest(loader.loadTestsFromTestCase(TestCalibrateSigma))
    mysuite.addTest(loader.loadTestsFromTestCase(TestGenerateBatch))
    return mysuite
