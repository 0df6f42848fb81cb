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

"""Unit tests for the cli_lib module."""

import json
import os
import tempfile
import time
import unittest
try:
    from unittest import mock
except ImportError:
    import mock

import numpy as np

from tempco import logistic
from tempco.cli_lib import CliUsageError, filter_config, get_parser, main, parse_segment_lengths
from tempco.filter_lib import FilterConfig, FilterMethod, run_filter_all
from tempco.loss_lib import EmbeddingBatch, serialize_batch
from tempco.stream_lib import parse_smoothed_stream, parse_stream


def _read(path):
    with open(path, 'rb') as fh:
        return fh.read()


class TestParser(unittest.TestCase):
    """Test the argument parser."""

    def test_usage_errors(self):
        parser = get_parser()
        self.assertRaises(CliUsageError, parser.parse_args, [])
        self.assertRaises(CliUsageError, parser.parse_args, ['smooth'])
        self.assertRaises(CliUsageError, parser.parse_args, ['smooth', '-i', 'x', '--colour', 'red'])
        self.assertRaises(CliUsageError, parser.parse_args, ['smooth', '-i', 'x', '-m', 'kalman'])
        self.assertRaises(CliUsageError, parser.parse_args, ['eval', '-i', 'x', '-K', '1,a'])
        self.assertRaises(CliUsageError, parser.parse_args, ['eval', '-i', 'x', '-K', '0,5'])

    def test_defaults(self):
        options = get_parser().parse_args(['eval', '-i', 'x.jsonl'])
        self.assertEqual(options.segments, (1, 3, 5, 10, 15, 30))
        self.assertEqual((options.method, options.window, options.threshold_policy), ('fastco', 5, 'eer'))
        self.assertEqual(parse_segment_lengths('2,4'), (2, 4))

    def test_filter_flags(self):
        options = get_parser().parse_args(['smooth', '-i', 'x.jsonl', '-m', 'fastco-recursive', '--pinned-theta', '0.2',
                                           '--degenerate-eps', '1e-9'])
        config = filter_config(options)
        self.assertEqual((config.pinned_theta, config.degenerate_eps), (0.2, 1e-9))
        self.assertIs(config.method, FilterMethod.FASTCO_RECURSIVE)

    def test_exit_codes(self):
        with self.assertLogs('tempco.cli', 'ERROR'):
            self.assertEqual(main(['smooth', '--bogus']), 1)
        with self.assertLogs('tempco.cli', 'ERROR'):
            self.assertEqual(main(['smooth', '-i', '/nonexistent/stream.jsonl']), 2)


class TestCommands(unittest.TestCase):
    """Run the commands on files in a temporary directory."""

    def setUp(self):
        """Generate a small corpus."""
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name
        self.corpus = os.path.join(self.tmp, 'corpus.jsonl')
        self.assertEqual(main(['synth', '-o', self.corpus, '--n-live', '6', '--n-attack', '6',
                               '--length', '30', '--sigma', '1.5', '--seed', '3']), 0)

    def tearDown(self):
        """Remove the temporary directory."""
        self._tmp.cleanup()

    def _path(self, name):
        return os.path.join(self.tmp, name)

    def test_synth_default_name(self):
        cwd = os.getcwd()
        os.chdir(self.tmp)
        try:
            self.assertEqual(main(['synth', '--n-live', '1', '--n-attack', '1', '--sigma', '0', '--seed', '4']), 0)
        finally:
            os.chdir(cwd)
        self.assertEqual(len(parse_stream(_read(self._path('synth_stream_s4.jsonl')))), 2)

    def test_smooth_matches_library(self):
        """Test the command reproduces run_filter bit for bit."""
        output = self._path('smoothed.jsonl')
        self.assertEqual(main(['smooth', '-i', self.corpus, '-o', output, '--method', 'fastco', '--window', '5']), 0)
        tracklets, smoothed = parse_smoothed_stream(_read(output))
        self.assertEqual(tracklets, parse_stream(_read(self.corpus)))
        self.assertEqual(smoothed, run_filter_all(tracklets, FilterConfig(window=5)))

    def test_smooth_none(self):
        self.assertEqual(main(['smooth', '-i', self.corpus, '-m', 'none']), 0)
        tracklets, smoothed = parse_smoothed_stream(_read(self._path('corpus_none.jsonl')))
        for tracklet, frames in zip(tracklets, smoothed):
            self.assertEqual([frame.p for frame in frames], [logistic(frame.q) for frame in tracklet.frames])
            self.assertEqual({frame.var_hat for frame in frames}, {0.0})

    def test_smooth_netcdf(self):
        output = self._path('smoothed.nc')
        with mock.patch('tempco.cli_lib.save_dataset') as save_dataset:
            self.assertEqual(main(['smooth', '-i', self.corpus, '-o', output, '-ne', 'netcdf4']), 0)
        dataset = save_dataset.call_args[0][0]
        self.assertEqual(save_dataset.call_args[0][1], output)
        self.assertEqual(save_dataset.call_args[1], {'engine': 'netcdf4'})
        self.assertEqual(dataset.sizes['frame'], 360)
        self.assertEqual(dataset.attrs['method'], 'fastco')

    def test_pipeline(self):
        """Test synth, smooth and eval chained through files."""
        smoothed = self._path('smoothed.jsonl')
        report = self._path('report.json')
        table = self._path('report.csv')
        self.assertEqual(main(['smooth', '-i', self.corpus, '-o', smoothed]), 0)
        with self.assertLogs('tempco.cli', 'WARNING'):
            self.assertEqual(main(['eval', '-i', smoothed, '-o', report, '--csv', table]), 0)
        document = json.loads(_read(report).decode('utf-8'))
        self.assertEqual([seg['K'] for seg in document['segments']], [1, 3, 5, 10, 15, 30])
        self.assertEqual(document['meta']['method'], 'fastco')
        self.assertEqual(document['frame']['n_live'] + document['frame']['n_attack'], 360)
        self.assertEqual(len(_read(table).decode('utf-8').splitlines()), 8)

    def test_end_to_end(self):
        """Test synth, smooth, eval and plot on 10k frames are fast and reproducible."""
        outputs = []
        for run in range(2):
            run_dir = self._path('run{:d}'.format(run))
            os.mkdir(run_dir)
            corpus = os.path.join(run_dir, 'corpus.jsonl')
            smoothed = os.path.join(run_dir, 'smoothed.jsonl')
            report = os.path.join(run_dir, 'report.json')
            table = os.path.join(run_dir, 'report.csv')
            figure = os.path.join(run_dir, 'live0007.svg')
            tic = time.perf_counter()
            self.assertEqual(main(['synth', '-o', corpus, '--n-live', '50', '--n-attack', '50',
                                   '--length', '100', '--seed', '31']), 0)
            self.assertEqual(main(['smooth', '-i', corpus, '-o', smoothed]), 0)
            with self.assertLogs('tempco.cli', 'WARNING'):
                self.assertEqual(main(['eval', '-i', smoothed, '-o', report, '--csv', table]), 0)
            self.assertEqual(main(['plot', '-i', smoothed, '-t', 'live0007', '-o', figure]), 0)
            self.assertLess(time.perf_counter() - tic, 10.0)
            outputs.append([_read(path) for path in (corpus, smoothed, report, table, figure)])
        self.assertEqual(len(parse_stream(outputs[0][0])), 100)
        self.assertEqual(sum(1 for line in outputs[0][1].splitlines() if line.strip()), 10000)
        for first, second in zip(outputs[0], outputs[1]):
            self.assertEqual(first, second)

    def test_eval_deterministic(self):
        """Test repeated runs write identical bytes."""
        outputs = []
        for run in range(2):
            report, table = self._path('r{:d}.json'.format(run)), self._path('r{:d}.csv'.format(run))
            self.assertEqual(main(['eval', '-i', self.corpus, '-o', report, '--csv', table,
                                   '--threshold-policy', 'fpr:0.1', '--max-var', '0.5']), 0)
            outputs.append((_read(report), _read(table)))
        self.assertEqual(outputs[0], outputs[1])
        self.assertLess(json.loads(outputs[0][0].decode('utf-8'))['frame']['coverage'], 1.0)

    def test_eval_perfect(self):
        perfect = self._path('perfect.jsonl')
        report = self._path('perfect.json')
        self.assertEqual(main(['synth', '-o', perfect, '--sigma', '0', '--spike-prob', '0']), 0)
        self.assertEqual(main(['eval', '-i', perfect, '-o', report, '--csv', self._path('perfect.csv')]), 0)
        frame = json.loads(_read(report).decode('utf-8'))['frame']
        self.assertEqual((frame['apcer'], frame['bpcer'], frame['eer']), (0.0, 0.0, 0.0))

    def test_eval_single_class(self):
        """Test a single-class input fails without writing anything."""
        live = self._path('live.jsonl')
        report = self._path('live_report.json')
        self.assertEqual(main(['synth', '-o', live, '--n-attack', '0', '--sigma', '1']), 0)
        with self.assertLogs('tempco.cli', 'ERROR'):
            self.assertEqual(main(['eval', '-i', live, '-o', report]), 1)
        self.assertFalse(os.path.exists(report))
        self.assertFalse(os.path.exists(self._path('live_fastco_report.csv')))

    def test_invalid_stream(self):
        broken = self._path('broken.jsonl')
        with open(broken, 'w') as fh:
            fh.write('{"tracklet_id": "a", "t": 0, "q": 1.0, "label": "live"}\n{"tracklet_id": "a", "t": 2, '
                     '"q": 1.0, "label": "live"}\n')
        with self.assertLogs('tempco.cli', 'ERROR') as logs:
            self.assertEqual(main(['smooth', '-i', broken]), 1)
        self.assertIn("tracklet 'a'", logs.output[0])
        self.assertFalse(os.path.exists(self._path('broken_fastco.jsonl')))

    def test_thread_setting(self):
        with mock.patch.dict(os.environ, {'TEMPCO_THREADS': '1'}):
            self.assertEqual(main(['smooth', '-i', self.corpus, '-o', self._path('a.jsonl')]), 0)
        self.assertEqual(main(['smooth', '-i', self.corpus, '-o', self._path('b.jsonl')]), 0)
        self.assertEqual(_read(self._path('a.jsonl')), _read(self._path('b.jsonl')))
        with mock.patch.dict(os.environ, {'TEMPCO_THREADS': 'zero'}):
            with self.assertLogs('tempco.cli', 'ERROR'):
                self.assertEqual(main(['smooth', '-i', self.corpus, '-o', self._path('c.jsonl')]), 1)
        self.assertFalse(os.path.exists(self._path('c.jsonl')))

    def test_plot(self):
        """Test plotting a smoothed tracklet and the error cases."""
        smoothed = self._path('smoothed.jsonl')
        self.assertEqual(main(['smooth', '-i', self.corpus, '-o', smoothed]), 0)
        self.assertEqual(main(['plot', '-i', smoothed, '-t', 'live0002']), 0)
        self.assertTrue(_read(self._path('smoothed_live0002.svg')).lstrip().startswith(b'<?xml'))
        with self.assertLogs('tempco.cli', 'ERROR'):
            self.assertEqual(main(['plot', '-i', smoothed, '-t', 'nobody']), 1)
        with self.assertLogs('tempco.cli', 'ERROR'):
            self.assertEqual(main(['plot', '-i', self.corpus, '-t', 'live0002']), 1)

    def test_grad_check(self):
        """Test the gradient check on a generated and a degenerate batch."""
        batch = self._path('batch.jsonl')
        result = self._path('grad.json')
        self.assertEqual(main(['synth', '--kind', 'batch', '-o', batch, '--seed', '2']), 0)
        self.assertEqual(main(['grad-check', '-i', batch, '-o', result]), 0)
        document = json.loads(_read(result).decode('utf-8'))
        self.assertEqual([entry['loss'] for entry in document], ['L_c', 'L_t', 'L_e', 'L'])
        self.assertTrue(all(entry['status'] == 'pass' for entry in document))

        identical = self._path('identical.jsonl')
        with open(identical, 'wb') as fh:
            fh.write(serialize_batch(EmbeddingBatch(np.ones((4, 3)), ('a', 'a', 'b', 'b'), np.array([0, 1, 0, 1]),
                                                    np.zeros((4, 2)))))
        self.assertEqual(main(['grad-check', '-i', identical]), 0)


def suite():
    """Create the test suite for test_cli."""
    loader = unittest.TestLoader()
    mysuite = unittest.TestSuite()
    mysuite.addTest(loader.loadTestsFromTestCase(TestParser))
    mysuite.addTest(loader.loadTestsFromTestCase(TestCommands))
    return mysuite
