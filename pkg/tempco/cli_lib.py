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

"""Command line front end: smooth, eval, synth, grad-check and plot.

Every command computes all of its outputs before the first file is written.
Exit codes: 0 success, 1 invalid input or usage (or a failed gradient
check), 2 I/O error.
"""

import argparse
import json
import logging
import os
import time
from collections import OrderedDict

from tempco import compose_filename, get_num_threads
from tempco.filter_lib import (DEFAULT_DEGENERATE_EPS, DEFAULT_EMA_ALPHA, DEFAULT_INIT_VAR, DEFAULT_WINDOW,
                               WINDOW_SOURCES, FilterConfig, FilterMethod, run_filter_all)
from tempco.loss_lib import (DEFAULT_BETA, DEFAULT_FD_STEP, DEFAULT_GAMMA, NORMALIZATIONS, PAIR_MODES,
                             check_gradients, parse_batch, serialize_batch)
from tempco.metric_lib import (DEFAULT_SEGMENT_LENGTHS, calibrate_threshold, evaluate_samples,
                               evaluate_segments, gate_samples, parse_threshold_policy, reports_to_csv,
                               reports_to_json, score_tracklets)
from tempco.plot_lib import render_svg
from tempco.stream_lib import parse_smoothed_stream, save_dataset, serialize_stream, stream_to_dataset
from tempco.synth_lib import SynthConfig, generate, generate_batch

logger = logging.getLogger('tempco.cli')

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


class CliUsageError(Exception):
    """Bad command line arguments."""

    pass


class TempcoArgumentParser(argparse.ArgumentParser):
    """Argument parser raising CliUsageError instead of exiting."""

    def error(self, message):
        raise CliUsageError(message)


def parse_segment_lengths(text):
    """Parse a comma separated list of positive segment lengths."""
    try:
        lengths = tuple(int(item) for item in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError('segment lengths must be integers, got {!r}'.format(text))
    if not lengths or min(lengths) < 1:
        raise argparse.ArgumentTypeError('segment lengths must be positive, got {!r}'.format(text))
    return lengths


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


def _read(path):
    with open(path, 'rb') as fh:
        return fh.read()


def _write(path, payload):
    if isinstance(payload, str):
        payload = payload.encode('utf-8')
    with open(path, 'wb') as fh:
        fh.write(payload)
    return path


def _saved(filename, tic):
    logger.info('Saved file %s after %3.1f seconds', os.path.basename(filename), time.time() - tic)


def filter_config(options):
    """FilterConfig from the filter flags."""
    return FilterConfig(method=FilterMethod(options.method), window=options.window,
                        ema_alpha=options.ema_alpha, init_var=options.init_var,
                        window_source=options.window_source, init_var_carry=options.init_var_carry,
                        degenerate_eps=options.degenerate_eps, pinned_theta=options.pinned_theta)


def _load_stream(path):
    tracklets, smoothed = parse_smoothed_stream(_read(path))
    logger.info('Read %d tracklets, %d frames from %s', len(tracklets),
                sum(len(tracklet) for tracklet in tracklets), os.path.basename(path))
    return tracklets, smoothed


def cmd_smooth(options):
    """Smooth every tracklet of a frame stream."""
    tic = time.time()
    config = filter_config(options)
    tracklets, _ = _load_stream(options.input)
    smoothed = run_filter_all(tracklets, config, get_num_threads())
    output = options.output or compose_filename('smooth', os.path.dirname(options.input),
                                                stem=_stem(options.input), method=config.method.value)
    if output.endswith('.nc'):
        dataset = stream_to_dataset(tracklets, smoothed)
        dataset.attrs['method'] = config.method.value
        dataset.attrs['window'] = config.window
        save_dataset(dataset, output, engine=options.nc_engine)
    else:
        _write(output, serialize_stream(tracklets, smoothed))
    _saved(output, tic)
    return EXIT_OK


def cmd_eval(options):
    """Frame level and segment level evaluation report."""
    tic = time.time()
    config = filter_config(options)
    policy = parse_threshold_policy(options.threshold_policy)
    tracklets, smoothed = _load_stream(options.input)
    if any(frames is not None for frames in smoothed):
        logger.warning('Input holds smoothed fields, recomputing them with method %s', config.method.value)
    num_workers = get_num_threads()
    samples, coverage = gate_samples(score_tracklets(tracklets, config, num_workers), options.max_var)
    calibration = calibrate_threshold(samples, policy)
    logger.info('Threshold %.6g (%s)', calibration.threshold, options.threshold_policy)
    frame_report = evaluate_samples(samples, calibration.threshold, coverage)
    segment_reports = evaluate_segments(tracklets, config, options.segments, calibration.threshold,
                                        options.max_var, num_workers)
    meta = OrderedDict([('method', config.method.value), ('window', config.window),
                        ('threshold_policy', options.threshold_policy),
                        ('threshold_flagged', calibration.flagged),
                        ('segment_lengths', list(options.segments))])
    report_json = reports_to_json(frame_report, segment_reports, meta)
    report_csv = reports_to_csv(frame_report, segment_reports)

    out_dir = os.path.dirname(options.input)
    output = options.output or compose_filename('eval', out_dir, stem=_stem(options.input),
                                                method=config.method.value)
    csv_output = options.csv or compose_filename('csv', out_dir, stem=_stem(options.input),
                                                 method=config.method.value)
    _write(output, report_json + '\n')
    _saved(output, tic)
    _write(csv_output, report_csv)
    _saved(csv_output, tic)
    return EXIT_OK


def cmd_synth(options):
    """Write a synthetic frame stream or embedding batch."""
    tic = time.time()
    if options.kind == 'stream':
        config = SynthConfig(n_live=options.n_live, n_attack=options.n_attack, length=options.length,
                             sigma=options.sigma, spike_prob=options.spike_prob,
                             spike_shift=options.spike_shift, spike_len=options.spike_len, seed=options.seed)
        payload = serialize_stream(generate(config, get_num_threads()))
    else:
        payload = serialize_batch(generate_batch(options.m, options.d, options.n_classes, options.n_videos,
                                                 options.seed))
    output = options.output or compose_filename('synth', '.', kind=options.kind, seed=options.seed)
    _write(output, payload)
    _saved(output, tic)
    return EXIT_OK


def cmd_grad_check(options):
    """Compare analytic and numeric loss gradients of a batch."""
    batch = parse_batch(_read(options.input))
    results = check_gradients(batch, beta=options.beta, gamma=options.gamma, step=options.fd_step,
                              mode=options.mode, normalize=options.normalize)
    for result in results:
        logger.info('%s: max relative error %.3e, tie gap %.3e: %s', result.loss, result.max_rel_error,
                    result.tie_gap, result.status)
    if options.output:
        document = [OrderedDict([('loss', result.loss), ('max_rel_error', result.max_rel_error),
                                 ('tie_gap', None if result.tie_gap == float('inf') else result.tie_gap),
                                 ('status', result.status)]) for result in results]
        _write(options.output, json.dumps(document, indent=2) + '\n')
    if any(result.status == 'fail' for result in results):
        logger.error('Gradient check failed')
        return EXIT_INVALID
    return EXIT_OK


def cmd_plot(options):
    """Render one smoothed tracklet as SVG."""
    tic = time.time()
    tracklets, smoothed = _load_stream(options.input)
    ids = [tracklet.id for tracklet in tracklets]
    if options.tracklet not in ids:
        raise ValueError('no tracklet {!r} in {}'.format(options.tracklet, options.input))
    index = ids.index(options.tracklet)
    if smoothed[index] is None:
        raise ValueError('tracklet {!r} has no smoothed fields, run smooth first'.format(options.tracklet))
    svg = render_svg(tracklets[index], smoothed[index])
    output = options.output or compose_filename('plot', os.path.dirname(options.input),
                                                stem=_stem(options.input), tracklet_id=options.tracklet)
    _write(output, svg)
    _saved(output, tic)
    return EXIT_OK


def _add_filter_arguments(parser):
    parser.add_argument('-m', '--method', choices=[method.value for method in FilterMethod],
                        default=FilterMethod.FASTCO_WINDOWED.value, help='Smoothing method (default fastco).')
    parser.add_argument('-w', '--window', type=int, default=DEFAULT_WINDOW,
                        help='Window length of fastco and sma (default {:d}).'.format(DEFAULT_WINDOW))
    parser.add_argument('--ema-alpha', type=float, default=DEFAULT_EMA_ALPHA,
                        help='Weight of the current logit for ema (default {}).'.format(DEFAULT_EMA_ALPHA))
    parser.add_argument('--init-var', type=float, default=DEFAULT_INIT_VAR,
                        help='Variance reported at the first frame (default {}).'.format(DEFAULT_INIT_VAR))
    parser.add_argument('--window-source', choices=WINDOW_SOURCES, default='raw',
                        help='Keep raw logits or smoothed logits in the fastco window.')
    parser.add_argument('--init-var-carry', action='store_true',
                        help='Use init-var as prior variance until the window holds two values.')
    parser.add_argument('--degenerate-eps', type=float, default=DEFAULT_DEGENERATE_EPS,
                        help='Fall back to the raw logit when both variances sum to at most this value.')
    parser.add_argument('--pinned-theta', type=float, default=None,
                        help='Pin the fastco combination weight and drop the uncertainty.')


def get_parser():
    """Build the argument parser of all commands."""
    parser = TempcoArgumentParser(
        prog='tempco',
        description='Temporal consistency tools for frame-level liveness scores.')
    subparsers = parser.add_subparsers(dest='command', required=True)

    smooth = subparsers.add_parser('smooth', help='Smooth a frame stream.')
    smooth.add_argument('-i', '--input', required=True, help='Frame stream (JSONL).')
    smooth.add_argument('-o', '--output', help='Output file, netCDF when it ends in .nc, JSONL otherwise.')
    smooth.add_argument('-ne', '--nc_engine', type=str, nargs='?', default='h5netcdf',
                        help='Engine for saving netcdf files netcdf4 or h5netcdf (default).')
    _add_filter_arguments(smooth)
    smooth.set_defaults(func=cmd_smooth)

    evaluate = subparsers.add_parser('eval', help='Frame and segment level metrics.')
    evaluate.add_argument('-i', '--input', required=True, help='Frame stream (JSONL), raw or smoothed.')
    evaluate.add_argument('-o', '--output', help='Report file (JSON).')
    evaluate.add_argument('--csv', help='Report table (CSV).')
    evaluate.add_argument('-K', '--segments', type=parse_segment_lengths, default=DEFAULT_SEGMENT_LENGTHS,
                          help='Comma separated segment lengths (default 1,3,5,10,15,30).')
    evaluate.add_argument('--threshold-policy', default='eer', help='eer, fpr:F or fixed:V (default eer).')
    evaluate.add_argument('--max-var', type=float, default=None,
                          help='Leave out samples whose var_hat is above this bound.')
    _add_filter_arguments(evaluate)
    evaluate.set_defaults(func=cmd_eval)

    synth = subparsers.add_parser('synth', help='Generate synthetic data.')
    synth.add_argument('--kind', choices=('stream', 'batch'), default='stream')
    synth.add_argument('-o', '--output', help='Output file (JSONL).')
    synth.add_argument('--seed', type=int, default=0)
    synth.add_argument('--n-live', type=int, default=20)
    synth.add_argument('--n-attack', type=int, default=20)
    synth.add_argument('--length', type=int, default=90)
    synth.add_argument('--sigma', type=float, default=None, help='Logit noise std (default calibrated).')
    synth.add_argument('--spike-prob', type=float, default=0.05)
    synth.add_argument('--spike-shift', type=float, default=4.0)
    synth.add_argument('--spike-len', type=int, default=2)
    synth.add_argument('--m', type=int, default=12, help='Batch rows.')
    synth.add_argument('--d', type=int, default=8, help='Embedding dimension.')
    synth.add_argument('--n-classes', type=int, default=5)
    synth.add_argument('--n-videos', type=int, default=3)
    synth.set_defaults(func=cmd_synth)

    grad = subparsers.add_parser('grad-check', help='Check loss gradients on a batch.')
    grad.add_argument('-i', '--input', required=True, help='Embedding batch (JSONL).')
    grad.add_argument('-o', '--output', help='Result file (JSON).')
    grad.add_argument('--beta', type=float, default=DEFAULT_BETA)
    grad.add_argument('--gamma', type=float, default=DEFAULT_GAMMA)
    grad.add_argument('--fd-step', type=float, default=DEFAULT_FD_STEP)
    grad.add_argument('--mode', choices=PAIR_MODES, default='anchor')
    grad.add_argument('--normalize', choices=NORMALIZATIONS, default='batch')
    grad.set_defaults(func=cmd_grad_check)

    plot = subparsers.add_parser('plot', help='Plot one smoothed tracklet as SVG.')
    plot.add_argument('-i', '--input', required=True, help='Smoothed frame stream (JSONL).')
    plot.add_argument('-t', '--tracklet', required=True, help='Tracklet id.')
    plot.add_argument('-o', '--output', help='Output file (SVG).')
    plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    """Run one command and return its exit code."""
    try:
        options = get_parser().parse_args(argv)
        return options.func(options)
    except CliUsageError as err:
        logger.error('usage: %s', err)
        return EXIT_INVALID
    except OSError as err:
        logger.error('%s', err)
        return EXIT_IO
    except ValueError as err:
        logger.error('%s', err)
        return EXIT_INVALID
