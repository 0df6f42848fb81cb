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

"""Presentation attack detection metrics, at frame and at segment level.

Live is the positive class and the decision rule is "live iff score >=
threshold". APCER is the fraction of attacks accepted (the FPR of the ROC),
BPCER the fraction of lives rejected (the FNR).
"""

import json
import logging
from collections import OrderedDict, namedtuple
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import xarray as xr

from tempco import compose_segment_id, is_finite_number
from tempco.filter_lib import run_filter_all
from tempco.stream_lib import LogitFrame, Tracklet

logger = logging.getLogger('tempco.metric')

DEFAULT_SEGMENT_LENGTHS = (1, 3, 5, 10, 15, 30)
FPR_TARGETS = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
THRESHOLD_POLICIES = ('eer', 'fpr', 'fixed')

Confusion = namedtuple('Confusion', ['apcer', 'bpcer', 'acer', 'apcer_by_type'])
RocResult = namedtuple('RocResult', ['roc', 'eer', 'fnr_at_fpr', 'eer_threshold', 'unachievable'])
ThresholdPolicy = namedtuple('ThresholdPolicy', ['kind', 'value'])
Calibration = namedtuple('Calibration', ['threshold', 'flagged'])


class MetricUndefinedError(ValueError):
    """A metric is undefined because one of the classes has no samples."""

    pass


@dataclass(frozen=True)
class ScoredSample:
    """One decision input: a liveness probability with its ground truth."""

    score: float
    label: object
    tracklet_id: str
    t: int
    var_hat: float = 0.0

    def __post_init__(self):
        if not (is_finite_number(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError('score must be in [0, 1], got {!r}'.format(self.score))


@dataclass(frozen=True)
class EvalReport:
    """Metrics of one set of scored samples at one threshold."""

    threshold: float
    apcer: float
    bpcer: float
    acer: float
    eer: float
    fnr_at_fpr: dict
    apcer_by_type: dict
    n_live: int
    n_attack: int
    apcer_max: float = 0.0
    apcer_mean: float = 0.0
    eer_threshold: Optional[float] = None
    coverage: float = 1.0
    unachievable: tuple = field(default=())

    def to_dict(self):
        return OrderedDict([
            ('threshold', self.threshold),
            ('apcer', self.apcer),
            ('bpcer', self.bpcer),
            ('acer', self.acer),
            ('eer', self.eer),
            ('eer_threshold', self.eer_threshold),
            ('fnr_at_fpr', OrderedDict((fpr_key(target), value) for target, value in self.fnr_at_fpr.items())),
            ('unachievable_fpr', [fpr_key(target) for target in self.unachievable]),
            ('apcer_by_type', OrderedDict(sorted(self.apcer_by_type.items()))),
            ('apcer_max', self.apcer_max),
            ('apcer_mean', self.apcer_mean),
            ('n_live', self.n_live),
            ('n_attack', self.n_attack),
            ('coverage', self.coverage),
        ])


@dataclass(frozen=True)
class SegmentReport:
    """Metrics over segments of length K; report is None when undefined at this K."""

    segment_length: int
    report: Optional[EvalReport]
    n_segments: int
    n_live: int = 0
    n_attack: int = 0
    error: Optional[str] = None

    def __post_init__(self):
        if self.segment_length < 1:
            raise ValueError('segment length must be positive')

    def to_dict(self):
        return OrderedDict([
            ('K', self.segment_length),
            ('n_segments', self.n_segments),
            ('report', None if self.report is None else self.report.to_dict()),
            ('error', self.error),
        ])


def fpr_key(target):
    """Text key of an FPR target, e.g. '1e-05' or '0.01'."""
    return '{:g}'.format(target)


def _split_scores(samples):
    live = np.array([sample.score for sample in samples if sample.label.is_live], dtype=np.float64)
    attack = np.array([sample.score for sample in samples if not sample.label.is_live], dtype=np.float64)
    if live.size == 0:
        raise MetricUndefinedError('no live samples')
    if attack.size == 0:
        raise MetricUndefinedError('no attack samples')
    return live, attack


def confusion_at(samples, threshold):
    """APCER, BPCER, ACER and per-type APCER at one threshold."""
    if not is_finite_number(threshold):
        raise ValueError('threshold must be a finite number, got {!r}'.format(threshold))
    live, attack = _split_scores(samples)
    apcer = np.count_nonzero(attack >= threshold) / attack.size
    bpcer = np.count_nonzero(live < threshold) / live.size
    by_type = OrderedDict()
    for attack_type in sorted({sample.label.attack_type for sample in samples if not sample.label.is_live}):
        scores = np.array([sample.score for sample in samples
                           if not sample.label.is_live and sample.label.attack_type == attack_type])
        by_type[attack_type] = np.count_nonzero(scores >= threshold) / scores.size
    return Confusion(float(apcer), float(bpcer), (apcer + bpcer) / 2.0, by_type)


def sweep(samples):
    """FPR and FNR at every distinct score plus one sentinel on each side.

    Returns:
        thresholds (ascending), fpr, fnr arrays

    """
    live, attack = _split_scores(samples)
    scores = np.unique(np.concatenate((live, attack)))
    thresholds = np.concatenate(([np.nextafter(scores[0], -np.inf)], scores,
                                 [np.nextafter(scores[-1], np.inf)]))
    live.sort()
    attack.sort()
    fpr = (attack.size - np.searchsorted(attack, thresholds, side='left')) / attack.size
    fnr = np.searchsorted(live, thresholds, side='left') / live.size
    return thresholds, fpr, fnr


def _eer_point(thresholds, fpr, fnr):
    """Interpolated crossing of FPR and FNR, and its threshold."""
    k = int(np.argmax(fnr >= fpr))
    if fnr[k] == fpr[k]:
        # Exact crossing: centre the threshold in the gap below it
        return float(fpr[k]), float((thresholds[k - 1] + thresholds[k]) / 2.0)
    d0 = fpr[k - 1] - fnr[k - 1]
    d1 = fpr[k] - fnr[k]
    lam = d0 / (d0 - d1)
    eer = fpr[k - 1] + lam * (fpr[k] - fpr[k - 1])
    threshold = thresholds[k - 1] + lam * (thresholds[k] - thresholds[k - 1])
    return float(eer), float(threshold)


def _fpr_point(fpr, target):
    """Index of the first sweep point (smallest threshold) with FPR <= target."""
    return int(np.argmax(fpr <= target))


def roc_and_eer(samples, targets=FPR_TARGETS):
    """ROC sweep, equal error rate and FNR at fixed FPR targets."""
    thresholds, fpr, fnr = sweep(samples)
    eer, eer_threshold = _eer_point(thresholds, fpr, fnr)
    fnr_at_fpr = OrderedDict()
    unachievable = []
    last = len(thresholds) - 1
    for target in targets:
        k = _fpr_point(fpr, target)
        if k == last:
            unachievable.append(target)
            fnr_at_fpr[target] = 1.0
        else:
            fnr_at_fpr[target] = float(fnr[k])
    roc = [(float(f), float(n), float(thr)) for f, n, thr in zip(fpr, fnr, thresholds)]
    return RocResult(roc, eer, fnr_at_fpr, eer_threshold, tuple(unachievable))


def parse_threshold_policy(text):
    """Parse 'eer', 'fpr:F' or 'fixed:V'."""
    kind, _, value = str(text).partition(':')
    if kind not in THRESHOLD_POLICIES:
        raise ValueError('unknown threshold policy {!r}, use eer, fpr:F or fixed:V'.format(text))
    if kind == 'eer':
        if value:
            raise ValueError('the eer policy takes no value')
        return ThresholdPolicy('eer', None)
    try:
        number = float(value)
    except ValueError:
        raise ValueError('threshold policy {!r} needs a number'.format(text))
    if not is_finite_number(number):
        raise ValueError('threshold policy {!r} needs a finite number'.format(text))
    if kind == 'fpr' and not 0.0 <= number <= 1.0:
        raise ValueError('FPR target must be in [0, 1], got {!r}'.format(number))
    return ThresholdPolicy(kind, number)


def calibrate_threshold(samples, policy):
    """Choose a decision threshold.

    Args:
        samples: list of ScoredSample (may be empty for a fixed policy)
        policy: ThresholdPolicy or its text form

    Returns:
        Calibration(threshold, flagged); flagged is set when an FPR target is
        unachievable and the reject-all sentinel was returned

    """
    if not isinstance(policy, ThresholdPolicy):
        policy = parse_threshold_policy(policy)
    if policy.kind == 'fixed':
        return Calibration(policy.value, False)
    thresholds, fpr, fnr = sweep(samples)
    if policy.kind == 'eer':
        return Calibration(_eer_point(thresholds, fpr, fnr)[1], False)
    k = _fpr_point(fpr, policy.value)
    flagged = k == len(thresholds) - 1
    if flagged:
        logger.warning('FPR target %g is not achievable, rejecting everything', policy.value)
    return Calibration(float(thresholds[k]), flagged)


def gate_samples(samples, max_var=None):
    """Drop samples whose var_hat exceeds max_var.

    Returns:
        kept samples and the kept fraction

    """
    if max_var is None or not samples:
        return list(samples), 1.0
    kept = [sample for sample in samples if sample.var_hat <= max_var]
    return kept, len(kept) / len(samples)


def evaluate_samples(samples, threshold, coverage=1.0):
    """Full EvalReport of scored samples at one threshold."""
    confusion = confusion_at(samples, threshold)
    roc = roc_and_eer(samples)
    by_type = confusion.apcer_by_type
    n_live = sum(1 for sample in samples if sample.label.is_live)
    return EvalReport(threshold=float(threshold), apcer=confusion.apcer, bpcer=confusion.bpcer,
                      acer=confusion.acer, eer=roc.eer, fnr_at_fpr=roc.fnr_at_fpr, apcer_by_type=by_type,
                      n_live=n_live, n_attack=len(samples) - n_live,
                      apcer_max=max(by_type.values()), apcer_mean=float(np.mean(list(by_type.values()))),
                      eer_threshold=roc.eer_threshold, coverage=coverage, unachievable=roc.unachievable)


def samples_from_smoothed(tracklets, smoothed, last_only=False):
    """Scored samples from aligned smoothed frames, in input order."""
    samples = []
    for tracklet, frames in zip(tracklets, smoothed):
        if last_only:
            frames = frames[-1:]
        for frame in frames:
            samples.append(ScoredSample(frame.p, tracklet.label, tracklet.id, frame.t, frame.var_hat))
    return samples


def score_tracklets(tracklets, config, num_workers=None):
    """Frame-level scored samples after smoothing with config."""
    return samples_from_smoothed(tracklets, run_filter_all(tracklets, config, num_workers))


def segment_split(tracklet, segment_length):
    """Cut a tracklet into consecutive chunks of segment_length frames.

    The last chunk may be shorter. Chunks keep the parent label and their
    frame indices restart at 0.
    """
    if isinstance(segment_length, bool) or not isinstance(segment_length, int) or segment_length < 1:
        raise ValueError('segment length must be a positive integer, got {!r}'.format(segment_length))
    segments = []
    for number, start in enumerate(range(0, len(tracklet), segment_length)):
        seg_id = compose_segment_id(tracklet.id, number)
        frames = [LogitFrame(seg_id, frame.t - start, frame.q, frame.embedding)
                  for frame in tracklet.frames[start:start + segment_length]]
        segments.append(Tracklet(seg_id, tracklet.label, frames))
    return segments


def _count_classes(samples):
    n_live = sum(1 for sample in samples if sample.label.is_live)
    return n_live, len(samples) - n_live


def evaluate_segments(tracklets, config, segment_lengths=DEFAULT_SEGMENT_LENGTHS, threshold=0.5,
                      max_var=None, num_workers=None):
    """Segment-level evaluation, one SegmentReport per segment length.

    Each segment is smoothed from a fresh filter state and scored by the
    probability at its last frame.
    """
    if not segment_lengths:
        raise ValueError('need at least one segment length')
    reports = []
    for segment_length in segment_lengths:
        segments = [segment for tracklet in tracklets for segment in segment_split(tracklet, segment_length)]
        smoothed = run_filter_all(segments, config, num_workers)
        samples, coverage = gate_samples(samples_from_smoothed(segments, smoothed, last_only=True), max_var)
        n_live, n_attack = _count_classes(samples)
        try:
            report = evaluate_samples(samples, threshold, coverage)
            error = None
        except MetricUndefinedError as err:
            logger.warning('Metrics undefined at K=%d: %s', segment_length, err)
            report, error = None, str(err)
        reports.append(SegmentReport(segment_length, report, len(segments), n_live, n_attack, error))
        logger.debug('K=%d: %d segments', segment_length, len(segments))
    return reports


def csv_columns(targets=FPR_TARGETS):
    """Column order of the report table."""
    return (['K', 'threshold', 'apcer', 'bpcer', 'acer', 'eer'] +
            ['fnr@fpr={}'.format(fpr_key(target)) for target in targets] +
            ['n_live', 'n_attack', 'n_segments'])


def _report_row(key, report, n_live, n_attack, n_segments, targets):
    row = OrderedDict([('K', key)])
    for name in ('threshold', 'apcer', 'bpcer', 'acer', 'eer'):
        row[name] = np.nan if report is None else getattr(report, name)
    for target in targets:
        row['fnr@fpr={}'.format(fpr_key(target))] = np.nan if report is None else report.fnr_at_fpr[target]
    row['n_live'] = n_live
    row['n_attack'] = n_attack
    row['n_segments'] = n_segments
    return row


def reports_to_dataset(frame_report, segment_reports, targets=FPR_TARGETS):
    """Report table with one row per evaluation: 'frame', then every K."""
    rows = [_report_row('frame', frame_report, frame_report.n_live, frame_report.n_attack,
                        frame_report.n_live + frame_report.n_attack, targets)]
    for seg in segment_reports:
        rows.append(_report_row(str(seg.segment_length), seg.report, seg.n_live, seg.n_attack,
                                seg.n_segments, targets))
    data_vars = OrderedDict()
    for name in csv_columns(targets):
        values = [row[name] for row in rows]
        if name == 'K':
            data_vars[name] = ('row', np.array(values, dtype=object))
        elif name.startswith('n_'):
            data_vars[name] = ('row', np.array(values, dtype=np.int64))
        else:
            data_vars[name] = ('row', np.array(values, dtype=np.float64))
    dataset = xr.Dataset(data_vars)
    dataset.attrs['description'] = 'tempco evaluation report'
    return dataset


def reports_to_csv(frame_report, segment_reports, targets=FPR_TARGETS):
    """CSV text of the report table, columns in csv_columns order."""
    frame = reports_to_dataset(frame_report, segment_reports, targets).to_dataframe()
    return frame[csv_columns(targets)].to_csv(index=False)


def reports_to_json(frame_report, segment_reports, meta=None):
    """JSON text of the frame report and all segment reports."""
    document = OrderedDict()
    if meta:
        document['meta'] = meta
    document['frame'] = frame_report.to_dict()
    document['segments'] = [seg.to_dict() for seg in segment_reports]
    return json.dumps(document, indent=2, allow_nan=False)
