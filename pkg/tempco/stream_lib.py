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

"""Score streams: labels, frames, tracklets and the JSONL frame format.

The input boundary is the classifier's liveness logit q, larger meaning
more live. One JSON object per line::

    {"tracklet_id": "a", "t": 0, "q": 1.3, "label": "attack",
     "attack_type": "print", "embedding": [...],
     "mu_hat": 1.3, "p": 0.785, "var_hat": 1.0}

``attack_type`` is required on attack frames and forbidden on live frames,
``embedding`` is optional and the smoothed fields come all together or not
at all.
"""

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
import xarray as xr

from tempco import logistic, is_finite_number

logger = logging.getLogger('tempco.stream')

FRAME_KEYS = ('tracklet_id', 't', 'q', 'label', 'attack_type', 'embedding')
SMOOTHED_KEYS = ('mu_hat', 'p', 'var_hat')
# Largest tolerated |p - logistic(mu_hat)| in a smoothed input line
P_TOLERANCE = 1e-12


class StreamValidationError(ValueError):
    """Invalid frame stream, addressed by line, tracklet and frame index."""

    def __init__(self, message, line=None, tracklet_id=None, t=None):
        self.line = line
        self.tracklet_id = tracklet_id
        self.t = t
        where = []
        if line is not None:
            where.append('line {:d}'.format(line))
        if tracklet_id is not None:
            where.append('tracklet {!r}'.format(tracklet_id))
        if t is not None:
            where.append('t={:d}'.format(t))
        if where:
            message = '{}: {}'.format(', '.join(where), message)
        super(StreamValidationError, self).__init__(message)


class LabelKind(Enum):
    """Ground truth class of a tracklet."""

    LIVE = 'live'
    ATTACK = 'attack'


@dataclass(frozen=True)
class ClassLabel:
    """Live, or attack with an open-vocabulary attack type tag."""

    kind: LabelKind
    attack_type: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.kind, LabelKind):
            raise ValueError('Unknown label kind: {!r}'.format(self.kind))
        if self.kind is LabelKind.ATTACK:
            if not isinstance(self.attack_type, str) or not self.attack_type:
                raise ValueError('attack labels need a non-empty attack_type')
        elif self.attack_type is not None:
            raise ValueError('live labels cannot carry an attack_type')

    @classmethod
    def live(cls):
        return cls(LabelKind.LIVE)

    @classmethod
    def attack(cls, attack_type):
        return cls(LabelKind.ATTACK, attack_type)

    @property
    def is_live(self):
        return self.kind is LabelKind.LIVE

    def flipped(self, attack_type='flipped'):
        """Return the opposite class (live frames become attacks of attack_type)."""
        if self.is_live:
            return ClassLabel.attack(attack_type)
        return ClassLabel.live()


@dataclass(frozen=True)
class LogitFrame:
    """One raw liveness logit of a tracklet."""

    tracklet_id: str
    t: int
    q: float
    embedding: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class SmoothedFrame:
    """Filter output for one frame; var_hat is a variance (squared logits)."""

    t: int
    q: float
    mu_hat: float
    p: float
    var_hat: float
    # Combination weight of the step, None where the method has none
    theta: Optional[float] = field(default=None, compare=False)


@dataclass(frozen=True)
class Tracklet:
    """Frames of one identity with one label, t running 0, 1, ..., T."""

    id: str
    label: ClassLabel
    frames: Tuple[LogitFrame, ...]

    def __post_init__(self):
        object.__setattr__(self, 'frames', tuple(self.frames))
        if not self.frames:
            raise StreamValidationError('empty tracklet', tracklet_id=self.id)
        dim = _embedding_dim(self.frames[0])
        for index, frame in enumerate(self.frames):
            if frame.tracklet_id != self.id:
                raise StreamValidationError(
                    'frame belongs to tracklet {!r}'.format(frame.tracklet_id),
                    tracklet_id=self.id, t=frame.t)
            if frame.t != index:
                raise StreamValidationError(
                    'frame indices must run 0, 1, ... without gaps; expected t={:d}'.format(index),
                    tracklet_id=self.id, t=frame.t)
            if not is_finite_number(frame.q):
                raise StreamValidationError('q is not a finite number', tracklet_id=self.id, t=frame.t)
            if _embedding_dim(frame) != dim:
                raise StreamValidationError(
                    'embedding dimension {} differs from {} of the first frame'.format(
                        _embedding_dim(frame), dim),
                    tracklet_id=self.id, t=frame.t)

    def __len__(self):
        return len(self.frames)

    @property
    def logits(self):
        return np.array([frame.q for frame in self.frames], dtype=np.float64)

    @property
    def has_embeddings(self):
        return self.frames[0].embedding is not None


def _embedding_dim(frame):
    if frame.embedding is None:
        return None
    return len(frame.embedding)


def make_tracklet(tracklet_id, logits, label, embeddings=None):
    """Build a tracklet from a sequence of logits."""
    frames = []
    for t, q in enumerate(logits):
        emb = None
        if embeddings is not None:
            emb = tuple(float(val) for val in embeddings[t])
        frames.append(LogitFrame(tracklet_id, t, float(q), emb))
    return Tracklet(tracklet_id, label, tuple(frames))


def _reject_constant(name):
    raise ValueError('non-finite constant {}'.format(name))


def _iter_records(data):
    """Yield (line number, record) for all non-blank lines."""
    if isinstance(data, (bytes, bytearray)):
        try:
            data = bytes(data).decode('utf-8')
        except UnicodeDecodeError as err:
            raise StreamValidationError('input is not UTF-8: {}'.format(err))
    for lineno, line in enumerate(data.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line, parse_constant=_reject_constant)
        except ValueError as err:
            raise StreamValidationError('malformed JSON ({})'.format(err), line=lineno)
        if not isinstance(record, dict):
            raise StreamValidationError('expected a JSON object', line=lineno)
        yield lineno, record


def _parse_record(lineno, record):
    """Turn one JSON object into (tracklet id, label, LogitFrame, SmoothedFrame or None)."""
    unknown = set(record) - set(FRAME_KEYS) - set(SMOOTHED_KEYS)
    if unknown:
        raise StreamValidationError('unknown keys: {}'.format(', '.join(sorted(unknown))), line=lineno)
    for key in ('tracklet_id', 't', 'q', 'label'):
        if key not in record:
            raise StreamValidationError('missing key {!r}'.format(key), line=lineno)

    tracklet_id = record['tracklet_id']
    if not isinstance(tracklet_id, str) or not tracklet_id:
        raise StreamValidationError('tracklet_id must be a non-empty string', line=lineno)
    t = record['t']
    if isinstance(t, bool) or not isinstance(t, int) or t < 0:
        raise StreamValidationError('t must be a non-negative integer', line=lineno, tracklet_id=tracklet_id)
    if not is_finite_number(record['q']):
        raise StreamValidationError('q is not a finite number', line=lineno, tracklet_id=tracklet_id, t=t)
    try:
        kind = LabelKind(record['label'])
        label = ClassLabel(kind, record.get('attack_type'))
    except ValueError as err:
        raise StreamValidationError('bad label: {}'.format(err), line=lineno, tracklet_id=tracklet_id, t=t)

    embedding = record.get('embedding')
    if embedding is not None:
        if (not isinstance(embedding, list) or not embedding or
                not all(is_finite_number(val) for val in embedding)):
            raise StreamValidationError('embedding must be a non-empty list of finite numbers',
                                        line=lineno, tracklet_id=tracklet_id, t=t)
        embedding = tuple(float(val) for val in embedding)
    frame = LogitFrame(tracklet_id, t, float(record['q']), embedding)

    present = [key for key in SMOOTHED_KEYS if key in record]
    smoothed = None
    if present:
        if len(present) != len(SMOOTHED_KEYS):
            raise StreamValidationError('smoothed fields mu_hat, p, var_hat must come together',
                                        line=lineno, tracklet_id=tracklet_id, t=t)
        if not all(is_finite_number(record[key]) for key in SMOOTHED_KEYS):
            raise StreamValidationError('smoothed fields must be finite numbers',
                                        line=lineno, tracklet_id=tracklet_id, t=t)
        mu_hat, p, var_hat = (float(record[key]) for key in SMOOTHED_KEYS)
        if var_hat < 0:
            raise StreamValidationError('var_hat is negative', line=lineno, tracklet_id=tracklet_id, t=t)
        if abs(p - logistic(mu_hat)) > P_TOLERANCE:
            raise StreamValidationError('p does not equal logistic(mu_hat)',
                                        line=lineno, tracklet_id=tracklet_id, t=t)
        smoothed = SmoothedFrame(t, frame.q, mu_hat, p, var_hat)
    return tracklet_id, label, frame, smoothed


def parse_smoothed_stream(data):
    """Parse the JSONL frame format, keeping smoothed fields when present.

    Returns:
        tracklets in first-appearance order, and for each tracklet either a
        list of SmoothedFrame aligned with its frames or None

    """
    groups = OrderedDict()
    for lineno, record in _iter_records(data):
        tracklet_id, label, frame, smoothed = _parse_record(lineno, record)
        group = groups.get(tracklet_id)
        if group is None:
            group = groups[tracklet_id] = {'label': label, 'line': lineno, 'frames': {},
                                           'dim': _embedding_dim(frame),
                                           'smoothed': smoothed is not None}
        if frame.t in group['frames']:
            raise StreamValidationError('duplicate frame (first seen on line {:d})'.format(
                group['frames'][frame.t][0]), line=lineno, tracklet_id=tracklet_id, t=frame.t)
        if label != group['label']:
            raise StreamValidationError('label differs from the one on line {:d}'.format(group['line']),
                                        line=lineno, tracklet_id=tracklet_id, t=frame.t)
        dim = _embedding_dim(frame)
        if dim != group['dim']:
            raise StreamValidationError('inconsistent embedding dimension within tracklet',
                                        line=lineno, tracklet_id=tracklet_id, t=frame.t)
        if (smoothed is not None) != group['smoothed']:
            raise StreamValidationError('smoothed fields present on some frames only',
                                        line=lineno, tracklet_id=tracklet_id, t=frame.t)
        group['frames'][frame.t] = (lineno, frame, smoothed)

    tracklets = []
    smoothed_lists = []
    for tracklet_id, group in groups.items():
        frames = group['frames']
        for index, t in enumerate(sorted(frames)):
            if t != index:
                raise StreamValidationError('gap in t: frame {:d} is missing'.format(index),
                                            line=frames[t][0], tracklet_id=tracklet_id, t=t)
        ordered = [frames[t] for t in sorted(frames)]
        tracklets.append(Tracklet(tracklet_id, group['label'], tuple(item[1] for item in ordered)))
        smoothed_lists.append([item[2] for item in ordered] if group['smoothed'] else None)
    logger.debug('Parsed %d tracklets', len(tracklets))
    return tracklets, smoothed_lists


def parse_stream(data):
    """Parse the JSONL frame format into tracklets (first-appearance order)."""
    return parse_smoothed_stream(data)[0]


def _check_alignment(tracklets, smoothed):
    if len(smoothed) != len(tracklets):
        raise StreamValidationError('got smoothed frames for {:d} tracklets, expected {:d}'.format(
            len(smoothed), len(tracklets)))
    for tracklet, frames in zip(tracklets, smoothed):
        if frames is None:
            continue
        if len(frames) != len(tracklet):
            raise StreamValidationError('got {:d} smoothed frames for {:d} frames'.format(
                len(frames), len(tracklet)), tracklet_id=tracklet.id)
        for frame, sframe in zip(tracklet.frames, frames):
            if sframe.t != frame.t:
                raise StreamValidationError('smoothed frame t={:d} is not aligned'.format(sframe.t),
                                            tracklet_id=tracklet.id, t=frame.t)


def frame_record(tracklet, frame, smoothed=None):
    """Build the JSON object of one frame."""
    record = OrderedDict()
    record['tracklet_id'] = tracklet.id
    record['t'] = frame.t
    record['q'] = float(frame.q)
    record['label'] = tracklet.label.kind.value
    if not tracklet.label.is_live:
        record['attack_type'] = tracklet.label.attack_type
    if frame.embedding is not None:
        record['embedding'] = [float(val) for val in frame.embedding]
    if smoothed is not None:
        record['mu_hat'] = float(smoothed.mu_hat)
        record['p'] = float(smoothed.p)
        record['var_hat'] = float(smoothed.var_hat)
    return record


def serialize_stream(tracklets, smoothed=None):
    """Write tracklets (and optionally aligned smoothed frames) as JSONL bytes.

    Floats are written with repr precision, so parsing gives back the same bits.
    """
    if smoothed is not None:
        _check_alignment(tracklets, smoothed)
    lines = []
    for index, tracklet in enumerate(tracklets):
        sframes = smoothed[index] if smoothed is not None else None
        for t, frame in enumerate(tracklet.frames):
            record = frame_record(tracklet, frame, sframes[t] if sframes is not None else None)
            lines.append(json.dumps(record, allow_nan=False))
    if not lines:
        return b''
    return ('\n'.join(lines) + '\n').encode('utf-8')


def stream_to_dataset(tracklets, smoothed=None):
    """Collect a stream in an xarray Dataset along a single frame dimension."""
    if smoothed is not None:
        _check_alignment(tracklets, smoothed)
    columns = OrderedDict((name, []) for name in ('tracklet_id', 't', 'q', 'label', 'attack_type'))
    smooth_columns = OrderedDict((name, []) for name in SMOOTHED_KEYS)
    with_smoothed = smoothed is not None and any(frames is not None for frames in smoothed)
    if with_smoothed:
        for tracklet, frames in zip(tracklets, smoothed):
            if frames is None:
                raise StreamValidationError('tracklet has no smoothed frames while others do',
                                            tracklet_id=tracklet.id)
    for index, tracklet in enumerate(tracklets):
        for t, frame in enumerate(tracklet.frames):
            columns['tracklet_id'].append(tracklet.id)
            columns['t'].append(frame.t)
            columns['q'].append(frame.q)
            columns['label'].append(tracklet.label.kind.value)
            columns['attack_type'].append(tracklet.label.attack_type or '')
            if with_smoothed:
                sframe = smoothed[index][t]
                for name in SMOOTHED_KEYS:
                    smooth_columns[name].append(getattr(sframe, name))

    dtypes = {'tracklet_id': object, 't': np.int64, 'q': np.float64, 'label': object, 'attack_type': object}
    data_vars = OrderedDict()
    for name, values in columns.items():
        data_vars[name] = ('frame', np.array(values, dtype=dtypes[name]))
    if with_smoothed:
        for name, values in smooth_columns.items():
            data_vars[name] = ('frame', np.array(values, dtype=np.float64))
    dataset = xr.Dataset(data_vars)
    dataset['q'].attrs = {'long_name': 'raw liveness logit', 'units': '1'}
    if with_smoothed:
        dataset['mu_hat'].attrs = {'long_name': 'smoothed liveness logit', 'units': '1'}
        dataset['p'].attrs = {'long_name': 'liveness probability', 'units': '1',
                              'valid_range': np.array([0.0, 1.0])}
        dataset['var_hat'].attrs = {'long_name': 'uncertainty of mu_hat (variance)', 'units': '1'}
    dataset.attrs['history'] = 'Created by tempco.'
    dataset.attrs['n_tracklets'] = len(tracklets)
    return dataset


def get_encoding(dataset):
    """Get netcdf encoding for the numeric variables of a stream dataset."""
    encoding = {}
    for name in dataset.data_vars:
        dtype = dataset[name].dtype
        if dtype == np.float64:
            encoding[name] = {'dtype': 'float64', 'zlib': True, 'complevel': 4}
        elif dtype == np.int64:
            encoding[name] = {'dtype': 'int32', 'zlib': True, 'complevel': 4}
    return encoding


def save_dataset(dataset, filename, engine='h5netcdf'):
    """Write a stream dataset to a netCDF file."""
    dataset.to_netcdf(filename, engine=engine, encoding=get_encoding(dataset))
    return filename
