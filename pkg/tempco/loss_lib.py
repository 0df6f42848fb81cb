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

"""Training losses on embedding batches, with analytic gradients.

L_c is the softmax cross-entropy of the classifier logits. L_t and L_e share
one form: for every anchor i the largest squared distance to another sample
of the same group (same video for L_t, same class for L_e), averaged over
the batch. The combined loss is L_c + beta * L_t + gamma * L_e.
"""

import json
import logging
from collections import OrderedDict, namedtuple
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from tempco import is_finite_number

logger = logging.getLogger('tempco.loss')

DEFAULT_BETA = 1.0
DEFAULT_GAMMA = 0.5
DEFAULT_FD_STEP = 1e-5
GRAD_TOLERANCE = 1e-4
# Smallest gap between the two largest candidate distances of a max
TIE_MARGIN = 1e-3

PAIR_MODES = ('anchor', 'group')
NORMALIZATIONS = ('batch', 'anchors')
COMPONENTS = ('L_c', 'L_t', 'L_e')

GradCheckResult = namedtuple('GradCheckResult', ['loss', 'max_rel_error', 'tie_gap', 'status'])


class LossInputError(ValueError):
    """Batch does not hold what the requested loss needs."""

    pass


@dataclass(frozen=True)
class EmbeddingBatch:
    """m embeddings of dimension d with video ids, class ids and optional logits."""

    x: np.ndarray
    video_id: Tuple[str, ...]
    class_id: np.ndarray
    logits: Optional[np.ndarray] = None
    n_classes: Optional[int] = None

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise LossInputError('x must be a non-empty m x d matrix, got shape {}'.format(x.shape))
        m = x.shape[0]
        if not np.all(np.isfinite(x)):
            raise LossInputError('x holds non-finite values')
        video_id = tuple(str(vid) for vid in self.video_id)
        if len(video_id) != m:
            raise LossInputError('got {:d} video ids for {:d} rows'.format(len(video_id), m))
        class_id = np.array(self.class_id)
        if class_id.shape != (m,) or not np.issubdtype(class_id.dtype, np.integer):
            raise LossInputError('class_id must hold one integer per row')
        class_id = class_id.astype(np.int64)
        logits = self.logits
        n_classes = self.n_classes
        if logits is not None:
            logits = np.array(logits, dtype=np.float64)
            if logits.ndim != 2 or logits.shape[0] != m:
                raise LossInputError('logits must be an m x C matrix, got shape {}'.format(logits.shape))
            if not np.all(np.isfinite(logits)):
                raise LossInputError('logits hold non-finite values')
            if n_classes is None:
                n_classes = logits.shape[1]
            elif n_classes != logits.shape[1]:
                raise LossInputError('logits have {:d} columns for {:d} classes'.format(logits.shape[1], n_classes))
            logits.flags.writeable = False
        if n_classes is None:
            n_classes = max(2, int(class_id.max()) + 1)
        if n_classes < 2:
            raise LossInputError('need at least two classes')
        if class_id.min() < 0 or class_id.max() >= n_classes:
            raise LossInputError('class_id out of range [0, {:d})'.format(n_classes))
        x.flags.writeable = False
        class_id.flags.writeable = False
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'video_id', video_id)
        object.__setattr__(self, 'class_id', class_id)
        object.__setattr__(self, 'logits', logits)
        object.__setattr__(self, 'n_classes', int(n_classes))

    @property
    def m(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    def replace(self, x=None, logits=None):
        """Copy of the batch with new embeddings and/or logits."""
        return EmbeddingBatch(self.x if x is None else x, self.video_id, self.class_id,
                              self.logits if logits is None else logits, self.n_classes)


@dataclass(frozen=True)
class LossResult:
    """Loss value, gradients and the unweighted components."""

    value: float
    grad_x: np.ndarray
    grad_logits: Optional[np.ndarray]
    components: dict


def _group_mask(keys):
    """Boolean m x m mask of distinct pairs sharing the same key."""
    keys = np.asarray(keys)
    mask = keys[:, None] == keys[None, :]
    np.fill_diagonal(mask, False)
    return mask


def _sq_distances(x):
    diff = x[:, None, :] - x[None, :, :]
    return np.einsum('ijk,ijk->ij', diff, diff)


def _max_pairs(x, mask, mode):
    """Pick the maximising pair of every anchor (or group).

    Returns:
        list of (i, j) pairs, ties broken towards the smallest index

    """
    dist = _sq_distances(x)
    pairs = []
    if mode == 'anchor':
        masked = np.where(mask, dist, -np.inf)
        for i in np.flatnonzero(mask.any(axis=1)):
            pairs.append((int(i), int(np.argmax(masked[i]))))
        return pairs, dist
    seen = np.zeros(mask.shape[0], dtype=bool)
    upper = np.triu(mask, 1)
    for i in range(mask.shape[0]):
        if seen[i] or not mask[i].any():
            continue
        members = np.concatenate(([i], np.flatnonzero(mask[i])))
        seen[members] = True
        sub = np.where(upper[np.ix_(members, members)], dist[np.ix_(members, members)], -np.inf)
        flat = int(np.argmax(sub))
        row, col = np.unravel_index(flat, sub.shape)
        pairs.append((int(members[row]), int(members[col])))
    return pairs, dist


def max_pair_loss(x, keys, mode='anchor', normalize='batch'):
    """Mean over anchors (or groups) of the largest same-key squared distance.

    Returns:
        value and gradient with respect to x

    """
    if mode not in PAIR_MODES:
        raise ValueError('mode must be one of {}'.format(', '.join(PAIR_MODES)))
    if normalize not in NORMALIZATIONS:
        raise ValueError('normalize must be one of {}'.format(', '.join(NORMALIZATIONS)))
    x = np.asarray(x, dtype=np.float64)
    pairs, dist = _max_pairs(x, _group_mask(keys), mode)
    grad = np.zeros_like(x)
    if normalize == 'batch':
        divisor = float(x.shape[0])
    else:
        divisor = float(max(len(pairs), 1))
    total = 0.0
    for i, j in pairs:
        total += dist[i, j]
        step = 2.0 * (x[i] - x[j]) / divisor
        grad[i] += step
        grad[j] -= step
    return total / divisor, grad


def tie_gap(x, keys, mode='anchor'):
    """Smallest gap between the two best candidates of any max (inf without ties to fear)."""
    mask = _group_mask(keys)
    dist = _sq_distances(np.asarray(x, dtype=np.float64))
    gaps = [np.inf]
    if mode == 'anchor':
        for i in range(mask.shape[0]):
            cand = np.sort(dist[i, mask[i]])
            if cand.size >= 2:
                gaps.append(cand[-1] - cand[-2])
    else:
        upper = np.triu(mask, 1)
        for key in np.unique(np.asarray(keys)):
            members = np.flatnonzero(np.asarray(keys) == key)
            cand = np.sort(dist[np.ix_(members, members)][upper[np.ix_(members, members)]])
            if cand.size >= 2:
                gaps.append(cand[-1] - cand[-2])
    return float(min(gaps))


def loss_classification(batch):
    """Softmax cross-entropy of the logits against class_id."""
    if batch.logits is None:
        raise LossInputError('classification loss needs logits')
    logits = batch.logits
    m = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    sums = exps.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(sums)
    rows = np.arange(m)
    value = -float(np.sum(log_probs[rows, batch.class_id])) / m
    grad_logits = exps / sums
    grad_logits[rows, batch.class_id] -= 1.0
    grad_logits /= m
    return LossResult(value, np.zeros_like(batch.x), grad_logits,
                      OrderedDict([('L_c', value), ('L_t', 0.0), ('L_e', 0.0)]))


def loss_temporal(batch, mode='anchor', normalize='batch'):
    """Largest intra-video squared embedding distance per anchor."""
    value, grad = max_pair_loss(batch.x, batch.video_id, mode, normalize)
    return LossResult(value, grad, None, OrderedDict([('L_c', 0.0), ('L_t', value), ('L_e', 0.0)]))


def loss_class_consistency(batch, mode='anchor', normalize='batch'):
    """Largest intra-class squared embedding distance per anchor, across videos."""
    value, grad = max_pair_loss(batch.x, batch.class_id, mode, normalize)
    return LossResult(value, grad, None, OrderedDict([('L_c', 0.0), ('L_t', 0.0), ('L_e', value)]))


def loss_combined(batch, beta=DEFAULT_BETA, gamma=DEFAULT_GAMMA, mode='anchor', normalize='batch'):
    """L_c + beta * L_t + gamma * L_e; L_c is left out when the batch has no logits."""
    if not (is_finite_number(beta) and beta >= 0 and is_finite_number(gamma) and gamma >= 0):
        raise LossInputError('beta and gamma must be non-negative numbers')
    temporal = loss_temporal(batch, mode, normalize)
    consistency = loss_class_consistency(batch, mode, normalize)
    if batch.logits is not None:
        classification = loss_classification(batch)
        l_c = classification.value
        grad_logits = classification.grad_logits
    else:
        l_c = 0.0
        grad_logits = None
    l_t = temporal.value
    l_e = consistency.value
    value = l_c + beta * l_t + gamma * l_e
    grad_x = beta * temporal.grad_x + gamma * consistency.grad_x
    return LossResult(value, grad_x, grad_logits, OrderedDict([('L_c', l_c), ('L_t', l_t), ('L_e', l_e)]))


def numeric_gradient(func, values, step=DEFAULT_FD_STEP):
    """Central finite differences of the scalar func around values."""
    values = np.array(values, dtype=np.float64)
    grad = np.zeros_like(values)
    for index in np.ndindex(values.shape):
        orig = values[index]
        values[index] = orig + step
        upper = func(values.copy())
        values[index] = orig - step
        lower = func(values.copy())
        values[index] = orig
        grad[index] = (upper - lower) / (2.0 * step)
    return grad


def relative_error(analytic, numeric):
    """Largest absolute difference relative to the largest gradient entry."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def _status(error, gap, tolerance, margin):
    if error <= tolerance:
        return 'pass'
    if gap < margin:
        return 'skipped at tie'
    return 'fail'


def check_gradients(batch, beta=DEFAULT_BETA, gamma=DEFAULT_GAMMA, step=DEFAULT_FD_STEP,
                    tolerance=GRAD_TOLERANCE, margin=TIE_MARGIN, mode='anchor', normalize='batch'):
    """Compare analytic gradients with central finite differences, one result per loss."""
    results = []
    if batch.logits is not None:
        analytic = loss_classification(batch).grad_logits
        numeric = numeric_gradient(lambda lg: loss_classification(batch.replace(logits=lg)).value,
                                   batch.logits, step)
        error = relative_error(analytic, numeric)
        results.append(GradCheckResult('L_c', error, np.inf, _status(error, np.inf, tolerance, margin)))

    gap_t = tie_gap(batch.x, batch.video_id, mode)
    gap_e = tie_gap(batch.x, batch.class_id, mode)
    for name, func, gap in (('L_t', loss_temporal, gap_t), ('L_e', loss_class_consistency, gap_e)):
        analytic = func(batch, mode, normalize).grad_x
        numeric = numeric_gradient(lambda xx, func=func: func(batch.replace(x=xx), mode, normalize).value,
                                   batch.x, step)
        error = relative_error(analytic, numeric)
        results.append(GradCheckResult(name, error, gap, _status(error, gap, tolerance, margin)))

    combined = loss_combined(batch, beta, gamma, mode, normalize)
    numeric_x = numeric_gradient(lambda xx: loss_combined(batch.replace(x=xx), beta, gamma, mode, normalize).value,
                                 batch.x, step)
    error = relative_error(combined.grad_x, numeric_x)
    if batch.logits is not None:
        numeric_lg = numeric_gradient(
            lambda lg: loss_combined(batch.replace(logits=lg), beta, gamma, mode, normalize).value,
            batch.logits, step)
        error = max(error, relative_error(combined.grad_logits, numeric_lg))
    gap = min(gap_t, gap_e)
    results.append(GradCheckResult('L', error, gap, _status(error, gap, tolerance, margin)))
    for result in results:
        logger.debug('%s: max relative error %.3g (%s)', result.loss, result.max_rel_error, result.status)
    return results


def parse_batch(data):
    """Parse the batch JSONL format into an EmbeddingBatch.

    One row per line: {"video_id": str, "class_id": int, "x": [float], "logits": [float]?}
    """
    if isinstance(data, (bytes, bytearray)):
        data = bytes(data).decode('utf-8')
    xs, vids, cids, logits = [], [], [], []
    for lineno, line in enumerate(data.splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except ValueError as err:
            raise LossInputError('line {:d}: malformed JSON ({})'.format(lineno, err))
        if not isinstance(row, dict) or not {'video_id', 'class_id', 'x'} <= set(row):
            raise LossInputError('line {:d}: need video_id, class_id and x'.format(lineno))
        cid = row['class_id']
        if isinstance(cid, bool) or not isinstance(cid, int):
            raise LossInputError('line {:d}: class_id must be an integer'.format(lineno))
        vec = row['x']
        if not isinstance(vec, list) or not vec or not all(is_finite_number(val) for val in vec):
            raise LossInputError('line {:d}: x must be a non-empty list of finite numbers'.format(lineno))
        if xs and len(vec) != len(xs[0]):
            raise LossInputError('line {:d}: x has dimension {:d}, expected {:d}'.format(
                lineno, len(vec), len(xs[0])))
        row_logits = row.get('logits')
        if row_logits is not None and (not isinstance(row_logits, list) or
                                       not all(is_finite_number(val) for val in row_logits)):
            raise LossInputError('line {:d}: logits must be a list of finite numbers'.format(lineno))
        if xs and (row_logits is None) != (logits[0] is None):
            raise LossInputError('line {:d}: logits present on some rows only'.format(lineno))
        if row_logits is not None and logits and len(row_logits) != len(logits[0]):
            raise LossInputError('line {:d}: logits have inconsistent length'.format(lineno))
        xs.append(vec)
        vids.append(str(row['video_id']))
        cids.append(cid)
        logits.append(row_logits)
    if not xs:
        raise LossInputError('empty batch')
    batch_logits = None if logits[0] is None else np.array(logits, dtype=np.float64)
    return EmbeddingBatch(np.array(xs, dtype=np.float64), tuple(vids), np.array(cids, dtype=np.int64),
                          batch_logits)


def serialize_batch(batch):
    """Write an EmbeddingBatch in the batch JSONL format."""
    lines = []
    for i in range(batch.m):
        row = OrderedDict([('video_id', batch.video_id[i]),
                           ('class_id', int(batch.class_id[i])),
                           ('x', [float(val) for val in batch.x[i]])])
        if batch.logits is not None:
            row['logits'] = [float(val) for val in batch.logits[i]]
        lines.append(json.dumps(row, allow_nan=False))
    return ('\n'.join(lines) + '\n').encode('utf-8')
