"""Hot inner loops, each in two flavours.

``*_loop`` functions are plain loops compiled with numba; ``*_numpy`` functions
are vectorised equivalents. The public names at the bottom of the module are
bound to one or the other according to :mod:`labelcorr._accel`. Both variants
stay importable so tests and ``benchmarks/`` can compare them directly.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

PROB_FLOOR = 1e-12

LOSS_LOG = 0
LOSS_BACKWARD = 1
LOSS_FORWARD = 2
LOSS_SKEPTICAL = 3


# --------------------------------------------------------------------------
# corrected losses: value and gradient with respect to the logits
# --------------------------------------------------------------------------


def _loss_logit_grad_loop(kind, probs, labels, T, Tinv, a):
    n, c = probs.shape
    values = np.empty(n)
    dz = np.empty((n, c))
    clamped = np.zeros(n, dtype=np.bool_)
    pg = np.empty(c)
    top = 0.0
    if kind == LOSS_SKEPTICAL:
        top = 2.0 / a
    for i in range(n):
        lab = labels[i]
        if kind == LOSS_LOG:
            p = probs[i, lab]
            if p < PROB_FLOOR:
                clamped[i] = True
                p = PROB_FLOOR
            values[i] = -math.log(p)
            for j in range(c):
                dz[i, j] = probs[i, j]
            dz[i, lab] -= 1.0
            continue
        if kind == LOSS_BACKWARD:
            v = 0.0
            for j in range(c):
                p = probs[i, j]
                pc = p
                if p < PROB_FLOOR:
                    clamped[i] = True
                    pc = PROB_FLOOR
                v -= Tinv[lab, j] * math.log(pc)
                pg[j] = -Tinv[lab, j] * (p / pc)
            values[i] = v
        else:
            m = 0.0
            for j in range(c):
                m += T[lab, j] * probs[i, j]
            mc = m
            if m < PROB_FLOOR:
                clamped[i] = True
                mc = PROB_FLOOR
            lm = math.log(mc)
            if kind == LOSS_FORWARD:
                values[i] = -lm
                scale = 1.0 / mc
            else:
                values[i] = top - mc**a * (top - lm)
                scale = mc ** (a - 1.0) * (1.0 - a * lm)
            for j in range(c):
                pg[j] = -scale * T[lab, j] * probs[i, j]
        s = 0.0
        for j in range(c):
            s += pg[j]
        for j in range(c):
            dz[i, j] = pg[j] - probs[i, j] * s
    return values, dz, clamped


def _loss_logit_grad_numpy(kind, probs, labels, T, Tinv, a):
    n, c = probs.shape
    rows = np.arange(n)
    if kind == LOSS_LOG:
        p = probs[rows, labels]
        clamped = p < PROB_FLOOR
        values = -np.log(np.maximum(p, PROB_FLOOR))
        dz = probs.copy()
        dz[rows, labels] -= 1.0
        return values, dz, clamped
    if kind == LOSS_BACKWARD:
        w = Tinv[labels]
        pc = np.maximum(probs, PROB_FLOOR)
        clamped = (probs < PROB_FLOOR).any(axis=1)
        values = -(w * np.log(pc)).sum(axis=1)
        pg = -w * (probs / pc)
    else:
        t = T[labels]
        m = (t * probs).sum(axis=1)
        clamped = m < PROB_FLOOR
        mc = np.maximum(m, PROB_FLOOR)
        lm = np.log(mc)
        if kind == LOSS_FORWARD:
            values = -lm
            scale = 1.0 / mc
        else:
            top = 2.0 / a
            values = top - mc**a * (top - lm)
            scale = mc ** (a - 1.0) * (1.0 - a * lm)
        pg = -scale[:, None] * t * probs
    dz = pg - probs * pg.sum(axis=1, keepdims=True)
    return values, dz, clamped


# --------------------------------------------------------------------------
# confidence-gated transition updates, applied sequentially in index order
# --------------------------------------------------------------------------


def _transition_sweep_loop(T, probs, labels, gamma, eps):
    n, c = probs.shape
    threshold = 1.0 - eps
    fired = 0
    for i in range(n):
        best = 0
        for j in range(1, c):
            if probs[i, j] > probs[i, best]:
                best = j
        if probs[i, best] > threshold:
            for r in range(c):
                T[r, best] *= gamma
            T[labels[i], best] += 1.0 - gamma
            fired += 1
    return fired


def _transition_sweep_numpy(T, probs, labels, gamma, eps):
    # Closed form of the sequential recurrence: a column hit n times decays by
    # gamma**n, and the j-th hit (0-based) contributes (1-gamma)*gamma**(n-1-j).
    best = probs.argmax(axis=1)
    conf = probs[np.arange(len(best)), best] > 1.0 - eps
    cols = best[conf]
    if cols.size == 0:
        return 0
    labs = labels[conf]
    c = T.shape[1]
    hits = np.bincount(cols, minlength=c)
    order = np.argsort(cols, kind="stable")
    sorted_cols = cols[order]
    starts = np.concatenate(([0], np.cumsum(hits)[:-1]))
    pos = np.empty_like(order)
    pos[order] = np.arange(cols.size) - starts[sorted_cols]
    weights = (1.0 - gamma) * gamma ** (hits[cols] - 1 - pos).astype(np.float64)
    T *= gamma ** hits.astype(np.float64)
    np.add.at(T, (labs, cols), weights)
    return int(cols.size)


# --------------------------------------------------------------------------
# top-2 labels per row, ties broken towards the lower index
# --------------------------------------------------------------------------


def _top2_loop(probs):
    n, c = probs.shape
    first = np.empty(n, dtype=np.int64)
    second = np.empty(n, dtype=np.int64)
    for i in range(n):
        b1 = 0
        for j in range(1, c):
            if probs[i, j] > probs[i, b1]:
                b1 = j
        b2 = 1 if b1 == 0 else 0
        for j in range(c):
            if j != b1 and probs[i, j] > probs[i, b2]:
                b2 = j
        first[i] = b1
        second[i] = b2
    return first, second


def _top2_numpy(probs):
    first = probs.argmax(axis=1)
    masked = probs.copy()
    masked[np.arange(len(first)), first] = -np.inf
    second = masked.argmax(axis=1)
    return first.astype(np.int64), second.astype(np.int64)


# --------------------------------------------------------------------------
# joint label counts
# --------------------------------------------------------------------------


def _pair_counts_loop(rows, cols, c):
    out = np.zeros((c, c), dtype=np.int64)
    for i in range(rows.shape[0]):
        out[rows[i], cols[i]] += 1
    return out


def _pair_counts_numpy(rows, cols, c):
    return np.bincount(rows * c + cols, minlength=c * c).reshape(c, c).astype(np.int64)


loss_logit_grad_loop = njit(_loss_logit_grad_loop)
transition_sweep_loop = njit(_transition_sweep_loop)
top2_loop = njit(_top2_loop)
pair_counts_loop = njit(_pair_counts_loop)

loss_logit_grad_numpy = _loss_logit_grad_numpy
transition_sweep_numpy = _transition_sweep_numpy
top2_numpy = _top2_numpy
pair_counts_numpy = _pair_counts_numpy

if USE_NUMBA:
    loss_logit_grad = loss_logit_grad_loop
    transition_sweep = transition_sweep_loop
    top2 = top2_loop
    pair_counts = pair_counts_loop
else:
    loss_logit_grad = loss_logit_grad_numpy
    transition_sweep = transition_sweep_numpy
    top2 = top2_numpy
    pair_counts = pair_counts_numpy
