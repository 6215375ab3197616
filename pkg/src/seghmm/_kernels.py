"""Numba kernels for the sequential recursions.

Everything here works on plain float64/int arrays in log space. The
augmented kernels take a counter successor table ``succ`` of shape
(K, M, M) holding the target counter index for each (counter, from-state,
to-state) triple, or -1 where the step is forbidden.

Tie-breaking convention for every argmax: scores within TIE_TOL of the
maximum count as tied, and ties resolve to the lowest state index first,
then the lowest counter index. Backtracking re-derives the predecessor
candidates at each step and applies the same rule, so mathematically tied
paths decode identically regardless of accumulation-order rounding.
"""
import math

import numpy as np
from numba import njit

NEG_INF = -np.inf

# Scores closer than this are treated as exact ties. Generic instances
# separate distinct paths by far more; rounding noise sits far below.
TIE_TOL = 1e-9


@njit(cache=True, inline="always")
def _logaddexp(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


@njit(cache=True, inline="always")
def _draw_index(logw, u):
    """Sample an index from unnormalized log weights with one uniform.

    Returns -1 when every weight is zero.
    """
    c = logw.size
    m = NEG_INF
    for i in range(c):
        if logw[i] > m:
            m = logw[i]
    if m == NEG_INF:
        return -1
    total = 0.0
    for i in range(c):
        if logw[i] > NEG_INF:
            total += math.exp(logw[i] - m)
    target = u * total
    acc = 0.0
    last = -1
    for i in range(c):
        if logw[i] > NEG_INF:
            acc += math.exp(logw[i] - m)
            last = i
            if acc > target:
                return i
    return last


# ---------------------------------------------------------------------------
# Standard M-state recursions
# ---------------------------------------------------------------------------


@njit(cache=True)
def forward_log(logpi0, logA, logb):
    n, m = logb.shape
    alpha = np.full((n, m), NEG_INF)
    for x in range(m):
        alpha[0, x] = logpi0[x] + logb[0, x]
    for t in range(1, n):
        for xc in range(m):
            acc = NEG_INF
            for xp in range(m):
                acc = _logaddexp(acc, alpha[t - 1, xp] + logA[xp, xc])
            alpha[t, xc] = acc + logb[t, xc]
    return alpha


@njit(cache=True)
def backward_log(logA, logb):
    n, m = logb.shape
    beta = np.full((n, m), NEG_INF)
    for x in range(m):
        beta[n - 1, x] = 0.0
    for t in range(n - 2, -1, -1):
        for xp in range(m):
            acc = NEG_INF
            for xc in range(m):
                acc = _logaddexp(acc, logA[xp, xc] + logb[t + 1, xc] + beta[t + 1, xc])
            beta[t, xp] = acc
    return beta


@njit(cache=True)
def viterbi_scores(logpi0, logA, logb):
    n, m = logb.shape
    score = np.full((n, m), NEG_INF)
    for x in range(m):
        score[0, x] = logpi0[x] + logb[0, x]
    for t in range(1, n):
        for xp in range(m):
            s = score[t - 1, xp]
            if s == NEG_INF:
                continue
            for xc in range(m):
                v = s + logA[xp, xc]
                if v > score[t, xc]:
                    score[t, xc] = v
        for xc in range(m):
            score[t, xc] += logb[t, xc]
    return score


@njit(cache=True)
def viterbi_backtrack(score, logA, start_x):
    """Recover the optimal path ending at start_x, re-deriving the
    predecessor set at each step and breaking near-ties to the lowest
    state index."""
    n, m = score.shape
    path = np.empty(n, dtype=np.int64)
    path[n - 1] = start_x
    x = start_x
    for t in range(n - 1, 0, -1):
        best = NEG_INF
        for xp in range(m):
            v = score[t - 1, xp] + logA[xp, x]
            if v > best:
                best = v
        pick = -1
        for xp in range(m):
            v = score[t - 1, xp] + logA[xp, x]
            if v >= best - TIE_TOL:
                pick = xp
                break
        x = pick
        path[t - 1] = x
    return path


@njit(cache=True)
def ffbs_standard(alpha, logA, uniforms):
    """Backward-sample hidden paths from a completed forward table.

    uniforms has shape (draws, N); column t is consumed at position t, so
    the stream layout is identical to the augmented sampler's.
    """
    draws = uniforms.shape[0]
    n, m = alpha.shape
    paths = np.empty((draws, n), dtype=np.int64)
    w = np.empty(m)
    for d in range(draws):
        x = _draw_index(alpha[n - 1], uniforms[d, n - 1])
        paths[d, n - 1] = x
        for t in range(n - 2, -1, -1):
            for xp in range(m):
                w[xp] = alpha[t, xp] + logA[xp, x]
            x = _draw_index(w, uniforms[d, t])
            paths[d, t] = x
    return paths


# ---------------------------------------------------------------------------
# Augmented (counter, state) recursions
# ---------------------------------------------------------------------------


@njit(cache=True)
def aug_forward(logpi0, logA, logb, succ, init_idx):
    n, m = logb.shape
    k = succ.shape[0]
    alpha = np.full((n, k, m), NEG_INF)
    for x in range(m):
        s = init_idx[x]
        if s >= 0:
            alpha[0, s, x] = logpi0[x] + logb[0, x]
    for t in range(1, n):
        for s in range(k):
            for xp in range(m):
                a = alpha[t - 1, s, xp]
                if a == NEG_INF:
                    continue
                for xc in range(m):
                    tgt = succ[s, xp, xc]
                    if tgt < 0:
                        continue
                    v = a + logA[xp, xc] + logb[t, xc]
                    alpha[t, tgt, xc] = _logaddexp(alpha[t, tgt, xc], v)
    return alpha


@njit(cache=True)
def aug_backward(logA, logb, succ, final_log):
    n, m = logb.shape
    k = succ.shape[0]
    beta = np.full((n, k, m), NEG_INF)
    for s in range(k):
        for x in range(m):
            beta[n - 1, s, x] = final_log[s, x]
    for t in range(n - 2, -1, -1):
        for s in range(k):
            for xp in range(m):
                acc = NEG_INF
                for xc in range(m):
                    tgt = succ[s, xp, xc]
                    if tgt < 0:
                        continue
                    acc = _logaddexp(acc, logA[xp, xc] + logb[t + 1, xc] + beta[t + 1, tgt, xc])
                beta[t, s, xp] = acc
    return beta


@njit(cache=True)
def aug_viterbi(logpi0, logA, logb, succ, init_idx):
    """Max-product pass over (counter, state) cells."""
    n, m = logb.shape
    k = succ.shape[0]
    score = np.full((n, k, m), NEG_INF)
    for x in range(m):
        s = init_idx[x]
        if s >= 0:
            score[0, s, x] = logpi0[x] + logb[0, x]
    for t in range(1, n):
        for s in range(k):
            for xp in range(m):
                a = score[t - 1, s, xp]
                if a == NEG_INF:
                    continue
                for xc in range(m):
                    tgt = succ[s, xp, xc]
                    if tgt < 0:
                        continue
                    v = a + logA[xp, xc]
                    if v > score[t, tgt, xc]:
                        score[t, tgt, xc] = v
        for s in range(k):
            for xc in range(m):
                if score[t, s, xc] > NEG_INF:
                    score[t, s, xc] += logb[t, xc]
    return score


@njit(cache=True)
def aug_backtrack(score, logA, succ, start_s, start_x):
    """Recover the optimal augmented path ending at (start_s, start_x).

    The predecessor set is re-derived at each step; near-tied candidates
    resolve to the lowest state index, then the lowest counter index.
    """
    n = score.shape[0]
    k = score.shape[1]
    m = score.shape[2]
    path = np.empty(n, dtype=np.int64)
    path[n - 1] = start_x
    s_cur = start_s
    x_cur = start_x
    for t in range(n - 1, 0, -1):
        best = NEG_INF
        for xp in range(m):
            for sp in range(k):
                if succ[sp, xp, x_cur] != s_cur:
                    continue
                v = score[t - 1, sp, xp] + logA[xp, x_cur]
                if v > best:
                    best = v
        pick_s = -1
        pick_x = -1
        for xp in range(m):
            if pick_x >= 0:
                break
            for sp in range(k):
                if succ[sp, xp, x_cur] != s_cur:
                    continue
                v = score[t - 1, sp, xp] + logA[xp, x_cur]
                if v >= best - TIE_TOL:
                    pick_s = sp
                    pick_x = xp
                    break
        s_cur = pick_s
        x_cur = pick_x
        path[t - 1] = x_cur
    return path


@njit(cache=True)
def aug_pair_marginals(alpha, beta, logA, logb, succ, lognorm):
    """Pairwise posteriors p(x_t, x_{t+1} | evidence) with counters summed out."""
    n, k, m = alpha.shape
    xi = np.zeros((n - 1, m, m))
    for t in range(n - 1):
        for xp in range(m):
            for xc in range(m):
                acc = NEG_INF
                for s in range(k):
                    a = alpha[t, s, xp]
                    if a == NEG_INF:
                        continue
                    tgt = succ[s, xp, xc]
                    if tgt < 0:
                        continue
                    acc = _logaddexp(acc, a + beta[t + 1, tgt, xc])
                if acc > NEG_INF:
                    xi[t, xp, xc] = math.exp(acc + logA[xp, xc] + logb[t + 1, xc] - lognorm)
    return xi


@njit(cache=True)
def aug_ffbs(alpha, logA, succ, final_allowed, uniforms):
    """Backward-sample (counter, state) trajectories; returns state paths.

    final_allowed is a flat boolean mask of length K*M (counter-major) over
    the admissible terminal cells. One uniform per draw per position.
    """
    draws = uniforms.shape[0]
    n, k, m = alpha.shape
    km = k * m
    paths = np.empty((draws, n), dtype=np.int64)
    wfin = np.empty(km)
    for c in range(km):
        wfin[c] = alpha[n - 1, c // m, c % m] if final_allowed[c] else NEG_INF
    w = np.empty(km)
    for d in range(draws):
        cell = _draw_index(wfin, uniforms[d, n - 1])
        s_cur = cell // m
        x_cur = cell % m
        paths[d, n - 1] = x_cur
        for t in range(n - 2, -1, -1):
            for c in range(km):
                sp = c // m
                xp = c % m
                if succ[sp, xp, x_cur] == s_cur:
                    w[c] = alpha[t, sp, xp] + logA[xp, x_cur]
                else:
                    w[c] = NEG_INF
            cell = _draw_index(w, uniforms[d, t])
            s_cur = cell // m
            x_cur = cell % m
            paths[d, t] = x_cur
    return paths
