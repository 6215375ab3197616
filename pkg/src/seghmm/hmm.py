"""Standard unconstrained HMM recursions: filtering, decoding, sampling, EM.

These are the plain M-state algorithms. The augmented-chain machinery in
:mod:`seghmm.kseg` never calls into the recursions here (and vice versa),
which keeps reduction identities between the two families meaningful
checks rather than tautologies.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .model import (
    CategoricalEmission,
    GaussianEmission,
    HmmModel,
    emission_log_table,
)

__all__ = [
    "EmOptions",
    "forward",
    "viterbi",
    "ffbs_sample",
    "em_fit",
    "gaussian_quantile_init",
]


@dataclass(frozen=True)
class EmOptions:
    """Convergence and robustness knobs for EM.

    ``fixed_emissions`` lists states whose emission distribution is held
    fixed through every M-step (the other parameters still update).
    ``tie_variances`` pools one shared variance across the updating
    Gaussian states, for data generated with a common noise scale.
    """

    max_iter: int = 500
    tol: float = 1e-6
    variance_floor: float = 1e-6
    fixed_emissions: tuple = ()
    tie_variances: bool = False


def forward(model: HmmModel, obs):
    """Filtering pass. Returns (log_likelihood, alpha) with alpha[n, x]
    equal to log p(x_n = x, y_1..y_n)."""
    logb = emission_log_table(model, obs)
    alpha = _kernels.forward_log(model.log_initial(), model.log_transition(), logb)
    return float(logsumexp(alpha[-1])), alpha


def viterbi(model: HmmModel, obs):
    """Most probable hidden path and its joint log score log p(y|x)p(x).

    Score ties (within the shared 1e-9 tolerance) resolve to the lowest
    state index, applied from the sequence end backwards.
    """
    logb = emission_log_table(model, obs)
    logA = model.log_transition()
    score = _kernels.viterbi_scores(model.log_initial(), logA, logb)
    final = score[-1]
    best = float(final.max())
    if not np.isfinite(best):
        raise ValueError("observation sequence has zero likelihood under the model")
    start = int(np.flatnonzero(final >= best - _kernels.TIE_TOL)[0])
    path = _kernels.viterbi_backtrack(score, logA, start)
    return path, best


def ffbs_sample(model: HmmModel, obs, rng: np.random.Generator, size: int = None):
    """Exact posterior path draw(s) via forward filtering, backward sampling.

    With ``size=None`` returns one path of shape (N,); otherwise a
    (size, N) array of independent draws sharing one forward pass. Fixed
    generator state reproduces the draws exactly.
    """
    logb = emission_log_table(model, obs)
    alpha = _kernels.forward_log(model.log_initial(), model.log_transition(), logb)
    if not np.isfinite(logsumexp(alpha[-1])):
        raise ValueError("observation sequence has zero likelihood under the model")
    draws = 1 if size is None else int(size)
    if draws < 1:
        raise ValueError("size must be >= 1")
    uniforms = rng.random((draws, logb.shape[0]))
    paths = _kernels.ffbs_standard(alpha, model.log_transition(), uniforms)
    return paths[0] if size is None else paths


def _estep(model: HmmModel, logb: np.ndarray):
    """Forward-backward posteriors: returns (loglik, site posteriors (N, M),
    summed transition posteriors (M, M))."""
    logpi0 = model.log_initial()
    logA = model.log_transition()
    alpha = _kernels.forward_log(logpi0, logA, logb)
    beta = _kernels.backward_log(logA, logb)
    loglik = float(logsumexp(alpha[-1]))
    if not np.isfinite(loglik):
        raise ValueError("observation sequence has zero likelihood under the model")
    gamma = np.exp(alpha + beta - loglik)
    if logb.shape[0] > 1:
        with np.errstate(invalid="ignore"):
            log_xi = (
                alpha[:-1, :, None]
                + logA[None, :, :]
                + (logb[1:, :] + beta[1:, :])[:, None, :]
                - loglik
            )
        xi_sum = np.exp(log_xi, where=np.isfinite(log_xi), out=np.zeros_like(log_xi)).sum(axis=0)
    else:
        xi_sum = np.zeros((model.num_states, model.num_states))
    return loglik, gamma, xi_sum


def _normalize_rows(counts: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    out = np.array(fallback, dtype=np.float64, copy=True)
    sums = counts.sum(axis=1)
    for i in range(counts.shape[0]):
        if sums[i] > 0.0:
            out[i] = counts[i] / sums[i]
    return out


def _emission_mstep(model: HmmModel, gamma: np.ndarray, values: np.ndarray, opts: EmOptions):
    """Weighted ML emission updates; categorical rows get add-one smoothing
    so no symbol probability collapses to zero."""
    fixed = set(opts.fixed_emissions)
    emissions = []
    for m, old in enumerate(model.emissions):
        if m in fixed:
            emissions.append(old)
            continue
        w = gamma[:, m]
        tot = float(w.sum())
        if isinstance(old, GaussianEmission):
            if tot <= 0.0:
                emissions.append(old)
                continue
            mean = float(np.dot(w, values) / tot)
            var = float(np.dot(w, (values - mean) ** 2) / tot)
            emissions.append(GaussianEmission(mean, max(var, opts.variance_floor)))
        else:
            counts = np.bincount(values, weights=w, minlength=old.vocab_size)
            emissions.append(CategoricalEmission((counts + 1.0) / (tot + old.vocab_size)))
    if opts.tie_variances and model.is_gaussian:
        free = [m for m in range(len(emissions)) if m not in fixed]
        num = sum(gamma[:, m].sum() * emissions[m].variance for m in free)
        den = sum(float(gamma[:, m].sum()) for m in free)
        if den > 0.0:
            shared = max(float(num / den), opts.variance_floor)
            for m in free:
                emissions[m] = GaussianEmission(emissions[m].mean, shared)
    return tuple(emissions)


def _mstep(model: HmmModel, x1_post: np.ndarray, trans_post: np.ndarray,
           gamma: np.ndarray, values: np.ndarray, opts: EmOptions) -> HmmModel:
    initial = x1_post / x1_post.sum()
    transition = _normalize_rows(trans_post, model.transition)
    emissions = _emission_mstep(model, gamma, values, opts)
    return HmmModel(initial=initial, transition=transition, emissions=emissions)


def em_fit(init: HmmModel, obs, opts: EmOptions = None):
    """Maximum-likelihood fit by EM from the given starting point.

    Returns (model, trace) where trace[i] is the log likelihood of the
    model after i update steps; the returned model attains trace[-1]. The
    trace is non-decreasing up to floating-point noise. Emission variances
    are floored rather than allowed to collapse.
    """
    opts = opts or EmOptions()
    values = init.coerce_observations(obs)
    logb = emission_log_table(init, values)
    model = init
    trace = []
    for it in range(opts.max_iter + 1):
        loglik, gamma, xi_sum = _estep(model, logb)
        trace.append(loglik)
        if it == opts.max_iter:
            break
        if it > 0 and abs(trace[-1] - trace[-2]) <= opts.tol * max(1.0, abs(trace[-2])):
            break
        model = _mstep(model, gamma[0], xi_sum, gamma, values, opts)
        logb = emission_log_table(model, values)
    return model, np.asarray(trace)


def gaussian_quantile_init(obs, num_states: int, self_transition: float = 0.9) -> HmmModel:
    """Reproducible Gaussian starting point: state means at evenly spaced
    data quantiles, shared data variance, uniform start, sticky diagonal."""
    values = np.asarray(obs, dtype=np.float64)
    if num_states < 1:
        raise ValueError("num_states must be >= 1")
    qs = (np.arange(num_states) + 1.0) / (num_states + 1.0)
    means = np.quantile(values, qs)
    var = max(float(np.var(values)), 1e-6)
    emissions = tuple(GaussianEmission(float(mu), var) for mu in means)
    initial = np.full(num_states, 1.0 / num_states)
    if num_states == 1:
        transition = np.ones((1, 1))
    else:
        off = (1.0 - self_transition) / (num_states - 1)
        transition = np.full((num_states, num_states), off)
        np.fill_diagonal(transition, self_transition)
    return HmmModel(initial=initial, transition=transition, emissions=emissions)
