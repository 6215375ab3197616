"""Exact inference by exhaustive path enumeration on small instances.

The oracle scores every one of the M^N hidden paths directly from the
model's factorization (initial term, transition products, emission
products) and answers count queries by filtering on the fold-based segment
counter. It deliberately shares nothing with the dynamic programs except
the counting semantics, and it stays naive on purpose: no pruning, no
recursion, a hard cap on the number of paths.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .counting import FORBIDDEN, CountingSpec, count_segments, counter_init, counter_step
from .kseg import SegmentConstraint, ZeroProbabilityError
from .model import HmmModel, emission_log_table

__all__ = [
    "ExactPosterior",
    "PathDistribution",
    "enumerate_posterior",
    "oracle_counts",
    "oracle_event_log_joint",
    "oracle_event_prob",
    "oracle_map",
    "oracle_conditional",
    "dump_scored_paths",
]

PATH_CAP = 1_000_000


@dataclass
class ExactPosterior:
    """Every path's joint log score plus the total evidence.

    ``paths`` is an (M^N, N) array in lexicographic order; ``log_joint[i]``
    is log p(y | paths[i]) + log p(paths[i]).
    """

    model: HmmModel
    obs: np.ndarray
    paths: np.ndarray
    log_joint: np.ndarray
    log_evidence: float
    _counts: dict = field(default_factory=dict, repr=False)


@dataclass
class PathDistribution:
    """A finite distribution over hidden paths."""

    paths: np.ndarray
    probabilities: np.ndarray

    def as_dict(self) -> dict:
        return {tuple(int(v) for v in p): float(q) for p, q in zip(self.paths, self.probabilities)}


def enumerate_posterior(model: HmmModel, obs, cap: int = PATH_CAP) -> ExactPosterior:
    """Score all M^N paths directly; refuses instances beyond the cap."""
    values = model.coerce_observations(obs)
    n = values.size
    m = model.num_states
    total = m ** n
    if total > cap:
        raise ValueError(f"{m}^{n} = {total} paths exceeds the cap of {cap}")

    radix = m ** np.arange(n - 1, -1, -1, dtype=np.int64)
    paths = ((np.arange(total, dtype=np.int64)[:, None] // radix[None, :]) % m).astype(np.int16)

    logb = emission_log_table(model, values)
    logpi0 = model.log_initial()
    logA = model.log_transition()
    scores = logpi0[paths[:, 0]].astype(np.float64)
    for t in range(1, n):
        scores += logA[paths[:, t - 1], paths[:, t]]
    for t in range(n):
        scores += logb[t, paths[:, t]]
    return ExactPosterior(
        model=model,
        obs=values,
        paths=paths,
        log_joint=scores,
        log_evidence=float(logsumexp(scores)),
    )


def oracle_counts(post: ExactPosterior, spec: CountingSpec) -> np.ndarray:
    """Segment count per enumerated path; -1 marks forbidden paths."""
    cached = post._counts.get(spec)
    if cached is not None:
        return cached
    counts = np.empty(post.paths.shape[0], dtype=np.int64)
    for i, path in enumerate(post.paths):
        c = count_segments(path, spec)
        counts[i] = -1 if c is FORBIDDEN else c
    post._counts[spec] = counts
    return counts


def _satisfying_mask(post: ExactPosterior, spec: CountingSpec, constraint: SegmentConstraint):
    counts = oracle_counts(post, spec)
    valid = counts >= 0
    if constraint.kind == "greater":
        sat = valid & (counts >= constraint.lo)
    else:
        sat = valid & (counts >= constraint.lo) & (counts <= constraint.hi)
    return sat, valid


def oracle_event_log_joint(post: ExactPosterior, spec: CountingSpec,
                           constraint: SegmentConstraint) -> float:
    """log sum of joint scores over paths satisfying the event (-inf if none)."""
    sat, _ = _satisfying_mask(post, spec, constraint)
    if not sat.any():
        return -np.inf
    return float(logsumexp(post.log_joint[sat]))


def oracle_event_prob(post: ExactPosterior, spec: CountingSpec,
                      constraint: SegmentConstraint) -> float:
    """Posterior probability of the event by literal summation.

    Normalized over the paths the counting chain admits, which is all of
    them except in restricted-excursion mode.
    """
    sat, valid = _satisfying_mask(post, spec, constraint)
    if not sat.any():
        return 0.0
    denom = float(logsumexp(post.log_joint[valid]))
    return float(np.exp(logsumexp(post.log_joint[sat]) - denom))


def _augmented_key(path: np.ndarray, spec: CountingSpec):
    """Backtrack preference order: the (state, counter) sequence read from
    the end, compared ascending. Matches the DP tie-break exactly."""
    cur = counter_init(spec, int(path[0]))
    traj = [cur]
    for t in range(1, path.size):
        cur = counter_step(spec, cur, int(path[t - 1]), int(path[t]))
        traj.append(cur)
    return tuple((int(path[t]), traj[t].count, traj[t].excursion) for t in range(path.size - 1, -1, -1))


# Same knob the dynamic programs use for calling two scores a tie.
TIE_TOL = 1e-9


def oracle_map(post: ExactPosterior, spec: CountingSpec, constraint: SegmentConstraint):
    """Exact argmax of the joint over paths satisfying the event.

    Scores within TIE_TOL of the maximum count as tied and resolve by the
    rule the DP backtrack applies: lowest state index first, then lowest
    counter value, scanned from the final position backwards. Raises
    ZeroProbabilityError when no path satisfies the event.
    """
    sat, _ = _satisfying_mask(post, spec, constraint)
    if not sat.any():
        raise ZeroProbabilityError(f"no path satisfies {constraint.describe()}")
    idx = np.flatnonzero(sat)
    scores = post.log_joint[idx]
    best = scores.max()
    winners = idx[scores >= best - TIE_TOL]
    if winners.size > 1:
        winners = sorted(winners, key=lambda i: _augmented_key(post.paths[i], spec))
    path = post.paths[winners[0]].astype(np.int64)
    return path, float(best)


def oracle_conditional(post: ExactPosterior, spec: CountingSpec,
                       constraint: SegmentConstraint) -> PathDistribution:
    """Exact conditional path distribution given the event."""
    sat, _ = _satisfying_mask(post, spec, constraint)
    if not sat.any():
        raise ZeroProbabilityError(f"event {constraint.describe()} has probability zero")
    scores = post.log_joint[sat]
    probs = np.exp(scores - logsumexp(scores))
    return PathDistribution(paths=post.paths[sat].astype(np.int64), probabilities=probs)


def dump_scored_paths(post: ExactPosterior, fileobj) -> None:
    """Write the full scored path table as CSV for debugging."""
    writer = csv.writer(fileobj)
    writer.writerow([f"x{t}" for t in range(post.paths.shape[1])] + ["log_joint"])
    for path, score in zip(post.paths, post.log_joint):
        writer.writerow([*(int(v) for v in path), repr(float(score))])
