"""Dynamic programs over the (counter, state) augmented chain.

Decoding, exact count posteriors, and conditional path sampling all run on
the same augmented forward/backward/max-product recursions; the counting
semantics come from :mod:`seghmm.counting` and nothing here re-derives
them. All scores are kept in log space throughout, which is what lets the
recursions run unrescaled at sequence lengths in the hundreds of thousands.

Tie-breaking everywhere: scores within 1e-9 count as tied, and tied
candidates resolve to the lowest hidden-state index first, then the lowest
counter state (count ascending, then the excursion flag), applied from the
sequence end backwards during backtracking. The brute-force oracle applies
the identical rule, so decoded paths agree even on exactly tied instances.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .counting import CountingSpec, CounterSpace, build_counter_space
from .model import HmmModel, emission_log_table

__all__ = [
    "SegmentConstraint",
    "DpTables",
    "KsegSummary",
    "ZeroProbabilityError",
    "kseg_forward",
    "kseg_backward",
    "kseg_viterbi",
    "kseg_prob",
    "kseg_map",
    "kseg_sample",
    "kmax_summary",
]


class ZeroProbabilityError(ValueError):
    """The conditioning event has probability zero under the model."""


@dataclass(frozen=True)
class SegmentConstraint:
    """An event on the final segment count: ==k, <=k, in [k1,k2], or >k."""

    kind: str
    lo: int
    hi: int

    _KINDS = ("exact", "atmost", "range", "greater")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")

    @classmethod
    def exactly(cls, k: int) -> "SegmentConstraint":
        k = int(k)
        if k < 0:
            raise ValueError("exact count must be >= 0")
        return cls("exact", k, k)

    @classmethod
    def at_most(cls, k: int) -> "SegmentConstraint":
        k = int(k)
        if k < 0:
            raise ValueError("count bound must be >= 0")
        return cls("atmost", 0, k)

    @classmethod
    def count_range(cls, k1: int, k2: int) -> "SegmentConstraint":
        k1, k2 = int(k1), int(k2)
        if not 1 <= k1 < k2:
            raise ValueError("range requires 1 <= k1 < k2")
        return cls("range", k1, k2)

    @classmethod
    def greater_than(cls, k: int) -> "SegmentConstraint":
        k = int(k)
        if k < 0:
            raise ValueError("count bound must be >= 0")
        return cls("greater", k + 1, k + 1)

    def describe(self) -> str:
        if self.kind == "exact":
            return f"count == {self.lo}"
        if self.kind == "atmost":
            return f"count <= {self.hi}"
        if self.kind == "range":
            return f"{self.lo} <= count <= {self.hi}"
        return f"count > {self.hi - 1}"

    def satisfied_by(self, count: int) -> bool:
        if self.kind == "greater":
            return count >= self.lo
        return self.lo <= count <= self.hi


@dataclass
class DpTables:
    """Log-space message tables over (position, counter state, hidden state).

    ``alpha[n, s, x]`` is log p(x_n = x, counter_n = s, y_1..y_n) exactly
    (zero log shift is recorded in ``log_shift``); infeasible cells hold
    -inf. ``gamma`` holds the max-product scores. ``delta`` would hold
    packed backpointers, but path recovery re-derives the predecessor set
    from ``gamma`` at each step so tie handling stays tolerance-aware; the
    field stays None.
    """

    space: CounterSpace
    alpha: np.ndarray = None
    beta: np.ndarray = None
    gamma: np.ndarray = None
    delta: np.ndarray = None
    log_shift: float = 0.0

    @property
    def counts(self) -> np.ndarray:
        return self.space.counts


@dataclass
class KsegSummary:
    """Posterior mass and optimal path per count value, plus the overflow entry.

    Entry i < len(k_values) is the exact count ``k_values[i]``; the final
    entry is the event "count > k_max". Infeasible entries carry probability
    0, log joint -inf, and a None path.
    """

    k_values: tuple
    probabilities: np.ndarray
    log_joints: np.ndarray
    paths: tuple
    log_evidence: float
    k_max: int

    def entries(self):
        """Yield (label, probability, log_joint, path) rows; label is an int
        count or the string '>k_max' for the overflow entry."""
        for i, k in enumerate(self.k_values):
            yield k, self.probabilities[i], self.log_joints[i], self.paths[i]
        yield f">{self.k_max}", self.probabilities[-1], self.log_joints[-1], self.paths[-1]


def _prepare(model: HmmModel, obs, spec: CountingSpec, k_max: int):
    logb = emission_log_table(model, obs)
    space = build_counter_space(spec, model.num_states, k_max)
    return logb, space


def _standard_log_evidence(model: HmmModel, logb: np.ndarray) -> float:
    alpha = _kernels.forward_log(model.log_initial(), model.log_transition(), logb)
    return float(logsumexp(alpha[-1]))


def _joints_by_count(space: CounterSpace, final_alpha: np.ndarray) -> dict:
    """Map each count value in the space to log p(count, y)."""
    out = {}
    for k in np.unique(space.counts):
        cells = final_alpha[space.counts == k, :].ravel()
        out[int(k)] = float(logsumexp(cells)) if cells.size else -np.inf
    return out


def kseg_forward(model: HmmModel, obs, spec: CountingSpec, k_max: int):
    """Sum-product pass in the augmented chain.

    Returns (tables, log_joint_by_k) where log_joint_by_k[k] is
    log p(final count = k, y); -inf marks counts no path attains. With an
    absorbing spec the top count value stands for "more than absorb_at".
    """
    logb, space = _prepare(model, obs, spec, k_max)
    alpha = _kernels.aug_forward(
        model.log_initial(), model.log_transition(), logb, space.succ, space.init_idx
    )
    tables = DpTables(space=space, alpha=alpha)
    return tables, _joints_by_count(space, alpha[-1])


def kseg_backward(model: HmmModel, obs, spec: CountingSpec, k_max: int, final_window=None) -> DpTables:
    """Backward pass in the augmented chain.

    Without a final window the last position is initialized to zero
    everywhere, so logsumexp(alpha + beta) at any position recovers the
    total augmented evidence. ``final_window=(lo, hi)`` clamps the final
    count to that interval, which is how conditional marginals are built.
    """
    logb, space = _prepare(model, obs, spec, k_max)
    final_log = np.zeros((space.size, model.num_states))
    if final_window is not None:
        lo, hi = final_window
        final_log[~space.count_mask(lo, hi), :] = -np.inf
    beta = _kernels.aug_backward(model.log_transition(), logb, space.succ, final_log)
    return DpTables(space=space, beta=beta)


def _best_cell(final_score: np.ndarray, cell_mask: np.ndarray):
    """Highest-scoring admissible final cell; near-ties (within the shared
    tolerance) resolve to the lowest state index, then lowest counter."""
    k, m = final_score.shape
    best = -np.inf
    for s in range(k):
        if cell_mask[s]:
            row_max = final_score[s].max()
            if row_max > best:
                best = row_max
    if best == -np.inf:
        return None, best
    for x in range(m):
        for s in range(k):
            if cell_mask[s] and final_score[s, x] >= best - _kernels.TIE_TOL:
                return (s, x), float(best)
    return None, best


def kseg_viterbi(model: HmmModel, obs, spec: CountingSpec, k_max: int):
    """Optimal path for every attainable count value up to k_max.

    Returns (paths, log_joints): log_joints[k] is the best joint score
    log max p(y|x)p(x) over paths with count k (-inf when no path attains
    k), and paths contains an entry only for attainable k. An empty paths
    map means every count in range is infeasible.
    """
    logb, space = _prepare(model, obs, spec, k_max)
    logA = model.log_transition()
    score = _kernels.aug_viterbi(model.log_initial(), logA, logb, space.succ, space.init_idx)
    final = score[-1]
    paths = {}
    log_joints = {}
    for k in np.unique(space.counts):
        k = int(k)
        where, best = _best_cell(final, space.counts == k)
        log_joints[k] = float(best)
        if where is not None and np.isfinite(best):
            paths[k] = _kernels.aug_backtrack(score, logA, space.succ, where[0], where[1])
    if not paths:
        warnings.warn(f"no count value in 0..{k_max} is attainable for this instance")
    return paths, log_joints


def _constraint_plan(spec: CountingSpec, constraint: SegmentConstraint, n: int):
    """Resolve a constraint into (run_spec, k_max, lo, hi) for one DP run.

    Returns None when the event is structurally empty (window below the
    smallest reachable count). Restricted-excursion queries always run on
    an absorbing chain so the run's total mass covers every valid path.
    """
    if spec.absorb_at is not None:
        raise ValueError("constraint queries require a spec without a preset absorb_at")
    lo, hi = constraint.lo, constraint.hi
    if spec.mode == "standard" and constraint.kind in ("exact", "atmost") and hi < 1:
        raise ValueError("standard counting admits no path with count < 1")
    if constraint.kind == "range" and hi > n:
        raise ValueError(f"range upper bound {hi} exceeds sequence length {n}")
    if constraint.kind == "greater":
        run_spec = spec.absorbing(hi - 1)
        return run_spec, hi, hi, hi
    lo = max(lo, spec.min_count())
    if hi < spec.min_count():
        return None
    if spec.mode == "restricted_excursion":
        return spec.absorbing(hi), hi + 1, lo, hi
    return spec, hi, lo, hi


def _event_log_mass(space: CounterSpace, final_alpha: np.ndarray, lo: int, hi: int) -> float:
    cells = final_alpha[space.count_mask(lo, hi), :].ravel()
    return float(logsumexp(cells)) if cells.size else -np.inf


def _log_normalizer(model: HmmModel, logb: np.ndarray, spec: CountingSpec, final_alpha: np.ndarray) -> float:
    # Restricted-excursion chains place zero mass on paths that switch
    # abnormal states mid-trip, so the posterior is normalized by the mass
    # of the remaining (valid) paths rather than by p(y).
    if spec.mode == "restricted_excursion":
        return float(logsumexp(final_alpha.ravel()))
    return _standard_log_evidence(model, logb)


def kseg_prob(model: HmmModel, obs, spec: CountingSpec, constraint: SegmentConstraint) -> float:
    """Posterior probability of the count event, in [0, 1]."""
    obs_arr = model.coerce_observations(obs)
    plan = _constraint_plan(spec, constraint, obs_arr.size)
    if plan is None:
        return 0.0
    run_spec, k_max, lo, hi = plan
    logb, space = _prepare(model, obs_arr, run_spec, k_max)
    alpha = _kernels.aug_forward(
        model.log_initial(), model.log_transition(), logb, space.succ, space.init_idx
    )
    joint = _event_log_mass(space, alpha[-1], lo, hi)
    norm = _log_normalizer(model, logb, spec, alpha[-1])
    if norm == -np.inf:
        raise ValueError("observation sequence has zero likelihood under the model")
    if joint == -np.inf:
        return 0.0
    return float(np.exp(min(joint - norm, 0.0)))


def kseg_map(model: HmmModel, obs, spec: CountingSpec, constraint: SegmentConstraint):
    """MAP path among paths satisfying the constraint.

    Returns (path, log_joint). Raises ZeroProbabilityError when no path
    satisfies the event.
    """
    obs_arr = model.coerce_observations(obs)
    plan = _constraint_plan(spec, constraint, obs_arr.size)
    if plan is None:
        raise ZeroProbabilityError(f"no path can satisfy {constraint.describe()}")
    run_spec, k_max, lo, hi = plan
    logb, space = _prepare(model, obs_arr, run_spec, k_max)
    logA = model.log_transition()
    score = _kernels.aug_viterbi(model.log_initial(), logA, logb, space.succ, space.init_idx)
    where, best = _best_cell(score[-1], space.count_mask(lo, hi))
    if where is None or not np.isfinite(best):
        raise ZeroProbabilityError(f"event {constraint.describe()} has probability zero")
    return _kernels.aug_backtrack(score, logA, space.succ, where[0], where[1]), float(best)


def kseg_sample(model: HmmModel, obs, spec: CountingSpec, constraint: SegmentConstraint,
                n: int, rng: np.random.Generator) -> np.ndarray:
    """Independent exact draws from the path posterior given the count event.

    Returns an (n, N) integer array; every row satisfies the constraint
    exactly. Raises ZeroProbabilityError when the event has no mass.
    """
    if n < 1:
        raise ValueError("number of draws must be >= 1")
    obs_arr = model.coerce_observations(obs)
    plan = _constraint_plan(spec, constraint, obs_arr.size)
    if plan is None:
        raise ZeroProbabilityError(f"no path can satisfy {constraint.describe()}")
    run_spec, k_max, lo, hi = plan
    logb, space = _prepare(model, obs_arr, run_spec, k_max)
    alpha = _kernels.aug_forward(
        model.log_initial(), model.log_transition(), logb, space.succ, space.init_idx
    )
    allowed = np.repeat(space.count_mask(lo, hi), model.num_states)
    mass = _event_log_mass(space, alpha[-1], lo, hi)
    if mass == -np.inf:
        norm = _log_normalizer(model, logb, spec, alpha[-1])
        prob = 0.0 if norm == -np.inf else float(np.exp(mass - norm))
        raise ZeroProbabilityError(
            f"event {constraint.describe()} has probability {prob}; cannot sample"
        )
    uniforms = rng.random((n, obs_arr.size))
    return _kernels.aug_ffbs(alpha, model.log_transition(), space.succ, allowed, uniforms)


def kmax_summary(model: HmmModel, obs, spec: CountingSpec, k_max: int) -> KsegSummary:
    """Posterior probabilities and optimal paths for counts up to k_max,
    plus the absorbing "more than k_max" entry.

    The k_max + 2 - min_count probabilities partition the posterior and the
    unconstrained MAP path always appears among the paths (as the entry for
    its own count, or as the overflow entry).
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if spec.absorb_at is not None:
        raise ValueError("kmax_summary manages its own absorbing threshold")
    obs_arr = model.coerce_observations(obs)
    run_spec = spec.absorbing(k_max)
    logb, space = _prepare(model, obs_arr, run_spec, k_max + 1)
    logpi0 = model.log_initial()
    logA = model.log_transition()
    alpha = _kernels.aug_forward(logpi0, logA, logb, space.succ, space.init_idx)
    score = _kernels.aug_viterbi(logpi0, logA, logb, space.succ, space.init_idx)

    log_evidence = _log_normalizer(model, logb, spec, alpha[-1])
    k_values = tuple(range(spec.min_count(), k_max + 1))
    labels = list(k_values) + [k_max + 1]
    log_joints = np.empty(len(labels))
    probabilities = np.empty(len(labels))
    paths = []
    for i, k in enumerate(labels):
        mask = space.counts == k
        log_joints[i] = _event_log_mass(space, alpha[-1], k, k)
        probabilities[i] = np.exp(log_joints[i] - log_evidence) if log_joints[i] > -np.inf else 0.0
        where, best = _best_cell(score[-1], mask)
        if where is not None and np.isfinite(best):
            paths.append(_kernels.aug_backtrack(score, logA, space.succ, where[0], where[1]))
        else:
            paths.append(None)
    return KsegSummary(
        k_values=k_values,
        probabilities=probabilities,
        log_joints=log_joints,
        paths=tuple(paths),
        log_evidence=log_evidence,
        k_max=k_max,
    )
