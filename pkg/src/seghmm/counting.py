"""Deterministic auxiliary-counter kernels for segment counting.

A counting mode decides which events along a hidden path increment an
integer counter:

* ``standard``   -- every change of state starts a new counted segment and
  the first segment always counts, so the counter starts at 1.
* ``generalized`` -- a binary vector ``mu`` marks which initial states count
  and a binary matrix ``C`` (zero diagonal) marks which transitions count;
  the counter starts at ``mu[x1]``.
* ``excursion``  -- states are split into a null set and its complement;
  the counter increments each time the path leaves the null set and later
  returns to it (one completed round trip).
* ``restricted_excursion`` -- as ``excursion`` but a round trip must stay in
  a single non-null state; switching between distinct non-null states
  mid-trip is forbidden outright (the step has probability zero).

An optional absorbing threshold ``absorb_at = k`` freezes the counter once
it reaches ``k + 1``, which is how "more than k" events are priced without
enlarging the counter range.

Every operation here is pure; the dynamic programs and the brute-force
oracle both consume these functions, so the counting semantics live in
exactly one place.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

__all__ = [
    "FORBIDDEN",
    "CounterState",
    "CountingSpec",
    "counter_init",
    "counter_step",
    "count_segments",
    "counter_state_space",
    "CounterSpace",
    "build_counter_space",
]

_MODES = ("standard", "generalized", "excursion", "restricted_excursion")


class _Forbidden:
    """Sentinel for a zero-probability counter transition (not an error)."""

    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "FORBIDDEN"

    def __bool__(self):
        return False


FORBIDDEN = _Forbidden()


class CounterState(NamedTuple):
    """Counter value plus the excursion phase flag (0 outside, 1 inside)."""

    count: int
    excursion: int = 0


@dataclass(frozen=True)
class CountingSpec:
    """Which path events increment the counter, plus an optional absorber.

    Use the classmethod constructors; fields are stored as hashable tuples
    so specs can serve as cache keys.
    """

    mode: str
    mu: tuple = None
    C: tuple = None
    null_states: frozenset = None
    absorb_at: int = None

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown counting mode {self.mode!r}")
        if self.absorb_at is not None and self.absorb_at < 0:
            raise ValueError("absorb_at must be >= 0")
        if self.mode == "generalized":
            if self.mu is None or self.C is None:
                raise ValueError("generalized mode requires mu and C")
            mu = tuple(int(v) for v in self.mu)
            c = tuple(tuple(int(v) for v in row) for row in self.C)
            if any(v not in (0, 1) for v in mu):
                raise ValueError("mu must be binary")
            if len(c) != len(mu) or any(len(row) != len(mu) for row in c):
                raise ValueError("C must be square and match mu's length")
            if any(v not in (0, 1) for row in c for v in row):
                raise ValueError("C must be binary")
            if any(c[i][i] != 0 for i in range(len(c))):
                raise ValueError("C must have a zero diagonal")
            object.__setattr__(self, "mu", mu)
            object.__setattr__(self, "C", c)
        if self.mode in ("excursion", "restricted_excursion"):
            if not self.null_states:
                raise ValueError("excursion modes require a non-empty null set")
            object.__setattr__(self, "null_states", frozenset(int(s) for s in self.null_states))

    @classmethod
    def standard(cls, absorb_at: int = None) -> "CountingSpec":
        return cls(mode="standard", absorb_at=absorb_at)

    @classmethod
    def generalized(cls, mu, C, absorb_at: int = None) -> "CountingSpec":
        return cls(mode="generalized", mu=tuple(mu), C=tuple(tuple(row) for row in C), absorb_at=absorb_at)

    @classmethod
    def excursion(cls, null_states, absorb_at: int = None) -> "CountingSpec":
        return cls(mode="excursion", null_states=frozenset(null_states), absorb_at=absorb_at)

    @classmethod
    def restricted_excursion(cls, null_states, absorb_at: int = None) -> "CountingSpec":
        return cls(mode="restricted_excursion", null_states=frozenset(null_states), absorb_at=absorb_at)

    def absorbing(self, k: int) -> "CountingSpec":
        """This spec with the counter absorbing once it reaches ``k + 1``."""
        return replace(self, absorb_at=int(k))

    @property
    def has_excursions(self) -> bool:
        return self.mode in ("excursion", "restricted_excursion")

    def min_count(self) -> int:
        """Smallest counter value reachable at the first position."""
        if self.mode == "standard":
            return 1
        if self.mode == "generalized":
            return 1 if all(self.mu) else 0
        return 0

    def validate_for(self, num_states: int) -> None:
        """Check the spec is usable with an M-state model."""
        if self.mode == "generalized":
            if len(self.mu) != num_states:
                raise ValueError(f"mu has length {len(self.mu)}, model has {num_states} states")
        elif self.has_excursions:
            if not self.null_states or not self.null_states < set(range(num_states)):
                raise ValueError("null set must be a non-empty proper subset of the states")


def counter_init(spec: CountingSpec, x1: int) -> CounterState:
    """Counter state generated by the first hidden state."""
    if spec.mode == "standard":
        return CounterState(1, 0)
    if spec.mode == "generalized":
        return CounterState(spec.mu[x1], 0)
    return CounterState(0, 0)


def counter_step(spec: CountingSpec, prev: CounterState, x_prev: int, x_cur: int, k_max: int = None):
    """Deterministic successor of ``prev`` along the transition x_prev -> x_cur.

    Returns the next CounterState, or FORBIDDEN when the step has zero
    probability: a within-trip switch between distinct non-null states in
    restricted_excursion mode, or a count that would exceed ``k_max`` with
    no absorbing threshold set.
    """
    if spec.mode == "standard":
        increment = x_prev != x_cur
        e_new = 0
    elif spec.mode == "generalized":
        increment = bool(spec.C[x_prev][x_cur])
        e_new = 0
    else:
        prev_null = x_prev in spec.null_states
        cur_null = x_cur in spec.null_states
        if prev_null and not cur_null:
            e_new = 1
        elif not prev_null and cur_null:
            e_new = 0
        else:
            if spec.mode == "restricted_excursion" and prev.excursion == 1 and x_prev != x_cur:
                return FORBIDDEN
            e_new = prev.excursion
        increment = prev.excursion == 1 and e_new == 0

    if spec.absorb_at is not None:
        count = prev.count + 1 if (increment and prev.count <= spec.absorb_at) else prev.count
    else:
        count = prev.count + int(increment)
        if k_max is not None and count > k_max:
            return FORBIDDEN
    return CounterState(count, e_new)


def count_segments(path, spec: CountingSpec):
    """Counted segments along a full path: fold of counter_init then counter_step.

    Returns the final counter value, or FORBIDDEN if any step along the path
    is forbidden (restricted_excursion only).
    """
    states = np.asarray(path, dtype=np.int64)
    if states.size == 0:
        raise ValueError("path must be non-empty")
    cur = counter_init(spec, int(states[0]))
    for n in range(1, states.size):
        cur = counter_step(spec, cur, int(states[n - 1]), int(states[n]))
        if cur is FORBIDDEN:
            return FORBIDDEN
    return cur.count


def counter_state_space(spec: CountingSpec, k_max: int):
    """All counter states reachable under the spec with counts capped at k_max.

    Absorbing specs span counts up to ``absorb_at + 1`` (k_max must admit
    that); excursion modes pair each count with both phase-flag values.
    The returned order (count ascending, then flag) is the canonical order
    used for tie-breaking in the dynamic programs.
    """
    lo = spec.min_count()
    if spec.absorb_at is not None:
        hi = spec.absorb_at + 1
        if k_max < hi:
            raise ValueError(f"k_max={k_max} too small for absorbing threshold {spec.absorb_at}")
    else:
        hi = k_max
    if hi < lo:
        raise ValueError(f"k_max={k_max} below the minimum reachable count {lo}")
    if spec.has_excursions:
        return [CounterState(s, e) for s in range(lo, hi + 1) for e in (0, 1)]
    return [CounterState(s, 0) for s in range(lo, hi + 1)]


@dataclass(frozen=True)
class CounterSpace:
    """Indexed counter state space plus transition tables for the DP kernels.

    ``succ[s, i, j]`` is the index of the successor of counter state ``s``
    along the hidden transition i -> j, or -1 if that step is forbidden.
    ``init_idx[i]`` is the index of the counter state generated by starting
    in hidden state ``i``, or -1 when that start is infeasible under the
    count cap.
    """

    spec: CountingSpec
    k_max: int
    states: tuple
    counts: np.ndarray
    succ: np.ndarray
    init_idx: np.ndarray

    @property
    def size(self) -> int:
        return len(self.states)

    def count_mask(self, lo: int, hi: int) -> np.ndarray:
        """Boolean mask over counter states whose count lies in [lo, hi]."""
        return (self.counts >= lo) & (self.counts <= hi)


def build_counter_space(spec: CountingSpec, num_states: int, k_max: int) -> CounterSpace:
    spec.validate_for(num_states)
    states = counter_state_space(spec, k_max)
    index = {state: i for i, state in enumerate(states)}
    size = len(states)
    counts = np.array([s.count for s in states], dtype=np.int64)

    succ = np.full((size, num_states, num_states), -1, dtype=np.int32)
    for s_idx, state in enumerate(states):
        for i in range(num_states):
            for j in range(num_states):
                nxt = counter_step(spec, state, i, j, k_max=k_max)
                if nxt is not FORBIDDEN:
                    target = index.get(nxt)
                    if target is not None:
                        succ[s_idx, i, j] = target

    init_idx = np.full(num_states, -1, dtype=np.int32)
    for i in range(num_states):
        start = counter_init(spec, i)
        target = index.get(start)
        if target is not None:
            init_idx[i] = target

    return CounterSpace(
        spec=spec,
        k_max=k_max,
        states=tuple(states),
        counts=counts,
        succ=succ,
        init_idx=init_idx,
    )
