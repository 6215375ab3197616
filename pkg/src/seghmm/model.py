"""Hidden Markov model representation: emissions, parameters, simulation.

The model is immutable after construction and safe to share across
concurrent inference calls; every operation here is a pure function of its
arguments plus an explicitly passed random generator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GaussianEmission",
    "CategoricalEmission",
    "HmmModel",
    "log_emission",
    "simulate",
    "emission_log_table",
]

_PROB_ATOL = 1e-12


def _as_prob_vector(values, name: str) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D probability vector")
    if np.any(v < 0.0):
        raise ValueError(f"{name} has negative entries")
    if abs(v.sum() - 1.0) > _PROB_ATOL:
        raise ValueError(f"{name} must sum to 1 within {_PROB_ATOL} (got {v.sum()!r})")
    return v


@dataclass(frozen=True)
class GaussianEmission:
    """Scalar Gaussian emission density with a fixed mean and variance."""

    mean: float
    variance: float

    def __post_init__(self):
        if not (self.variance > 0.0) or not math.isfinite(self.variance):
            raise ValueError(f"Gaussian variance must be positive, got {self.variance!r}")
        if not math.isfinite(self.mean):
            raise ValueError("Gaussian mean must be finite")

    def log_density(self, y: float) -> float:
        y = float(y)
        return -0.5 * (math.log(2.0 * math.pi * self.variance) + (y - self.mean) ** 2 / self.variance)

    def log_density_table(self, obs: np.ndarray) -> np.ndarray:
        return -0.5 * (math.log(2.0 * math.pi * self.variance) + (obs - self.mean) ** 2 / self.variance)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(self.mean, math.sqrt(self.variance), size=size)


@dataclass(frozen=True)
class CategoricalEmission:
    """Emission distribution over a finite symbol vocabulary 0..V-1."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _as_prob_vector(self.probs, "categorical probs"))

    @property
    def vocab_size(self) -> int:
        return self.probs.size

    def log_density(self, y: int) -> float:
        y = int(y)
        if not 0 <= y < self.vocab_size:
            raise ValueError(f"symbol {y} outside vocabulary of size {self.vocab_size}")
        with np.errstate(divide="ignore"):
            return float(np.log(self.probs[y]))

    def log_density_table(self, obs: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.probs)[obs]

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self.vocab_size, size=size, p=self.probs)


@dataclass(frozen=True)
class HmmModel:
    """Immutable HMM: initial distribution, transition matrix, emissions.

    All states share one emission family (all Gaussian or all Categorical
    over the same vocabulary). Validation happens once at construction;
    thereafter the model may be used concurrently without synchronization.
    """

    initial: np.ndarray
    transition: np.ndarray
    emissions: tuple

    def __post_init__(self):
        initial = _as_prob_vector(self.initial, "initial distribution")
        m = initial.size
        transition = np.asarray(self.transition, dtype=np.float64)
        if transition.shape != (m, m):
            raise ValueError(f"transition matrix must be {m}x{m}, got {transition.shape}")
        for i in range(m):
            _as_prob_vector(transition[i], f"transition row {i}")
        emissions = tuple(self.emissions)
        if len(emissions) != m:
            raise ValueError(f"expected {m} emission distributions, got {len(emissions)}")
        kinds = {type(e) for e in emissions}
        if len(kinds) != 1:
            raise ValueError("all emissions must share one family")
        if isinstance(emissions[0], CategoricalEmission):
            sizes = {e.vocab_size for e in emissions}
            if len(sizes) != 1:
                raise ValueError("categorical emissions must share one vocabulary size")
        elif not isinstance(emissions[0], GaussianEmission):
            raise ValueError(f"unsupported emission type {type(emissions[0]).__name__}")
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "emissions", emissions)

    @property
    def num_states(self) -> int:
        return self.initial.size

    @property
    def is_gaussian(self) -> bool:
        return isinstance(self.emissions[0], GaussianEmission)

    @property
    def vocab_size(self) -> int:
        if self.is_gaussian:
            raise ValueError("Gaussian models have no symbol vocabulary")
        return self.emissions[0].vocab_size

    def log_initial(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.initial)

    def log_transition(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.transition)

    def coerce_observations(self, obs) -> np.ndarray:
        """Validate a raw observation sequence against this model's domain.

        Returns a float array for Gaussian models and an int array of symbol
        indices for categorical models. Raises ValueError on domain mismatch.
        """
        arr = np.asarray(obs)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("observation sequence must be non-empty and 1-D")
        if self.is_gaussian:
            out = arr.astype(np.float64)
            if not np.all(np.isfinite(out)):
                raise ValueError("Gaussian observations must be finite reals")
            return out
        out = arr.astype(np.float64)
        rounded = np.rint(out)
        if np.any(np.abs(out - rounded) > 0.0):
            raise ValueError("categorical observations must be integer symbol indices")
        symbols = rounded.astype(np.int64)
        if symbols.min() < 0 or symbols.max() >= self.vocab_size:
            raise ValueError(
                f"symbol indices must lie in [0, {self.vocab_size}); got range "
                f"[{symbols.min()}, {symbols.max()}]"
            )
        return symbols


def log_emission(model: HmmModel, state: int, obs) -> float:
    """Log-density of one observation under one state's emission.

    May be -inf for a categorical symbol with zero probability; raises
    ValueError for observations outside the model's domain.
    """
    if not 0 <= state < model.num_states:
        raise ValueError(f"state {state} outside [0, {model.num_states})")
    if model.is_gaussian:
        y = np.asarray(obs)
        if y.ndim != 0 or not np.isfinite(float(y)):
            raise ValueError("expected a finite scalar observation")
        return model.emissions[state].log_density(float(y))
    y = np.asarray(obs)
    if y.ndim != 0 or float(y) != int(y):
        raise ValueError("expected an integer symbol index")
    return model.emissions[state].log_density(int(y))


def emission_log_table(model: HmmModel, obs) -> np.ndarray:
    """Per-position, per-state emission log densities, shape (N, M)."""
    values = model.coerce_observations(obs)
    n = values.size
    table = np.empty((n, model.num_states), dtype=np.float64)
    for m, dist in enumerate(model.emissions):
        table[:, m] = dist.log_density_table(values)
    return table


def simulate(model: HmmModel, length: int, rng: np.random.Generator):
    """Draw a hidden path and observation sequence from the model.

    Returns (states, observations); deterministic for a fixed generator
    state, so a fixed seed reproduces the output bit for bit.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    states = np.empty(length, dtype=np.int64)
    cdf0 = np.cumsum(model.initial)
    states[0] = np.searchsorted(cdf0, rng.random(), side="right")
    row_cdf = np.cumsum(model.transition, axis=1)
    for n in range(1, length):
        states[n] = np.searchsorted(row_cdf[states[n - 1]], rng.random(), side="right")
    np.clip(states, 0, model.num_states - 1, out=states)

    if model.is_gaussian:
        obs = np.empty(length, dtype=np.float64)
    else:
        obs = np.empty(length, dtype=np.int64)
    for m, dist in enumerate(model.emissions):
        mask = states == m
        count = int(mask.sum())
        if count:
            obs[mask] = dist.draw(rng, count)
    return states, obs
