"""Parameter estimation under segment-count constraints.

Two routes: point estimation by EM with the count event folded into the
E-step (prospective fitting), and Bayesian sampling that alternates
constrained path draws with exact conjugate parameter draws. Retrospective
helpers evaluate count queries across an existing set of parameter samples
without refitting anything.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy import stats

from . import _kernels
from .counting import CountingSpec
from .hmm import EmOptions, _emission_mstep, _normalize_rows
from .kseg import (
    SegmentConstraint,
    ZeroProbabilityError,
    _constraint_plan,
    _prepare,
    kmax_summary,
    kseg_map,
    kseg_prob,
    kseg_sample,
)
from .model import CategoricalEmission, GaussianEmission, HmmModel, emission_log_table

__all__ = [
    "ConstrainedFitResult",
    "ParamSampleSet",
    "ConjugatePrior",
    "constrained_marginals",
    "constrained_em",
    "gibbs_fit",
    "retrospective_prob",
    "retrospective_map",
    "retrospective_sample",
    "reconstruction_error",
    "match_labels",
]


@dataclass
class ConstrainedFitResult:
    """EM output under a count constraint.

    ``trace[i]`` is log p(count event, y | theta) after i update steps;
    it is non-decreasing up to floating-point noise and the returned model
    attains the final entry.
    """

    model: HmmModel
    trace: np.ndarray
    final_paths: object = None


@dataclass
class ParamSampleSet:
    """Parameter samples with joint scores log p(y|theta) + log p(theta).

    ``paths`` holds the constrained path drawn alongside each stored sample
    when the set came from the Gibbs sampler.
    """

    models: tuple
    scores: np.ndarray
    paths: tuple = None

    def __post_init__(self):
        self.models = tuple(self.models)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if len(self.models) < 1 or self.scores.size != len(self.models):
            raise ValueError("need at least one sample with one score each")

    def __len__(self) -> int:
        return len(self.models)


@dataclass(frozen=True)
class ConjugatePrior:
    """Weakly informative conjugate priors for the Gibbs sampler.

    Symmetric Dirichlet over the initial distribution and each transition
    row; Normal-Inverse-Gamma per Gaussian emission (mean | variance ~
    N(nig_mean, variance / nig_kappa), variance ~ InvGamma(nig_shape,
    nig_scale)); symmetric Dirichlet over each categorical emission row.
    """

    dirichlet_initial: float = 1.0
    dirichlet_transition: float = 1.0
    nig_mean: float = 0.0
    nig_kappa: float = 0.01
    nig_shape: float = 1.0
    nig_scale: float = 1.0
    dirichlet_emission: float = 1.0


def _constrained_estep(model: HmmModel, values: np.ndarray, spec: CountingSpec,
                       constraint: SegmentConstraint):
    """Augmented forward-backward with the final count clamped to the event.

    Returns (log p(event, y), site posteriors (N, M), pair posteriors
    (N-1, M, M)).
    """
    plan = _constraint_plan(spec, constraint, values.size)
    if plan is None:
        raise ZeroProbabilityError(f"no path can satisfy {constraint.describe()}")
    run_spec, k_max, lo, hi = plan
    logb, space = _prepare(model, values, run_spec, k_max)
    logpi0 = model.log_initial()
    logA = model.log_transition()
    alpha = _kernels.aug_forward(logpi0, logA, logb, space.succ, space.init_idx)
    final_log = np.zeros((space.size, model.num_states))
    final_log[~space.count_mask(lo, hi), :] = -np.inf
    beta = _kernels.aug_backward(logA, logb, space.succ, final_log)
    log_mass = float(logsumexp((alpha[-1] + final_log).ravel()))
    if not np.isfinite(log_mass):
        raise ZeroProbabilityError(
            f"event {constraint.describe()} has probability zero under the current model; "
            "try a different count bound or starting point"
        )
    with np.errstate(invalid="ignore"):
        site = np.exp(logsumexp(alpha + beta, axis=1) - log_mass)
    if values.size > 1:
        pair = _kernels.aug_pair_marginals(alpha, beta, logA, logb, space.succ, log_mass)
    else:
        pair = np.zeros((0, model.num_states, model.num_states))
    return log_mass, site, pair


def constrained_marginals(model: HmmModel, obs, spec: CountingSpec, constraint: SegmentConstraint):
    """Site and pairwise state posteriors conditional on the count event.

    Returns (site, pair): site rows sum to one and pair tables marginalize
    back to the site tables. Raises ZeroProbabilityError when the event has
    no mass.
    """
    values = model.coerce_observations(obs)
    _, site, pair = _constrained_estep(model, values, spec, constraint)
    return site, pair


def constrained_em(init: HmmModel, obs, spec: CountingSpec, constraint: SegmentConstraint,
                   opts: EmOptions = None) -> ConstrainedFitResult:
    """EM for the joint p(count event, y | theta); exact or at-most events.

    The E-step posteriors condition on the event, the M-step keeps the
    usual weighted-count form, and the trace logs the event's joint mass at
    each iterate. Initializing from an unconstrained fit therefore can only
    improve on the retrospective value of the same event.
    """
    if constraint.kind not in ("exact", "atmost"):
        raise ValueError("constrained EM supports exact and at-most count events")
    opts = opts or EmOptions()
    values = init.coerce_observations(obs)
    model = init
    trace = []
    for it in range(opts.max_iter + 1):
        log_mass, site, pair = _constrained_estep(model, values, spec, constraint)
        trace.append(log_mass)
        if it == opts.max_iter:
            break
        if it > 0 and abs(trace[-1] - trace[-2]) <= opts.tol * max(1.0, abs(trace[-2])):
            break
        trans_post = pair.sum(axis=0) if pair.size else np.zeros_like(model.transition)
        initial = site[0] / site[0].sum()
        transition = _normalize_rows(trans_post, model.transition)
        emissions = _emission_mstep(model, site, values, opts)
        model = HmmModel(initial=initial, transition=transition, emissions=emissions)
    summary = kmax_summary(model, values, spec, max(constraint.hi, 1))
    return ConstrainedFitResult(model=model, trace=np.asarray(trace), final_paths=summary)


def _sample_parameters(model: HmmModel, path: np.ndarray, values: np.ndarray,
                       prior: ConjugatePrior, rng: np.random.Generator) -> HmmModel:
    m = model.num_states
    initial = rng.dirichlet(np.full(m, prior.dirichlet_initial) + np.bincount([path[0]], minlength=m))
    trans_counts = np.zeros((m, m))
    np.add.at(trans_counts, (path[:-1], path[1:]), 1.0)
    transition = np.vstack([
        rng.dirichlet(np.full(m, prior.dirichlet_transition) + trans_counts[i]) for i in range(m)
    ])
    emissions = []
    for state, old in enumerate(model.emissions):
        mask = path == state
        if isinstance(old, GaussianEmission):
            n_m = int(mask.sum())
            data = values[mask]
            kappa_n = prior.nig_kappa + n_m
            shape_n = prior.nig_shape + 0.5 * n_m
            if n_m:
                ybar = float(data.mean())
                ss = float(((data - ybar) ** 2).sum())
            else:
                ybar, ss = 0.0, 0.0
            mean_n = (prior.nig_kappa * prior.nig_mean + n_m * ybar) / kappa_n
            scale_n = prior.nig_scale + 0.5 * ss + (
                prior.nig_kappa * n_m * (ybar - prior.nig_mean) ** 2 / (2.0 * kappa_n)
            )
            var = scale_n / rng.gamma(shape_n)
            mean = rng.normal(mean_n, np.sqrt(var / kappa_n))
            emissions.append(GaussianEmission(float(mean), float(var)))
        else:
            counts = np.bincount(values[mask], minlength=old.vocab_size)
            emissions.append(CategoricalEmission(rng.dirichlet(prior.dirichlet_emission + counts)))
    return HmmModel(initial=initial, transition=transition, emissions=tuple(emissions))


def _log_prior(model: HmmModel, prior: ConjugatePrior) -> float:
    m = model.num_states
    total = float(stats.dirichlet.logpdf(_interior(model.initial), np.full(m, prior.dirichlet_initial)))
    for i in range(m):
        total += float(stats.dirichlet.logpdf(_interior(model.transition[i]), np.full(m, prior.dirichlet_transition)))
    for dist in model.emissions:
        if isinstance(dist, GaussianEmission):
            total += float(stats.invgamma.logpdf(dist.variance, prior.nig_shape, scale=prior.nig_scale))
            total += float(stats.norm.logpdf(dist.mean, prior.nig_mean, np.sqrt(dist.variance / prior.nig_kappa)))
        else:
            total += float(stats.dirichlet.logpdf(
                _interior(dist.probs), np.full(dist.vocab_size, prior.dirichlet_emission)
            ))
    return total


def _interior(probs: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    # scipy's dirichlet rejects exact zeros; nudge onto the open simplex.
    p = np.clip(probs, eps, None)
    return p / p.sum()


def gibbs_fit(prior: ConjugatePrior, init: HmmModel, obs, spec: CountingSpec,
              constraint: SegmentConstraint, iters: int, rng: np.random.Generator,
              burn_in: float = 0.2, thin: int = 1, max_rejects: int = 20) -> ParamSampleSet:
    """Constrained Gibbs sampler over (path, parameters).

    Each sweep draws a path from the exact conditional given the count
    event, then parameters from their conjugate conditionals given that
    path. If a freshly drawn parameter value kills the event's probability
    the parameter draw is rejected and retried (reported via a warning);
    after ``max_rejects`` consecutive failures the sweep aborts.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if not 0.0 <= burn_in < 1.0:
        raise ValueError("burn_in must be a fraction in [0, 1)")
    values = init.coerce_observations(obs)
    model = init
    keep_from = int(burn_in * iters)
    models, scores, paths = [], [], []
    paths_last = None
    for sweep in range(iters):
        path = None
        for attempt in range(max_rejects + 1):
            try:
                path = kseg_sample(model, values, spec, constraint, 1, rng)[0]
                break
            except ZeroProbabilityError:
                if sweep == 0 or attempt == max_rejects:
                    raise RuntimeError(
                        f"constraint {constraint.describe()} unreachable after "
                        f"{attempt + 1} parameter draws at sweep {sweep}"
                    )
                warnings.warn("rejected a parameter draw that zeroed the count event")
                model = _sample_parameters(model, paths_last, values, prior, rng)
        paths_last = path
        model = _sample_parameters(model, path, values, prior, rng)
        if sweep >= keep_from and (sweep - keep_from) % thin == 0:
            logb = emission_log_table(model, values)
            loglik = float(logsumexp(_kernels.forward_log(
                model.log_initial(), model.log_transition(), logb)[-1]))
            models.append(model)
            scores.append(loglik + _log_prior(model, prior))
            paths.append(path)
    return ParamSampleSet(models=tuple(models), scores=np.asarray(scores), paths=tuple(paths))


def retrospective_prob(samples: ParamSampleSet, obs, spec: CountingSpec,
                       constraint: SegmentConstraint) -> float:
    """Posterior probability of the count event averaged over parameter
    samples, each term computed exactly by the augmented forward pass."""
    total = 0.0
    for model in samples.models:
        total += kseg_prob(model, obs, spec, constraint)
    return total / len(samples)


def retrospective_map(samples: ParamSampleSet, obs, spec: CountingSpec,
                      constraint: SegmentConstraint) -> np.ndarray:
    """Constrained MAP path at the highest-scoring parameter sample.

    Score ties resolve to the lowest sample index.
    """
    best = int(np.argmax(samples.scores))
    path, _ = kseg_map(samples.models[best], obs, spec, constraint)
    return path


def retrospective_sample(samples: ParamSampleSet, obs, spec: CountingSpec,
                         constraint: SegmentConstraint, n: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Draws from the count-conditioned path posterior mixed over samples.

    Each draw picks one parameter sample uniformly at random and then draws
    a path from the count-conditioned posterior at that sample, so the
    returned (n, N) rows marginalize the parameter uncertainty the sample
    set represents. Every row satisfies the constraint exactly.
    """
    if n < 1:
        raise ValueError("number of draws must be >= 1")
    values = samples.models[0].coerce_observations(obs)
    which = rng.integers(0, len(samples), size=n)
    out = np.empty((n, values.size), dtype=np.int64)
    for t in np.unique(which):
        rows = np.flatnonzero(which == t)
        out[rows] = kseg_sample(samples.models[int(t)], values, spec, constraint,
                                rows.size, rng)
    return out


def reconstruction_error(model: HmmModel, path, obs) -> float:
    """Mean squared error between the observations and the piecewise-constant
    signal of emission means selected by the path. Gaussian models only."""
    if not model.is_gaussian:
        raise ValueError("reconstruction error requires Gaussian emissions")
    values = model.coerce_observations(obs)
    states = np.asarray(path, dtype=np.int64)
    if states.shape != values.shape:
        raise ValueError("path and observations must have equal length")
    means = np.array([dist.mean for dist in model.emissions])
    return float(np.mean((values - means[states]) ** 2))


def match_labels(estimated_means, true_means) -> tuple:
    """Permutation aligning estimated states to true states.

    Returns perm such that estimated_means[perm[j]] pairs with
    true_means[j], minimizing the summed absolute mean error.
    """
    est = np.asarray(estimated_means, dtype=np.float64)
    true = np.asarray(true_means, dtype=np.float64)
    if est.size != true.size:
        raise ValueError("mean vectors must have equal length")
    best_perm, best_cost = None, np.inf
    for perm in itertools.permutations(range(est.size)):
        cost = float(np.abs(est[list(perm)] - true).sum())
        if cost < best_cost:
            best_perm, best_cost = perm, cost
    return best_perm
