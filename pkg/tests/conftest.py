import numpy as np
import pytest

import seghmm as sh


def make_ref_model():
    """Two-state Gaussian reference instance used across the suite."""
    return sh.HmmModel(
        initial=[0.5, 0.5],
        transition=[[0.9, 0.1], [0.1, 0.9]],
        emissions=(sh.GaussianEmission(-1.0, 1.0), sh.GaussianEmission(1.0, 1.0)),
    )


REF_OBS = np.array([-1.2, -0.8, 1.1, 0.9])


def make_sim_model(self_transition=0.96):
    """Three-level simulation config: means (-2, -1, 1), sigma 0.9, sticky chain."""
    m = 3
    off = (1.0 - self_transition) / (m - 1)
    transition = np.full((m, m), off)
    np.fill_diagonal(transition, self_transition)
    return sh.HmmModel(
        initial=np.full(m, 1.0 / m),
        transition=transition,
        emissions=(
            sh.GaussianEmission(-2.0, 0.81),
            sh.GaussianEmission(-1.0, 0.81),
            sh.GaussianEmission(1.0, 0.81),
        ),
    )


def random_model(rng, num_states, family, vocab=3):
    pi0 = rng.dirichlet(np.ones(num_states))
    transition = np.vstack([rng.dirichlet(np.ones(num_states)) for _ in range(num_states)])
    if family == "gaussian":
        emissions = tuple(
            sh.GaussianEmission(float(rng.normal(0.0, 2.0)), float(rng.uniform(0.3, 2.0)))
            for _ in range(num_states)
        )
    else:
        emissions = tuple(
            sh.CategoricalEmission(rng.dirichlet(np.ones(vocab))) for _ in range(num_states)
        )
    return sh.HmmModel(pi0, transition, emissions)


def random_specs(rng, num_states):
    """One spec of each counting mode, with random structure where it applies."""
    mu = rng.integers(0, 2, num_states)
    link = rng.integers(0, 2, (num_states, num_states))
    np.fill_diagonal(link, 0)
    null_size = int(rng.integers(1, num_states))
    null = set(rng.choice(num_states, size=null_size, replace=False).tolist())
    return (
        sh.CountingSpec.standard(),
        sh.CountingSpec.generalized(mu, link),
        sh.CountingSpec.excursion(null),
        sh.CountingSpec.restricted_excursion(null),
    )


def random_instance(rng, family=None):
    num_states = int(rng.integers(2, 4))
    length = int(rng.integers(4, 9))
    if family is None:
        family = "gaussian" if rng.random() < 0.5 else "categorical"
    model = random_model(rng, num_states, family)
    _, obs = sh.simulate(model, length, rng)
    return model, obs


@pytest.fixture
def ref_model():
    return make_ref_model()


@pytest.fixture
def ref_obs():
    return REF_OBS.copy()


@pytest.fixture
def sim_model():
    return make_sim_model()


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so per-test timings stay honest."""
    model = make_ref_model()
    spec = sh.CountingSpec.standard()
    sh.forward(model, REF_OBS)
    sh.viterbi(model, REF_OBS)
    sh.ffbs_sample(model, REF_OBS, np.random.default_rng(0))
    sh.kseg_forward(model, REF_OBS, spec, 4)
    sh.kseg_viterbi(model, REF_OBS, spec, 4)
    sh.kseg_backward(model, REF_OBS, spec, 4)
    sh.kseg_sample(model, REF_OBS, spec, sh.SegmentConstraint.exactly(2), 2, np.random.default_rng(0))
    sh.constrained_marginals(model, REF_OBS, spec, sh.SegmentConstraint.at_most(3))
