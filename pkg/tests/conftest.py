import jax.numpy as jnp
import numpy as np
import pytest
from scipy.stats import multivariate_normal

import scoregeo  # noqa: F401  (enables float64 in JAX before any test traces)
from scoregeo import MixtureDensity, MixtureField, make_schedule
from scoregeo.fields import ScoreField


class ZeroField(ScoreField):
    """Score identically zero; the DDIM chains reduce to pure rescalings."""

    min_time = 0

    def __init__(self, dim, schedule):
        self.dim = dim
        self.schedule = schedule

    def score(self, x, t):
        return jnp.zeros_like(jnp.asarray(x, dtype=jnp.float64))

    def jvp(self, x, t, v):
        return jnp.zeros_like(jnp.asarray(v, dtype=jnp.float64))


class LinearField(ScoreField):
    """``s(x) = A x + c`` with an arbitrary (possibly non-symmetric) ``A``."""

    min_time = 0

    def __init__(self, A, c=None):
        self.A = jnp.asarray(A, dtype=jnp.float64)
        self.c = jnp.zeros(self.A.shape[0]) if c is None else jnp.asarray(c, dtype=jnp.float64)
        self.dim = self.A.shape[0]

    def score(self, x, t):
        return jnp.asarray(x) @ self.A.T + self.c

    def jvp(self, x, t, v):
        v = jnp.broadcast_to(jnp.asarray(v, dtype=jnp.float64), jnp.shape(x))
        return v @ self.A.T


def gaussian(mean, cov, schedule=None):
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    cov = np.asarray(cov, dtype=np.float64).reshape(len(mean), len(mean))
    return MixtureField(MixtureDensity(np.array([1.0]), mean[None], cov[None]), schedule)


def bimodal_2d():
    return MixtureDensity(
        np.array([0.4, 0.6]),
        np.array([[-1.5, 0.2], [1.2, -0.4]]),
        np.array([[[0.3, 0.1], [0.1, 0.5]], [[0.8, -0.2], [-0.2, 0.4]]]),
    )


def density_hessian_oracle(m: MixtureDensity, x):
    """``grad^2 log p`` from raw densities: ``H = p''/p - p' p'^T / p^2``."""
    p, grad, hess = 0.0, np.zeros(m.dim), np.zeros((m.dim, m.dim))
    for w, mu, cov in zip(m.weights, m.means, m.covariances):
        P = np.linalg.inv(cov)
        n = w * multivariate_normal(mu, cov).pdf(x)
        g = -P @ (x - mu)
        p += n
        grad += n * g
        hess += n * (np.outer(g, g) - P)
    return hess / p - np.outer(grad, grad) / p**2


def random_mixture(rng, K, D):
    A = rng.standard_normal((K, D, D))
    covs = A @ np.transpose(A, (0, 2, 1)) / D + 0.3 * np.eye(D)
    w = rng.uniform(0.2, 1.0, K)
    return MixtureDensity(w / w.sum(), rng.standard_normal((K, D)) * 1.5, covs)


@pytest.fixture
def sched50():
    return make_schedule(50)


@pytest.fixture
def sched1000():
    return make_schedule(1000)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
