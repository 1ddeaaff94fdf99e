"""Gaussian mixtures pushed through the forward process.

These give exact scores and exact Hessian-vector products of ``log p_t`` and are
the ground truth against which the learned backend and the geodesic solver are
checked.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np

from scoregeo.fields.base import ScoreField

_RESP_FLOOR = 1e-300


@dataclass(frozen=True)
class MixtureDensity:
    """Weights ``(K,)``, means ``(K, D)`` and covariances ``(K, D, D)``."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        cov = np.asarray(self.covariances, dtype=np.float64)
        if cov.ndim == 2:
            cov = cov[None]
        K, D = mu.shape
        if w.shape != (K,) or cov.shape != (K, D, D):
            raise ValueError(f"inconsistent mixture shapes: {w.shape}, {mu.shape}, {cov.shape}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if not np.allclose(cov, np.swapaxes(cov, 1, 2), rtol=0, atol=1e-12):
            raise ValueError("covariances must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariances must be positive definite") from exc
        for name, val in (("weights", w), ("means", mu), ("covariances", cov), ("_chol", chol)):
            object.__setattr__(self, name, val)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @functools.cached_property
    def precisions(self) -> np.ndarray:
        return np.linalg.inv(self.covariances)

    @functools.cached_property
    def log_dets(self) -> np.ndarray:
        return 2.0 * np.log(np.diagonal(self._chol, axis1=1, axis2=2)).sum(axis=1)

    def params(self):
        """Arrays consumed by the jitted kernels below.

        Plain numpy arrays, so a cached copy never holds a value created
        inside someone else's trace.
        """
        return (
            np.log(np.maximum(self.weights, _RESP_FLOOR)),
            self.means,
            self.precisions,
            self.log_dets,
        )

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.einsum("nij,nj->ni", self._chol[comp], z)

    def to_config(self) -> dict[str, str]:
        out = {
            "K": str(self.n_components),
            "D": str(self.dim),
            "weights": ", ".join(repr(float(w)) for w in self.weights),
        }
        for k in range(self.n_components):
            out[f"mean.{k}"] = ", ".join(repr(float(m)) for m in self.means[k])
            out[f"cov.{k}"] = ", ".join(repr(float(c)) for c in self.covariances[k].ravel())
        return out

    @classmethod
    def from_config(cls, cfg: dict[str, str]) -> "MixtureDensity":
        def floats(s):
            return [float(tok) for tok in s.replace(",", " ").split()]

        weights = np.array(floats(cfg["weights"]))
        K = len(weights)
        means = np.array([floats(cfg[f"mean.{k}"]) for k in range(K)])
        D = means.shape[1]
        covs = []
        for k in range(K):
            if f"cov.{k}" in cfg:
                covs.append(np.array(floats(cfg[f"cov.{k}"])).reshape(D, D))
            else:
                covs.append(float(cfg.get(f"var.{k}", cfg.get("var", "1.0"))) * np.eye(D))
        weights = weights / weights.sum()
        return cls(weights, means, np.array(covs))


def mixture_diffuse(m: MixtureDensity, t: int, schedule) -> MixtureDensity:
    """Exact law of ``x_t`` when ``x_0 ~ m``."""
    ab = schedule.alpha_bar(t)
    if ab == 1.0:
        return m
    eye = np.eye(m.dim)
    return MixtureDensity(
        m.weights,
        math.sqrt(ab) * m.means,
        ab * m.covariances + (1.0 - ab) * eye,
    )


def _component_terms(params, x):
    log_w, means, precs, log_dets = params
    diff = x[..., None, :] - means  # (..., K, D)
    comp_scores = -jnp.einsum("kij,...kj->...ki", precs, diff)
    maha = -jnp.einsum("...ki,...ki->...k", diff, comp_scores)
    D = means.shape[-1]
    log_joint = log_w - 0.5 * (maha + log_dets + D * math.log(2 * math.pi))
    return log_joint, comp_scores


@jax.jit
def _log_density(params, x):
    log_joint, _ = _component_terms(params, x)
    return jax.scipy.special.logsumexp(log_joint, axis=-1)


def _responsibilities(log_joint):
    r = jax.nn.softmax(log_joint, axis=-1)
    return jnp.maximum(r, _RESP_FLOOR)


@jax.jit
def _score(params, x):
    log_joint, comp_scores = _component_terms(params, x)
    r = _responsibilities(log_joint)
    return jnp.einsum("...k,...ki->...i", r, comp_scores)


@jax.jit
def _hvp(params, x, v):
    # H = sum_k r_k (-P_k) + sum_k r_k s_k s_k^T - s s^T
    precs = params[2]
    log_joint, comp_scores = _component_terms(params, x)
    r = _responsibilities(log_joint)
    s = jnp.einsum("...k,...ki->...i", r, comp_scores)
    prec_v = jnp.einsum("kij,...j->...ki", precs, v)
    sk_v = jnp.einsum("...ki,...i->...k", comp_scores, v)
    s_v = jnp.einsum("...i,...i->...", s, v)
    return (
        -jnp.einsum("...k,...ki->...i", r, prec_v)
        + jnp.einsum("...k,...ki->...i", r * sk_v, comp_scores)
        - s * s_v[..., None]
    )


def mixture_log_density(m_t: MixtureDensity, x):
    return _log_density(m_t.params(), jnp.asarray(x, dtype=jnp.float64))


def mixture_score(m_t: MixtureDensity, x):
    """``grad_x log sum_k w_k N(x; mu_k, Sigma_k)``."""
    return _score(m_t.params(), jnp.asarray(x, dtype=jnp.float64))


def mixture_jvp(m_t: MixtureDensity, x, v):
    """Closed-form Hessian-vector product of ``log m_t`` at ``x``."""
    x = jnp.asarray(x, dtype=jnp.float64)
    v = jnp.broadcast_to(jnp.asarray(v, dtype=jnp.float64), x.shape)
    return _hvp(m_t.params(), x, v)


def mixture_hessian(m_t: MixtureDensity, x) -> np.ndarray:
    """Dense Hessian of ``log m_t`` at a single point, assembled term by term."""
    x = np.asarray(x, dtype=np.float64)
    log_joint, comp_scores = _component_terms(m_t.params(), jnp.asarray(x))
    r = np.asarray(jax.nn.softmax(log_joint))
    sk = np.asarray(comp_scores)
    s = r @ sk
    H = -np.einsum("k,kij->ij", r, m_t.precisions)
    H += np.einsum("k,ki,kj->ij", r, sk, sk)
    return H - np.outer(s, s)


class MixtureField(ScoreField):
    """Exact score field of a diffused Gaussian mixture."""

    min_time = 0

    def __init__(self, mixture: MixtureDensity, schedule=None):
        self.mixture = mixture
        self.schedule = schedule
        self.dim = mixture.dim
        self._cache: dict[int, tuple] = {}

    def at(self, t: int) -> MixtureDensity:
        """The diffused mixture at step ``t`` (the data mixture itself if no schedule)."""
        if self.schedule is None:
            return self.mixture
        t = self.check_time(t)
        return mixture_diffuse(self.mixture, t, self.schedule)

    def _params(self, t):
        key = int(t)
        if key not in self._cache:
            self._cache[key] = self.at(key).params()
        return self._cache[key]

    def score(self, x, t: int):
        return _score(self._params(t), jnp.asarray(x, dtype=jnp.float64))

    def jvp(self, x, t: int, v):
        x = jnp.asarray(x, dtype=jnp.float64)
        v = jnp.broadcast_to(jnp.asarray(v, dtype=jnp.float64), x.shape)
        return _hvp(self._params(t), x, v)

    def log_density(self, x, t: int):
        return _log_density(self._params(t), jnp.asarray(x, dtype=jnp.float64))

    def eps(self, x, t: int):
        if self.schedule is None:
            raise ValueError("eps needs a schedule")
        return super().eps(x, t)
