"""A small fully connected noise predictor and its score view.

The network predicts ``eps(x_t, t)``; the score is the algebraic view
``s = -eps / sqrt(1 - abar_t)``, and its Jacobian-vector product is taken by
forward-mode differentiation through the network.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np

from scoregeo.errors import NumericalError
from scoregeo.fields.base import ScoreField, autodiff_jvp
from scoregeo.optim import adam_init, adam_update, cosine_lr

log = logging.getLogger(__name__)

MAGIC = b"SGEONET\x00"
FORMAT_VERSION = 1
ACTIVATIONS = ("silu", "tanh", "softplus")


def time_embedding(t, dim: int):
    """Sinusoidal embedding of (possibly fractional, possibly batched) step ``t``."""
    if dim == 0:
        return jnp.zeros(jnp.shape(t) + (0,))
    half = dim // 2
    freqs = jnp.exp(-math.log(10000.0) * jnp.arange(half) / max(half, 1))
    ang = jnp.asarray(t, dtype=jnp.float64)[..., None] * freqs
    return jnp.concatenate([jnp.sin(ang), jnp.cos(ang)], axis=-1)


def _act(name):
    return {"silu": jax.nn.silu, "tanh": jnp.tanh, "softplus": jax.nn.softplus}[name]


@partial(jax.jit, static_argnames=("activation", "emb_dim"))
def _apply(params, x, t, activation, emb_dim):
    x = jnp.asarray(x, dtype=jnp.float64)
    t = jnp.broadcast_to(jnp.asarray(t, dtype=jnp.float64), x.shape[:-1])
    h = jnp.concatenate([x, time_embedding(t, emb_dim)], axis=-1)
    act = _act(activation)
    for W, b in params[:-1]:
        h = act(h @ W + b)
    W, b = params[-1]
    return h @ W + b


@dataclass
class DenoiserNet:
    """MLP ``eps(x, t)`` on ``[x, embed(t)]`` with output dimension ``dim``."""

    dim: int
    hidden: tuple[int, ...] = (128, 128, 128)
    activation: str = "silu"
    emb_dim: int = 16
    params: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.emb_dim % 2:
            raise ValueError("emb_dim must be even")
        self.hidden = tuple(int(h) for h in self.hidden)

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.dim + self.emb_dim, *self.hidden, self.dim)

    @classmethod
    def init(cls, dim, hidden=(128, 128, 128), activation="silu", emb_dim=16, seed=0):
        net = cls(dim, tuple(hidden), activation, emb_dim)
        rng = np.random.default_rng(seed)
        widths = net.widths
        params = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            W = rng.standard_normal((fan_in, fan_out)) * math.sqrt(1.0 / fan_in)
            params.append((jnp.asarray(W), jnp.zeros(fan_out)))
        net.params = params
        return net

    def __call__(self, x, t):
        """Predicted noise at ``(x, t)``."""
        return _apply(self.params, x, t, self.activation, self.emb_dim)

    def flat_weights(self) -> np.ndarray:
        return np.concatenate([np.concatenate([np.ravel(W), np.ravel(b)]) for W, b in self.params])

    def save(self, path):
        widths = self.widths
        header = MAGIC + struct.pack(
            f"<IIIII{len(widths)}I",
            FORMAT_VERSION,
            self.dim,
            len(widths),
            self.emb_dim,
            ACTIVATIONS.index(self.activation),
            *widths,
        )
        Path(path).write_bytes(header + self.flat_weights().astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "DenoiserNet":
        raw = Path(path).read_bytes()
        if not raw.startswith(MAGIC):
            raise ValueError(f"{path}: not a denoiser weight file")
        off = len(MAGIC)
        version, dim, n_widths, emb_dim, act = struct.unpack_from("<IIIII", raw, off)
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        off += 20
        widths = struct.unpack_from(f"<{n_widths}I", raw, off)
        off += 4 * n_widths
        if widths[0] != dim + emb_dim or widths[-1] != dim:
            raise ValueError(f"{path}: header widths inconsistent with D={dim}")
        flat = np.frombuffer(raw, dtype="<f8", offset=off)
        params, i = [], 0
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            W = flat[i : i + fan_in * fan_out].reshape(fan_in, fan_out)
            i += fan_in * fan_out
            b = flat[i : i + fan_out]
            i += fan_out
            params.append((jnp.asarray(W), jnp.asarray(b)))
        if i != flat.size:
            raise ValueError(f"{path}: weight payload has {flat.size} values, expected {i}")
        return cls(dim, tuple(widths[1:-1]), ACTIVATIONS[act], emb_dim, params)


def net_score(net: DenoiserNet, x, t: int, schedule):
    """Score implied by the noise predictor; undefined at ``t = 0``."""
    if t < 1:
        raise ValueError("net_score needs t >= 1 (sqrt(1 - abar_0) = 0)")
    ab = schedule.alpha_bar(t)
    return -net(x, t) / math.sqrt(1.0 - ab)


def net_jvp(net: DenoiserNet, x, t: int, v, schedule):
    """Forward-mode directional derivative of :func:`net_score` along ``v``."""
    if t < 1:
        raise ValueError("net_jvp needs t >= 1")
    scale = -1.0 / math.sqrt(1.0 - schedule.alpha_bar(t))
    return autodiff_jvp(lambda y: scale * net(y, t), x, v)


class NetField(ScoreField):
    """Score field backed by a trained :class:`DenoiserNet`."""

    min_time = 1

    def __init__(self, net: DenoiserNet, schedule):
        self.net = net
        self.schedule = schedule
        self.dim = net.dim

    def score(self, x, t: int):
        t = self.check_time(t)
        return net_score(self.net, x, t, self.schedule)

    def jvp(self, x, t: int, v):
        t = self.check_time(t)
        x = jnp.asarray(x, dtype=jnp.float64)
        v = jnp.broadcast_to(jnp.asarray(v, dtype=jnp.float64), x.shape)
        return net_jvp(self.net, x, t, v, self.schedule)

    def eps(self, x, t: int):
        t = self.check_time(t)
        return self.net(x, t)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    steps_per_epoch: int = 250
    batch_size: int = 256
    lr: float = 2e-3
    seed: int = 0


def _make_epoch(activation, emb_dim, steps, batch_size, T):
    def loss_fn(params, x0, t, eps, abar):
        ab = abar[t - 1][:, None]
        xt = jnp.sqrt(ab) * x0 + jnp.sqrt(1.0 - ab) * eps
        pred = _apply(params, xt, t, activation, emb_dim)
        return jnp.mean(jnp.sum((eps - pred) ** 2, axis=-1))

    grad_fn = jax.value_and_grad(loss_fn)

    @jax.jit
    def run_epoch(params, opt_state, key, data, abar, lrs):
        def body(carry, lr):
            params, opt_state, key = carry
            key, k_idx, k_t, k_eps = jax.random.split(key, 4)
            idx = jax.random.randint(k_idx, (batch_size,), 0, data.shape[0])
            t = jax.random.randint(k_t, (batch_size,), 1, T + 1)
            eps = jax.random.normal(k_eps, (batch_size, data.shape[1]), dtype=jnp.float64)
            loss, grads = grad_fn(params, data[idx], t, eps, abar)
            params, opt_state = adam_update(grads, opt_state, params, lr)
            return (params, opt_state, key), loss

        (params, opt_state, key), losses = jax.lax.scan(body, (params, opt_state, key), lrs)
        return params, opt_state, key, losses

    return run_epoch


def train_denoiser(net: DenoiserNet, data, schedule, config: TrainConfig = TrainConfig()):
    """Minimize ``E || eps - eps_theta(x_t, t) ||^2`` with ``t ~ U{1..T}``.

    Returns ``(trained_net, epoch_losses)``; the input net is left untouched.
    Raises :class:`NumericalError` if the loss stops being finite.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] != net.dim:
        raise ValueError(f"training data must be a nonempty (n, {net.dim}) array")
    if config.epochs == 0:
        return replace(net, params=list(net.params)), []
    run_epoch = _make_epoch(net.activation, net.emb_dim, config.steps_per_epoch, config.batch_size, schedule.T)
    params = net.params
    opt_state = adam_init(params)
    key = jax.random.PRNGKey(config.seed)
    abar = jnp.asarray(schedule.alphas_bar)
    data_j = jnp.asarray(data)
    total = config.epochs * config.steps_per_epoch
    epoch_losses = []
    for epoch in range(config.epochs):
        ks = np.arange(epoch * config.steps_per_epoch, (epoch + 1) * config.steps_per_epoch)
        lrs = jnp.asarray([cosine_lr(config.lr, int(k), total) for k in ks])
        params, opt_state, key, losses = run_epoch(params, opt_state, key, data_j, abar, lrs)
        mean_loss = float(jnp.mean(losses))
        if not np.isfinite(mean_loss):
            raise NumericalError(f"training diverged at epoch {epoch}", index=epoch)
        epoch_losses.append(mean_loss)
        log.info("epoch %d loss %.6f", epoch, mean_loss)
    return replace(net, params=list(params)), epoch_losses
