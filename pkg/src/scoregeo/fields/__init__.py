"""Score-field backends: exact diffused Gaussian mixtures and a trained network."""

from scoregeo.fields.base import ScoreField, autodiff_jvp
from scoregeo.fields.mixture import (
    MixtureDensity,
    MixtureField,
    mixture_diffuse,
    mixture_hessian,
    mixture_jvp,
    mixture_log_density,
    mixture_score,
)
from scoregeo.fields.network import (
    DenoiserNet,
    NetField,
    TrainConfig,
    net_jvp,
    net_score,
    train_denoiser,
)

__all__ = [
    "DenoiserNet",
    "MixtureDensity",
    "MixtureField",
    "NetField",
    "ScoreField",
    "TrainConfig",
    "autodiff_jvp",
    "mixture_diffuse",
    "mixture_hessian",
    "mixture_jvp",
    "mixture_log_density",
    "mixture_score",
    "net_jvp",
    "net_score",
    "train_denoiser",
]
