"""Riemannian geodesic interpolation in the data space of diffusion models.

The metric at a noisy sample ``x_t`` is ``G = J^T J`` with ``J`` the Jacobian of
the score ``s(x_t, t)``; interpolants are discrete length-minimizing curves under
that metric, computed at an intermediate diffusion time and decoded back with
deterministic DDIM.
"""

import jax

# Metric lengths and gradient checks are asserted at 1e-8..1e-10; float32 is not enough.
jax.config.update("jax_enable_x64", True)

from scoregeo.diffusion import (  # noqa: E402
    ReverseStepParams,
    Schedule,
    ddim_generate,
    ddim_invert,
    ddim_reverse_step,
    ddpm_reverse_step,
    forward_marginal,
    make_schedule,
)
from scoregeo.fields import (  # noqa: E402
    DenoiserNet,
    MixtureDensity,
    MixtureField,
    NetField,
    ScoreField,
)
from scoregeo.baselines import InterpolationRequest, lerp, slerp  # noqa: E402
from scoregeo.geodesic import (  # noqa: E402
    GeodesicConfig,
    LengthReport,
    Path,
    curve_length,
    finite_diff_velocities,
    geodesic_optimize,
    interpolate_end_to_end,
    metric_vector_length,
    variance_regularizer,
)

__version__ = "0.1.0"

__all__ = [
    "DenoiserNet",
    "GeodesicConfig",
    "InterpolationRequest",
    "LengthReport",
    "MixtureDensity",
    "MixtureField",
    "NetField",
    "Path",
    "ReverseStepParams",
    "Schedule",
    "ScoreField",
    "curve_length",
    "ddim_generate",
    "ddim_invert",
    "ddim_reverse_step",
    "ddpm_reverse_step",
    "finite_diff_velocities",
    "forward_marginal",
    "geodesic_optimize",
    "interpolate_end_to_end",
    "lerp",
    "make_schedule",
    "metric_vector_length",
    "slerp",
    "variance_regularizer",
]
