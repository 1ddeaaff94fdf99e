"""Small synthetic and image datasets in the flat ``(n, D)`` sample layout."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from scoregeo.fields.mixture import MixtureDensity


def two_moons_mixture(per_arc: int = 24, noise: float = 0.1) -> MixtureDensity:
    """Two interleaved half circles as an equal-weight isotropic Gaussian mixture.

    The arcs follow the usual layout (upper arc centred at the origin, lower arc
    shifted by ``(1, -0.5)``), recentred so the data mean is near zero. Using a
    mixture keeps the data density exact, which makes log-density diagnostics
    of a trained model meaningful.
    """
    if per_arc < 2 or noise <= 0:
        raise ValueError("need per_arc >= 2 and noise > 0")
    theta = np.linspace(0.0, np.pi, per_arc)
    upper = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    lower = np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=1)
    means = np.concatenate([upper, lower]) - np.array([0.5, 0.25])
    K = len(means)
    return MixtureDensity(np.full(K, 1.0 / K), means, np.repeat((noise**2 * np.eye(2))[None], K, axis=0))


def sample_mixture(mixture: MixtureDensity, n: int, seed: int) -> np.ndarray:
    if n < 0:
        raise ValueError("sample count must be >= 0")
    if n == 0:
        return np.empty((0, mixture.dim))
    return mixture.sample(n, np.random.default_rng(seed))


def _scale_pixels(images: np.ndarray, vmax: float) -> np.ndarray:
    return images.astype(np.float64) / vmax * 2.0 - 1.0


def load_digits_flat() -> tuple[np.ndarray, tuple[int, int]]:
    """The 8x8 scikit-learn digits, flattened and scaled to ``[-1, 1]``."""
    from sklearn.datasets import load_digits

    images = load_digits().images
    return _scale_pixels(images.reshape(len(images), -1), 16.0), (8, 8)


def load_image_dir(directory, shape: tuple[int, int]) -> np.ndarray:
    """Every PNG/JPEG in ``directory`` as grayscale, resized to ``shape`` (H, W), scaled to ``[-1, 1]``."""
    from PIL import Image

    paths = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not paths:
        raise ValueError(f"no images found in {directory}")
    h, w = shape
    rows = []
    for p in paths:
        with Image.open(p) as im:
            rows.append(np.asarray(im.convert("L").resize((w, h), Image.BILINEAR), dtype=np.float64).ravel())
    return _scale_pixels(np.stack(rows), 255.0)
