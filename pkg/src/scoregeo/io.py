"""Flat dotted-key config files, sample/path CSVs and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import re
from pathlib import Path

import numpy as np

from scoregeo.errors import ConfigError

_LINE = re.compile(r"^([A-Za-z_][\w.-]*)\s*=\s*(.*?)\s*$")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped.

    Keys are dotted paths such as ``schedule.T``. Repeated keys are an error so
    a typo cannot silently shadow an earlier setting.
    """
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if m is None:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = m.groups()
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config_text(path.read_text(), str(path))


def format_config(cfg: dict[str, str]) -> str:
    """Canonical text form: sorted keys, one per line. Parsing it gives ``cfg`` back."""
    return "".join(f"{k} = {cfg[k]}\n" for k in sorted(cfg))


def config_hash(cfg: dict[str, str]) -> str:
    return hashlib.sha256(format_config(cfg).encode()).hexdigest()


def section(cfg: dict[str, str], prefix: str) -> dict[str, str]:
    """Keys under ``prefix.`` with the prefix stripped."""
    p = prefix + "."
    return {k[len(p) :]: v for k, v in cfg.items() if k.startswith(p)}


def floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"expected a list of numbers, got {text!r}") from exc


def sample_header(dim: int) -> list[str]:
    return ["t", "s_index"] + [f"x_{i}" for i in range(1, dim + 1)]


def write_samples(path, x, t: int = 0) -> None:
    """Rows ``t, s_index, x_1..x_D``; floats use ``repr`` so a reread is exact."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("samples must be a 2-D array")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(sample_header(x.shape[1]))
        for i, row in enumerate(x):
            w.writerow([t, i, *(repr(float(v)) for v in row)])


def read_samples(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_samples`; returns ``(x, t)``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"sample file {path} does not exist")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["t", "s_index"]:
        raise ConfigError(f"{path}: missing 't,s_index,x_1..' header")
    dim = len(rows[0]) - 2
    body = rows[1:]
    if not body:
        return np.empty((0, dim)), np.empty(0, dtype=int)
    arr = np.array(body, dtype=np.float64)
    return arr[:, 2:], arr[:, 0].astype(int)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions() -> dict[str, str]:
    import jax
    import scipy

    from scoregeo import __version__

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "jax": jax.__version__,
        "scoregeo": __version__,
    }


def write_manifest(out_dir, command: str, cfg: dict[str, str], seed: int, outputs: list[str]) -> Path:
    """Record what ran, with which settings, and the hash of every primary output."""
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "seed": seed,
        "config": dict(sorted(cfg.items())),
        "config_sha256": config_hash(cfg),
        "versions": _versions(),
        "outputs": {name: file_sha256(out_dir / name) for name in sorted(outputs)},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"manifest {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    for key in ("command", "config", "outputs"):
        if key not in data:
            raise ConfigError(f"{path}: manifest lacks {key!r}")
    return data
