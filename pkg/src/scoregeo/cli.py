"""``scoregeo`` command-line entry point.

Each verb reads a flat dotted-key config, writes its primary outputs (CSV and
weight files) plus PNG figures into ``--out``, and records a manifest that
``scoregeo replay`` can re-execute to check the outputs are reproduced
byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from scoregeo.datasets import load_digits_flat, load_image_dir, sample_mixture, two_moons_mixture
from scoregeo.diffusion import Schedule, ddim_generate, ddim_invert
from scoregeo.errors import ConfigError, NumericalError
from scoregeo.fields import DenoiserNet, MixtureDensity, MixtureField, NetField, TrainConfig, train_denoiser
from scoregeo.geodesic import GeodesicConfig, decode_path, encode_pair, interpolate_at_tau
from scoregeo.io import (
    floats,
    read_config,
    read_manifest,
    read_samples,
    section,
    write_manifest,
    write_samples,
)
from scoregeo.oracle import METHODS, SCENARIOS, Scenario, compare_methods, run_oracle

log = logging.getLogger("scoregeo")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _int(cfg, key, default=None):
    raw = cfg.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc


def _float(cfg, key, default):
    raw = cfg.get(key)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc


def _shape(text):
    try:
        h, w = (int(tok) for tok in text.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"image shape must look like 28x28, got {text!r}") from exc
    return h, w


@dataclass
class ExperimentConfig:
    """Validated view of the raw key/value config."""

    raw: dict[str, str]
    seed: int
    schedule: Schedule
    backend: str
    tau: int
    geodesic: GeodesicConfig
    image_shape: tuple[int, int] | None = None
    mixture: MixtureDensity | None = field(default=None, repr=False)

    @classmethod
    def from_dict(cls, raw: dict[str, str]) -> "ExperimentConfig":
        seed = _int(raw, "seed", 0)
        try:
            schedule = Schedule.from_config({"T": "1000", **section(raw, "schedule")})
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"schedule: {exc}") from exc
        backend = raw.get("field.backend", "mixture")
        if backend not in ("mixture", "trained"):
            raise ConfigError(f"field.backend must be 'mixture' or 'trained', got {backend!r}")
        tau = _int(raw, "tau", min(400, schedule.T))
        if not 1 <= tau <= schedule.T:
            raise ConfigError(f"tau={tau} must lie in [1, T={schedule.T}]")
        lam_raw = raw.get("geodesic.lambda", "auto")
        try:
            geo = GeodesicConfig(
                N=_int(raw, "geodesic.N", 10),
                lam=None if lam_raw == "auto" else float(lam_raw),
                iters=_int(raw, "geodesic.iters", 5000),
                lr0=_float(raw, "geodesic.lr0", 1e-2),
                schedule=raw.get("geodesic.schedule", "cosine"),
                init=raw.get("geodesic.init", "slerp"),
                stencil=raw.get("geodesic.stencil", "split"),
                seed=seed,
            )
        except ValueError as exc:
            raise ConfigError(f"geodesic: {exc}") from exc
        shape = _shape(raw["image.shape"]) if "image.shape" in raw else None
        mixture = None
        if backend == "mixture":
            mixture = _mixture_from(raw)
        return cls(raw, seed, schedule, backend, tau, geo, shape, mixture)

    def require_file(self, key) -> Path:
        if key not in self.raw:
            raise ConfigError(f"missing required key {key!r}")
        path = Path(self.raw[key])
        if not path.is_file():
            raise ConfigError(f"{key}: file {path} does not exist")
        return path

    def field(self):
        if self.backend == "mixture":
            return MixtureField(self.mixture, self.schedule)
        net = DenoiserNet.load(self.require_file("net.path"))
        return NetField(net, self.schedule)


def _mixture_from(raw) -> MixtureDensity:
    preset = raw.get("mixture.preset")
    if preset == "moons":
        return two_moons_mixture(_int(raw, "moons.per_arc", 24), _float(raw, "moons.noise", 0.1))
    if preset is not None:
        raise ConfigError(f"unknown mixture.preset {preset!r}")
    sub = section(raw, "mixture")
    if "weights" not in sub:
        raise ConfigError("mixture backend needs mixture.weights (or mixture.preset = moons)")
    try:
        return MixtureDensity.from_config(sub)
    except KeyError as exc:
        raise ConfigError(f"mixture: missing key mixture.{exc.args[0]}") from exc
    except ValueError as exc:
        raise ConfigError(f"mixture: {exc}") from exc


def _endpoints(exp: ExperimentConfig):
    if "endpoints.a" in exp.raw and "endpoints.b" in exp.raw:
        a, b = np.array(floats(exp.raw["endpoints.a"])), np.array(floats(exp.raw["endpoints.b"]))
    elif "endpoints.rows" in exp.raw:
        data, _ = read_samples(exp.require_file("data.path"))
        try:
            i, j = (int(tok) for tok in exp.raw["endpoints.rows"].replace(",", " ").split())
            a, b = data[i], data[j]
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"endpoints.rows: {exc}") from exc
    else:
        raise ConfigError("give endpoints.a and endpoints.b, or endpoints.rows with data.path")
    if a.shape != b.shape:
        raise ConfigError("endpoints have different dimensions")
    return a, b


def _log_density_fn(exp: ExperimentConfig):
    """Closed-form density for the 2-D contour backgrounds, when one exists."""
    if exp.mixture is None or exp.mixture.dim != 2:
        return None
    f = MixtureField(exp.mixture)
    return lambda x: f.log_density(x, 0)


# -- verbs -------------------------------------------------------------------


def cmd_synth_data(exp: ExperimentConfig, out: Path) -> list[str]:
    kind = exp.raw.get("data.kind", "mixture")
    n = _int(exp.raw, "data.n", 1000)
    if kind in ("mixture", "moons"):
        mixture = two_moons_mixture(_int(exp.raw, "moons.per_arc", 24), _float(exp.raw, "moons.noise", 0.1)) if kind == "moons" else exp.mixture
        if mixture is None:
            raise ConfigError("data.kind = mixture needs field.backend = mixture and a mixture.* spec")
        x = sample_mixture(mixture, n, exp.seed)
    elif kind == "digits":
        x, _ = load_digits_flat()
        x = x[np.random.default_rng(exp.seed).permutation(len(x))[:n]]
    elif kind == "images":
        if exp.image_shape is None:
            raise ConfigError("data.kind = images needs image.shape")
        x = load_image_dir(exp.raw.get("data.image_dir", ""), exp.image_shape)[:n]
    else:
        raise ConfigError(f"unknown data.kind {kind!r}")
    write_samples(out / "samples.csv", x)
    log.info("wrote %d samples of dimension %d", len(x), x.shape[1])
    return ["samples.csv"]


def cmd_train(exp: ExperimentConfig, out: Path) -> list[str]:
    data, _ = read_samples(exp.require_file("data.path"))
    if len(data) == 0:
        raise ConfigError("training data is empty")
    hidden = tuple(int(h) for h in floats(exp.raw.get("net.hidden", "128, 128, 128")))
    try:
        net = DenoiserNet.init(
            data.shape[1],
            hidden,
            exp.raw.get("net.activation", "silu"),
            _int(exp.raw, "net.emb_dim", 16),
            seed=exp.seed,
        )
    except ValueError as exc:
        raise ConfigError(f"net: {exc}") from exc
    cfg = TrainConfig(
        epochs=_int(exp.raw, "train.epochs", 40),
        steps_per_epoch=_int(exp.raw, "train.steps_per_epoch", 250),
        batch_size=_int(exp.raw, "train.batch_size", 256),
        lr=_float(exp.raw, "train.lr", 2e-3),
        seed=exp.seed,
    )
    net, losses = train_denoiser(net, data, exp.schedule, cfg)
    net.save(out / "weights.bin")
    with open(out / "losses.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        w.writerows([k, repr(v)] for k, v in enumerate(losses))
    return ["weights.bin", "losses.csv"]


def cmd_invert(exp: ExperimentConfig, out: Path) -> list[str]:
    data, _ = read_samples(exp.require_file("data.path"))
    f = exp.field()
    noise = ddim_invert(data, exp.tau, f, exp.schedule)
    recon = ddim_generate(noise, exp.tau, f, exp.schedule)
    write_samples(out / "inverted.csv", noise, t=exp.tau)
    write_samples(out / "reconstructed.csv", recon)
    return ["inverted.csv", "reconstructed.csv"]


def _write_path_csv(path, at_tau, decoded, tau):
    """Path points at ``tau`` followed by their decoded samples at ``t = 0``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "s_index"] + [f"x_{i}" for i in range(1, at_tau.shape[1] + 1)])
        for t, block in ((tau, at_tau), (0, decoded)):
            for i, row in enumerate(block):
                w.writerow([t, i, *(repr(float(v)) for v in row)])


def _figures(exp, out, paths_tau, samples, traces, profiles=None):
    from scoregeo import plotting

    dim = next(iter(samples.values())).shape[1]
    if dim == 2:
        plotting.plot_paths_2d(out / "paths_tau.png", paths_tau, title=f"paths at t={exp.tau}")
        plotting.plot_paths_2d(out / "samples.png", samples, _log_density_fn(exp), title="decoded samples")
    if exp.image_shape is not None and exp.image_shape[0] * exp.image_shape[1] == dim:
        plotting.plot_image_strips(out / "strips.png", samples, exp.image_shape)
    if "geodesic" in traces:
        plotting.plot_trace(out / "trace.png", traces["geodesic"])
    if profiles:
        plotting.plot_log_density_profiles(out / "log_density.png", profiles)


def cmd_interpolate(exp: ExperimentConfig, out: Path) -> list[str]:
    a, b = _endpoints(exp)
    f = exp.field()
    pair = encode_pair(f, exp.schedule, a, b, exp.tau)
    written, paths_tau, samples, traces = [], {}, {}, {}
    for method in METHODS:
        try:
            path, trace = interpolate_at_tau(f, pair, method, exp.geodesic)
            decoded = decode_path(f, exp.schedule, path, pair)
        except NumericalError as exc:
            raise NumericalError(f"{method}: {exc}", exc.index, exc.payload) from exc
        name = f"path_{method}.csv"
        _write_path_csv(out / name, path.points, decoded, exp.tau)
        written.append(name)
        paths_tau[method], samples[method] = path.points, decoded
        if trace is not None:
            traces[method] = trace
            trace.to_csv(out / f"trace_{method}.csv")
            written.append(f"trace_{method}.csv")
    _figures(exp, out, paths_tau, samples, traces)
    return written


def cmd_evaluate(exp: ExperimentConfig, out: Path) -> list[str]:
    a, b = _endpoints(exp)
    f = exp.field()
    report = compare_methods(f, exp.schedule, a, b, exp.tau, exp.geodesic)
    report.to_csv(out / "report.csv")
    written = ["report.csv"]
    for method, path in report.paths_tau.items():
        name = f"path_{method}.csv"
        _write_path_csv(out / name, path.points, report.samples[method], exp.tau)
        written.append(name)
    paths_tau = {m: p.points for m, p in report.paths_tau.items()}
    profiles = {r.method: r.log_density_profile for r in report.rows}
    _figures(exp, out, paths_tau, report.samples, report.traces, profiles)
    return written


def _scenarios(exp: ExperimentConfig) -> list[Scenario]:
    name = exp.raw.get("oracle.scenario", "all")
    if name == "all":
        return list(SCENARIOS.values())
    if name in SCENARIOS:
        return [SCENARIOS[name]]
    if name != "custom":
        raise ConfigError(f"oracle.scenario must be one of {sorted(SCENARIOS)}, 'all' or 'custom'")
    if exp.mixture is None or exp.mixture.dim != 2:
        raise ConfigError("a custom oracle scenario needs a 2-D mixture")
    a, b = _endpoints(exp)
    t = _int(exp.raw, "oracle.t", 0)
    return [Scenario("custom", exp.mixture, tuple(a), tuple(b), t, exp.schedule.T if t else None)]


def cmd_oracle(exp: ExperimentConfig, out: Path) -> list[str]:
    from scoregeo import plotting

    resolution = _int(exp.raw, "oracle.resolution", 256)
    margin = _float(exp.raw, "oracle.margin", 2.0)
    # The oracle paths bend sharply around narrow modes, so they get their own,
    # finer discretization than the interpolation runs.
    geo = replace(exp.geodesic, N=_int(exp.raw, "oracle.N", 32))
    cols = ["scenario", "geodesic_length", "dijkstra_length", "lerp_length", "ratio", "lerp_excess", "segment_variance_ratio"]
    written = ["oracle.csv"]
    with open(out / "oracle.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for sc in _scenarios(exp):
            try:
                res = run_oracle(sc, geo, resolution=resolution, margin=margin)
            except ValueError as exc:
                raise ConfigError(f"{sc.name}: {exc}") from exc
            w.writerow([sc.name] + [repr(float(getattr(res, c))) for c in cols[1:]])
            for label, pts in (("geodesic", res.geodesic_path), ("dijkstra", res.dijkstra_path)):
                name = f"{sc.name}_{label}.csv"
                write_samples(out / name, pts, t=sc.t)
                written.append(name)
            dens = sc.field().at(sc.t)
            ld = MixtureField(dens).log_density
            lerp_pts = np.stack([sc.x_a, sc.x_b])
            plotting.plot_paths_2d(
                out / f"{sc.name}.png",
                {"lerp": lerp_pts, "geodesic": res.geodesic_path, "dijkstra": res.dijkstra_path},
                lambda x: ld(x, 0),
                title=f"{sc.name}: geodesic/Dijkstra = {res.ratio:.3f}",
            )
            log.info("%s: ratio %.4f, lerp excess %.3f", sc.name, res.ratio, res.lerp_excess)
    return written


COMMANDS = {
    "synth-data": cmd_synth_data,
    "train": cmd_train,
    "invert": cmd_invert,
    "interpolate": cmd_interpolate,
    "evaluate": cmd_evaluate,
    "oracle": cmd_oracle,
}


def run_command(command: str, raw: dict[str, str], out: Path) -> list[str]:
    """Run one verb on an already-merged config and write its manifest."""
    exp = ExperimentConfig.from_dict(raw)
    out.mkdir(parents=True, exist_ok=True)
    written = COMMANDS[command](exp, out)
    write_manifest(out, command, raw, exp.seed, written)
    return written


def replay(manifest_path, out: Path | None) -> bool:
    """Re-run a manifest and compare output hashes. Returns True on an exact match."""
    manifest = read_manifest(manifest_path)
    if manifest["command"] not in COMMANDS:
        raise ConfigError(f"manifest names unknown command {manifest['command']!r}")
    target = out or Path(tempfile.mkdtemp(prefix="scoregeo-replay-"))
    run_command(manifest["command"], manifest["config"], target)
    fresh = read_manifest(target / "manifest.json")["outputs"]
    ok = True
    for name, digest in manifest["outputs"].items():
        if fresh.get(name) != digest:
            log.error("replay mismatch: %s", name)
            ok = False
    print(f"replay {'reproduced' if ok else 'DIFFERS'}: {len(manifest['outputs'])} outputs in {target}")
    return ok


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scoregeo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, default=Path("out"))
        p.add_argument("--tau", type=int)
        p.add_argument("--lambda", dest="lam", type=float)
    p = sub.add_parser("replay")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            return EXIT_OK if replay(args.manifest, args.out) else 1
        raw = read_config(args.config)
        if args.seed is not None:
            raw["seed"] = str(args.seed)
        if args.tau is not None:
            raw["tau"] = str(args.tau)
        if args.lam is not None:
            raw["geodesic.lambda"] = repr(args.lam)
        for name in run_command(args.command, raw, args.out):
            print(args.out / name)
    except ValueError as exc:  # ConfigError and input validation failures alike
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
