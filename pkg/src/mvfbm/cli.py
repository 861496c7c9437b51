"""Command-line front end for the simulation and experiment harness.

One executable, five commands selected with ``--command``:

* ``simulate``    -- run one interacting ensemble, export the trajectory
* ``convergence`` -- strong-error ladder against a fine reference mesh
* ``chaos``       -- distance-to-reference trend over particle counts
* ``moments``     -- moment stability across a mesh ladder
* ``fbm-check``   -- empirical covariance audit of the driver sampler

Options may come from a flat ``key = value`` config file (``--config``);
explicit flags override file values and unknown keys are rejected.  Each
run writes ``report.csv``, ``report.json``, ``config.echo`` and optionally
``plot.svg`` into its own directory under ``--outdir``.

Exit codes: 0 success, 1 numerical failure, 2 configuration failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

from .fbm import CirculantEmbeddingError, CovarianceFactorizationError, UniformMesh
from .model import PRESET_NAMES, RegimeViolation, preset_by_name
from .reports import render_loglog_svg
from .simulator import NumericalBlowup, SimulationConfig, run, write_trajectory_csv
from .study import chaos_study, covariance_check, moment_bound_check, strong_error_study

__all__ = ["main", "parse_config", "dispatch", "ConfigError", "RunConfig"]

COMMANDS = ("simulate", "convergence", "chaos", "moments", "fbm-check")
PROFILES = ("desk", "paper-fig1")

_DEFAULT_DELTAS = "2^-5,2^-6,2^-7,2^-8"


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration; names the offending key."""


@dataclass
class RunConfig:
    command: str
    model: str = "mean-deviation"
    xi: float = 1.0
    rate: float = 1.0
    initial: float = 1.0
    initial_spread: float = 0.0
    hurst: float = 0.7
    horizon: float = 1.0
    steps: int = 128
    deltas: tuple[float, ...] = ()
    reference_delta: float = 2.0**-10
    particles: int = 200
    replications: int = 50
    particle_counts: tuple[int, ...] = (50, 100, 200, 400)
    theta: float = 2.0
    order: float = 4.0
    paths: int = 10_000
    seed: int = 2024
    sampler: str = "circulant"
    snapshots: str = "terminal"
    workers: int = 1
    outdir: str = "runs"
    label: str = ""
    emit_plot: bool = False
    profile: str = "desk"


def _parse_float_token(token: str, key: str) -> float:
    token = token.strip()
    try:
        if "^" in token:
            base, exponent = token.split("^", 1)
            return float(base) ** float(exponent)
        return float(token)
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {token!r} (not a number)") from None


def _parse_float_list(text: str, key: str) -> tuple[float, ...]:
    items = [t for t in text.split(",") if t.strip()]
    if not items:
        raise ConfigError(f"invalid value for {key}: empty list")
    return tuple(_parse_float_token(t, key) for t in items)


def _parse_int_list(text: str, key: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {text!r} (not integers)") from None


_FILE_KEYS = {
    "command": str,
    "model": str,
    "xi": float,
    "rate": float,
    "initial": float,
    "initial-spread": float,
    "hurst": float,
    "horizon": float,
    "steps": int,
    "deltas": "float-list",
    "reference-delta": "float-token",
    "particles": int,
    "replications": int,
    "particle-counts": "int-list",
    "theta": float,
    "order": float,
    "paths": int,
    "seed": int,
    "sampler": str,
    "snapshots": str,
    "workers": int,
    "outdir": str,
    "label": str,
    "emit-plot": "bool",
    "profile": str,
}


def _read_config_file(path: str) -> dict[str, object]:
    values: dict[str, object] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _FILE_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        kind = _FILE_KEYS[key]
        if kind is str:
            values[key] = value
        elif kind is int:
            try:
                values[key] = int(value)
            except ValueError:
                raise ConfigError(f"invalid value for {key}: {value!r} (not an integer)") from None
        elif kind is float:
            values[key] = _parse_float_token(value, key)
        elif kind == "float-token":
            values[key] = _parse_float_token(value, key)
        elif kind == "float-list":
            values[key] = _parse_float_list(value, key)
        elif kind == "int-list":
            values[key] = _parse_int_list(value, key)
        elif kind == "bool":
            lowered = value.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"invalid value for {key}: {value!r} (not a boolean)")
            values[key] = lowered in ("true", "1", "yes")
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvfbm",
        description="Interacting-particle Euler simulation driven by fractional Brownian motion.",
    )
    add = parser.add_argument
    add("--command", choices=COMMANDS, help="what to run")
    add("--config", metavar="FILE", help="flat key = value config file; flags override it")
    add("--model", choices=PRESET_NAMES, help="model preset (default mean-deviation)")
    add("--xi", type=float, help="constant diffusion scale (mean-reverting preset)")
    add("--rate", type=float, help="mean-reversion rate (mean-reverting preset)")
    add("--initial", type=float, help="initial state value (default 1)")
    add("--initial-spread", type=float, help="stddev of Gaussian initial data (default 0)")
    add("--hurst", type=float, help="Hurst index in (0, 1)")
    add("--horizon", type=float, help="time horizon T (default 1)")
    add("--steps", type=int, help="mesh steps for simulate/chaos/fbm-check")
    add("--deltas", help="comma list of step sizes, e.g. 2^-5,2^-6 (convergence/moments)")
    add("--reference-delta", help="reference step size, e.g. 2^-10 (convergence)")
    add("--particles", type=int, help="particles per ensemble")
    add("--replications", type=int, help="Monte Carlo replications")
    add("--particle-counts", help="comma list of ensemble sizes (chaos)")
    add("--theta", type=float, help="transport cost exponent >= 2 (chaos)")
    add("--order", type=float, help="moment order q >= 2 (moments)")
    add("--paths", type=int, help="sample paths (fbm-check)")
    add("--seed", type=int, help="master seed")
    add("--sampler", choices=("circulant", "cholesky"), help="driver sampler")
    add("--snapshots", choices=("terminal", "thin", "full"), help="trajectory retention (simulate)")
    add("--workers", type=int, help="parallel workers for replications")
    add("--outdir", help="output directory root (default runs/)")
    add("--label", help="run directory name (default <command>-<timestamp>)")
    add("--emit-plot", action="store_true", default=None, help="write plot.svg")
    add("--profile", choices=PROFILES, help="parameter profile (default desk)")
    return parser


_PROFILE_SETTINGS = {
    "desk": {},
    # Full-scale profile: finer reference mesh and the larger ensemble.
    "paper-fig1": {
        "particles": 1000,
        "replications": 100,
        "deltas": _parse_float_list(_DEFAULT_DELTAS, "deltas"),
        "reference_delta": 2.0**-12,
    },
}


def parse_config(argv: list[str]) -> RunConfig:
    parser = _build_parser()
    namespace = parser.parse_args(argv)
    flag_values = {
        key: value for key, value in vars(namespace).items() if key != "config" and value is not None
    }
    if "deltas" in flag_values:
        flag_values["deltas"] = _parse_float_list(flag_values["deltas"], "deltas")
    if "reference_delta" in flag_values:
        flag_values["reference_delta"] = _parse_float_token(
            str(flag_values["reference_delta"]), "reference-delta"
        )
    if "particle_counts" in flag_values:
        flag_values["particle_counts"] = _parse_int_list(
            str(flag_values["particle_counts"]), "particle-counts"
        )

    merged: dict[str, object] = {}
    if namespace.config:
        for key, value in _read_config_file(namespace.config).items():
            merged[key.replace("-", "_")] = value
    merged.update(flag_values)  # explicit flags win

    profile = str(merged.get("profile", "desk"))
    if profile not in PROFILES:
        raise ConfigError(f"invalid value for profile: {profile!r} (choose from {PROFILES})")
    for key, value in _PROFILE_SETTINGS[profile].items():
        merged.setdefault(key, value)
    merged.setdefault("deltas", _parse_float_list(_DEFAULT_DELTAS, "deltas"))

    if "command" not in merged:
        raise ConfigError("missing required field: command")
    known = {f.name for f in fields(RunConfig)}
    for key in merged:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
    config = RunConfig(**merged)  # type: ignore[arg-type]
    _validate(config)
    return config


def _require(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"invalid value for {key}: {message}")


def _validate(config: RunConfig) -> None:
    _require(config.command in COMMANDS, "command", f"{config.command!r} (choose from {COMMANDS})")
    _require(0.0 < config.hurst < 1.0, "hurst", f"{config.hurst} (must be in the open interval (0, 1))")
    _require(config.horizon > 0.0, "horizon", f"{config.horizon} (must be positive)")
    _require(config.steps >= 1, "steps", f"{config.steps} (must be >= 1)")
    _require(config.particles >= 1, "particles", f"{config.particles} (must be >= 1)")
    _require(config.replications >= 1, "replications", f"{config.replications} (must be >= 1)")
    _require(config.theta >= 2.0, "theta", f"{config.theta} (must be >= 2)")
    _require(config.order >= 2.0, "order", f"{config.order} (must be >= 2)")
    _require(config.paths >= 2, "paths", f"{config.paths} (must be >= 2)")
    _require(config.workers >= 1, "workers", f"{config.workers} (must be >= 1)")
    _require(bool(config.deltas), "deltas", "at least one step size required")
    _require(all(d > 0 for d in config.deltas), "deltas", f"{config.deltas} (must be positive)")
    _require(config.reference_delta > 0, "reference-delta", f"{config.reference_delta} (must be positive)")
    _require(
        all(n >= 1 for n in config.particle_counts) and len(config.particle_counts) >= 1,
        "particle-counts",
        f"{config.particle_counts} (must be >= 1 each)",
    )
    _require(config.sampler in ("circulant", "cholesky"), "sampler", f"{config.sampler!r}")
    _require(config.snapshots in ("terminal", "thin", "full"), "snapshots", f"{config.snapshots!r}")


def _echo_config(config: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        lines.append(f"{f.name.replace('_', '-')} = {value}")
    return "\n".join(lines) + "\n"


def _run_directory(config: RunConfig) -> Path:
    label = config.label or f"{config.command}-{time.strftime('%Y%m%d-%H%M%S')}"
    directory = Path(config.outdir) / label
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _model_for(config: RunConfig):
    return preset_by_name(
        config.model,
        xi=config.xi,
        rate=config.rate,
        initial=config.initial,
        initial_spread=config.initial_spread,
    )


def dispatch(config: RunConfig) -> int:
    """Run the configured command and write its artifacts; returns exit code 0."""
    directory = _run_directory(config)
    (directory / "config.echo").write_text(_echo_config(config))
    outputs = [directory / "report.csv", directory / "report.json"]

    if config.command == "simulate":
        sim = SimulationConfig(
            _model_for(config),
            config.hurst,
            UniformMesh(config.horizon, config.steps),
            config.particles,
            config.seed,
            config.sampler,
        )
        record = run(sim, snapshots=config.snapshots)
        with open(directory / "report.csv", "w") as out:
            write_trajectory_csv(record, out, terminal_only=(config.snapshots == "terminal"))
        terminal_mean = float(record.terminal.mean())
        payload = {
            "report": "simulate",
            "model": config.model,
            "hurst": config.hurst,
            "particles": config.particles,
            "steps": config.steps,
            "terminal_mean": terminal_mean,
            "terminal_std": float(record.terminal.std()),
        }
        from .reports import render_json

        (directory / "report.json").write_text(render_json(payload))
        summary = (
            f"simulate model={config.model} H={config.hurst} N={config.particles} "
            f"steps={config.steps}: terminal mean {terminal_mean:.6f}"
        )

    elif config.command == "convergence":
        report = strong_error_study(
            _model_for(config),
            config.hurst,
            particles=config.particles,
            replications=config.replications,
            deltas=config.deltas,
            reference_delta=config.reference_delta,
            seed=config.seed,
            horizon=config.horizon,
            sampler=config.sampler,
            workers=config.workers,
        )
        (directory / "report.csv").write_text(report.to_csv())
        (directory / "report.json").write_text(report.to_json())
        if config.emit_plot and not report.exact_scheme:
            svg = render_loglog_svg(
                [d for d, _ in report.points],
                [e for _, e in report.points],
                fitted_slope=report.slope,
                reference_slope=config.hurst,
                title=f"Terminal RMS error vs step size (H={config.hurst})",
            )
            (directory / "plot.svg").write_text(svg)
            outputs.append(directory / "plot.svg")
        summary = report.summary()

    elif config.command == "chaos":
        report = chaos_study(
            _model_for(config),
            config.hurst,
            UniformMesh(config.horizon, config.steps),
            config.particle_counts,
            config.replications,
            config.theta,
            config.seed,
            sampler=config.sampler,
            workers=config.workers,
        )
        (directory / "report.csv").write_text(report.to_csv())
        (directory / "report.json").write_text(report.to_json())
        if config.emit_plot:
            positive = [(n, d) for n, d, _ in report.points if d > 0]
            if len(positive) >= 2:
                svg = render_loglog_svg(
                    [float(n) for n, _ in positive],
                    [d for _, d in positive],
                    fitted_slope=None,
                    reference_slope=-0.5,
                    title=f"Distance to reference vs particle count (H={config.hurst})",
                    x_label="log2(N)",
                    y_label="log2(distance)",
                )
                (directory / "plot.svg").write_text(svg)
                outputs.append(directory / "plot.svg")
        summary = report.summary()

    elif config.command == "moments":
        report = moment_bound_check(
            _model_for(config),
            config.hurst,
            config.deltas,
            config.particles,
            config.order,
            config.seed,
            horizon=config.horizon,
            sampler=config.sampler,
        )
        (directory / "report.csv").write_text(report.to_csv())
        (directory / "report.json").write_text(report.to_json())
        summary = report.summary()

    elif config.command == "fbm-check":
        report = covariance_check(
            config.hurst,
            steps=config.steps,
            paths=config.paths,
            seed=config.seed,
            sampler=config.sampler,
            horizon=config.horizon,
        )
        (directory / "report.csv").write_text(report.to_csv())
        (directory / "report.json").write_text(report.to_json())
        summary = report.summary()

    else:  # pragma: no cover - _validate guards this
        raise ConfigError(f"invalid value for command: {config.command!r}")

    print(f"{summary} -> {', '.join(str(p) for p in outputs)}")
    return 0


def main(argv: "list[str] | None" = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        _build_parser().print_usage(sys.stderr)
        return 2
    try:
        config = parse_config(argv)
        return dispatch(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RegimeViolation, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalBlowup, CirculantEmbeddingError, CovarianceFactorizationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
