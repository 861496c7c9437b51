"""Report containers and CSV / JSON / SVG serialization.

CSV files open with ``# schema_version=1`` and a ``# key=value`` metadata
block, then a header row and data rows.  Floats are written with ``repr``
(shortest round-trip form) so identical results serialize to identical
bytes; volatile fields such as wall time never enter the CSV and live only
in the JSON mirror.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

__all__ = [
    "ConvergenceReport",
    "ChaosReport",
    "MomentReport",
    "CovarianceCheckReport",
    "SCHEMA_VERSION",
    "render_csv",
    "render_json",
    "render_loglog_svg",
]

SCHEMA_VERSION = 1


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def render_csv(metadata: dict, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [f"# schema_version={SCHEMA_VERSION}"]
    for key, value in metadata.items():
        lines.append(f"# {key}={_fmt(value)}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def render_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class ConvergenceReport:
    """Strong-error ladder: per-step-size RMS terminal error plus fitted slope."""

    model_name: str
    hurst: float
    horizon: float
    particles: int
    replications: int
    reference_delta: float
    sampler: str
    seed: int
    points: tuple[tuple[float, float], ...]  # (delta, rms_error), delta decreasing
    slope: float | None
    slope_stderr: float | None
    exact_scheme: bool
    wall_time: float = field(compare=False, default=0.0)

    def metadata(self) -> dict:
        return {
            "report": "convergence",
            "model": self.model_name,
            "hurst": self.hurst,
            "horizon": self.horizon,
            "particles": self.particles,
            "replications": self.replications,
            "reference_delta": self.reference_delta,
            "sampler": self.sampler,
            "seed": self.seed,
            "slope": "exact" if self.exact_scheme else repr(self.slope),
            "slope_stderr": "exact" if self.exact_scheme else repr(self.slope_stderr),
            "exact_scheme": self.exact_scheme,
        }

    def to_csv(self) -> str:
        return render_csv(self.metadata(), ("delta", "rms_error"), self.points)

    def to_json(self) -> str:
        payload = self.metadata()
        payload["points"] = [{"delta": d, "rms_error": e} for d, e in self.points]
        payload["slope"] = self.slope
        payload["slope_stderr"] = self.slope_stderr
        payload["wall_time_seconds"] = self.wall_time
        return render_json(payload)

    def summary(self) -> str:
        if self.exact_scheme:
            return (
                f"convergence model={self.model_name} H={self.hurst}: scheme exact; "
                "slope undefined"
            )
        return (
            f"convergence model={self.model_name} H={self.hurst} N={self.particles} "
            f"M={self.replications}: slope={self.slope:.4f} (stderr {self.slope_stderr:.4f})"
        )


@dataclass(frozen=True)
class ChaosReport:
    """Distance-to-reference trend as the particle count grows."""

    model_name: str
    hurst: float
    horizon: float
    steps: int
    replications: int
    theta: float
    estimator: str  # "1d-exact" or "coupling-bound"
    reference_particles: int
    seed: int
    points: tuple[tuple[int, float, float], ...]  # (N, distance, stderr), N increasing
    non_increasing: bool
    wall_time: float = field(compare=False, default=0.0)

    def metadata(self) -> dict:
        return {
            "report": "chaos",
            "model": self.model_name,
            "hurst": self.hurst,
            "horizon": self.horizon,
            "steps": self.steps,
            "replications": self.replications,
            "theta": self.theta,
            "estimator": self.estimator,
            "reference_particles": self.reference_particles,
            "seed": self.seed,
            "non_increasing": self.non_increasing,
        }

    def to_csv(self) -> str:
        return render_csv(self.metadata(), ("particles", "distance", "stderr"), self.points)

    def to_json(self) -> str:
        payload = self.metadata()
        payload["points"] = [
            {"particles": n, "distance": d, "stderr": s} for n, d, s in self.points
        ]
        payload["wall_time_seconds"] = self.wall_time
        return render_json(payload)

    def summary(self) -> str:
        trend = "non-increasing" if self.non_increasing else "NOT non-increasing"
        return (
            f"chaos model={self.model_name} H={self.hurst} Ns={[n for n, _, _ in self.points]}: "
            f"distance trend {trend}"
        )


@dataclass(frozen=True)
class MomentReport:
    """Empirical moment stability across a refining mesh ladder."""

    model_name: str
    hurst: float
    horizon: float
    particles: int
    order: float
    seed: int
    points: tuple[tuple[float, float, float], ...]  # (delta, max_moment, terminal_moment)
    ratios: tuple[float, ...]  # successive refinement ratios of max moments
    passed: bool
    wall_time: float = field(compare=False, default=0.0)

    def metadata(self) -> dict:
        return {
            "report": "moments",
            "model": self.model_name,
            "hurst": self.hurst,
            "horizon": self.horizon,
            "particles": self.particles,
            "order": self.order,
            "seed": self.seed,
            "ratios": ";".join(repr(r) for r in self.ratios),
            "passed": self.passed,
        }

    def to_csv(self) -> str:
        return render_csv(
            self.metadata(), ("delta", "max_moment", "terminal_moment"), self.points
        )

    def to_json(self) -> str:
        payload = self.metadata()
        payload["ratios"] = list(self.ratios)
        payload["points"] = [
            {"delta": d, "max_moment": m, "terminal_moment": t} for d, m, t in self.points
        ]
        payload["wall_time_seconds"] = self.wall_time
        return render_json(payload)

    def summary(self) -> str:
        verdict = "stable" if self.passed else "UNSTABLE"
        return (
            f"moments model={self.model_name} H={self.hurst} q={self.order}: "
            f"refinement ratios {verdict}"
        )


@dataclass(frozen=True)
class CovarianceCheckReport:
    """Entrywise z-scores of the empirical increment covariance, per lag."""

    hurst: float
    steps: int
    paths: int
    sampler: str
    seed: int
    points: tuple[tuple[int, float, float, float], ...]  # (lag, expected, empirical, max|z|)
    max_abs_z: float
    wall_time: float = field(compare=False, default=0.0)

    def metadata(self) -> dict:
        return {
            "report": "fbm-check",
            "hurst": self.hurst,
            "steps": self.steps,
            "paths": self.paths,
            "sampler": self.sampler,
            "seed": self.seed,
            "max_abs_z": self.max_abs_z,
        }

    def to_csv(self) -> str:
        return render_csv(
            self.metadata(),
            ("lag", "expected_cov", "empirical_cov", "max_abs_z"),
            self.points,
        )

    def to_json(self) -> str:
        payload = self.metadata()
        payload["points"] = [
            {"lag": lag, "expected_cov": c, "empirical_cov": e, "max_abs_z": z}
            for lag, c, e, z in self.points
        ]
        payload["wall_time_seconds"] = self.wall_time
        return render_json(payload)

    def summary(self) -> str:
        return (
            f"fbm-check H={self.hurst} n={self.steps} paths={self.paths} "
            f"sampler={self.sampler}: max covariance deviation {self.max_abs_z:.2f} "
            "standard errors"
        )


# --------------------------------------------------------------------------
# Minimal self-contained SVG log-log chart (no plotting dependency).
# --------------------------------------------------------------------------

_SVG_W, _SVG_H = 640, 480
_MARGIN = 60.0


def _ticks(lo: float, hi: float) -> list[float]:
    import math

    if hi <= lo:
        return [lo]
    span = hi - lo
    step = max(1.0, round(span / 5.0))
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-9:
        out.append(t)
        t += step
    return out or [lo]


def render_loglog_svg(
    xs: Sequence[float],
    ys: Sequence[float],
    fitted_slope: float | None,
    reference_slope: float | None,
    title: str,
    x_label: str = "log2(delta)",
    y_label: str = "log2(error)",
) -> str:
    """Log-log scatter with fitted and reference lines, as standalone SVG."""
    import math

    lx = [math.log2(x) for x in xs]
    ly = [math.log2(y) for y in ys]
    x_lo, x_hi = min(lx), max(lx)
    y_lo, y_hi = min(ly), max(ly)
    x_pad = 0.5 + 0.05 * (x_hi - x_lo)
    y_pad = 0.5 + 0.05 * (y_hi - y_lo)
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    def px(x: float) -> float:
        return _MARGIN + (x - x_lo) / (x_hi - x_lo) * (_SVG_W - 2 * _MARGIN)

    def py(y: float) -> float:
        return _SVG_H - _MARGIN - (y - y_lo) / (y_hi - y_lo) * (_SVG_H - 2 * _MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W / 2:.1f}" y="24" text-anchor="middle" font-size="15" '
        f'font-family="sans-serif">{title}</text>',
    ]
    # axes
    parts.append(
        f'<line x1="{_MARGIN}" y1="{_SVG_H - _MARGIN}" x2="{_SVG_W - _MARGIN}" '
        f'y2="{_SVG_H - _MARGIN}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{_SVG_H - _MARGIN}" '
        f'stroke="black"/>'
    )
    for t in _ticks(x_lo, x_hi):
        parts.append(
            f'<line x1="{px(t):.1f}" y1="{_SVG_H - _MARGIN}" x2="{px(t):.1f}" '
            f'y2="{_SVG_H - _MARGIN + 5}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{px(t):.1f}" y="{_SVG_H - _MARGIN + 20}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{t:g}</text>'
        )
    for t in _ticks(y_lo, y_hi):
        parts.append(
            f'<line x1="{_MARGIN - 5}" y1="{py(t):.1f}" x2="{_MARGIN}" y2="{py(t):.1f}" '
            f'stroke="black"/>'
        )
        parts.append(
            f'<text x="{_MARGIN - 8}" y="{py(t):.1f}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif" dominant-baseline="middle">{t:g}</text>'
        )
    parts.append(
        f'<text x="{_SVG_W / 2:.1f}" y="{_SVG_H - 12}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif">{x_label}</text>'
    )
    parts.append(
        f'<text x="16" y="{_SVG_H / 2:.1f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {_SVG_H / 2:.1f})">{y_label}</text>'
    )

    mean_x = sum(lx) / len(lx)
    mean_y = sum(ly) / len(ly)
    for slope, color, dash, label in (
        (fitted_slope, "#d62728", "", "fit"),
        (reference_slope, "#2ca02c", ' stroke-dasharray="6 4"', "reference"),
    ):
        if slope is None:
            continue
        y1 = mean_y + slope * (x_lo + x_pad / 2 - mean_x)
        y2 = mean_y + slope * (x_hi - x_pad / 2 - mean_x)
        parts.append(
            f'<line x1="{px(x_lo + x_pad / 2):.1f}" y1="{py(y1):.1f}" '
            f'x2="{px(x_hi - x_pad / 2):.1f}" y2="{py(y2):.1f}" stroke="{color}" '
            f'stroke-width="1.5"{dash}/>'
        )
        parts.append(
            f'<text x="{px(x_hi - x_pad / 2) - 4:.1f}" y="{py(y2) - 6:.1f}" text-anchor="end" '
            f'font-size="11" fill="{color}" font-family="sans-serif">'
            f"{label} slope {slope:.3f}</text>"
        )
    for x, y in zip(lx, ly):
        parts.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="4" fill="#1f77b4"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
