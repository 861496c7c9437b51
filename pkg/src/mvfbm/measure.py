"""Empirical measures and Wasserstein-type distances.

Only the tools the particle scheme actually needs: the exact distance to a
Dirac mass at the origin (a plain moment), the index-coupling upper bound
for equal-size atom clouds, and the exact order-theta distance in dimension
one via sorted quantile matching.  Exact multi-dimensional optimal transport
is deliberately out of scope; callers in d > 1 get the coupling bound,
labeled as such.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EmpiricalMeasure",
    "WassersteinOrder",
    "moment_distance_to_dirac0",
    "coupled_upper_bound",
    "wasserstein_1d_exact",
    "monotonicity_check",
]


@dataclass(frozen=True)
class WassersteinOrder:
    """Transport cost exponent theta >= 2."""

    theta: float = 2.0

    def __post_init__(self) -> None:
        if self.theta < 2.0:
            raise ValueError(f"Wasserstein order must be >= 2, got {self.theta}")

    @classmethod
    def coerce(cls, value: "float | WassersteinOrder") -> "WassersteinOrder":
        if isinstance(value, WassersteinOrder):
            return value
        return cls(float(value))


class EmpiricalMeasure:
    """N equally weighted atoms in R^d at a fixed time.

    Wraps an (N, d) position array without copying; treat atoms as read-only.
    """

    __slots__ = ("atoms",)

    def __init__(self, atoms: np.ndarray) -> None:
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] < 1:
            raise ValueError("atoms must be a nonempty (N, d) array")
        object.__setattr__(self, "atoms", atoms)

    def __setattr__(self, name, value):  # pragma: no cover - guard only
        raise AttributeError("EmpiricalMeasure is immutable")

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def dimension(self) -> int:
        return self.atoms.shape[1]

    def mean(self) -> np.ndarray:
        """Barycenter, reduced in fixed index order (reproducible)."""
        return self.atoms.mean(axis=0)


def _check_aligned(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> None:
    if mu.size != nu.size:
        raise ValueError(f"atom counts differ: {mu.size} vs {nu.size}")
    if mu.dimension != nu.dimension:
        raise ValueError(f"dimensions differ: {mu.dimension} vs {nu.dimension}")


def moment_distance_to_dirac0(
    mu: EmpiricalMeasure, order: "float | WassersteinOrder" = 2.0
) -> float:
    """Exact W_theta distance from mu to the Dirac mass at the origin.

    Every transport plan to a point mass is forced, so the distance equals
    the theta-th root of the theta-th moment: ((1/N) sum_j |x_j|^theta)^(1/theta).
    """
    theta = WassersteinOrder.coerce(order).theta
    norms = np.linalg.norm(mu.atoms, axis=1)
    return float(np.mean(norms**theta) ** (1.0 / theta))


def coupled_upper_bound(
    mu: EmpiricalMeasure, nu: EmpiricalMeasure, order: "float | WassersteinOrder" = 2.0
) -> float:
    """Upper bound on W_theta(mu, nu) from the identity-index coupling.

    Requires index-aligned atom clouds of equal size; the bound is exact
    whenever the identity pairing happens to be optimal.
    """
    _check_aligned(mu, nu)
    theta = WassersteinOrder.coerce(order).theta
    gaps = np.linalg.norm(mu.atoms - nu.atoms, axis=1)
    return float(np.mean(gaps**theta) ** (1.0 / theta))


def wasserstein_1d_exact(
    mu: EmpiricalMeasure, nu: EmpiricalMeasure, order: "float | WassersteinOrder" = 2.0
) -> float:
    """Exact W_theta for equally weighted one-dimensional empirical measures.

    Sorted (quantile) matching is the optimal coupling in d = 1 for convex
    costs; ties are broken by stable sort, which cannot change the cost.
    """
    if mu.dimension != 1 or nu.dimension != 1:
        raise ValueError(
            "exact computation requires d = 1; use coupled_upper_bound in higher dimension"
        )
    _check_aligned(mu, nu)
    theta = WassersteinOrder.coerce(order).theta
    a = np.sort(mu.atoms[:, 0], kind="stable")
    b = np.sort(nu.atoms[:, 0], kind="stable")
    return float(np.mean(np.abs(a - b) ** theta) ** (1.0 / theta))


def monotonicity_check(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    theta_low: float,
    theta_high: float,
    tolerance: float = 1e-12,
) -> bool:
    """Test utility: W_{theta_low} <= W_{theta_high} + tolerance (d = 1 exact)."""
    if not (2.0 <= theta_low <= theta_high):
        raise ValueError(f"need 2 <= theta_low <= theta_high, got ({theta_low}, {theta_high})")
    low = wasserstein_1d_exact(mu, nu, theta_low)
    high = wasserstein_1d_exact(mu, nu, theta_high)
    return low <= high + tolerance
