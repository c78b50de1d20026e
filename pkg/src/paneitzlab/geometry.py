"""Radially symmetric geometric background.

A problem lives on a radial domain (geodesic ball ``[0, r_out]`` or annulus
``[r_in, r_out]``) in ambient dimension n, with the metric entering only
through the spherically averaged volume density ``theta(r)`` (``theta(0)=1``):

    dv = omega_{n-1} * theta(r) * r^{n-1} dr

and through curvature data at the center.  The r^2 Taylor coefficient of
``theta`` encodes the scalar curvature at the center: ``-R0 / (6 n)``.

The 2-tensor appearing in the operator's first-order term is modelled by a
radial profile ``alpha(r)`` acting on gradients as ``alpha(r) * (u')^2``;
spherically averaging a symmetric tensor over directions yields its trace
over n, so the trace at the center is identified as ``n * alpha(0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .special_functions import sphere_volume


class GridError(ValueError):
    """Invalid radial grid construction or use."""


class MetricError(ValueError):
    """Invalid volume-density data."""


_FD_STEP = 1e-6


@dataclass(frozen=True)
class RadialGrid:
    """1-D grid on [r_in, r_out] carrying the ambient dimension.

    ``nodes`` must be strictly increasing with nodes[0] == r_in and
    nodes[-1] == r_out.  A ball is the case r_in == 0; the center node is
    then an ordinary degree of freedom handled by parity.
    """

    n: int
    nodes: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if self.n < 5:
            raise GridError(f"ambient dimension must be >= 5, got {self.n}")
        if nodes.ndim != 1 or nodes.size < 8:
            raise GridError("grid needs at least 8 nodes")
        if nodes[0] < 0:
            raise GridError("inner radius must be >= 0")
        if np.any(np.diff(nodes) <= 0):
            raise GridError("grid nodes must be strictly increasing")

    @property
    def r_in(self) -> float:
        return float(self.nodes[0])

    @property
    def r_out(self) -> float:
        return float(self.nodes[-1])

    @property
    def m(self) -> int:
        return self.nodes.size

    @property
    def is_ball(self) -> bool:
        return self.nodes[0] == 0.0

    @property
    def spacing(self) -> float:
        """Uniform spacing; raises for graded grids (operators need uniform)."""
        d = np.diff(self.nodes)
        h = d[0]
        if not np.allclose(d, h, rtol=1e-12, atol=0.0):
            raise GridError("grid is not uniform")
        return float(h)

    @staticmethod
    def uniform(n: int, r_in: float, r_out: float, m: int) -> "RadialGrid":
        return RadialGrid(n, np.linspace(r_in, r_out, m))

    @staticmethod
    def graded(n: int, r_out: float, m: int, r_min: float) -> "RadialGrid":
        """Ball grid clustered geometrically near r = 0.

        Node 0 sits at the center, the remaining m-1 nodes are log-spaced
        from r_min to r_out.  Used for the concentration sweeps, where the
        integrands vary on every scale between eps and the cutoff.
        """
        if not (0 < r_min < r_out):
            raise GridError("need 0 < r_min < r_out")
        body = np.geomspace(r_min, r_out, m - 1)
        return RadialGrid(n, np.concatenate(([0.0], body)))

    def nodes_below(self, r: float) -> int:
        return int(np.count_nonzero(self.nodes < r))


@dataclass(frozen=True)
class RadialMetric:
    """Spherically averaged volume density plus scalar curvature at the center.

    ``theta`` must be positive with theta(0) = 1.  ``theta_prime`` may be
    supplied analytically; otherwise a central difference is used where the
    logarithmic derivative is needed.
    """

    theta: Callable[[np.ndarray], np.ndarray]
    R0: float
    theta_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "custom"

    def __post_init__(self) -> None:
        t0 = float(np.asarray(self.theta(np.array([0.0])))[0])
        if not math.isclose(t0, 1.0, rel_tol=0.0, abs_tol=1e-12):
            raise MetricError(f"theta(0) must equal 1, got {t0}")

    def density(self, r: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.theta(np.asarray(r, dtype=float)), dtype=float)
        if np.any(vals <= 0.0):
            raise MetricError("theta must be positive on the requested radii")
        return vals

    def log_derivative(self, r: np.ndarray) -> np.ndarray:
        """theta'(r) / theta(r); returns 0 at r = 0 (theta is even there)."""
        r = np.asarray(r, dtype=float)
        if self.theta_prime is not None:
            dp = np.asarray(self.theta_prime(r), dtype=float)
        else:
            dp = (self.density(r + _FD_STEP) - self.density(np.abs(r - _FD_STEP))) / (2 * _FD_STEP)
        out = dp / self.density(r)
        return np.where(r == 0.0, 0.0, out)

    def validate_on(self, grid: RadialGrid) -> None:
        self.density(grid.nodes)


@dataclass(frozen=True)
class CurvatureData:
    """Pointwise data at the center entering the concentration expansions.

    ``lap_f_over_f`` uses the geometer's sign convention Lap = -div grad,
    so a radial profile f0 + f2 r^2 has lap_f_over_f = -2 n f2 / f0.
    """

    R0: float
    trA0: float = 0.0
    lap_f_over_f: float = 0.0
    f0: float = 1.0

    def __post_init__(self) -> None:
        if self.f0 <= 0:
            raise ValueError(f"f at the center must be positive, got {self.f0}")


def make_metric_preset(
    kind: str,
    n: int,
    theta: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    theta_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    R0: Optional[float] = None,
) -> RadialMetric:
    """Construct one of the standard volume densities.

    flat          theta = 1, R0 = 0
    round_sphere  unit n-sphere in geodesic polar coordinates:
                  theta = (sin r / r)^{n-1}, R0 = n(n-1); only valid r < pi
    custom        caller-supplied theta (and optionally theta') plus R0
    """
    if kind == "flat":
        return RadialMetric(
            theta=lambda r: np.ones_like(np.asarray(r, dtype=float)),
            theta_prime=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
            R0=0.0,
            name="flat",
        )
    if kind == "round_sphere":
        p = n - 1

        def sinc(r: np.ndarray) -> np.ndarray:
            r = np.asarray(r, dtype=float)
            return np.sinc(r / math.pi)  # sin(r)/r, exact at 0

        def th(r: np.ndarray) -> np.ndarray:
            return sinc(r) ** p

        def thp(r: np.ndarray) -> np.ndarray:
            # d/dr (sin r / r)^p = p (sin r/r)^{p-1} (cos r / r - sin r / r^2)
            r = np.asarray(r, dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                inner = np.where(r == 0.0, 0.0, np.cos(r) / r - np.sin(r) / r**2)
            return p * sinc(r) ** (p - 1) * inner

        return RadialMetric(theta=th, theta_prime=thp, R0=float(n * (n - 1)), name="round_sphere")
    if kind == "custom":
        if theta is None or R0 is None:
            raise MetricError("custom preset needs theta and R0")
        return RadialMetric(theta=theta, theta_prime=theta_prime, R0=float(R0), name="custom")
    raise MetricError(f"unknown metric preset {kind!r}")


def quadrature_weights(grid: RadialGrid, metric: RadialMetric) -> np.ndarray:
    """Trapezoid weights for integration against dv = omega_{n-1} theta r^{n-1} dr.

    Valid on graded grids as well; second-order accurate in the local spacing.
    """
    r = grid.nodes
    d = np.diff(r)
    w = np.zeros_like(r)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w * sphere_volume(grid.n - 1) * metric.density(r) * r ** (grid.n - 1)


def volume_integral(grid: RadialGrid, metric: RadialMetric, values: np.ndarray) -> float:
    """Quadrature of a nodal field against the radial volume element."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.nodes.shape:
        raise GridError(f"field has {values.shape}, grid has {grid.nodes.shape}")
    return float(quadrature_weights(grid, metric) @ values)


def fit_g_expansion(metric: RadialMetric, grid: RadialGrid, window: Optional[float] = None) -> float:
    """Least-squares r^2 Taylor coefficient of theta near the center.

    Fits theta(r) - 1 against [r^2, r^4] on nodes with r <= window (default
    r_out / 8) and returns the r^2 coefficient; for any consistent metric the
    result is -R0 / (6 n).  The r^4 column is a nuisance term that keeps the
    quadratic coefficient unbiased on curved presets.
    """
    if not grid.is_ball:
        raise GridError("expansion fit needs a ball domain (r_in = 0)")
    if window is None:
        window = grid.r_out / 8.0
    r = grid.nodes[grid.nodes <= window]
    if r.size < 4:
        raise GridError("fit window resolves fewer than 4 nodes")
    y = metric.density(r) - 1.0
    X = np.column_stack([r**2, r**4])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(coef[0])
