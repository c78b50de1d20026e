"""Discrete radial Paneitz-Branson operator with clamped boundary handling.

The operator acts on radial fields over a uniform grid as

    P u = Lap_g^2 u - (1/(theta r^{n-1})) d/dr(theta r^{n-1} alpha u') + a u,
    Lap_g u = -u'' - ((n-1)/r + theta'/theta) u',

with clamped conditions (u = normal derivative = 0) on each boundary
component.  Assembly is variational: the discrete energy

    E(w) = sum W (Lap_h w)^2 + sum Wm alpha_m ((Dw)_m)^2 + sum W a w^2

is the quadrature of the continuum quadratic form, and the stiffness matrix
K is its Hessian/2.  Symmetry of K and the identity energy == <w, K w> are
then exact, not approximate; pointwise consistency of K/W against the
differential operator holds at interior nodes away from the boundary
closure (second order in the spacing).

Boundary data enters affinely: for a field with known value phi1 and known
outward normal derivative phi2 on a component, the second derivative at the
boundary node is eliminated through

    u''(b) = [8 u(b -+ h) - u(b -+ 2h) - 7 phi1 + 6 phi2 h] / (2 h^2) + O(h^2),

so extension solves reuse the same SPD clamped matrix with a data RHS.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .geometry import CurvatureData, GridError, RadialGrid, RadialMetric, quadrature_weights
from .special_functions import DimensionParams


class AssemblyError(ValueError):
    """Operator assembly failed (bad coefficients or density)."""


class NonCoerciveError(RuntimeError):
    """The quadratic form fails discrete coercivity; linear solves refused."""


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet value and outward normal derivative per boundary component."""

    outer: tuple[float, float]
    inner: Optional[tuple[float, float]] = None

    def is_homogeneous(self) -> bool:
        vals = list(self.outer) + (list(self.inner) if self.inner else [])
        return all(v == 0.0 for v in vals)


@dataclass(frozen=True)
class ProblemSpec:
    """Full radial problem instance.

    ``a``, ``alpha`` and ``f`` are nodal arrays on the grid; ``f`` must be
    strictly positive.  ``gamma`` is the constraint level; its admissibility
    relative to the boundary extension is checked downstream once the
    extension is available.
    """

    grid: RadialGrid
    metric: RadialMetric
    a: np.ndarray
    alpha: np.ndarray
    f: np.ndarray
    boundary: BoundaryData
    gamma: float
    curv: CurvatureData

    def __post_init__(self) -> None:
        m = self.grid.m
        for name in ("a", "alpha", "f"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (m,):
                raise AssemblyError(f"{name} must be a nodal array of length {m}")
            object.__setattr__(self, name, arr)
        if np.any(self.f <= 0):
            raise AssemblyError("f must be positive at all nodes")
        if self.grid.is_ball and self.boundary.inner is not None:
            raise AssemblyError("a ball has a single boundary component (outer)")
        if not self.grid.is_ball and self.boundary.inner is None:
            raise AssemblyError("an annulus needs data on both boundary components")
        if self.gamma <= 0:
            raise AssemblyError("constraint level gamma must be positive")
        self.metric.validate_on(self.grid)

    @property
    def dims(self) -> DimensionParams:
        return DimensionParams(self.grid.n)

    @property
    def two_sharp(self) -> float:
        return self.dims.critical_exponent

    @staticmethod
    def build(grid, metric, a=0.0, alpha=0.0, f=1.0, boundary=None, gamma=1.0, curv=None):
        """Convenience constructor: scalars/callables are tabulated on the grid."""

        def tab(v):
            if callable(v):
                return np.asarray(v(grid.nodes), dtype=float)
            v = np.asarray(v, dtype=float)
            return np.full(grid.m, float(v)) if v.ndim == 0 else v

        if boundary is None:
            boundary = BoundaryData(outer=(0.0, 0.0), inner=None if grid.is_ball else (0.0, 0.0))
        if curv is None:
            a_arr, f_arr = tab(a), tab(f)
            alpha_arr = tab(alpha)
            curv = CurvatureData(
                R0=metric.R0, trA0=grid.n * float(alpha_arr[0]), lap_f_over_f=0.0, f0=float(f_arr[0])
            )
            return ProblemSpec(grid, metric, a_arr, alpha_arr, f_arr, boundary, gamma, curv)
        return ProblemSpec(grid, metric, tab(a), tab(alpha), tab(f), boundary, gamma, curv)


def _drift(grid: RadialGrid, metric: RadialMetric, r: np.ndarray) -> np.ndarray:
    """First-order coefficient (n-1)/r + theta'/theta of -Lap_g."""
    with np.errstate(divide="ignore"):
        geo = np.where(r == 0.0, np.inf, (grid.n - 1) / r)
    return geo + metric.log_derivative(r)


def assemble_laplacian(grid: RadialGrid, metric: RadialMetric) -> np.ndarray:
    """Dense matrix of Lap_g on all grid nodes for smooth radial fields.

    Central second-order stencils at interior nodes; parity closure at the
    center of a ball (u'(0) = 0 for smooth radial functions); one-sided
    second-order stencils at endpoint nodes otherwise.  This matrix makes no
    boundary-condition assumption and serves oracles and Gram matrices.
    """
    r = grid.nodes
    h = grid.spacing
    m = grid.m
    n = grid.n
    c = _drift(grid, metric, r)
    L = np.zeros((m, m))
    for i in range(1, m - 1):
        L[i, i - 1] = -1.0 / h**2 + c[i] / (2 * h)
        L[i, i] = 2.0 / h**2
        L[i, i + 1] = -1.0 / h**2 - c[i] / (2 * h)
    if grid.is_ball:
        L[0, 0] = 2.0 * n / h**2
        L[0, 1] = -2.0 * n / h**2
    else:
        # -u'' via (2,-5,4,-1)/h^2, -c u' via one-sided (-3,4,-1)/(2h)
        L[0, :4] += np.array([-2.0, 5.0, -4.0, 1.0]) / h**2
        L[0, :3] += -c[0] * np.array([-3.0, 4.0, -1.0]) / (2 * h)
    L[m - 1, m - 4 :] += np.array([1.0, -4.0, 5.0, -2.0]) / h**2
    L[m - 1, m - 3 :] += -c[m - 1] * np.array([1.0, -4.0, 3.0]) / (2 * h)
    return L


@dataclass
class DiscreteOperator:
    """Assembled clamped operator: stiffness K on interior dofs plus the
    affine boundary-data maps needed for extension solves.

    dof_idx     indices of unknown nodes within the full grid
    bdry_idx    indices of clamped (data-carrying) nodes
    K           symmetric stiffness (quadrature included)
    lap_clamped (m x N) clamped Laplacian: full-grid Lap values of an
                interior field extended by zero boundary data
    data_phi1/2 (m x k) affine contribution of the component data to the
                full-grid Laplacian values
    W           full-grid trapezoid dv-weights; Wm, Gm midpoint panel
                weights and gradient map for the first-order term
    """

    grid: RadialGrid
    metric: RadialMetric
    dof_idx: np.ndarray
    bdry_idx: np.ndarray
    K: np.ndarray
    lap_clamped: np.ndarray
    data_phi1: np.ndarray
    data_phi2: np.ndarray
    W: np.ndarray
    Wm: np.ndarray
    Gm_dof: np.ndarray
    Gm_phi1: np.ndarray
    alpha_mid: np.ndarray
    a: np.ndarray
    _chol: Optional[tuple] = field(default=None, repr=False)
    _coercivity: Optional[float] = field(default=None, repr=False)

    @property
    def n_dof(self) -> int:
        return self.dof_idx.size

    def embed(self, w: np.ndarray, boundary_values: Optional[np.ndarray] = None) -> np.ndarray:
        """Scatter interior dofs into a full-grid field."""
        u = np.zeros(self.grid.m)
        u[self.dof_idx] = w
        if boundary_values is not None:
            u[self.bdry_idx] = boundary_values
        return u

    def restrict(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float)[self.dof_idx]

    def apply_K(self, w: np.ndarray) -> np.ndarray:
        return self.K @ w

    def cho(self):
        if self._chol is None:
            try:
                self._chol = scipy.linalg.cho_factor(self.K)
            except scipy.linalg.LinAlgError as exc:
                raise NonCoerciveError(f"stiffness matrix not positive definite: {exc}") from exc
        return self._chol

    def solve_K(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self.cho(), rhs)

    def pointwise(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(K w / W) at dof nodes with positive weight, with their indices.

        This is the discrete pointwise value of P w; the center node of a
        ball carries zero trapezoid weight and is excluded.
        """
        Wd = self.W[self.dof_idx]
        mask = Wd > 0
        return (self.K @ w)[mask] / Wd[mask], self.dof_idx[mask]

    def quad_residual_norm(self, rho: np.ndarray) -> float:
        """Quadrature norm of the pointwise field rho/W given weighted rho."""
        Wd = self.W[self.dof_idx]
        mask = Wd > 0
        return float(np.sqrt(np.sum(rho[mask] ** 2 / Wd[mask])))


def assemble_paneitz(spec: ProblemSpec) -> DiscreteOperator:
    """Assemble the clamped operator for a problem instance."""
    grid, metric = spec.grid, spec.metric
    r = grid.nodes
    h = grid.spacing
    m = grid.m
    n = grid.n

    theta = metric.density(r)
    if np.any(theta <= 0):
        raise AssemblyError("volume density must stay positive on the grid")

    outer = m - 1
    inner = None if grid.is_ball else 0
    bdry_idx = np.array([outer] if inner is None else [inner, outer])
    dof_idx = np.array([i for i in range(m) if i not in set(bdry_idx.tolist())])
    ncomp = bdry_idx.size

    c = _drift(grid, metric, r)

    # Full-grid Laplacian of a clamped-extended interior field, plus the
    # affine data maps.  Generic interior rows are the free central stencils;
    # boundary rows use the one-sided closure with (phi1, phi2).
    Lfull = np.zeros((m, m))
    D1 = np.zeros((m, ncomp))
    D2 = np.zeros((m, ncomp))
    for i in range(1, m - 1):
        Lfull[i, i - 1] = -1.0 / h**2 + c[i] / (2 * h)
        Lfull[i, i] = 2.0 / h**2
        Lfull[i, i + 1] = -1.0 / h**2 - c[i] / (2 * h)
    if grid.is_ball:
        Lfull[0, 0] = 2.0 * n / h**2
        Lfull[0, 1] = -2.0 * n / h**2

    comp_of = {idx: k for k, idx in enumerate(bdry_idx.tolist())}

    # clamped closure rows: Lap at the boundary node itself
    k_out = comp_of[outer]
    Lfull[outer, outer - 1] += -8.0 / (2 * h**2)
    Lfull[outer, outer - 2] += 1.0 / (2 * h**2)
    D1[outer, k_out] += 7.0 / (2 * h**2)
    D2[outer, k_out] += -3.0 / h - c[outer]
    if inner is not None:
        k_in = comp_of[inner]
        Lfull[inner, 1] += -8.0 / (2 * h**2)
        Lfull[inner, 2] += 1.0 / (2 * h**2)
        D1[inner, k_in] += 7.0 / (2 * h**2)
        D2[inner, k_in] += -3.0 / h + c[inner]

    # neighbor rows see the boundary value phi1 through their stencil
    for b in bdry_idx.tolist():
        k = comp_of[b]
        for i in range(max(1, b - 2), min(m - 1, b + 3)):
            if i != b and Lfull[i, b] != 0.0:
                D1[i, k] += Lfull[i, b]
    lap_clamped = Lfull[:, dof_idx]

    # midpoint gradient map for the first-order (tensor-profile) term
    r_mid = 0.5 * (r[:-1] + r[1:])
    theta_mid = metric.density(r_mid)
    from .special_functions import sphere_volume

    Wm = h * sphere_volume(n - 1) * theta_mid * r_mid ** (n - 1)
    Gfull = (np.eye(m, dtype=float)[1:] - np.eye(m, dtype=float)[:-1]) / h
    Gm_dof = Gfull[:, dof_idx]
    Gm_phi1 = Gfull[:, bdry_idx]
    alpha_mid = 0.5 * (spec.alpha[:-1] + spec.alpha[1:])

    W = quadrature_weights(grid, metric)

    K = lap_clamped.T @ (W[:, None] * lap_clamped)
    K += Gm_dof.T @ ((Wm * alpha_mid)[:, None] * Gm_dof)
    K[np.arange(dof_idx.size), np.arange(dof_idx.size)] += W[dof_idx] * spec.a[dof_idx]
    K = 0.5 * (K + K.T)

    return DiscreteOperator(
        grid=grid,
        metric=metric,
        dof_idx=dof_idx,
        bdry_idx=bdry_idx,
        K=K,
        lap_clamped=lap_clamped,
        data_phi1=D1,
        data_phi2=D2,
        W=W,
        Wm=Wm,
        Gm_dof=Gm_dof,
        Gm_phi1=Gm_phi1,
        alpha_mid=alpha_mid,
        a=spec.a,
    )


def energy(spec: ProblemSpec, op: DiscreteOperator, w: np.ndarray) -> float:
    """Quadratic energy of a clamped field: quadrature of
    (Lap w)^2 + alpha (w')^2 + a w^2 against dv.

    Computed term by term from the discrete Laplacian and midpoint gradients;
    equals <w, K w> identically by construction of K.
    """
    w = np.asarray(w, dtype=float)
    lap = op.lap_clamped @ w
    grad = op.Gm_dof @ w
    bi = float(np.sum(op.W * lap**2))
    first = float(np.sum(op.Wm * op.alpha_mid * grad**2))
    zero = float(np.sum(op.W[op.dof_idx] * spec.a[op.dof_idx] * w**2))
    return bi + first + zero


def constraint_value(spec: ProblemSpec, w: np.ndarray, h: np.ndarray, q: float) -> float:
    """Quadrature of f |w + h|^q against dv; w is an interior field, h a
    full-grid field carrying the boundary data."""
    if q < 2.0 or q > spec.two_sharp + 1e-12:
        raise ValueError(f"exponent q={q} outside [2, {spec.two_sharp}]")
    op_w = np.zeros(spec.grid.m)
    # w given on interior dofs; infer the dof layout from the grid shape
    dof = _dof_indices(spec.grid)
    op_w[dof] = np.asarray(w, dtype=float)
    u = op_w + np.asarray(h, dtype=float)
    Wq = quadrature_weights(spec.grid, spec.metric)
    return float(np.sum(Wq * spec.f * np.abs(u) ** q))


def _dof_indices(grid: RadialGrid) -> np.ndarray:
    if grid.is_ball:
        return np.arange(0, grid.m - 1)
    return np.arange(1, grid.m - 1)


def h2_gram(spec: ProblemSpec, op: DiscreteOperator) -> np.ndarray:
    """Discrete H^2 Gram on the clamped space:
    ||Lap u||^2 + ||grad u||^2 + ||u||^2 in quadrature."""
    G = op.lap_clamped.T @ (op.W[:, None] * op.lap_clamped)
    G += op.Gm_dof.T @ (op.Wm[:, None] * op.Gm_dof)
    G[np.arange(op.n_dof), np.arange(op.n_dof)] += op.W[op.dof_idx]
    return 0.5 * (G + G.T)


def coercivity_check(spec: ProblemSpec, op: DiscreteOperator) -> float:
    """Smallest generalized eigenvalue of (K, H^2-Gram) on the clamped space.

    A positive value certifies discrete coercivity and is the constant
    estimate; cached on the operator.
    """
    if op._coercivity is None:
        G = h2_gram(spec, op)
        vals = scipy.linalg.eigh(op.K, G, eigvals_only=True, subset_by_index=[0, 0])
        op._coercivity = float(vals[0])
    return op._coercivity
