"""Linear sub-problems: boundary-data extension and the first clamped
biharmonic eigenpair, plus the admissibility test for the constraint level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import (
    DiscreteOperator,
    NonCoerciveError,
    ProblemSpec,
    coercivity_check,
)


class AdmissibilityError(ValueError):
    """Constraint level too small relative to the boundary extension."""


@dataclass(frozen=True)
class ExtensionField:
    """Unique P-harmonic field matching the boundary data.

    ``h`` is a full-grid field whose boundary nodes carry the Dirichlet
    values exactly; ``residual`` is the pointwise sup-norm of the discrete
    operator applied to h on the interior (solver residual).
    """

    h: np.ndarray
    residual: float


@dataclass(frozen=True)
class EigenPair:
    """Smallest clamped-bilaplacian eigenpair, normalized in weighted L^2."""

    lambda1: float
    psi1: np.ndarray  # interior dofs
    residual: float


def _data_vectors(spec: ProblemSpec, op: DiscreteOperator) -> tuple[np.ndarray, np.ndarray]:
    phi1 = np.zeros(op.bdry_idx.size)
    phi2 = np.zeros(op.bdry_idx.size)
    for k, idx in enumerate(op.bdry_idx.tolist()):
        comp = spec.boundary.outer if idx == spec.grid.m - 1 else spec.boundary.inner
        phi1[k], phi2[k] = comp
    return phi1, phi2


def solve_extension(spec: ProblemSpec, op: DiscreteOperator) -> ExtensionField:
    """Solve P h = 0 with h = phi1, outward normal derivative = phi2.

    Refuses when the discrete form is not coercive (uniqueness would not be
    certified).  Zero data returns the zero field exactly.
    """
    lam = coercivity_check(spec, op)
    if lam <= 0:
        raise NonCoerciveError(
            f"operator not coercive (smallest form/H^2 eigenvalue {lam:.3e} <= 0); "
            "extension uniqueness not certified"
        )
    phi1, phi2 = _data_vectors(spec, op)
    if np.all(phi1 == 0.0) and np.all(phi2 == 0.0):
        return ExtensionField(h=np.zeros(spec.grid.m), residual=0.0)

    d = op.data_phi1 @ phi1 + op.data_phi2 @ phi2
    g = op.Gm_phi1 @ phi1
    rhs = -(op.lap_clamped.T @ (op.W * d) + op.Gm_dof.T @ (op.Wm * op.alpha_mid * g))
    w = op.solve_K(rhs)

    rho = op.K @ w - rhs
    Wd = op.W[op.dof_idx]
    mask = Wd > 0
    residual = float(np.max(np.abs(rho[mask]) / Wd[mask])) if mask.any() else 0.0
    return ExtensionField(h=op.embed(w, boundary_values=phi1), residual=residual)


def bilaplacian_form(op: DiscreteOperator) -> np.ndarray:
    """Clamped biharmonic stiffness (no first- or zeroth-order terms)."""
    B = op.lap_clamped.T @ (op.W[:, None] * op.lap_clamped)
    return 0.5 * (B + B.T)


def first_eigenpair(
    spec: ProblemSpec,
    op: DiscreteOperator,
    tol: float = 1e-12,
    max_iter: int = 500,
) -> EigenPair:
    """Smallest eigenpair of the clamped bilaplacian against the dv mass.

    Inverse iteration on the factorized biharmonic form; only the lowest
    eigenpair is needed.  The eigenfield is normalized to unit weighted-L^2
    norm (sign fixed so the largest component is positive).
    """
    import scipy.linalg

    B = bilaplacian_form(op)
    Wd = op.W[op.dof_idx]
    try:
        cho = scipy.linalg.cho_factor(B)
    except scipy.linalg.LinAlgError as exc:
        raise NonCoerciveError(f"clamped bilaplacian not positive definite: {exc}") from exc

    r = spec.grid.nodes[op.dof_idx]
    x = (r - spec.grid.r_in + 0.25 * spec.grid.r_out) * (spec.grid.r_out - r)
    x /= np.sqrt(x @ (Wd * x))
    lam_old = np.inf
    for _ in range(max_iter):
        y = scipy.linalg.cho_solve(cho, Wd * x)
        y /= np.sqrt(y @ (Wd * y))
        lam = float(y @ (B @ y))
        if abs(lam - lam_old) <= tol * abs(lam):
            x = y
            break
        lam_old = lam
        x = y
    lam = float(x @ (B @ x))
    res_vec = B @ x - lam * (Wd * x)
    residual = op.quad_residual_norm(res_vec)
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    return EigenPair(lambda1=lam, psi1=x, residual=residual)


def critical_level(spec: ProblemSpec, h: np.ndarray) -> float:
    """The critical-power integral of the extension: f |h|^{2#} against dv."""
    from .geometry import quadrature_weights

    W = quadrature_weights(spec.grid, spec.metric)
    return float(np.sum(W * spec.f * np.abs(h) ** spec.two_sharp))


def admissibility_check(spec: ProblemSpec, h: np.ndarray) -> bool:
    """True iff the constraint level strictly dominates the extension's
    critical-power integral."""
    return critical_level(spec, h) < spec.gamma
