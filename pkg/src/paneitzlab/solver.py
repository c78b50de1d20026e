"""Constrained variational scheme: feasible points on the constraint set,
energy minimization with ray projection, multiplier extraction, exponent
continuation toward the critical power, and nodal diagnostics.

The minimized functional is the operator's quadratic form I(w) = <w, K w>
over interior fields w subject to the quadrature constraint

    C_q(w) = integral f |w + h|^q dv = gamma.

C_q is convex in the ray parameter with C_q(0) < gamma under admissibility,
so the ray projection t w has a unique positive scale factor.  Descent uses
the K-preconditioned constrained gradient; with unit step it coincides with
the fixed-point map w -> project(K^{-1} (W f |w+h|^{q-2}(w+h))), and an
Armijo backtracking line search enforces monotone energy decrease.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .boundary import AdmissibilityError
from .geometry import quadrature_weights
from .operators import DiscreteOperator, ProblemSpec, energy
from .special_functions import best_constant_K0


class BracketError(RuntimeError):
    """No feasible scale factor along the requested ray."""


@dataclass(frozen=True)
class SubcriticalSolution:
    """Minimizer record at one exponent."""

    q: float
    w: np.ndarray
    lam: float
    mu: float
    constraint_residual: float
    el_residual: float
    el_residual_sup: float
    iterations: int
    converged: bool
    t_feasible: float = float("nan")
    mu_bound: float = float("nan")


@dataclass(frozen=True)
class ContinuationTrace:
    solutions: list[SubcriticalSolution]
    schedule: list[float]
    threshold: float
    limit_mu: float = float("nan")
    threshold_met: bool = False
    failed_stage: Optional[int] = None

    @property
    def complete(self) -> bool:
        return self.failed_stage is None and len(self.solutions) == len(self.schedule)


def default_schedule(two_sharp: float, q_start: float = 2.2, halvings: int = 9) -> list[float]:
    """Geometric approach to the critical exponent: q_k = 2# - (2# - q_start)/2^k
    for k = 0..halvings-1, then exactly 2#."""
    qs = [two_sharp - (two_sharp - q_start) * 0.5**k for k in range(halvings)]
    qs.append(two_sharp)
    return qs


def _full_weights(spec: ProblemSpec) -> np.ndarray:
    return quadrature_weights(spec.grid, spec.metric)


def _constraint_of_interior(spec, op, h, q):
    W = _full_weights(spec)

    def C(w: np.ndarray) -> float:
        u = op.embed(w) + h
        return float(np.sum(W * spec.f * np.abs(u) ** q))

    return C


def _scale_to_level(Cray, gamma: float, hint: float = 1.0) -> float:
    """Positive t with Cray(t) = gamma; Cray is convex with Cray(0) < gamma."""
    c0 = Cray(0.0)
    if not c0 < gamma:
        raise BracketError(
            f"no bracket: constraint at zero scale is {c0:.6e} >= gamma = {gamma:.6e} "
            "(admissibility violated)"
        )
    t_hi = max(hint, 1e-12)
    for _ in range(200):
        if Cray(t_hi) > gamma:
            break
        t_hi *= 2.0
    else:
        raise BracketError("constraint never reaches gamma along the ray (zero direction?)")
    return float(brentq(lambda t: Cray(t) - gamma, 0.0, t_hi, xtol=1e-300, rtol=8.9e-16, maxiter=300))


def feasible_point(
    spec: ProblemSpec,
    op: DiscreteOperator,
    h: np.ndarray,
    psi1: np.ndarray,
    q: float,
) -> tuple[float, np.ndarray]:
    """Scale the first eigenfield onto the constraint set: t with
    C_q(t psi1) = gamma.  The bracket exists because C_q(0) < gamma under
    admissibility and C_q grows without bound."""
    C = _constraint_of_interior(spec, op, h, q)
    t = _scale_to_level(lambda s: C(s * psi1), spec.gamma)
    return t, t * psi1


def project_to_constraint(
    spec: ProblemSpec,
    op: DiscreteOperator,
    h: np.ndarray,
    w: np.ndarray,
    q: float,
    fallback: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Scale w along its ray onto the constraint set; already-feasible fields
    are fixed points.  A zero field has no ray solution; a fallback direction
    (typically the first eigenfield) is then scaled instead."""
    w = np.asarray(w, dtype=float)
    if not np.any(w):
        if fallback is None:
            raise BracketError("cannot project the zero field without a fallback direction")
        w = np.asarray(fallback, dtype=float)
    C = _constraint_of_interior(spec, op, h, q)
    t = _scale_to_level(lambda s: C(s * w), spec.gamma)
    return t * w


def lagrange_multiplier(
    spec: ProblemSpec,
    op: DiscreteOperator,
    h: np.ndarray,
    w: np.ndarray,
    q: float,
) -> float:
    """Multiplier from the energy identity:
    lambda = <w, K w> / (gamma - integral f |w+h|^{q-2}(w+h) h dv).

    The denominator is positive whenever the constraint level dominates the
    extension's q-integral (Hoelder); a nonpositive denominator means the
    admissibility assumption failed and is reported as such."""
    W = _full_weights(spec)
    u = op.embed(w) + h
    N = np.abs(u) ** (q - 2) * u
    denom = spec.gamma - float(np.sum(W * spec.f * N * h))
    if denom <= 0:
        raise AdmissibilityError(
            f"multiplier denominator {denom:.6e} <= 0: constraint level does not dominate "
            "the extension (admissibility violated)"
        )
    num = float(w @ (op.K @ w))
    return num / denom


@dataclass
class _DescentState:
    w: np.ndarray
    mu: float
    lam: float
    res: float
    res_sup: float


def _stationarity(spec, op, h, w, q):
    W = _full_weights(spec)
    u = op.embed(w) + h
    N = np.abs(u) ** (q - 2) * u
    g = (W * spec.f * N)[op.dof_idx]
    Kw = op.K @ w
    denom = spec.gamma - float(np.sum(W * spec.f * N * h))
    if denom <= 0:
        raise AdmissibilityError(f"multiplier denominator {denom:.6e} <= 0 during descent")
    lam = float(w @ Kw) / denom
    rho = Kw - lam * g
    res = op.quad_residual_norm(rho)
    Wd = op.W[op.dof_idx]
    mask = Wd > 0
    res_sup = float(np.max(np.abs(rho[mask]) / Wd[mask])) if mask.any() else 0.0
    return lam, rho, res, res_sup


def minimize(
    spec: ProblemSpec,
    op: DiscreteOperator,
    h: np.ndarray,
    q: float,
    w0: np.ndarray,
    tol_constraint: float = 1e-8,
    tol_stationarity: float = 1e-6,
    max_iter: int = 5000,
) -> SubcriticalSolution:
    """Minimize the energy over the constraint set from a feasible start.

    Projected descent with the K-preconditioned constrained gradient and
    ray re-projection after every step; the energy decreases monotonically
    across accepted steps.  Terminates when the quadrature norm of the
    discrete Euler-Lagrange residual K w - lambda W f |w+h|^{q-2}(w+h)
    drops below ``tol_stationarity``; non-decreasing stalls are reported as
    unconverged with diagnostics rather than raised.
    """
    op.cho()  # fails fast on a non-coercive form
    C = _constraint_of_interior(spec, op, h, q)
    w = np.asarray(w0, dtype=float).copy()
    if abs(C(w) - spec.gamma) > tol_constraint * spec.gamma:
        w = project_to_constraint(spec, op, h, w, q)
    mu = energy(spec, op, w)

    iterations = 0
    converged = False
    lam, rho, res, res_sup = _stationarity(spec, op, h, w, q)
    for iterations in range(max_iter):
        if res <= tol_stationarity:
            converged = True
            break
        d = op.solve_K(rho)
        slope = float(rho @ d)
        step = 1.0
        accepted = False
        while step >= 1e-14:
            cand = w - step * d
            if np.any(cand):
                t = _scale_to_level(lambda s: C(s * cand), spec.gamma, hint=1.0)
                cand = t * cand
                mu_cand = energy(spec, op, cand)
                if mu_cand <= mu - 1e-4 * step * slope or mu_cand < mu * (1 - 1e-15):
                    w, mu = cand, mu_cand
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        lam, rho, res, res_sup = _stationarity(spec, op, h, w, q)
    else:
        iterations = max_iter

    if not converged:
        lam, rho, res, res_sup = _stationarity(spec, op, h, w, q)
        converged = res <= tol_stationarity
    return SubcriticalSolution(
        q=q,
        w=w,
        lam=lam,
        mu=mu,
        constraint_residual=abs(C(w) - spec.gamma),
        el_residual=res,
        el_residual_sup=res_sup,
        iterations=iterations,
        converged=converged,
    )


def continuation(
    spec: ProblemSpec,
    op: DiscreteOperator,
    h: np.ndarray,
    psi1: np.ndarray,
    schedule: Optional[Sequence[float]] = None,
    tol_constraint: float = 1e-8,
    tol_stationarity: float = 1e-6,
    max_iter: int = 5000,
) -> ContinuationTrace:
    """Warm-started minimization along an increasing exponent schedule ending
    at the critical power; records energies, multipliers and the feasibility
    bound per stage and evaluates the nontriviality threshold at the end."""
    two_sharp = spec.two_sharp
    if schedule is None:
        schedule = default_schedule(two_sharp)
    schedule = [float(q) for q in schedule]
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("exponent schedule must be strictly increasing")
    if abs(schedule[-1] - two_sharp) > 1e-9:
        raise ValueError(f"schedule must end at the critical exponent {two_sharp}")
    if schedule[0] <= 2.0:
        raise ValueError("schedule must start above 2")

    psi_energy = energy(spec, op, psi1)
    threshold = spec.gamma ** (2.0 / two_sharp) / (
        best_constant_K0(spec.grid.n) * float(np.max(spec.f)) ** (2.0 / two_sharp)
    )

    solutions: list[SubcriticalSolution] = []
    failed: Optional[int] = None
    w_prev: Optional[np.ndarray] = None
    for k, q in enumerate(schedule):
        try:
            t_q, w_feas = feasible_point(spec, op, h, psi1, q)
            start = w_feas
            if w_prev is not None and np.any(w_prev):
                warm = project_to_constraint(spec, op, h, w_prev, q)
                if energy(spec, op, warm) < energy(spec, op, start):
                    start = warm
            sol = minimize(
                spec, op, h, q, start,
                tol_constraint=tol_constraint,
                tol_stationarity=tol_stationarity,
                max_iter=max_iter,
            )
            sol = SubcriticalSolution(
                **{
                    **sol.__dict__,
                    "t_feasible": t_q,
                    "mu_bound": t_q**2 * psi_energy,
                }
            )
            solutions.append(sol)
            if not sol.converged:
                failed = k
                break
            w_prev = sol.w
        except (BracketError, AdmissibilityError):
            failed = k
            break

    limit_mu = solutions[-1].mu if solutions else float("nan")
    met = bool(solutions) and failed is None and limit_mu < threshold
    return ContinuationTrace(
        solutions=solutions,
        schedule=schedule,
        threshold=threshold,
        limit_mu=limit_mu,
        threshold_met=met,
        failed_stage=failed,
    )


def nodal_check(u: np.ndarray, rtol: float = 1e-9) -> int:
    """Count strict sign changes of a nodal field along the radius.

    Entries within rtol * max|u| of zero are treated as zero and skipped, so
    tangential touches do not count as crossings."""
    u = np.asarray(u, dtype=float)
    scale = float(np.max(np.abs(u))) if u.size else 0.0
    if scale == 0.0:
        return 0
    signs = np.sign(u[np.abs(u) > rtol * scale])
    return int(np.count_nonzero(signs[1:] != signs[:-1]))
