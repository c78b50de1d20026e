"""Closed-form constants: beta-type integrals, sphere volumes, the sharp
fourth-order Sobolev constant, and Einstein-case operator coefficients.

Everything here is an exact formula (Gamma functions and powers of pi);
the defining integrals and the recurrences between them are kept as
independent cross-checks in :func:`identity_report` and in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence


class DomainError(ValueError):
    """Arguments outside the mathematical domain of a formula."""


def _check_dimension(n: int) -> None:
    if not isinstance(n, (int,)) or isinstance(n, bool):
        raise DomainError(f"dimension must be an integer, got {n!r}")
    if n < 5:
        raise DomainError(f"dimension must be >= 5, got {n}")


@dataclass(frozen=True)
class DimensionParams:
    """Ambient dimension together with the critical exponent 2n/(n-4).

    The exponent is stored as an exact rational; use :attr:`critical_exponent`
    for the float value fed to numerics.
    """

    n: int
    two_sharp: Fraction = field(init=False)

    def __post_init__(self) -> None:
        _check_dimension(self.n)
        object.__setattr__(self, "two_sharp", Fraction(2 * self.n, self.n - 4))

    @property
    def critical_exponent(self) -> float:
        return float(self.two_sharp)


def ipq(p: float, q: float) -> float:
    """Evaluate the one-dimensional tail integral of t^q / (1+t)^p on (0, inf).

    Uses the Gamma closed form Gamma(q+1) Gamma(p-q-1) / Gamma(p), valid for
    p - q > 1 and q >= 0 (the integral converges exactly there).  Real, not
    just integer, exponents are accepted: continuation toward the critical
    exponent produces non-integer arguments downstream.
    """
    if q < 0:
        raise DomainError(f"ipq requires q >= 0, got q={q}")
    if p - q <= 1:
        raise DomainError(f"ipq requires p - q > 1 for convergence, got p={p}, q={q}")
    return math.exp(math.lgamma(q + 1.0) + math.lgamma(p - q - 1.0) - math.lgamma(p))


def sphere_volume(n: int) -> float:
    """Volume of the Euclidean unit n-sphere, 2 pi^((n+1)/2) / Gamma((n+1)/2)."""
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise DomainError(f"sphere_volume requires an integer n >= 1, got {n!r}")
    half = (n + 1) / 2.0
    return 2.0 * math.pi**half / math.gamma(half)


def best_constant_K0(n: int) -> float:
    """Sharp constant in the Euclidean inequality ||u||_{2#}^2 <= K0 ||Lap u||_2^2.

    Equivalently 1/K0 = n (n^2-4)(n-4) omega_n^{4/n} / 16.
    """
    _check_dimension(n)
    return 16.0 / (n * (n**2 - 4) * (n - 4) * sphere_volume(n) ** (4.0 / n))


def einstein_coefficients(n: int, scalar_curvature: float) -> tuple[float, float]:
    """Constant coefficients (alpha, beta) of Lap^2 + alpha Lap + beta on an
    Einstein background with the given scalar curvature."""
    _check_dimension(n)
    R = float(scalar_curvature)
    alpha = (n**2 - 2 * n - 4) / (2.0 * n * (n - 1)) * R
    beta = (n - 4) * (n**2 - 4) / (16.0 * (n - 1) ** 2) * R**2
    return alpha, beta


class IdentityRow(NamedTuple):
    name: str
    max_rel_err: float
    tol: float
    passed: bool


def identity_report(
    n_range: Sequence[int] = range(5, 13),
    ipq_fn: Callable[[float, float], float] = ipq,
) -> list[IdentityRow]:
    """Run the closed-form identity suite and return one row per identity.

    Checks, over the requested dimensions and a (p, q) grid:

    * downward recurrence  I_{p+1}^q     = (p-q-1)/p * I_p^q      (tol 1e-12)
    * upward recurrence    I_{p+1}^{q+1} = (q+1)/(p-q-1) * I_{p+1}^q  (tol 1e-12)
    * slice identity       omega_n = 2^{n-1} I_n^{n/2-1} omega_{n-1}  (tol 1e-10)
    * reciprocal identity  K0(n) * n(n^2-4)(n-4) omega_n^{4/n}/16 = 1 (tol 1e-12)

    ``ipq_fn`` is injectable so a deliberately perturbed evaluation can be
    shown to fail the suite.
    """
    rows: list[IdentityRow] = []
    dims = list(n_range)
    if not dims:
        return rows

    err_down = 0.0
    err_up = 0.0
    for p in range(3, 21):
        for q in range(0, p - 1):
            base = ipq_fn(p, q)
            down = ipq_fn(p + 1, q)
            err_down = max(err_down, abs(down - (p - q - 1) / p * base) / abs(down))
            up = ipq_fn(p + 1, q + 1)
            pred = (q + 1) / (p - q - 1) * ipq_fn(p + 1, q)
            err_up = max(err_up, abs(up - pred) / abs(up))
    rows.append(IdentityRow("ipq_recurrence_down", err_down, 1e-12, err_down <= 1e-12))
    rows.append(IdentityRow("ipq_recurrence_up", err_up, 1e-12, err_up <= 1e-12))

    err_slice = 0.0
    err_k0 = 0.0
    for n in dims:
        wn = sphere_volume(n)
        pred = 2.0 ** (n - 1) * ipq_fn(n, n / 2 - 1) * sphere_volume(n - 1)
        err_slice = max(err_slice, abs(pred - wn) / wn)
        recip = best_constant_K0(n) * n * (n**2 - 4) * (n - 4) * wn ** (4.0 / n) / 16.0
        err_k0 = max(err_k0, abs(recip - 1.0))
    rows.append(IdentityRow("sphere_volume_slice", err_slice, 1e-10, err_slice <= 1e-10))
    rows.append(IdentityRow("K0_reciprocal", err_k0, 1e-12, err_k0 <= 1e-12))
    return rows
