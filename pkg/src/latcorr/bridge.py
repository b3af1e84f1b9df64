"""Forward bridge functions for the six variable-type pairings and the
direct (per-pair optimization) inversion.

Each bridge F maps a latent correlation r to the population value of sample
Kendall's tau-a for the pair's type combination, at fixed normal-scale
thresholds.  All six satisfy F(0, .) = 0 and are strictly increasing in r,
so inversion is a bounded scalar minimization of the squared residual.

Canonical argument order is fixed here and never swapped internally: the
first threshold belongs to the binary variable for BC, to the truncated
variable for TC and TB (TB's second is the binary one).  Callers estimating
from data are responsible for swapping variable roles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import fminbound

from .errors import DomainError, NumericalError
from .mvn import _phi, _qvn_impl, _tvn_impl, bvn_cdf

__all__ = [
    "R_BOUND",
    "INVERSION_XATOL",
    "INVERSION_RESIDUAL_TOL",
    "CaseKind",
    "InversionInfo",
    "bridge_forward",
    "bridge_inverse_org",
    "cc_inverse_closed",
    "delta_from_zero_proportion",
]

# Optimizer search domain: correlations bounded away from +-1, where the
# bridge derivative degenerates (the estimator's consistency needs the same).
R_BOUND = 0.999
# Convergence tolerance on r for the bounded minimization.
INVERSION_XATOL = 1e-8
# Residual |F(r*) - tau| above which a boundary minimizer is flagged saturated.
INVERSION_RESIDUAL_TOL = 1e-6

_SQRT1_2 = 1.0 / math.sqrt(2.0)


class CaseKind(str, Enum):
    """Variable-type pairing of a pair: continuous/binary/truncated combos."""

    CC = "cc"
    BC = "bc"
    BB = "bb"
    TC = "tc"
    TT = "tt"
    TB = "tb"

    @property
    def n_deltas(self) -> int:
        return _N_DELTAS[self]

    @property
    def grid_dim(self) -> int:
        # Interpolation dimensionality: tau axis plus one per threshold.
        return 1 + _N_DELTAS[self]


_N_DELTAS = {
    CaseKind.CC: 0,
    CaseKind.BC: 1,
    CaseKind.TC: 1,
    CaseKind.BB: 2,
    CaseKind.TT: 2,
    CaseKind.TB: 2,
}


def _tc_corr(r: float) -> np.ndarray:
    return np.array([
        [1.0, _SQRT1_2, r * _SQRT1_2],
        [_SQRT1_2, 1.0, r],
        [r * _SQRT1_2, r, 1.0],
    ])


def _tb_corr1(r: float) -> np.ndarray:
    return np.array([
        [1.0, -r, _SQRT1_2],
        [-r, 1.0, -r * _SQRT1_2],
        [_SQRT1_2, -r * _SQRT1_2, 1.0],
    ])


def _tb_corr2(r: float) -> np.ndarray:
    return np.array([
        [1.0, 0.0, -_SQRT1_2],
        [0.0, 1.0, -r * _SQRT1_2],
        [-_SQRT1_2, -r * _SQRT1_2, 1.0],
    ])


def _tt_corr1(r: float) -> np.ndarray:
    q = _SQRT1_2
    return np.array([
        [1.0, 0.0, q, -r * q],
        [0.0, 1.0, -r * q, q],
        [q, -r * q, 1.0, -r],
        [-r * q, q, -r, 1.0],
    ])


def _tt_corr2(r: float) -> np.ndarray:
    q = _SQRT1_2
    return np.array([
        [1.0, r, q, r * q],
        [r, 1.0, r * q, q],
        [q, r * q, 1.0, r],
        [r * q, q, r, 1.0],
    ])


def _forward_fn(case: CaseKind, deltas: tuple[float, ...]):
    """Build F(r) with the threshold-only constants precomputed."""
    if case is CaseKind.CC:
        return lambda r: (2.0 / math.pi) * math.asin(r)
    if case is CaseKind.BC:
        (d1,) = deltas
        const = -2.0 * _phi(d1)
        return lambda r: 4.0 * bvn_cdf(d1, 0.0, r * _SQRT1_2) + const
    if case is CaseKind.BB:
        d1, d2 = deltas
        const = -2.0 * _phi(d1) * _phi(d2)
        return lambda r: 2.0 * bvn_cdf(d1, d2, r) + const
    if case is CaseKind.TC:
        (d1,) = deltas
        const = -2.0 * bvn_cdf(-d1, 0.0, _SQRT1_2)
        b = [-d1, 0.0, 0.0]
        return lambda r: const + 4.0 * _tvn_impl(b, _tc_corr(r))
    if case is CaseKind.TB:
        d1, d2 = deltas
        const = 2.0 * (1.0 - _phi(d1)) * _phi(d2)
        b = [-d1, d2, 0.0]
        return lambda r: const - 2.0 * _tvn_impl(b, _tb_corr1(r)) - 2.0 * _tvn_impl(b, _tb_corr2(r))
    if case is CaseKind.TT:
        d1, d2 = deltas
        b = [-d1, -d2, 0.0, 0.0]
        return lambda r: -2.0 * _qvn_impl(b, _tt_corr1(r)) + 2.0 * _qvn_impl(b, _tt_corr2(r))
    raise DomainError(f"unknown case kind {case!r}")


def _check_args(case: CaseKind, deltas) -> tuple[float, ...]:
    deltas = tuple(float(d) for d in deltas)
    if len(deltas) != case.n_deltas:
        raise DomainError(
            f"case {case.value} takes {case.n_deltas} threshold(s), got {len(deltas)}"
        )
    if any(not math.isfinite(d) for d in deltas):
        raise DomainError(f"thresholds must be finite, got {deltas!r}")
    return deltas


def bridge_forward(case: CaseKind, r: float, deltas=()) -> float:
    """Population Kendall's tau-a at latent correlation r and thresholds deltas."""
    if not math.isfinite(r) or abs(r) > 1.0:
        raise DomainError(f"bridge_forward requires |r| <= 1, got {r!r}")
    deltas = _check_args(case, deltas)
    return _forward_fn(case, deltas)(r)


def cc_inverse_closed(tau: float) -> float:
    """Closed-form inverse of the continuous/continuous bridge: sin(pi*tau/2)."""
    if not math.isfinite(tau) or abs(tau) > 1.0:
        raise DomainError(f"cc_inverse_closed requires |tau| <= 1, got {tau!r}")
    return math.sin(math.pi * tau / 2.0)


def delta_from_zero_proportion(pi0: float) -> float:
    """Normal-scale threshold Phi^{-1}(pi0); -inf/+inf at pi0 = 0/1."""
    if math.isnan(pi0) or pi0 < 0.0 or pi0 > 1.0:
        raise DomainError(f"zero proportion must be in [0, 1], got {pi0!r}")
    if pi0 == 0.0:
        return -math.inf
    if pi0 == 1.0:
        return math.inf
    from scipy.special import ndtri

    return float(ndtri(pi0))


@dataclass(frozen=True)
class InversionInfo:
    """Diagnostics of a bridge inversion."""

    residual: float
    saturated: bool
    n_evals: int


def bridge_inverse_org(
    case: CaseKind,
    tau_hat: float,
    deltas=(),
    *,
    bracket: tuple[float, float] | None = None,
    full_output: bool = False,
):
    """Latent correlation minimizing (F(r) - tau_hat)^2 over [-R_BOUND, R_BOUND].

    Uses bounded scalar minimization (golden section with parabolic
    acceleration), converging to INVERSION_XATOL on r.  The CC case uses the
    exact closed-form inverse instead of the optimizer.

    When tau_hat lies outside the attainable range of F, the boundary
    minimizer is returned and flagged ``saturated`` in the diagnostics.
    ``bracket`` optionally narrows the search interval (callers must
    guarantee the minimizer lies inside; used by grid precomputation sweeps).
    """
    if not math.isfinite(tau_hat) or abs(tau_hat) > 1.0:
        raise DomainError(f"bridge_inverse_org requires |tau_hat| <= 1, got {tau_hat!r}")
    deltas = _check_args(case, deltas)

    if case is CaseKind.CC:
        r = cc_inverse_closed(tau_hat)
        return (r, InversionInfo(0.0, False, 0)) if full_output else r

    lo, hi = bracket if bracket is not None else (-R_BOUND, R_BOUND)
    if not (-R_BOUND <= lo < hi <= R_BOUND):
        raise DomainError(f"invalid bracket {bracket!r}")
    forward = _forward_fn(case, deltas)

    # Monotonicity makes the argmin of the squared residual exact at the
    # interval edge whenever tau_hat lies beyond the attainable range there;
    # detect that with a single edge evaluation instead of a full search.
    if tau_hat > 0.0:
        f_hi = forward(hi)
        if tau_hat >= f_hi:
            residual = tau_hat - f_hi
            info = InversionInfo(residual, residual > INVERSION_RESIDUAL_TOL, 1)
            return (hi, info) if full_output else hi
    elif tau_hat < 0.0:
        f_lo = forward(lo)
        if tau_hat <= f_lo:
            residual = f_lo - tau_hat
            info = InversionInfo(residual, residual > INVERSION_RESIDUAL_TOL, 1)
            return (lo, info) if full_output else lo

    def objective(r: float) -> float:
        return (forward(r) - tau_hat) ** 2

    xopt, fval, ierr, n_evals = fminbound(
        objective, lo, hi, xtol=INVERSION_XATOL, maxfun=500, full_output=True
    )
    if ierr != 0:
        raise NumericalError(
            f"bridge inversion did not converge: case={case.value} tau={tau_hat!r} "
            f"deltas={deltas!r} after {n_evals} evaluations"
        )
    r = float(xopt)
    residual = math.sqrt(max(fval, 0.0))
    saturated = residual > INVERSION_RESIDUAL_TOL
    if saturated:
        # A monotone bridge leaves a large residual only at the domain edge;
        # snap to it so saturated estimates are exactly the boundary value.
        near_lo = r - lo < 1e-5
        near_hi = hi - r < 1e-5
        if not (near_lo or near_hi):
            raise NumericalError(
                f"bridge inversion stalled at interior point: case={case.value} "
                f"tau={tau_hat!r} deltas={deltas!r} r={r!r} residual={residual!r}"
            )
        r = lo if near_lo else hi
    if full_output:
        return r, InversionInfo(residual, saturated, int(n_evals))
    return r
