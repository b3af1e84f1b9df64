"""Per-pair latent correlation estimation and matrix assembly.

Three methods:

- ORG: bounded scalar minimization of the squared bridge residual per pair.
- ML: multilinear interpolation of the precomputed inverse-bridge grid;
  queries outside the grid hull fall back to ORG (flagged in provenance).
- MLBD: hybrid; interpolates only when |tau_hat| is safely inside the
  attainable range of Kendall's tau implied by the zero proportions
  (|tau_hat| <= boundary_constant * ABD), otherwise uses ORG.

The continuous/continuous case always uses the closed-form inverse
sin(pi*tau/2); it is boundary-exempt (its attainable bound is 1).
"""

from __future__ import annotations

from collections.abc import Mapping
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .bridge import CaseKind, bridge_inverse_org, cc_inverse_closed, delta_from_zero_proportion
from .errors import DegenerateColumnError, DomainError, MissingGridError, OutOfHullError
from .interp import InterpolationGrid, multilinear_interpolate
from .kendall import PairStatistics, kendall_tau_a, zero_proportion

__all__ = [
    "DEFAULT_BOUNDARY_CONSTANT",
    "VariableType",
    "EstimationMethod",
    "PairEstimate",
    "LatentCorrelationMatrix",
    "classify_pair",
    "abd",
    "estimate_pair",
    "estimate_matrix",
    "infer_types",
]

# The hybrid interpolates when |tau_hat| <= constant * ABD; adaptable per case.
DEFAULT_BOUNDARY_CONSTANT = 0.9


class VariableType(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    TRUNCATED = "truncated"


class EstimationMethod(str, Enum):
    ORG = "org"
    ML = "ml"
    MLBD = "mlbd"


_CASE_TABLE = {
    (VariableType.CONTINUOUS, VariableType.CONTINUOUS): (CaseKind.CC, False),
    (VariableType.BINARY, VariableType.CONTINUOUS): (CaseKind.BC, False),
    (VariableType.CONTINUOUS, VariableType.BINARY): (CaseKind.BC, True),
    (VariableType.BINARY, VariableType.BINARY): (CaseKind.BB, False),
    (VariableType.TRUNCATED, VariableType.CONTINUOUS): (CaseKind.TC, False),
    (VariableType.CONTINUOUS, VariableType.TRUNCATED): (CaseKind.TC, True),
    (VariableType.TRUNCATED, VariableType.TRUNCATED): (CaseKind.TT, False),
    (VariableType.TRUNCATED, VariableType.BINARY): (CaseKind.TB, False),
    (VariableType.BINARY, VariableType.TRUNCATED): (CaseKind.TB, True),
}


def classify_pair(type_x: VariableType, type_y: VariableType) -> tuple[CaseKind, bool]:
    """Map an unordered type pair to its case kind plus a swap flag.

    The swap flag is True when (x, y) must be exchanged to match the bridge's
    canonical argument order (binary first for BC; truncated first for TC and
    TB, with TB's second argument binary).
    """
    return _CASE_TABLE[(VariableType(type_x), VariableType(type_y))]


def abd(case: CaseKind, pi0_x: float, pi0_y: float | None = None) -> float:
    """Approximate attainable bound on |tau_hat| given the zero proportions.

    Arguments follow the canonical case order: pi0_x belongs to the first
    (truncated for TC/TB, binary for BC) variable, pi0_y to the second.
    Derived by counting the pairs that tie at zero and therefore drop out of
    the tau numerator.
    """
    case = CaseKind(case)
    if not 0.0 <= pi0_x <= 1.0:
        raise DomainError(f"pi0_x must be in [0, 1], got {pi0_x!r}")
    if case in (CaseKind.BB, CaseKind.TT, CaseKind.TB):
        if pi0_y is None:
            raise DomainError(f"case {case.value} needs both zero proportions")
        if not 0.0 <= pi0_y <= 1.0:
            raise DomainError(f"pi0_y must be in [0, 1], got {pi0_y!r}")
    if case is CaseKind.CC:
        return 1.0
    if case is CaseKind.TC:
        return 1.0 - pi0_x**2
    if case is CaseKind.BC:
        return 2.0 * pi0_x * (1.0 - pi0_x)
    if case is CaseKind.TT:
        hi = max(pi0_x, pi0_y)
        return 1.0 - hi**2
    if case is CaseKind.BB:
        return 2.0 * min(pi0_x, pi0_y) * (1.0 - max(pi0_x, pi0_y))
    # TB: x truncated, y binary.
    m = max(pi0_y, 1.0 - pi0_y)
    return 2.0 * m * (1.0 - max(m, pi0_x))


@dataclass(frozen=True)
class PairEstimate:
    """A single latent correlation estimate with provenance."""

    r_hat: float
    method_used: EstimationMethod  # ORG or ML: the route that produced r_hat
    saturated: bool
    out_of_hull: bool
    stats: PairStatistics

    def __post_init__(self):
        if abs(self.r_hat) > 1.0:
            raise DomainError(f"|r_hat| must be <= 1, got {self.r_hat!r}")
        if self.method_used not in (EstimationMethod.ORG, EstimationMethod.ML):
            raise DomainError("method_used records the producing route: org or ml")


def _validate_column(x: np.ndarray, var_type: VariableType, name: str) -> tuple[VariableType, float]:
    """Check a column against its declared type; returns (effective type, pi0).

    A declared-truncated column with no zeros degrades gracefully to
    continuous (its threshold is -inf, i.e. no truncation in effect).
    """
    pi0 = zero_proportion(x)
    if var_type is VariableType.BINARY:
        if not np.all((x == 0.0) | (x == 1.0)):
            raise DomainError(f"binary column {name} contains values other than 0 and 1")
        if pi0 in (0.0, 1.0):
            raise DegenerateColumnError(
                f"binary column {name} is constant; correlation undefined", name
            )
    elif var_type is VariableType.TRUNCATED:
        if np.any(x < 0.0):
            raise DomainError(f"truncated column {name} contains negative values")
        if pi0 == 1.0:
            raise DegenerateColumnError(
                f"truncated column {name} is entirely zero; correlation undefined", name
            )
        if pi0 == 0.0:
            return VariableType.CONTINUOUS, pi0
    return var_type, pi0


def _resolve_boundary_constant(boundary_constant, case: CaseKind) -> float:
    if isinstance(boundary_constant, Mapping):
        c = float(boundary_constant.get(case, DEFAULT_BOUNDARY_CONSTANT))
    else:
        c = float(boundary_constant)
    if not 0.0 < c <= 1.0:
        raise DomainError(f"boundary constant must be in (0, 1], got {c!r}")
    return c


def _grid_for(grids, case: CaseKind) -> InterpolationGrid:
    grid = (grids or {}).get(case)
    if grid is None:
        raise MissingGridError(f"no interpolation grid available for case {case.value}", case.value)
    if grid.case is not case:
        raise DomainError(f"grid for case {grid.case.value} supplied under key {case.value}")
    return grid


def estimate_pair(
    x,
    y,
    types: tuple[VariableType, VariableType],
    method: EstimationMethod = EstimationMethod.MLBD,
    grids: Mapping[CaseKind, InterpolationGrid] | None = None,
    *,
    boundary_constant=DEFAULT_BOUNDARY_CONSTANT,
    names: tuple[str, str] = ("x", "y"),
) -> PairEstimate:
    """Estimate the latent correlation of one variable pair."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    method = EstimationMethod(method)
    tx, ty = (VariableType(t) for t in types)

    eff_x, pi0_x = _validate_column(x, tx, names[0])
    eff_y, pi0_y = _validate_column(y, ty, names[1])

    tau = kendall_tau_a(x, y)
    delta_x = delta_from_zero_proportion(pi0_x)
    delta_y = delta_from_zero_proportion(pi0_y)
    stats = PairStatistics(tau, pi0_x, pi0_y, delta_x, delta_y)

    case, swap = classify_pair(eff_x, eff_y)
    if swap:
        pi0_1, pi0_2 = pi0_y, pi0_x
        delta_1, delta_2 = delta_y, delta_x
    else:
        pi0_1, pi0_2 = pi0_x, pi0_y
        delta_1, delta_2 = delta_x, delta_y
    deltas = (delta_1, delta_2)[: case.n_deltas]

    if case is CaseKind.CC:
        return PairEstimate(cc_inverse_closed(tau), EstimationMethod.ORG, False, False, stats)

    use_ml = True
    if method is EstimationMethod.ORG:
        use_ml = False
    elif method is EstimationMethod.MLBD:
        _grid_for(grids, case)  # MLBD requires the grid even on the ORG branch
        c = _resolve_boundary_constant(boundary_constant, case)
        use_ml = abs(tau) <= c * abd(case, pi0_1, pi0_2 if case.n_deltas == 2 else None)

    if use_ml:
        grid = _grid_for(grids, case)
        try:
            r = multilinear_interpolate(grid, (tau, *deltas))
            return PairEstimate(r, EstimationMethod.ML, False, False, stats)
        except OutOfHullError:
            r, info = bridge_inverse_org(case, tau, deltas, full_output=True)
            return PairEstimate(r, EstimationMethod.ORG, info.saturated, True, stats)

    r, info = bridge_inverse_org(case, tau, deltas, full_output=True)
    return PairEstimate(r, EstimationMethod.ORG, info.saturated, False, stats)


@dataclass(frozen=True)
class LatentCorrelationMatrix:
    """Symmetric latent correlation estimate with per-entry provenance.

    method_used holds "org"/"ml" per off-diagonal entry ("" on the diagonal,
    "failed" for pairs skipped under on_error="skip").  Positive definiteness
    is NOT guaranteed; no repair is applied.
    """

    entries: np.ndarray
    method_used: np.ndarray
    saturated: np.ndarray
    out_of_hull: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError("correlation matrix must be square")
        if not np.array_equal(m, m.T, equal_nan=True):
            raise DomainError("correlation matrix must be symmetric")
        if not np.all(np.diag(m) == 1.0):
            raise DomainError("correlation matrix must have unit diagonal")
        finite = np.isfinite(m)
        if np.any(np.abs(m[finite]) > 1.0):
            raise DomainError("correlation entries must lie in [-1, 1]")
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def infer_types(data) -> list[VariableType]:
    """Infer a variable type per column.

    Binary: only the values {0, 1}, both present.  Truncated: nonnegative
    with at least one exact zero and at least two distinct nonzero values.
    Otherwise continuous.  User-supplied types always take precedence over
    this inference.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DomainError("data must be a 2-D samples-by-variables matrix")
    if data.shape[0] == 0 or data.shape[1] == 0:
        raise DomainError("data must be non-empty")
    out = []
    for j in range(data.shape[1]):
        col = data[:, j]
        is01 = np.all((col == 0.0) | (col == 1.0))
        if is01 and np.any(col == 0.0) and np.any(col == 1.0):
            out.append(VariableType.BINARY)
            continue
        nonzero = col[col != 0.0]
        if np.all(col >= 0.0) and np.any(col == 0.0) and np.unique(nonzero).shape[0] >= 2:
            out.append(VariableType.TRUNCATED)
        else:
            out.append(VariableType.CONTINUOUS)
    return out


_MATRIX_STATE: dict = {}


def _matrix_worker_init(data, types, method, grids, boundary_constant, on_error):
    _MATRIX_STATE.update(
        data=data, types=types, method=method, grids=grids,
        boundary_constant=boundary_constant, on_error=on_error,
    )


def _estimate_indexed_pair(data, types, method, grids, boundary_constant, on_error, j, k):
    try:
        est = estimate_pair(
            data[:, j],
            data[:, k],
            (types[j], types[k]),
            method,
            grids,
            boundary_constant=boundary_constant,
            names=(str(j), str(k)),
        )
    except (DomainError, MissingGridError):
        raise
    except Exception as exc:
        if on_error == "skip":
            return j, k, float("nan"), "failed", False, False
        raise type(exc)(f"{exc} [pair ({j}, {k})]") from exc
    return j, k, est.r_hat, est.method_used.value, est.saturated, est.out_of_hull


def _matrix_worker(pairs: list[tuple[int, int]]):
    s = _MATRIX_STATE
    return [
        _estimate_indexed_pair(
            s["data"], s["types"], s["method"], s["grids"],
            s["boundary_constant"], s["on_error"], j, k,
        )
        for j, k in pairs
    ]


def estimate_matrix(
    data,
    types,
    method: EstimationMethod = EstimationMethod.MLBD,
    grids: Mapping[CaseKind, InterpolationGrid] | None = None,
    *,
    boundary_constant=DEFAULT_BOUNDARY_CONSTANT,
    on_error: str = "raise",
    workers: int | None = None,
) -> LatentCorrelationMatrix:
    """Estimate the full p x p latent correlation matrix.

    All p(p-1)/2 pairs are estimated independently; the result is
    deterministic and identical for any worker count.  on_error="raise"
    aborts on the first failing pair with its coordinates; "skip" records
    NaN and marks the pair "failed" in the provenance.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DomainError("data must be a 2-D samples-by-variables matrix")
    n, p = data.shape
    if p < 2:
        raise DomainError("need at least 2 variables")
    types = [VariableType(t) for t in types]
    if len(types) != p:
        raise DomainError(f"got {len(types)} types for {p} variables")
    if on_error not in ("raise", "skip"):
        raise DomainError(f"on_error must be 'raise' or 'skip', got {on_error!r}")
    method = EstimationMethod(method)

    # Column-level degeneracies surface immediately, named by column index.
    for j in range(p):
        _validate_column(data[:, j], types[j], str(j))

    entries = np.eye(p)
    method_used = np.full((p, p), "", dtype=object)
    saturated = np.zeros((p, p), dtype=bool)
    out_of_hull = np.zeros((p, p), dtype=bool)

    pairs = [(j, k) for j in range(p) for k in range(j + 1, p)]

    def fill(j, k, r, meth, sat, hull):
        entries[j, k] = entries[k, j] = r
        method_used[j, k] = method_used[k, j] = meth
        saturated[j, k] = saturated[k, j] = sat
        out_of_hull[j, k] = out_of_hull[k, j] = hull

    if workers and workers > 1 and len(pairs) > 1:
        chunks = [pairs[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_matrix_worker_init,
            initargs=(data, types, method, grids, boundary_constant, on_error),
        ) as pool:
            for chunk_result in pool.map(_matrix_worker, chunks):
                for j, k, r, meth, sat, hull in chunk_result:
                    fill(j, k, r, meth, sat, hull)
    else:
        for j, k in pairs:
            fill(*_estimate_indexed_pair(data, types, method, grids, boundary_constant, on_error, j, k))

    return LatentCorrelationMatrix(entries, method_used, saturated, out_of_hull)
