"""Synthetic data generation and accuracy/timing experiment drivers.

Random numbers come from numpy's counter-based Philox4x64-10 generator:
stream = Philox(key=seed, counter=[0, 0, rep, 0]), i.e. replication
substreams occupy disjoint counter ranges, so replications are independent,
order-free, and reproducible from (seed, replication index) alone.  Latent
pairs are drawn as standard normal (n, 2) blocks via Generator.standard_normal
and correlated with the Cholesky combine y = r*z0 + sqrt(1-r^2)*z1.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from statistics import median

import numpy as np

from .bridge import CaseKind
from .errors import DomainError
from .estimator import EstimationMethod, VariableType, estimate_pair
from .kendall import kendall_tau_a

__all__ = [
    "ScenarioSpec",
    "AccuracyReport",
    "TimingRow",
    "generate_latent_pair",
    "apply_truncation",
    "apply_dichotomization",
    "run_accuracy_experiment",
    "run_timing_benchmark",
    "write_accuracy_csv",
    "write_timing_csv",
]

_CASE_TYPES = {
    CaseKind.CC: (VariableType.CONTINUOUS, VariableType.CONTINUOUS),
    CaseKind.BC: (VariableType.BINARY, VariableType.CONTINUOUS),
    CaseKind.BB: (VariableType.BINARY, VariableType.BINARY),
    CaseKind.TC: (VariableType.TRUNCATED, VariableType.CONTINUOUS),
    CaseKind.TT: (VariableType.TRUNCATED, VariableType.TRUNCATED),
    CaseKind.TB: (VariableType.TRUNCATED, VariableType.BINARY),
}

_N_TRANSFORMED = {
    CaseKind.CC: 0,
    CaseKind.BC: 1,
    CaseKind.TC: 1,
    CaseKind.BB: 2,
    CaseKind.TT: 2,
    CaseKind.TB: 2,
}


@dataclass(frozen=True)
class ScenarioSpec:
    """One synthetic accuracy cell: a case, a latent correlation, and the
    target zero proportions of the non-continuous variables."""

    case: CaseKind
    r_true: float
    pi0_levels: tuple[float, ...]
    n: int = 100
    replications: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "case", CaseKind(self.case))
        object.__setattr__(self, "pi0_levels", tuple(float(p) for p in self.pi0_levels))
        if abs(self.r_true) >= 1.0:
            raise DomainError(f"|r_true| must be < 1, got {self.r_true!r}")
        if len(self.pi0_levels) != _N_TRANSFORMED[self.case]:
            raise DomainError(
                f"case {self.case.value} takes {_N_TRANSFORMED[self.case]} zero proportions, "
                f"got {len(self.pi0_levels)}"
            )
        if any(not 0.0 < p < 1.0 for p in self.pi0_levels):
            raise DomainError("zero proportions must lie strictly in (0, 1)")
        if self.n < 10:
            raise DomainError("n must be at least 10")
        if self.replications < 1:
            raise DomainError("replications must be at least 1")


@dataclass(frozen=True)
class AccuracyReport:
    """Max/mean absolute deviations of the interpolating methods from the
    direct-optimization estimate, over a scenario's replications."""

    spec: ScenarioSpec
    max_abs_err_ml: float
    mean_abs_err_ml: float
    max_abs_err_mlbd: float
    mean_abs_err_mlbd: float
    boundary_org_count: int  # replications where the hybrid chose the ORG branch


def _rep_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, rep, 0]))


def generate_latent_pair(n: int, r: float, seed: int, rep: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Draw n i.i.d. bivariate standard normal observations with correlation r."""
    if abs(r) >= 1.0:
        raise DomainError(f"|r| must be < 1, got {r!r}")
    if n < 1:
        raise DomainError("n must be positive")
    z = _rep_rng(seed, rep).standard_normal((n, 2))
    return z[:, 0], r * z[:, 0] + math.sqrt(1.0 - r * r) * z[:, 1]


def _shift_quantile(x: np.ndarray, pi0: float) -> float:
    # Order-statistic (type-1) quantile; k = round(n*pi0) values end up at
    # or below it, so the realized zero proportion is round(n*pi0)/n.
    n = x.shape[0]
    k = int(round(n * pi0))
    k = min(max(k, 1), n - 1)
    return float(np.partition(x, k - 1)[k - 1])


def apply_truncation(x, pi0: float) -> np.ndarray:
    """Shift x so that zeroing everything at or below zero leaves a zero
    proportion of round(n*pi0)/n; nonzero entries keep their original ranks."""
    x = np.asarray(x, dtype=np.float64)
    if not 0.0 < pi0 < 1.0:
        raise DomainError(f"pi0 must be strictly inside (0, 1), got {pi0!r}")
    shifted = x - _shift_quantile(x, pi0)
    return np.where(shifted > 0.0, shifted, 0.0)


def apply_dichotomization(x, pi0: float) -> np.ndarray:
    """1 where x exceeds its pi0 empirical quantile, else 0."""
    x = np.asarray(x, dtype=np.float64)
    if not 0.0 < pi0 < 1.0:
        raise DomainError(f"pi0 must be strictly inside (0, 1), got {pi0!r}")
    return (x > _shift_quantile(x, pi0)).astype(np.float64)


def make_observed_pair(spec: ScenarioSpec, rep: int) -> tuple[np.ndarray, np.ndarray]:
    """One replication's observed (x, y) for the scenario's case."""
    x, y = generate_latent_pair(spec.n, spec.r_true, spec.seed, rep)
    case = spec.case
    if case in (CaseKind.TC, CaseKind.TT, CaseKind.TB):
        x = apply_truncation(x, spec.pi0_levels[0])
    elif case in (CaseKind.BC, CaseKind.BB):
        x = apply_dichotomization(x, spec.pi0_levels[0])
    if case is CaseKind.TT:
        y = apply_truncation(y, spec.pi0_levels[1])
    elif case is CaseKind.BB:
        y = apply_dichotomization(y, spec.pi0_levels[1])
    elif case is CaseKind.TB:
        y = apply_dichotomization(y, spec.pi0_levels[1])
    return x, y


def run_accuracy_experiment(spec: ScenarioSpec, grids) -> AccuracyReport:
    """Estimate each replication with ORG, ML and MLBD; report |ML - ORG|
    and |MLBD - ORG| aggregated as max and mean over replications."""
    types = _CASE_TYPES[spec.case]
    err_ml = np.empty(spec.replications)
    err_mlbd = np.empty(spec.replications)
    boundary_org = 0
    for rep in range(spec.replications):
        x, y = make_observed_pair(spec, rep)
        r_org = estimate_pair(x, y, types, EstimationMethod.ORG, grids).r_hat
        r_ml = estimate_pair(x, y, types, EstimationMethod.ML, grids).r_hat
        e_mlbd = estimate_pair(x, y, types, EstimationMethod.MLBD, grids)
        err_ml[rep] = abs(r_ml - r_org)
        err_mlbd[rep] = abs(e_mlbd.r_hat - r_org)
        if e_mlbd.method_used is EstimationMethod.ORG and not e_mlbd.out_of_hull:
            boundary_org += 1
    return AccuracyReport(
        spec,
        float(err_ml.max()),
        float(err_ml.mean()),
        float(err_mlbd.max()),
        float(err_mlbd.mean()),
        boundary_org,
    )


def write_accuracy_csv(reports, sink) -> None:
    """Plot-ready long-format CSV, one row per (cell, method).

    The pi0 column is the first (varied) zero proportion; companion
    proportions are part of the invocation, not the report.
    """
    rows = []
    for rep in reports:
        s = rep.spec
        pi0 = repr(s.pi0_levels[0]) if s.pi0_levels else ""
        rows.append([s.case.value, repr(s.r_true), pi0, "ml", repr(rep.max_abs_err_ml), repr(rep.mean_abs_err_ml)])
        rows.append([s.case.value, repr(s.r_true), pi0, "mlbd", repr(rep.max_abs_err_mlbd), repr(rep.mean_abs_err_mlbd)])
    _write_csv(sink, ["case", "r", "pi0", "method", "max_abs_err", "mean_abs_err"], rows)


@dataclass(frozen=True)
class TimingRow:
    """Per-pair median runtimes of the three methods for one case."""

    case: CaseKind
    n: int
    reps: int
    org_median_us: float
    ml_median_us: float
    mlbd_median_us: float

    @property
    def org_over_ml(self) -> float:
        return self.org_median_us / self.ml_median_us

    @property
    def mlbd_over_ml(self) -> float:
        return self.mlbd_median_us / self.ml_median_us


# Benchmark scenario: moderate correlation and balanced zero proportions,
# safely inside the interpolation boundary for every case.
_BENCH_R = 0.5
_BENCH_PI0 = 0.5


def run_timing_benchmark(cases, n: int, reps: int, grids, seed: int = 0) -> list[TimingRow]:
    """Median wall time per pair for each method on one synthetic dataset."""
    if reps < 1:
        raise DomainError("reps must be at least 1")
    if n < 10:
        raise DomainError("n must be at least 10")
    rows = []
    for case in (CaseKind(c) for c in cases):
        pi0 = (_BENCH_PI0,) * _N_TRANSFORMED[case]
        spec = ScenarioSpec(case, _BENCH_R, pi0, n=n, replications=1, seed=seed)
        x, y = make_observed_pair(spec, 0)
        types = _CASE_TYPES[case]
        medians = {}
        for method in (EstimationMethod.ORG, EstimationMethod.ML, EstimationMethod.MLBD):
            estimate_pair(x, y, types, method, grids)  # warm-up
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                estimate_pair(x, y, types, method, grids)
                times.append((time.perf_counter() - t0) * 1e6)
            medians[method] = median(times)
        rows.append(
            TimingRow(
                case, n, reps,
                medians[EstimationMethod.ORG],
                medians[EstimationMethod.ML],
                medians[EstimationMethod.MLBD],
            )
        )
    return rows


def write_timing_csv(rows, sink) -> None:
    out = [
        [
            row.case.value, row.n, row.reps,
            f"{row.org_median_us:.2f}", f"{row.ml_median_us:.2f}", f"{row.mlbd_median_us:.2f}",
            f"{row.org_over_ml:.2f}", f"{row.mlbd_over_ml:.2f}",
        ]
        for row in rows
    ]
    _write_csv(
        sink,
        ["case", "n", "reps", "org_median_us", "ml_median_us", "mlbd_median_us", "org_over_ml", "mlbd_over_ml"],
        out,
    )


def _write_csv(sink, header, rows) -> None:
    if hasattr(sink, "write"):
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    else:
        with open(sink, "w", newline="") as fh:
            _write_csv(fh, header, rows)
