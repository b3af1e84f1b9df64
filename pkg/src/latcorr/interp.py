"""Inverse-bridge interpolation grids: construction, precomputation,
multilinear interpolation, file serialization, and interpolation error bounds.

Grid coordinates are (tau, delta...) with thresholds in normal scale
(delta = Phi^{-1}(pi0)); queries arrive the same way.  Axis layouts:

- tau, truncated/continuous and truncated/truncated: 199 points, -0.99 to
  0.99, step 0.01.
- tau, pairings with a binary variable: a mirrored axis denser near zero,
  positive part 0.001..0.091 step 0.005 then 0.101..0.5 step 0.007
  (exact-decimal endpoints, so the maximum is exactly 0.5).
- delta, binary: Phi^{-1} of 50 equispaced zero proportions 0.01..0.99.
- delta, truncated: Phi^{-1} of log10 of 50 equispaced points 1..10^0.99,
  denser at high zero proportions; the first element (pi0 = 0, an
  uninterpolable infinite node) is replaced by half the second element's
  zero proportion, recorded in grid metadata.

Grid files use the "LCG1" binary format: magic "LCG1", case tag byte,
axis count byte, then per axis a uint32 little-endian length followed by
IEEE-754 little-endian doubles, then the row-major value array, then a
CRC32 trailer (uint32 little-endian) over all preceding bytes.
"""

from __future__ import annotations

import math
import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .bridge import INVERSION_XATOL, R_BOUND, CaseKind, bridge_inverse_org
from .errors import DomainError, GridFormatError, OutOfHullError
from .mvn import std_normal_cdf

__all__ = [
    "GridAxis",
    "InterpolationGrid",
    "build_tau_axis",
    "build_delta_axis",
    "precompute_grid",
    "multilinear_interpolate",
    "serialize_grid",
    "deserialize_grid",
    "grid_filename",
    "interpolation_error_bound",
]

_MAGIC = b"LCG1"
_FORMAT_VERSION = 1
_CASE_ORDER = (CaseKind.CC, CaseKind.BC, CaseKind.BB, CaseKind.TC, CaseKind.TT, CaseKind.TB)
_CASE_TO_TAG = {c: i for i, c in enumerate(_CASE_ORDER)}

# Delta-axis variable kinds per case, in canonical argument order.
_DELTA_KINDS = {
    CaseKind.BC: ("binary",),
    CaseKind.TC: ("truncated",),
    CaseKind.BB: ("binary", "binary"),
    CaseKind.TT: ("truncated", "truncated"),
    CaseKind.TB: ("truncated", "binary"),
}


@dataclass(frozen=True)
class GridAxis:
    """A strictly increasing coordinate axis."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        if p.ndim != 1 or p.shape[0] < 2:
            raise DomainError("grid axis needs at least 2 points")
        if not np.all(np.isfinite(p)):
            raise DomainError("grid axis points must be finite")
        if not np.all(np.diff(p) > 0.0):
            raise DomainError("grid axis points must be strictly increasing")
        object.__setattr__(self, "points", p)

    @property
    def h_max(self) -> float:
        """Maximum adjacent spacing."""
        return float(np.diff(self.points).max())

    def __len__(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, GridAxis) and np.array_equal(self.points, other.points)


@dataclass(frozen=True)
class InterpolationGrid:
    """Precomputed inverse-bridge values on a fixed (tau, delta...) grid."""

    case: CaseKind
    tau_axis: GridAxis
    delta_axes: tuple[GridAxis, ...]
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.case is CaseKind.CC:
            raise DomainError("the continuous/continuous case has a closed-form inverse; no grid")
        expected = (len(self.tau_axis),) + tuple(len(a) for a in self.delta_axes)
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != expected:
            raise DomainError(f"value shape {v.shape} does not match axes {expected}")
        if len(self.delta_axes) != self.case.n_deltas:
            raise DomainError(
                f"case {self.case.value} requires {self.case.n_deltas} delta axes, "
                f"got {len(self.delta_axes)}"
            )
        if np.any(np.abs(v) > R_BOUND):
            raise DomainError(f"grid values must lie within [-{R_BOUND}, {R_BOUND}]")
        if np.any(np.diff(v, axis=0) < 0.0):
            raise DomainError("grid values must be nondecreasing along the tau axis")
        object.__setattr__(self, "values", v)
        meta = dict(self.meta)
        meta.setdefault("version", _FORMAT_VERSION)
        meta.setdefault("case", self.case.value)
        meta.setdefault("inversion_xatol", INVERSION_XATOL)
        if "truncated" in _DELTA_KINDS[self.case]:
            meta.setdefault("truncated_axis_note", _TRUNCATED_AXIS_NOTE)
        object.__setattr__(self, "meta", meta)

    @property
    def h_max(self) -> float:
        """Maximum adjacent spacing over all axes (the h of the error bounds)."""
        return max(self.tau_axis.h_max, *(a.h_max for a in self.delta_axes))

    def axes(self) -> tuple[GridAxis, ...]:
        return (self.tau_axis, *self.delta_axes)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, InterpolationGrid)
            and self.case is other.case
            and self.tau_axis == other.tau_axis
            and self.delta_axes == other.delta_axes
            and np.array_equal(self.values, other.values)
        )


_TRUNCATED_AXIS_NOTE = (
    "first zero-proportion point replaced by half the second point "
    "(the nominal first point is pi0=0, an infinite threshold)"
)


def _decimal_seq(start_num: int, step_num: int, count: int, denom: float) -> np.ndarray:
    # from + k*by sequences built on integer numerators to keep endpoints exact.
    return (start_num + step_num * np.arange(count)) / denom


def build_tau_axis(case: CaseKind) -> GridAxis:
    """The tau coordinate axis for a case's interpolation grid."""
    case = CaseKind(case)
    if case is CaseKind.CC:
        raise DomainError("the continuous/continuous case has a closed-form inverse; no grid")
    if case in (CaseKind.TC, CaseKind.TT):
        return GridAxis(_decimal_seq(-99, 1, 199, 100.0))
    # Pairings with a binary variable: mirrored fine-near-zero axis.
    pos = np.concatenate([
        _decimal_seq(1, 5, 19, 1000.0),     # 0.001 .. 0.091 step 0.005
        _decimal_seq(101, 7, 58, 1000.0),   # 0.101 .. 0.5   step 0.007
    ])
    return GridAxis(np.concatenate([-pos[::-1], [0.0], pos]))


def build_delta_axis(var_type: str) -> GridAxis:
    """The threshold axis for a truncated or binary variable."""
    if var_type == "binary":
        pi0 = np.linspace(0.01, 0.99, 50)
    elif var_type == "truncated":
        pi0 = np.log10(np.linspace(1.0, 10.0 ** 0.99, 50))
        pi0[0] = pi0[1] / 2.0
    else:
        raise DomainError(f"delta axes exist for 'truncated' or 'binary', got {var_type!r}")
    return GridAxis(ndtri(pi0))


def _default_axes(case: CaseKind) -> tuple[GridAxis, tuple[GridAxis, ...]]:
    return build_tau_axis(case), tuple(build_delta_axis(k) for k in _DELTA_KINDS[case])


def _invert_column(case: CaseKind, taus: np.ndarray, deltas: tuple[float, ...]) -> np.ndarray:
    out = np.empty(taus.shape[0])
    for i, tau in enumerate(taus):
        try:
            out[i] = bridge_inverse_org(case, float(tau), deltas)
        except Exception as exc:
            raise type(exc)(f"{exc} [grid point tau={tau!r} deltas={deltas!r}]") from exc
    return out


_WORKER_STATE: dict = {}


def _worker_init(case_value: str, taus: np.ndarray):
    _WORKER_STATE["case"] = CaseKind(case_value)
    _WORKER_STATE["taus"] = taus


def _worker_run(job: tuple[int, tuple[float, ...]]) -> tuple[int, np.ndarray]:
    flat_index, deltas = job
    return flat_index, _invert_column(_WORKER_STATE["case"], _WORKER_STATE["taus"], deltas)


def precompute_grid(
    case: CaseKind,
    *,
    tau_axis: GridAxis | None = None,
    delta_axes: tuple[GridAxis, ...] | None = None,
    workers: int | None = None,
) -> InterpolationGrid:
    """Invert the case's bridge function on the whole grid.

    Every value is produced by ``bridge_inverse_org``; the result is
    deterministic and independent of ``workers`` (grid points are
    independent, and assembly is index-ordered).  Non-default axes are
    permitted (e.g. coarser test grids) and are recorded in the metadata.

    Values are made exactly nondecreasing along tau by a running maximum;
    this only absorbs optimizer noise at the inversion tolerance (~1e-8)
    where the bridge saturates.
    """
    case = CaseKind(case)
    if case is CaseKind.CC:
        raise DomainError("the continuous/continuous case has a closed-form inverse; no grid")
    default_axes = tau_axis is None and delta_axes is None
    if tau_axis is None or delta_axes is None:
        dflt_tau, dflt_deltas = _default_axes(case)
        tau_axis = tau_axis or dflt_tau
        delta_axes = delta_axes or dflt_deltas
    if len(delta_axes) != case.n_deltas:
        raise DomainError(f"case {case.value} requires {case.n_deltas} delta axes")

    taus = tau_axis.points
    delta_shape = tuple(len(a) for a in delta_axes)
    combos = list(np.ndindex(*delta_shape))
    jobs = [
        (flat, tuple(float(ax.points[i]) for ax, i in zip(delta_axes, combo)))
        for flat, combo in enumerate(combos)
    ]

    values = np.empty((taus.shape[0],) + delta_shape)
    flat_view = values.reshape(taus.shape[0], -1)
    if workers and workers > 1:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_worker_init, initargs=(case.value, taus)
        ) as pool:
            for flat, column in pool.map(_worker_run, jobs, chunksize=max(1, len(jobs) // (8 * workers))):
                flat_view[:, flat] = column
    else:
        for flat, deltas in jobs:
            flat_view[:, flat] = _invert_column(case, taus, deltas)

    values = np.maximum.accumulate(np.clip(values, -R_BOUND, R_BOUND), axis=0)
    meta = {"default_axes": default_axes}
    return InterpolationGrid(case, tau_axis, tuple(delta_axes), values, meta)


def multilinear_interpolate(grid: InterpolationGrid, query) -> float:
    """Multilinear interpolation of the grid at query = (tau, delta...).

    Exact at grid nodes, linear along each axis (the weighted average of the
    2^d cell corners), output clamped to [-1, 1].  Raises OutOfHullError for
    queries outside the axis hulls.
    """
    q = tuple(float(v) for v in query)
    axes = grid.axes()
    if len(q) != len(axes):
        raise DomainError(f"query has {len(q)} coordinates, grid has {len(axes)} axes")

    idx = []
    frac = []
    for qi, axis in zip(q, axes):
        pts = axis.points
        if math.isnan(qi) or qi < pts[0] or qi > pts[-1]:
            raise OutOfHullError(
                f"query coordinate {qi!r} outside [{pts[0]!r}, {pts[-1]!r}] for case {grid.case.value}"
            )
        j = int(np.searchsorted(pts, qi, side="right")) - 1
        j = min(max(j, 0), pts.shape[0] - 2)
        idx.append(j)
        frac.append((qi - pts[j]) / (pts[j + 1] - pts[j]))

    cell = grid.values[tuple(slice(j, j + 2) for j in idx)]
    for a in reversed(frac):
        cell = cell[..., 0] * (1.0 - a) + cell[..., 1] * a
    return min(1.0, max(-1.0, float(cell)))


def grid_filename(case: CaseKind) -> str:
    """Canonical file name for a case's grid."""
    return f"{CaseKind(case).value}.lcg"


def serialize_grid(grid: InterpolationGrid, sink) -> None:
    """Write a grid in the LCG1 binary format (bit-exact round trip)."""
    buf = bytearray()
    buf += _MAGIC
    buf.append(_CASE_TO_TAG[grid.case])
    axes = grid.axes()
    buf.append(len(axes))
    for axis in axes:
        buf += struct.pack("<I", len(axis))
        buf += axis.points.astype("<f8", copy=False).tobytes()
    buf += np.ascontiguousarray(grid.values, dtype="<f8").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    if hasattr(sink, "write"):
        sink.write(bytes(buf))
    else:
        with open(sink, "wb") as fh:
            fh.write(bytes(buf))


def deserialize_grid(source) -> InterpolationGrid:
    """Read an LCG1 grid file, verifying magic, structure and checksum."""
    if hasattr(source, "read"):
        raw = source.read()
    else:
        with open(source, "rb") as fh:
            raw = fh.read()

    if len(raw) < 4 or raw[:4] != _MAGIC:
        raise GridFormatError(f"bad magic {raw[:4]!r}, expected {_MAGIC!r}", 0)
    if len(raw) < 10:
        raise GridFormatError("file truncated before header end", len(raw))
    crc_stored = struct.unpack("<I", raw[-4:])[0]
    crc_actual = zlib.crc32(raw[:-4])
    if crc_stored != crc_actual:
        raise GridFormatError(
            f"checksum mismatch: stored {crc_stored:#010x}, computed {crc_actual:#010x}",
            len(raw) - 4,
        )

    tag = raw[4]
    if tag >= len(_CASE_ORDER) or _CASE_ORDER[tag] is CaseKind.CC:
        raise GridFormatError(f"invalid case tag {tag}", 4)
    case = _CASE_ORDER[tag]
    n_axes = raw[5]
    if n_axes != case.grid_dim:
        raise GridFormatError(f"case {case.value} requires {case.grid_dim} axes, file has {n_axes}", 5)

    pos = 6
    axes = []
    for _ in range(n_axes):
        if pos + 4 > len(raw) - 4:
            raise GridFormatError("file truncated inside axis header", pos)
        (n_points,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        end = pos + 8 * n_points
        if end > len(raw) - 4:
            raise GridFormatError("file truncated inside axis points", pos)
        axes.append(GridAxis(np.frombuffer(raw, dtype="<f8", count=n_points, offset=pos).copy()))
        pos = end

    count = 1
    for a in axes:
        count *= len(a)
    end = pos + 8 * count
    if end != len(raw) - 4:
        raise GridFormatError(
            f"value block size mismatch: expected {8 * count} bytes, found {len(raw) - 4 - pos}", pos
        )
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).copy()
    values = values.reshape(tuple(len(a) for a in axes))
    return InterpolationGrid(case, axes[0], tuple(axes[1:]), values)


def interpolation_error_bound(case: CaseKind, h: float, M: float, r: float) -> float:
    """Worst-case multilinear interpolation error for the BC and TC inverses.

    h is the maximal grid width, M bounds the threshold (|delta| <= M for
    BC, delta <= M for TC), r the inverse-bridge value at the query.
    """
    case = CaseKind(case)
    if not (h > 0.0 and math.isfinite(h)):
        raise DomainError(f"h must be positive and finite, got {h!r}")
    if not math.isfinite(M):
        raise DomainError(f"M must be finite, got {M!r}")
    if abs(r) > 1.0:
        raise DomainError(f"|r| must be <= 1, got {r!r}")
    if case is CaseKind.BC:
        return 2.0 * h * h * abs(r) * (2.0 * M * M + 1.0) * math.exp(M * M)
    if case is CaseKind.TC:
        tail = std_normal_cdf(-math.sqrt(2.0) * M)
        return (4.0 * h * h / tail**2) * max(abs(r) / tail, math.sqrt(1.0 - r * r))
    raise DomainError(f"error bound is available for the BC and TC cases, not {case.value}")
