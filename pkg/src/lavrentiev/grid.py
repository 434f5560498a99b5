"""Uniform grids on [0, T] and piecewise-constant signals living on them.

A signal stores one value per cell; value ``j`` (0-based) is attached to the
cell ``[t_j, t_{j+1})`` with ``t_j = j*h``.  All integrals are exact for this
piecewise-constant model, so discrete norms and pairings carry the weight ``h``.
"""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import IncompatibleGrids, InvalidParameter


@dataclass(frozen=True)
class Grid:
    """Uniform partition of ``[0, T]`` into ``n`` cells."""

    T: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise InvalidParameter(f"horizon T must be positive and finite, got {self.T!r}")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParameter(f"number of cells must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return self.T / self.n

    def right_endpoints(self) -> np.ndarray:
        """Return ``t_1, ..., t_n``."""
        return np.arange(1, self.n + 1) * self.T / self.n

    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.T / self.n


@dataclass(frozen=True, eq=False)
class Signal:
    """Piecewise-constant function on a :class:`Grid`.

    The value array is copied and frozen on construction; non-finite entries
    are rejected.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.grid.n:
            raise InvalidParameter(
                f"signal has {values.size} values but the grid has {self.grid.n} cells")
        if not np.all(np.isfinite(values)):
            raise InvalidParameter("signal values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid, c=1.0):
        return cls(grid, np.full(grid.n, float(c)))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.n))

    def like(self, values):
        """New signal on the same grid."""
        return Signal(self.grid, values)

    def __len__(self):
        return self.grid.n

    def __add__(self, other):
        return self.like(self.values + _values_on(self.grid, other))

    def __sub__(self, other):
        return self.like(self.values - _values_on(self.grid, other))

    def __mul__(self, c):
        return self.like(self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.values)


def _values_on(grid, other):
    if isinstance(other, Signal):
        check_same_grid(grid, other.grid)
        return other.values
    return np.asarray(other, dtype=float)


def check_same_grid(*grids):
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise IncompatibleGrids(f"grid mismatch: {first} vs {g}")


def lp_norm(s: Signal, p=2.0) -> float:
    """Discrete ``L^p(0, T)`` norm ``(h * sum |s_j|^p)^(1/p)``; ``p=inf`` gives the max norm."""
    p = float(p)
    if not p >= 1:
        raise InvalidParameter(f"p must lie in [1, inf], got {p}")
    a = np.abs(s.values)
    if math.isinf(p):
        return float(a.max())
    scale = a.max()
    if scale == 0:
        return 0.0
    # scaling keeps large p from overflowing
    return float(scale * (s.grid.h * np.sum((a / scale) ** p)) ** (1.0 / p))


def dual_pairing(u: Signal, v: Signal) -> float:
    """``<u, v> = h * sum u_j v_j``."""
    check_same_grid(u.grid, v.grid)
    return float(u.grid.h * np.dot(u.values, v.values))


def cumulative_integral(s: Signal) -> np.ndarray:
    """Running integral evaluated at the right endpoints ``t_1..t_n``."""
    return s.grid.h * np.cumsum(s.values)


def total_variation(s) -> float:
    """Sum of absolute jumps of a piecewise-constant signal."""
    values = s.values if isinstance(s, Signal) else np.asarray(s, dtype=float)
    return float(np.sum(np.abs(np.diff(values))))


# -- CSV ---------------------------------------------------------------------

def format_float(x) -> str:
    """Shortest round-tripping decimal representation."""
    return repr(float(x))


def signal_to_csv(s: Signal) -> str:
    out = io.StringIO()
    out.write("t,value\n")
    for t, v in zip(s.grid.right_endpoints(), s.values):
        out.write(f"{format_float(t)},{format_float(v)}\n")
    return out.getvalue()


def write_signal_csv(s: Signal, path):
    with open(path, "w", newline="") as fh:
        fh.write(signal_to_csv(s))


def signal_from_csv(text: str, rtol=1e-9) -> Signal:
    """Parse the ``t,value`` format, inferring the grid from the time column."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [c.strip() for c in header] != ["t", "value"]:
        raise InvalidParameter(f"expected header 't,value', got {header!r}")
    ts, vs = [], []
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise InvalidParameter(f"malformed row {row!r}")
        ts.append(float(row[0]))
        vs.append(float(row[1]))
    if not ts:
        raise InvalidParameter("signal CSV has no rows")
    ts = np.asarray(ts)
    if np.any(np.diff(ts) <= 0) or ts[0] <= 0:
        raise InvalidParameter("time column must be positive and strictly increasing")
    grid = Grid(T=float(ts[-1]), n=len(ts))
    expected = grid.right_endpoints()
    if np.max(np.abs(ts - expected)) > rtol * grid.T:
        raise InvalidParameter("time column is not uniformly spaced")
    return Signal(grid, vs)


def read_signal_csv(path, rtol=1e-9) -> Signal:
    with open(path, newline="") as fh:
        return signal_from_csv(fh.read(), rtol=rtol)
