"""Convolution kernels and their lower-triangular Toeplitz discretisation.

The operator ``(A u)(t) = int_0^t k(t - tau) u(tau) dtau`` acting on
piecewise-constant ``u`` is collocated at the right endpoints ``t_i``.  The
weights are exact cell integrals ``w_m = int_{mh}^{(m+1)h} k``, which turns the
weakly singular Abel kernel into a closed form instead of a point evaluation
at the singularity.
"""

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import linalg, signal

from .errors import InvalidParameter
from .grid import Grid, Signal, check_same_grid, dual_pairing, format_float

_DIRECT_APPLY_MAX = 16384


# -- kernels -----------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    """``k(t) = v``."""

    v: float = 1.0

    def __post_init__(self):
        _require_finite(self.v, "constant kernel value")

    def __call__(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.v)

    def antiderivative(self, t):
        return self.v * np.asarray(t, dtype=float)

    def weights(self, grid):
        return np.full(grid.n, self.v * grid.h)

    @property
    def spec(self):
        return f"const:{format_float(self.v)}"


@dataclass(frozen=True)
class Exponential:
    """``k(t) = exp(-c t)`` with ``c > 0``."""

    c: float

    def __post_init__(self):
        _require_finite(self.c, "exponential rate")
        if self.c <= 0:
            raise InvalidParameter(f"exponential rate must be positive, got {self.c}")

    def __call__(self, t):
        return np.exp(-self.c * np.asarray(t, dtype=float))

    def antiderivative(self, t):
        return -np.expm1(-self.c * np.asarray(t, dtype=float)) / self.c

    def weights(self, grid):
        m = np.arange(grid.n)
        w0 = -math.expm1(-self.c * grid.h) / self.c
        return w0 * np.exp(-self.c * grid.h * m)

    @property
    def decay(self):
        return self.c

    @property
    def spec(self):
        return f"exp:{format_float(self.c)}"


@dataclass(frozen=True)
class Abel:
    """Riemann-Liouville kernel ``k(t) = t^(s-1) / Gamma(s)``, ``0 < s <= 1``."""

    s: float

    def __post_init__(self):
        _require_finite(self.s, "Abel order")
        if not 0 < self.s <= 1:
            raise InvalidParameter(f"Abel order must lie in (0, 1], got {self.s}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return t ** (self.s - 1.0) / math.gamma(self.s)

    def antiderivative(self, t):
        return np.asarray(t, dtype=float) ** self.s / math.gamma(self.s + 1.0)

    def weights(self, grid):
        s = self.s
        m = np.arange(grid.n, dtype=float)
        # (m+1)^s - m^s without cancellation for large m
        diff = np.empty(grid.n)
        diff[0] = 1.0
        mm = m[1:]
        diff[1:] = mm ** s * np.expm1(s * np.log1p(1.0 / mm))
        return grid.h ** s * diff / math.gamma(s + 1.0)

    @property
    def spec(self):
        return f"abel:{format_float(self.s)}"


@dataclass(frozen=True, eq=False)
class Table:
    """Piecewise-constant kernel: ``values[i]`` on ``[breakpoints[i], breakpoints[i+1])``.

    The last value extends to infinity; the kernel vanishes before the first
    breakpoint.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    source: str = field(default="<table>")

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float).reshape(-1)
        v = np.array(self.values, dtype=float).reshape(-1)
        if b.size == 0 or b.size != v.size:
            raise InvalidParameter("table kernel needs matching, non-empty breakpoints and values")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(v))):
            raise InvalidParameter("table kernel entries must be finite")
        if np.any(np.diff(b) <= 0):
            raise InvalidParameter("table breakpoints must be strictly increasing")
        if b[0] < 0:
            raise InvalidParameter("table breakpoints must be nonnegative")
        if np.any(v < 0):
            raise InvalidParameter("table kernel values must be nonnegative")
        b.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        return np.where(idx >= 0, self.values[np.clip(idx, 0, None)], 0.0)

    def antiderivative(self, t):
        t = np.asarray(t, dtype=float)
        b, v = self.breakpoints, self.values
        # integral up to each breakpoint
        at_break = np.concatenate([[0.0], np.cumsum(v[:-1] * np.diff(b))])
        idx = np.searchsorted(b, t, side="right") - 1
        safe = np.clip(idx, 0, None)
        out = at_break[safe] + v[safe] * (t - b[safe])
        return np.where(idx >= 0, out, 0.0)

    def weights(self, grid):
        edges = np.arange(grid.n + 1) * grid.T / grid.n
        return np.diff(self.antiderivative(edges))

    @property
    def spec(self):
        return f"table:{self.source}"


Kernel = Constant | Exponential | Abel | Table


def identity_kernel(grid: Grid) -> Table:
    """Spike of height ``1/h`` on ``[0, h)``: discretises to ``w_0 = 1``, ``w_m = 0``."""
    return Table([0.0, grid.h], [1.0 / grid.h, 0.0], source="identity")


def _require_finite(x, what):
    if not math.isfinite(float(x)):
        raise InvalidParameter(f"{what} must be finite, got {x!r}")


def _parse_number(text):
    text = text.strip()
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def read_table_kernel(path) -> Table:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["t", "k"]:
            raise InvalidParameter(f"expected header 't,k' in {path}, got {header!r}")
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    try:
        b = [float(r[0]) for r in rows]
        v = [float(r[1]) for r in rows]
    except (IndexError, ValueError) as exc:
        raise InvalidParameter(f"malformed table kernel {path}: {exc}") from None
    return Table(b, v, source=str(path))


def parse_kernel(text: str):
    """Parse ``const:<v>``, ``exp:<c>``, ``abel:<s>`` or ``table:<path.csv>``."""
    kind, sep, arg = text.partition(":")
    if not sep or not arg:
        raise InvalidParameter(f"kernel spec must look like kind:arg, got {text!r}")
    kind = kind.strip().lower()
    try:
        if kind == "const":
            return Constant(_parse_number(arg))
        if kind == "exp":
            return Exponential(_parse_number(arg))
        if kind == "abel":
            return Abel(_parse_number(arg))
    except (ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, InvalidParameter):
            raise
        raise InvalidParameter(f"bad kernel parameter in {text!r}") from None
    if kind == "table":
        return read_table_kernel(arg)
    raise InvalidParameter(f"unknown kernel kind {kind!r}")


# -- operator ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VolterraOperator:
    """Lower-triangular Toeplitz operator ``(A u)_i = sum_{j<=i} w_{i-j} u_j``."""

    grid: Grid
    weights: np.ndarray
    kernel: object = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size != self.grid.n:
            raise InvalidParameter("operator needs one weight per cell")
        if not np.all(np.isfinite(w)):
            raise InvalidParameter("operator weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.grid.n

    @property
    def tag(self):
        return getattr(self.kernel, "spec", "<weights>")

    @property
    def geometric_ratio(self):
        """``rho`` with ``w_m = rho^m w_0`` for exponential kernels, else ``None``."""
        if isinstance(self.kernel, Exponential):
            return math.exp(self.log_geometric_ratio)
        return None

    @property
    def log_geometric_ratio(self):
        if isinstance(self.kernel, Exponential):
            return -self.kernel.c * self.grid.h
        return None

    def matrix(self) -> np.ndarray:
        """Dense lower-triangular matrix ``M`` with ``(A u)_i = (M u)_i``."""
        return linalg.toeplitz(self.weights, np.zeros(self.n))

    def apply_array(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        rho = self.geometric_ratio
        if rho is not None:
            return _geometric_apply(self.weights[0], rho, u)
        if self.n <= _DIRECT_APPLY_MAX:
            return np.convolve(self.weights, u)[: self.n]
        return signal.fftconvolve(self.weights, u)[: self.n]


def _geometric_apply(w0, rho, u):
    out = np.empty_like(u)
    acc = 0.0
    for i, x in enumerate(u.tolist()):
        acc = rho * acc + x
        out[i] = acc
    return w0 * out


def discretize(kernel, grid: Grid) -> VolterraOperator:
    """Exact cell-integral weights of ``kernel`` on ``grid``."""
    return VolterraOperator(grid, kernel.weights(grid), kernel)


def apply(A: VolterraOperator, u: Signal) -> Signal:
    check_same_grid(A.grid, u.grid)
    return Signal(A.grid, A.apply_array(u.values))


def monotone_pairing(A: VolterraOperator, u: Signal) -> float:
    """``<A u, u>``; nonnegative for monotone operators."""
    return dual_pairing(apply(A, u), u)


def solve_classical_lavrentiev(A: VolterraOperator, f: Signal, alpha: float,
                               u_bar: Signal = None) -> Signal:
    """Solve ``(A + alpha I) u = f + alpha * u_bar`` by forward substitution.

    Parameters
    ----------
    A : VolterraOperator
    f : Signal
        Data on the operator's grid.
    alpha : float
        Regularisation parameter, must be positive.
    u_bar : Signal, optional
        Initial guess entering the offset form; defaults to zero.
    """
    if not alpha > 0:
        raise InvalidParameter(f"alpha must be positive, got {alpha}")
    check_same_grid(A.grid, f.grid)
    rhs = np.array(f.values)
    if u_bar is not None:
        check_same_grid(A.grid, u_bar.grid)
        rhs = rhs + alpha * u_bar.values
    w = A.weights
    diag = w[0] + alpha
    if not diag > 0:
        raise InvalidParameter("w_0 + alpha must be positive")
    n = A.n
    u = np.zeros(n)
    rho = A.geometric_ratio
    if rho is not None:
        # history term sum_{j<i} w_{i-j} u_j obeys a scalar recursion
        hist = 0.0
        for i in range(n):
            u[i] = (rhs[i] - hist) / diag
            hist = rho * (hist + w[0] * u[i])
        return Signal(A.grid, u)
    wrev = w[::-1]
    for i in range(n):
        hist = np.dot(wrev[n - 1 - i:n - 1], u[:i]) if i else 0.0
        u[i] = (rhs[i] - hist) / diag
    return Signal(A.grid, u)
