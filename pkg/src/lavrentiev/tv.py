"""Total-variation Lavrentiev solver.

The discrete inclusion ``A u + alpha dTV(u) ∋ f`` is equivalent to a tube
system on the integrated residual ``L_i = h * sum_{j<=i} (A u - f)_j``:

* ``|L_i| <= alpha`` everywhere and ``L_n = 0`` (the tube is pinched at ``T``),
* ``L_j = +alpha`` at every upward jump ``u_{j+1} > u_j``,
* ``L_j = -alpha`` at every downward jump.

:func:`solve_tv_lavrentiev` builds ``u`` segment by segment.  From a committed
prefix it grows a window and tracks the largest constant value keeping ``L``
under the upper bound (the first segment of the increasing envelope) and the
smallest value keeping it over the lower bound (the first segment of the
decreasing envelope).  When the two cross, the envelope that is still feasible
at the crossing point is committed up to its last contact with the tube and a
jump is introduced there.  For the identity operator this is the classical
taut-string algorithm, which :func:`taut_string_prox` implements directly with
a funnel of convex hulls.

Cell indices are 0-based throughout; ``L[j]`` is the value at the right end of
cell ``j``, so a jump between cells ``j`` and ``j+1`` is tested against ``L[j]``.
"""

import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidParameter, SolverFailure, UnsupportedKernel
from .grid import Grid, Signal, check_same_grid, cumulative_integral, total_variation
from .volterra import VolterraOperator

TOUCH_UPPER = "touch_upper"
TOUCH_LOWER = "touch_lower"
TERMINAL = "terminal"


@dataclass(frozen=True, eq=False)
class Tube:
    """Bounds on the integrated residual, pinched to zero in the last cell."""

    grid: Grid
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if np.any(self.lower > self.upper):
            raise InvalidParameter("tube lower bound exceeds upper bound")

    @classmethod
    def for_alpha(cls, grid, alpha):
        upper = np.full(grid.n, float(alpha))
        upper[-1] = 0.0
        return cls(grid, -upper, upper)


@dataclass
class Segment:
    start: int
    end: int
    value: float
    event: str


@dataclass
class SolverTrace:
    segments: list = field(default_factory=list)
    envelope_evaluations: int = 0
    work: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class OptimalityCertificate:
    max_abs_L: float
    terminal_L: float
    violation_up: float
    violation_down: float
    jump_up_cells: list
    jump_down_cells: list
    duality_gap: float
    total_variation: float
    alpha: float
    tol: float
    passed: bool

    def to_dict(self):
        return asdict(self)


# -- classical taut string ---------------------------------------------------

def _slope(a, b):
    return (b[1] - a[1]) / (b[0] - a[0])


def _taut_string(lo, hi):
    """Shortest path through the corridor ``lo[i] <= S[i] <= hi[i]``, ``i = 0..n``.

    ``lo[0] == hi[0]`` and ``lo[n] == hi[n]`` pin the ends.  Funnel algorithm:
    ``upper`` is the convex hull of upper-boundary points seen from the
    current apex, ``lower`` the concave hull of lower-boundary points.  A new
    point crossing the opposite chain moves the apex along that chain.
    """
    n = len(lo) - 1
    S = np.empty(n + 1)
    S[0] = lo[0]
    lo = lo.tolist()
    hi = hi.tolist()

    def emit(a, b):
        x0, y0 = a
        x1, y1 = b
        if x1 > x0:
            steps = np.arange(1, x1 - x0 + 1)
            S[x0 + 1:x1 + 1] = y0 + (y1 - y0) * steps / (x1 - x0)

    upper = deque([(0, lo[0])])
    lower = deque([(0, lo[0])])
    for i in range(1, n + 1):
        p = (i, hi[i])
        collapsed = False
        while len(lower) >= 2 and _slope(lower[0], p) <= _slope(lower[0], lower[1]):
            emit(lower[0], lower[1])
            lower.popleft()
            collapsed = True
        if collapsed:
            upper = deque([lower[0], p])
        else:
            while len(upper) >= 2 and _slope(upper[-2], p) <= _slope(upper[-2], upper[-1]):
                upper.pop()
            upper.append(p)

        q = (i, lo[i])
        collapsed = False
        while len(upper) >= 2 and _slope(upper[0], q) >= _slope(upper[0], upper[1]):
            emit(upper[0], upper[1])
            upper.popleft()
            collapsed = True
        if collapsed:
            lower = deque([upper[0], q])
        else:
            while len(lower) >= 2 and _slope(lower[-2], q) >= _slope(lower[-2], lower[-1]):
                lower.pop()
            lower.append(q)
    # both chains end at the pinned endpoint; whatever is left is straight
    chain = list(upper)
    for a, b in zip(chain, chain[1:]):
        emit(a, b)
    return S


def taut_string_prox(f: Signal, lam: float) -> Signal:
    """Minimise ``(h/2)||u - f||^2 + lam * TV(u)`` with the taut-string method.

    The string is pulled through the tube of half-width ``lam`` around the
    running integral of ``f``, pinned at both ends; its slope is the answer.
    """
    if not lam > 0:
        raise InvalidParameter(f"lambda must be positive, got {lam}")
    F = np.concatenate([[0.0], cumulative_integral(f)])
    lo = F - lam
    hi = F + lam
    lo[0] = hi[0] = 0.0
    lo[-1] = hi[-1] = F[-1]
    S = _taut_string(lo, hi)
    return f.like(np.diff(S) / f.grid.h)


# -- generalized tube dynamic programming ----------------------------------

def _scale(alpha, f):
    return max(1.0, alpha, float(np.max(np.abs(f.values))) * f.grid.T)


def dp_admissible(A: VolterraOperator) -> bool:
    """Kernels whose weights keep the envelope construction well defined.

    Requires ``w_0 > 0`` and either all ``w_m > 0`` or the discrete identity
    (``w_m = 0`` for every ``m > 0``).
    """
    w = A.weights
    if not w[0] > 0:
        return False
    if np.all(w > 0):
        return True
    return bool(np.all(w[1:] == 0))


class _Frontier:
    """Committed prefix of a solution plus the data needed to extend it.

    For the first ``k`` cells fixed, ``L`` on a candidate constant extension
    with value ``v`` over cells ``k..j`` is affine: ``L_j = a_j + v * b_{j-k}``.
    ``b`` depends only on the window offset and is precomputed; ``a`` needs the
    response of the committed prefix, kept either as a full vector or, for
    geometric (exponential) weights, as one scalar.
    """

    def __init__(self, A, f, tube):
        self.A = A
        self.n = A.n
        self.h = A.grid.h
        self.f = np.asarray(f.values, dtype=float)
        self.lower = tube.lower
        self.upper = tube.upper
        w = A.weights
        self.Wc = np.concatenate([[0.0], np.cumsum(w)])  # Wc[m] = w_0 + ... + w_{m-1}
        self.B = self.h * np.cumsum(self.Wc[1:])          # B[d-1]: L response to unit value on d cells
        self.rho = A.geometric_ratio
        self.k = 0
        self.L_anchor = 0.0
        self.u = np.zeros(self.n)
        if self.rho is None:
            self.response = np.zeros(self.n)
        else:
            self.state = 0.0
            self.w0 = w[0]
            self.log_rho = A.log_geometric_ratio
        self.work = 0
        self.evaluations = 0

    def window(self, start, stop, a0):
        """Arrays ``a, b, lo, up`` for cells ``k+start .. k+stop-1``.

        ``a0`` is ``a`` at the cell before ``k+start`` (the anchor value
        ``L_anchor`` when ``start == 0``), so consecutive windows chain.
        """
        k = self.k
        stop = min(stop, self.n - k)
        lo_c, hi_c = k + start, k + stop
        if self.rho is None:
            y = self.response[lo_c:hi_c]
        else:
            d = np.arange(start + 1, stop + 1)
            y = self.w0 * self.state * np.exp(self.log_rho * d)
        a = a0 + self.h * np.cumsum(y - self.f[lo_c:hi_c])
        self.work += stop - start
        self.evaluations += 1
        return a, self.B[start:stop], self.lower[lo_c:hi_c], self.upper[lo_c:hi_c]

    def commit(self, length, value, L_end):
        k = self.k
        q = k + length  # first cell after the segment
        self.u[k:q] = value
        if self.rho is None:
            if q < self.n:
                j = np.arange(q, self.n)
                self.response[q:] += value * (self.Wc[j - k + 1] - self.Wc[j - q + 1])
                self.work += self.n - q
        else:
            geo = math.expm1(self.log_rho * length) / math.expm1(self.log_rho)
            self.state = math.exp(self.log_rho * length) * self.state + value * geo
            self.work += 1
        self.k = q
        self.L_anchor = L_end


def _last_index(mask):
    idx = np.flatnonzero(mask)
    return int(idx[-1])


def _next_segment(front, eps, K0):
    """Decide the next committed segment from the frontier.

    The look-ahead grows in chunks that double the scanned length; each chunk
    continues the running integral and the running envelope values of the
    previous ones, so no cell is evaluated twice for the same anchor.

    Returns ``(length, value, event, L_end)``.
    """
    remaining = front.n - front.k
    done = 0
    chunk = min(K0, remaining)
    a_last = front.L_anchor
    vp_last, vm_last = math.inf, -math.inf
    parts = []
    while True:
        a, b, lo, up = front.window(done, done + chunk, a_last)
        U = (up - a) / b
        D = (lo - a) / b
        vplus = np.minimum(np.minimum.accumulate(U), vp_last)
        vminus = np.maximum(np.maximum.accumulate(D), vm_last)
        # envelope values up to the previous cell
        vp_prev = np.concatenate([[vp_last], vplus[:-1]])
        vm_prev = np.concatenate([[vm_last], vminus[:-1]])
        slack = eps / b
        case_a = U < vm_prev - slack   # upper bound too low for the decreasing envelope
        case_b = D > vp_prev + slack   # lower bound too high for the increasing envelope
        parts.append((a, b, U, D, slack))
        hits = np.flatnonzero(case_a | case_b)
        if hits.size:
            p = int(hits[0])
            P = done + p
            a_all, b_all, U_all, D_all, s_all = (np.concatenate(x) for x in zip(*parts))
            cands = []
            if case_b[p]:
                c = float(vp_prev[p])
                q = _last_index(U_all[:P] <= c + s_all[:P])
                cands.append((q, 0, c, TOUCH_UPPER))
            if case_a[p]:
                c = float(vm_prev[p])
                q = _last_index(D_all[:P] >= c - s_all[:P])
                cands.append((q, 1, c, TOUCH_LOWER))
            # shorter segment first, then prefer the upper contact
            q, _, c, event = min(cands)
            return q + 1, c, event, a_all[q] + c * b_all[q]
        done += a.size
        if done == remaining:
            # no crossing before T: the pinched last cell fixes the value
            c = float(U[-1])
            return done, c, TERMINAL, a[-1] + c * b[-1]
        a_last, vp_last, vm_last = float(a[-1]), float(vplus[-1]), float(vminus[-1])
        chunk = min(done, remaining - done)


def solve_tv_lavrentiev(A: VolterraOperator, f: Signal, alpha: float, window=64):
    """Solve ``A u + alpha dTV(u) ∋ f`` for piecewise-constant ``u``.

    Parameters
    ----------
    A : VolterraOperator
        Operator with positive weights (or the discrete identity).
    f : Signal
        Data.
    alpha : float
        Regularisation parameter (tube half-width).
    window : int, optional
        Initial look-ahead of the segment search; it doubles on demand.

    Returns
    -------
    u : Signal
    trace : SolverTrace
    """
    if not alpha > 0:
        raise InvalidParameter(f"alpha must be positive, got {alpha}")
    check_same_grid(A.grid, f.grid)
    if not dp_admissible(A):
        raise UnsupportedKernel(
            f"kernel {A.tag} has non-positive weights; use the splitting oracle instead")
    tube = Tube.for_alpha(A.grid, alpha)
    eps = 1e-12 * _scale(alpha, f)
    front = _Frontier(A, f, tube)
    trace = SolverTrace()
    K0 = window
    while front.k < front.n:
        start = front.k
        try:
            length, value, event, L_end = _next_segment(front, eps, K0)
        except (FloatingPointError, ValueError) as exc:
            trace.envelope_evaluations = front.evaluations
            trace.work = front.work
            raise SolverFailure(f"segment search failed at cell {start}: {exc}", trace) from exc
        if not math.isfinite(value):
            trace.work = front.work
            raise SolverFailure(f"non-finite segment value at cell {start}", trace)
        front.commit(length, value, L_end)
        trace.segments.append(Segment(start, start + length - 1, float(value), event))
        K0 = max(window, length)
    trace.envelope_evaluations = front.evaluations
    trace.work = front.work
    if abs(front.L_anchor) > 1e-6 * _scale(alpha, f):
        raise SolverFailure("terminal condition L(T) = 0 could not be met", trace)
    return f.like(front.u), trace


# -- envelopes -------------------------------------------------------------

@dataclass
class Envelope:
    """Monotone extension of a prefix over cells ``start .. stop-1``.

    ``breach`` is the first cell where ``L`` leaves the opposite side of the
    tube (below the lower bound for the increasing envelope, above the upper
    bound for the decreasing one), or ``None``.
    """

    start: int
    values: np.ndarray
    L: np.ndarray
    breach: int = None


def _frontier_from_prefix(A, f, alpha, prefix):
    check_same_grid(A.grid, f.grid)
    if not alpha > 0:
        raise InvalidParameter(f"alpha must be positive, got {alpha}")
    if not dp_admissible(A):
        raise UnsupportedKernel(f"kernel {A.tag} is not admitted to the envelope construction")
    prefix = np.asarray(prefix, dtype=float).reshape(-1)
    front = _Frontier(A, f, Tube.for_alpha(A.grid, alpha))
    k = prefix.size
    if k:
        L = cumulative_integral(f.like(
            A.apply_array(np.concatenate([prefix, np.zeros(A.n - k)])) - f.values))
        # replay the prefix as constant pieces to set up the response
        breaks = np.flatnonzero(np.diff(prefix)) + 1
        starts = np.concatenate([[0], breaks])
        ends = np.concatenate([breaks, [k]])
        for s0, e0 in zip(starts, ends):
            front.commit(int(e0 - s0), float(prefix[s0]), float(L[e0 - 1]))
    return front


def _envelope(A, f, alpha, prefix, stop, increasing):
    front = _frontier_from_prefix(A, f, alpha, prefix)
    start = front.k
    if not start < stop <= A.n:
        raise InvalidParameter(f"window end {stop} must lie in ({start}, {A.n}]")
    eps = 1e-12 * _scale(alpha, f)
    values, Ls = [], []
    while front.k < stop:
        a, b, lo, up = front.window(0, stop - front.k, front.L_anchor)
        if increasing:
            cand = (up - a) / b
            c = float(np.min(cand))
            q = _last_index(cand <= c + eps / b)
        else:
            cand = (lo - a) / b
            c = float(np.max(cand))
            q = _last_index(cand >= c - eps / b)
        L_seg = a[:q + 1] + c * b[:q + 1]
        values.append(np.full(q + 1, c))
        Ls.append(L_seg)
        front.commit(q + 1, c, float(L_seg[-1]))
    values = np.concatenate(values)
    L = np.concatenate(Ls)
    tube = Tube.for_alpha(A.grid, alpha)
    if increasing:
        bad = L < tube.lower[start:stop] - eps
    else:
        bad = L > tube.upper[start:stop] + eps
    hits = np.flatnonzero(bad)
    breach = int(start + hits[0]) if hits.size else None
    return Envelope(start, values, L, breach)


def envelope_plus(A, f, alpha, prefix, stop):
    """Pointwise-maximal nondecreasing extension of ``prefix`` with ``L <= upper``.

    It is constant wherever ``L`` stays strictly below the upper bound.
    """
    return _envelope(A, f, alpha, prefix, stop, increasing=True)


def envelope_minus(A, f, alpha, prefix, stop):
    """Pointwise-minimal nonincreasing extension of ``prefix`` with ``L >= lower``."""
    return _envelope(A, f, alpha, prefix, stop, increasing=False)


# -- optimality certificate ------------------------------------------------

def integrated_residual(A, u, f):
    check_same_grid(A.grid, u.grid, f.grid)
    return cumulative_integral(f.like(A.apply_array(u.values) - f.values))


def check_optimality(A: VolterraOperator, u: Signal, f: Signal, alpha: float,
                     tol: float, jump_tol=None) -> OptimalityCertificate:
    """Verify the tube conditions for a candidate solution.

    Jumps smaller than ``jump_tol`` (default ``1e-9 * max(1, max|u|)``) are
    treated as flat.  The subgradient ``xi = -(L_i - L_{i-1}) / (alpha h)`` is
    reconstructed from ``L`` to report the gap ``|TV(u) - <xi, u>|``.
    """
    if not alpha > 0 or not tol > 0:
        raise InvalidParameter("alpha and tol must be positive")
    L = integrated_residual(A, u, f)
    v = u.values
    if jump_tol is None:
        jump_tol = 1e-9 * max(1.0, float(np.max(np.abs(v))))
    dv = np.diff(v)
    ups = np.flatnonzero(dv > jump_tol)
    downs = np.flatnonzero(dv < -jump_tol)
    violation_up = float(np.max(alpha - L[ups])) if ups.size else 0.0
    violation_down = float(np.max(L[downs] + alpha)) if downs.size else 0.0
    max_abs_L = float(np.max(np.abs(L)))
    terminal_L = float(L[-1])
    h = u.grid.h
    xi = -np.diff(np.concatenate([[0.0], L])) / (alpha * h)
    tv = total_variation(u)
    gap = abs(tv - h * float(np.dot(xi, v)))
    passed = (max_abs_L <= alpha + tol and abs(terminal_L) <= tol
              and violation_up <= tol and violation_down <= tol)
    return OptimalityCertificate(
        max_abs_L=max_abs_L, terminal_L=terminal_L,
        violation_up=violation_up, violation_down=violation_down,
        jump_up_cells=ups.tolist(), jump_down_cells=downs.tolist(),
        duality_gap=gap, total_variation=tv, alpha=float(alpha), tol=float(tol),
        passed=bool(passed))
