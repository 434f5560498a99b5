"""Evidence that a convolution kernel yields a strictly monotone operator.

Three independent views are combined in a :class:`MonotonicityReport`:

* an analytic verdict from known shape facts (strictly convex, decreasing,
  positive mean on ``(0, T]``), which imply positive Fourier cosine
  coefficients and hence strict monotonicity;
* the first ``N + 1`` cosine coefficients
  ``c_n = (2/T) int_0^T k(t) cos(2 pi n t / T) dt`` as numeric evidence;
* the smallest value of ``<A u, u> / ||u||^2`` for the discretised operator,
  over random probes and, for small grids, the exact symmetric-part eigenvalue.

Finitely many positive coefficients are evidence, not a proof; the report
keeps the two apart.
"""

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .errors import NumericFailure
from .grid import Grid
from .volterra import Abel, Constant, Exponential, Table, VolterraOperator, discretize

PROVEN = "proven"
INCONCLUSIVE = "inconclusive"
STRICT_CONVEXITY_FAILS = "strict convexity fails"

_EIG_MAX_N = 512


@dataclass
class MonotonicityReport:
    kernel: str
    T: float
    analytic_verdict: str
    reasons: list
    fourier_coeffs: list
    min_fourier: float
    discrete_min_quadform: float
    N: int
    n: int = None
    probes: int = None
    seed: int = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


# -- Fourier cosine coefficients -------------------------------------------

def _abel_coefficient(s, T, n, tol):
    """Return ``(c_n, error estimate, quadrature warned)``."""
    g = math.gamma(s)
    if n == 0:
        return 2.0 / T * T ** s / math.gamma(s + 1.0), 0.0, False
    omega = 2.0 * math.pi * n / T
    # the singular factor t^(s-1) is handled by the algebraic weight near 0;
    # away from 0 the oscillatory weight takes over
    split = min(T, T / (4.0 * n))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        head, err_head = integrate.quad(lambda t: math.cos(omega * t) / g, 0.0, split,
                                        weight="alg", wvar=(s - 1.0, 0.0),
                                        epsabs=tol / 4, epsrel=0.0, limit=200)
        tail, err_tail = 0.0, 0.0
        if split < T:
            tail, err_tail = integrate.quad(lambda t: t ** (s - 1.0) / g, split, T,
                                            weight="cos", wvar=omega,
                                            epsabs=tol / 4, epsrel=0.0, limit=400)
    warned = any(issubclass(w.category, integrate.IntegrationWarning) for w in caught)
    return 2.0 / T * (head + tail), 2.0 / T * (err_head + err_tail), warned


def _table_coefficient(kernel, T, n):
    b = np.append(kernel.breakpoints, np.inf)
    total = 0.0
    for lo, hi, v in zip(b[:-1], b[1:], kernel.values):
        lo, hi = min(lo, T), min(hi, T)
        if hi <= lo:
            continue
        if n == 0:
            total += v * (hi - lo)
        else:
            omega = 2.0 * math.pi * n / T
            total += v * (math.sin(omega * hi) - math.sin(omega * lo)) / omega
    return 2.0 / T * total


def fourier_cosine_coeffs(kernel, T: float, N: int = 64, tol: float = 1e-10) -> np.ndarray:
    """Return ``c_0 .. c_N`` for ``kernel`` on ``[0, T]``.

    Closed forms for constant, exponential and table kernels; adaptive
    quadrature for the Abel kernel with absolute tolerance ``tol`` per
    coefficient.  Raises :class:`NumericFailure` if quadrature misses it.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    n = np.arange(N + 1)
    if isinstance(kernel, Constant):
        out = np.zeros(N + 1)
        out[0] = 2.0 * kernel.v
        return out
    if isinstance(kernel, Exponential):
        c = kernel.c
        omega = 2.0 * math.pi * n / T
        return 2.0 / T * c * (-math.expm1(-c * T)) / (c * c + omega ** 2)
    if isinstance(kernel, Table):
        return np.array([_table_coefficient(kernel, T, m) for m in n])
    if isinstance(kernel, Abel):
        out = np.empty(N + 1)
        for m in n:
            val, err, warned = _abel_coefficient(kernel.s, T, int(m), tol)
            if warned or not err <= tol:
                raise NumericFailure(
                    f"coefficient {m} reached only {err:.2e} (requested {tol:.0e})", achieved=err)
            out[m] = val
        return out
    raise TypeError(f"unsupported kernel {kernel!r}")


# -- analytic facts --------------------------------------------------------

def analytic_check(kernel, T: float):
    """Verdict from the shape hypotheses; returns ``(verdict, reasons)``."""
    if isinstance(kernel, Exponential):
        return PROVEN, ["strictly convex", "decreasing", "positive mean"]
    if isinstance(kernel, Abel):
        if kernel.s < 1:
            return PROVEN, ["strictly convex", "decreasing", "positive mean",
                            "integrable singularity at 0"]
        return INCONCLUSIVE, [STRICT_CONVEXITY_FAILS, "constant kernel 1/Gamma(1)"]
    if isinstance(kernel, Constant):
        reasons = [STRICT_CONVEXITY_FAILS]
        if kernel.v <= 0:
            reasons.append("mean not positive")
        return INCONCLUSIVE, reasons
    if isinstance(kernel, Table):
        return _table_check(kernel, T)
    return INCONCLUSIVE, ["unknown kernel family"]


def _table_check(kernel, T):
    b = kernel.breakpoints
    v = kernel.values
    inside = b < T
    b, v = b[inside], v[inside]
    reasons = []
    if b.size == 0 or b[0] > 0:
        reasons.append("kernel not defined from t = 0")
    if b.size < 3:
        reasons.append("fewer than three breakpoints: strict convexity cannot be checked")
    if np.any(np.diff(v) >= 0):
        reasons.append("not strictly decreasing")
    if b.size >= 3:
        slopes = np.diff(v) / np.diff(b)
        if np.any(np.diff(slopes) <= 0):
            reasons.append(STRICT_CONVEXITY_FAILS)
    ends = np.append(b[1:], T)
    mean = float(np.sum(v * (ends - b))) if b.size else 0.0
    if not mean > 0:
        reasons.append("mean not positive")
    if reasons:
        return INCONCLUSIVE, reasons
    return PROVEN, ["breakpoint values strictly convex", "strictly decreasing", "positive mean"]


# -- discrete witness ------------------------------------------------------

def discrete_psd_check(A: VolterraOperator, probes: int = 256, seed: int = 0) -> float:
    """Smallest ``<A u, u>`` over unit-norm probes (and the exact bound for ``n <= 512``).

    Probes are standard normal vectors from a Philox stream keyed by ``seed``,
    scaled to unit ``L^2(0, T)`` norm, so each value is a Rayleigh quotient of
    the symmetric part of the weight matrix.
    """
    if probes < 1:
        raise ValueError("need at least one probe")
    n = A.n
    rng = np.random.Generator(np.random.Philox(seed))
    P = rng.standard_normal((probes, n))
    P /= np.linalg.norm(P, axis=1, keepdims=True)  # Euclidean unit = unit after h-scaling
    if n <= 2048:
        AP = P @ A.matrix().T
    else:
        AP = np.stack([A.apply_array(p) for p in P])
    best = float(np.min(np.einsum("ij,ij->i", AP, P)))
    if n <= _EIG_MAX_N:
        M = A.matrix()
        best = min(best, float(np.linalg.eigvalsh(0.5 * (M + M.T))[0]))
    return best


def check_kernel(kernel, T: float, N: int = 64, n: int = 256, seed: int = 0,
                 probes: int = 256, tol: float = 1e-10) -> MonotonicityReport:
    verdict, reasons = analytic_check(kernel, T)
    coeffs = fourier_cosine_coeffs(kernel, T, N, tol=tol)
    min_fourier = float(np.min(coeffs))
    notes = []
    if verdict == PROVEN and not min_fourier > 0:
        verdict = INCONCLUSIVE
        reasons = reasons + ["computed Fourier coefficients not all positive"]
    if verdict == PROVEN:
        notes.append("analytic proof from kernel shape")
    if min_fourier > 0:
        notes.append(f"numeric evidence: c_0..c_{N} positive")
    A = discretize(kernel, Grid(T, n))
    quad = discrete_psd_check(A, probes=probes, seed=seed)
    return MonotonicityReport(
        kernel=getattr(kernel, "spec", repr(kernel)), T=float(T),
        analytic_verdict=verdict, reasons=list(reasons),
        fourier_coeffs=[float(c) for c in coeffs], min_fourier=min_fourier,
        discrete_min_quadform=quad, N=int(N), n=int(n), probes=int(probes), seed=int(seed),
        notes=notes)
