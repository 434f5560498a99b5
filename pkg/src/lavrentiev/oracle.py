"""Reference solver for ``A u + alpha dTV(u) ∋ f`` by extragradient splitting.

The operator is monotone and Lipschitz but, being a nonsymmetric triangular
matrix, not cocoercive, so plain forward-backward iterations may diverge.
The Korpelevich two-step scheme with the taut string as proximal map converges
for ``tau * ||A|| < 1``.  Speed is not a concern here; independence from the
dynamic-programming solver is.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .grid import Signal, check_same_grid
from .tv import taut_string_prox
from .volterra import VolterraOperator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitConfig:
    tau: float
    tol: float = 1e-10
    max_iter: int = 1_000_000
    op_norm: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidParameter("step size must be positive")
        if not self.tau * self.op_norm < 1:
            raise InvalidParameter(
                f"step restriction violated: tau * ||A|| = {self.tau * self.op_norm} >= 1")
        if not self.tol > 0 or self.max_iter < 1:
            raise InvalidParameter("tol must be positive and max_iter at least 1")

    @classmethod
    def default(cls, A, tol=1e-10, max_iter=1_000_000, tau=None):
        L_A = operator_norm_estimate(A)
        # a 1% safety margin covers the power-iteration error
        bound = 1.01 * L_A
        if tau is None:
            tau = 0.9 / bound if bound > 0 else 1.0
        return cls(tau=tau, tol=tol, max_iter=max_iter, op_norm=bound)


@dataclass
class OracleResult:
    u: Signal
    iterations: int
    residual: float
    converged: bool
    residual_history: np.ndarray = None


def operator_norm_estimate(A: VolterraOperator, iters: int = 200) -> float:
    """Spectral norm of ``A`` on ``L^2(0, T)`` by power iteration on ``M^T M``.

    The ``h`` weighting of the inner product cancels in the norm, so this is
    the largest singular value of the weight matrix.  Starts from all ones.
    """
    if iters < 10:
        raise InvalidParameter("need at least 10 power iterations")
    w = A.weights
    if not np.any(w):
        return 0.0
    M = A.matrix()
    x = np.ones(A.n) / np.sqrt(A.n)
    sigma = 0.0
    for _ in range(iters):
        y = M.T @ (M @ x)
        norm = np.linalg.norm(y)
        if norm == 0:
            return 0.0
        x = y / norm
        sigma = np.sqrt(norm)
    return float(sigma)


def extragradient_solve(A: VolterraOperator, f: Signal, alpha: float,
                        cfg: SplitConfig = None, u0=None, keep_history=False):
    """Korpelevich iteration with taut-string proximal steps.

    Parameters
    ----------
    A : VolterraOperator
    f : Signal
    alpha : float
        Regularisation parameter.
    cfg : SplitConfig, optional
        Defaults to ``SplitConfig.default(A)``.
    u0 : Signal or array, optional
        Starting point, zero by default.
    keep_history : bool
        Record the fixed-point residual of every iteration.

    Returns
    -------
    OracleResult
        ``converged`` is False when ``max_iter`` ran out; the last iterate is
        still returned.
    """
    if not alpha > 0:
        raise InvalidParameter(f"alpha must be positive, got {alpha}")
    check_same_grid(A.grid, f.grid)
    if cfg is None:
        cfg = SplitConfig.default(A)
    h = A.grid.h
    tau = cfg.tau
    lam = tau * alpha
    fv = f.values
    u = np.zeros(A.n) if u0 is None else np.array(getattr(u0, "values", u0), dtype=float)

    def prox(g):
        return taut_string_prox(f.like(g), lam).values

    history = [] if keep_history else None
    residual = np.inf
    for it in range(1, cfg.max_iter + 1):
        u_half = prox(u - tau * (A.apply_array(u) - fv))
        u_new = prox(u - tau * (A.apply_array(u_half) - fv))
        step = np.sqrt(h) * np.linalg.norm(u_new - u)
        scale = max(1.0, np.sqrt(h) * np.linalg.norm(u))
        residual = step / scale
        if history is not None:
            history.append(step)
        u = u_new
        if residual <= cfg.tol:
            return OracleResult(f.like(u), it, residual, True,
                                np.asarray(history) if history is not None else None)
    log.warning("extragradient stopped after %d iterations, residual %.3e", cfg.max_iter, residual)
    return OracleResult(f.like(u), cfg.max_iter, residual, False,
                        np.asarray(history) if history is not None else None)
