"""Phantoms, noise, parameter choice and convergence-rate experiments.

Random numbers
--------------
Every random draw comes from numpy's Philox-4x64 counter-based generator
(``numpy.random.Philox``, 10 rounds, default multiplier and Weyl key
constants) keyed through ``numpy.random.SeedSequence``.  A trial of a rate
experiment uses the entropy tuple ``(master_seed, delta_index, trial_index)``;
:func:`add_noise` accepts either an integer seed or such a tuple.  Normal
variates are produced by ``Generator.standard_normal`` (ziggurat).  Fixing the
numpy major version therefore fixes every output bit for bit.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import InvalidParameter, LavrentievError
from .grid import Grid, Signal, format_float, lp_norm
from .oracle import SplitConfig, extragradient_solve
from .tv import solve_tv_lavrentiev
from .volterra import discretize, parse_kernel


# -- phantoms and noise ----------------------------------------------------

@dataclass(frozen=True)
class PhantomSpec:
    """Piecewise-constant function given by ``(start, value)`` pairs."""

    pieces: tuple

    def __post_init__(self):
        pieces = tuple((float(s), float(v)) for s, v in self.pieces)
        if not pieces:
            raise InvalidParameter("phantom needs at least one piece")
        if pieces[0][0] != 0.0:
            raise InvalidParameter("first phantom piece must start at 0")
        starts = [s for s, _ in pieces]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise InvalidParameter("phantom starts must be strictly increasing")
        object.__setattr__(self, "pieces", pieces)

    @property
    def jumps(self):
        """Locations of the jumps (starts after the first)."""
        return [s for s, _ in self.pieces[1:]]

    def total_variation(self):
        vals = [v for _, v in self.pieces]
        return float(sum(abs(b - a) for a, b in zip(vals, vals[1:])))


def make_phantom(spec: PhantomSpec, grid: Grid) -> Signal:
    """Cell value = value of the piece active at the cell midpoint."""
    if spec.pieces[-1][0] >= grid.T:
        raise InvalidParameter("phantom starts must lie in [0, T)")
    starts = np.array([s for s, _ in spec.pieces])
    values = np.array([v for _, v in spec.pieces])
    idx = np.searchsorted(starts, grid.midpoints(), side="right") - 1
    return Signal(grid, values[idx])


def rng_for(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def add_noise(f: Signal, delta: float, seed=0) -> Signal:
    """Return ``f + e`` with Gaussian ``e`` rescaled to ``||e||_2 = delta`` exactly."""
    if not delta >= 0:
        raise InvalidParameter(f"noise level must be nonnegative, got {delta}")
    if delta == 0:
        return f
    e = rng_for(seed).standard_normal(f.grid.n)
    e *= delta / lp_norm(f.like(e), 2)
    return f.like(f.values + e)


# -- parameter choice ------------------------------------------------------

@dataclass(frozen=True)
class RateParams:
    """Hoelder exponents of the source condition and the rule's scale ``c``."""

    r: float = 2.0
    p: float = 2.0
    c: float = 1.0

    def __post_init__(self):
        if not (self.r > 1 and self.p > 1 and self.c > 0):
            raise InvalidParameter("need r > 1, p > 1 and c > 0")

    @property
    def q(self):
        return self.p / (self.p - 1.0)

    @property
    def s(self):
        return self.r / (self.r - 1.0)

    @property
    def alpha_exponent(self):
        return self.r * (self.p - 1.0) / (self.r * self.p - 1.0)

    @property
    def rate_exponent(self):
        """Predicted exponent of ``||u - u_true|| ~ delta^e``."""
        return 1.0 / (self.r * self.p - 1.0)


def choose_alpha(delta: float, params: RateParams) -> float:
    """``alpha = c * delta^(r(p-1)/(rp-1))``."""
    if not delta > 0:
        raise InvalidParameter(f"delta must be positive, got {delta}")
    return params.c * delta ** params.alpha_exponent


# -- experiments -----------------------------------------------------------

@dataclass
class ExperimentConfig:
    kernel: str
    T: float
    n: int
    phantom: list
    deltas: list
    alpha_rule: dict
    seeds: int = 1
    master_seed: int = 0
    solver: str = "dp"
    tol: float = 1e-8
    relative_noise: bool = False

    def __post_init__(self):
        self.deltas = [float(d) for d in self.deltas]
        if not self.deltas:
            raise InvalidParameter("need at least one noise level")
        if any(d < 0 for d in self.deltas):
            raise InvalidParameter("noise levels must be nonnegative")
        if any(b >= a for a, b in zip(self.deltas, self.deltas[1:])):
            raise InvalidParameter("noise levels must be strictly decreasing")
        if self.solver not in ("dp", "oracle"):
            raise InvalidParameter(f"solver must be 'dp' or 'oracle', got {self.solver!r}")
        if int(self.seeds) < 1:
            raise InvalidParameter("need at least one seed")
        if len(self.alpha_rule) != 1 or next(iter(self.alpha_rule)) not in ("hoelder", "explicit"):
            raise InvalidParameter("alpha_rule must be {'hoelder': {...}} or {'explicit': [...]}")
        if "explicit" in self.alpha_rule and len(self.alpha_rule["explicit"]) != len(self.deltas):
            raise InvalidParameter("explicit alpha list must match the delta list")
        self.phantom_spec  # validates

    @property
    def phantom_spec(self):
        return PhantomSpec(tuple(tuple(p) for p in self.phantom))

    @property
    def grid(self):
        return Grid(self.T, self.n)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidParameter(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def alpha_for(self, index, delta):
        rule = self.alpha_rule
        if "explicit" in rule:
            return float(rule["explicit"][index])
        return choose_alpha(delta, RateParams(**rule["hoelder"]))


@dataclass
class RateRow:
    delta: float
    alpha: float
    error_l2: float
    error_l1: float
    work: float
    seeds: int
    failures: int = 0


@dataclass
class RateTable:
    rows: list = field(default_factory=list)

    def __post_init__(self):
        ds = [r.delta for r in self.rows]
        if any(b >= a for a, b in zip(ds, ds[1:])):
            raise InvalidParameter("rate table deltas must be strictly decreasing")

    HEADER = ("delta", "alpha", "error_l2", "error_l1", "work", "seeds")

    def to_csv(self):
        lines = [",".join(self.HEADER)]
        for r in self.rows:
            lines.append(",".join(format_float(getattr(r, k)) if k != "seeds" else str(r.seeds)
                                  for k in self.HEADER))
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or tuple(c.strip() for c in lines[0].split(",")) != cls.HEADER:
            raise InvalidParameter(f"rate table header must be {','.join(cls.HEADER)}")
        rows = []
        for ln in lines[1:]:
            parts = ln.split(",")
            if len(parts) != len(cls.HEADER):
                raise InvalidParameter(f"malformed rate table row {ln!r}")
            d, a, e2, e1, w = (float(x) for x in parts[:5])
            rows.append(RateRow(d, a, e2, e1, w, int(parts[5])))
        return cls(rows)

    @classmethod
    def read_csv(cls, path):
        with open(path) as fh:
            return cls.from_csv(fh.read())


@dataclass
class TrialResult:
    delta: float
    alpha: float
    u: Signal
    error_l2: float
    error_l1: float
    work: float
    failed: bool = False
    message: str = ""


def simulate(cfg: ExperimentConfig):
    """Operator, true solution and exact data of an experiment."""
    grid = cfg.grid
    A = discretize(parse_kernel(cfg.kernel), grid)
    u_true = make_phantom(cfg.phantom_spec, grid)
    f = A.apply_array(u_true.values)
    return A, u_true, Signal(grid, f)


def solve(A, f, alpha, solver="dp", tol=1e-8):
    """Solve with either path; returns ``(u, work)``."""
    if solver == "dp":
        u, trace = solve_tv_lavrentiev(A, f, alpha)
        return u, trace.work
    result = extragradient_solve(A, f, alpha, SplitConfig.default(A, tol=tol))
    if not result.converged:
        raise LavrentievError(f"oracle did not converge (residual {result.residual:.2e})")
    return result.u, result.iterations


def run_trial(cfg: ExperimentConfig, delta_index: int, trial_index: int, problem=None):
    """One ``(delta, seed)`` cell of a rate experiment, reproducible in isolation."""
    A, u_true, f = problem if problem is not None else simulate(cfg)
    delta = cfg.deltas[delta_index]
    if cfg.relative_noise:
        delta = delta * lp_norm(f, 2)
    alpha = cfg.alpha_for(delta_index, delta)
    f_delta = add_noise(f, delta, seed=(cfg.master_seed, delta_index, trial_index))
    try:
        u, work = solve(A, f_delta, alpha, cfg.solver, cfg.tol)
    except LavrentievError as exc:
        return TrialResult(delta, alpha, None, math.nan, math.nan, math.nan, True, str(exc))
    err = u - u_true
    return TrialResult(delta, alpha, u, lp_norm(err, 2), lp_norm(err, 1), float(work))


def run_rate_experiment(cfg: ExperimentConfig) -> RateTable:
    """Errors of the regularised solutions along the noise levels, averaged over seeds."""
    problem = simulate(cfg)
    rows = []
    for i in range(len(cfg.deltas)):
        trials = [run_trial(cfg, i, k, problem) for k in range(int(cfg.seeds))]
        ok = [t for t in trials if not t.failed]
        if ok:
            e2 = float(np.mean([t.error_l2 for t in ok]))
            e1 = float(np.mean([t.error_l1 for t in ok]))
            work = float(np.mean([t.work for t in ok]))
        else:
            e2 = e1 = work = math.nan
        rows.append(RateRow(trials[0].delta, trials[0].alpha, e2, e1, work,
                            int(cfg.seeds), len(trials) - len(ok)))
    return RateTable(rows)


@dataclass
class RateFit:
    slope: float
    intercept: float
    stderr: float

    def to_dict(self):
        return asdict(self)


def estimate_rate(table: RateTable) -> RateFit:
    """Least-squares slope of ``log(error_l2)`` against ``log(delta)``."""
    rows = [r for r in table.rows if r.delta > 0 and math.isfinite(r.error_l2)]
    if any(r.error_l2 <= 0 for r in rows):
        raise InvalidParameter("errors must be positive to fit a rate")
    if len(rows) < 3:
        raise InvalidParameter(f"need at least 3 valid rows, got {len(rows)}")
    x = np.log([r.delta for r in rows])
    y = np.log([r.error_l2 for r in rows])
    fit = stats.linregress(x, y)
    return RateFit(float(fit.slope), float(fit.intercept), float(fit.stderr))


def jump_locations(u: Signal, min_height=0.0):
    """Right endpoints of cells followed by a jump larger than ``min_height``."""
    idx = np.flatnonzero(np.abs(np.diff(u.values)) > min_height)
    return u.grid.right_endpoints()[idx]


# -- scenario diagnostics --------------------------------------------------

def significant_jumps(u: Signal, min_height: float):
    """``(locations, heights)`` of jumps with ``|height| >= min_height``.

    A jump between cells ``j`` and ``j+1`` sits at the right endpoint of
    cell ``j``; its height is ``u_{j+1} - u_j``.
    """
    du = np.diff(u.values)
    idx = np.flatnonzero(np.abs(du) >= min_height)
    return u.grid.right_endpoints()[idx], du[idx]


def jump_distances(u: Signal, spec: PhantomSpec, min_height: float):
    """Distance from each true jump to the nearest reconstructed jump of the same sign.

    Only reconstructed jumps at least ``min_height`` tall count.  Missing
    matches give ``inf``.
    """
    locs, heights = significant_jumps(u, min_height)
    vals = [v for _, v in spec.pieces]
    out = []
    for t_jump, dv in zip(spec.jumps, np.diff(vals)):
        same = locs[np.sign(heights) == np.sign(dv)]
        out.append(float(np.min(np.abs(same - t_jump))) if same.size else math.inf)
    return out


def plateau_errors(u: Signal, spec: PhantomSpec, margin: float):
    """Largest relative deviation ``|u - v| / |v|`` on each plateau.

    Cells whose midpoints lie within ``margin`` of a jump are ignored.
    """
    mid = u.grid.midpoints()
    starts = [s for s, _ in spec.pieces]
    ends = starts[1:] + [u.grid.T]
    out = []
    for (a, v), b in zip(spec.pieces, ends):
        lo = a + margin if a > 0 else a
        hi = b - margin if b < u.grid.T else b
        mask = (mid > lo) & (mid < hi)
        if not mask.any():
            out.append(math.nan)
            continue
        dev = np.max(np.abs(u.values[mask] - v))
        out.append(float(dev / abs(v)) if v != 0 else float(dev))
    return out
