"""Parameter schedules for the sharp-rotation constructions.

Two modes are supported:

* ``rotation-only``:   alpha_n = h(r_n) r_n^(-1/p),              q_n = 1
* ``stretch-rotation``: alpha_n = h(r_n) log(1/r_n)^(1/2) r_n^(-1/p), q_n = log(1/r_n)

with annuli A_n = {r_n <= |z| <= e r_n}.  Radii, spiral coefficients and
stretch exponents are all held as logarithms; r_n falls like exp(-2^n) in
the stretch mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from .mapcore import PiecewiseRadialMap, block_log_distortion, compose_blocks
from .sampling import StratifiedEstimate, stratified_integral

ROTATION_ONLY = "rotation-only"
STRETCH_ROTATION = "stretch-rotation"
MODES = (ROTATION_ONLY, STRETCH_ROTATION)

LOG_2E = 1.0 + math.log(2.0)
LOG_ANNULUS_FACTOR = math.log(math.pi) + math.log(math.e**2 - 1.0)  # |A_n| = pi (e^2-1) r_n^2
# cumulative rotation must stay a finite double with room for arithmetic
MAX_TOTAL_ROTATION = 1e300


class ConstraintViolation(ValueError):
    """A schedule parameter set breaks one of the construction constraints."""

    def __init__(self, constraint: str, detail: str = ""):
        self.constraint = constraint
        super().__init__(f"constraint failed: {constraint}" + (f" ({detail})" if detail else ""))


@dataclass(frozen=True)
class GaugeSpec:
    """Gauge h with h(r) -> 0 as r -> 0, non-decreasing in r.

    ``log-power``: h(r) = min(1, log(1/r)^(-s));  ``power``: h(r) = r^eps;
    ``tabulated``: monotone samples ``table = ((log_r, h), ...)`` interpolated
    in (log r, log h), undefined outside the sampled range.
    """

    family: str = "log-power"
    parameter: float = 1.0
    table: tuple = ()

    def __post_init__(self):
        if self.family not in ("log-power", "power", "tabulated"):
            raise ValueError(f"unknown gauge family {self.family!r}")
        if self.family == "tabulated":
            tab = tuple(sorted((float(a), float(b)) for a, b in self.table))
            object.__setattr__(self, "table", tab)
            if len(tab) < 2:
                raise ValueError("tabulated gauge needs at least two samples")
            lr = np.array([a for a, _ in tab])
            h = np.array([b for _, b in tab])
            if np.any(np.diff(lr) <= 0) or np.any(np.diff(h) <= 0) or np.any(h <= 0):
                raise ValueError("tabulated gauge must be positive and strictly increasing in r")
            if not h[0] < h[-1]:
                raise ValueError("tabulated gauge must decrease toward r = 0")
        elif not (math.isfinite(self.parameter) and self.parameter > 0):
            raise ValueError("gauge parameter must be a positive finite number")

    def log_h(self, log_r):
        """log h(r) for r < 1, given log r."""
        L = np.asarray(log_r, dtype=float)
        if self.family == "log-power":
            with np.errstate(divide="ignore", invalid="ignore"):
                val = np.where(-L > 1.0, -self.parameter * np.log(np.maximum(-L, 1.0)), 0.0)
        elif self.family == "power":
            val = self.parameter * L
        else:
            lr = np.array([a for a, _ in self.table])
            lh = np.log([b for _, b in self.table])
            if np.any(L < lr[0]) or np.any(L > lr[-1]):
                raise ValueError("radius outside the tabulated gauge range")
            val = np.interp(L, lr, lh)
        return val[()] if np.ndim(val) == 0 else val

    def __call__(self, r):
        return np.exp(self.log_h(np.log(r)))

    def to_dict(self) -> dict:
        d = {"family": self.family, "parameter": self.parameter}
        if self.family == "tabulated":
            d["table"] = [[a, b] for a, b in self.table]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GaugeSpec":
        return cls(d["family"], float(d.get("parameter", 1.0)), tuple(tuple(x) for x in d.get("table", ())))


def _log_alpha(mode: str, p: float, gauge: GaugeSpec, L):
    L = np.asarray(L, dtype=float)
    base = gauge.log_h(L) - L / p
    if mode == STRETCH_ROTATION:
        return base + 0.5 * np.log(-L)
    return base


@dataclass(frozen=True)
class SchedulePlan:
    p: float
    mode: str
    log_r: tuple
    log_alpha: tuple
    log_q: tuple
    gauge: GaugeSpec = field(default_factory=GaugeSpec)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not (math.isfinite(self.p) and self.p > 1):
            raise ValueError("p must be a finite number > 1")
        for name in ("log_r", "log_alpha", "log_q"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        if not (len(self.log_r) == len(self.log_alpha) == len(self.log_q)):
            raise ValueError("schedule lists must have equal length")
        if not all(math.isfinite(x) for x in self.log_r + self.log_alpha + self.log_q):
            raise ValueError("schedule entries must be finite")

    @property
    def N(self) -> int:
        return len(self.log_r)

    @property
    def r(self) -> np.ndarray:
        return np.exp(np.array(self.log_r))

    @property
    def R(self) -> np.ndarray:
        return np.exp(np.array(self.log_r) + 1.0)

    @property
    def alpha(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(np.array(self.log_alpha))

    @property
    def q(self) -> np.ndarray:
        return np.exp(np.array(self.log_q))

    def log_h(self) -> np.ndarray:
        return np.asarray(self.gauge.log_h(np.array(self.log_r)), dtype=float).reshape(-1)

    def to_dict(self) -> dict:
        lv = lambda xs: [{"log_value": x} for x in xs]  # noqa: E731
        return {
            "kind": "SchedulePlan",
            "p": self.p,
            "N": self.N,
            "mode": self.mode,
            "gauge": self.gauge.to_dict(),
            "r": lv(self.log_r),
            "R": lv([x + 1.0 for x in self.log_r]),
            "alpha": lv(self.log_alpha),
            "q": lv(self.log_q),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SchedulePlan":
        get = lambda key: tuple(float(x["log_value"]) for x in d[key])  # noqa: E731
        return cls(float(d["p"]), d["mode"], get("r"), get("alpha"), get("q"), GaugeSpec.from_dict(d["gauge"]))


def plan_from_radii(p: float, log_r: Sequence[float], gauge: GaugeSpec, mode: str = STRETCH_ROTATION) -> SchedulePlan:
    """Plan with alpha_n and q_n set by the mode's formulas at the given radii."""
    L = np.array(log_r, dtype=float).reshape(-1)
    if np.any(L >= 0):
        raise ValueError("radii must lie in (0, 1)")
    log_alpha = np.asarray(_log_alpha(mode, p, gauge, L), dtype=float).reshape(-1)
    log_q = np.log(-L) if mode == STRETCH_ROTATION else np.zeros_like(L)
    return SchedulePlan(p, mode, tuple(L), tuple(log_alpha), tuple(log_q), gauge)


def _step_constraints(mode: str, p: float, gauge: GaugeSpec, n: int, prior: list):
    """Upper bound from the geometric constraints and the remaining predicate."""
    upper = -1.0 if n == 1 else prior[-1] - LOG_2E
    if mode == STRETCH_ROTATION and n > 1:
        # r_n < e^{-(q_1 + ... + q_{n-1} - (n-1))} with q_j = -log r_j
        upper = min(upper, math.fsum(prior) + (n - 1))
    log_n_half = 0.5 * math.log(n)
    kappa = p / (2.0 * p - 1.0)

    def ok(L: float) -> bool:
        if not L < upper:
            return False
        if not gauge.log_h(L) < -log_n_half:
            return False
        la = float(_log_alpha(mode, p, gauge, L))
        if la < 0.0:
            return False
        if mode == STRETCH_ROTATION and not kappa * math.log(-L) < la:
            return False
        return True

    return upper, ok


def _largest_feasible(upper: float, ok, margin: float, floor: float = -1e6) -> float:
    L = upper - margin
    if ok(L):
        return L
    step = 0.25
    bad = L
    while True:
        cand = bad - step
        if cand < floor:
            raise ConstraintViolation("no feasible radius", f"searched down to log r = {floor}")
        if ok(cand):
            good = cand
            break
        bad = cand
        step *= 1.5
    for _ in range(200):
        mid = 0.5 * (good + bad)
        if mid in (good, bad):
            break
        if ok(mid):
            good = mid
        else:
            bad = mid
    L = good - margin
    while not ok(L):
        L -= margin
        if L < floor:
            raise ConstraintViolation("no feasible radius")
    return L


def generate_schedule(
    p: float,
    N: int,
    gauge: GaugeSpec | None = None,
    mode: str = STRETCH_ROTATION,
    margin: float = 1e-3,
) -> SchedulePlan:
    """Greedy schedule: each r_n is the largest radius (minus a log margin) meeting every constraint."""
    if gauge is None:
        gauge = GaugeSpec()
    if not (isinstance(p, (int, float)) and math.isfinite(p) and p > 1):
        raise ValueError("p must be a finite number > 1")
    if int(N) != N or N < 0:
        raise ValueError("N must be a non-negative integer")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not (margin > 0 and math.isfinite(margin)):
        raise ValueError("margin must be positive")
    prior: list[float] = []
    for n in range(1, int(N) + 1):
        upper, ok = _step_constraints(mode, p, gauge, n, prior)
        prior.append(_largest_feasible(upper, ok, margin))
    plan = plan_from_radii(p, prior, gauge, mode)
    if plan.N and math.fsum(plan.alpha) > MAX_TOTAL_ROTATION:
        raise ConstraintViolation(
            "total rotation representable",
            f"sum of alpha_n exceeds {MAX_TOTAL_ROTATION:g}; reduce N (log alpha_N = {plan.log_alpha[-1]:.1f})",
        )
    return plan


def compose_schedule(plan: SchedulePlan, check: bool = True) -> PiecewiseRadialMap:
    """Exact region table of the composed map for a feasible plan."""
    if check:
        failed = [c for c in check_feasibility(plan) if not c.passed and c.name != "gauge summability"]
        if failed:
            raise ConstraintViolation(failed[0].name, f"slack {failed[0].slack:.3g}")
    alpha = plan.alpha
    if plan.N and not np.all(np.isfinite(alpha)):
        raise ConstraintViolation("total rotation representable", "alpha_n overflows")
    return compose_blocks(plan.log_r, plan.q, alpha)


class ConstraintResult(NamedTuple):
    name: str
    passed: bool
    slack: float


def _rel_close(a, b, rtol=1e-12) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def check_feasibility(plan: SchedulePlan) -> list:
    """One entry per construction constraint; slack is a log-space margin (positive = satisfied)."""
    out = []
    L = np.array(plan.log_r)
    la = np.array(plan.log_alpha)
    lq = np.array(plan.log_q)
    N = plan.N
    p = plan.p

    def add(name, slacks):
        s = float(np.min(slacks)) if np.size(slacks) else math.inf
        out.append(ConstraintResult(name, bool(s > 0), s))

    add("r_1 < 1/e", [-1.0 - L[0]] if N else [])
    add("r_{n+1} < r_n/(2e)", L[:-1] - LOG_2E - L[1:])
    amin = float(np.min(la)) if N else math.inf
    out.append(ConstraintResult("alpha_n >= 1", bool(amin >= 0.0), amin))
    expect = np.asarray(_log_alpha(plan.mode, p, plan.gauge, L), dtype=float).reshape(-1) if N else np.array([])
    mismatch = _rel_close(la, expect)
    if plan.mode == ROTATION_ONLY:
        out.append(ConstraintResult("alpha_n = h(r_n) r_n^(-1/p)", mismatch <= 1e-12, 1e-12 - mismatch))
        qm = float(np.max(np.abs(lq))) if N else 0.0
        out.append(ConstraintResult("q_n = 1", qm == 0.0, -qm))
    else:
        out.append(ConstraintResult("alpha_n = h(r_n) log(1/r_n)^(1/2) r_n^(-1/p)", mismatch <= 1e-12, 1e-12 - mismatch))
        qmis = _rel_close(lq, np.log(-L)) if N else 0.0
        out.append(ConstraintResult("q_n = log(1/r_n)", qmis <= 1e-12, 1e-12 - qmis))
        q = np.exp(lq)
        bound = np.array([math.fsum(q[:k]) - k for k in range(N)])
        add("r_n < e^{-(q_1+...+q_{n-1}-(n-1))}", (-bound - L)[1:])
        add("q_n^{p/(2p-1)} < alpha_n", la - p / (2 * p - 1) * lq)
    lh = plan.log_h() if N else np.array([])
    add("h(r_n) < n^{-1/2}", -0.5 * np.log(np.arange(1, N + 1)) - lh)
    out.append(_gauge_summability(plan, lh))
    return out


def _gauge_summability(plan: SchedulePlan, lh: np.ndarray) -> ConstraintResult:
    """Sum h(r_n)^{2p} certified by the local decay exponent of its last two terms.

    With a_n = h(r_n)^{2p} ~ n^{-k}, k = log(a_{N-1}/a_N) / log(N/(N-1)); the
    series is certified when k > 1 (p-series comparison).  Slack is k - 1.
    """
    N = plan.N
    if N < 2:
        return ConstraintResult("gauge summability", True, math.inf)
    la = 2.0 * plan.p * lh
    k = (la[-2] - la[-1]) / math.log(N / (N - 1))
    return ConstraintResult("gauge summability", bool(k > 1.0), float(k - 1.0))


# -- convergence series -------------------------------------------------


@dataclass(frozen=True)
class SeriesResult:
    name: str
    log_terms: tuple
    log_partial_sums: tuple
    tail_ratio: float
    log_tail_bound: float
    convergent: bool

    @property
    def partial_sums(self) -> np.ndarray:
        return np.exp(np.array(self.log_partial_sums))

    def to_dict(self) -> dict:
        f = lambda x: None if not math.isfinite(x) else x  # noqa: E731
        return {
            "name": self.name,
            "log_terms": list(self.log_terms),
            "log_partial_sums": list(self.log_partial_sums),
            "partial_sums": [f(float(x)) for x in self.partial_sums],
            "tail_ratio": f(self.tail_ratio),
            "log_tail_bound": f(self.log_tail_bound),
            "convergent": self.convergent,
        }


@dataclass(frozen=True)
class ConvergenceReport:
    series: dict
    ratio_threshold: float

    def __getitem__(self, name) -> SeriesResult:
        return self.series[name]

    def to_dict(self) -> dict:
        return {"ratio_threshold": self.ratio_threshold, "series": {k: v.to_dict() for k, v in self.series.items()}}


def log_annulus_areas(plan: SchedulePlan) -> np.ndarray:
    return LOG_ANNULUS_FACTOR + 2.0 * np.array(plan.log_r)


def log_block_distortions(plan: SchedulePlan) -> np.ndarray:
    return np.asarray(block_log_distortion(plan.q, plan.alpha), dtype=float).reshape(-1)


def _series(name: str, log_terms: np.ndarray, threshold: float) -> SeriesResult:
    lt = np.asarray(log_terms, dtype=float)
    lps = np.logaddexp.accumulate(lt) if lt.size else lt
    if lt.size >= 2:
        log_ratio = float(lt[-1] - lt[-2])
        ratio = math.exp(log_ratio)
        tail = lt[-1] + log_ratio - math.log1p(-ratio) if log_ratio < 0 else math.inf
    else:
        ratio, tail = math.nan, math.nan
    return SeriesResult(name, tuple(lt), tuple(lps), ratio, tail, bool(ratio < threshold))


def series_report(plan: SchedulePlan, ratio_threshold: float = 1.0) -> ConvergenceReport:
    """Partial sums (log form) and last-term ratio verdicts for the integrability series."""
    L = np.array(plan.log_r)
    la = np.array(plan.log_alpha)
    lq = np.array(plan.log_q)
    lA = log_annulus_areas(plan)
    p = plan.p
    terms = {
        "rotation_area": la + 2.0 * L,
        "rotation_distortion_lp": lA + p * (math.log(4.0) + 2.0 * la),
        "stretch_rotation_area": lA + la,
        "stretch_distortion_lp": lA + 2.0 * p * la - p * lq,
        "gauge": 2.0 * p * plan.log_h() if plan.N else np.array([]),
        "distortion": lA + p * log_block_distortions(plan) if plan.N else np.array([]),
    }
    return ConvergenceReport({k: _series(k, v, ratio_threshold) for k, v in terms.items()}, ratio_threshold)


# -- L^p norm of the distortion ----------------------------------------


def log_distortion_lp_integral(plan: SchedulePlan, disk_radius: float = 1.0) -> float:
    """log of the integral of K^p over B(0, disk_radius), from closed-form annulus terms."""
    if plan.N and not plan.log_r[0] + 1.0 < math.log(disk_radius):
        raise ValueError("outermost annulus must lie inside the disk")
    lA = log_annulus_areas(plan)
    disk = math.pi * disk_radius**2
    rest = disk - float(np.sum(np.exp(lA))) if plan.N else disk
    parts = [math.log(rest)]
    if plan.N:
        parts.extend(lA + plan.p * log_block_distortions(plan))
    return float(logsumexp(parts))


def distortion_lp_norm(plan: SchedulePlan, disk_radius: float = 1.0) -> float:
    """||K||_{L^p(B(0, disk_radius))} computed analytically."""
    return math.exp(log_distortion_lp_integral(plan, disk_radius) / plan.p)


def shell_edges(fmap: PiecewiseRadialMap, disk_radius: float = 1.0) -> list:
    """Region-blind strata: each shell holds exactly one action annulus plus gap slack."""
    top = math.log(disk_radius)
    edges = [-math.inf]
    for reg in fmap.regions[1:-1]:
        if reg.is_gap and reg.log_t_hi < top:
            edges.append(0.5 * (reg.log_t_lo + reg.log_t_hi))
    if top > 0.0 and edges[-1] < 0.0:
        edges.append(0.0)
    edges.append(top)
    return edges


def distortion_lp_integral_mc(
    fmap: PiecewiseRadialMap, p: float, sample_count: int, seed: int, disk_radius: float = 1.0
) -> StratifiedEstimate:
    """Stratified Monte-Carlo estimate of the integral of K^p, K evaluated pointwise."""
    if sample_count < 10_000:
        raise ValueError("sample_count must be at least 10^4")
    if fmap.n_blocks and not fmap.regions[-2].log_t_hi < math.log(disk_radius):
        raise ValueError("outermost annulus must lie inside the disk")

    def log_f(u, theta):
        return p * fmap.log_distortion_at(u)

    return stratified_integral(log_f, shell_edges(fmap, disk_radius), sample_count, seed)


def distortion_lp_norm_mc(fmap: PiecewiseRadialMap, p: float, sample_count: int, seed: int, disk_radius: float = 1.0):
    """(estimate, standard_error) of ||K||_{L^p(B(0, disk_radius))}; SE by the delta method."""
    est = distortion_lp_integral_mc(fmap, p, sample_count, seed, disk_radius)
    norm = math.exp(est.log_integral / p)
    se = norm / p * math.exp(est.log_standard_error - est.log_integral)
    return norm, se
