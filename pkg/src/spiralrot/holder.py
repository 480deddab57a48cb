"""Empirical Holder exponents from extremal difference quotients.

For each dyadic scale s, pairs (x, y) with |x - y| = s are drawn across
every region of the map, together with deterministic pairs placed where
random sampling misses the extremal geometry: radial pairs straddling or
touching each region circle, tangential chords on it, diagonal pairs, and
pairs through the origin.  The exponent is the least-squares slope of
log(max or min |f(x) - f(y)|) against log s.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .construction import STRETCH_ROTATION, SchedulePlan, compose_schedule
from .mapcore import PiecewiseRadialMap

ABOVE = "above"
BELOW = "below"
# points much closer to the origin than the scale behave like the origin
DEPTH_BELOW_SCALE = 3.0


@dataclass(frozen=True)
class PairSampler:
    """Where to draw pairs: ``log_boundaries`` are the circles worth straddling."""

    seed: int = 0
    per_region: int = 200
    disk_radius: float = 1.0
    log_boundaries: tuple = ()

    @classmethod
    def for_map(cls, fmap: PiecewiseRadialMap, seed: int = 0, per_region: int = 200) -> "PairSampler":
        return cls(seed, per_region, 1.0, tuple(fmap.boundaries().tolist()))

    @classmethod
    def for_inverse(cls, fmap: PiecewiseRadialMap, seed: int = 0, per_region: int = 200) -> "PairSampler":
        """Region circles pushed to the image side, for sampling the inverse."""
        img = fmap.log_profile(fmap.boundaries())[0]
        return cls(seed, per_region, 1.0, tuple(np.atleast_1d(img).tolist()))


def dyadic_scales(d_min: float, d_max: float) -> np.ndarray:
    k0 = math.ceil(math.log2(d_min))
    k1 = math.floor(math.log2(d_max))
    return np.ldexp(1.0, np.arange(k0, k1 + 1))


def sample_pairs(sampler: PairSampler, s: float, rng: np.random.Generator):
    """Pairs (x, y) with |x - y| = s; returns two complex arrays."""
    ls = math.log(s)
    top = math.log(sampler.disk_radius)
    cuts = sorted(b for b in set(sampler.log_boundaries) if ls - DEPTH_BELOW_SCALE < b < top)
    edges = [ls - DEPTH_BELOW_SCALE, *cuts, top]
    xs = []
    for lo, hi in zip(edges, edges[1:]):
        u = rng.uniform(lo, hi, sampler.per_region)
        xs.append(np.exp(u + 1j * rng.uniform(-math.pi, math.pi, sampler.per_region)))
    # near the origin: area-uniform in a disk a few scales wide
    m = sampler.per_region
    rad = 4.0 * s * np.sqrt(rng.random(m))
    xs.append(rad * np.exp(1j * rng.uniform(-math.pi, math.pi, m)))
    x = np.concatenate(xs)
    y = x + s * np.exp(1j * rng.uniform(-math.pi, math.pi, x.size))

    # deterministic placements (rotation invariance lets them sit on the real axis)
    det_x, det_y = [0.0, -0.5 * s], [s, 0.5 * s]
    for b in cuts:
        t = math.exp(b)
        det_x += [t, t - 0.5 * s, t, t, t]
        det_y += [t + s, t + 0.5 * s, t + s * np.exp(0.25j * math.pi), t + s * np.exp(0.75j * math.pi), t - s]
        if s < 2.0 * t:
            phi = 2.0 * math.asin(s / (2.0 * t))
            det_x.append(t)
            det_y.append(t * np.exp(1j * phi))
    return np.concatenate([x, np.asarray(det_x, dtype=complex)]), np.concatenate([y, np.asarray(det_y, dtype=complex)])


@dataclass(frozen=True)
class ExponentFit:
    side: str
    exponent: float
    constant: float
    scale_range: tuple
    residual: float
    scales: np.ndarray = field(repr=False)
    log_extremal: np.ndarray = field(repr=False)

    def log_fitted(self) -> np.ndarray:
        return math.log(self.constant) + self.exponent * np.log(self.scales)

    def quotients(self) -> np.ndarray:
        """extremal |f(x) - f(y)| / s^exponent at each scale."""
        return np.exp(self.log_extremal - self.exponent * np.log(self.scales))

    def rows(self, name: str = "") -> list:
        fitted = self.log_fitted()
        q = self.quotients()
        return [
            {
                "fit": name,
                "side": self.side,
                "scale": float(s),
                "log_scale": float(math.log(s)),
                "log_extremal": float(le),
                "extremal_quotient": float(qq),
                "log_fitted": float(lf),
            }
            for s, le, qq, lf in zip(self.scales, self.log_extremal, q, fitted)
        ]

    def to_dict(self) -> dict:
        return {
            "side": self.side,
            "exponent": self.exponent,
            "constant": self.constant,
            "scale_range": list(self.scale_range),
            "residual": self.residual,
        }


def _fit_line(log_s: np.ndarray, log_e: np.ndarray, side: str, scales: np.ndarray) -> ExponentFit:
    A = np.vstack([log_s, np.ones_like(log_s)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, log_e, rcond=None)
    resid = float(np.sqrt(np.mean((A @ np.array([slope, icpt]) - log_e) ** 2)))
    return ExponentFit(
        side, float(slope), float(math.exp(icpt)), (float(scales[0]), float(scales[-1])), resid, scales, log_e
    )


def extremal_differences(f: Callable, sampler: PairSampler, side: str, scales: Sequence[float]):
    """log of max (above) or min (below) |f(x) - f(y)| at each scale.

    Scales whose pairs give no finite positive difference are dropped.
    """
    if side not in (ABOVE, BELOW):
        raise ValueError(f"side must be {ABOVE!r} or {BELOW!r}")
    scales = np.asarray(scales, dtype=float)
    children = np.random.SeedSequence(sampler.seed).spawn(len(scales))
    kept, vals = [], []
    for s, child in zip(scales, children):
        x, y = sample_pairs(sampler, float(s), np.random.default_rng(child))
        d = np.abs(np.asarray(f(x)) - np.asarray(f(y)))
        d = d[np.isfinite(d) & (d > 0)]
        if d.size < 2:
            warnings.warn(f"too few usable pairs at scale {s:.3e}; skipped", RuntimeWarning, stacklevel=2)
            continue
        kept.append(s)
        vals.append(math.log(d.max() if side == ABOVE else d.min()))
    return np.array(kept), np.array(vals)


def fit_exponent(f: Callable, sampler: PairSampler, side: str, scales: Sequence[float]) -> ExponentFit:
    """Least-squares exponent of the extremal difference against the scale."""
    scales = np.sort(np.asarray(scales, dtype=float))
    if scales.size < 2 or scales[-1] / scales[0] < 100.0 * (1 - 1e-12):
        raise ValueError("scales must span at least two decades")
    kept, vals = extremal_differences(f, sampler, side, scales)
    if kept.size < 2:
        raise ValueError("fewer than two usable scales")
    return _fit_line(np.log(kept), vals, side, kept)


def _min_ratio(x, y, gx, gy, power: float) -> float:
    d = np.abs(x - y)
    return float(np.min(np.abs(gx - gy) / d**power))


@dataclass
class GBoundsReport:
    above: ExponentFit
    below: ExponentFit
    sqrt_constant: float
    cubic_constant: float
    derivative_constant: float
    derivative_grid: tuple
    tangential_contraction: bool
    gap_slopes_ok: bool
    edge_slopes_ok: bool

    ABOVE_BAND = (0.45, 0.55)

    @property
    def flags(self) -> dict:
        lo, hi = self.ABOVE_BAND
        return {
            "above_in_band": lo <= self.above.exponent <= hi,
            "above_consistent": self.above.exponent >= lo,
            "sqrt_bound_constant_finite": math.isfinite(self.sqrt_constant),
            "below_at_most_3.1": self.below.exponent <= 3.1,
            "cubic_constant_positive": self.cubic_constant > 0.0,
            "derivative_constant_positive": self.derivative_constant > 0.0,
            "tangential_contraction": self.tangential_contraction,
            "gap_slope_vs_radius": self.gap_slopes_ok,
            "edge_slope_identity": self.edge_slopes_ok,
        }

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        return {
            "above": self.above.to_dict(),
            "below": self.below.to_dict(),
            "sqrt_constant": self.sqrt_constant,
            "cubic_constant": self.cubic_constant,
            "derivative_constant": self.derivative_constant,
            "derivative_grid": list(self.derivative_grid),
            "flags": self.flags,
            "passed": self.passed,
        }


def stretch_factor(plan: SchedulePlan) -> PiecewiseRadialMap:
    """The map built from the plan with every rotation switched off."""
    return compose_schedule(plan, check=False).with_alpha_zero()


def check_g_bounds(
    plan: SchedulePlan,
    *,
    scales: Sequence[float] | None = None,
    seed: int = 0,
    per_region: int = 200,
    grid_decades: tuple = (-3.0, 0.0),
    grid_points: int = 1000,
) -> GBoundsReport:
    """Holder above/below fits, cubic constant and s'(t)/t^2 for the stretch factor."""
    if plan.mode != STRETCH_ROTATION:
        raise ValueError("the stretch factor is only defined in stretch mode")
    g = stretch_factor(plan)
    scales = dyadic_scales(1e-6, 1e-1) if scales is None else np.asarray(scales, dtype=float)
    sampler = PairSampler.for_map(g, seed, per_region)
    above = fit_exponent(g.eval, sampler, ABOVE, scales)
    below = fit_exponent(g.eval, sampler, BELOW, scales)

    sq, cu = 0.0, math.inf
    children = np.random.SeedSequence(seed).spawn(len(scales))
    tangential = True
    for s, child in zip(scales, children):
        x, y = sample_pairs(sampler, float(s), np.random.default_rng(child))
        gx, gy = g.eval(x), g.eval(y)
        d = np.abs(x - y)
        diff = np.abs(gx - gy)
        sq = max(sq, float(np.max(diff / np.sqrt(d))))
        cu = min(cu, float(np.min(diff / d**3)))
        # tangential chords: same modulus, so |g(x) - g(w)| <= |x - w|
        w = x * np.exp(1j * s / np.maximum(np.abs(x), s))
        gw = g.eval(w)
        tangential &= bool(np.all(np.abs(gx - gw) <= np.abs(x - w) * (1 + 1e-12)))

    u = np.linspace(grid_decades[0] * math.log(10.0), grid_decades[1] * math.log(10.0), grid_points)
    # one-sided derivative on the circles themselves is not wanted: nudge off them
    u = u[~np.isin(u, g.boundaries())]
    ld = g.log_radial_derivative(u)
    dconst = float(np.exp(np.min(ld - 2.0 * u)))

    # closed forms: gap slope lambda_n against e r_n^2, and at t = r_n the
    # slope q_n lambda_n (both sides of the identity lambda_{n-1} q_n e^{-(q_n-1)})
    regs = g.regions
    gap_ok, edge_ok = True, True
    for n, L in enumerate(plan.log_r, start=1):
        k = int(g.region_index(L - 1e-9 * max(1.0, abs(L))))
        gap_ok &= regs[k].log_lambda >= 1.0 + 2.0 * L - 1e-12 * abs(L)
        ka = int(g.region_index(L))
        lam_prev = regs[ka].log_lambda
        q = plan.q[n - 1]
        lhs = lam_prev + math.log(q) - (q - 1.0)
        rhs = math.log(q) + regs[k].log_lambda
        edge_ok &= abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))
        edge_ok &= abs(float(g.log_radial_derivative(np.array([L]))[0]) - lhs) <= 1e-9 * max(1.0, abs(lhs))

    return GBoundsReport(
        above, below, sq, cu, dconst, (float(u[0]), float(u[-1]), int(u.size)), tangential, bool(gap_ok), bool(edge_ok)
    )


@dataclass
class InverseHolderReport:
    forward_above: ExponentFit
    inverse_above: ExponentFit
    forward_below_same: ExponentFit
    inverse_above_same: ExponentFit
    below_threshold: float
    slack: float

    @property
    def reciprocal_error(self) -> float:
        return abs(self.forward_below_same.exponent * self.inverse_above_same.exponent - 1.0)

    @property
    def flags(self) -> dict:
        return {
            "reciprocal_within_5pct": self.reciprocal_error <= 0.05,
            "below_exponent_within_threshold": self.forward_below_same.exponent <= self.below_threshold + self.slack,
        }

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        return {
            "forward_above": self.forward_above.to_dict(),
            "inverse_above": self.inverse_above.to_dict(),
            "forward_below_same_pairs": self.forward_below_same.to_dict(),
            "inverse_above_same_pairs": self.inverse_above_same.to_dict(),
            "reciprocal_error": self.reciprocal_error,
            "below_threshold": self.below_threshold,
            "slack": self.slack,
            "flags": self.flags,
            "passed": self.passed,
        }


def reciprocal_fits(fmap: PiecewiseRadialMap, sampler: PairSampler, scales: Sequence[float]):
    """Below fit of f and above fit of f^{-1} on one shared set of pairs.

    Each domain scale s gives the pair achieving min |f(x) - f(y)|.  Read
    backwards, that pair bounds |f^{-1}(w) - f^{-1}(w')| = s at image
    distance m(s), so the inverse fit regresses log s on log m(s).
    """
    kept, vals = extremal_differences(fmap.eval, sampler, BELOW, scales)
    below = _fit_line(np.log(kept), vals, BELOW, kept)
    order = np.argsort(vals)
    img = np.exp(vals[order])
    inv = _fit_line(vals[order], np.log(kept[order]), ABOVE, img)
    return below, inv


def check_inverse_holder(
    fmap: PiecewiseRadialMap,
    plan: SchedulePlan | None,
    *,
    scales: Sequence[float] | None = None,
    seed: int = 0,
    per_region: int = 200,
    slack: float = 0.1,
) -> InverseHolderReport:
    """Above fits of f and f^{-1}, and the below exponent of f against 3p/(p-1)."""
    scales = dyadic_scales(1e-6, 1e-1) if scales is None else np.asarray(scales, dtype=float)
    fwd = fit_exponent(fmap.eval, PairSampler.for_map(fmap, seed, per_region), ABOVE, scales)
    inv = fit_exponent(fmap.inverse_eval, PairSampler.for_inverse(fmap, seed, per_region), ABOVE, scales)
    below, inv_same = reciprocal_fits(fmap, PairSampler.for_map(fmap, seed, per_region), scales)
    threshold = 3.0 * plan.p / (plan.p - 1.0) if plan is not None and plan.p > 1 else math.inf
    return InverseHolderReport(fwd, inv, below, inv_same, threshold, slack)


def fits_to_csv(named_fits: Sequence[tuple]) -> str:
    """CSV of (name, fit) pairs: one row per scale."""
    buf = io.StringIO()
    cols = ["fit", "side", "scale", "log_scale", "log_extremal", "extremal_quotient", "log_fitted"]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for name, fit in named_fits:
        for row in fit.rows(name):
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()
