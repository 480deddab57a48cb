"""Rotation of a map along rays from the origin.

The lift of ``arg f(t e^{i theta})`` is tracked by stepping in ``log t`` and
only accepting steps whose wrapped increments stay below pi/2, with each
step cross-checked against its two half steps so a full turn cannot hide
inside one step.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .construction import STRETCH_ROTATION, SchedulePlan
from .mapcore import PiecewiseRadialMap

TWO_PI = 2.0 * math.pi
MAX_INCREMENT = 0.5 * math.pi
SAFE_INCREMENT = 0.125 * math.pi
# first step of every segment, relative to max(1, |log t|)
PROBE_STEP = 1e-9
EPS = float(np.finfo(float).eps)


class TrackingError(RuntimeError):
    """The adaptive step underflowed before increments fell below pi/2."""


def _wrap(x):
    return np.remainder(np.asarray(x) + math.pi, TWO_PI) - math.pi


def _angle_function(fmap, theta: float) -> Callable[[np.ndarray], np.ndarray]:
    """Wrapped arg of f(e^u e^{i theta}) as a vectorised function of u."""
    if isinstance(fmap, PiecewiseRadialMap):
        def ang(u):
            _, a = fmap.logpolar(u, theta)
            return _wrap(a)
    else:
        def ang(u):
            z = np.exp(np.asarray(u, dtype=float)) * complex(math.cos(theta), math.sin(theta))
            return np.angle(np.asarray(fmap(z)))
    return ang


def bound_curve(log_t, p: float, alpha_below: float):
    """sqrt(alpha) t^{-1/p} log^{1/2}(1/t), the rotation growth envelope (log form)."""
    L = np.asarray(log_t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 0.5 * math.log(alpha_below) - L / p + 0.5 * np.log(-L)


@dataclass(frozen=True)
class RotationProfile:
    theta: float
    log_t: np.ndarray
    unwrapped_arg: np.ndarray
    p: float = math.nan
    alpha_below: float = math.nan

    @property
    def t(self) -> np.ndarray:
        return np.exp(self.log_t)

    @property
    def final(self) -> float:
        return float(self.unwrapped_arg[-1])

    def bound_value(self) -> np.ndarray:
        if not (math.isfinite(self.p) and math.isfinite(self.alpha_below)):
            return np.full_like(self.log_t, math.nan)
        with np.errstate(over="ignore"):
            return np.exp(bound_curve(self.log_t, self.p, self.alpha_below))

    def at(self, log_t: float) -> float:
        """Unwrapped argument at a tracked radius (must be a recorded stop)."""
        hit = np.nonzero(self.log_t == log_t)[0]
        if hit.size == 0:
            raise KeyError(f"log t = {log_t!r} was not a tracking stop")
        return float(self.unwrapped_arg[hit[0]])

    def to_csv(self, rows=None) -> str:
        """CSV with columns t, log_t, unwrapped_arg, bound_value, ratio."""
        bound = self.bound_value()
        idx = range(len(self.log_t)) if rows is None else rows
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "log_t", "unwrapped_arg", "bound_value", "ratio"])
        for i in idx:
            b = float(bound[i])
            ratio = abs(float(self.unwrapped_arg[i]) - self.theta) / b if b > 0 and math.isfinite(b) else math.nan
            w.writerow([repr(float(self.t[i])), repr(float(self.log_t[i])), repr(float(self.unwrapped_arg[i])), repr(b), repr(ratio)])
        return buf.getvalue()


def continuous_arg(
    fmap,
    theta: float,
    t_start: float = 1.0,
    t_end: float | None = None,
    tol: float = 1e-9,
    *,
    log_t_start: float | None = None,
    log_t_end: float | None = None,
    stops=(),
    p: float = math.nan,
    alpha_below: float = math.nan,
    batch: int = 64,
    max_steps: int = 5_000_000,
) -> RotationProfile:
    """Lift of arg f(t e^{i theta}) as t decreases from t_start to t_end.

    ``stops`` are extra log radii that the stepping lands on exactly (region
    circles of a :class:`PiecewiseRadialMap` are always added).  Each segment
    starts from a probe step of 1e-9 in log t and grows at most geometrically,
    capped so the observed rate times the step stays below pi/8.  The start
    value is the branch of arg f nearest to ``theta``.  If halving drives the
    step below ``tol`` times the probe (never below 64 ulp of log t),
    :class:`TrackingError` is raised.
    """
    u0 = math.log(t_start) if log_t_start is None else float(log_t_start)
    if log_t_end is None:
        if t_end is None:
            raise ValueError("t_end or log_t_end is required")
        u1 = math.log(t_end)
    else:
        u1 = float(log_t_end)
    if not (u1 < u0 <= 0.0):
        raise ValueError("need 0 < t_end < t_start <= 1")
    ang = _angle_function(fmap, theta)
    marks = {float(s) for s in stops}
    if isinstance(fmap, PiecewiseRadialMap):
        # the rate of rotation jumps on region circles
        marks |= set(fmap.boundaries().tolist())
    targets = sorted({s for s in marks if u1 < s < u0} | {u1}, reverse=True)

    cur_u = u0
    cur_a = float(ang(np.array([u0]))[0])
    lift = theta + float(_wrap(cur_a - theta))
    us, lifts = [u0], [lift]
    steps = 0
    for target in targets:
        # restart from a probe step so a sudden jump in rate cannot alias
        h = min(PROBE_STEP * max(1.0, abs(cur_u)), cur_u - target)
        while cur_u > target:
            floor = max(tol * PROBE_STEP, 64.0 * EPS) * max(1.0, abs(cur_u))
            if h < min(floor, cur_u - target):
                raise TrackingError(
                    f"argument increment stays >= pi/2 at t = exp({cur_u!r}) with step {h:.3e} in log t"
                )
            ends = np.maximum(cur_u - h * np.arange(1, batch + 1), target)
            cut = int(np.searchsorted(-ends, -target)) + 1
            ends = ends[:cut]
            starts = np.concatenate(([cur_u], ends[:-1]))
            mids = 0.5 * (starts + ends)
            a_end = ang(ends)
            a_mid = ang(mids)
            a_start = np.concatenate(([cur_a], a_end[:-1]))
            d1 = _wrap(a_mid - a_start)
            d2 = _wrap(a_end - a_mid)
            full = _wrap(a_end - a_start)
            good = (np.abs(full) < MAX_INCREMENT) & (np.abs(d1) < MAX_INCREMENT) & (np.abs(d2) < MAX_INCREMENT)
            good &= np.abs(d1 + d2 - full) < 1e-6
            n_ok = len(good) if good.all() else int(np.argmin(good))
            if n_ok == 0:
                h *= 0.5
                continue
            inc = np.cumsum(d1[:n_ok] + d2[:n_ok])
            us.extend(ends[:n_ok].tolist())
            lifts.extend((lift + inc).tolist())
            lift = lift + float(inc[-1])
            rate = float(np.max(np.abs(full[:n_ok]) / (starts[:n_ok] - ends[:n_ok])))
            cur_u = float(ends[n_ok - 1])
            cur_a = float(a_end[n_ok - 1])
            steps += n_ok
            if steps > max_steps:
                raise TrackingError(f"more than {max_steps} steps; winding too large to track")
            if n_ok == len(good):
                h = 2.0 * h if rate == 0.0 else min(2.0 * h, SAFE_INCREMENT / rate)
    return RotationProfile(theta, np.array(us), np.array(lifts), p, alpha_below)


def winding_from_arg_difference(delta: float) -> int:
    """floor(|delta| / 2 pi) - 1, clamped at 0 (disjoint crossings of a ray)."""
    return max(0, math.floor(abs(delta) / TWO_PI) - 1)


def winding_count(fmap, z0, method: str = "track", *, log_abs_z0: float | None = None) -> int:
    """Number of disjoint image segments of [z0, z0/|z0|] crossing a fixed ray."""
    z0 = complex(z0)
    theta = math.atan2(z0.imag, z0.real)
    L = math.log(abs(z0)) if log_abs_z0 is None else float(log_abs_z0)
    if not L < 0.0:
        raise ValueError("need 0 < |z0| < 1")
    if method == "track":
        prof = continuous_arg(fmap, theta, log_t_start=0.0, log_t_end=L)
        delta = prof.final - float(prof.unwrapped_arg[0])
    elif method == "profile":
        if not isinstance(fmap, PiecewiseRadialMap):
            raise TypeError("profile method needs a PiecewiseRadialMap")
        delta = float(fmap.log_profile(L)[1] - fmap.log_profile(0.0)[1])
    else:
        raise ValueError(f"unknown method {method!r}")
    return winding_from_arg_difference(delta)


def log_theorem1_ratio(fmap: PiecewiseRadialMap, log_abs_z0: float, p: float, alpha_below: float) -> float:
    """log of |arg f(z0)| / (sqrt(alpha) |z0|^{-1/p} log^{1/2}(1/|z0|)) for z0 on the positive axis."""
    if not log_abs_z0 < 0.0:
        raise ValueError("rotation ratio needs |z0| < 1")
    a = abs(float(fmap.log_profile(log_abs_z0)[1]))
    if a == 0.0:
        return -math.inf
    return math.log(a) - float(bound_curve(log_abs_z0, p, alpha_below))


def theorem1_ratio(fmap, plan: SchedulePlan | None, z0, alpha_below: float, *, p: float | None = None,
                   log_abs_z0: float | None = None) -> float:
    if p is None:
        if plan is None:
            raise ValueError("p is needed when no plan is given")
        p = plan.p
    L = math.log(abs(complex(z0))) if log_abs_z0 is None else float(log_abs_z0)
    return math.exp(log_theorem1_ratio(fmap, L, p, alpha_below))


def theorem1_ratio_sequence(fmap: PiecewiseRadialMap, plan: SchedulePlan, alpha_below: float) -> np.ndarray:
    """Rotation-envelope ratios at z0 = r_n, n = 1..N."""
    return np.exp([log_theorem1_ratio(fmap, L, plan.p, alpha_below) for L in plan.log_r])


class SharpnessRow(NamedTuple):
    n: int
    log_r: float
    lhs: float
    rhs: float
    log_lhs: float
    log_rhs: float
    passed: bool


def sharpness_rhs_log(plan: SchedulePlan) -> np.ndarray:
    """log of r_n^{-1/p} log^{1/2}(1/r_n) h(r_n) (no log factor in rotation-only mode)."""
    L = np.array(plan.log_r)
    out = -L / plan.p + plan.log_h()
    if plan.mode == STRETCH_ROTATION:
        out = out + 0.5 * np.log(-L)
    return out


def sharpness_check(fmap: PiecewiseRadialMap, plan: SchedulePlan, rtol: float = 1e-12) -> list:
    """Compare |arg f(r_n)| with the sharpness lower bound at every n."""
    rows = []
    rhs_log = sharpness_rhs_log(plan)
    for n, (L, lr) in enumerate(zip(plan.log_r, rhs_log), start=1):
        a = abs(float(fmap.log_profile(L)[1]))
        ll = math.log(a) if a > 0 else -math.inf
        rows.append(SharpnessRow(n, L, a, math.exp(lr) if lr < 709 else math.inf, ll, float(lr), bool(ll >= lr + math.log1p(-rtol))))
    return rows
