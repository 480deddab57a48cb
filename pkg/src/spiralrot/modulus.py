"""Modulus estimates for the family of paths joining [z0, 1] to (-inf, 0].

The upper estimate uses a chain of balls B_j = B(2^j z0, 2^j z0) that all
touch the origin and are nested, with the admissible density rho0 equal to
2 / r(B_j) on B_j minus B_{j-1}.  The lower estimate comes from the winding
of the image of [z0, 1] around f(0) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from .construction import SchedulePlan, log_distortion_lp_integral
from .mapcore import PiecewiseRadialMap
from .rotation import winding_count
from .sampling import stratified_integral

LOG_PI = math.log(math.pi)
LOG_2 = math.log(2.0)
# the chain lives inside B(0, 2), so B(0, 4) holds it with room to spare
HOLDER_DISK_RADIUS = 4.0


class DegenerateBoundError(ValueError):
    """log(c_f / r_f) vanishes while the winding is positive."""


@dataclass(frozen=True)
class PathFamilySpec:
    """Paths joining E = [z0, 1] to F = (-inf, 0] in the plane."""

    z0: float

    def __post_init__(self):
        if not 0.0 < self.z0 < 1.0:
            raise ValueError(f"z0 must lie in (0, 1), got {self.z0!r}")

    @property
    def E(self) -> tuple:
        return (self.z0, 1.0)

    @property
    def F(self) -> tuple:
        return (-math.inf, 0.0)


@dataclass(frozen=True)
class BallChain:
    z0: float
    n: int

    @property
    def radii(self) -> np.ndarray:
        """r(B_j) = 2^j z0 for j = 0..n (these are also the centres)."""
        return np.ldexp(self.z0, np.arange(self.n + 1))

    @property
    def balls(self) -> list:
        return [(float(r), float(r)) for r in self.radii]

    def half_ball_covers(self, x) -> np.ndarray:
        """True where the real point x lies in some (1/2) B_j."""
        x = np.asarray(x, dtype=float)[..., None]
        r = self.radii
        return np.any(np.abs(x - r) < 0.5 * r, axis=-1)


def build_ball_chain(z0: float) -> BallChain:
    """Chain with n the smallest integer such that 2^n z0 >= 1."""
    z0 = float(z0)
    if not 0.0 < z0 < 1.0:
        raise ValueError(f"z0 must lie in (0, 1), got {z0!r}")
    n = max(1, math.ceil(-math.log2(z0)))
    # log2 can be off by one ulp near exact powers of two; ldexp is exact
    while n > 1 and math.ldexp(z0, n - 1) >= 1.0:
        n -= 1
    while math.ldexp(z0, n) < 1.0:
        n += 1
    return BallChain(z0, n)


def _ball_index(chain: BallChain, z) -> np.ndarray:
    """Smallest j with z in the open ball B_j, or n + 1 when z is in none.

    z is in B(c, c) iff Re z > 0 and c > |z|^2 / (2 Re z).
    """
    z = np.asarray(z, dtype=complex)
    x = z.real
    with np.errstate(divide="ignore", invalid="ignore"):
        omega = np.where(x > 0.0, (z.real**2 + z.imag**2) / (2.0 * x), np.inf)
    # B_j contains z iff 2^j z0 > omega, i.e. j > log2(omega / z0)
    with np.errstate(divide="ignore"):
        k = np.floor(np.log2(omega / chain.z0)) + 1.0
    k = np.clip(np.nan_to_num(k, posinf=chain.n + 1), 0, chain.n + 1).astype(int)
    # fix rounding of the log2 by checking the membership exactly
    r = np.ldexp(chain.z0, np.minimum(k, chain.n))
    inside = (k <= chain.n) & (r > omega)
    k = np.where(inside, k, np.minimum(k + 1, chain.n + 1))
    r_prev = np.ldexp(chain.z0, np.maximum(k - 1, 0))
    k = np.where((k > 0) & (r_prev > omega), k - 1, k)
    return k


def rho0_eval(chain: BallChain, z):
    """The chain density: 2 / r(B_k) for the smallest ball B_k holding z, else 0."""
    k = _ball_index(chain, z)
    val = 2.0 / np.ldexp(chain.z0, np.minimum(k, chain.n))
    out = np.where(k > chain.n, 0.0, val)
    return out if out.ndim else float(out)


def log_rho0_eval(chain: BallChain, z):
    k = _ball_index(chain, z)
    val = LOG_2 - (math.log(chain.z0) + np.minimum(k, chain.n) * LOG_2)
    out = np.where(k > chain.n, -np.inf, val)
    return out if out.ndim else float(out)


def _segment_crossings(chain: BallChain, a: complex, b: complex) -> list:
    """Parameters s in (0, 1) where a + s (b - a) meets a ball boundary."""
    d = b - a
    dd = abs(d) ** 2
    out = []
    if dd == 0.0:
        return out
    for c in chain.radii:
        # |a + s d - c|^2 = c^2
        w = a - c
        B = 2.0 * (w.real * d.real + w.imag * d.imag)
        C = abs(w) ** 2 - c * c
        disc = B * B - 4.0 * dd * C
        if disc <= 0.0:
            continue
        sq = math.sqrt(disc)
        for s in ((-B - sq) / (2.0 * dd), (-B + sq) / (2.0 * dd)):
            if 0.0 < s < 1.0:
                out.append(s)
    return out


def line_integral(chain: BallChain, vertices: Sequence[complex]) -> float:
    """Exact integral of rho0 along a polygonal path.

    rho0 is constant between consecutive ball-boundary crossings, so each
    edge is split at those crossings and evaluated at the piece midpoints.
    """
    total = 0.0
    pts = [complex(v) for v in vertices]
    for a, b in zip(pts, pts[1:]):
        cuts = np.array(sorted([0.0, 1.0, *_segment_crossings(chain, a, b)]))
        mids = 0.5 * (cuts[1:] + cuts[:-1])
        vals = rho0_eval(chain, a + mids * (b - a))
        total += float(np.sum(np.atleast_1d(vals) * np.diff(cuts))) * abs(b - a)
    return total


def log_rho0_power_integral(chain: BallChain, power: float) -> float:
    """log of the exact integral of rho0^power over the plane.

    B_0 has area pi z0^2 and each ring B_j minus B_{j-1} has area
    (3/4) pi r_j^2.
    """
    lr = math.log(chain.z0) + LOG_2 * np.arange(chain.n + 1)
    lv = power * (LOG_2 - lr)
    la = LOG_PI + 2.0 * lr
    la[1:] += math.log(0.75)
    return float(logsumexp(lv + la))


def log_rho0_power_bound(chain: BallChain, power: float) -> float:
    """log of sum_j |B_j| (2 / r_j)^power, the overlapping-ball bound.

    With power = 2p/(p-1) this is c_p z0^{-2/(p-1)} sum_j 2^{-2j/(p-1)},
    c_p = pi 2^power.
    """
    lr = math.log(chain.z0) + LOG_2 * np.arange(chain.n + 1)
    return float(logsumexp(LOG_PI + 2.0 * lr + power * (LOG_2 - lr)))


def geometric_factor(chain: BallChain, p: float) -> float:
    """sum_{j=0..n} 2^{-2j/(p-1)}."""
    return float(np.sum(np.exp2(-2.0 * np.arange(chain.n + 1) / (p - 1.0))))


class ModulusUpper(NamedTuple):
    log_upper: float
    log_k_norm: float
    log_rho_bound: float
    log_rho_exact: float
    log_direct: float
    log_direct_se: float

    @property
    def upper(self) -> float:
        return math.exp(self.log_upper)

    @property
    def direct(self) -> float:
        return math.exp(self.log_direct)

    def direct_within_split(self, n_se: float = 3.0) -> bool:
        """Direct estimate minus n_se standard errors stays below the split value."""
        if math.isnan(self.log_direct):
            return True
        lo = self.direct - n_se * math.exp(self.log_direct_se)
        return lo <= self.upper


def weighted_modulus_upper(
    plan: SchedulePlan,
    chain: BallChain,
    p: float | None = None,
    *,
    fmap: PiecewiseRadialMap | None = None,
    mc_samples: int = 0,
    seed: int = 0,
) -> ModulusUpper:
    """Holder-split bound ||K||_{L^p(B(0,4))} (int rho0^{2p/(p-1)})^{(p-1)/p}.

    The integral of rho0 uses the overlapping-ball sum.  With ``mc_samples``
    and ``fmap`` the direct value of int K rho0^2 is also estimated by
    stratified Monte-Carlo (otherwise it is NaN).
    """
    p = plan.p if p is None else float(p)
    if not p > 1.0:
        raise ValueError("p must exceed 1")
    power = 2.0 * p / (p - 1.0)
    log_k_norm = log_distortion_lp_integral(plan, HOLDER_DISK_RADIUS) / p
    lb = log_rho0_power_bound(chain, power)
    le = log_rho0_power_integral(chain, power)
    log_upper = log_k_norm + lb * (p - 1.0) / p
    ld, lse = math.nan, math.nan
    if mc_samples:
        if fmap is None:
            raise ValueError("the direct estimate needs the map")
        est = direct_weighted_integral(fmap, chain, mc_samples, seed)
        ld, lse = est.log_integral, est.log_standard_error
    return ModulusUpper(log_upper, log_k_norm, lb, le, ld, lse)


def direct_weighted_integral(fmap: PiecewiseRadialMap, chain: BallChain, sample_count: int, seed: int):
    """Stratified estimate of int K rho0^2 dA over the chain's support."""
    top = math.log(2.0 * chain.radii[-1])
    edges = [-math.inf]
    # strata: map region circles and the chain's own radii
    for b in sorted(set(fmap.boundaries().tolist()) | set((np.log(chain.radii)).tolist())):
        if b < top and b > edges[-1]:
            edges.append(float(b))
    edges.append(top)

    def log_f(u, theta):
        z = np.exp(u) * np.exp(1j * theta)
        return fmap.log_distortion_at(u) + 2.0 * log_rho0_eval(chain, z)

    return stratified_integral(log_f, edges, sample_count, seed, min_per_stratum=200)


def log_modulus_lower_from_winding(nz0: int, log_c_f: float, log_r_f: float) -> float:
    """log of 2 pi n^2 / log(c_f / r_f)."""
    if nz0 < 0:
        raise ValueError("winding count must be non-negative")
    if log_r_f > log_c_f:
        raise ValueError("need r_f <= c_f")
    if nz0 == 0:
        return -math.inf
    gap = log_c_f - log_r_f
    if gap == 0.0:
        raise DegenerateBoundError("c_f = r_f with positive winding")
    return math.log(2.0 * math.pi) + 2.0 * math.log(nz0) - math.log(gap)


def modulus_lower_from_winding(nz0: int, c_f: float, r_f: float) -> float:
    """2 pi n(z0)^2 / log(c_f / r_f); 0 without winding."""
    if not 0.0 < r_f:
        raise ValueError("need r_f > 0")
    return math.exp(log_modulus_lower_from_winding(int(nz0), math.log(c_f), math.log(r_f)))


@dataclass(frozen=True)
class BoundChainReport:
    z0: float
    log_z0: float
    n: int
    log_upper: float
    log_lower: float
    log_lower_holder: float
    log_c_f: float
    log_r_f_exact: float
    log_r_f_holder: float
    log_implied_winding_bound: float
    log_growth_envelope: float

    @property
    def holds(self) -> bool:
        return self.log_lower < self.log_upper

    def to_dict(self) -> dict:
        def lin(x):
            return math.exp(x) if x < 709.0 else math.inf

        return {
            "z0": self.z0,
            "log_z0": self.log_z0,
            "n": self.n,
            "upper": lin(self.log_upper),
            "log_upper": self.log_upper,
            "lower": lin(self.log_lower),
            "log_lower": self.log_lower,
            "lower_holder": lin(self.log_lower_holder),
            "log_lower_holder": self.log_lower_holder,
            "c_f": lin(self.log_c_f),
            "r_f_exact": lin(self.log_r_f_exact),
            "log_r_f_exact": self.log_r_f_exact,
            "r_f_holder": lin(self.log_r_f_holder),
            "log_r_f_holder": self.log_r_f_holder,
            "implied_winding_bound": lin(self.log_implied_winding_bound),
            "log_implied_winding_bound": self.log_implied_winding_bound,
            "growth_envelope": lin(self.log_growth_envelope),
            "holds": self.holds,
        }


def verify_bound_chain(
    fmap: PiecewiseRadialMap,
    plan: SchedulePlan,
    z0: float,
    alpha_below: float,
    holder_constant: float = 1.0,
    *,
    log_z0: float | None = None,
) -> BoundChainReport:
    """Winding lower bound against the Holder-split upper bound at one base point.

    r_f is min |f| on [z0, 1], which is s(z0) because s is increasing; the
    Holder-below reading replaces it by holder_constant * z0^alpha_below.
    c_f is sup |f| on [z0, 1] = s(1).  The implied winding bound is
    sqrt(upper * log(c_f / r_f) / (2 pi)).
    """
    L = math.log(z0) if log_z0 is None else float(log_z0)
    if not L < 0.0:
        raise ValueError("z0 must lie in (0, 1)")
    chain = build_ball_chain(math.exp(L)) if L > math.log(np.finfo(float).tiny) else None
    if chain is None:
        raise ValueError("z0 below the double range; the ball chain needs a representable z0")
    n = winding_count(fmap, math.exp(L), method="profile", log_abs_z0=L)
    log_c = float(fmap.log_profile(0.0)[0])
    log_r = float(fmap.log_profile(L)[0])
    log_r_h = math.log(holder_constant) + alpha_below * L
    up = weighted_modulus_upper(plan, chain)
    low = log_modulus_lower_from_winding(n, log_c, log_r)
    log_gap_h = math.log(log_c - log_r_h) if log_c > log_r_h else math.nan
    low_h = (
        -math.inf if n == 0 else math.log(2.0 * math.pi) + 2.0 * math.log(n) - log_gap_h
    )
    gap = log_c - log_r
    implied = 0.5 * (up.log_upper + math.log(gap) - math.log(2.0 * math.pi)) if gap > 0 else -math.inf
    envelope = 0.5 * math.log(alpha_below) - L / plan.p + 0.5 * math.log(-L)
    return BoundChainReport(
        z0=math.exp(L),
        log_z0=L,
        n=n,
        log_upper=up.log_upper,
        log_lower=low,
        log_lower_holder=low_h,
        log_c_f=log_c,
        log_r_f_exact=log_r,
        log_r_f_holder=log_r_h,
        log_implied_winding_bound=implied,
        log_growth_envelope=envelope,
    )
