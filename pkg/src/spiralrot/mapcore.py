"""Radial spiral/stretch blocks and their exact composition.

A radial map here has the form ``f(t e^{i theta}) = s(t) e^{i (theta + a(t))}``
with a modulus profile ``s`` and an argument offset ``a``.  Every map built
from the annular blocks is of this kind, so a composed map is stored as a
table of regions over ``u = log t``.  On each region

    log s(t) = log_lambda + log_R + q * (u - log_R)
    a(t)     = mu + alpha * (u - log_R)

which covers the action annuli (q >= 1, alpha arbitrary) and the gaps
(q = 1, alpha = 0, a similarity).  Everything is kept in log-polar form
because the radii of the stretch construction shrink super-exponentially.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "BoundaryError",
    "Annulus",
    "SpiralStretchBlock",
    "RegionAction",
    "PiecewiseRadialMap",
    "block_eval",
    "block_log_distortion",
    "identity_map",
]


class BoundaryError(ValueError):
    """Derivative requested on a circle where the map is only one-sided smooth."""


def _check_finite(z):
    z = np.asarray(z)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite input point")
    return z


@dataclass(frozen=True)
class Annulus:
    """Origin-centred annulus r < |z| < R, stored by log radii."""

    log_inner: float
    log_outer: float

    def __post_init__(self):
        if not (math.isfinite(self.log_inner) and math.isfinite(self.log_outer)):
            raise ValueError("annulus radii must be finite and positive")
        if not self.log_inner < self.log_outer:
            raise ValueError("annulus needs r < R")

    @classmethod
    def from_radii(cls, r: float, R: float) -> "Annulus":
        if not (r > 0 and R > 0):
            raise ValueError("annulus radii must be positive")
        return cls(math.log(r), math.log(R))

    @property
    def inner_radius(self) -> float:
        return math.exp(self.log_inner)

    @property
    def outer_radius(self) -> float:
        return math.exp(self.log_outer)


@dataclass(frozen=True)
class SpiralStretchBlock:
    """One block: identity outside, spiral stretch on the annulus, similarity inside."""

    annulus: Annulus
    alpha: float
    q: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.q)):
            raise ValueError("block parameters must be finite")
        if self.q < 1:
            raise ValueError("stretch exponent q must be >= 1")

    def logpolar(self, u, theta):
        """Apply the block to points given as (log|z|, arg z)."""
        u = np.asarray(u, dtype=float)
        theta = np.asarray(theta, dtype=float)
        lr, lR = self.annulus.log_inner, self.annulus.log_outer
        d = np.clip(u, lr, lR) - lR
        d = np.where(u > lR, 0.0, d)
        return u + (self.q - 1.0) * d, theta + self.alpha * d

    def __call__(self, z):
        return block_eval(self, z)


def block_eval(block: SpiralStretchBlock, z):
    """Evaluate a single block at complex point(s) ``z``; the origin is fixed."""
    z = _check_finite(np.asarray(z, dtype=complex))
    t = np.abs(z)
    lr, lR = block.annulus.log_inner, block.annulus.log_outer
    with np.errstate(divide="ignore"):
        u = np.log(t)
    d = np.where(u > lR, 0.0, np.maximum(u, lr) - lR)
    out = z * np.exp((block.q - 1.0) * d) * np.exp(1j * block.alpha * d)
    out = np.where(t > math.exp(lR), z, out)
    out = np.where(t == 0, 0, out)
    return out[()] if out.ndim == 0 else out


def block_log_distortion(q, alpha):
    """log K for the local action z -> z|z/R|^(q-1) e^(i alpha log|z/R|)."""
    q = np.asarray(q, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    total = np.hypot(q + 1.0, alpha) + np.hypot(q - 1.0, alpha)
    return 2.0 * np.log(total) - math.log(4.0) - np.log(q)


@dataclass(frozen=True)
class RegionAction:
    """Local action of a composed map on ``log_t_lo <= log t <= log_t_hi``.

    ``log_lambda`` and ``mu`` are the similarity scale and rotation
    accumulated from the blocks further out; ``log_R_ref`` is the outer log
    radius of the local annulus (the region's upper edge on gaps).
    """

    log_t_lo: float
    log_t_hi: float
    log_lambda: float
    mu: float
    q: float = 1.0
    alpha: float = 0.0
    log_R_ref: float = 0.0

    @property
    def is_gap(self) -> bool:
        return self.q == 1.0 and self.alpha == 0.0

    @property
    def t_lo(self) -> float:
        return math.exp(self.log_t_lo)

    @property
    def t_hi(self) -> float:
        return math.exp(self.log_t_hi)

    @property
    def lam(self) -> float:
        return math.exp(self.log_lambda)

    def to_dict(self) -> dict:
        return {
            "log_t_lo": _json_float(self.log_t_lo),
            "log_t_hi": _json_float(self.log_t_hi),
            "log_lambda": self.log_lambda,
            "mu": self.mu,
            "q": self.q,
            "alpha": self.alpha,
            "log_R_ref": self.log_R_ref,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegionAction":
        return cls(
            log_t_lo=_from_json_float(d["log_t_lo"]),
            log_t_hi=_from_json_float(d["log_t_hi"]),
            log_lambda=float(d["log_lambda"]),
            mu=float(d["mu"]),
            q=float(d["q"]),
            alpha=float(d["alpha"]),
            log_R_ref=float(d["log_R_ref"]),
        )


def _json_float(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _from_json_float(x) -> float:
    return float(x)


@dataclass(frozen=True)
class PiecewiseRadialMap:
    """Composed radial map as an ordered region table (ascending in t).

    ``regions[0]`` reaches down to t = 0 and ``regions[-1]`` is the identity
    on the unbounded component.  Instances are immutable; all evaluation
    methods are pure and vectorised over numpy arrays.
    """

    regions: tuple
    n_blocks: int = 0
    _tab: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        regions = tuple(self.regions)
        object.__setattr__(self, "regions", regions)
        if not regions:
            raise ValueError("a map needs at least one region")
        if regions[0].log_t_lo != -math.inf or regions[-1].log_t_hi != math.inf:
            raise ValueError("regions must cover (0, inf)")
        for lo, hi in zip(regions, regions[1:]):
            if lo.log_t_hi != hi.log_t_lo:
                raise ValueError("regions must be contiguous")
        last = regions[-1]
        if not (last.log_lambda == 0.0 and last.mu == 0.0 and last.is_gap):
            raise ValueError("outermost region must be the identity")
        tab = {
            "lo": np.array([r.log_t_lo for r in regions]),
            "hi": np.array([r.log_t_hi for r in regions]),
            "lam": np.array([r.log_lambda for r in regions]),
            "mu": np.array([r.mu for r in regions]),
            "q": np.array([r.q for r in regions]),
            "alpha": np.array([r.alpha for r in regions]),
            "lR": np.array([r.log_R_ref for r in regions]),
            "gap": np.array([r.is_gap for r in regions]),
        }
        # image of each lower edge; s is increasing so these are sorted
        lo_fin = np.where(np.isfinite(tab["lo"]), tab["lo"], 0.0)
        img_lo = tab["lam"] + tab["lR"] + tab["q"] * (lo_fin - tab["lR"])
        img_lo = np.where(tab["gap"], tab["lam"] + lo_fin, img_lo)
        tab["img_lo"] = np.where(np.isfinite(tab["lo"]), img_lo, -np.inf)
        object.__setattr__(self, "_tab", tab)

    # -- region lookup -------------------------------------------------

    def region_index(self, u):
        """Index of the region containing log-radius ``u``.

        Circles shared by an annulus and a gap go to the annulus.
        """
        u = np.asarray(u, dtype=float)
        tab = self._tab
        idx = np.searchsorted(tab["lo"], u, side="right") - 1
        idx = np.clip(idx, 0, len(self.regions) - 1)
        below = np.clip(idx - 1, 0, None)
        on_edge = (idx > 0) & (u == tab["hi"][below]) & ~tab["gap"][below]
        return np.where(on_edge, below, idx)

    def boundaries(self) -> np.ndarray:
        """Finite log radii where the local action changes."""
        return self._tab["lo"][1:].copy()

    # -- log-polar evaluation -----------------------------------------

    def logpolar(self, u, theta=0.0):
        """Map (log|z|, arg z) to (log|f(z)|, unwrapped arg f(z))."""
        u = np.asarray(u, dtype=float)
        theta = np.asarray(theta, dtype=float)
        log_s, a = self.log_profile(u)
        return log_s, theta + a

    def log_profile(self, u):
        """Return (log s(t), a(t)) at ``u = log t``."""
        u = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u)):
            raise ValueError("log radius must be finite (t > 0)")
        tab = self._tab
        i = self.region_index(u)
        lam, lR, q, al, gap = tab["lam"][i], tab["lR"][i], tab["q"][i], tab["alpha"][i], tab["gap"][i]
        d = u - lR
        log_s = np.where(gap, lam + u, lam + lR + q * d)
        a = np.where(gap, tab["mu"][i], tab["mu"][i] + al * d)
        if log_s.ndim == 0:
            return float(log_s), float(a)
        return log_s, a

    def radial_profile(self, t):
        """Modulus profile s(t) for t > 0."""
        t = np.asarray(t, dtype=float)
        if np.any(~(t > 0)):
            raise ValueError("radial_profile needs t > 0")
        u = np.log(t)
        log_s, _ = self.log_profile(u)
        # exact on the identity region
        return np.where(self.region_index(u) == len(self.regions) - 1, t, np.exp(log_s))

    def arg_profile(self, t):
        """Argument offset a(t), unwrapped."""
        t = np.asarray(t, dtype=float)
        if np.any(~(t > 0)):
            raise ValueError("arg_profile needs t > 0")
        return self.log_profile(np.log(t))[1]

    def log_radial_derivative(self, u):
        """log s'(t) at u = log t (annulus formula on shared circles)."""
        u = np.asarray(u, dtype=float)
        tab = self._tab
        i = self.region_index(u)
        log_s, _ = self.log_profile(u)
        return log_s - u + np.log(tab["q"][i])

    # -- complex evaluation -------------------------------------------

    def __call__(self, z):
        return self.eval(z)

    def eval(self, z):
        """Evaluate at complex point(s); f(0) = 0."""
        z = _check_finite(np.asarray(z, dtype=complex))
        t = np.abs(z)
        nz = t > 0
        with np.errstate(divide="ignore"):
            u = np.where(nz, np.log(np.where(nz, t, 1.0)), 0.0)
        tab = self._tab
        i = self.region_index(u)
        lam, lR, q, gap = tab["lam"][i], tab["lR"][i], tab["q"][i], tab["gap"][i]
        _, a = self.log_profile(u)
        scale = np.where(gap, np.exp(lam), np.exp(lam + (q - 1.0) * (u - lR)))
        rot = np.exp(1j * a)
        out = np.where(nz, z * scale * rot, 0)
        out = np.where(nz & (i == len(self.regions) - 1), z, out)
        return out[()] if out.ndim == 0 else out

    def inverse_logpolar(self, U, Theta=0.0):
        """Exact inverse in log-polar form."""
        U = np.asarray(U, dtype=float)
        Theta = np.asarray(Theta, dtype=float)
        tab = self._tab
        i = np.searchsorted(tab["img_lo"], U, side="right") - 1
        i = np.clip(i, 0, len(self.regions) - 1)
        lam, lR, q, gap = tab["lam"][i], tab["lR"][i], tab["q"][i], tab["gap"][i]
        u = np.where(gap, U - lam, lR + (U - lam - lR) / q)
        _, a = self.log_profile(u)
        return u, Theta - a

    def inverse_eval(self, w):
        """Exact inverse at complex point(s); inverse(0) = 0."""
        w = _check_finite(np.asarray(w, dtype=complex))
        T = np.abs(w)
        nz = T > 0
        with np.errstate(divide="ignore"):
            U = np.where(nz, np.log(np.where(nz, T, 1.0)), 0.0)
        u, _ = self.inverse_logpolar(U)
        _, a = self.log_profile(u)
        out = np.exp(u) * (w / np.where(nz, T, 1.0)) * np.exp(-1j * a)
        out = np.where(nz, out, 0)
        top = self._tab["img_lo"][-1]
        out = np.where(nz & (U > top), w, out)
        return out[()] if out.ndim == 0 else out

    # -- derivatives ---------------------------------------------------

    def _interior_index(self, u):
        u = np.asarray(u, dtype=float)
        b = self.boundaries()
        if b.size:
            gap = np.min(np.abs(u[..., None] - b), axis=-1)
            tol = 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(u))
            if np.any(gap <= tol):
                bad = np.atleast_1d(u)[np.atleast_1d(gap <= tol)][0]
                raise BoundaryError(f"derivative undefined on the circle |z| = exp({bad!r})")
        return self.region_index(u)

    def wirtinger(self, z):
        """Wirtinger derivatives (d f/dz, d f/dzbar) of the local action."""
        z = _check_finite(np.asarray(z, dtype=complex))
        t = np.abs(z)
        if np.any(t == 0):
            raise BoundaryError("derivative requested at the origin")
        u = np.log(t)
        i = self._interior_index(u)
        tab = self._tab
        q, al = tab["q"][i], tab["alpha"][i]
        log_m = np.where(tab["gap"][i], tab["lam"][i], tab["lam"][i] + (q - 1.0) * (u - tab["lR"][i]))
        _, a = self.log_profile(u)
        base = np.exp(log_m) * np.exp(1j * a)
        d = base * (q + 1.0 + 1j * al) / 2.0
        dbar = base * (q - 1.0 + 1j * al) / 2.0 * (z / np.conj(z))
        if d.ndim == 0:
            return d[()], dbar[()]
        return d, dbar

    def log_jacobian(self, u):
        """log J at u = log|z| (J = q (s/t)^2 on the local action)."""
        u = np.asarray(u, dtype=float)
        i = self._interior_index(u)
        tab = self._tab
        q = tab["q"][i]
        log_m = np.where(tab["gap"][i], tab["lam"][i], tab["lam"][i] + (q - 1.0) * (u - tab["lR"][i]))
        return 2.0 * log_m + np.log(q)

    def jacobian(self, z):
        z = _check_finite(np.asarray(z, dtype=complex))
        t = np.abs(z)
        if np.any(t == 0):
            raise BoundaryError("derivative requested at the origin")
        return np.exp(self.log_jacobian(np.log(t)))

    def log_distortion_at(self, u):
        """log K at log-radius u, without boundary rejection (for sampling)."""
        i = self.region_index(u)
        tab = self._tab
        return np.where(tab["gap"][i], 0.0, block_log_distortion(tab["q"][i], tab["alpha"][i]))

    def distortion(self, z):
        """Distortion K = (|d|+|dbar|)^2 / J; equals 1 off the action annuli."""
        z = _check_finite(np.asarray(z, dtype=complex))
        t = np.abs(z)
        if np.any(t == 0):
            raise BoundaryError("derivative requested at the origin")
        u = np.log(t)
        self._interior_index(u)
        return np.exp(self.log_distortion_at(u))

    # -- serialisation -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": "PiecewiseRadialMap",
            "n_blocks": self.n_blocks,
            "regions": [r.to_dict() for r in self.regions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseRadialMap":
        return cls(tuple(RegionAction.from_dict(r) for r in d["regions"]), int(d["n_blocks"]))

    def with_alpha_zero(self) -> "PiecewiseRadialMap":
        """Same stretch profile with every rotation removed."""
        regions = tuple(
            RegionAction(r.log_t_lo, r.log_t_hi, r.log_lambda, 0.0, r.q, 0.0, r.log_R_ref)
            for r in self.regions
        )
        return PiecewiseRadialMap(regions, self.n_blocks)


def identity_map() -> PiecewiseRadialMap:
    return PiecewiseRadialMap((RegionAction(-math.inf, math.inf, 0.0, 0.0, 1.0, 0.0, 0.0),), 0)


def compose_blocks(log_r: Sequence[float], q: Sequence[float], alpha: Sequence[float]) -> PiecewiseRadialMap:
    """Region table for blocks on A_n = {r_n <= |z| <= e r_n}, outermost first.

    Successive annuli must be nested with gaps (R_{n+1} < r_n).  Each block
    acts on the image annulus of the previous composition; because the
    image annulus keeps the ratio 1/e, the telescoped scale and rotation are
    log_lambda_n = log_lambda_{n-1} - (q_n - 1) and mu_n = mu_{n-1} - alpha_n.
    """
    n = len(log_r)
    if not (len(q) == len(alpha) == n):
        raise ValueError("log_r, q and alpha must have equal length")
    regions = []
    log_lam = 0.0
    alphas_so_far: list[float] = []
    mu = 0.0
    upper = math.inf
    for k in range(n):
        lr = float(log_r[k])
        lR = lr + 1.0
        if not lR < upper:
            raise ValueError(f"annulus {k + 1} overlaps the one outside it")
        # gap (or identity) region between the previous annulus and this one
        regions.append(RegionAction(lR, upper, log_lam, mu, 1.0, 0.0, upper if math.isfinite(upper) else lR))
        regions.append(RegionAction(lr, lR, log_lam, mu, float(q[k]), float(alpha[k]), lR))
        log_lam = log_lam - (float(q[k]) - 1.0)
        alphas_so_far.append(float(alpha[k]))
        mu = -math.fsum(alphas_so_far)
        upper = lr
    ref = upper if math.isfinite(upper) else 0.0
    regions.append(RegionAction(-math.inf, upper, log_lam, mu, 1.0, 0.0, ref))
    regions.reverse()
    return PiecewiseRadialMap(tuple(regions), n)
