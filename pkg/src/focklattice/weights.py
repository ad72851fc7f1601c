"""Radial subharmonic weights and their induced geometry.

A weight is phi(z) = C|z|^gamma (the classical case is gamma=2, C=1, i.e.
phi(z)=|z|^2).  Its Laplacian density C*gamma^2*|z|^(gamma-2) defines a
measure mu, and rho(z) is the radius normalised by mu(D(z, rho(z))) = 1.
Everything downstream (separation, cells, transform weights, trace
conditions) is phrased in terms of rho.

The module also hosts the two empirical probes attached to a weight: the
Muckenhoupt disc-ratio probe for rho^(p-2) and the doubling-exponent fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import NumericalError, SchemaError

__all__ = [
    "WeightProfile",
    "ApReport",
    "DoublingExponent",
    "classical_weight",
    "power_weight",
    "c_gamma_for_rho_origin",
    "phi",
    "laplacian_phi",
    "mu_disc",
    "rho",
    "rho_many",
    "ap_probe",
    "default_ap_radii",
    "estimate_t",
    "default_t_pairs",
    "effective_t",
    "choose_N",
]

# Quadrature tooling: one fixed Gauss-Legendre rule reused everywhere,
# with geometric panels toward integrable endpoint singularities.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_PSI_PANELS = 12
_QUAD_RTOL = 1e-9


@dataclass(frozen=True)
class WeightProfile:
    """Immutable description of the weight phi.

    kind "classical" behaves identically to kind "power" with gamma=2,
    c_gamma=1; rho_origin caches rho(0).
    """

    kind: str
    gamma: float = 2.0
    c_gamma: float = 1.0
    rho_origin: float = field(default=0.0)

    def __post_init__(self):
        if self.kind not in ("classical", "power"):
            raise SchemaError(f"unknown weight kind {self.kind!r}")
        if self.kind == "classical":
            object.__setattr__(self, "gamma", 2.0)
            object.__setattr__(self, "c_gamma", 1.0)
        if not (self.gamma > 0 and self.c_gamma > 0):
            raise SchemaError("gamma and c_gamma must be positive")
        r0 = (2.0 * math.pi * self.c_gamma * self.gamma) ** (-1.0 / self.gamma)
        object.__setattr__(self, "rho_origin", r0)

    @property
    def is_classical_like(self) -> bool:
        return self.kind == "classical" or (self.gamma == 2.0 and self.c_gamma == 1.0)

    def to_json(self) -> dict:
        if self.kind == "classical":
            return {"kind": "classical"}
        return {"kind": "power", "gamma": self.gamma, "c_gamma": self.c_gamma}

    @staticmethod
    def from_json(obj: dict) -> "WeightProfile":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise SchemaError("weight must be an object with a 'kind'")
        kind = obj["kind"]
        if kind == "classical":
            return classical_weight()
        if kind == "power":
            gamma = float(obj["gamma"])
            if "c_gamma" in obj:
                return power_weight(gamma, c_gamma=float(obj["c_gamma"]))
            if "rho_origin" in obj:
                return power_weight(gamma, rho_origin=float(obj["rho_origin"]))
            raise SchemaError("power weight needs c_gamma or rho_origin")
        raise SchemaError(f"unknown weight kind {kind!r}")


def classical_weight() -> WeightProfile:
    return WeightProfile(kind="classical")


def power_weight(gamma: float, c_gamma: Optional[float] = None,
                 rho_origin: Optional[float] = None) -> WeightProfile:
    """Power weight phi = C|z|^gamma, with C given directly or solved from
    a target rho(0) via C = 1/(2*pi*gamma*rho0^gamma)."""
    if c_gamma is None:
        if rho_origin is None:
            raise SchemaError("specify c_gamma or rho_origin")
        c_gamma = c_gamma_for_rho_origin(gamma, rho_origin)
    return WeightProfile(kind="power", gamma=float(gamma), c_gamma=float(c_gamma))


def c_gamma_for_rho_origin(gamma: float, rho0: float) -> float:
    """Normalisation making rho(0) equal rho0: mu(D(0,r)) = 2*pi*C*gamma*r^gamma."""
    return 1.0 / (2.0 * math.pi * gamma * rho0 ** gamma)


def phi(w: WeightProfile, z) -> np.ndarray | float:
    """Weight value phi(z) = C|z|^gamma (|z|^2 for classical)."""
    a = np.abs(z)
    if w.is_classical_like:
        return a * a
    return w.c_gamma * a ** w.gamma


def laplacian_phi(w: WeightProfile, z) -> np.ndarray | float:
    """Laplacian density C*gamma^2*|z|^(gamma-2); equals 4 for classical."""
    a = np.abs(z)
    if w.is_classical_like:
        return 4.0 * np.ones_like(a) if isinstance(a, np.ndarray) else 4.0
    if w.gamma < 2.0 and np.any(np.asarray(a) == 0.0):
        raise ValueError("Laplacian is singular at the origin for gamma < 2")
    return w.c_gamma * w.gamma ** 2 * a ** (w.gamma - 2.0)


def _mu_ball_origin(w: WeightProfile, r: float) -> float:
    # mu(D(0,r)) = 2*pi*C*gamma*r^gamma, exact.
    return 2.0 * math.pi * w.c_gamma * w.gamma * float(r) ** w.gamma


def _radial_disc_integral(f: Callable[[np.ndarray], np.ndarray], a: float,
                          r: float, full_part: Callable[[float], float],
                          npanels: int = _PSI_PANELS) -> float:
    """Integral of a radial density f(|w|) over the disc D(c, r), |c| = a.

    Reduction to one dimension: slicing by circles |w| = u, the disc meets
    the circle over an angle 2*alpha with sin(alpha) = r*sin(psi)/u, where
    u^2 = a^2 + r^2 - 2*a*r*cos(psi).  In the psi variable the integrand is
    analytic except at u -> 0, so geometric panels toward psi = 0 make the
    rule uniformly robust.  full_part(umax) supplies the closed-form (or
    separately integrated) full-circle contribution over |w| <= umax.
    """
    if a == 0.0:
        return full_part(r)
    total = full_part(r - a) if r > a else 0.0
    edges = np.concatenate([[0.0], np.geomspace(math.pi * 1e-7, math.pi, npanels)])
    acc = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        psi = mid + half * _GL_X
        u = np.sqrt(np.maximum(a * a + r * r - 2.0 * a * r * np.cos(psi), 0.0))
        u = np.maximum(u, 1e-300)
        alpha = np.arcsin(np.clip(r * np.sin(psi) / u, -1.0, 1.0))
        alpha = np.where(a - r * np.cos(psi) < 0.0, math.pi - alpha, alpha)
        acc += half * np.sum(_GL_W * f(u) * 2.0 * alpha * a * r * np.sin(psi))
    return total + acc


def mu_disc(w: WeightProfile, center, radius: float) -> float:
    """mu(D(center, radius)) with mu = Laplacian of phi.

    Classical kind uses the exact value 4*pi*r^2.  Power kinds use the
    one-dimensional arc quadrature; the full-circle part (which carries the
    origin singularity for gamma < 2) is closed form.  Raises
    NumericalError if a refinement disagrees beyond the tolerance.
    """
    radius = float(radius)
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if w.is_classical_like:
        return 4.0 * math.pi * radius * radius
    a = abs(complex(center))
    lap = lambda u: w.c_gamma * w.gamma ** 2 * np.power(u, w.gamma - 2.0)
    full = lambda umax: _mu_ball_origin(w, umax)
    val = _radial_disc_integral(lap, a, radius, full)
    ref = _radial_disc_integral(lap, a, radius, full, npanels=2 * _PSI_PANELS)
    if abs(val - ref) > 1e-6 * max(abs(ref), 1e-300):
        raise NumericalError(
            f"mu_disc quadrature did not converge: achieved "
            f"{abs(val - ref) / max(abs(ref), 1e-300):.2e} relative")
    return ref


def rho(w: WeightProfile, z) -> float:
    """The radius with mu(D(z, rho)) = 1, by bracketed root-finding.

    mu(D(z, .)) is strictly increasing, so the root is unique.  Classical:
    4*pi*rho^2 = 1 gives rho = (4*pi)^(-1/2) everywhere.
    """
    if w.is_classical_like:
        return (4.0 * math.pi) ** -0.5
    a = abs(complex(z))
    if a == 0.0:
        return w.rho_origin
    guess = (math.pi * w.c_gamma * w.gamma ** 2 * a ** (w.gamma - 2.0)) ** -0.5
    fn = lambda r: mu_disc(w, a, r) - 1.0
    lo, hi = guess / 8.0, guess * 8.0
    for _ in range(80):
        if fn(lo) < 0.0:
            break
        lo /= 4.0
    else:
        raise NumericalError("rho bracket failure (lower)")
    for _ in range(80):
        if fn(hi) > 0.0:
            break
        hi *= 4.0
    else:
        raise NumericalError("rho bracket failure (upper)")
    return brentq(fn, lo, hi, xtol=1e-14, rtol=8.9e-16)


@lru_cache(maxsize=16)
def _radial_rho_spline(w: WeightProfile, umax: float):
    # Cached radial profile u -> rho(u); rho is 1-Lipschitz and smooth off 0,
    # so a few hundred exact root-finds interpolate to ~1e-10.
    n = 420
    us = np.concatenate([[0.0], np.geomspace(max(umax * 1e-6, 1e-9), umax, n)])
    vals = np.array([rho(w, u) for u in us])
    return CubicSpline(us, vals)


def rho_many(w: WeightProfile, z) -> np.ndarray:
    """Vectorised rho over an array of points (radial cache for power kinds)."""
    a = np.abs(np.asarray(z, dtype=complex))
    if w.is_classical_like:
        return np.full(a.shape, (4.0 * math.pi) ** -0.5)
    umax = float(np.max(a)) if a.size else 1.0
    spl = _radial_rho_spline(w, _bucket(umax))
    return np.asarray(spl(a))


def _bucket(umax: float) -> float:
    # Quantise cache keys so nearby requests share one spline.
    return float(2.0 ** math.ceil(math.log2(max(umax, 1.0)) + 1e-12))


# ---------------------------------------------------------------------------
# Muckenhoupt probe for rho^(p-2)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ApReport:
    """Disc-ratio probe of the Muckenhoupt condition for rho^(p-2).

    ratios[i] is the supremum over the sampled centers, at disc radius
    disc_radii[i], of

        (1/|D|) * (int_D rho^p dnu)^(1/p) * (int_D rho^q dnu)^(1/q),

    with dnu = dm/rho^2 and q the conjugate exponent.  Failure of the
    condition manifests as power-law growth of the ratio in the radius, so
    the verdict is the fitted log-log slope over the largest decade.
    """

    p: float
    disc_radii: tuple
    ratios: tuple
    fitted_exponent: float
    is_ap: bool
    exponent_tolerance: float = 0.05

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)


def default_ap_radii(w: WeightProfile, decades: float = 3.2, n: int = 12) -> list:
    """Radii spanning >= `decades` decades, starting just above rho(0)."""
    r0 = 2.0 * w.rho_origin
    return list(np.geomspace(r0, r0 * 10.0 ** decades, n))


def _disc_ratio(w: WeightProfile, rho_f, center: complex, R: float, p: float) -> float:
    q = p / (p - 1.0)
    small = rho_f(np.array([abs(center)]))[0]
    if R <= small / 4.0:
        # Small-disc shortcut: rho is 1-Lipschitz, hence nearly constant on
        # D, and the ratio collapses to 1.
        return 1.0

    def one(expo: float) -> float:
        f = lambda u: np.asarray(rho_f(u)) ** expo

        def full(umax: float) -> float:
            if umax <= 0.0:
                return 0.0
            pts = np.concatenate([[0.0], np.geomspace(umax * 1e-8, umax, 30)])
            tot = 0.0
            for lo, hi in zip(pts[:-1], pts[1:]):
                mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
                u = mid + half * _GL_X
                tot += half * np.sum(_GL_W * f(u) * u)
            return 2.0 * math.pi * tot

        return _radial_disc_integral(f, abs(center), R, full)

    ip = one(p - 2.0)
    iq = one(q - 2.0)
    return ip ** (1.0 / p) * iq ** (1.0 / q) / (math.pi * R * R)


def ap_probe(w: WeightProfile, p: float, radii: Sequence[float],
             centers: Optional[Sequence[complex]] = None) -> ApReport:
    """Probe whether rho^(p-2) satisfies the A_p disc condition.

    For each radius the ratio is maximised over the origin-centred disc and
    (by default) eight centers on the ring |c| = radius.  A fitted slope
    <= 0.05 over the largest decade of radii declares the condition
    satisfied; the p = 2 case gives ratio exactly 1 for every disc.
    """
    if not (1.0 < p < math.inf):
        raise ValueError("p must lie in (1, inf)")
    radii = [float(r) for r in radii]
    if any(r2 <= r1 for r1, r2 in zip(radii, radii[1:])):
        raise ValueError("radii must be ascending")
    if w.is_classical_like:
        rho_f = lambda u: np.full_like(np.asarray(u, dtype=float), (4 * math.pi) ** -0.5)
    else:
        spl = _radial_rho_spline(w, _bucket(2.2 * max(radii)))
        rho_f = lambda u: np.asarray(spl(np.asarray(u, dtype=float)))

    sup_ratios = []
    for R in radii:
        if centers is None:
            ring = [R * np.exp(2j * math.pi * k / 8.0) for k in range(8)]
            discs = [0.0 + 0.0j] + ring
        else:
            discs = list(centers)
        vals = [_disc_ratio(w, rho_f, c, R, p) for c in discs]
        if any(not np.isfinite(v) or v <= 0.0 for v in vals):
            raise NumericalError(f"ap_probe quadrature failed at radius {R}")
        sup_ratios.append(max(vals))

    lr = np.log(np.asarray(sup_ratios))
    lR = np.log(np.asarray(radii))
    top = np.asarray(radii) >= max(radii) / 10.0
    if top.sum() >= 2:
        slope = float(np.polyfit(lR[top], lr[top], 1)[0])
    else:
        slope = float(np.polyfit(lR, lr, 1)[0])
    return ApReport(p=p, disc_radii=tuple(radii), ratios=tuple(sup_ratios),
                    fitted_exponent=slope, is_ap=bool(slope <= 0.05))


# ---------------------------------------------------------------------------
# Doubling exponent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DoublingExponent:
    """Empirical exponent t in rho(z)/rho(zeta) <= C (|z-zeta|/rho(zeta))^(1-t).

    t_fit comes from an envelope regression over sampled pairs; t_bound is
    the analytic bound gamma/2 available for power weights.  The effective
    value used for choosing the transform order is min(t_fit, t_bound).
    """

    t_fit: float
    t_bound: Optional[float]
    sample_count: int
    fit_slack: float = 0.02


def effective_t(t: DoublingExponent) -> float:
    if t.t_bound is None:
        return t.t_fit
    return min(t.t_fit, t.t_bound)


def default_t_pairs(w: WeightProfile, count: int = 20000, seed: int = 0,
                    span: float = 1e4):
    """Sample pairs (z, zeta) with zeta outside D(z): a log-uniform sweep of
    |z| against small |zeta| (which traces the envelope for radial weights)
    plus random pairs for coverage."""
    rng = np.random.default_rng(seed)
    r0 = w.rho_origin
    n1 = count // 2
    z1 = r0 * 10.0 ** rng.uniform(0.3, math.log10(span), n1)
    ze1 = r0 * rng.uniform(0.0, 0.5, n1)
    n2 = count - n1
    z2 = r0 * 10.0 ** rng.uniform(0.0, math.log10(span), n2)
    ze2 = r0 * 10.0 ** rng.uniform(0.0, math.log10(span) * rng.uniform(0.2, 1.0, n2), n2)
    z = np.concatenate([z1, z2]) * np.exp(2j * math.pi * rng.uniform(0, 1, count))
    zeta = np.concatenate([ze1, ze2]) * np.exp(2j * math.pi * rng.uniform(0, 1, count))
    return z, zeta


def estimate_t(w: WeightProfile, pairs=None, *, nbins: int = 28,
               fit_slack: float = 0.02, window_decades: float = 2.0) -> DoublingExponent:
    """Fit the doubling exponent from the ratio envelope.

    Pairs violating |z - zeta| > rho(z) are dropped.  log(rho(z)/rho(zeta))
    is binned against log(|z-zeta|/rho(zeta)); the per-bin maxima over the
    top `window_decades` decades (the asymptotic regime -- small-separation
    pairs still feel the rho(0) plateau of power weights) are fit by least
    squares, and t_fit = 1 - slope, clamped into (0, 1 - fit_slack).
    Requires at least two decades of spread in |z-zeta|/rho(zeta).
    """
    if pairs is None:
        z, zeta = default_t_pairs(w)
    else:
        z, zeta = pairs
        z = np.asarray(z, dtype=complex)
        zeta = np.asarray(zeta, dtype=complex)
    rz = rho_many(w, z)
    rzeta = rho_many(w, zeta)
    sep = np.abs(z - zeta)
    keep = sep > rz
    if keep.sum() < 16:
        raise ValueError("insufficient admissible pairs (need zeta outside D(z))")
    x = np.log10(sep[keep] / rzeta[keep])
    y = np.log10(rz[keep] / rzeta[keep])
    if x.max() - x.min() < 2.0:
        raise ValueError("insufficient sample spread: need >= 2 decades of "
                         "|z-zeta|/rho(zeta)")
    lo = x.max() - max(window_decades, 2.0)
    inwin = x >= lo
    edges = np.linspace(lo, x.max(), nbins + 1)
    idx = np.clip(np.digitize(x[inwin], edges) - 1, 0, nbins - 1)
    bx, by = [], []
    for b in range(nbins):
        m = idx == b
        if m.any():
            bx.append(0.5 * (edges[b] + edges[b + 1]))
            by.append(y[inwin][m].max())
    slope = float(np.polyfit(np.asarray(bx), np.asarray(by), 1)[0])
    t_fit = min(max(1.0 - slope, fit_slack), 1.0 - fit_slack)
    t_bound = None if w.kind == "classical" else w.gamma / 2.0
    return DoublingExponent(t_fit=t_fit, t_bound=t_bound,
                            sample_count=int(keep.sum()), fit_slack=fit_slack)


def choose_N(t: DoublingExponent) -> int:
    """Smallest integer strictly greater than 1/t (t = effective exponent)."""
    te = effective_t(t)
    if not (0.0 < te < 1.0):
        raise ValueError("effective t must lie in (0, 1)")
    return math.floor(1.0 / te) + 1
