"""Regime-by-regime decision procedure for the trace problem.

Given lattice values c, a multiplier, and an exponent p, the classifier
evaluates exactly the condition set prescribed for that regime:

    p = 1        size condition (a) plus absolutely convergent Cauchy (b)
                 and rho-weighted second-order (c) sums;
    p = 2        (a) and the p.v. Cauchy condition (b);
    1 < p < 2    (a), (b), plus (c) when rho^(p-2) fails the A_p probe;
    2 < p < inf  as above while the doubling exponent t exceeds 1/2,
                 otherwise (a) plus the higher-order family (b') up to the
                 smallest integer N > 1/t;
    p = inf      sup-norm variants: size, the modified Cauchy sum anchored
                 at the origin, and orders 2..N.

Finiteness of an infinite sum is undecidable at finite truncation, so each
condition yields a tri-state verdict read off the partial-sum trajectory:
flattening (last-decade growth <= 1%) is bounded, a clean power law
(fitted exponent with R^2 >= 0.9) is diverging, anything else is
undetermined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .lattice import Lattice, shells_for
from .multiplier import Multiplier
from .transforms import (DEFAULT_PV, PvConfig, SequenceData,
                         batch_higher, batch_modified_inf)
from .weights import (ApReport, DoublingExponent, WeightProfile, ap_probe,
                      choose_N, default_ap_radii, effective_t, estimate_t,
                      phi)

__all__ = [
    "TraceData",
    "ConditionReport",
    "BranchInfo",
    "TraceVerdict",
    "trajectory_verdict",
    "condition_a",
    "condition_b",
    "condition_c",
    "condition_bprime",
    "condition_inf_b",
    "condition_inf_c",
    "classify",
]

FLATTEN_TOL = 0.01          # last-decade relative growth for "bounded"
DIVERGE_MIN_EXPONENT = 0.05
DIVERGE_MIN_R2 = 0.9
OUTER_GUARD_FRACTION = 0.5  # aggregate over |lambda'| <= R/2 only


@dataclass(eq=False)
class TraceData:
    """Lattice values with their multiplier and target exponent.

    Values are stored in weighted form c_lambda e^{-phi(lambda)} (raw traces
    of space functions overflow doubles once phi(lambda) > ~700); the
    derived sequence d = c/g' is what every transform consumes.
    """

    lattice: Lattice
    multiplier: Multiplier
    weight: WeightProfile
    p: float
    c_weighted: np.ndarray
    _d: Optional[SequenceData] = None

    def __post_init__(self):
        self.c_weighted = np.asarray(self.c_weighted, dtype=complex)
        if self.c_weighted.shape != (len(self.lattice),):
            raise ValueError("values must cover every lattice index")
        if not (self.p == math.inf or self.p >= 1.0):
            raise ValueError("p must lie in [1, inf]")

    @property
    def d(self) -> SequenceData:
        if self._d is None:
            # g' is only needed where c is nonzero; underflowed-to-zero
            # weighted traces keep the multiplier table lazy on big lattices
            vals = np.zeros(len(self.lattice), dtype=complex)
            nz = np.nonzero(self.c_weighted != 0)[0]
            if len(nz):
                gw = self.multiplier.g_prime_weighted(nz)
                vals[nz] = self.c_weighted[nz] / gw
            self._d = SequenceData(lattice=self.lattice, values=vals)
        return self._d

    def c_raw(self, index: int) -> complex:
        return complex(self.c_weighted[index]
                       * np.exp(phi(self.weight, self.lattice.points[index])))

    # -- constructors --------------------------------------------------------

    @classmethod
    def from_weighted(cls, lattice, multiplier, weight, p, values) -> "TraceData":
        return cls(lattice, multiplier, weight, float(p) if p != "inf" else math.inf,
                   np.asarray(values, dtype=complex))

    @classmethod
    def from_raw(cls, lattice, multiplier, weight, p, values) -> "TraceData":
        vals = np.asarray(values, dtype=complex) \
            * np.exp(-np.asarray(phi(weight, lattice.points), dtype=float))
        return cls.from_weighted(lattice, multiplier, weight, p, vals)

    @classmethod
    def gaussian(cls, lattice, multiplier, weight, p, w: complex) -> "TraceData":
        """Trace of f_w(z) = exp(2 conj(w) z - |w|^2); its weighted values
        e^{-|lambda - w|^2 + i Im(...)} never overflow."""
        lam = lattice.points
        expo = 2.0 * np.conj(w) * lam - abs(w) ** 2 \
            - np.asarray(phi(weight, lam), dtype=float)
        return cls.from_weighted(lattice, multiplier, weight, p, np.exp(expo))

    @classmethod
    def constant(cls, lattice, multiplier, weight, p, v: complex) -> "TraceData":
        vals = v * np.exp(-np.asarray(phi(weight, lattice.points), dtype=float))
        return cls.from_weighted(lattice, multiplier, weight, p, vals)

    @classmethod
    def zero(cls, lattice, multiplier, weight, p) -> "TraceData":
        return cls.from_weighted(lattice, multiplier, weight, p,
                                 np.zeros(len(lattice), dtype=complex))


@dataclass(frozen=True, eq=False)
class ConditionReport:
    """One trace condition's partial-sum trajectory and verdict."""

    condition_id: str
    partial_trajectory: Tuple[Tuple[float, float], ...]
    verdict: str                       # bounded | diverging | undetermined
    growth_exponent: Optional[float] = None
    inner_unconverged: int = 0
    inner_total: int = 0

    @property
    def final_value(self) -> float:
        return self.partial_trajectory[-1][1] if self.partial_trajectory else 0.0


def trajectory_verdict(radii, values) -> Tuple[str, Optional[float]]:
    """Tri-state verdict for a nondecreasing trajectory of positive sums.

    Bounded when the relative increase over the last decade of radii is at
    most 1%; diverging when log-values against log-radius fit a positive
    power law (slope >= 0.05, R^2 >= 0.9) over that window; undetermined
    otherwise."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(values) == 0 or values[-1] == 0.0:
        return "bounded", None
    rmax = radii[-1]
    window = radii >= rmax / 10.0
    base_idx = int(np.argmax(window))
    base = values[base_idx]
    if base > 0 and values[-1] / base - 1.0 <= FLATTEN_TOL:
        return "bounded", None
    pos = window & (values > 0) & (radii > 0)
    if pos.sum() >= 4:
        x, y = np.log(radii[pos]), np.log(values[pos])
        slope, icpt = np.polyfit(x, y, 1)
        res = y - (slope * x + icpt)
        ss = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(np.sum(res ** 2)) / ss if ss > 0 else 0.0
        if slope >= DIVERGE_MIN_EXPONENT and r2 >= DIVERGE_MIN_R2:
            return "diverging", float(slope)
        return "undetermined", float(slope)
    return "undetermined", None


def _shell_cumulative(lat: Lattice, per_index: np.ndarray, p: float):
    """Cumulative l^p mass (or running sup) of per-index terms, by shell."""
    sched = shells_for(lat)
    radii, vals = [], []
    total = 0.0
    for r, members in zip(sched.radii, sched.members):
        block = per_index[members]
        if math.isinf(p):
            total = max(total, float(np.max(block)) if len(block) else 0.0)
        else:
            total += float(np.sum(block))
        radii.append(float(r))
        vals.append(total)
    return np.asarray(radii), np.asarray(vals)


def condition_a(data: TraceData) -> ConditionReport:
    """Size condition: cumulative sum of |c|^p e^{-p phi} (running sup of
    |c| e^{-phi} for p = inf) over ascending shells."""
    mags = np.abs(data.c_weighted)
    p = data.p
    per = mags if math.isinf(p) else mags ** p
    radii, vals = _shell_cumulative(data.lattice, per, p)
    verdict, expo = trajectory_verdict(radii, vals)
    cid = "inf_a" if math.isinf(p) else "a"
    traj = tuple(zip(radii.tolist(), vals.tolist()))
    return ConditionReport(cid, traj, verdict, expo)


def _outer_indices(lat: Lattice, exclude_origin: bool = False) -> np.ndarray:
    guard = OUTER_GUARD_FRACTION * lat.truncation_radius
    idx = np.nonzero(lat.radii <= guard)[0]
    if exclude_origin:
        idx = idx[np.abs(lat.points[idx]) > 0]
    return idx


def _aggregate(data: TraceData, inner_values: np.ndarray, indices: np.ndarray,
               cid: str, unconverged: int) -> ConditionReport:
    """Outer aggregation of per-lambda' magnitudes into a trajectory."""
    lat = data.lattice
    p = data.p
    r = lat.radii[indices]
    order = np.argsort(r, kind="stable")
    r_sorted = r[order]
    v_sorted = np.abs(inner_values)[order]
    gaps = np.nonzero(np.diff(r_sorted) > 1e-9 * np.maximum(1.0, r_sorted[1:]))[0]
    starts = np.concatenate([[0], gaps + 1, [len(r_sorted)]])
    radii, vals = [], []
    total = 0.0
    for a, b in zip(starts[:-1], starts[1:]):
        block = v_sorted[a:b]
        if math.isinf(p):
            total = max(total, float(block.max()))
        else:
            total += float(np.sum(block ** p))
        radii.append(float(r_sorted[b - 1]))
        vals.append(total)
    verdict, expo = trajectory_verdict(np.asarray(radii), np.asarray(vals))
    if verdict == "bounded" and unconverged > 0.1 * max(len(indices), 1):
        verdict = "undetermined"
    return ConditionReport(cid, tuple(zip(radii, vals)), verdict, expo,
                           inner_unconverged=unconverged,
                           inner_total=len(indices))


def condition_b(data: TraceData, cfg: PvConfig = DEFAULT_PV) -> ConditionReport:
    """Cauchy condition: per-lambda' p.v. transforms aggregated in l^p.
    For p = 1 the inner sums are absolutely convergent and no principal
    value is needed; the aggregation is then plain absolute summation."""
    lat = data.lattice
    idx = _outer_indices(lat)
    vals, conv = batch_higher(lat, data.d, idx, 1, cfg)
    bad = 0 if data.p == 1.0 else int(np.sum(~conv))
    return _aggregate(data, vals, idx, "b", bad)


def condition_c(data: TraceData, cfg: PvConfig = DEFAULT_PV) -> ConditionReport:
    """rho(lambda')-weighted second-order condition via the discrete
    Beurling-Ahlfors values.  Data with finite l^2(rho^-1) norm sums
    absolutely, so inner convergence flags are advisory there."""
    lat = data.lattice
    idx = _outer_indices(lat)
    vals, conv = batch_higher(lat, data.d, idx, 2, cfg)
    vals = vals * lat.rho_values[idx]
    absolute = np.isfinite(data.d.norm(2.0, -1.0))
    bad = 0 if absolute else int(np.sum(~conv))
    return _aggregate(data, vals, idx, "c", bad)


def condition_bprime(data: TraceData, N: int,
                     cfg: PvConfig = DEFAULT_PV) -> List[ConditionReport]:
    """Higher-order family: rho(lambda')^(n-1)-weighted order-n transforms
    for every 1 <= n <= N."""
    if N < 1:
        raise ValueError("N must be at least 1")
    lat = data.lattice
    idx = _outer_indices(lat)
    out = []
    for n in range(1, N + 1):
        vals, conv = batch_higher(lat, data.d, idx, n, cfg)
        vals = vals * lat.rho_values[idx] ** (n - 1)
        out.append(_aggregate(data, vals, idx, f"bprime({n})",
                              int(np.sum(~conv))))
    return out


def condition_inf_b(data: TraceData, cfg: PvConfig = DEFAULT_PV) -> ConditionReport:
    """Sup over lambda' != 0 of the origin-anchored modified Cauchy sum."""
    if not math.isinf(data.p):
        raise ValueError("the modified Cauchy condition applies to p = inf only")
    lat = data.lattice
    idx = _outer_indices(lat, exclude_origin=True)
    vals, conv = batch_modified_inf(lat, data.d, idx, cfg)
    return _aggregate(data, vals, idx, "inf_b", int(np.sum(~conv)))


def condition_inf_c(data: TraceData, n: int,
                    cfg: PvConfig = DEFAULT_PV) -> ConditionReport:
    """Sup-norm counterpart of the order-n condition, 2 <= n <= N."""
    lat = data.lattice
    idx = _outer_indices(lat)
    vals, conv = batch_higher(lat, data.d, idx, n, cfg)
    vals = vals * lat.rho_values[idx] ** (n - 1)
    return _aggregate(data, vals, idx, f"inf_c({n})", int(np.sum(~conv)))


@dataclass(frozen=True)
class BranchInfo:
    """Which regime of the characterisation applied."""

    case: str                  # "p=1" | "p=2" | "1<p<2" | "2<p<inf" | "p=inf"
    p: float
    is_ap: Optional[bool]
    t_effective: Optional[float]
    n_max: Optional[int]
    condition_ids: Tuple[str, ...]


@dataclass(frozen=True, eq=False)
class TraceVerdict:
    branch: BranchInfo
    reports: Tuple[ConditionReport, ...]
    overall: str

    def report(self, cid: str) -> ConditionReport:
        for r in self.reports:
            if r.condition_id == cid:
                return r
        raise KeyError(cid)


_T_CACHE: Dict[WeightProfile, DoublingExponent] = {}
_AP_CACHE: Dict[Tuple[WeightProfile, float], ApReport] = {}


def cached_t(w: WeightProfile) -> DoublingExponent:
    if w not in _T_CACHE:
        _T_CACHE[w] = estimate_t(w)
    return _T_CACHE[w]


def cached_ap(w: WeightProfile, p: float) -> ApReport:
    key = (w, round(p, 12))
    if key not in _AP_CACHE:
        _AP_CACHE[key] = ap_probe(w, p, default_ap_radii(w))
    return _AP_CACHE[key]


def select_branch(p: float, w: WeightProfile,
                  t: Optional[DoublingExponent] = None,
                  ap: Optional[ApReport] = None) -> BranchInfo:
    """Pure branch selection from (p, A_p status, doubling exponent)."""
    if p == 1.0:
        return BranchInfo("p=1", p, None, None, None, ("a", "b", "c"))
    if p == 2.0:
        return BranchInfo("p=2", p, None, None, None, ("a", "b"))
    if math.isinf(p):
        t = t if t is not None else cached_t(w)
        N = choose_N(t)
        ids = ("inf_a", "inf_b") + tuple(f"inf_c({n})" for n in range(2, N + 1))
        return BranchInfo("p=inf", p, None, effective_t(t), N, ids)
    if 1.0 < p < 2.0:
        ap = ap if ap is not None else cached_ap(w, p)
        ids = ("a", "b") if ap.is_ap else ("a", "b", "c")
        return BranchInfo("1<p<2", p, ap.is_ap, None, None, ids)
    # 2 < p < inf
    t = t if t is not None else cached_t(w)
    te = effective_t(t)
    if te > 0.5:
        ap = ap if ap is not None else cached_ap(w, p)
        ids = ("a", "b") if ap.is_ap else ("a", "b", "c")
        return BranchInfo("2<p<inf", p, ap.is_ap, te, None, ids)
    N = choose_N(t)
    ids = ("a",) + tuple(f"bprime({n})" for n in range(1, N + 1))
    return BranchInfo("2<p<inf", p, None, te, N, ids)


def classify(data: TraceData, cfg: PvConfig = DEFAULT_PV,
             t: Optional[DoublingExponent] = None,
             ap: Optional[ApReport] = None) -> TraceVerdict:
    """Evaluate the condition set for data.p and fold the verdicts.

    Overall is bounded only if every selected condition is bounded;
    any divergence wins, and undetermined propagates otherwise."""
    branch = select_branch(data.p, data.weight, t=t, ap=ap)
    reports: List[ConditionReport] = []
    bprime_reports = None
    for cid in branch.condition_ids:
        if cid in ("a", "inf_a"):
            reports.append(condition_a(data))
        elif cid == "b":
            reports.append(condition_b(data, cfg))
        elif cid == "c":
            reports.append(condition_c(data, cfg))
        elif cid == "inf_b":
            reports.append(condition_inf_b(data, cfg))
        elif cid.startswith("bprime"):
            if bprime_reports is None:
                bprime_reports = {r.condition_id: r for r in
                                  condition_bprime(data, branch.n_max, cfg)}
            reports.append(bprime_reports[cid])
        elif cid.startswith("inf_c"):
            n = int(cid[cid.index("(") + 1:-1])
            reports.append(condition_inf_c(data, n, cfg))
        else:
            raise AssertionError(cid)
    verdicts = {r.verdict for r in reports}
    if "diverging" in verdicts:
        overall = "diverging"
    elif "undetermined" in verdicts:
        overall = "undetermined"
    else:
        overall = "bounded"
    return TraceVerdict(branch=branch, reports=tuple(reports), overall=overall)
