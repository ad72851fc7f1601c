"""Principal-value summation engine and the discrete lattice transforms.

A principal value here always means the limit of partial sums over
|lambda| < R, realised as shell-by-shell accumulation in ascending shell
order with compensated (Kahan) carries: the sums are cancellation-heavy
(odd kernels vanish per shell on the square lattice) and may run over 1e5
terms.  Convergence at finite truncation is a verdict, not a certainty:
the last few shell partials must agree to the configured tolerance.

Transforms acting on weighted sequences d (normally d = c/g'):

    cauchy:    sum d_lambda / (lambda - lambda')
    ba:        sum d_lambda / (lambda' - lambda)^2
    higher n:  sum d_lambda / (lambda - lambda')^n
    modified:  -d_0/lambda' + sum d_lambda (1/(lambda-lambda') - 1/lambda)

plus the positive-kernel potentials L and M(N) and matrix-free operator
norm probes of their boundedness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import NumericalError
from .lattice import Lattice, ShellSchedule, shells_for, SQUARE_SCALE
from .weights import WeightProfile, rho_many

__all__ = [
    "PvConfig",
    "PvResult",
    "SequenceData",
    "OperatorNormReport",
    "NecessityReport",
    "pv_sum",
    "cauchy_transform",
    "ba_transform",
    "higher_transform",
    "modified_cauchy_inf",
    "batch_higher",
    "batch_modified_inf",
    "potential_LM",
    "operator_matrix",
    "operator_norm_estimate",
    "taylor_kernel_check",
    "necessity_probe",
    "transform_batch_report",
]


@dataclass(frozen=True)
class PvConfig:
    """Knobs of the principal-value engine.

    Convergence is declared via a Cauchy criterion on the last
    `cauchy_window` shell partials at relative tolerance `rtol` (scaled by
    the size of those partials).  `center_mode` selects the shell metric:
    the limit definition sums over |lambda| < R even for transforms centred
    elsewhere, so "origin" is the default; "center" exists for experiments.
    """

    rtol: float = 1e-9
    atol: float = 1e-15
    cauchy_window: int = 5
    center_mode: str = "origin"


DEFAULT_PV = PvConfig()


def _kahan_cumulative(shell_sums: np.ndarray) -> np.ndarray:
    """Compensated running sum along axis 0 (shells)."""
    total = np.zeros_like(shell_sums[0])
    comp = np.zeros_like(shell_sums[0])
    out = np.empty_like(shell_sums)
    for i in range(shell_sums.shape[0]):
        y = shell_sums[i] - comp
        t = total + y
        comp = (t - total) - y
        total = t
        out[i] = total
    return out


@dataclass(frozen=True, eq=False)
class PvResult:
    """Value and convergence diagnostics of one shell-ordered sum."""

    value: complex
    shell_partials: np.ndarray
    shell_radii: np.ndarray
    converged: bool
    cauchy_tail: float
    shells_used: int
    absolutely_convergent: bool = False

    def growth_exponent(self, window: float = 10.0):
        """Fitted log-log slope of |partial| against shell radius over the
        last `window`-fold range of radii, with its R^2; None when the data
        cannot support a fit.  Used to tell divergence from boundedness."""
        r = self.shell_radii
        a = np.abs(self.shell_partials)
        keep = (r >= r[-1] / window) & (r > 0) & (a > 0)
        if keep.sum() < 4:
            return None
        x, y = np.log(r[keep]), np.log(a[keep])
        slope, icpt = np.polyfit(x, y, 1)
        res = y - (slope * x + icpt)
        ss = np.sum((y - y.mean()) ** 2)
        r2 = 1.0 - float(np.sum(res ** 2) / ss) if ss > 0 else 0.0
        return float(slope), float(r2)


def pv_sum(schedule: ShellSchedule, term: Union[Callable[[int], complex], np.ndarray],
           cfg: PvConfig = DEFAULT_PV) -> PvResult:
    """Shell-ordered principal value of sum(term(index)).

    `term` is either a callable on lattice indices or a precomputed array
    over all indices.  Non-convergence is a reported state, never an error.
    """
    flat = schedule.flat_indices()
    if callable(term):
        values = np.fromiter((term(int(i)) for i in flat), dtype=complex,
                             count=len(flat))
    else:
        values = np.asarray(term, dtype=complex)[flat]
    bounds = schedule.boundaries()
    starts = np.concatenate([[0], bounds[:-1]])
    shell_sums = np.add.reduceat(values, starts) if len(values) else \
        np.zeros(0, dtype=complex)
    partials = _kahan_cumulative(shell_sums.reshape(-1, 1)).ravel() \
        if len(shell_sums) else np.zeros(0, dtype=complex)
    return _finish_pv(partials, schedule.radii, cfg)


def _finish_pv(partials: np.ndarray, radii: np.ndarray,
               cfg: PvConfig, absolute: bool = False) -> PvResult:
    if len(partials) == 0:
        return PvResult(0.0 + 0.0j, partials, radii, True, 0.0, 0,
                        absolutely_convergent=absolute)
    k = min(cfg.cauchy_window, len(partials))
    tailvals = partials[-k:]
    spread = float(np.max(np.abs(tailvals[:, None] - tailvals[None, :])))
    scale = float(np.max(np.abs(tailvals)))
    converged = spread <= cfg.rtol * scale + cfg.atol
    return PvResult(value=complex(partials[-1]), shell_partials=partials,
                    shell_radii=np.asarray(radii, dtype=float),
                    converged=bool(converged), cauchy_tail=spread,
                    shells_used=len(partials), absolutely_convergent=absolute)


@dataclass(eq=False)
class SequenceData:
    """A weighted sequence d over lattice indices with cached norms."""

    lattice: Lattice
    values: np.ndarray
    _norms: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (len(self.lattice),):
            raise ValueError("sequence must cover every lattice index")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sequence entries must be finite")

    def norm(self, p: float, alpha: float = -1.0) -> float:
        """l^p norm of d_lambda * rho(lambda)^alpha."""
        key = (p, alpha)
        if key not in self._norms:
            wvals = np.abs(self.values) * self.lattice.rho_values ** alpha
            if math.isinf(p):
                self._norms[key] = float(wvals.max()) if len(wvals) else 0.0
            else:
                self._norms[key] = float(np.sum(wvals ** p) ** (1.0 / p))
        return self._norms[key]


def _schedule_for(lat: Lattice, center: complex, cfg: PvConfig) -> ShellSchedule:
    if cfg.center_mode == "center":
        return shells_for(lat, center=center, metric="center")
    if not hasattr(lat, "_origin_schedule"):
        object.__setattr__(lat, "_origin_schedule", shells_for(lat))
    return lat._origin_schedule


def cauchy_transform(lat: Lattice, d: SequenceData, index: int,
                     cfg: PvConfig = DEFAULT_PV) -> PvResult:
    """p.v. sum over lambda != lambda' of d_lambda / (lambda - lambda')."""
    lam_p = lat.points[index]
    terms = np.zeros(len(lat), dtype=complex)
    mask = np.arange(len(lat)) != index
    terms[mask] = d.values[mask] / (lat.points[mask] - lam_p)
    return pv_sum(_schedule_for(lat, lam_p, cfg), terms, cfg)


def ba_transform(lat: Lattice, d: SequenceData, index: int,
                 cfg: PvConfig = DEFAULT_PV) -> PvResult:
    """Discrete Beurling-Ahlfors value: sum of d_lambda/(lambda'-lambda)^2.

    For data with finite l^p(rho^-1) norm, p <= 2, the sum converges
    absolutely and the result is flagged accordingly.
    """
    lam_p = lat.points[index]
    terms = np.zeros(len(lat), dtype=complex)
    mask = np.arange(len(lat)) != index
    terms[mask] = d.values[mask] / (lam_p - lat.points[mask]) ** 2
    res = pv_sum(_schedule_for(lat, lam_p, cfg), terms, cfg)
    absolute = np.isfinite(d.norm(2.0, -1.0))
    return PvResult(res.value, res.shell_partials, res.shell_radii,
                    res.converged, res.cauchy_tail, res.shells_used,
                    absolutely_convergent=bool(absolute))


def higher_transform(lat: Lattice, d: SequenceData, index: int, n: int,
                     cfg: PvConfig = DEFAULT_PV,
                     n_max: Optional[int] = None) -> PvResult:
    """p.v. sum of d_lambda / (lambda - lambda')^n; the rho(lambda')^(n-1)
    prefactor of the trace conditions is applied by the caller."""
    if n < 1 or (n_max is not None and n > n_max):
        raise ValueError(f"transform order n={n} out of range")
    lam_p = lat.points[index]
    terms = np.zeros(len(lat), dtype=complex)
    mask = np.arange(len(lat)) != index
    terms[mask] = d.values[mask] / (lat.points[mask] - lam_p) ** n
    return pv_sum(_schedule_for(lat, lam_p, cfg), terms, cfg)


def modified_cauchy_inf(lat: Lattice, d: SequenceData, index: int,
                        cfg: PvConfig = DEFAULT_PV) -> PvResult:
    """-d_0/lambda' + p.v. sum over lambda not in {0, lambda'} of
    d_lambda (1/(lambda - lambda') - 1/lambda); the sup-norm counterpart of
    the Cauchy condition.  The kernel decays like |lambda'|/|lambda|^2, so
    bounded (rho^-1-weighted) data sums absolutely at fixed lambda'."""
    if index == 0:
        raise ValueError("modified transform requires lambda' != 0")
    lam_p = lat.points[index]
    idx = np.arange(len(lat))
    terms = np.zeros(len(lat), dtype=complex)
    mask = (idx != index) & (idx != 0)
    pts = lat.points[mask]
    terms[mask] = d.values[mask] * (1.0 / (pts - lam_p) - 1.0 / pts)
    terms[0] = -d.values[0] / lam_p
    res = pv_sum(_schedule_for(lat, lam_p, cfg), terms, cfg)
    absolute = np.isfinite(d.norm(math.inf, -1.0))
    return PvResult(res.value, res.shell_partials, res.shell_radii,
                    res.converged, res.cauchy_tail, res.shells_used,
                    absolutely_convergent=bool(absolute))


def _batch_pv_values(lat: Lattice, term_matrix: np.ndarray,
                     cfg: PvConfig = DEFAULT_PV):
    """Shell-ordered compensated evaluation of many p.v. sums at once.

    term_matrix has one row per sum and one column per lattice index.
    Returns (values, converged, cauchy_tail) arrays; identical to running
    pv_sum row by row over the origin schedule, but with the shell loop
    vectorised across rows.
    """
    sched = _schedule_for(lat, 0.0, DEFAULT_PV)
    flat = sched.flat_indices()
    starts = np.concatenate([[0], sched.boundaries()[:-1]])
    shell_sums = np.add.reduceat(term_matrix[:, flat], starts, axis=1)
    total = np.zeros(term_matrix.shape[0], dtype=complex)
    comp = np.zeros_like(total)
    window = []
    for s in range(shell_sums.shape[1]):
        y = shell_sums[:, s] - comp
        t = total + y
        comp = (t - total) - y
        total = t
        window.append(total.copy())
        if len(window) > cfg.cauchy_window:
            window.pop(0)
    stack = np.stack(window)
    spread = np.max(np.abs(stack[:, None, :] - stack[None, :, :]), axis=(0, 1))
    scale = np.max(np.abs(stack), axis=0)
    converged = spread <= cfg.rtol * scale + cfg.atol
    return total, converged, spread


def batch_higher(lat: Lattice, d: SequenceData, indices: np.ndarray, n: int,
                 cfg: PvConfig = DEFAULT_PV, chunk: int = 4_000_000):
    """Order-n transforms at many centers (vectorised higher_transform)."""
    indices = np.asarray(indices, dtype=int)
    values = np.empty(len(indices), dtype=complex)
    converged = np.empty(len(indices), dtype=bool)
    rows = max(1, chunk // max(len(lat), 1))
    for i in range(0, len(indices), rows):
        blk = indices[i:i + rows]
        centers = lat.points[blk]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = d.values[None, :] / (lat.points[None, :] - centers[:, None]) ** n
        terms[np.arange(len(blk)), blk] = 0.0
        v, c, _ = _batch_pv_values(lat, terms, cfg)
        values[i:i + rows] = v
        converged[i:i + rows] = c
    return values, converged


def batch_modified_inf(lat: Lattice, d: SequenceData, indices: np.ndarray,
                       cfg: PvConfig = DEFAULT_PV, chunk: int = 4_000_000):
    """Vectorised modified_cauchy_inf over many nonzero centers."""
    indices = np.asarray(indices, dtype=int)
    if np.any(np.abs(lat.points[indices]) == 0.0):
        raise ValueError("modified transform requires lambda' != 0")
    values = np.empty(len(indices), dtype=complex)
    converged = np.empty(len(indices), dtype=bool)
    rows = max(1, chunk // max(len(lat), 1))
    inv_lam = np.zeros(len(lat), dtype=complex)
    nz = np.abs(lat.points) > 0
    inv_lam[nz] = 1.0 / lat.points[nz]
    for i in range(0, len(indices), rows):
        blk = indices[i:i + rows]
        centers = lat.points[blk]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = d.values[None, :] * (1.0 / (lat.points[None, :] - centers[:, None])
                                         - inv_lam[None, :])
        terms[np.arange(len(blk)), blk] = 0.0
        terms[:, 0] = -d.values[0] / centers
        v, c, _ = _batch_pv_values(lat, terms, cfg)
        values[i:i + rows] = v
        converged[i:i + rows] = c
    return values, converged


def potential_LM(lat: Lattice, d: SequenceData, mode: str, index: int,
                 N: Optional[int] = None, t: Optional[float] = None) -> complex:
    """Positive-kernel potentials (dense summation, no p.v. needed):

        L:    sum d~_lambda rho(lambda) rho(lambda')^2 / |lambda'-lambda|^3
        M(N): sum d~_lambda rho(lambda) rho(lambda')^N / |lambda'-lambda|^(N+1)

    Mode M enforces N > 1/t when the doubling exponent t is supplied.
    """
    lam_p = lat.points[index]
    rho_p = lat.rho_values[index]
    mask = np.arange(len(lat)) != index
    dist = np.abs(lat.points[mask] - lam_p)
    if mode == "L":
        kern = lat.rho_values[mask] * rho_p ** 2 / dist ** 3
    elif mode == "M":
        if N is None:
            raise ValueError("mode M needs the order N")
        if t is not None and N <= 1.0 / t:
            raise ValueError(f"mode M requires N > 1/t (N={N}, 1/t={1.0 / t:.3f})")
        kern = lat.rho_values[mask] * rho_p ** N / dist ** (N + 1)
    else:
        raise ValueError("mode must be 'L' or 'M'")
    return complex(np.sum(d.values[mask] * kern))


# ---------------------------------------------------------------------------
# Operator-norm probes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorNormReport:
    """Estimated operator norms across nested lattice truncations."""

    op: str
    p: float
    sizes: tuple
    norms: tuple
    stagnations: tuple = ()

    @property
    def growth_ratio(self) -> float:
        return self.norms[-1] / self.norms[0]


def _op_weights(kind: str, rho_vals: np.ndarray, N: int):
    # (output diagonal, input diagonal) of the weighted matrix form
    if kind == "B":
        return rho_vals, rho_vals
    if kind == "L":
        return rho_vals ** 2, rho_vals
    if kind == "M":
        return rho_vals ** N, rho_vals
    raise ValueError("operator must be 'B', 'L' or 'M'")


def _op_kernel(kind: str, diffs: np.ndarray, N: int) -> np.ndarray:
    if kind == "B":
        return 1.0 / diffs ** 2
    if kind == "L":
        return 1.0 / np.abs(diffs) ** 3
    return 1.0 / np.abs(diffs) ** (N + 1)


def operator_matrix(lat: Lattice, w: WeightProfile, kind: str,
                    N: int = 2) -> np.ndarray:
    """Dense weighted matrix of the operator section on the lattice
    (B carries the l^p(rho^-1) -> l^p(rho) conjugation; diagonal is 0)."""
    out_w, in_w = _op_weights(kind, lat.rho_values, N)
    diffs = lat.points[:, None] - lat.points[None, :]
    np.fill_diagonal(diffs, 1.0)
    K = _op_kernel(kind, diffs, N) * out_w[:, None] * in_w[None, :]
    np.fill_diagonal(K, 0.0)
    return K


class _FftSection:
    """Matrix-free section of a translation-invariant kernel with diagonal
    weights on a disc of the square lattice."""

    def __init__(self, R: float, w: WeightProfile, kind: str, N: int,
                 scale: float = SQUARE_SCALE):
        M = int(math.ceil(R / scale))
        m = np.arange(-M, M + 1)
        mm, nn = np.meshgrid(m, m, indexing="ij")
        lam = scale * (mm + 1j * nn)
        self.mask = np.abs(lam) <= R
        self.size = int(self.mask.sum())
        self.M = M
        rv = rho_many(w, lam.ravel()).reshape(lam.shape)
        out_w, in_w = _op_weights(kind, rv, N)
        self.out_w = np.where(self.mask, out_w, 0.0)
        self.in_w = np.where(self.mask, in_w, 0.0)
        off = np.arange(-2 * M, 2 * M + 1)
        om, on = np.meshgrid(off, off, indexing="ij")
        d = scale * (om + 1j * on)
        ctr = (om == 0) & (on == 0)
        kern = np.where(ctr, 0.0, _op_kernel(kind, np.where(ctr, 1.0, d), N))
        n = 4 * M + 1
        self._n = n
        self._kf = np.fft.fft2(kern, s=(n, n))
        self._kcf = np.fft.fft2(np.conj(kern[::-1, ::-1]), s=(n, n))
        self._kabsf = np.fft.fft2(np.abs(kern), s=(n, n))

    def _conv(self, kf, x):
        Y = np.fft.ifft2(kf * np.fft.fft2(x, s=(self._n, self._n)))
        return Y[2 * self.M:4 * self.M + 1, 2 * self.M:4 * self.M + 1]

    def apply(self, x):
        return self.out_w * self._conv(self._kf, self.in_w * x)

    def apply_adjoint(self, y):
        # weights are real, so conjugation only touches the kernel
        return self.in_w * self._conv(self._kcf, self.out_w * y)

    def col_sum_max(self) -> float:
        s = self._conv(self._kabsf, self.out_w).real
        return float((self.in_w * np.where(self.mask, s, 0.0)).max())

    def row_sum_max(self) -> float:
        s = self._conv(self._kabsf, self.in_w).real
        return float((self.out_w * np.where(self.mask, s, 0.0)).max())


def _power_iteration(apply_fn, adjoint_fn, shape, mask, seed: int,
                     iters: int = 50, stag: float = 1e-8):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    x = np.where(mask, x, 0.0)
    x /= np.linalg.norm(x)
    prev = None
    achieved = math.inf
    for _ in range(iters):
        y = np.where(mask, apply_fn(x), 0.0)
        z = np.where(mask, adjoint_fn(y), 0.0)
        nrm = np.linalg.norm(z)
        if nrm == 0.0:
            return 0.0, 0.0
        sig = math.sqrt(nrm)
        x = z / nrm
        if prev is not None:
            achieved = abs(sig - prev) / max(sig, 1e-300)
            if achieved <= stag:
                break
        prev = sig
    if achieved > 1e-3:
        raise NumericalError(
            f"power iteration failed to stagnate (last change {achieved:.1e})")
    return sig, achieved


def operator_norm_estimate(kind: str, sizes: Sequence[int], p: float,
                           w: WeightProfile, N: int = 2, trials: int = 2,
                           seed: int = 0, method: str = "auto") -> OperatorNormReport:
    """Operator norms of B, L or M(N) across nested square-lattice sizes.

    p=1 and p=inf are the exact max weighted column/row sums; p=2 is the
    largest singular value by power iteration (50 iterations or 1e-8
    stagnation; several seeded trials, largest estimate kept).  Square
    sections are evaluated matrix-free via FFT convolution, which keeps the
    5000-point probes cheap; `method="dense"` forces the dense matrix.
    """
    if p not in (1.0, 2.0) and not math.isinf(p):
        raise ValueError("operator norms support p in {1, 2, inf}")
    sizes = sorted(int(s) for s in sizes)
    if len(sizes) == 0 or sizes[0] < 1:
        raise ValueError("sizes must be positive and ascending")
    norms, actual, stags = [], [], []
    for size in sizes:
        # radius with expected count ~ size: pi R^2 / scale^2 = size
        R = math.sqrt(size * SQUARE_SCALE ** 2 / math.pi)
        if size == 1:
            norms.append(0.0)
            actual.append(1)
            stags.append(0.0)
            continue
        if method == "dense":
            from .lattice import square_lattice
            lat = square_lattice(max(R, 3.1 * SQUARE_SCALE), w)
            K = operator_matrix(lat, w, kind, N)
            actual.append(len(lat))
            if p == 1.0:
                norms.append(float(np.abs(K).sum(axis=0).max()))
                stags.append(0.0)
            elif math.isinf(p):
                norms.append(float(np.abs(K).sum(axis=1).max()))
                stags.append(0.0)
            else:
                norms.append(float(np.linalg.svd(K, compute_uv=False)[0]))
                stags.append(0.0)
            continue
        sec = _FftSection(R, w, kind, N)
        actual.append(sec.size)
        if p == 1.0:
            norms.append(sec.col_sum_max())
            stags.append(0.0)
        elif math.isinf(p):
            norms.append(sec.row_sum_max())
            stags.append(0.0)
        else:
            best, ach = 0.0, math.inf
            for t in range(max(trials, 1)):
                sig, a = _power_iteration(sec.apply, sec.apply_adjoint,
                                          sec.mask.shape, sec.mask,
                                          seed=seed + 1000 * t)
                if sig > best:
                    best, ach = sig, a
            norms.append(best)
            stags.append(ach)
    return OperatorNormReport(op=kind if kind != "M" else f"M({N})", p=p,
                              sizes=tuple(actual), norms=tuple(norms),
                              stagnations=tuple(stags))


# ---------------------------------------------------------------------------
# Kernel identity and the perturbed-point probe
# ---------------------------------------------------------------------------

def taylor_kernel_check(z: complex, lam: complex, lam_prime: complex = 0.0,
                        n: int = 2) -> float:
    """Absolute discrepancy of the geometric-remainder identity

        1/(z-L) + 1/L + z/L^2 + ... + z^(n-1)/L^n = z^n / (L^n (z-L))

    with L = lam - lam_prime (the translated variant used at perturbed
    points).  Exact algebra, so the return value is pure rounding."""
    L = complex(lam) - complex(lam_prime)
    z = complex(z)
    if L == 0:
        raise ValueError("lambda must differ from lambda'")
    if z == L:
        raise ValueError("z must differ from lambda - lambda'")
    lhs = 1.0 / (z - L)
    zp = 1.0
    for j in range(1, n + 1):
        lhs += zp / L ** j
        zp *= z
    rhs = z ** n / (L ** n * (z - L))
    return abs(lhs - rhs)


@dataclass(frozen=True, eq=False)
class NecessityReport:
    """Comparison of condition sums recovered from perturbed-point samples
    against directly computed transforms."""

    delta: float
    N: int
    indices: np.ndarray
    sample_norms: dict          # k -> l^p norm (or sup) of f/g samples
    recovered: dict             # n -> complex array over indices
    direct: dict                # n -> complex array over indices
    max_discrepancy: dict       # n -> float

    @property
    def worst(self) -> float:
        return max(self.max_discrepancy.values())


def necessity_probe(lat: Lattice, m, f: Callable, p: float, delta: float,
                    N: int, cfg: PvConfig = DEFAULT_PV,
                    guard_fraction: float = 0.5) -> NecessityReport:
    """Sample f/g at the N rotated points lambda' + delta w_k rho(lambda')
    (w_k the N-th roots of unity) and reconstruct each condition-(n) sum
    from the sample family.

    The underlying identity (for f in the space, evaluated at z = z_k):

        sum_{n=1..N} zeta^(n-1) S_n(lambda')
            = d_lambda'/zeta + R_k(lambda') - f(z_k)/g(z_k),

    zeta = delta w_k rho(lambda'), S_n the p.v. transform of order n, and
    R_k the absolutely convergent N-th order remainder.  Averaging against
    w_k^-(n-1) isolates S_n; agreement with the directly computed
    transforms is reported per order.
    """
    if not (0.0 < delta < lat.delta_sep / 2.0):
        raise ValueError("delta must lie in (0, delta_sep/2)")
    if N < 1:
        raise ValueError("N must be at least 1")
    guard = guard_fraction * lat.truncation_radius
    indices = np.nonzero(lat.radii <= guard)[0]
    pts = lat.points
    rho_v = lat.rho_values

    # trace data d = f|Lambda / g'
    f_lam = _eval_f(f, pts)
    d_vals = f_lam * np.exp(-_phi_vec(m.weight, pts)) / m.g_prime_weighted()
    d = SequenceData(lattice=lat, values=d_vals)

    direct = {}
    for n in range(1, N + 1):
        vals = np.empty(len(indices), dtype=complex)
        for j, idx in enumerate(indices):
            vals[j] = higher_transform(lat, d, int(idx), n, cfg).value
        direct[n] = vals

    omega = np.exp(2j * math.pi * np.arange(N) / N)
    A = np.zeros((N, len(indices)), dtype=complex)
    sample_norms = {}
    for k in range(N):
        zk = pts[indices] + delta * omega[k] * rho_v[indices]
        fg = _eval_f(f, zk) * np.exp(-m.log_g(zk))
        if math.isinf(p):
            sample_norms[k] = float(np.max(np.abs(fg)))
        else:
            sample_norms[k] = float(np.sum(np.abs(fg) ** p) ** (1.0 / p))
        for j, idx in enumerate(indices):
            zeta = delta * omega[k] * rho_v[idx]
            mask = np.arange(len(lat)) != idx
            rem = np.sum(d.values[mask] * zeta ** N
                         / ((pts[mask] - pts[idx]) ** N * (zk[j] - pts[mask])))
            A[k, j] = d.values[idx] / zeta + rem - fg[j]

    recovered = {}
    discrepancy = {}
    for n in range(1, N + 1):
        coef = np.mean(A * omega[:, None] ** (-(n - 1)), axis=0)
        recovered[n] = coef / (delta * rho_v[indices]) ** (n - 1)
        discrepancy[n] = float(np.max(np.abs(recovered[n] - direct[n])))
    return NecessityReport(delta=delta, N=N, indices=indices,
                           sample_norms=sample_norms, recovered=recovered,
                           direct=direct, max_discrepancy=discrepancy)


def transform_batch_report(lat: Lattice, d: SequenceData, indices, n: int = 1,
                           cfg: PvConfig = DEFAULT_PV) -> list:
    """Serialisable per-center transform results: one entry
    {index, value: [re, im], converged, growth_exponent} per lambda'."""
    out = []
    for i in np.asarray(indices, dtype=int):
        res = higher_transform(lat, d, int(i), n, cfg)
        fit = res.growth_exponent()
        out.append({
            "index": int(i),
            "value": [float(res.value.real), float(res.value.imag)],
            "converged": bool(res.converged),
            "growth_exponent": None if fit is None else float(fit[0]),
        })
    return out


def _phi_vec(w: WeightProfile, z: np.ndarray) -> np.ndarray:
    from .weights import phi
    return np.asarray(phi(w, z), dtype=float)


def _eval_f(f: Callable, z: np.ndarray) -> np.ndarray:
    """Evaluate a user function on an array, vectorised when it supports it."""
    try:
        out = np.asarray(f(z), dtype=complex)
        if out.shape == z.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.asarray([complex(f(zz)) for zz in z])
