"""Finite lattice truncations, shell schedules, and cell geometry.

The working set is always a finite truncation |lambda| <= R of either the
critical square lattice sqrt(pi/2)*(Z+iZ) or a user-supplied point set.
The origin is point index 0 throughout.  Shell schedules order principal
value sums (partial sums over |lambda| < R with R growing through the
distinct point radii), and the cell geometry assigns grid points to their
nearest lattice point in the surrogate metric |z - lambda| / rho(lambda).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import SeparationError
from .weights import WeightProfile, mu_disc, rho_many

__all__ = [
    "Lattice",
    "ShellSchedule",
    "GridSpec",
    "CellGeometry",
    "SQUARE_SCALE",
    "square_lattice",
    "explicit_lattice",
    "upper_density",
    "shells_for",
    "cell_geometry",
]

SQUARE_SCALE = math.sqrt(math.pi / 2.0)

_MIN_DELTA_SEP = 1e-6


@dataclass(frozen=True, eq=False)
class Lattice:
    """A finite, rho-separated point set containing the origin at index 0."""

    points: np.ndarray          # complex, index 0 is the origin
    scale: float                # sqrt(pi/2) for square kind
    truncation_radius: float
    rho_values: np.ndarray      # rho(lambda) per point
    kind: str                   # "square" | "explicit"
    delta_sep: float            # min |l-l'| / max(rho(l), rho(l'))

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=complex))
        object.__setattr__(self, "rho_values", np.asarray(self.rho_values, dtype=float))
        self.points.setflags(write=False)
        self.rho_values.setflags(write=False)

    def __len__(self) -> int:
        return int(self.points.size)

    @property
    def radii(self) -> np.ndarray:
        return np.abs(self.points)

    @property
    def max_rho(self) -> float:
        return float(self.rho_values.max())

    def guard_radius(self, factor: float = 5.0) -> float:
        """Inner radius unaffected by truncation-edge bias."""
        return self.truncation_radius - factor * self.max_rho

    def index_of(self, point: complex, tol: float = 1e-9) -> int:
        d = np.abs(self.points - point)
        i = int(np.argmin(d))
        if d[i] > tol * max(1.0, self.scale):
            raise KeyError(f"{point} is not a lattice point")
        return i

    def to_json(self) -> dict:
        if self.kind == "square":
            return {"kind": "square", "R": self.truncation_radius}
        return {"kind": "explicit",
                "points": [[float(p.real), float(p.imag)] for p in self.points]}


def _order_points(points: np.ndarray) -> np.ndarray:
    # Deterministic ordering: ascending |p|, ties by (Re, Im); origin first.
    r = np.abs(points)
    order = np.lexsort((points.imag, points.real, np.round(r, 12)))
    return points[order]


def _separation(points: np.ndarray, rho_vals: np.ndarray) -> float:
    if points.size < 2:
        return math.inf
    xy = np.column_stack([points.real, points.imag])
    tree = cKDTree(xy)
    k = min(12, points.size)
    dist, idx = tree.query(xy, k=k)
    # rho is 1-Lipschitz, so the separation minimiser is among near neighbours
    best = math.inf
    for j in range(1, k):
        m = np.maximum(rho_vals, rho_vals[idx[:, j]])
        best = min(best, float(np.min(dist[:, j] / m)))
    return best


def square_lattice(R: float, w: WeightProfile) -> Lattice:
    """All points sqrt(pi/2)*(m+in) with |point| <= R, origin at index 0."""
    s = SQUARE_SCALE
    if R < 3.0 * s:
        raise ValueError(f"R must be at least 3*scale = {3 * s:.3f}")
    M = int(math.ceil(R / s)) + 1
    m, n = np.meshgrid(np.arange(-M, M + 1), np.arange(-M, M + 1), indexing="ij")
    pts = (s * (m + 1j * n)).ravel()
    pts = _order_points(pts[np.abs(pts) <= R])
    rv = rho_many(w, pts)
    return Lattice(points=pts, scale=s, truncation_radius=float(R),
                   rho_values=rv, kind="square",
                   delta_sep=_separation(pts, rv))


def explicit_lattice(points: Sequence[complex], w: WeightProfile) -> Lattice:
    """Wrap user-supplied points; rejects duplicates, a missing origin, and
    sets that are not rho-separated."""
    pts = np.asarray(list(points), dtype=complex)
    if pts.size == 0 or np.min(np.abs(pts)) > 0.0:
        raise SeparationError("lattice must contain the origin")
    pts = _order_points(pts)
    rv = rho_many(w, pts)
    delta = _separation(pts, rv)
    if delta < _MIN_DELTA_SEP:
        raise SeparationError(
            f"points are not rho-separated (delta_sep = {delta:.3e})")
    R = float(np.max(np.abs(pts)))
    scale = float(np.min(np.abs(pts[1:]))) if pts.size > 1 else 1.0
    return Lattice(points=pts, scale=scale, truncation_radius=R,
                   rho_values=rv, kind="explicit", delta_sep=delta)


def upper_density(lat: Lattice, w: WeightProfile, r_schedule: Sequence[float],
                  centers: Optional[Sequence[complex]] = None) -> float:
    """Counting surrogate for the upper uniform density.

    For each sampled center z and each r in the schedule, the ratio
    #(Lambda on the closed disc D(z, r*rho(z))) / mu(D(z, r*rho(z))) is
    formed; the value returned is the maximum over centers at the largest r
    (the limsup surrogate).  The critical square lattice gives 1/(2*pi).
    """
    rs = sorted(float(r) for r in r_schedule)
    if not rs:
        raise ValueError("empty schedule")
    if centers is None:
        order = np.argsort(np.abs(lat.points), kind="stable")
        centers = list(lat.points[order[:9]])
    centers = np.asarray(centers, dtype=complex)
    rho_c = rho_many(w, centers)
    reach = np.abs(centers) + rs[-1] * rho_c
    if np.any(reach > lat.truncation_radius):
        raise ValueError("schedule exceeds the safe truncation margin")
    best = 0.0
    r = rs[-1]
    for c, rc in zip(centers, rho_c):
        rad = r * rc
        count = int(np.sum(np.abs(lat.points - c) <= rad + 1e-12))
        best = max(best, count / mu_disc(w, c, rad))
    return best


@dataclass(frozen=True, eq=False)
class ShellSchedule:
    """Grouping of lattice indices into shells of equal schedule metric.

    The default metric is |lambda| regardless of where a transform is
    centred: partial sums grow through values of |lambda| < R.  Shell radii
    are strictly ascending and, together, the member lists partition the
    index set.
    """

    center: complex
    radii: np.ndarray              # strictly ascending shell radii
    members: tuple                 # tuple of integer index arrays
    metric: str = "origin"         # "origin" | "center"

    def __post_init__(self):
        object.__setattr__(self, "radii", np.asarray(self.radii, dtype=float))

    @property
    def n_shells(self) -> int:
        return len(self.members)

    def flat_indices(self) -> np.ndarray:
        return np.concatenate(self.members) if self.members else np.array([], dtype=int)

    def boundaries(self) -> np.ndarray:
        """Positions splitting the flat index stream into shells."""
        sizes = np.fromiter((len(m) for m in self.members), dtype=int,
                            count=len(self.members))
        return np.cumsum(sizes)


def shells_for(lat: Lattice, center: complex = 0.0,
               metric: str = "origin") -> ShellSchedule:
    """Group indices by |lambda| (or |lambda - center| in "center" mode).

    Points of equal radius are inseparable and always share a shell, so a
    principal value is well-defined regardless of within-shell order.
    """
    if metric not in ("origin", "center"):
        raise ValueError("metric must be 'origin' or 'center'")
    ref = 0.0 if metric == "origin" else complex(center)
    r = np.abs(lat.points - ref)
    order = np.argsort(r, kind="stable")
    rs = r[order]
    # group radii equal up to a relative tolerance (lattice radii are
    # genuinely discrete, so chained drift is not a concern)
    gaps = np.diff(rs) > 1e-9 * np.maximum(1.0, rs[1:])
    breaks = np.concatenate([[0], np.nonzero(gaps)[0] + 1, [len(rs)]])
    members = []
    radii = []
    for b0, b1 in zip(breaks[:-1], breaks[1:]):
        members.append(np.sort(order[b0:b1]))
        radii.append(rs[b1 - 1])
    return ShellSchedule(center=complex(center), radii=np.asarray(radii),
                         members=tuple(members), metric=metric)


@dataclass(frozen=True)
class GridSpec:
    """Rectangular midpoint grid: nx-by-ny cells covering [x0,x1]x[y0,y1]."""

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int

    def points(self) -> np.ndarray:
        xs = self.x0 + (np.arange(self.nx) + 0.5) * (self.x1 - self.x0) / self.nx
        ys = self.y0 + (np.arange(self.ny) + 0.5) * (self.y1 - self.y0) / self.ny
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return X + 1j * Y

    @property
    def cell_area(self) -> float:
        return (self.x1 - self.x0) / self.nx * (self.y1 - self.y0) / self.ny

    @property
    def corner_radius(self) -> float:
        return max(abs(complex(x, y))
                   for x in (self.x0, self.x1) for y in (self.y0, self.y1))


@dataclass(frozen=True, eq=False)
class CellGeometry:
    """Nearest-cell assignment under |z - lambda| / rho(lambda).

    cell_of maps each grid point to a lattice index; cell_measure[i] is the
    Riemann sum of dm/rho(z)^2 over the points assigned to cell i (a
    uniformly bounded quantity across cells).
    """

    grid: GridSpec
    cell_of: np.ndarray          # int array, shape (nx, ny)
    cell_measure: dict           # lattice index -> float
    max_diameter_over_rho: float # empirical cell-size diagnostic

    def to_csv_rows(self):
        pts = self.grid.points()
        for i in range(self.grid.nx):
            for j in range(self.grid.ny):
                z = pts[i, j]
                yield (z.real, z.imag, int(self.cell_of[i, j]))


def cell_geometry(lat: Lattice, grid: GridSpec, w: WeightProfile) -> CellGeometry:
    """Assign grid points to cells and accumulate the cell measures."""
    if grid.corner_radius > lat.truncation_radius - 2.0 * lat.max_rho:
        raise ValueError("grid extends outside the safe lattice region")
    pts = grid.points()
    flat = pts.ravel()
    xy = np.column_stack([flat.real, flat.imag])
    tree = cKDTree(np.column_stack([lat.points.real, lat.points.imag]))
    k = min(9, len(lat))
    _, cand = tree.query(xy, k=k)
    cand = cand.reshape(len(flat), k) if k > 1 else cand.reshape(len(flat), 1)
    sur = np.abs(flat[:, None] - lat.points[cand]) / lat.rho_values[cand]
    best = np.argmin(sur, axis=1)
    assign = cand[np.arange(len(flat)), best]
    sur_best = sur[np.arange(len(flat)), best]

    rho_z = rho_many(w, flat)
    dens = grid.cell_area / rho_z ** 2
    measure = {}
    for idx in np.unique(assign):
        measure[int(idx)] = float(dens[assign == idx].sum())
    return CellGeometry(grid=grid,
                        cell_of=assign.reshape(grid.nx, grid.ny),
                        cell_measure=measure,
                        max_diameter_over_rho=2.0 * float(sur_best.max()))
