"""Canonical data model: layouts, geometry/materials, frequency grids, D4 symmetry.

Cell indexing is row-major: (row, col) -> index = row * cols + col.
Roles are Signal=+1, Empty=0, Ground=-1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants

SIGNAL = 1
EMPTY = 0
GROUND = -1

UM = 1e-6


class LayoutError(ValueError):
    """Invalid layout construction or transform request."""


class GeometryError(ValueError):
    """Geometry or material parameters violate physical constraints."""


@dataclass(frozen=True)
class TsvLayout:
    """Rectangular grid of per-cell roles, the combinatorial design variable."""

    rows: int
    cols: int
    roles: tuple

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise LayoutError("grid dimensions must be positive")
        roles = tuple(int(r) for r in self.roles)
        if len(roles) != self.rows * self.cols:
            raise LayoutError(
                f"roles length {len(roles)} != rows*cols = {self.rows * self.cols}"
            )
        if any(r not in (SIGNAL, EMPTY, GROUND) for r in roles):
            raise LayoutError("roles must be in {1, 0, -1}")
        object.__setattr__(self, "roles", roles)

    @property
    def signal_cells(self):
        return tuple(i for i, r in enumerate(self.roles) if r == SIGNAL)

    @property
    def ground_cells(self):
        return tuple(i for i, r in enumerate(self.roles) if r == GROUND)

    @property
    def occupied_cells(self):
        return tuple(i for i, r in enumerate(self.roles) if r != EMPTY)

    @property
    def n_tsv(self):
        return sum(1 for r in self.roles if r != EMPTY)

    @property
    def f_occ(self):
        """Sparsity factor: occupied fraction of the grid."""
        return self.n_tsv / (self.rows * self.cols)

    @property
    def solvable(self):
        """True when an electrical solve is meaningful (>=1 signal, >=1 ground)."""
        return bool(self.signal_cells) and bool(self.ground_cells)

    def cell_rc(self, index):
        return divmod(index, self.cols)

    def to_dict(self):
        return {"rows": self.rows, "cols": self.cols, "roles": list(self.roles)}

    @classmethod
    def from_dict(cls, d):
        return cls(rows=int(d["rows"]), cols=int(d["cols"]), roles=tuple(d["roles"]))


def build_layout(rows, cols, signal_cells, ground_cells):
    """Build a layout from disjoint signal/ground index sets; the rest is Empty."""
    signal_cells = set(signal_cells)
    ground_cells = set(ground_cells)
    overlap = signal_cells & ground_cells
    if overlap:
        raise LayoutError(f"signal/ground sets overlap at cells {sorted(overlap)}")
    n = rows * cols
    for i in signal_cells | ground_cells:
        if not 0 <= i < n:
            raise LayoutError(f"cell index {i} out of range for {rows}x{cols} grid")
    roles = [EMPTY] * n
    for i in signal_cells:
        roles[i] = SIGNAL
    for i in ground_cells:
        roles[i] = GROUND
    return TsvLayout(rows=rows, cols=cols, roles=tuple(roles))


@dataclass(frozen=True)
class GeometryMaterials:
    """TSV geometry plus electrical and thermal material constants.

    Lengths are in micrometers; conductivities in S/m; permittivities and
    permeability are relative. Thermal conductivities in W/mK, densities in
    kg/m^3, specific heats in J/kgK. Doping and intrinsic concentration in
    cm^-3. Substrate span defaults (l_s, w_s <= 0) are resolved per layout.
    """

    r_cond: float = 5.0
    p_int: float = 60.0
    h_int: float = 100.0
    t_ins: float = 0.5
    h_imd: float = 1.0
    l_s: float = 0.0
    w_s: float = 0.0
    sigma_s: float = 10.0
    sigma_cu: float = 5.8e7
    eps_s: float = 11.7
    eps_ins: float = 4.0
    eps_imd: float = 4.0
    mu_r_cond: float = 1.0
    n_a: float = 1e15
    n_i: float = 1.45e10
    temperature: float = 300.0
    k_boltzmann: float = constants.k
    q_charge: float = constants.e
    k_v: float = 400.0
    k_l: float = 1.4
    k_s: float = 150.0
    rho_v: float = 8960.0
    rho_l: float = 2200.0
    rho_s: float = 2330.0
    cp_v: float = 385.0
    cp_l: float = 745.0
    cp_s: float = 700.0

    def __post_init__(self):
        for name in ("r_cond", "p_int", "h_int", "t_ins", "h_imd"):
            if getattr(self, name) <= 0:
                raise GeometryError(f"{name} must be > 0")
        if self.t_ins >= self.p_int / 2 - self.r_cond:
            raise GeometryError(
                "liner overlap: t_ins must be < p_int/2 - r_cond "
                f"({self.t_ins} >= {self.p_int / 2 - self.r_cond})"
            )
        if not (self.n_a > self.n_i > 0):
            raise GeometryError("require N_A > n_i > 0")
        for name in ("sigma_s", "sigma_cu", "k_v", "k_l", "k_s"):
            if getattr(self, name) <= 0:
                raise GeometryError(f"{name} must be > 0")

    # SI conversions used by the solvers
    @property
    def r_m(self):
        return self.r_cond * UM

    @property
    def pitch_m(self):
        return self.p_int * UM

    @property
    def height_m(self):
        return self.h_int * UM

    @property
    def t_ins_m(self):
        return self.t_ins * UM

    @property
    def h_imd_m(self):
        return self.h_imd * UM

    @property
    def mu_cond(self):
        return constants.mu_0 * self.mu_r_cond

    def substrate_span(self, layout):
        """(l_s, w_s) in um, defaulting to the smallest span containing the array."""
        side = max(layout.rows, layout.cols) * self.p_int
        l_s = self.l_s if self.l_s > 0 else side
        w_s = self.w_s if self.w_s > 0 else side
        return l_s, w_s

    def with_updates(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing positive frequencies in Hz."""

    points: tuple

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        if not pts:
            raise ValueError("frequency grid is empty")
        if any(p <= 0 for p in pts):
            raise ValueError("frequencies must be > 0")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("frequencies must be strictly increasing")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def index_of(self, f):
        arr = np.asarray(self.points)
        i = int(np.argmin(np.abs(arr - f)))
        if not math.isclose(arr[i], f, rel_tol=1e-9, abs_tol=1e-3):
            raise ValueError(f"frequency {f} not on grid")
        return i

    @classmethod
    def linspace(cls, start=1e9, stop=100e9, num=100):
        return cls(points=tuple(np.linspace(start, stop, num)))


class D4(enum.Enum):
    """The eight rigid symmetries of the square grid."""

    IDENTITY = "identity"
    ROT90 = "rot90"
    ROT180 = "rot180"
    ROT270 = "rot270"
    MIRROR_V = "mirror_v"  # flip about the vertical axis (reverse columns)
    MIRROR_H = "mirror_h"  # flip about the horizontal axis (reverse rows)
    MIRROR_D = "mirror_d"  # main-diagonal transpose
    MIRROR_A = "mirror_a"  # anti-diagonal transpose


_SQUARE_ONLY = {D4.ROT90, D4.ROT270, D4.MIRROR_D, D4.MIRROR_A}


def _source_rc(t, r, c, rows, cols):
    """(row, col) in the source layout feeding destination cell (r, c)."""
    if t is D4.IDENTITY:
        return r, c
    if t is D4.ROT90:
        return rows - 1 - c, r
    if t is D4.ROT180:
        return rows - 1 - r, cols - 1 - c
    if t is D4.ROT270:
        return c, cols - 1 - r
    if t is D4.MIRROR_V:
        return r, cols - 1 - c
    if t is D4.MIRROR_H:
        return rows - 1 - r, c
    if t is D4.MIRROR_D:
        return c, r
    if t is D4.MIRROR_A:
        return cols - 1 - c, rows - 1 - r
    raise ValueError(f"unknown transform {t}")


def source_index_map(t, rows, cols):
    """dest index -> source index permutation for transform t."""
    if t in _SQUARE_ONLY and rows != cols:
        raise LayoutError(f"{t.value} requires a square grid, got {rows}x{cols}")
    out = []
    for r in range(rows):
        for c in range(cols):
            sr, sc = _source_rc(t, r, c, rows, cols)
            out.append(sr * cols + sc)
    return tuple(out)


def cell_destination_map(t, rows, cols):
    """source index -> dest index permutation (inverse of source_index_map)."""
    src = source_index_map(t, rows, cols)
    dest = [0] * len(src)
    for d, s in enumerate(src):
        dest[s] = d
    return tuple(dest)


def apply_d4(layout, t):
    """Apply a D4 transform to a layout; the role multiset is preserved."""
    src = source_index_map(t, layout.rows, layout.cols)
    return TsvLayout(
        rows=layout.rows,
        cols=layout.cols,
        roles=tuple(layout.roles[s] for s in src),
    )


def canonical_form(layout):
    """Lexicographically smallest role sequence over the 8 D4 variants."""
    if layout.rows != layout.cols:
        raise LayoutError("canonical form requires a square grid")
    best = min(apply_d4(layout, t).roles for t in D4)
    return TsvLayout(rows=layout.rows, cols=layout.cols, roles=best)


def orbit(layout):
    """Distinct layouts in the D4 orbit of `layout`."""
    seen = {}
    for t in D4:
        v = apply_d4(layout, t)
        seen[v.roles] = v
    return list(seen.values())


def cell_centers_um(layout, g):
    """(n_cells, 2) array of cell-center coordinates in um on the pitch grid."""
    p = g.p_int
    xy = np.empty((layout.rows * layout.cols, 2))
    for i in range(layout.rows * layout.cols):
        r, c = layout.cell_rc(i)
        xy[i] = (c * p, r * p)
    return xy


def pairwise_distances(layout, g):
    """Center-to-center distances (um) between occupied cells.

    Returns (matrix, cell_indices): matrix[i, j] is the distance between the
    i-th and j-th occupied cells in ascending cell-index order.
    """
    occ = layout.occupied_cells
    if len(occ) < 2:
        raise LayoutError("need at least 2 occupied cells for distances")
    xy = cell_centers_um(layout, g)[list(occ)]
    diff = xy[:, None, :] - xy[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1)), occ
