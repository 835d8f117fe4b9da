"""Homogenized anisotropic thermal model and electrothermal coupling.

Unit-cell and array-level effective thermal conductivities, equivalent
volumetric heat capacity, S-parameter-derived volumetric heat sources, a
cell-centered finite-volume steady-state solver with convection boundary
conditions, and the electrothermal fixed-point loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import LinearOperator, cg, spsolve

from tsvnet.core import FrequencyGrid, GeometryError, UM
from tsvnet.em import PASSIVITY_TOL, solve_sweep

RHO_CU_0 = 1.7e-8  # Ohm*m at 300 K
ALPHA_CU = 3.9e-3  # 1/K
T_REF = 300.0

DEFAULT_GRID_SHAPE = (41, 41, 21)

FACES = ("x-", "x+", "y-", "y+", "z-", "z+")


class ThermalError(RuntimeError):
    """Ill-posed or non-convergent thermal problem."""


@dataclass(frozen=True)
class ThermalBlock:
    """Homogenized anisotropic block replacing the TSV-resolved geometry."""

    k_x_eq: float
    k_y_eq: float
    k_z_eq: float
    rho_cp_eq: float
    l_s: float  # um, along y (rows)
    w_s: float  # um, along x (cols)
    h: float  # um
    f_occ: float

    def __post_init__(self):
        if not 0.0 <= self.f_occ <= 1.0:
            raise GeometryError("f_occ must be in (0, 1]")


@dataclass(frozen=True)
class HeatSourceField:
    """Per-TSV volumetric generation mapped to footprint columns.

    sources: tuple of (cell_index, power_w, g_cond_w_per_m3). Boundary
    conditions: face -> ("adiabatic",) or ("convection", h, t_inf).
    """

    sources: tuple
    t_amb: float
    boundary: dict
    layout: object
    geometry: object

    def __post_init__(self):
        for _, p, g_vol in self.sources:
            if p < 0 or g_vol < 0:
                raise GeometryError("heat generation must be >= 0")
        for face in FACES:
            bc = self.boundary.get(face, ("adiabatic",))
            if bc[0] == "convection" and bc[1] <= 0:
                raise GeometryError(f"convection h must be > 0 on face {face}")

    @property
    def total_power(self):
        return sum(p for _, p, _ in self.sources)


@dataclass(frozen=True)
class TemperatureField:
    """Cell-centered temperatures on the structured solver grid."""

    temps: np.ndarray  # (nx, ny, nz), K
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    residual: float
    energy_imbalance: float

    @property
    def t_max(self):
        return float(self.temps.max())


def unit_cell_areas(g):
    """(s_v, s_l, s_s) cross-sectional areas of the square unit cell, um^2."""
    r, t = g.r_cond, g.t_ins
    s_v = math.pi * r * r
    s_l = math.pi * ((r + t) ** 2 - r * r)
    s_s = (r + t) ** 2 * (4.0 - math.pi)
    return s_v, s_l, s_s


def vertical_unit_etc(g):
    """Vertical ETC of one TSV unit cell: area-weighted mean (W/mK)."""
    s_v, s_l, s_s = unit_cell_areas(g)
    cell = 4.0 * (g.r_cond + g.t_ins) ** 2
    return (g.k_v * s_v + g.k_l * s_l + g.k_s * s_s) / cell


def _lateral_integrand(x, g):
    r = g.r_cond
    rt = r + g.t_ins
    w_v = 2.0 * math.sqrt(max(r * r - x * x, 0.0))
    w_l = 2.0 * math.sqrt(max(rt * rt - x * x, 0.0)) - w_v
    w_s = 2.0 * rt - w_v - w_l
    width = 2.0 * rt
    return 1.0 / (w_v / width / g.k_v + w_l / width / g.k_l + w_s / width / g.k_s)


def lateral_unit_etc(g, rtol=1e-9):
    """Lateral ETC of one TSV unit cell by adaptive quadrature.

    The series-resistance integrand uses fractional chord widths so the
    uniform-material identity holds exactly. The chord widths have a
    square-root derivative singularity at x = r, handled with an interior
    breakpoint for the adaptive rule.
    """
    rt = g.r_cond + g.t_ins
    val, err = integrate.quad(
        _lateral_integrand, 0.0, rt, args=(g,),
        points=[min(g.r_cond, rt)], epsrel=rtol, limit=200,
    )
    if err > 1e-6 * abs(val):
        raise ThermalError(
            f"lateral ETC quadrature not converged: {err / abs(val):.3g}"
        )
    return val / rt


def volumetric_heat_capacity(g):
    """Equivalent volumetric heat capacity of one unit cell, J/(m^3 K)."""
    s_v, s_l, s_s = unit_cell_areas(g)
    cell = 4.0 * (g.r_cond + g.t_ins) ** 2
    return (
        g.rho_v * g.cp_v * s_v + g.rho_l * g.cp_l * s_l + g.rho_s * g.cp_s * s_s
    ) / cell


def _parallel(a, b):
    if a <= 0.0:
        return b
    return a * b / (a + b)


def array_etc(layout, g):
    """Sparsity-aware anisotropic ETCs for the whole substrate block."""
    l_s, w_s = g.substrate_span(layout)
    m_rows, n_cols = layout.rows, layout.cols
    if l_s < n_cols * g.p_int or w_s < m_rows * g.p_int:
        raise GeometryError("substrate span does not contain the TSV array")
    n_tsv = layout.n_tsv
    f_occ = layout.f_occ
    cell_side = 2.0 * (g.r_cond + g.t_ins)
    rho_cp_cell = volumetric_heat_capacity(g)
    rho_cp_sub = g.rho_s * g.cp_s

    if n_tsv == 0:
        return ThermalBlock(
            k_x_eq=g.k_s,
            k_y_eq=g.k_s,
            k_z_eq=g.k_s,
            rho_cp_eq=rho_cp_sub,
            l_s=l_s,
            w_s=w_s,
            h=g.h_int,
            f_occ=1.0,
        )

    eff_side = cell_side * math.sqrt(f_occ)
    if n_cols * eff_side > w_s or m_rows * eff_side > l_s:
        raise GeometryError("effective TSV footprint exceeds the substrate span")

    k_lat = lateral_unit_etc(g)
    k_vert = vertical_unit_etc(g)

    k_x = _parallel(
        g.k_s * (w_s - n_cols * eff_side) / w_s,
        k_lat * n_cols * l_s * eff_side / (m_rows * eff_side * w_s),
    )
    k_y = _parallel(
        g.k_s * (l_s - m_rows * eff_side) / l_s,
        k_lat * m_rows * w_s * eff_side / (n_cols * eff_side * l_s),
    )
    k_z = g.k_s + (cell_side * cell_side) / (l_s * w_s) * n_tsv * (k_vert - g.k_s)

    cell_area = cell_side * cell_side
    frac = min(n_tsv * cell_area / (l_s * w_s), 1.0)
    rho_cp = frac * rho_cp_cell + (1.0 - frac) * rho_cp_sub
    return ThermalBlock(
        k_x_eq=k_x,
        k_y_eq=k_y,
        k_z_eq=k_z,
        rho_cp_eq=rho_cp,
        l_s=l_s,
        w_s=w_s,
        h=g.h_int,
        f_occ=f_occ,
    )


def copper_resistivity(t):
    """Temperature-dependent copper resistivity (Ohm*m)."""
    if t <= 0:
        raise ValueError("temperature must be > 0")
    return RHO_CU_0 * (1.0 + ALPHA_CU * (t - T_REF))


NATURAL_CONVECTION_H = 10.0  # W/m^2K, still-air convention
FORCED_CONVECTION_H = 500.0


def boundary_preset(name):
    """Boundary-condition presets for the benchmark scenarios."""
    t_inf = T_REF
    if name in ("natural-full", "natural-sparse"):
        bc = {f: ("convection", NATURAL_CONVECTION_H, t_inf) for f in FACES}
        bc["z-"] = ("adiabatic",)
        return bc
    if name == "forced-top":
        bc = {f: ("adiabatic",) for f in FACES}
        bc["z+"] = ("convection", FORCED_CONVECTION_H, t_inf)
        return bc
    raise ValueError(f"unknown boundary preset {name!r}")


def heat_sources_from_s(block, f, p_in, excited_ports, g, layout,
                        boundary=None, t_amb=T_REF):
    """Volumetric heat sources from the S-parameter power deficit.

    For each excited port j: P_loss = P_in * (1 - sum_i |S_ij|^2), assigned
    to the signal TSV owning the port and normalized by conductor volume.
    """
    if p_in <= 0:
        raise ValueError("P_in must be > 0")
    s = block.at(f)
    n_ports = s.shape[0]
    per_tsv = {}
    for j in excited_ports:
        if not 0 <= j < n_ports:
            raise ValueError(f"excited port {j} out of range")
        deficit = 1.0 - float((np.abs(s[:, j]) ** 2).sum())
        if deficit < -PASSIVITY_TOL:
            raise ThermalError(
                f"passivity violation in column {j}: deficit {deficit:.3g}"
            )
        p_loss = p_in * max(deficit, 0.0)
        cell = block.signal_cells[j % block.n_signals]
        per_tsv[cell] = per_tsv.get(cell, 0.0) + p_loss
    volume = math.pi * g.r_m**2 * g.height_m
    sources = tuple(
        (cell, p, p / volume) for cell, p in sorted(per_tsv.items())
    )
    if boundary is None:
        boundary = boundary_preset("natural-full")
    return HeatSourceField(
        sources=sources, t_amb=t_amb, boundary=boundary, layout=layout, geometry=g
    )


def _footprint_cells(src, tb, xc, yc):
    """Map TSV powers onto solver columns; returns power per (ix, iy)."""
    g = src.geometry
    layout = src.layout
    p = g.p_int
    eff_side = 2.0 * (g.r_cond + g.t_ins) * math.sqrt(max(layout.f_occ, 1e-12))
    x0 = (tb.w_s - layout.cols * p) / 2.0
    y0 = (tb.l_s - layout.rows * p) / 2.0
    columns = []
    for cell, power, _ in src.sources:
        r, c = layout.cell_rc(cell)
        cx = x0 + (c + 0.5) * p
        cy = y0 + (r + 0.5) * p
        half = eff_side / 2.0
        ix = np.where(np.abs(xc - cx) <= half)[0]
        iy = np.where(np.abs(yc - cy) <= half)[0]
        if len(ix) == 0:
            ix = np.array([int(np.argmin(np.abs(xc - cx)))])
        if len(iy) == 0:
            iy = np.array([int(np.argmin(np.abs(yc - cy)))])
        columns.append((ix, iy, power))
    return columns


def solve_steady_state(tb, src, shape=DEFAULT_GRID_SHAPE):
    """Steady-state anisotropic conduction with Robin/adiabatic faces.

    Cell-centered finite volume on an (nx, ny, nz) grid; direct sparse
    solve. Raises ThermalError for the all-adiabatic case with net heat.
    """
    nx, ny, nz = shape
    bc = {f: src.boundary.get(f, ("adiabatic",)) for f in FACES}
    if all(b[0] == "adiabatic" for b in bc.values()) and src.total_power > 0:
        raise ThermalError("all faces adiabatic with net heat input: singular")

    wx, ly, hz = tb.w_s * UM, tb.l_s * UM, tb.h * UM
    dx, dy, dz = wx / nx, ly / ny, hz / nz
    xc = (np.arange(nx) + 0.5) * dx
    yc = (np.arange(ny) + 0.5) * dy
    zc = (np.arange(nz) + 0.5) * dz
    kx, ky, kz = tb.k_x_eq, tb.k_y_eq, tb.k_z_eq

    n = nx * ny * nz
    grid_idx = np.arange(n).reshape(nx, ny, nz)

    rows, cols, vals = [], [], []
    rhs = np.zeros(n)

    def stamp_pairs(p, q, gcond):
        rows.extend((p, q, p, q))
        cols.extend((p, q, q, p))
        vals.extend((
            np.full(p.size, gcond),
            np.full(p.size, gcond),
            np.full(p.size, -gcond),
            np.full(p.size, -gcond),
        ))

    # interior face conductances
    gx = kx * dy * dz / dx
    gy = ky * dx * dz / dy
    gz = kz * dx * dy / dz
    stamp_pairs(grid_idx[:-1, :, :].ravel(), grid_idx[1:, :, :].ravel(), gx)
    stamp_pairs(grid_idx[:, :-1, :].ravel(), grid_idx[:, 1:, :].ravel(), gy)
    stamp_pairs(grid_idx[:, :, :-1].ravel(), grid_idx[:, :, 1:].ravel(), gz)

    face_defs = {
        "x-": (grid_idx[0, :, :].ravel(), kx, dy * dz, dx),
        "x+": (grid_idx[-1, :, :].ravel(), kx, dy * dz, dx),
        "y-": (grid_idx[:, 0, :].ravel(), ky, dx * dz, dy),
        "y+": (grid_idx[:, -1, :].ravel(), ky, dx * dz, dy),
        "z-": (grid_idx[:, :, 0].ravel(), kz, dx * dy, dz),
        "z+": (grid_idx[:, :, -1].ravel(), kz, dx * dy, dz),
    }
    # boundary faces: half-cell conduction in series with the convection film
    for face, (cells, kax, area, dist) in face_defs.items():
        kind = bc[face]
        if kind[0] != "convection":
            continue
        h_conv, t_inf = kind[1], kind[2]
        u = area / (dist / 2.0 / kax + 1.0 / h_conv)
        rows.append(cells)
        cols.append(cells)
        vals.append(np.full(cells.size, u))
        rhs[cells] += u * t_inf

    # sources: distribute each TSV's power uniformly over its footprint column
    for ix, iy, power in _footprint_cells(src, tb, xc / UM, yc / UM):
        per_cell = power / (len(ix) * len(iy) * nz)
        for i in ix:
            rhs[grid_idx[i][np.ix_(iy, np.arange(nz))]] += per_cell

    a = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    # SPD system: Jacobi-preconditioned CG, direct factorization as fallback
    diag = a.diagonal()
    precond = LinearOperator(a.shape, matvec=lambda v: v / diag)
    t, info = cg(a, rhs, rtol=1e-13, atol=0.0, M=precond, maxiter=20 * n)
    resid = np.linalg.norm(a @ t - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if info != 0 or resid > 1e-8:
        t = spsolve(a.tocsc(), rhs, permc_spec="MMD_AT_PLUS_A")
        resid = np.linalg.norm(a @ t - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if resid > 1e-8:
        raise ThermalError(f"linear solve residual {resid:.3g} above tolerance")

    # energy balance: generated power vs convective outflow
    outflow = 0.0
    for face, (cells, kax, area, dist) in face_defs.items():
        kind = bc[face]
        if kind[0] != "convection":
            continue
        h_conv, t_inf = kind[1], kind[2]
        u = area / (dist / 2.0 / kax + 1.0 / h_conv)
        outflow += float((u * (t[cells] - t_inf)).sum())
    total = src.total_power
    imbalance = abs(outflow - total) / total if total > 0 else 0.0

    temps = t.reshape(nx, ny, nz)
    return TemperatureField(
        temps=temps, x=xc, y=yc, z=zc, residual=resid, energy_imbalance=imbalance
    )


@dataclass(frozen=True)
class Excitation:
    """Single-frequency excitation for the electrothermal loop."""

    frequency: float = 15e9
    p_in: float = 0.1  # W
    excited_ports: tuple = (0,)


@dataclass
class ElectrothermalResult:
    temperature: TemperatureField
    s_block: object
    iterations: int
    converged: bool
    t_max_history: list = field(default_factory=list)


def electrothermal_fixed_point(layout, g, grid, excitation,
                               boundary=None, shape=DEFAULT_GRID_SHAPE,
                               tol_k=0.1, max_iter=20, workers=None):
    """Coupled loop: solve S at sigma_Cu(T), map losses, solve T, update.

    Copper conductivity is updated globally from the domain maximum
    temperature via the linear resistivity law; converged when the change
    in T_max drops below tol_k.
    """
    if not layout.solvable:
        raise ThermalError("layout not electrically solvable")
    if boundary is None:
        boundary = boundary_preset("natural-full")
    f_ex = excitation.frequency
    sub_grid = FrequencyGrid((f_ex,))
    if excitation.p_in == 0.0:
        block = solve_sweep(layout, g, sub_grid, workers=workers)
        return ElectrothermalResult(
            _ambient_field(layout, g, shape), block, 1, True, [T_REF]
        )
    t_max = T_REF
    history = []
    growth_streak = 0
    prev_delta = None
    field_out = None
    block = None
    g_cur = g
    for it in range(1, max_iter + 1):
        sigma = 1.0 / copper_resistivity(t_max)
        g_cur = g_cur.with_updates(sigma_cu=sigma)
        block = solve_sweep(layout, g_cur, sub_grid, workers=workers)
        src = heat_sources_from_s(
            block, f_ex, excitation.p_in, excitation.excited_ports, g_cur,
            layout, boundary=boundary,
        )
        if src.total_power <= 0.0:
            field_out = _ambient_field(layout, g_cur, shape)
            return ElectrothermalResult(field_out, block, it, True, [T_REF])
        tb = array_etc(layout, g_cur)
        field_out = solve_steady_state(tb, src, shape=shape)
        new_t_max = field_out.t_max
        delta = abs(new_t_max - t_max)
        history.append(new_t_max)
        t_max = new_t_max
        if delta < tol_k:
            return ElectrothermalResult(field_out, block, it, True, history)
        if prev_delta is not None and delta > prev_delta:
            growth_streak += 1
            if growth_streak >= 3:
                raise ThermalError(
                    f"electrothermal loop diverging: |dT| grew 3 times, last {delta:.3g} K"
                )
        else:
            growth_streak = 0
        prev_delta = delta
    return ElectrothermalResult(field_out, block, max_iter, False, history)


def _ambient_field(layout, g, shape):
    tb = array_etc(layout, g)
    nx, ny, nz = shape
    wx, ly, hz = tb.w_s * UM, tb.l_s * UM, tb.h * UM
    return TemperatureField(
        temps=np.full(shape, T_REF),
        x=(np.arange(nx) + 0.5) * wx / nx,
        y=(np.arange(ny) + 0.5) * ly / ny,
        z=(np.arange(nz) + 0.5) * hz / nz,
        residual=0.0,
        energy_imbalance=0.0,
    )


def temperature_csv_rows(field):
    """(x, y, z, T) rows for the structured-grid CSV export; x,y,z in m."""
    rows = []
    for i, x in enumerate(field.x):
        for j, y in enumerate(field.y):
            for k, z in enumerate(field.z):
                rows.append((x, y, z, field.temps[i, j, k]))
    return rows
