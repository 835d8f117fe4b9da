"""Per-unit-length RLCG extraction for TSV arrays.

Implements the coaxial oxide+depletion capacitance, partial self/mutual
inductances against a reference conductor, substrate C/G via the inverse
inductance identity, skin-effect conductor impedance, lumped inter-metal
dielectric coupling, and the Schur-complement ground reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants, special

from tsvnet.core import GROUND, UM, GeometryError, LayoutError

EPS0 = constants.epsilon_0
MU0 = constants.mu_0

#: relative rank tolerance below which a ground block is treated as singular
SINGULAR_RTOL = 1e-12


class SingularGroundBlock(np.linalg.LinAlgError):
    """The ground sub-block cannot be eliminated (rank-deficient)."""


class NonPhysicalParameters(ValueError):
    """No physical root exists for the requested parameter combination."""


def _depletion_lhs(g):
    """Constant side of the sidewall depletion equation, in m^2."""
    na_m3 = g.n_a * 1e6
    return (
        4.0 * EPS0 * g.eps_s * g.k_boltzmann * g.temperature
        / (g.q_charge**2 * na_m3)
        * math.log(g.n_a / g.n_i)
    )


def _depletion_rhs(t, r_out):
    """Geometric side of the depletion equation; t and r_out in meters."""
    if t == 0.0:
        return 0.0
    return (
        -0.5 * t * t
        - t * r_out
        + (r_out + t) ** 2 * math.log((r_out + t) / r_out)
    )


def depletion_thickness(g):
    """Depletion thickness (um): root of the sidewall MOS-varactor equation.

    Bracketed bisection refined by Newton steps; converged to
    |dt|/t < 1e-12.
    """
    r_out = g.r_m + g.t_ins_m
    lhs = _depletion_lhs(g)
    if lhs <= 0.0:
        return 0.0

    def resid(t):
        return _depletion_rhs(t, r_out) - lhs

    lo, hi = 0.0, 10.0 * r_out
    if resid(hi) < 0.0:
        raise NonPhysicalParameters(
            "no depletion root in bracket: parameters imply depletion wider "
            f"than {hi / UM:.3g} um"
        )
    # bisection to a rough bracket
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if resid(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    # Newton polish; derivative of the geometric side
    t = 0.5 * (lo + hi)
    for _ in range(50):
        d = 2.0 * (r_out + t) * math.log((r_out + t) / r_out) - t
        if d == 0.0:
            break
        step = resid(t) / d
        t_new = t - step
        if t_new < lo or t_new > hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-12 * max(t_new, 1e-30):
            t = t_new
            break
        t = t_new
    return t / UM


def oxide_depletion_capacitance(g, t_dep):
    """Series oxide+depletion coaxial capacitance per unit length (F/m).

    t_dep in um. Standard two-layer coax with an eps0 prefactor.
    """
    if t_dep < 0:
        raise GeometryError("t_dep must be >= 0")
    r = g.r_m
    r_ox = r + g.t_ins_m
    r_dep = r_ox + t_dep * UM
    denom = g.eps_s * math.log(r_ox / r)
    if t_dep > 0:
        denom += g.eps_ins * math.log(r_dep / r_ox)
    return 2.0 * math.pi * EPS0 * g.eps_ins * g.eps_s / denom


def partial_inductance_matrix(distances, indices, reference, radii_m):
    """Partial inductance matrix (H/m) against a reference conductor.

    distances: (n, n) center distances in um over occupied cells `indices`.
    reference: cell index of the reference conductor (must be in `indices`).
    radii_m: per-conductor radius in meters (scalar or length-n array),
    ordered like `indices`. Returns (L, kept_indices) where L spans the
    non-reference conductors.
    """
    indices = list(indices)
    if reference not in indices:
        raise LayoutError(f"reference cell {reference} is not occupied")
    radii = np.broadcast_to(np.asarray(radii_m, dtype=float), (len(indices),))
    ref_pos = indices.index(reference)
    keep = [k for k in range(len(indices)) if k != ref_pos]
    d_ref = distances[keep, ref_pos] * UM
    if np.any(d_ref <= 0):
        raise GeometryError("zero distance to the reference conductor")
    r_ref = radii[ref_pos]
    r_kept = radii[keep]
    n = len(keep)
    coef = MU0 / (2.0 * math.pi)
    # mutual: ln(d_i,ref * d_j,ref / (r_ref * d_ij))
    d_ij = distances[np.ix_(keep, keep)] * UM
    with np.errstate(divide="ignore"):
        L = coef * np.log(
            np.outer(d_ref, d_ref) / (r_ref * np.where(d_ij > 0, d_ij, 1.0))
        )
    # self: ln(d_i,ref^2 / (r_i * r_ref))
    L[np.diag_indices(n)] = coef * np.log(d_ref**2 / (r_kept * r_ref))
    return L, [indices[k] for k in keep]


def layout_partial_inductance(layout, g, reference):
    """Partial inductance matrix (H/m) for a layout against a reference cell."""
    distances, occ = _distances(layout, g)
    return partial_inductance_matrix(distances, occ, reference, g.r_m)


def schur_reduce(full, signal_idx, ground_idx):
    """Eliminate ground rows/cols: A_ss - A_sg A_gg^{-1} A_gs.

    signal_idx/ground_idx are positions into `full`. With no ground
    positions the signal block is returned unchanged.
    """
    full = np.asarray(full)
    s = list(signal_idx)
    gnd = list(ground_idx)
    a_ss = full[np.ix_(s, s)]
    if not gnd:
        return a_ss.copy()
    a_sg = full[np.ix_(s, gnd)]
    a_gs = full[np.ix_(gnd, s)]
    a_gg = full[np.ix_(gnd, gnd)]
    sv = np.linalg.svd(a_gg, compute_uv=False)
    if sv[-1] <= SINGULAR_RTOL * sv[0]:
        raise SingularGroundBlock(
            f"ground block is singular to relative tolerance {SINGULAR_RTOL:g} "
            f"(condition number {sv[0] / max(sv[-1], 1e-300):.3g})"
        )
    reduced = a_ss - a_sg @ np.linalg.solve(a_gg, a_gs)
    return 0.5 * (reduced + reduced.T)


def substrate_cg(l_eff, g):
    """(C_sub_eff, G_sub_eff) from the shared inverse-inductance identity."""
    l_eff = np.asarray(l_eff)
    l_inv = np.linalg.inv(l_eff)
    l_inv = 0.5 * (l_inv + l_inv.T)
    c = MU0 * EPS0 * g.eps_s * l_inv
    gm = MU0 * g.sigma_s * l_inv
    return c, gm


def conductor_internal_impedance(omega, g):
    """Frequency-dependent internal impedance per unit length (Ohm/m).

    Skin-effect cylindrical-wire model via complex-argument modified Bessel
    functions; the DC limit 1/(sigma*pi*r^2) is returned at omega = 0.
    """
    if omega < 0:
        raise ValueError("omega must be >= 0")
    r = g.r_m
    r_dc = 1.0 / (g.sigma_cu * math.pi * r * r)
    if omega == 0.0:
        return complex(r_dc)
    chi = r * np.sqrt(1j * omega * g.mu_cond * g.sigma_cu)
    if abs(chi) < 1e-6:
        return complex(r_dc)
    # exponentially scaled I0/I1: the scaling factors cancel in the ratio
    ratio = special.ive(0, chi) / special.ive(1, chi)
    return complex((chi / g.sigma_cu) / (2.0 * math.pi * r * r) * ratio)


def imd_capacitance(d_ij, g):
    """Lumped inter-metal dielectric coupling capacitance (F) at distance d_ij (um).

    Parallel-wire per-unit-length value scaled by the IMD layer height.
    """
    d = d_ij * UM
    if d <= 2.0 * g.r_m:
        raise GeometryError(
            f"conductor overlap: d_ij = {d_ij} um <= 2*r_cond = {2 * g.r_cond} um"
        )
    c_per_len = math.pi * EPS0 * g.eps_imd / math.acosh(d / (2.0 * g.r_m))
    return c_per_len * g.h_imd_m


@dataclass(frozen=True)
class RlcgModel:
    """Reduced per-unit-length model over the signal conductors."""

    signal_cells: tuple
    l_eff: np.ndarray
    c_sub_eff: np.ndarray
    g_sub_eff: np.ndarray
    c_oxdep: np.ndarray
    z_cond_grid: np.ndarray
    grid: object
    c_imd: tuple
    t_dep: float
    geometry: object

    @property
    def signal_count(self):
        return len(self.signal_cells)

    def z_cond(self, omega):
        return conductor_internal_impedance(omega, self.geometry)


def _reduced_matrix(distances, occ, reference, signal_cells, radii_m):
    """Partial-inductance-form matrix reduced to the signal conductors."""
    full, kept = partial_inductance_matrix(distances, occ, reference, radii_m)
    sig_pos = [kept.index(c) for c in signal_cells]
    gnd_pos = [k for k in range(len(kept)) if kept[k] not in signal_cells]
    return schur_reduce(full, sig_pos, gnd_pos)


def extract_rlcg(layout, g, grid, reference=None):
    """Assemble the full reduced RLCG model for a layout over a frequency grid.

    reference: cell index of the reference ground conductor; defaults to the
    lowest-index ground cell. Ground conductors other than the reference are
    eliminated by Schur reduction.
    """
    if not layout.solvable:
        raise LayoutError("layout needs at least one signal and one ground cell")
    if reference is None:
        reference = min(layout.ground_cells)
    elif layout.roles[reference] != GROUND:
        raise LayoutError(f"reference cell {reference} is not a ground cell")
    distances, occ = _distances(layout, g)
    signal_cells = layout.signal_cells

    t_dep = depletion_thickness(g)
    r_eff_m = g.r_m + g.t_ins_m + t_dep * UM

    l_eff = _reduced_matrix(distances, occ, reference, signal_cells, g.r_m)
    # the field boundary for substrate coupling is the effective radius
    # (conductor + liner + depletion)
    l_geo = _reduced_matrix(distances, occ, reference, signal_cells, r_eff_m)
    c_sub, g_sub = substrate_cg(l_geo, g)

    c_ox = oxide_depletion_capacitance(g, t_dep)
    c_oxdep = np.full(len(signal_cells), c_ox)

    z_grid = np.array(
        [conductor_internal_impedance(2.0 * math.pi * f, g) for f in grid],
        dtype=complex,
    )

    # lumped IMD couplings between adjacent signal pairs (d <= p*sqrt(2) + tol)
    occ_list = list(occ)
    adjacency = g.p_int * math.sqrt(2.0) * (1.0 + 1e-9)
    c_imd = []
    for a in range(len(signal_cells)):
        for b in range(a + 1, len(signal_cells)):
            ia = occ_list.index(signal_cells[a])
            ib = occ_list.index(signal_cells[b])
            d = distances[ia, ib]
            if d <= adjacency:
                c_imd.append((a, b, imd_capacitance(d, g)))

    return RlcgModel(
        signal_cells=tuple(signal_cells),
        l_eff=l_eff,
        c_sub_eff=c_sub,
        g_sub_eff=g_sub,
        c_oxdep=c_oxdep,
        z_cond_grid=z_grid,
        grid=grid,
        c_imd=tuple(c_imd),
        t_dep=t_dep,
        geometry=g,
    )


def _distances(layout, g):
    from tsvnet.core import pairwise_distances

    return pairwise_distances(layout, g)


def model_debug_dict(m):
    """JSON-ready dump of all matrices (row-major, SI units) for goldens."""
    return {
        "signal_cells": list(m.signal_cells),
        "t_dep_um": m.t_dep,
        "L_eff_H_per_m": m.l_eff.tolist(),
        "C_sub_eff_F_per_m": m.c_sub_eff.tolist(),
        "G_sub_eff_S_per_m": m.g_sub_eff.tolist(),
        "C_oxdep_F_per_m": m.c_oxdep.tolist(),
        "Z_cond_Ohm_per_m": [[z.real, z.imag] for z in m.z_cond_grid],
        "C_imd_F": [[i, j, c] for i, j, c in m.c_imd],
    }
