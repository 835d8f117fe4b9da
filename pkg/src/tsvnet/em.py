"""Frequency-domain multiconductor solve and electrical metrics.

Per frequency: series impedance and shunt admittance matrices from the
reduced RLCG model, exact transmission-line chain matrix via
eigendecomposition of ZY (dense matrix-exponential fallback), ABCD -> S
conversion against a real reference impedance, lumped IMD stamping at the
top ports, and NEXT/FEXT crosstalk aggregation.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from tsvnet.core import FrequencyGrid
from tsvnet.rlcg import extract_rlcg

RECIPROCITY_TOL = 1e-10
PASSIVITY_TOL = 1e-9
#: raw asymmetry above this aborts instead of symmetrizing
RAW_RECIPROCITY_LIMIT = 1e-8

DEFAULT_Z_REF = 50.0


class SolveError(RuntimeError):
    """A per-frequency solve failed; the message names the frequency."""


class PassivityViolation(SolveError):
    """Computed S-matrix violates passivity beyond tolerance."""


@dataclass(frozen=True)
class SParameterBlock:
    """Complex S-matrices over a frequency grid.

    Port order: all top ports in ascending signal-cell order, then all
    bottom ports in the same order. data has shape (F, 2*Ns, 2*Ns).
    """

    frequencies: FrequencyGrid
    signal_cells: tuple
    data: np.ndarray
    z_ref: float = DEFAULT_Z_REF

    @property
    def n_signals(self):
        return len(self.signal_cells)

    @property
    def ports(self):
        tops = [(c, "top") for c in self.signal_cells]
        bots = [(c, "bottom") for c in self.signal_cells]
        return tops + bots

    def at(self, f):
        return self.data[self.frequencies.index_of(f)]

    def top_port(self, v):
        return v

    def bottom_port(self, v):
        return self.n_signals + v


@dataclass(frozen=True)
class CrosstalkReport:
    """Aggregated NEXT/FEXT coupling at one frequency."""

    frequency: float
    victim_totals: np.ndarray
    worst_victim: int
    worst_next_db: float
    worst_fext_db: float
    average_db: float

    def to_dict(self):
        return {
            "frequency_hz": self.frequency,
            "victim_totals_linear": self.victim_totals.tolist(),
            "worst_victim": int(self.worst_victim),
            "worst_next_db": self.worst_next_db,
            "worst_fext_db": self.worst_fext_db,
            "average_crosstalk_db": self.average_db,
        }


def db(x):
    """Magnitude in dB: 20*log10(|x|)."""
    return 20.0 * np.log10(np.abs(x))


def per_unit_length_matrices(m, omega):
    """(Z, Y) per-unit-length matrices at angular frequency omega.

    Z = diag(Z_cond) + jw L_eff. The shunt path puts the oxide capacitance
    of each conductor in series with the substrate coupling network:
    Y = D (D + Y_sub)^{-1} Y_sub with D = jw diag(C_oxdep).
    """
    if omega <= 0:
        raise ValueError("omega must be > 0")
    n = m.signal_count
    z = 1j * omega * m.l_eff + np.diag(np.full(n, m.z_cond(omega)))
    d = 1j * omega * np.diag(m.c_oxdep)
    y_sub = m.g_sub_eff + 1j * omega * m.c_sub_eff
    try:
        y = d @ np.linalg.solve(d + y_sub, y_sub)
    except np.linalg.LinAlgError as e:
        raise SolveError(f"singular oxide+substrate combination: {e}") from e
    return z, 0.5 * (y + y.T)


@dataclass(frozen=True)
class ChainMatrix:
    """ABCD blocks of a 2n-port: V1 = A V2 + B I2, I1 = C V2 + D I2."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    @property
    def n(self):
        return self.a.shape[0]

    def cascade(self, other):
        return ChainMatrix(
            self.a @ other.a + self.b @ other.c,
            self.a @ other.b + self.b @ other.d,
            self.c @ other.a + self.d @ other.c,
            self.c @ other.b + self.d @ other.d,
        )

    def shunt_input(self, y_shunt):
        """Cascade [[I, 0], [Y, I]] (input-side shunt) before this chain."""
        return ChainMatrix(
            self.a, self.b,
            y_shunt @ self.a + self.c, y_shunt @ self.b + self.d,
        )


#: eigenvector condition number beyond which ZY is treated as defective
_EIG_COND_LIMIT = 1e10


def mtl_chain(z, y, h):
    """Exact multiconductor line chain matrix over length h (meters)."""
    if h < 0:
        raise ValueError("length must be >= 0")
    n = z.shape[0]
    if h == 0:
        eye = np.eye(n, dtype=complex)
        zero = np.zeros((n, n), dtype=complex)
        return ChainMatrix(eye, zero.copy(), zero.copy(), eye.copy())
    zy = z @ y
    lam, t = np.linalg.eig(zy)
    try:
        t_inv = np.linalg.inv(t)
    except np.linalg.LinAlgError:
        return _chain_via_expm(z, y, h)
    # 1-norm condition estimate; SVD-based cond would dominate the runtime
    cond = np.linalg.norm(t, 1) * np.linalg.norm(t_inv, 1)
    if not np.isfinite(cond) or cond > _EIG_COND_LIMIT:
        return _chain_via_expm(z, y, h)
    gamma = np.sqrt(lam.astype(complex))
    gamma = np.where(gamma.real < 0, -gamma, gamma)
    # A = cosh(Gh); B = sinh(Gh) G^{-1} Z; C = Z^{-1} G sinh(Gh); D = Z^{-1} cosh(Gh) Z
    # Each modal sandwich T diag(f) T^{-1} M is two scaled matmuls.
    ch_d = np.cosh(gamma * h)
    u = t_inv @ z
    v = np.linalg.solve(z, t)
    a = (t * ch_d) @ t_inv
    b = (t * (_sinh_over_x(gamma * h) * h)) @ u
    c = (v * (gamma * np.sinh(gamma * h))) @ t_inv
    d = (v * ch_d) @ u
    return ChainMatrix(a, b, c, d)


def _sinh_over_x(x):
    out = np.empty_like(x, dtype=complex)
    small = np.abs(x) < 1e-8
    out[small] = 1.0 + x[small] ** 2 / 6.0
    xs = x[~small]
    out[~small] = np.sinh(xs) / xs
    return out


def _chain_via_expm(z, y, h):
    """Dense matrix-exponential fallback for defective ZY products."""
    n = z.shape[0]
    zero = np.zeros((n, n), dtype=complex)
    sys = np.block([[zero, z], [y, zero]])
    m = expm(sys * h)
    return ChainMatrix(m[:n, :n], m[:n, n:], m[n:, :n], m[n:, n:])


def shunt_chain(y_shunt):
    """Chain matrix of a lumped shunt admittance network at the input side."""
    n = y_shunt.shape[0]
    eye = np.eye(n, dtype=complex)
    zero = np.zeros((n, n), dtype=complex)
    return ChainMatrix(eye, zero, np.asarray(y_shunt, dtype=complex), eye.copy())


def chain_to_s(chain, z_ref):
    """ABCD -> S with an identical real reference impedance at every port."""
    if z_ref <= 0:
        raise ValueError("reference impedance must be > 0")
    n = chain.n
    eye = np.eye(n, dtype=complex)
    a, b, c, d = chain.a, chain.b, chain.c, chain.d
    p = np.block(
        [[a + z_ref * c, b + z_ref * d], [eye, -z_ref * eye]]
    )
    q = np.block(
        [[a - z_ref * c, b - z_ref * d], [eye, z_ref * eye]]
    )
    try:
        # S = Q P^{-1} without forming the inverse: solve P^T S^T = Q^T
        return np.linalg.solve(p.T, q.T).T
    except np.linalg.LinAlgError as e:
        raise SolveError(f"singular ABCD->S conversion: {e}") from e


def imd_shunt_admittance(m, omega):
    """Top-node shunt admittance matrix from the lumped IMD couplings."""
    n = m.signal_count
    y = np.zeros((n, n), dtype=complex)
    for i, j, cap in m.c_imd:
        yb = 1j * omega * cap
        y[i, i] += yb
        y[j, j] += yb
        y[i, j] -= yb
        y[j, i] -= yb
    return y


def _solve_one(m, f, h, z_ref):
    omega = 2.0 * math.pi * f
    z, y = per_unit_length_matrices(m, omega)
    chain = mtl_chain(z, y, h)
    if m.c_imd:
        chain = chain.shunt_input(imd_shunt_admittance(m, omega))
    s = chain_to_s(chain, z_ref)
    asym = np.linalg.norm(s - s.T) / max(np.linalg.norm(s), 1e-300)
    if asym > RAW_RECIPROCITY_LIMIT:
        raise SolveError(f"reciprocity violation {asym:.3g} at {f:.4g} Hz")
    s = 0.5 * (s + s.T)
    margin = passivity_margin(s)
    if margin > PASSIVITY_TOL:
        raise PassivityViolation(
            f"passivity margin {margin:.3g} at {f:.4g} Hz"
        )
    return s


def solve_sweep(layout, g, grid, z_ref=DEFAULT_Z_REF, workers=None, model=None):
    """Full S-parameter block over a frequency grid.

    Per-frequency solves are independent; `workers` caps the thread pool
    (LAPACK releases the GIL). Output is deterministic regardless of the
    worker count.
    """
    m = model if model is not None else extract_rlcg(layout, g, grid)
    h = g.height_m
    freqs = list(grid)

    def run(f):
        try:
            return _solve_one(m, f, h, z_ref)
        except SolveError:
            raise
        except Exception as e:
            raise SolveError(f"solve failed at {f:.4g} Hz: {e}") from e

    if workers is not None and workers > 1 and len(freqs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            mats = list(pool.map(run, freqs))
    else:
        mats = [run(f) for f in freqs]
    return SParameterBlock(
        frequencies=grid,
        signal_cells=m.signal_cells,
        data=np.array(mats),
        z_ref=z_ref,
    )


def lumped_oracle(layout, g, omega, n_seg, z_ref=DEFAULT_Z_REF, model=None):
    """S-matrix from n_seg cascaded lumped pi-sections via nodal analysis.

    Independent cross-check of the chain-matrix path; converges to the
    exact line solution as n_seg grows.
    """
    if n_seg < 1:
        raise ValueError("n_seg must be >= 1")
    if model is None:
        model = extract_rlcg(layout, g, FrequencyGrid((omega / (2 * math.pi),)))
    n = model.signal_count
    z, y = per_unit_length_matrices(model, omega)
    h = g.height_m
    dz = h / n_seg
    y_ser = np.linalg.inv(z * dz)
    y_half = y * dz / 2.0

    n_grp = n_seg + 1
    big = np.zeros((n_grp * n, n_grp * n), dtype=complex)
    for k in range(n_seg):
        i0, i1 = k * n, (k + 1) * n
        sl0, sl1 = slice(i0, i0 + n), slice(i1, i1 + n)
        big[sl0, sl0] += y_ser + y_half
        big[sl1, sl1] += y_ser + y_half
        big[sl0, sl1] -= y_ser
        big[sl1, sl0] -= y_ser
    big[:n, :n] += imd_shunt_admittance(model, omega)

    port = list(range(n)) + list(range(n_seg * n, n_grp * n))
    internal = [i for i in range(n_grp * n) if n <= i < n_seg * n]
    y_pp = big[np.ix_(port, port)]
    if internal:
        y_pi = big[np.ix_(port, internal)]
        y_ii = big[np.ix_(internal, internal)]
        y_ip = big[np.ix_(internal, port)]
        try:
            y_pp = y_pp - y_pi @ np.linalg.solve(y_ii, y_ip)
        except np.linalg.LinAlgError as e:
            raise SolveError(f"singular nodal matrix: {e}") from e
    eye = np.eye(2 * n, dtype=complex)
    s = (eye - z_ref * y_pp) @ np.linalg.inv(eye + z_ref * y_pp)
    return 0.5 * (s + s.T)


def rfe(s_a, s_b):
    """Relative Frobenius error over all frequencies and entries."""
    if isinstance(s_a, SParameterBlock) and isinstance(s_b, SParameterBlock):
        if s_a.frequencies.points != s_b.frequencies.points:
            raise ValueError("frequency grids differ")
        if s_a.data.shape != s_b.data.shape:
            raise ValueError("port counts differ")
        a, b = s_a.data, s_b.data
    else:
        a = np.asarray(s_a)
        b = np.asarray(s_b)
        if a.shape != b.shape:
            raise ValueError("shape mismatch")
    return float(np.linalg.norm((a - b).ravel()) / np.linalg.norm(b.ravel()))


def passivity_margin(s):
    """max over rows of (sum_j |S_ij|^2 - 1); <= 0 means passive."""
    s = np.asarray(s)
    row_sums = (np.abs(s) ** 2).sum(axis=-1)
    return float(row_sums.max() - 1.0)


def reciprocity_error(s):
    s = np.asarray(s)
    return float(
        np.linalg.norm(s - np.swapaxes(s, -1, -2)) / np.linalg.norm(s)
    )


def victim_total_crosstalk(block, f, v):
    """RMS aggregate of NEXT and FEXT magnitudes onto victim v (linear)."""
    ns = block.n_signals
    if not 0 <= v < ns:
        raise ValueError(f"victim index {v} out of range")
    s = block.at(f)
    total = 0.0
    for a in range(ns):
        if a == v:
            continue
        m_next = abs(s[block.top_port(v), block.top_port(a)])
        m_fext = abs(s[block.top_port(v), block.bottom_port(a)])
        total += m_next**2 + m_fext**2
    return math.sqrt(total)


def average_crosstalk(block, f):
    """Mean |dB| of the per-victim total crosstalk, normalized by s(s-1)."""
    s_count = block.n_signals
    if s_count < 2:
        raise ValueError("average crosstalk needs at least 2 signal TSVs")
    acc = 0.0
    for v in range(s_count):
        acc += abs(20.0 * math.log10(victim_total_crosstalk(block, f, v)))
    return acc / (s_count * (s_count - 1))


def crosstalk_report(block, f):
    """Per-victim totals plus worst pairwise NEXT/FEXT entries at frequency f."""
    ns = block.n_signals
    if ns < 2:
        raise ValueError("crosstalk report needs at least 2 signal TSVs")
    s = block.at(f)
    totals = np.array([victim_total_crosstalk(block, f, v) for v in range(ns)])
    worst_victim = int(np.argmax(totals))
    worst_next = -math.inf
    worst_fext = -math.inf
    for v in range(ns):
        for a in range(ns):
            if a == v:
                continue
            worst_next = max(worst_next, db(s[block.top_port(v), block.top_port(a)]))
            worst_fext = max(worst_fext, db(s[block.top_port(v), block.bottom_port(a)]))
    return CrosstalkReport(
        frequency=f,
        victim_totals=totals,
        worst_victim=worst_victim,
        worst_next_db=float(worst_next),
        worst_fext_db=float(worst_fext),
        average_db=average_crosstalk(block, f),
    )


def scalar_telegrapher_s(z, y, h, z_ref):
    """Closed-form 2-port S of a single transmission line (oracle)."""
    gamma = cmath.sqrt(z * y)
    if gamma.real < 0:
        gamma = -gamma
    z0 = cmath.sqrt(z / y)
    ch = cmath.cosh(gamma * h)
    sh = cmath.sinh(gamma * h)
    delta = 2.0 * z0 * z_ref * ch + (z0**2 + z_ref**2) * sh
    s11 = (z0**2 - z_ref**2) * sh / delta
    s21 = 2.0 * z0 * z_ref / delta
    return np.array([[s11, s21], [s21, s11]])
