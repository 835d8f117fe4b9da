import math

import numpy as np
import pytest

from tsvnet import em, rlcg
from tsvnet.core import FrequencyGrid, GeometryMaterials, build_layout


@pytest.fixture
def g():
    return GeometryMaterials()


@pytest.fixture
def small_layout():
    return build_layout(3, 3, signal_cells=(0, 2), ground_cells=(4,))


def random_zy(rng, n):
    """Random passive-ish per-unit-length matrices for chain algebra tests."""
    a = rng.standard_normal((n, n))
    l = a @ a.T + n * np.eye(n)
    b = rng.standard_normal((n, n))
    c = b @ b.T + n * np.eye(n)
    w = 2 * math.pi * 1e10
    z = (0.5 * np.eye(n) + 1j * w * l * 1e-7).astype(complex)
    y = (1e-3 * c + 1j * w * c * 1e-12).astype(complex)
    return z, y


class TestChainAlgebra:
    def test_cascade_semigroup(self):
        rng = np.random.default_rng(7)
        z, y = random_zy(rng, 3)
        h1, h2 = 40e-6, 60e-6
        left = em.mtl_chain(z, y, h1).cascade(em.mtl_chain(z, y, h2))
        whole = em.mtl_chain(z, y, h1 + h2)
        for blk in ("a", "b", "c", "d"):
            assert np.allclose(getattr(left, blk), getattr(whole, blk),
                               rtol=1e-10, atol=1e-12)

    def test_zero_length_is_identity(self):
        rng = np.random.default_rng(3)
        z, y = random_zy(rng, 2)
        ch = em.mtl_chain(z, y, 0.0)
        assert np.allclose(ch.a, np.eye(2))
        assert np.allclose(ch.b, 0.0, atol=1e-20)
        assert np.allclose(ch.c, 0.0, atol=1e-12)
        assert np.allclose(ch.d, np.eye(2))

    def test_eig_path_matches_expm(self):
        rng = np.random.default_rng(11)
        z, y = random_zy(rng, 3)
        h = 100e-6
        ch = em.mtl_chain(z, y, h)
        ref = em._chain_via_expm(z, y, h)
        for blk in ("a", "b", "c", "d"):
            assert np.allclose(getattr(ch, blk), getattr(ref, blk),
                               rtol=1e-9, atol=1e-12)

    def test_chain_determinant_is_reciprocal(self):
        # ABCD of a reciprocal network: AD - BC = I in the block sense
        rng = np.random.default_rng(5)
        z, y = random_zy(rng, 2)
        ch = em.mtl_chain(z, y, 80e-6)
        lhs = ch.a @ ch.d.T - ch.b @ ch.c.T
        assert np.allclose(lhs, np.eye(2), rtol=1e-10, atol=1e-12)


class TestScalarOracle:
    def test_single_line_matches_closed_form(self):
        w = 2 * math.pi * 15e9
        z = 10.0 + 1j * w * 4e-7
        y = 1e-2 + 1j * w * 1.5e-10
        h = 100e-6
        ch = em.mtl_chain(np.array([[z]]), np.array([[y]]), h)
        s = em.chain_to_s(ch, 50.0)
        ref = em.scalar_telegrapher_s(z, y, h, 50.0)
        assert em.rfe(s, ref) < 1e-3 * 1e-3  # far below the 0.1% gate
        assert em.rfe(s, ref) < 1e-12

    def test_matched_lossless_line_has_no_reflection(self):
        w = 2 * math.pi * 10e9
        l_pul, c_pul = 2.5e-7, 1e-10
        z0 = math.sqrt(l_pul / c_pul)  # 50 ohm
        z = np.array([[1j * w * l_pul]])
        y = np.array([[1j * w * c_pul]])
        s = em.chain_to_s(em.mtl_chain(z, y, 1e-3), z0)
        assert abs(s[0, 0]) < 1e-12
        assert abs(s[1, 0]) == pytest.approx(1.0, abs=1e-12)

    def test_lossless_phase_delay(self):
        w = 2 * math.pi * 10e9
        l_pul, c_pul = 2.5e-7, 1e-10
        h = 2e-3
        z = np.array([[1j * w * l_pul]])
        y = np.array([[1j * w * c_pul]])
        s = em.chain_to_s(em.mtl_chain(z, y, h), math.sqrt(l_pul / c_pul))
        beta = w * math.sqrt(l_pul * c_pul)
        assert np.angle(s[1, 0]) == pytest.approx(
            math.remainder(-beta * h, 2 * math.pi), abs=1e-9
        )


class TestMetrics:
    def test_rfe_scaling(self):
        a = np.eye(3, dtype=complex)
        assert em.rfe(a, a) == 0.0
        assert em.rfe(1.1 * a, a) == pytest.approx(0.1, rel=1e-12)

    def test_passivity_margin_signs(self):
        s = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
        assert em.passivity_margin(s) == pytest.approx(-0.5)
        s_active = np.array([[1.2, 0.0], [0.0, 0.2]], dtype=complex)
        assert em.passivity_margin(s_active) == pytest.approx(0.44)

    def test_reciprocity_error(self):
        s = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
        assert em.reciprocity_error(s) == 0.0
        s[0, 1] = 1.0 + 1e-3
        assert em.reciprocity_error(s) > 0.0

    def test_db_definition(self):
        assert em.db(0.1) == pytest.approx(-20.0)
        assert em.db(1.0) == pytest.approx(0.0)


class TestSweep:
    def test_reciprocal_and_passive(self, small_layout, g):
        grid = FrequencyGrid.linspace(1e9, 100e9, 20)
        block = em.solve_sweep(small_layout, g, grid)
        for i in range(len(grid)):
            assert em.reciprocity_error(block.data[i]) <= em.RECIPROCITY_TOL
            assert em.passivity_margin(block.data[i]) <= em.PASSIVITY_TOL

    def test_port_layout(self, small_layout, g):
        grid = FrequencyGrid((15e9,))
        block = em.solve_sweep(small_layout, g, grid)
        assert block.n_signals == 2
        assert block.data.shape == (1, 4, 4)
        assert block.top_port(1) == 1
        assert block.bottom_port(0) == 2
        assert block.signal_cells == (0, 2)

    def test_workers_do_not_change_result(self, small_layout, g):
        grid = FrequencyGrid.linspace(1e9, 100e9, 16)
        b1 = em.solve_sweep(small_layout, g, grid, workers=1)
        b8 = em.solve_sweep(small_layout, g, grid, workers=8)
        assert np.array_equal(b1.data, b8.data)

    def test_insertion_loss_grows_with_frequency(self, small_layout, g):
        grid = FrequencyGrid.linspace(1e9, 100e9, 30)
        block = em.solve_sweep(small_layout, g, grid)
        s21 = [abs(block.data[i, block.bottom_port(0), block.top_port(0)])
               for i in range(len(grid))]
        assert s21[-1] < s21[0]

    def test_unsolvable_layout_rejected(self, g):
        lay = build_layout(2, 2, signal_cells=(0, 1), ground_cells=())
        with pytest.raises(Exception):
            em.solve_sweep(lay, g, FrequencyGrid((1e9,)))


class TestLumpedOracle:
    def test_convergence_to_distributed_solution(self, small_layout, g):
        w = 2 * math.pi * 15e9
        m = rlcg.extract_rlcg(small_layout, g, FrequencyGrid((15e9,)))
        s_dist = em._solve_one(m, 15e9, g.height_m, 50.0)
        errs = [em.rfe(em.lumped_oracle(small_layout, g, w, n), s_dist)
                for n in (8, 16, 32, 64, 128)]
        assert all(b < a for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 1e-3

    def test_oracle_is_reciprocal(self, small_layout, g):
        w = 2 * math.pi * 15e9
        s = em.lumped_oracle(small_layout, g, w, 32)
        assert em.reciprocity_error(s) < 1e-9


class TestCrosstalk:
    def test_victim_total_by_hand(self, g):
        # synthetic 2-signal block with known off-diagonal magnitudes
        grid = FrequencyGrid((1e9,))
        data = np.zeros((1, 4, 4), dtype=complex)
        data[0, 0, 1] = 0.1    # NEXT onto victim 0
        data[0, 0, 3] = 0.2    # FEXT onto victim 0
        data[0, 1, 0] = 0.1
        data[0, 3, 0] = 0.2
        block = em.SParameterBlock(
            frequencies=grid, signal_cells=(0, 1), data=data, z_ref=50.0
        )
        total = em.victim_total_crosstalk(block, 1e9, 0)
        assert total == pytest.approx(math.sqrt(0.01 + 0.04), rel=1e-12)

    def test_average_crosstalk_normalization(self, g):
        grid = FrequencyGrid((1e9,))
        data = np.zeros((1, 4, 4), dtype=complex)
        for v, a in ((0, 1), (1, 0)):
            data[0, v, a] = 0.1
            data[0, v, 2 + a] = 0.0 + 0.0j
        block = em.SParameterBlock(
            frequencies=grid, signal_cells=(0, 1), data=data, z_ref=50.0
        )
        # each victim total is 0.1 -> |dB| = 20; s(s-1) = 2
        assert em.average_crosstalk(block, 1e9) == pytest.approx(20.0)

    def test_report_fields(self, small_layout, g):
        grid = FrequencyGrid((15e9,))
        block = em.solve_sweep(small_layout, g, grid)
        rep = em.crosstalk_report(block, 15e9)
        assert rep.victim_totals.shape == (2,)
        assert rep.worst_victim in (0, 1)
        assert rep.worst_next_db < 0.0
        assert rep.worst_fext_db < 0.0
        d = rep.to_dict()
        assert "average_crosstalk_db" in d
