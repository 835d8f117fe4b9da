import math

import pytest
import torch

from tsvgnn.graph import FeatureScaler, SchemaError, build_graph


def make_record(rows, cols, roles, f=15e9):
    return {
        "layout": {"rows": rows, "cols": cols, "roles": roles},
        "geometry": {"r_cond": 5.0, "p_int": 60.0, "h_int": 100.0, "t_ins": 0.5},
        "frequency_hz": f,
    }


class TestTopology:
    def test_3x4_has_12_nodes_132_directed_edges(self):
        s = build_graph(make_record(3, 4, [1, -1, 0] * 4))
        assert s.n_nodes == 12
        assert s.edge_index.shape == (2, 132)
        assert s.edge_attr.shape == (132, 3)

    def test_single_node_has_no_edges(self):
        s = build_graph(make_record(1, 1, [-1]))
        assert s.n_nodes == 1
        assert s.edge_index.shape[1] == 0

    def test_no_self_edges_and_all_pairs_present(self):
        s = build_graph(make_record(2, 2, [1, -1, 0, -1]))
        src, dst = s.edge_index
        assert (src != dst).all()
        assert len({(int(a), int(b)) for a, b in zip(src, dst)}) == 12

    def test_node_order_is_cell_order(self):
        roles = [1, 0, -1, -1]
        s = build_graph(make_record(2, 2, roles))
        assert s.x[:, 0].tolist() == roles
        assert s.signal_nodes.tolist() == [0]


class TestEdgeFeatures:
    def test_distances_scale_with_pitch(self):
        rec = make_record(1, 2, [1, -1])
        s = build_graph(rec)
        assert s.edge_attr[0, 0] == pytest.approx(60.0)
        rec["geometry"]["p_int"] = 30.0
        assert build_graph(rec).edge_attr[0, 0] == pytest.approx(30.0)

    def test_reciprocal_channels_consistent(self):
        s = build_graph(make_record(3, 3, [1, -1, 0, 0, 1, 0, -1, 0, 0]))
        d = s.edge_attr[:, 0]
        assert (d > 0).all()
        assert torch.allclose(s.edge_attr[:, 1], 1.0 / d)
        assert torch.allclose(s.edge_attr[:, 2], 1.0 / d**2)

    def test_diagonal_distance(self):
        s = build_graph(make_record(2, 2, [1, 0, 0, -1]))
        src, dst = s.edge_index
        idx = [i for i in range(12) if (int(src[i]), int(dst[i])) == (0, 3)][0]
        assert float(s.edge_attr[idx, 0]) == pytest.approx(60.0 * math.sqrt(2))


class TestLabels:
    def test_label_block_shapes(self, small_split):
        rec = small_split["train"][0]
        s = build_graph(rec)
        ns = s.n_signals
        assert s.node_db.shape == (ns, 2)
        assert s.pairs.shape[0] == ns * (ns - 1) // 2
        assert s.pair_db.shape == (s.pairs.shape[0], 2)

    def test_label_values_are_db_magnitudes(self, small_split):
        rec = small_split["train"][0]
        s = build_graph(rec)
        re, im = rec["labels"]["s11"][0]
        expected = 20.0 * math.log10(math.hypot(re, im))
        assert float(s.node_db[0, 0]) == pytest.approx(expected, rel=1e-12)


class TestSchema:
    def test_missing_geometry_key_rejected(self):
        rec = make_record(2, 2, [1, -1, 0, 0])
        del rec["geometry"]["p_int"]
        with pytest.raises(SchemaError):
            build_graph(rec)

    def test_bad_role_rejected(self):
        with pytest.raises(SchemaError):
            build_graph(make_record(1, 2, [1, 7]))

    def test_role_length_mismatch_rejected(self):
        with pytest.raises(SchemaError):
            build_graph(make_record(2, 2, [1, -1]))


class TestScaler:
    def test_round_trip(self, small_split):
        samples = [build_graph(r) for r in small_split["train"]]
        scaler = FeatureScaler().fit(samples)
        x = samples[0].x
        assert torch.allclose(scaler.unscale(scaler.scale(x)), x, rtol=1e-10)

    def test_state_dict_round_trip(self, small_split):
        samples = [build_graph(r) for r in small_split["train"]]
        a = FeatureScaler().fit(samples)
        b = FeatureScaler().load_state_dict(a.state_dict())
        x = samples[1].x
        assert torch.equal(a.scale(x), b.scale(x))
