import numpy as np
import pytest
import torch

from tsvgnn.graph import FeatureScaler, GraphSample, build_graph
from tsvgnn.model import Film, ModelConfig, SurrogateModel

from test_graph import make_record


@pytest.fixture(scope="module")
def fitted(small_split):
    samples = [build_graph(r) for r in small_split["train"]]
    scaler = FeatureScaler().fit(samples)
    torch.manual_seed(0)
    model = SurrogateModel(ModelConfig(), scaler).to(torch.float64)
    model.eval()
    return model, samples


class TestConfig:
    def test_width_must_divide_heads(self):
        with pytest.raises(ValueError):
            ModelConfig(hidden=30, heads=4)

    def test_negative_passivity_weight_rejected(self):
        with pytest.raises(ValueError):
            ModelConfig(passivity_weight=-1.0)


class TestFilm:
    def test_identity_at_initialization(self):
        torch.manual_seed(1)
        film = Film(8, 16).to(torch.float64)
        h = torch.randn(5, 16, dtype=torch.float64)
        cond = torch.randn(5, 8, dtype=torch.float64)
        assert torch.equal(film(h, cond), h)

    def test_width_mismatch_rejected(self):
        film = Film(8, 16)
        with pytest.raises(ValueError):
            film(torch.randn(5, 8), torch.randn(5, 8))

    def test_modulates_after_perturbation(self):
        film = Film(8, 16).to(torch.float64)
        with torch.no_grad():
            film.proj.weight.add_(0.1)
        h = torch.randn(3, 16, dtype=torch.float64)
        a = film(h, torch.zeros(3, 8, dtype=torch.float64))
        b = film(h, torch.ones(3, 8, dtype=torch.float64))
        assert not torch.allclose(a, b)


class TestReciprocity:
    def test_edge_head_bitwise_symmetric_on_random_inputs(self, fitted):
        model, _ = fitted
        torch.manual_seed(2)
        for _ in range(50):
            hi = torch.randn(1, 64, dtype=torch.float64)
            hj = torch.randn(1, 64, dtype=torch.float64)
            assert torch.equal(model.edge_predict(hi, hj),
                               model.edge_predict(hj, hi))

    def test_forward_pair_order_invariant(self, fitted):
        model, samples = fitted
        s = next(s for s in samples if s.pairs.shape[0])
        _, pair_db = model(s)
        swapped = GraphSample(
            x=s.x, edge_index=s.edge_index, edge_attr=s.edge_attr,
            signal_nodes=s.signal_nodes, rows=s.rows, cols=s.cols,
            node_db=s.node_db, pairs=s.pairs.flip(1), pair_db=s.pair_db,
        )
        _, pair_db_sw = model(swapped)
        assert torch.equal(pair_db, pair_db_sw)


class TestShapes:
    def test_output_shapes(self, fitted):
        model, samples = fitted
        s = samples[0]
        node_db, pair_db = model(s)
        assert node_db.shape == (s.n_signals, 2)
        assert pair_db.shape == (s.pairs.shape[0], 2)

    def test_empty_signal_set_gives_empty_node_output(self, fitted):
        model, _ = fitted
        s = build_graph(make_record(2, 2, [-1, -1, -1, -1]))
        node_db, pair_db = model(s)
        assert node_db.shape == (0, 2)
        assert pair_db.shape == (0, 2)

    def test_single_node_graph_is_finite(self, fitted):
        model, _ = fitted
        s = build_graph(make_record(1, 1, [1]))
        node_db, _ = model(s)
        assert node_db.shape == (1, 2)
        assert torch.isfinite(node_db).all()


class TestPermutationEquivariance:
    def test_embedding_permutes_with_nodes(self, fitted):
        model, _ = fitted
        rng = np.random.default_rng(4)
        n = 6
        x = torch.tensor(np.column_stack([
            rng.choice([1.0, 0.0, -1.0], n),
            np.full(n, 5.0), np.full(n, 60.0), np.full(n, 100.0),
            np.full(n, 0.5), np.full(n, 15e9),
        ]))
        pos = rng.uniform(0.0, 300.0, (n, 2))
        src, dst = np.nonzero(~np.eye(n, dtype=bool))
        d = np.hypot(*(pos[src] - pos[dst]).T)
        attr = torch.tensor(np.stack([d, 1 / d, 1 / d**2], axis=1))

        def embed(order):
            inv = np.argsort(order)
            sample = GraphSample(
                x=x[order],
                edge_index=torch.tensor(np.stack([inv[src], inv[dst]])),
                edge_attr=attr,
                signal_nodes=torch.zeros(0, dtype=torch.long),
                rows=1, cols=n,
            )
            return model.embed(sample)

        base = embed(np.arange(n))
        perm = rng.permutation(n)
        assert torch.allclose(embed(perm), base[perm], atol=1e-10)
