import numpy as np
import pytest

from moldcast import gbm
from moldcast.gbm import GBMConfig, GBMError

from conftest import grid_mesh


def step_dataset():
    # 1 informative feature: y = 0 for x < 0, 10 for x >= 0, 4 points each side
    x = np.array([-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0])
    y = np.where(x < 0, 0.0, 10.0)
    return x[:, None], y


class TestFit:
    def test_constant_target(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(30, 8))
        y = np.full(30, 3.25)
        model = gbm.fit(X, y, GBMConfig(n_estimators=5))
        assert model.base_score == 3.25
        assert np.array_equal(model.predict(X), np.full(30, 3.25))
        for tree in model.trees:
            assert np.all(tree.value == 0.0)

    def test_hand_computed_first_round(self):
        X, y = step_dataset()
        model = gbm.fit(X, y, GBMConfig(learning_rate=0.08, max_depth=8, n_estimators=1))
        assert model.base_score == 5.0
        tree = model.trees[0]
        root_threshold = tree.threshold[0]
        assert root_threshold == 0.0  # midpoint of -1 and 1
        leaf_values = sorted(tree.value[tree.is_leaf])
        assert leaf_values == pytest.approx([-5.0, 5.0], abs=0)
        preds = model.predict(X)
        assert preds[:4] == pytest.approx(4.6, abs=1e-12)
        assert preds[4:] == pytest.approx(5.4, abs=1e-12)

    def test_monotone_training_mse(self):
        rng = np.random.default_rng(1)
        for trial in range(3):
            X = rng.normal(size=(80, 5))
            y = X[:, 0] * 2 + np.sin(X[:, 1]) + rng.normal(scale=0.2, size=80)
            model = gbm.fit(X, y, GBMConfig(n_estimators=40, max_depth=3))
            h = np.array(model.loss_history)
            assert np.all(np.diff(h) <= 1e-15)

    def test_depth1_split_matches_exhaustive_scan(self):
        rng = np.random.default_rng(2)
        for trial in range(50):
            n = int(rng.integers(5, 40))
            x = np.sort(rng.normal(size=n))
            if len(np.unique(x)) < 2:
                continue
            y = rng.normal(size=n)
            model = gbm.fit(x[:, None], y, GBMConfig(n_estimators=1, max_depth=1,
                                                     learning_rate=1.0))
            tree = model.trees[0]
            if tree.is_leaf[0]:
                continue
            # exhaustive scan over all midpoints
            resid = y - y.mean()
            best_sse, best_th = None, None
            for i in range(n - 1):
                if x[i] == x[i + 1]:
                    continue
                th = (x[i] + x[i + 1]) / 2
                left = resid[x <= th]
                right = resid[x > th]
                sse = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
                if best_sse is None or sse < best_sse - 1e-12:
                    best_sse, best_th = sse, th
            assert tree.threshold[0] == pytest.approx(best_th, rel=1e-12)

    def test_step_function_convergence(self):
        X, y = step_dataset()
        model = gbm.fit(X, y, GBMConfig(learning_rate=0.08, n_estimators=200))
        preds = model.predict(X)
        assert np.all(np.abs(preds[:4] - 0.0) < 1e-6)
        assert np.all(np.abs(preds[4:] - 10.0) < 1e-6)

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(60, 4))
        # duplicated feature values force tie handling
        X[:, 2] = np.round(X[:, 2] * 2) / 2
        y = X[:, 0] + X[:, 2] ** 2 + rng.normal(scale=0.1, size=60)
        model_a = gbm.fit(X, y, GBMConfig(n_estimators=20, max_depth=4))
        perm = rng.permutation(60)
        model_b = gbm.fit(X[perm], y[perm], GBMConfig(n_estimators=20, max_depth=4))
        probe = rng.normal(size=(40, 4))
        assert np.array_equal(model_a.predict(probe), model_b.predict(probe))

    def test_rejects_bad_input(self):
        with pytest.raises(GBMError):
            gbm.fit(np.zeros((0, 8)), np.zeros(0))
        with pytest.raises(GBMError):
            gbm.fit(np.array([[1.0, np.nan]]), np.array([1.0]))
        with pytest.raises(GBMError):
            GBMConfig(learning_rate=0.0)

    def test_synthetic_filltime_r2(self):
        from moldcast.features import extract_features
        from moldcast.mesh import subsample
        from moldcast.synth import SynthConfig, synth_generate
        from moldcast.features import GateDistanceTable
        from moldcast.mesh import build_graph

        samples = synth_generate(SynthConfig(n_samples=3, vertex_range=(400, 600),
                                             gate_range=(2, 4), seed=11))
        X, y = [], []
        for s in samples:
            table = GateDistanceTable.compute(build_graph(s.mesh), s.gates)
            ids = subsample(s.mesh, 0.125, 5)
            X.append(extract_features(s.mesh, s.gates, table, ids))
            y.append(s.fill_time[ids])
        X, y = np.vstack(X), np.concatenate(y)
        model = gbm.fit(X, y)
        pred = model.predict(X)
        r2 = 1 - ((pred - y) ** 2).sum() / ((y - y.mean()) ** 2).sum()
        assert r2 > 0.99


class TestPredict:
    def test_width_mismatch(self):
        X = np.random.default_rng(4).normal(size=(10, 8))
        model = gbm.fit(X, np.arange(10.0), GBMConfig(n_estimators=2))
        with pytest.raises(GBMError, match="features"):
            model.predict(np.zeros((3, 5)))


class TestSerialize:
    def test_constant_model_roundtrip(self):
        X = np.random.default_rng(5).normal(size=(10, 8))
        model = gbm.fit(X, np.full(10, 2.5), GBMConfig(n_estimators=3))
        again = gbm.deserialize(gbm.serialize(model))
        assert again.base_score == model.base_score

    def test_roundtrip_bit_exact(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(200, 8))
        y = X @ rng.normal(size=8) + rng.normal(scale=0.1, size=200)
        model = gbm.fit(X, y, GBMConfig(n_estimators=200, max_depth=4))
        again = gbm.deserialize(gbm.serialize(model))
        assert len(again.trees) == 200
        for t1, t2 in zip(model.trees, again.trees):
            assert np.array_equal(t1.threshold, t2.threshold)
            assert t1.n_nodes == t2.n_nodes
        probe = rng.normal(size=(1000, 8))
        assert np.array_equal(model.predict(probe), again.predict(probe))

    def test_truncated_document_rejected(self):
        X = np.random.default_rng(7).normal(size=(10, 8))
        model = gbm.fit(X, np.arange(10.0), GBMConfig(n_estimators=2))
        text = gbm.serialize(model)
        with pytest.raises(GBMError, match="malformed"):
            gbm.deserialize(text[:len(text) // 2])

    def test_wrong_version_rejected(self):
        with pytest.raises(GBMError):
            gbm.deserialize('{"format": "moldcast-gbm", "version": 99}')

    def test_file_roundtrip(self, tmp_path):
        X = np.random.default_rng(8).normal(size=(20, 8))
        model = gbm.fit(X, X[:, 0], GBMConfig(n_estimators=5))
        p = tmp_path / "model.json"
        gbm.save_model(model, p)
        again = gbm.load_model(p)
        assert np.array_equal(model.predict(X), again.predict(X))


class TestSmoothing:
    def test_overlap_averages(self):
        # two sampled points, k=2: middle vertex is covered by both areas
        from moldcast.mesh import Mesh

        verts = [[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 5, 0]]
        mesh = Mesh(verts, [[0, 1, 3], [1, 2, 3]])
        field = gbm.smooth_predictions(mesh, np.array([0, 2]), np.array([1.0, 3.0]), k=2)
        assert field[1] == 2.0  # mean of both contributions

    def test_single_sample_floods_everything(self):
        mesh = grid_mesh(5, 6)
        field = gbm.smooth_predictions(mesh, np.array([3]), np.array([7.5]), k=30)
        assert np.array_equal(field, np.full(30, 7.5))

    def test_matches_bruteforce_oracle_exactly(self):
        rng = np.random.default_rng(9)
        mesh = grid_mesh(20, 25, z_fn=lambda x, y: np.sin(x) + y * 0.1)
        n = mesh.n_vertices
        sampled = np.sort(rng.choice(n, size=60, replace=False))
        preds = rng.normal(size=60)
        k = 100
        field = gbm.smooth_predictions(mesh, sampled, preds, k=k)
        # straightforward loop oracle with the same tie and order rules
        sums = np.zeros(n)
        counts = np.zeros(n)
        for sid, p in zip(sampled, preds):
            d2 = ((mesh.vertices - mesh.vertices[sid]) ** 2).sum(axis=1)
            nbrs = sorted(range(n), key=lambda i: (d2[i], i))[:k]
            for v in nbrs:
                sums[v] += p
                counts[v] += 1
        expect = np.zeros(n)
        for v in range(n):
            if counts[v]:
                expect[v] = sums[v] / counts[v]
            else:
                d2 = ((mesh.vertices[sampled] - mesh.vertices[v]) ** 2).sum(axis=1)
                expect[v] = preds[int(np.argmin(d2))]
        assert np.array_equal(field, expect)

    def test_range_preserved(self):
        rng = np.random.default_rng(10)
        mesh = grid_mesh(15, 15)
        sampled = np.sort(rng.choice(225, size=20, replace=False))
        preds = rng.uniform(2.0, 9.0, size=20)
        field = gbm.smooth_predictions(mesh, sampled, preds, k=40)
        assert field.min() >= preds.min() - 1e-12
        assert field.max() <= preds.max() + 1e-12

    def test_empty_samples_rejected(self):
        mesh = grid_mesh(3, 3)
        with pytest.raises(GBMError, match="empty"):
            gbm.smooth_predictions(mesh, np.array([], dtype=int), np.array([]), k=5)
