"""Acceptance suite: one test per criterion, each printing a PASS line.

The quantitative end-to-end checks run against the seeded synthetic dataset;
the tolerances below are fixed, not calibrated.
"""

import json
import time

import numpy as np
import pytest

from moldcast import cnn, gbm
from moldcast.cnn import engine
from moldcast.cnn.layers import Conv2D, TransposeConv2D
from moldcast.crossval import CVConfig, crossvalidate, report_to_json
from moldcast.mesh import build_graph, geodesic_distances
from moldcast.projection import RasterMap, fit_plane, mirror_variants, project, reproject
from moldcast.synth import SynthConfig, synth_generate

from conftest import floyd_warshall, grid_mesh, line_mesh
from test_cnn import f64_layer, fd_gradcheck, fd_probe

# the seeded synthetic dataset behind criteria 6 and 8
DATASET_CONFIG = SynthConfig(n_samples=40, vertex_range=(1500, 3000),
                             gate_range=(1, 5), seed=2024)
CV_CONFIG = CVConfig(folds=5, seed=2024, cnn_epochs=2, cnn_batch_size=8,
                     cnn_step_size=5e-3)


def ok(criterion, text):
    print(f"ACCEPTANCE {criterion}: PASS - {text}")


@pytest.fixture(scope="module")
def small_models(tmp_path_factory):
    """Quickly trained models for the timing and parity criteria."""
    root = tmp_path_factory.mktemp("acc")
    samples = synth_generate(SynthConfig(n_samples=5, vertex_range=(400, 700),
                                         gate_range=(1, 3), seed=77))
    from moldcast.cli import _training_rows, main

    from moldcast.crossval import _subsample_seed
    from moldcast.dataset import save_dataset
    from moldcast.features import GateDistanceTable, extract_features, reachable_mask
    from moldcast.mesh import subsample

    save_dataset(samples, root / "ds", seed=77)
    X, y = [], []
    for s in samples:
        table = GateDistanceTable.compute(build_graph(s.mesh), s.gates)
        ids = subsample(s.mesh, 0.125, _subsample_seed(77, s))
        ids = ids[reachable_mask(table, ids)]
        X.append(extract_features(s.mesh, s.gates, table, ids))
        y.append(s.fill_time[ids])
    model = gbm.fit(np.vstack(X), np.concatenate(y),
                    gbm.GBMConfig(n_estimators=40, max_depth=5))
    gbm.save_model(model, root / "fill.json")
    rows = _training_rows(samples, model, 0.125, 100, 77)
    net = cnn.build_network(seed=77)
    cnn.train(net, rows, cnn.TrainConfig(epochs=1, batch_size=8, seed=77))
    cnn.save_weights(net, root / "w.bin", root / "w.json")
    return {"root": root, "samples": samples, "gbm": model, "net": net}


def test_criterion_1_architecture_conformance():
    t0 = time.perf_counter()
    net = cnn.build_network(seed=0)
    # per-layer parameter counts against the fixed table
    for (name, kind, k, s, cin, cout, act, eh, ew, n_params) in cnn.ARCHITECTURE:
        if kind == "concat":
            continue
        assert net.by_name[name].n_params == n_params, name
    assert net.n_params == 284_363
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    # output shapes of every layer on a real forward pass
    x = np.zeros((1, 2, 384, 768), dtype=np.float32)
    a = x
    skip = None
    shapes = {}
    for layer in net.layers:
        if layer.name == "conv13":
            a = np.concatenate([a, skip], axis=1)
            shapes["concat"] = a.shape[1:]
        a = layer.forward(a)
        if layer.name == cnn.SKIP_SOURCE:
            skip = a
        shapes[layer.name] = a.shape[1:]
    for (name, kind, k, s, cin, cout, act, eh, ew, n_params) in cnn.ARCHITECTURE:
        c, h, w = shapes[name]
        assert (h, w, c) == (eh, ew, cout), name
    ok(1, f"all layer shapes and parameter counts conform, total 284363, "
          f"built in {elapsed * 1000:.0f} ms")


def test_criterion_2_gradient_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    worst = 0.0
    # standard, strided and 5x5 convolutions plus the transpose, both engines
    for cutoff in (8192, 1):
        engine.DIRECT_MIN_PIXELS = cutoff
        try:
            worst = max(worst, fd_gradcheck(
                f64_layer(_fresh(Conv2D("c", 3, 1, 2, 4, "relu"), rng)),
                rng.normal(size=(2, 2, 8, 8)), rng))
            worst = max(worst, fd_gradcheck(
                f64_layer(_fresh(Conv2D("c", 3, 2, 3, 4, "relu"), rng)),
                rng.normal(size=(2, 3, 8, 8)), rng))
            worst = max(worst, fd_gradcheck(
                f64_layer(_fresh(Conv2D("c", 5, 2, 2, 3, "linear"), rng)),
                rng.normal(size=(2, 2, 9, 11)), rng))
            worst = max(worst, fd_gradcheck(
                f64_layer(_fresh(TransposeConv2D("t", 3, 2, 6, 4, "relu"), rng)),
                rng.normal(size=(2, 6, 4, 6)), rng))
        finally:
            engine.DIRECT_MIN_PIXELS = 8192
    # composite toy graph covering concatenation and both scaling layers
    worst = max(worst, _composite_gradcheck(rng))
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    ok(2, f"finite differences agree within 1e-3 on every layer type "
          f"(worst {worst:.2e}) in {elapsed:.1f} s")


def _fresh(layer, rng):
    # biases drawn away from zero so no ReLU pre-activation sits exactly on
    # the kink (finite differences are undefined there)
    layer.init_weights(rng)
    layer.b = (rng.normal(size=layer.b.shape) * 0.1).astype(layer.b.dtype)
    return layer


def _composite_gradcheck(rng, tol=1e-3):
    """Toy network with the production wiring: strided encoder, transpose
    branch, concatenation with the skip, scaling lambdas."""
    from moldcast.cnn.layers import InputScale, OutputScale

    scale_in = InputScale("si", 2)
    scale_in.scale = 2.5
    conv_a = f64_layer(_fresh(Conv2D("a", 3, 1, 2, 4, "relu"), rng))
    conv_b = f64_layer(_fresh(Conv2D("b", 3, 2, 4, 6, "relu"), rng))
    up = f64_layer(_fresh(TransposeConv2D("u", 3, 2, 6, 3, "relu"), rng))
    head = f64_layer(_fresh(Conv2D("h", 1, 1, 7, 1, "linear"), rng))
    scale_out = OutputScale("so", 1)
    scale_out.scale = 1.7
    x = rng.normal(size=(2, 2, 8, 8))
    target = rng.normal(size=(2, 1, 8, 8))

    def forward(caches=None):
        def c():
            if caches is None:
                return None
            caches.append({})
            return caches[-1]

        a0 = scale_in.forward(x, c())
        skip = conv_a.forward(a0, c())
        mid = conv_b.forward(skip, c())
        upp = up.forward(mid, c())
        cat = np.concatenate([upp, skip], axis=1)
        out = head.forward(cat, c())
        return scale_out.forward(out, c())

    def loss():
        out = forward()
        return float(np.mean((out - target) ** 2))

    caches = []
    out = forward(caches)
    dout = 2.0 * (out - target) / out.size
    d, _ = scale_out.backward(dout, caches[5])
    d, g_head = head.backward(d, caches[4])
    d_up, d_skip_branch = d[:, :3], d[:, 3:]
    d_mid, g_up = up.backward(np.ascontiguousarray(d_up), caches[3])
    d_skip, g_b = conv_b.backward(d_mid, caches[2])
    d_skip = d_skip + d_skip_branch  # concat splits the gradient additively
    d_a0, g_a = conv_a.backward(d_skip, caches[1])
    grads = {"a": (conv_a, g_a), "b": (conv_b, g_b), "u": (up, g_up), "h": (head, g_head)}
    worst = 0.0
    for layer, g in grads.values():
        for pname in ("W", "b"):
            arr = getattr(layer, pname)
            flat = arr.ravel()
            for idx in rng.choice(arr.size, size=min(10, arr.size), replace=False):
                worst = max(worst, fd_probe(flat, idx, loss, g[pname].ravel()[idx]))
    assert worst < tol
    return worst


def test_criterion_3_dijkstra_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    for trial in range(20):
        n = int(rng.integers(20, 101))
        mesh = line_mesh(rng, n, extra_faces=int(rng.integers(10, 60)))
        graph = build_graph(mesh)
        oracle = floyd_warshall(graph)
        src = int(rng.integers(0, n))
        assert np.array_equal(geodesic_distances(graph, src), oracle[src])
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    ok(3, f"Dijkstra equals Floyd-Warshall exactly on 20 random meshes in {elapsed:.1f} s")


def test_criterion_4_gbm_correctness():
    # (a) monotone training MSE on several datasets
    rng = np.random.default_rng(8)
    for trial in range(4):
        X = rng.normal(size=(70, 6))
        y = X[:, 0] - 0.5 * X[:, 3] ** 2 + rng.normal(scale=0.3, size=70)
        model = gbm.fit(X, y, gbm.GBMConfig(n_estimators=50, max_depth=3))
        assert np.all(np.diff(model.loss_history) <= 1e-15)
    # (b) hand-computed one-round step case
    x = np.array([-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0])[:, None]
    y = np.where(x[:, 0] < 0, 0.0, 10.0)
    model = gbm.fit(x, y, gbm.GBMConfig(learning_rate=0.08, n_estimators=1))
    preds = model.predict(x)
    assert np.all(np.abs(preds[:4] - 4.6) < 1e-12)
    assert np.all(np.abs(preds[4:] - 5.4) < 1e-12)
    # (c) depth-1 split equals the exhaustive-scan optimum on 50 datasets
    checked = 0
    for trial in range(50):
        n = int(rng.integers(5, 50))
        xs = np.sort(rng.normal(size=n))
        ys = rng.normal(size=n)
        model = gbm.fit(xs[:, None], ys,
                        gbm.GBMConfig(n_estimators=1, max_depth=1, learning_rate=1.0))
        tree = model.trees[0]
        if tree.is_leaf[0]:
            continue
        resid = ys - ys.mean()
        best_sse, best_th = np.inf, None
        for i in range(n - 1):
            if xs[i] == xs[i + 1]:
                continue
            th = (xs[i] + xs[i + 1]) / 2
            left, right = resid[xs <= th], resid[xs > th]
            sse = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
            if sse < best_sse - 1e-12:
                best_sse, best_th = sse, th
        assert tree.threshold[0] == pytest.approx(best_th, rel=1e-12)
        checked += 1
    assert checked >= 40
    ok(4, f"monotone loss, exact one-round hand case, {checked} optimal depth-1 splits")


def test_criterion_5_projection_reprojection():
    rng = np.random.default_rng(9)
    suite = [
        grid_mesh(12, 20, spacing=5.0),
        grid_mesh(9, 17, spacing=3.0, z_fn=lambda x, y: np.sin(x / 4) * 6),
        grid_mesh(15, 10, spacing=7.0, z_fn=lambda x, y: 0.05 * x * y),
    ] + [s.mesh for s in synth_generate(SynthConfig(
        n_samples=2, vertex_range=(300, 500), gate_range=(1, 2), seed=55))]
    for mesh in suite:
        plane = fit_plane(mesh.vertices)
        # constant-field projection/reprojection identity, exact
        raster, corr = project(mesh, np.full(mesh.n_vertices, 4.25), plane)
        assert np.all(reproject(raster.values, corr) == 4.25)
        # fitted plane beats 1000 random centroid planes
        pts = mesh.vertices
        centroid = pts.mean(axis=0)
        best = float((((pts - plane.origin) @ plane.normal) ** 2).sum())
        dirs = rng.normal(size=(1000, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        sses = (((pts - centroid) @ dirs.T) ** 2).sum(axis=0)
        assert best <= sses.min() + 1e-9
    # mirror flips are bit-exact involutions
    values = rng.normal(size=(384, 768))
    mask = (rng.uniform(size=values.shape) > 0.4).astype(np.uint8)
    raster = RasterMap(values, mask, 1.0, (0.0, 0.0))
    for idx in (1, 2, 3):
        once = mirror_variants(raster)[idx]
        twice = mirror_variants(once)[idx]
        assert np.array_equal(twice.values, raster.values)
        assert np.array_equal(twice.mask, raster.mask)
    ok(5, f"identity, plane optimality on {len(suite)} meshes, involutions all hold")


@pytest.fixture(scope="module")
def cv_result():
    samples = synth_generate(DATASET_CONFIG)
    t0 = time.perf_counter()
    report = crossvalidate(samples, CV_CONFIG)
    elapsed = time.perf_counter() - t0
    fill_all = np.concatenate([s.fill_time for s in samples])
    return report, elapsed, float(fill_all.max() - fill_all.min())


def test_criterion_6_end_to_end_synthetic_accuracy(cv_result):
    report, elapsed, fill_range = cv_result
    assert elapsed < 1800.0, f"cross-validation took {elapsed:.0f} s"
    for fr in report["per_fold"]:
        assert fr["fill_time"]["rmse_points"] < 0.10 * fill_range, \
            f"fold {fr['fold']}: fill RMSE {fr['fill_time']['rmse_points']:.4f}"
        assert fr["deflection"]["rmse_points"] < fr["baseline_deflection_rmse_points"], \
            f"fold {fr['fold']}: deflection did not beat the constant-mean baseline"
    worst_fill = max(fr["fill_time"]["rmse_points"] for fr in report["per_fold"])
    ok(6, f"5-fold CV in {elapsed / 60:.1f} min; worst pooled fill RMSE {worst_fill:.3f} "
          f"< 10% of range {fill_range:.2f}; deflection beats baseline on every fold")


def test_criterion_7_cnn_memorization(small_models):
    samples = small_models["samples"][:2]
    from moldcast.crossval import coarse_target

    rows = []
    for s in samples:
        plane = fit_plane(s.mesh.vertices)
        raster, _ = project(s.mesh, s.fill_time, plane)
        defl_raster, _ = project(s.mesh, s.deflection, plane)
        rows.append((raster.channels(), coarse_target(defl_raster)))
    net = cnn.build_network(seed=123)
    epochs = 200  # comfortably within the 500-epoch budget
    config = cnn.TrainConfig(step_size=3e-3, batch_size=2, epochs=epochs, seed=123)
    # initial loss of the untouched net on the expanded training rows
    expanded = cnn.mirror_expand(rows)
    losses0 = []
    for img, target in expanded:
        out = cnn.forward(net, img.astype(np.float32))[:, :, 0]
        losses0.append(float(np.mean((out - target) ** 2)))
    initial = float(np.mean(losses0))
    net, history = cnn.train(net, rows, config)
    final = history[-1]
    assert final <= 0.01 * initial, \
        f"MSE only fell from {initial:.5f} to {final:.5f} in {epochs} epochs"
    ok(7, f"2-sample training MSE {initial:.5f} -> {final:.5f} "
          f"({100 * (1 - final / initial):.2f}% reduction) in {epochs} epochs")


def test_criterion_8_stage_timing(small_models):
    from moldcast.bench import benchmark

    sample = synth_generate(SynthConfig(n_samples=1, vertex_range=(8000, 10000),
                                        gate_range=(2, 4), seed=88))[0]
    assert sample.mesh.n_vertices <= 11000
    record = benchmark(sample, small_models["gbm"], small_models["net"])
    assert set(record) >= {"pre_processing", "fill_time", "deflection", "total", "machine"}
    assert record["total"] == pytest.approx(
        record["pre_processing"] + record["fill_time"] + record["deflection"], abs=1e-9)
    assert record["total"] < 60.0
    ok(8, f"stages {record['pre_processing']:.2f}/{record['fill_time']:.2f}/"
          f"{record['deflection']:.2f} s, total {record['total']:.2f} s < 60 s "
          f"on {record['vertices']} vertices")


def test_criterion_9_determinism():
    samples = synth_generate(SynthConfig(n_samples=4, vertex_range=(300, 500),
                                         gate_range=(1, 3), seed=31))
    config = CVConfig(folds=2, seed=31, smoothing_k=40,
                      gbm=gbm.GBMConfig(n_estimators=20, max_depth=4),
                      cnn_epochs=1, cnn_batch_size=8, cnn_step_size=5e-3)
    report_a = report_to_json(crossvalidate(samples, config))
    report_b = report_to_json(crossvalidate(samples, config))
    assert report_a == report_b
    # training determinism: bit-identical weights
    from moldcast.crossval import coarse_target

    s = samples[0]
    plane = fit_plane(s.mesh.vertices)
    raster, _ = project(s.mesh, s.fill_time, plane)
    defl_raster, _ = project(s.mesh, s.deflection, plane)
    rows = [(raster.channels(), coarse_target(defl_raster))]
    tc = cnn.TrainConfig(epochs=2, batch_size=2, seed=9)
    net_a, hist_a = cnn.train(cnn.build_network(seed=9), list(rows), tc)
    net_b, hist_b = cnn.train(cnn.build_network(seed=9), list(rows), tc)
    assert hist_a == hist_b
    for la, lb in zip(net_a.layers, net_b.layers):
        if la.n_params:
            assert np.array_equal(la.W, lb.W)
            assert np.array_equal(la.b, lb.b)
    ok(9, "cross-validation reports and trained weights are bit-identical across runs")


def test_criterion_10_cli_api_parity(small_models, tmp_path):
    from fastapi.testclient import TestClient

    from moldcast.cli import main as cli_main
    from moldcast.dataset import load_fields
    from moldcast.service import create_app

    root = small_models["root"]
    app = create_app(gbm_path=root / "fill.json", weights_blob=root / "w.bin",
                     weights_manifest=root / "w.json")
    client = TestClient(app)
    for i, sample in enumerate(small_models["samples"]):
        mesh_path = root / "ds" / f"sample_{i:03d}" / "mesh.obj"
        gates_path = root / "ds" / f"sample_{i:03d}" / "gates.json"
        out = tmp_path / f"fields_{i}.csv"
        cli_main(["predict", "--mesh", str(mesh_path), "--gates", str(gates_path),
                  "--gbm", str(root / "fill.json"), "--weights", str(root / "w"),
                  "--out", str(out)])
        cli_fill, cli_defl = load_fields(out)
        handle = client.post("/meshes", content=mesh_path.read_bytes()).json()["handle"]
        resp = client.post("/predict", json={
            "handle": handle,
            "gates": [{"node_id": g.node_id, "opening_time": g.opening_time}
                      for g in sample.gates]}).json()
        assert np.array_equal(np.array(resp["fill_time"]), cli_fill), f"case {i}"
        assert np.array_equal(np.array(resp["deflection"]), cli_defl), f"case {i}"
    ok(10, "service /predict equals CLI predict value-for-value on 5 cases")
