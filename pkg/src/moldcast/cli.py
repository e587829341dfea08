"""Command-line entry point.

Subcommands: synth, train-filltime, train-deflection, predict, crossvalidate,
benchmark, serve, export-debug. A JSON config file can provide defaults for
any flag (explicit flags win). Commands that draw random numbers require an
explicit --seed; predict-style commands default to seed 0 so the CLI and the
service produce identical fields.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import cnn, gbm
from .bench import benchmark
from .crossval import CVConfig, crossvalidate, report_to_json, _subsample_seed
from .dataset import import_sample, load_dataset, save_dataset, save_fields
from .features import GateDistanceTable, extract_features, reachable_mask
from .mesh import build_graph, subsample
from .pipeline import DEFAULT_FRACTION, DEFAULT_SMOOTHING_K, predict_fields
from .projection import export_raster, fit_plane, project
from .synth import SynthConfig, synth_generate


def _config_defaults(argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    with open(known.config) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise SystemExit("--config must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def _add_gbm_flags(p):
    p.add_argument("--learning-rate", type=float, default=0.08)
    p.add_argument("--max-depth", type=int, default=8)
    p.add_argument("--estimators", type=int, default=200)


def _gbm_config(args, seed):
    return gbm.GBMConfig(learning_rate=args.learning_rate, max_depth=args.max_depth,
                         n_estimators=args.estimators, seed=seed)


def _load_models(args, need_net=True):
    model = gbm.load_model(args.gbm)
    net = None
    if need_net:
        net = cnn.load_weights(args.weights + ".bin", args.weights + ".json")
    return model, net


def _training_rows(samples, model, fraction, smoothing_k, seed):
    """Per sample: (predicted-fill raster, target) and (truth-fill raster, target)."""
    from .crossval import coarse_target

    rows = []
    for s in samples:
        table = GateDistanceTable.compute(build_graph(s.mesh), s.gates)
        ids = subsample(s.mesh, fraction, _subsample_seed(seed, s))
        ids = ids[reachable_mask(table, ids)]
        feats = extract_features(s.mesh, s.gates, table, ids)
        fill_pred = gbm.smooth_predictions(s.mesh, ids, model.predict(feats), smoothing_k)
        plane = fit_plane(s.mesh.vertices)
        raster_pred, _ = project(s.mesh, fill_pred, plane)
        raster_truth, _ = project(s.mesh, s.fill_time, plane)
        defl_raster, _ = project(s.mesh, s.deflection, plane)
        target = coarse_target(defl_raster)
        rows.append((raster_pred.channels(), target))
        rows.append((raster_truth.channels(), target))
    return rows


def cmd_synth(args):
    config = SynthConfig(
        n_samples=args.samples,
        vertex_range=(args.min_vertices, args.max_vertices),
        gate_range=(args.min_gates, args.max_gates),
        seed=args.seed,
    )
    samples = synth_generate(config)
    save_dataset(samples, args.out, seed=args.seed)
    total_v = sum(s.mesh.n_vertices for s in samples)
    print(f"wrote {len(samples)} samples ({total_v} vertices total) to {args.out}")


def cmd_train_filltime(args):
    samples = load_dataset(args.dataset)
    trainable = [s for s in samples if s.has_truth]
    if not trainable:
        raise SystemExit("dataset has no samples with ground-truth fields")
    X, y = [], []
    for s in trainable:
        table = GateDistanceTable.compute(build_graph(s.mesh), s.gates)
        ids = subsample(s.mesh, args.fraction, _subsample_seed(args.seed, s))
        ids = ids[reachable_mask(table, ids)]
        X.append(extract_features(s.mesh, s.gates, table, ids))
        y.append(s.fill_time[ids])
    model = gbm.fit(np.vstack(X), np.concatenate(y), _gbm_config(args, args.seed))
    gbm.save_model(model, args.out)
    print(f"trained on {sum(len(v) for v in y)} points from {len(trainable)} samples; "
          f"final train MSE {model.loss_history[-1]:.6g}; saved to {args.out}")


def cmd_train_deflection(args):
    samples = [s for s in load_dataset(args.dataset) if s.has_truth]
    if not samples:
        raise SystemExit("dataset has no samples with ground-truth fields")
    model = gbm.load_model(args.gbm)
    rows = _training_rows(samples, model, args.fraction, args.smoothing_k, args.seed)
    net = cnn.build_network(seed=args.seed)
    tc = cnn.TrainConfig(step_size=args.step_size, batch_size=args.batch_size,
                         epochs=args.epochs, seed=args.seed)
    net, history = cnn.train(net, rows, tc)
    cnn.save_weights(net, args.out + ".bin", args.out + ".json")
    print(f"trained {args.epochs} epochs on {len(rows) * 4} rows; "
          f"loss {history[0]:.6g} -> {history[-1]:.6g}; saved to {args.out}.bin/.json")


def cmd_predict(args):
    sample = import_sample(args.mesh, args.gates)
    model, net = _load_models(args, need_net=not args.no_deflection)
    result = predict_fields(sample.mesh, sample.gates, model, net,
                            fraction=args.fraction, smoothing_k=args.smoothing_k,
                            seed=args.seed, want_deflection=not args.no_deflection)
    deflection = result.deflection
    if deflection is None:
        deflection = np.zeros_like(result.fill_time)
    save_fields(args.out, result.fill_time, deflection)
    t = result.timings
    print(f"pre-processing {t['pre_processing']:.3f}s  fill time {t['fill_time']:.3f}s  "
          f"deflection {t['deflection']:.3f}s  total {t['total']:.3f}s")
    print(f"wrote per-vertex fields to {args.out}")


def cmd_crossvalidate(args):
    samples = load_dataset(args.dataset)
    config = CVConfig(folds=args.folds, seed=args.seed, fraction=args.fraction,
                      smoothing_k=args.smoothing_k, gbm=_gbm_config(args, args.seed),
                      cnn_epochs=args.epochs, cnn_batch_size=args.batch_size,
                      cnn_step_size=args.step_size)
    report = crossvalidate(samples, config)
    with open(args.out, "w") as fh:
        fh.write(report_to_json(report))
        fh.write("\n")
    for fr in report["per_fold"]:
        ft, df = fr["fill_time"], fr["deflection"]
        print(f"fold {fr['fold']}: fill RMSE {ft['rmse_samples']:.4f}/{ft['rmse_points']:.4f} "
              f"MAE {ft['mae_samples']:.4f}/{ft['mae_points']:.4f}  "
              f"defl RMSE {df['rmse_samples']:.4f}/{df['rmse_points']:.4f} "
              f"MAE {df['mae_samples']:.4f}/{df['mae_points']:.4f} "
              f"(samples/points)")
    m = report["mean"]
    print(f"mean: fill RMSE {m['fill_time']['rmse_samples']:.4f} "
          f"MAE {m['fill_time']['mae_samples']:.4f}  "
          f"defl RMSE {m['deflection']['rmse_samples']:.4f} "
          f"MAE {m['deflection']['mae_samples']:.4f}")
    print(f"mean: fill MSE {m['fill_time']['rmse_samples'] ** 2:.4f}  "
          f"defl MSE {m['deflection']['rmse_samples'] ** 2:.4f} (derived)")
    print(f"report written to {args.out}")


def cmd_benchmark(args):
    if args.dataset:
        sample = load_dataset(args.dataset)[args.index]
    else:
        sample = import_sample(args.mesh, args.gates)
    model, net = _load_models(args)
    record = benchmark(sample, model, net, fraction=args.fraction,
                       smoothing_k=args.smoothing_k, seed=args.seed)
    print(json.dumps(record, indent=1))


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    app = create_app(gbm_path=args.gbm, weights_blob=args.weights + ".bin",
                     weights_manifest=args.weights + ".json", capacity=args.capacity)
    uvicorn.run(app, host=args.host, port=args.port)


def cmd_export_debug(args):
    sample = import_sample(args.mesh, args.gates)
    model, _ = _load_models(args, need_net=False)
    result = predict_fields(sample.mesh, sample.gates, model, None,
                            fraction=args.fraction, smoothing_k=args.smoothing_k,
                            seed=args.seed, want_deflection=False)
    plane = fit_plane(sample.mesh.vertices)
    raster, _ = project(sample.mesh, result.fill_time, plane)
    export_raster(raster, plane, args.out)
    print(f"wrote {args.out}_fill.pgm, {args.out}_mask.pgm, {args.out}.json")


def build_parser(defaults: dict) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moldcast",
        description="fast surrogate prediction of fill time and deflection")
    parser.add_argument("--config", help="JSON file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = []

    def add_parser(name, **kw):
        p = sub.add_parser(name, **kw)
        subparsers.append(p)
        return p

    p = add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--seed", type=int, required="seed" not in defaults)
    p.add_argument("--min-vertices", type=int, default=2000)
    p.add_argument("--max-vertices", type=int, default=10000)
    p.add_argument("--min-gates", type=int, default=1)
    p.add_argument("--max-gates", type=int, default=5)
    p.set_defaults(func=cmd_synth)

    p = add_parser("train-filltime", help="train the boosted fill-time model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required="seed" not in defaults)
    p.add_argument("--fraction", type=float, default=DEFAULT_FRACTION)
    _add_gbm_flags(p)
    p.set_defaults(func=cmd_train_filltime)

    p = add_parser("train-deflection", help="train the deflection network")
    p.add_argument("--dataset", required=True)
    p.add_argument("--gbm", required=True, help="trained fill-time model file")
    p.add_argument("--out", required=True, help="weights prefix (.bin/.json)")
    p.add_argument("--seed", type=int, required="seed" not in defaults)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--step-size", type=float, default=1e-3)
    p.add_argument("--fraction", type=float, default=DEFAULT_FRACTION)
    p.add_argument("--smoothing-k", type=int, default=DEFAULT_SMOOTHING_K)
    p.set_defaults(func=cmd_train_deflection)

    p = add_parser("predict", help="predict per-vertex fields for a mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--gates", required=True)
    p.add_argument("--gbm", required=True)
    p.add_argument("--weights", default=None, help="weights prefix (.bin/.json)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fraction", type=float, default=DEFAULT_FRACTION)
    p.add_argument("--smoothing-k", type=int, default=DEFAULT_SMOOTHING_K)
    p.add_argument("--no-deflection", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = add_parser("crossvalidate", help="k-fold evaluation on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required="seed" not in defaults)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--step-size", type=float, default=5e-3)
    p.add_argument("--fraction", type=float, default=DEFAULT_FRACTION)
    p.add_argument("--smoothing-k", type=int, default=DEFAULT_SMOOTHING_K)
    _add_gbm_flags(p)
    p.set_defaults(func=cmd_crossvalidate)

    p = add_parser("benchmark", help="time the pipeline stages")
    p.add_argument("--mesh")
    p.add_argument("--gates")
    p.add_argument("--dataset")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--gbm", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fraction", type=float, default=DEFAULT_FRACTION)
    p.add_argument("--smoothing-k", type=int, default=DEFAULT_SMOOTHING_K)
    p.set_defaults(func=cmd_benchmark)

    p = add_parser("serve", help="run the HTTP service")
    p.add_argument("--gbm", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--capacity", type=int, default=8)
    p.set_defaults(func=cmd_serve)

    p = add_parser("export-debug", help="export the predicted fill-time raster")
    p.add_argument("--mesh", required=True)
    p.add_argument("--gates", required=True)
    p.add_argument("--gbm", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fraction", type=float, default=DEFAULT_FRACTION)
    p.add_argument("--smoothing-k", type=int, default=DEFAULT_SMOOTHING_K)
    p.set_defaults(func=cmd_export_debug)

    # subparsers parse into a fresh namespace, so config defaults must be
    # installed on each of them, not just on the root parser
    clean = {k: v for k, v in defaults.items() if v is not None}
    parser.set_defaults(**clean)
    for p in subparsers:
        p.set_defaults(**clean)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    defaults = _config_defaults(argv)
    parser = build_parser(defaults)
    args = parser.parse_args(argv)
    if args.command == "predict" and not args.no_deflection and not args.weights:
        parser.error("predict needs --weights unless --no-deflection is set")
    if args.command == "benchmark" and not args.dataset and not (args.mesh and args.gates):
        parser.error("benchmark needs either --dataset or --mesh plus --gates")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
