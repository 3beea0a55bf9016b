"""Command-line entry point: train, predict, evaluate, compare and synth."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import io
from .metrics import UndefinedMetric, evaluate, precision_recall_points
from .optimizer import ConvergenceError
from .synth import generate_synthetic
from .trainer import (
    Dataset,
    TrainConfig,
    fit,
    fit_uniform_baseline,
    predict_dataset,
    transductive_scores,
)

ROLES = ("labeled", "unlabeled", "train", "test", "all")


def _rows(split: dict, role: str, N: int) -> np.ndarray:
    if role == "train":
        return np.concatenate([split["labeled"], split["unlabeled"]])
    if role == "all":
        return np.arange(N)
    return split[role]


def _config(path) -> TrainConfig:
    return io.read_config(path) if path else TrainConfig()


def cmd_train(args) -> int:
    data = io.load_dataset(args.manifest)
    model = fit(data, _config(args.config))
    io.save_model(args.out_model, model)
    if args.out_trace:
        io.write_vector(args.out_trace, model.objective_trace)
    print(f"beta = {' '.join(io.fmt(x) for x in model.beta)}")
    print(f"theta = {' '.join(io.fmt(x) for x in model.theta)}")
    print(f"outer_iterations = {model.objective_trace.size - 1}")
    return 0


def cmd_predict(args) -> int:
    model = io.load_model(args.model)
    data = io.load_dataset(args.manifest)
    rows = _rows({"labeled": data.labeled, "unlabeled": data.unlabeled, "test": data.test}, args.split, data.n_samples)
    train_index = data.train_index
    if train_index.size != model.train_index.size or np.any(train_index != model.train_index):
        raise ValueError("the manifest's labeled/unlabeled rows differ from those the model was trained on")
    io.write_matrix(args.out_scores, predict_dataset(model, data, rows))
    return 0


def cmd_evaluate(args) -> int:
    manifest = io.Manifest.read(args.manifest)
    truth = io.load_truth(manifest)
    split = io.load_split(manifest, io.read_labels(manifest.labels))
    rows = _rows(split, args.split, truth.shape[0])
    scores = io.read_matrix(args.scores)
    if scores.shape != (rows.size, truth.shape[1]):
        raise ValueError(f"scores are {scores.shape[0]} x {scores.shape[1]}, expected {rows.size} x {truth.shape[1]}")
    T = truth[rows]
    if np.any(T == 0) and manifest.truth is None:
        raise ValueError("rows without labels cannot be evaluated; add a truth file to the manifest")
    report = evaluate(scores, T)
    if all(np.isnan(report[k]) for k in ("mAP", "mAUC", "RL")):
        raise ValueError("every metric is undefined for these rows")
    if args.out_curves:
        curve_rows = []
        for j in range(T.shape[1]):
            try:
                prec, rec = precision_recall_points(scores[:, j], T[:, j])
            except UndefinedMetric:
                continue
            curve_rows += [[j, k + 1, float(p), float(r)] for k, (p, r) in enumerate(zip(prec, rec))]
        io.atomic_write(args.out_curves, io.format_table(["label", "cutoff", "precision", "recall"], curve_rows))
    text = io.format_report(report)
    if args.out_report:
        io.atomic_write(args.out_report, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_compare(args) -> int:
    """Learned weights against the uniform-weight baseline over repeated label draws."""
    base = io.load_dataset(args.manifest)
    cfg = _config(args.config)
    if base.truth is not None:
        truth, pool = base.truth, np.concatenate([base.labeled, base.unlabeled])
    else:
        # without ground truth only the labeled rows can be redrawn and scored
        truth, pool = base.Y, base.labeled
    if not 1 <= args.labeled_count < pool.size:
        raise ValueError(f"--labeled-count must lie in [1, {pool.size - 1}]")
    rng = np.random.default_rng(args.seed)
    header = ["repeat", "method", "mAP", "mAUC", "RL"] + [f"beta.{v}" for v in range(len(base.views))]
    rows = []
    for r in range(args.repeats):
        perm = rng.permutation(pool)
        labeled, held_out = np.sort(perm[: args.labeled_count]), np.sort(perm[args.labeled_count :])
        unlabeled = np.setdiff1d(np.concatenate([base.labeled, base.unlabeled]), labeled)
        Y = np.zeros_like(base.Y)
        Y[labeled] = truth[labeled]
        data = Dataset(views=base.views, Y=Y, labeled=labeled, unlabeled=unlabeled, test=base.test)
        position = {int(i): p for p, i in enumerate(data.train_index)}
        at = [position[int(i)] for i in held_out]
        for method, model in (("learned", fit(data, cfg)), ("uniform", fit_uniform_baseline(data, cfg))):
            rep = evaluate(transductive_scores(model)[at], truth[held_out])
            rows.append([r, method, rep["mAP"], rep["mAUC"], rep["RL"], *map(float, model.beta)])
    io.atomic_write(args.out_table, io.format_table(header, rows))
    return 0


def cmd_synth(args) -> int:
    spec = io.read_synth_spec(args.spec)
    manifest = io.save_dataset(generate_synthetic(spec), args.out_dir)
    io.atomic_write(manifest.parent / "spec.txt", io.format_synth_spec(spec))
    print(manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mv3mr", description="Multi-view vector-valued manifold regularization.")
    p.add_argument("-v", "--verbose", action="store_true", help="log outer iterations")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a model")
    t.add_argument("--manifest", required=True)
    t.add_argument("--config", help="key=value file of training settings")
    t.add_argument("--out-model", required=True)
    t.add_argument("--out-trace", help="objective value per outer iteration, one per line")
    t.set_defaults(func=cmd_train)

    q = sub.add_parser("predict", help="score rows of a dataset")
    q.add_argument("--model", required=True)
    q.add_argument("--manifest", required=True)
    q.add_argument("--split", choices=ROLES, default="test")
    q.add_argument("--out-scores", required=True)
    q.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="mAP, mAUC and ranking loss of a score file")
    e.add_argument("--scores", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--split", choices=ROLES, default="test")
    e.add_argument("--out-report", help="defaults to standard output")
    e.add_argument("--out-curves", help="precision/recall at every cut-off, per label")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("compare", help="learned weights against uniform weights over random label draws")
    c.add_argument("--manifest", required=True)
    c.add_argument("--config")
    c.add_argument("--labeled-count", type=int, required=True)
    c.add_argument("--repeats", type=int, default=10)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out-table", required=True)
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--spec", required=True, help="key=value generator settings")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except (ValueError, OSError, np.linalg.LinAlgError, ConvergenceError) as exc:
        print(f"mv3mr {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
