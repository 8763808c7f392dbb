"""Command-line entry point: ``labelspace <subcommand> ...``.

Exit status: 0 success, 2 usage error, 3 data error, 4 tolerance failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .analysis import (committee_evaluate, format_histogram, jaccard_histogram,
                       jaccard_per_image, sweep_csv, sweep_k)
from .dataset import (SyntheticSpec, generate_synthetic, load_dataset, load_features,
                      save_dataset, split)
from .embeddings import load_embeddings, save_embeddings
from .evaluation import evaluate, format_predictions, rank_batch
from .exceptions import DataFormatError
from .model import ModelConfig, init_params, load_checkpoint, save_checkpoint
from .training import (AdamConfig, LossConfig, random_grad_check, read_train_config,
                       train)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TOLERANCE = 0, 2, 3, 4

logger = logging.getLogger("labelspace")

TRAIN_DEFAULTS = {
    "margin": 1.0, "negatives": 40, "lr": 1e-3, "beta1": 0.9, "beta2": 0.999,
    "eps": 1e-8, "epochs": 30, "seed": 0, "k": 8, "hidden_dims": (), "decay": 1.0,
    "init_scale": 0.1,
}


class UsageError(Exception):
    pass


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, command: str, config: dict, inputs: dict, seed) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {name: {"path": str(p), "sha256": _digest(p)}
                   for name, p in inputs.items()},
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


# -- subcommands -------------------------------------------------------------

def cmd_gen_synthetic(args) -> int:
    if args.labels < 2:
        raise UsageError("--labels must be >= 2")
    if not 1 <= args.positives < args.labels:
        raise UsageError("--positives must be in [1, labels)")
    if args.noise < 0:
        raise UsageError("--noise must be >= 0")
    if not 0 <= args.test_size < args.instances:
        raise UsageError("--test-size must be in [0, instances)")
    try:
        spec = SyntheticSpec(args.labels, args.dim, args.features, args.k_star,
                             args.instances, args.positives, args.noise, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset, table, truth = generate_synthetic(spec)
    save_embeddings(table, out / "embeddings.txt")
    save_dataset(dataset, table, out / "dataset.txt")
    (out / "ground_truth.json").write_text(truth.to_json(), encoding="utf-8")
    if args.test_size:
        train_set, test_set = split(dataset, 1 - args.test_size / len(dataset), args.seed)
        save_dataset(train_set, table, out / "train.txt")
        save_dataset(test_set, table, out / "test.txt")
    config = {"labels": args.labels, "dim": args.dim, "features": args.features,
              "k_star": args.k_star, "instances": args.instances,
              "positives": args.positives, "noise": args.noise,
              "test_size": args.test_size}
    write_manifest(out / "gen-synthetic.manifest.json", "gen-synthetic", config, {},
                   args.seed)
    print(f"wrote {len(dataset)} instances, {len(table)} labels to {out}")
    return EXIT_OK


def resolve_train_config(args) -> dict:
    """Built-in defaults, then the config file, then explicit flags."""
    values = dict(TRAIN_DEFAULTS)
    if args.config:
        values.update(read_train_config(args.config))
    for key in TRAIN_DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = tuple(flag) if key == "hidden_dims" else flag
    values["hidden_dims"] = tuple(values["hidden_dims"])
    return values


def _configs(values: dict, feature_dim: int, d: int):
    try:
        return (ModelConfig(feature_dim, values["hidden_dims"], values["k"], d,
                            values["init_scale"]),
                LossConfig(values["margin"], values["negatives"]),
                AdamConfig(values["lr"], values["beta1"], values["beta2"], values["eps"],
                           values["decay"]))
    except ValueError as exc:
        raise UsageError(str(exc))


def cmd_train(args) -> int:
    values = resolve_train_config(args)
    if values["epochs"] < 0:
        raise UsageError("epochs must be >= 0")
    table = load_embeddings(args.embeddings, normalize=args.normalize)
    dataset = load_dataset(args.dataset, table)
    model_cfg, loss_cfg, opt_cfg = _configs(values, dataset.feature_dim, table.dim)
    params, report = train(dataset, table, model_cfg, loss_cfg, opt_cfg,
                           values["epochs"], values["seed"])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, out)
    report_path = Path(args.report) if args.report else out.with_suffix(".report.csv")
    report_path.write_text(report.to_csv(), encoding="utf-8")
    manifest_values = {**values, "hidden_dims": list(values["hidden_dims"]),
                       "normalize": args.normalize}
    write_manifest(out.with_suffix(".manifest.json"), "train", manifest_values,
                   {"dataset": args.dataset, "embeddings": args.embeddings},
                   values["seed"])
    if report.epochs:
        last = report.epochs[-1]
        print(f"trained {values['epochs']} epochs: first loss "
              f"{report.epochs[0].mean_loss:.4f}, last loss {last.mean_loss:.4f}")
    else:
        print("epochs=0: wrote the initial parameters")
    return EXIT_OK


def _load_model(args):
    table = load_embeddings(args.embeddings, normalize=args.normalize)
    params = load_checkpoint(args.checkpoint)
    if params.config.d != table.dim:
        raise DataFormatError(args.embeddings, 1,
                              f"embedding dim {table.dim} does not match model d="
                              f"{params.config.d}")
    return params, table


def _check_topk(topk, table):
    if not 1 <= topk <= len(table):
        raise UsageError(f"--topk must be in [1, {len(table)}], got {topk}")


def cmd_predict(args) -> int:
    params, table = _load_model(args)
    _check_topk(args.topk, table)
    ids, X = load_features(args.features)
    if X.shape[1] != params.config.feature_dim:
        raise DataFormatError(args.features, 1, f"{X.shape[1]} features, model expects "
                              f"{params.config.feature_dim}")
    text = format_predictions(ids, rank_batch(params, X, table, args.threads),
                              args.topk, table)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        write_manifest(Path(args.out).with_suffix(".manifest.json"), "predict",
                       {"topk": args.topk, "normalize": args.normalize}, {
                           "checkpoint": args.checkpoint, "embeddings": args.embeddings,
                           "features": args.features}, None)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    params, table = _load_model(args)
    _check_topk(args.topk, table)
    dataset = load_dataset(args.dataset, table)
    report = evaluate(params, dataset, table, args.topk, args.threads)
    print(report.format_table())
    if args.out:
        Path(args.out).write_text(report.to_csv(table.labels), encoding="utf-8")
        write_manifest(Path(args.out).with_suffix(".manifest.json"), "evaluate",
                       {"topk": args.topk, "normalize": args.normalize}, {
                           "checkpoint": args.checkpoint, "embeddings": args.embeddings,
                           "dataset": args.dataset}, None)
    return EXIT_OK


def cmd_analyze(args) -> int:
    params, table = _load_model(args)
    _check_topk(args.topk, table)
    for n in args.vote_n:
        if not 1 <= n <= len(table):
            raise UsageError(f"--vote-n values must be in [1, {len(table)}]")
    if params.config.k < 2:
        raise UsageError("committee overlap needs a model with k >= 2")
    dataset = load_dataset(args.dataset, table)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows = [("voting_top%d" % n, committee_evaluate(params, dataset, table, n,
                                                    args.topk, args.threads))
            for n in args.vote_n]
    rows.append(("full", evaluate(params, dataset, table, args.topk, args.threads)))
    lines = ["method,C-P,C-R,C-F1,O-P,O-R,O-F1"]
    for name, report in rows:
        lines.append(",".join([name] + [repr(v) for v in report.summary().values()]))
        print(f"{name:>14}  " + "  ".join(f"{k} {100 * v:6.2f}%"
                                          for k, v in report.summary().items()))
    (out / "committee.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    values = jaccard_per_image(params, dataset, table, args.jaccard_n)
    (out / "jaccard.csv").write_text(
        "id,mean_jaccard\n" + "".join(f"{i},{v!r}\n" for i, v in zip(dataset.ids, values)),
        encoding="utf-8")
    centers, counts = jaccard_histogram(values)
    (out / "jaccard_hist.txt").write_text(format_histogram(centers, counts),
                                          encoding="utf-8")
    print(f"mean pairwise Jaccard (top {args.jaccard_n}): {values.mean():.4f} "
          f"(std {values.std():.4f})")
    write_manifest(out / "analyze.manifest.json", "analyze",
                   {"topk": args.topk, "vote_n": args.vote_n, "jaccard_n": args.jaccard_n,
                    "normalize": args.normalize},
                   {"checkpoint": args.checkpoint, "embeddings": args.embeddings,
                    "dataset": args.dataset}, None)
    return EXIT_OK


def cmd_sweep_k(args) -> int:
    values = resolve_train_config(args)
    table = load_embeddings(args.embeddings, normalize=args.normalize)
    dataset = load_dataset(args.dataset, table)
    if args.test:
        train_set, test_set = dataset, load_dataset(args.test, table)
    else:
        try:
            train_set, test_set = split(dataset, args.train_fraction, values["seed"])
        except ValueError as exc:
            raise UsageError(str(exc))
    _check_topk(args.topk, table)
    if not args.k_list or min(args.k_list) < 1:
        raise UsageError("--k-list needs positive integers")
    model_cfg, loss_cfg, opt_cfg = _configs(values, dataset.feature_dim, table.dim)
    rows = sweep_k(train_set, test_set, table, args.k_list, model_cfg, loss_cfg, opt_cfg,
                   values["epochs"], values["seed"], args.topk, args.threads)
    text = sweep_csv(rows)
    Path(args.out).write_text(text, encoding="utf-8")
    for row in rows:
        print(f"k={row.k:<4d} O-F1 {100 * row.metrics.o_f1:6.2f}%  "
              f"C-F1 {100 * row.metrics.c_f1:6.2f}%")
    inputs = {"dataset": args.dataset, "embeddings": args.embeddings}
    if args.test:
        inputs["test"] = args.test
    write_manifest(Path(args.out).with_suffix(".manifest.json"), "sweep-k",
                   {**values, "hidden_dims": list(values["hidden_dims"]),
                    "k_list": args.k_list, "topk": args.topk}, inputs, values["seed"])
    return EXIT_OK


def cmd_grad_check(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if not args.step > 0:
        raise UsageError("--step must be > 0")
    start = time.perf_counter()
    errors = random_grad_check(args.trials, args.step, args.seed)
    worst = max(errors)
    elapsed = time.perf_counter() - start
    status = "PASS" if worst <= args.tolerance else "FAIL"
    print(f"{status}: max relative error {worst:.3e} over {args.trials} trials "
          f"(tolerance {args.tolerance:g}, step {args.step:g}, {elapsed:.1f}s)")
    return EXIT_OK if worst <= args.tolerance else EXIT_TOLERANCE


# -- parser ------------------------------------------------------------------

def _add_train_flags(p):
    p.add_argument("--config", help="key = value training config file")
    p.add_argument("--k", type=int, help="rows of the transformation matrix (default 8)")
    p.add_argument("--hidden-dims", dest="hidden_dims", type=_int_list,
                   help="comma-separated hidden widths; empty for a linear head")
    p.add_argument("--margin", type=float, help="hinge margin m (default 1.0)")
    p.add_argument("--negatives", type=int, help="negatives per visit (default 40)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 1e-3)")
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--decay", type=float, help="per-epoch learning-rate factor (1 = off)")
    p.add_argument("--init-scale", dest="init_scale", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)


def _add_model_inputs(p):
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--normalize", action="store_true",
                   help="L2-normalize label vectors on load")
    p.add_argument("--threads", type=_positive_int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelspace",
        description="Feature-conditioned label-space transformation for multilabel "
                    "classification.",
        epilog="File formats: embeddings '<count> <dim>' header then "
               "'<label> v1 .. vd'; datasets '#dims f' then 'id | f1 .. ff | labels'.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a planted synthetic benchmark",
                       description="Writes embeddings.txt, dataset.txt, "
                                   "ground_truth.json and (with --test-size) "
                                   "train.txt/test.txt into --out-dir.")
    p.add_argument("--labels", type=int, default=50)
    p.add_argument("--dim", type=int, default=20, help="word-vector dimension d")
    p.add_argument("--features", type=int, default=16, help="feature dimension f")
    p.add_argument("--k-star", dest="k_star", type=int, default=2,
                   help="rows of the planted transformation")
    p.add_argument("--instances", type=int, default=2600)
    p.add_argument("--positives", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--test-size", dest="test_size", type=int, default=600)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train a model",
                       description="Writes a checkpoint, a per-epoch report CSV "
                                   "(epoch, mean_loss, violation_rate, seconds) and "
                                   "a manifest. Flags override --config values.")
    p.add_argument("--dataset", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", default="model.ckpt")
    p.add_argument("--report", help="report CSV path (default: <out>.report.csv)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="rank labels for feature rows",
                       description="Input lines 'id | f1 .. ff'. Output lines "
                                   "'id | label1 .. | dist1 ..'.")
    _add_model_inputs(p)
    p.add_argument("--features", required=True)
    p.add_argument("--topk", type=int, default=3)
    p.add_argument("--out", help="dump path (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="C-P/C-R/O-P/O-R/F1 on a dataset",
                       description="Prints a summary table; --out writes one CSV row "
                                   "per class plus a summary row.")
    _add_model_inputs(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--topk", type=int, default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="committee voting and row overlap",
                       description="Writes committee.csv, jaccard.csv and "
                                   "jaccard_hist.txt ('bin_center count').")
    _add_model_inputs(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--vote-n", dest="vote_n", type=_int_list, default=[1, 3, 5])
    p.add_argument("--jaccard-n", dest="jaccard_n", type=_positive_int, default=5)
    p.add_argument("--topk", type=int, default=3)
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep-k", help="train and evaluate one model per k",
                       description="Writes a CSV with k, C-P, C-R, C-F1, O-P, O-R, "
                                   "O-F1, final_loss.")
    p.add_argument("--dataset", required=True)
    p.add_argument("--test", help="test set (default: split --dataset)")
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=0.75)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--k-list", dest="k_list", type=_int_list, default=[2, 4, 8, 16])
    p.add_argument("--topk", type=int, default=3)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--out", default="sweep.csv")
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep_k)

    p = sub.add_parser("grad-check", help="verify gradients by finite differences",
                       description="Exit 4 when the worst relative error exceeds "
                                   "--tolerance.")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(f"{args.command}: {exc}")
    except (DataFormatError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"labelspace {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
