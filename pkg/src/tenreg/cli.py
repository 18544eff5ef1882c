"""Command-line interface.

Subcommands: train, eval, gradcheck, analyze, gap-demo, image-rank.
Exit codes follow one contract everywhere: 0 success, 1 runtime or check
failure, 2 flag/usage errors, 3 data errors (missing or malformed files).
Report-producing paths write machine-readable output (CSV/JSON) and render
a matplotlib figure next to it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from .data_io import IdxError, SplitSpec, load_dataset, split
from .decompositions import RankSpec, random_weight, zero_weight
from .gap import GapSpec, gap_as_tucker_trl, gap_fc_as_tucker_trl, gap_forward
from .jacobians import finite_difference_grads, gradient_mismatch
from .rank_analysis import (
    bottleneck_rank,
    empirical_image_dim,
    gap_report,
    rank_report,
)
from .trainer import TrainConfig, evaluate, train, with_test_accuracy
from .trl import (
    TrlLayer,
    backward,
    forward,
    grad_list,
    load_layer,
    param_names,
    save_layer,
)

DATA_DIR_ENV = "TENREG_DATA_DIR"


class FlagError(Exception):
    """Invalid flag combination detected after argparse."""


@dataclass(frozen=True)
class Command:
    name: str
    flags: argparse.Namespace


def _parse_dims(text: str):
    try:
        dims = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise FlagError(f"--dims must be a comma list of integers, got {text!r}")
    if not dims or any(d < 1 for d in dims):
        raise FlagError(f"--dims entries must be positive, got {text!r}")
    return dims


def _parse_rank(fmt: str, text: str, dims=None) -> RankSpec:
    """Rank flag syntax: one integer for CP, N+1 comma values for Tucker,
    N+2 for TT (boundary 1s included), where N counts the input modes."""
    parts = text.split(",")
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise FlagError(f"--rank must be integers, got {text!r}")
    if fmt == "cp":
        if len(values) != 1:
            raise FlagError(f"CP takes a single rank integer, got {text!r}")
        spec = RankSpec("cp", values[0])
    elif fmt == "tucker":
        spec = _rank_spec_checked("tucker", values)
    elif fmt == "tt":
        spec = _rank_spec_checked("tt", values)
    else:
        raise FlagError(f"format {fmt!r} does not take a rank")
    if dims is not None and fmt != "cp":
        expected = len(dims) if fmt == "tucker" else len(dims) + 1
        if len(values) != expected:
            raise FlagError(
                f"{fmt} over {len(dims)} weight modes needs {expected} rank "
                f"entries, got {len(values)}"
            )
    return spec


def _rank_spec_checked(fmt, values) -> RankSpec:
    try:
        return RankSpec(fmt, values)
    except ValueError as exc:
        raise FlagError(str(exc))


def _data_dir(flags) -> str:
    path = flags.data_dir or os.environ.get(DATA_DIR_ENV)
    if not path:
        raise FlagError(
            f"no data directory: pass --data-dir or set {DATA_DIR_ENV}"
        )
    return path


def _emit(obj, as_json: bool, lines) -> None:
    if as_json:
        print(json.dumps(obj, indent=2))
    else:
        for line in lines:
            print(line)


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(flags) -> int:
    data_dir = _data_dir(flags)
    full = load_dataset(data_dir, "train", name="train")
    dims = full.inputs.shape[1:] + (10,)
    spec = _parse_rank(flags.format, flags.rank, dims)
    config = TrainConfig(
        format=flags.format,
        rank=spec.values,
        max_steps=flags.max_steps,
        learning_rate=flags.lr,
        momentum=flags.momentum,
        batch_size=flags.batch_size,
        eval_every=flags.eval_every,
        seed=flags.seed,
        init_std=flags.init_std,
        init_bias=flags.init_bias,
        early_stop_patience=flags.patience,
    )
    train_set, val_set = split(
        full, SplitSpec(flags.train_size, flags.val_size, flags.seed)
    )
    layer, log = train(config, train_set, val_set)
    try:
        test_set = load_dataset(data_dir, "t10k", name="test")
    except (FileNotFoundError, IdxError):
        test_set = None
    if test_set is not None:
        _, test_acc = evaluate(layer, test_set)
        log = with_test_accuracy(log, test_acc)

    os.makedirs(flags.out_dir, exist_ok=True)
    save_layer(layer, os.path.join(flags.out_dir, "checkpoint.json"))
    with open(os.path.join(flags.out_dir, "log.csv"), "w") as fh:
        fh.write(log.to_csv_text())
    summary = {
        "format": flags.format,
        "rank": spec.values if isinstance(spec.values, int) else list(spec.values),
        "train_size": len(train_set),
        "val_size": len(val_set),
        "best_step": log.best_step,
        "best_val_accuracy": log.best_val_accuracy,
        "test_accuracy": log.test_accuracy,
        "seconds": log.seconds,
    }
    with open(os.path.join(flags.out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    if log.records:
        from .plots import save_training_curves

        save_training_curves(log, os.path.join(flags.out_dir, "curves.png"))
    _emit(
        summary,
        flags.json,
        [
            f"best validation accuracy {log.best_val_accuracy:.4f} "
            f"at step {log.best_step}",
        ]
        + (
            [f"test accuracy {log.test_accuracy:.4f}"]
            if log.test_accuracy is not None
            else []
        )
        + [f"outputs written to {flags.out_dir}"],
    )
    return 0


def cmd_eval(flags) -> int:
    layer = load_layer(flags.checkpoint)
    data_dir = _data_dir(flags)
    dataset = load_dataset(data_dir, flags.split, name=flags.split)
    loss, acc = evaluate(layer, dataset)
    _emit(
        {"split": flags.split, "loss": loss, "accuracy": acc},
        flags.json,
        [f"{flags.split}: loss {loss:.6f}, accuracy {acc:.4f}"],
    )
    return 0


def cmd_analyze(flags) -> int:
    dims = _parse_dims(flags.dims)
    if len(dims) < 2:
        raise FlagError("--dims needs at least an input mode and the output dim")
    reports = []
    if flags.format == "gap":
        if flags.rank:
            raise FlagError("--format gap takes no --rank")
        reports.append(gap_report(dims))
    else:
        if not flags.rank:
            raise FlagError(f"--format {flags.format} needs at least one --rank")
        for text in flags.rank:
            spec = _parse_rank(flags.format, text, dims)
            reports.append(rank_report(spec, dims).to_dict())

    header = f"{'format':8} {'rank':>16} {'bottleneck':>10} {'params':>8} {'CR':>7}"
    lines = [header, "-" * len(header)]
    for rep in reports:
        rank = rep["rank"]
        rank_text = "-" if rank is None else (
            str(rank) if isinstance(rank, int) else ",".join(map(str, rank))
        )
        lines.append(
            f"{rep['format']:8} {rank_text:>16} {rep['bottleneck_rank']:>10} "
            f"{rep['param_count']:>8} {rep['compression_rate']:>7.1f}"
        )
    _emit(reports, flags.json, lines)
    if flags.out:
        csv_path = flags.out + ".csv"
        with open(csv_path, "w") as fh:
            fh.write("format,rank,bottleneck,params,compression_rate\n")
            for rep in reports:
                rank = rep["rank"]
                rank_text = "" if rank is None else (
                    str(rank) if isinstance(rank, int)
                    else " ".join(map(str, rank))
                )
                fh.write(
                    f"{rep['format']},{rank_text},{rep['bottleneck_rank']},"
                    f"{rep['param_count']},{rep['compression_rate']}\n"
                )
        from .plots import save_compression_chart

        save_compression_chart(reports, flags.out + ".png")
        if not flags.json:
            print(f"report written to {csv_path} and {flags.out}.png")
    return 0


def cmd_gradcheck(flags) -> int:
    dims = _parse_dims(flags.dims)
    if len(dims) < 2:
        raise FlagError("--dims needs at least an input mode and the output dim")
    spec = _parse_rank(flags.format, flags.rank, dims)
    rng = np.random.default_rng(flags.seed)
    layer = TrlLayer(
        random_weight(spec, dims, rng), rng.standard_normal(dims[-1])
    )
    x = rng.standard_normal(dims[:-1])
    upstream = rng.standard_normal(dims[-1])
    analytic = grad_list(backward(layer, x, upstream))
    numeric = finite_difference_grads(layer, x, upstream, step=flags.step)
    results = []
    failed = []
    for name, a, n in zip(param_names(layer), analytic, numeric):
        report = gradient_mismatch(a, n, flags.tolerance, flags.abs_tolerance)
        results.append({"array": name, **report})
        status = "ok" if report["ok"] else "FAIL"
        print(
            f"{name:10} max_rel={report['max_rel']:.3e} "
            f"max_abs_small={report['max_abs']:.3e} {status}"
        )
        if not report["ok"]:
            failed.append(name)
    if flags.json:
        print(json.dumps(results, indent=2))
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_gap_demo(flags) -> int:
    dims = _parse_dims(flags.dims)
    spec = GapSpec(dims)
    layer = gap_as_tucker_trl(spec)
    rng = np.random.default_rng(flags.seed)
    worst = 0.0
    for _ in range(flags.samples):
        x = rng.standard_normal(dims)
        worst = max(
            worst, float(np.max(np.abs(forward(layer, x) - gap_forward(spec, x))))
        )
    outputs = {"pooling_max_abs_diff": worst}
    lines = [f"pooling vs constructed layer: max abs diff {worst:.3e}"]
    ok = worst < 1e-10
    if flags.fc_classes:
        fc_w = rng.standard_normal((spec.channel_dim, flags.fc_classes))
        fc_b = rng.standard_normal(flags.fc_classes)
        fc_layer = gap_fc_as_tucker_trl(spec, fc_w, fc_b)
        worst_fc = 0.0
        for _ in range(flags.samples):
            x = rng.standard_normal(dims)
            direct = fc_w.T @ gap_forward(spec, x) + fc_b
            worst_fc = max(
                worst_fc, float(np.max(np.abs(forward(fc_layer, x) - direct)))
            )
        outputs["fc_max_abs_diff"] = worst_fc
        lines.append(
            f"pooling+fc vs constructed layer: max abs diff {worst_fc:.3e}"
        )
        ok = ok and worst_fc < 1e-10
    _emit(outputs, flags.json, lines)
    if not ok:
        print("equivalence check failed", file=sys.stderr)
        return 1
    return 0


def cmd_image_rank(flags) -> int:
    dims = _parse_dims(flags.dims)
    if len(dims) < 2:
        raise FlagError("--dims needs at least an input mode and the output dim")
    spec = _parse_rank(flags.format, flags.rank, dims)
    rng = np.random.default_rng(flags.seed)
    if flags.zero_weight:
        weight = zero_weight(spec, dims)
    else:
        weight = random_weight(spec, dims, rng)
    layer = TrlLayer(weight, rng.standard_normal(dims[-1]))
    samples = flags.samples or 4 * dims[-1]
    bneck = bottleneck_rank(spec, dims[-1])
    empirical = empirical_image_dim(layer, samples, flags.seed + 1)
    _emit(
        {
            "bottleneck_rank": bneck,
            "empirical_image_dim": empirical,
            "samples": samples,
        },
        flags.json,
        [f"bottleneck rank {bneck}, empirical image dimension {empirical}"],
    )
    if empirical > bneck:
        print(
            f"BOUND VIOLATED: empirical {empirical} > bottleneck {bneck}",
            file=sys.stderr,
        )
        return 1
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tenreg",
        description="Low-rank tensor regression layers: train, analyze, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a TRL classifier on IDX data")
    p.add_argument("--format", required=True, choices=["cp", "tucker", "tt"])
    p.add_argument("--rank", required=True)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train-size", type=int, default=15000)
    p.add_argument("--val-size", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--max-steps", type=int, default=3000)
    p.add_argument("--eval-every", type=int, default=500)
    p.add_argument("--init-std", type=float, default=0.1)
    p.add_argument("--init-bias", type=float, default=0.1)
    p.add_argument("--patience", type=int, default=0)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--split", default="t10k", choices=["train", "t10k"])
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("analyze", help="parameter counts and compression rates")
    p.add_argument("--dims", required=True)
    p.add_argument("--format", required=True, choices=["cp", "tucker", "tt", "gap"])
    p.add_argument("--rank", action="append", default=[])
    p.add_argument("--out", default=None, help="prefix for report.csv/.png files")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--format", required=True, choices=["cp", "tucker", "tt"])
    p.add_argument("--rank", required=True)
    p.add_argument("--dims", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--abs-tolerance", type=float, default=1e-8)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("gap-demo", help="average pooling as a Tucker TRL")
    p.add_argument("--dims", required=True)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fc-classes", type=int, default=0)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("image-rank", help="bottleneck vs empirical image dimension")
    p.add_argument("--format", required=True, choices=["cp", "tucker", "tt"])
    p.add_argument("--rank", required=True)
    p.add_argument("--dims", required=True)
    p.add_argument("--samples", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zero-weight", action="store_true")
    p.add_argument("--json", action="store_true")
    return parser


_HANDLERS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
    "gradcheck": cmd_gradcheck,
    "gap-demo": cmd_gap_demo,
    "image-rank": cmd_image_rank,
}


def parse_command(argv=None) -> Command:
    flags = build_parser().parse_args(argv)
    return Command(name=flags.command, flags=flags)


def main(argv=None) -> int:
    try:
        cmd = parse_command(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return _HANDLERS[cmd.name](cmd.flags)
    except FlagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IdxError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # runtime failure contract
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
