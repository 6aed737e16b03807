"""Command-line pipeline: train -> compress -> finetune -> eval -> report -> bench."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from sqlalchemy.exc import ArgumentError, SQLAlchemyError

from . import accounting, asserter, compress, nn, sft
from .config import OrthoConfig, TrainConfig
from .datasets import Dataset, DatasetSource, load_dataset
from .errors import BasisNetError
from .ledger import RunLedger
from .serialization import load_model, save_model
from .utils import atomic_write

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class UsageError(Exception):
    """A flag value was rejected after parsing."""


def _add_data_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("data")
    group.add_argument(
        "--data",
        choices=["synthetic", "idx", "cifar", "npz"],
        default="synthetic",
        help="Dataset kind (default: synthetic)",
    )
    group.add_argument("--images", help="IDX image file, CIFAR batch file or npz file")
    group.add_argument("--labels", help="IDX label file")
    group.add_argument("--limit", type=int, help="Use only the first N samples")
    group.add_argument(
        "--samples", type=int, default=512, help="Synthetic sample count (default: 512)"
    )
    group.add_argument(
        "--data-seed", type=int, default=0, help="Synthetic generator seed (default: 0)"
    )


def _add_train_args(parser: argparse.ArgumentParser, epochs: int) -> None:
    group = parser.add_argument_group("optimizer")
    group.add_argument("--epochs", type=int, default=epochs, help=f"Epochs (default: {epochs})")
    group.add_argument("--lr", type=float, default=0.01, help="Learning rate (default: 0.01)")
    group.add_argument("--momentum", type=float, default=0.9, help="Momentum (default: 0.9)")
    group.add_argument("--batch-size", type=int, default=32, help="Batch size (default: 32)")


def _add_seed(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="my_basisnet", description="Basis-filter CNN compression")
    parser.add_argument(
        "--db-url",
        default=None,
        help="Record runs in this database, e.g. sqlite:///runs.db (default: disabled)",
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default: WARNING)",
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    train = subparsers.add_parser("train", help="Train a baseline network")
    train.add_argument(
        "--network", choices=["mnist", "synthetic"], default="synthetic",
        help="Reference architecture (default: synthetic)",
    )
    train.add_argument("--out", required=True, help="Model file to write")
    _add_seed(train)
    _add_train_args(train, epochs=3)
    _add_data_args(train)

    comp = subparsers.add_parser("compress", help="Plan ranks and substitute BasisConv layers")
    comp.add_argument("--model", required=True, help="Model file to compress")
    comp.add_argument("--out", required=True, help="Compressed model file to write")
    comp.add_argument(
        "--mode", choices=["energy", "accuracy", "speedup"], default="energy",
        help="Rank policy (default: energy)",
    )
    comp.add_argument("--t-min", type=float, default=0.95, help="Energy threshold (default: 0.95)")
    comp.add_argument(
        "--max-drop", type=float, default=0.03, help="Allowed accuracy drop (default: 0.03)"
    )
    comp.add_argument("--speedup", type=float, default=3.0, help="Target speedup (default: 3.0)")
    comp.add_argument("--plan-out", help="Write the plan as JSON text to this file")
    _add_seed(comp)
    _add_data_args(comp)

    fine = subparsers.add_parser(
        "finetune", help="Spectral Fine Tuning of a compressed model, or --spatial fine tuning"
    )
    fine.add_argument("--model", required=True, help="Model file (compressed unless --spatial)")
    fine.add_argument("--out", required=True, help="Fine-tuned model file to write")
    fine.add_argument("--alpha", type=float, default=0.5, help="Penalty mixing (default: 0.5)")
    fine.add_argument(
        "--ortho-weight", type=float, default=1.0, help="Penalty multiplier (default: 1.0)"
    )
    fine.add_argument(
        "--freeze-basis", action="store_true", help="Tune spectral weights only"
    )
    fine.add_argument(
        "--spatial", action="store_true",
        help="Plain fine tuning of every layer without the penalty (baseline for comparison)",
    )
    fine.add_argument("--losses-out", help="Write the per-epoch loss curve as JSON to this file")
    _add_seed(fine)
    _add_train_args(fine, epochs=1)
    _add_data_args(fine)

    ev = subparsers.add_parser("eval", help="Accuracy of a model on a dataset")
    ev.add_argument("--model", required=True, help="Model file")
    _add_data_args(ev)

    report = subparsers.add_parser("report", help="Compare FLOPs, params and filters of two models")
    report.add_argument("--original", required=True, help="Original model file")
    report.add_argument("--compressed", required=True, help="Compressed model file")
    report.add_argument("--json", action="store_true", help="Emit JSON instead of a table")
    report.add_argument(
        "--flops-convention", choices=sorted(accounting.FLOPS_CONVENTIONS), default="mac",
        help="1 FLOP = 1 MAC (mac) or 2 MACs (2xmac) (default: mac)",
    )
    report.add_argument(
        "--no-accuracy", action="store_true", help="Skip evaluating both models"
    )
    report.add_argument("--out", help="Also write the report to this file")
    _add_data_args(report)

    bench = subparsers.add_parser("bench", help="Single-threaded inference timing")
    bench.add_argument("--model", required=True, help="Model file")
    bench.add_argument(
        "--repetitions", type=int, default=10, help="Timed forward passes (default: 10)"
    )
    _add_seed(bench)

    runs = subparsers.add_parser("runs", help="List runs recorded with --db-url")
    runs.add_argument("--filter-command", dest="filter_command", help="Only this subcommand")
    runs.add_argument("--limit", type=int, help="Newest N runs")
    return parser


def _dataset(args: argparse.Namespace) -> Dataset:
    try:
        source = DatasetSource(
            kind=args.data,
            images=args.images,
            labels=args.labels,
            count=args.samples,
            seed=args.data_seed,
        )
        if args.limit is not None:
            asserter.positive_int("--limit: ", limit=args.limit)
    except ValueError as e:
        raise UsageError(str(e)) from e
    return load_dataset(source, args.limit)


def _train_config(args: argparse.Namespace, **ortho: float) -> TrainConfig:
    try:
        return TrainConfig(
            learning_rate=args.lr,
            momentum=args.momentum,
            batch_size=args.batch_size,
            epochs=args.epochs,
            seed=args.seed,
            **ortho,
        )
    except ValueError as e:
        raise UsageError(str(e)) from e


def _cmd_train(args: argparse.Namespace) -> dict[str, Any]:
    config = _train_config(args)
    dataset = _dataset(args)
    network = nn.reference_network(args.network, args.seed)
    report = nn.train(network, dataset, config)
    save_model(network, args.out)
    print(f"✅ Trained {args.network} network saved to {args.out}")
    print(f"   final loss {report.final_loss:.6f}, training accuracy {report.final_accuracy:.4f}")
    return {"network": args.network, "config": config.to_dict(), "train": report.to_dict()}


def _check_policy_flags(args: argparse.Namespace) -> None:
    try:
        if args.mode == "energy":
            asserter.in_range("--t-min", args.t_min, 0.0, 1.0, low_inclusive=False)
        elif args.mode == "accuracy":
            asserter.in_range("--max-drop", args.max_drop, 0.0, 1.0)
        else:
            asserter.in_range("--speedup", args.speedup, 0.0, float("inf"), low_inclusive=False)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _cmd_compress(args: argparse.Namespace) -> dict[str, Any]:
    _check_policy_flags(args)
    network = load_model(args.model)
    if args.mode == "energy":
        plan = compress.plan_by_energy(network, args.t_min)
    elif args.mode == "speedup":
        plan = compress.plan_by_speedup(network, args.speedup)
    else:
        plan = compress.plan_by_accuracy(network, _dataset(args), args.max_drop)
    compressed = compress.apply_plan(network, plan)
    save_model(compressed, args.out)
    if args.plan_out:
        compress.save_plan(plan, args.plan_out)
    print(plan.describe())
    print(
        f"✅ Compressed {len(plan.compressed)} of {len(plan.entries)} conv layers; "
        f"model saved to {args.out}"
    )
    return plan.to_dict()


def _cmd_finetune(args: argparse.Namespace) -> dict[str, Any]:
    if args.spatial and args.freeze_basis:
        raise UsageError("--freeze-basis cannot be combined with --spatial")
    config = _train_config(args, ortho_alpha=args.alpha, ortho_weight=args.ortho_weight)
    network = load_model(args.model)
    if args.spatial:
        mode, ortho = "spatial", None
        report = sft.spatial_finetune(network, _dataset(args), config)
    else:
        mode, ortho = "spectral", OrthoConfig(args.alpha, args.ortho_weight, args.freeze_basis)
        report = sft.spectral_finetune(network, _dataset(args), config, ortho)
    save_model(network, args.out)
    curve = {"mode": mode, **report.to_dict()}
    if args.losses_out:
        text = json.dumps(curve, indent=2, sort_keys=True) + "\n"
        atomic_write(args.losses_out, text.encode("utf-8"))
    print(f"✅ Fine-tuned model ({mode}) saved to {args.out}")
    line = f"   final loss {report.final_loss:.6f}, training accuracy {report.final_accuracy:.4f}"
    if report.ortho_residuals:
        line += f", orthogonality residual {report.ortho_residuals[-1]:.3e}"
    print(line)
    return {
        "config": config.to_dict(),
        "ortho": ortho.to_dict() if ortho else None,
        "train": curve,
    }


def _cmd_eval(args: argparse.Namespace) -> dict[str, Any]:
    network = load_model(args.model)
    dataset = _dataset(args)
    accuracy = nn.evaluate(network, dataset)
    print(f"✅ Accuracy on {len(dataset)} samples: {accuracy:.4f}")
    return {"accuracy": accuracy, "samples": len(dataset)}


def _cmd_report(args: argparse.Namespace) -> dict[str, Any]:
    original = load_model(args.original)
    compressed = load_model(args.compressed)
    accuracies = None
    if not args.no_accuracy:
        dataset = _dataset(args)
        accuracies = (nn.evaluate(original, dataset), nn.evaluate(compressed, dataset))
    report = accounting.compare(original, compressed, accuracies=accuracies)
    if args.json:
        text = report.to_json(args.flops_convention)
    else:
        text = report.to_table(args.flops_convention)
    print(text)
    if args.out:
        atomic_write(args.out, (text + "\n").encode("utf-8"))
    return report.to_dict(args.flops_convention)["totals"]


def _cmd_bench(args: argparse.Namespace) -> dict[str, Any]:
    if args.repetitions < 3:
        raise UsageError("--repetitions should be at least 3")
    network = load_model(args.model)
    result = accounting.bench_inference(network, repetitions=args.repetitions, seed=args.seed)
    print(
        f"✅ {args.repetitions} runs: mean {result.mean_ms:.3f} ms, "
        f"p50 {result.p50_ms:.3f} ms, p95 {result.p95_ms:.3f} ms"
    )
    return result.to_dict()


COMMANDS = {
    "train": _cmd_train,
    "compress": _cmd_compress,
    "finetune": _cmd_finetune,
    "eval": _cmd_eval,
    "report": _cmd_report,
    "bench": _cmd_bench,
}


def _model_path(args: argparse.Namespace) -> str | None:
    for name in ("out", "model", "compressed"):
        value = getattr(args, name, None)
        if value:
            return str(Path(value))
    return None


def _open_ledger(database_url: str) -> RunLedger:
    try:
        return RunLedger(database_url)
    except ArgumentError as e:
        raise UsageError(f"--db-url {database_url!r} is not a database URL: {e}") from e


def cli(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand.

    Args:
        argv (Sequence[str] | None, optional): Arguments without the program name. Defaults to sys.argv[1:].

    Returns:
        int: 0 on success, 1 on a usage error, 2 on a data, model or database error.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    if not args.command:
        parser.print_help()
        return EXIT_USAGE
    ledger = None
    try:
        if args.command == "runs" and not args.db_url:
            raise UsageError("runs needs --db-url")
        if args.db_url:
            ledger = _open_ledger(args.db_url)
        if args.command == "runs":
            ledger.print_runs(args.filter_command, args.limit)
            return EXIT_OK
        summary = COMMANDS[args.command](args)
        if ledger is not None:
            result = ledger.record(
                args.command, getattr(args, "seed", None), _model_path(args), summary
            )
            if not result["success"]:
                print(f"❌ Could not record the run: {result['error']}", file=sys.stderr)
        return EXIT_OK
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    except (BasisNetError, OSError, ValueError, SQLAlchemyError) as e:
        print(f"❌ {args.command} failed: {e}", file=sys.stderr)
        return EXIT_DATA
    finally:
        if ledger is not None:
            ledger.dispose()


def main() -> None:
    sys.exit(cli())
