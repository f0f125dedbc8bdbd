"""Command-line entry point: train, attack, eval, gradcheck.

Exit codes: 0 success, 1 argument errors, 2 IO/format errors. Every
subcommand prints a JSON report object (stable key order) followed by a
human-readable table; --report additionally writes the JSON to a file.
Progress counts go to standard error and are not part of any contract.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import ops
from .archive import load_archive, save_archive
from .attacks import (
    ATTACK_NAMES,
    AttackConfig,
    AttackOutcome,
    default_config,
    run_attack,
)
from .data import DatasetSource, generate_blobs, load_idx
from .errors import FileFormatError
from .evaluate import evaluate
from .model import (
    RandomizedModel,
    finite_difference_check,
    init_network,
    load_checkpoint,
    save_checkpoint,
    train_sgd,
)
from .multiattack import MultiAttackPlan, multi_attack


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; the contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _check_thread_hint() -> None:
    hint = os.environ.get("ATTACKBENCH_THREADS")
    if hint is None:
        return
    try:
        value = int(hint)
    except ValueError:
        raise ValueError(f"ATTACKBENCH_THREADS must be an integer, got {hint!r}")
    if value < 1:
        raise ValueError(f"ATTACKBENCH_THREADS must be >= 1, got {value}")
    # worker-count hint only; results never depend on it


def _parse_blobs(spec: str) -> tuple[int, int, int, float]:
    parts = spec.split(",")
    if len(parts) != 4:
        raise ValueError("--blobs expects classes,per_class,d,spread")
    return int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])


def _load_dataset(args) -> DatasetSource:
    if args.blobs is not None:
        classes, per_class, d, spread = _parse_blobs(args.blobs)
        return generate_blobs(classes, per_class, d, spread, args.data_seed)
    if args.data is None or args.labels is None:
        raise ValueError("provide --data and --labels, or --blobs")
    return load_idx(args.data, args.labels)


def _emit_report(payload: dict, report_path) -> None:
    text = json.dumps(payload, sort_keys=True)
    print(text)
    width = max(len(k) for k in payload)
    for key in sorted(payload):
        value = payload[key]
        if isinstance(value, dict):
            value = json.dumps(value, sort_keys=True)
        print(f"  {key:<{width}}  {value}")
    if report_path:
        with open(report_path, "w", encoding="utf-8") as f:
            f.write(text)


def _add_dataset_flags(p) -> None:
    p.add_argument("--data", help="IDX image file")
    p.add_argument("--labels", help="IDX label file")
    p.add_argument("--blobs", help="synthetic data: classes,per_class,d,spread")
    p.add_argument("--data-seed", type=int, default=0)


def _cmd_train(args) -> int:
    dataset = _load_dataset(args)
    hidden = [int(h) for h in args.hidden.split(",") if h.strip()] if args.hidden else []
    classes = int(dataset.labels.labels.max()) + 1
    sizes = [dataset.examples.d, *hidden, max(classes, 2)]
    net = init_network(sizes, args.seed)
    start = time.perf_counter()
    net, accuracy = train_sgd(net, dataset.examples, dataset.labels,
                              epochs=args.epochs, lr=args.lr,
                              batch_size=args.batch_size, seed=args.seed)
    elapsed = time.perf_counter() - start
    save_checkpoint(net, args.out)
    _emit_report({
        "checkpoint": args.out,
        "training_accuracy": accuracy,
        "examples": dataset.examples.n,
        "layer_sizes": sizes,
        "epochs": args.epochs,
        "lr": args.lr,
        "batch_size": args.batch_size,
        "seed": args.seed,
        "wall_time_s": elapsed,
    }, args.report)
    return 0


def _build_config(args, attack: str) -> AttackConfig:
    cfg = default_config(attack)
    overrides = {}
    for field in ("eps", "alpha", "steps", "c", "kappa", "lr", "decay", "sampling", "seed"):
        value = getattr(args, field)
        if value is not None:
            overrides[field] = value
    if args.random_start is not None:
        overrides["random_start"] = args.random_start == "true"
    overrides["mode"] = args.mode
    overrides["return_type"] = args.return_type
    cfg = AttackConfig(**{**cfg.to_dict(), **overrides})
    if attack == "mifgsm" and args.alpha is None:
        cfg = AttackConfig(**{**cfg.to_dict(), "alpha": cfg.eps / cfg.steps})
    cfg.validate(attack)
    return cfg


def _run_chunked(attack, model, dataset: DatasetSource, cfg, plan, batch_size: int):
    """Attack the dataset in evaluation chunks.

    Example ids carry dataset positions into the per-example RNG
    streams, so chunking does not change any result.
    """
    n = dataset.examples.n
    step = n if batch_size is None else max(1, batch_size)
    pieces = []
    for lo in range(0, n, step):
        hi = min(lo + step, n)
        batch = ops.ExampleBatch(dataset.examples.data[lo:hi])
        labels = ops.LabelBatch(dataset.labels.labels[lo:hi])
        ids = np.arange(lo, hi)
        if attack == "multi":
            out = multi_attack(plan, model, batch, labels, example_ids=ids)
        else:
            out = run_attack(attack, model, batch, labels, cfg, example_ids=ids)
        pieces.append(out)
        print(f"attacked {hi}/{n}", file=sys.stderr)
    return AttackOutcome(
        adversarial=ops.ExampleBatch(np.concatenate([p.adversarial.data for p in pieces])),
        success=np.concatenate([p.success for p in pieces]),
        linf_norms=np.concatenate([p.linf_norms for p in pieces]),
        l2_norms=np.concatenate([p.l2_norms for p in pieces]),
        queries=sum(p.queries for p in pieces),
        producers=tuple(sum((list(p.producers) for p in pieces), [])),
    )


def _cmd_attack(args) -> int:
    net = load_checkpoint(args.model)
    model = RandomizedModel(net, args.noise_sigma, args.noise_seed) if args.noise_sigma > 0 else net
    dataset = _load_dataset(args)

    plan = None
    if args.attack == "multi":
        if not args.plan:
            raise ValueError("--attack multi requires --plan name[,name...]")
        names = [s.strip() for s in args.plan.split(",") if s.strip()]
        plan = MultiAttackPlan(tuple((name, _build_config(args, name)) for name in names))
        cfg = plan.attacks[0][1]
        attack_label = "multi[" + ",".join(names) + "]"
    else:
        cfg = _build_config(args, args.attack)
        attack_label = args.attack

    start = time.perf_counter()
    outcome = _run_chunked(args.attack, model, dataset, cfg, plan, args.batch_size)
    elapsed = time.perf_counter() - start

    if args.out:
        save_archive(outcome, dataset.labels, attack_label, cfg, args.out)
    report = evaluate(model, outcome.adversarial, dataset.labels, dataset.examples,
                      queries=outcome.queries, wall_time_s=elapsed,
                      config={"attack": attack_label, **cfg.to_dict()})
    payload = report.to_dict()
    payload["archive"] = args.out
    _emit_report(payload, args.report)
    return 0


def _cmd_eval(args) -> int:
    net = load_checkpoint(args.model)
    start = time.perf_counter()
    if args.archive:
        arc = load_archive(args.archive)
        adversarial = arc.as_float_batch()
        labels = arc.labels
        originals = None
        if args.data is not None or args.blobs is not None:
            dataset = _load_dataset(args)
            if dataset.examples.n != arc.n:
                raise ValueError(
                    f"originals count {dataset.examples.n} does not match archive {arc.n}")
            originals = dataset.examples
        config = {"attack": arc.attack_name, **arc.config}
    else:
        dataset = _load_dataset(args)
        adversarial = dataset.examples
        labels = dataset.labels
        originals = dataset.examples
        config = {"attack": "none"}
    report = evaluate(net, adversarial, labels, originals,
                      wall_time_s=time.perf_counter() - start, config=config)
    _emit_report(report.to_dict(), args.report)
    return 0


def _cmd_gradcheck(args) -> int:
    net = load_checkpoint(args.model)
    worst = finite_difference_check(net, trials=args.trials, seed=args.seed)
    payload = {"max_relative_error": worst, "tolerance": args.tol,
               "trials": args.trials, "passed": bool(worst < args.tol)}
    _emit_report(payload, args.report)
    return 0 if worst < args.tol else 1


def build_parser() -> _Parser:
    parser = _Parser(prog="attackbench",
                     description="Adversarial attacks and robustness evaluation "
                                 "for dense networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a dense-network victim")
    _add_dataset_flags(p_train)
    p_train.add_argument("--epochs", type=int, default=20)
    p_train.add_argument("--lr", type=float, default=0.5)
    p_train.add_argument("--batch-size", type=int, default=32)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--hidden", default="", help="comma-separated hidden sizes")
    p_train.add_argument("--out", required=True, help="checkpoint path")
    p_train.add_argument("--report")

    p_attack = sub.add_parser("attack", help="generate adversarial examples")
    p_attack.add_argument("--model", required=True)
    _add_dataset_flags(p_attack)
    p_attack.add_argument("--attack", required=True, choices=(*ATTACK_NAMES, "multi"))
    p_attack.add_argument("--plan", help="comma-separated attacks for --attack multi")
    p_attack.add_argument("--eps", type=float)
    p_attack.add_argument("--alpha", type=float)
    p_attack.add_argument("--steps", type=int)
    p_attack.add_argument("--c", type=float)
    p_attack.add_argument("--kappa", type=float)
    p_attack.add_argument("--lr", type=float)
    p_attack.add_argument("--decay", type=float)
    p_attack.add_argument("--sampling", type=int)
    p_attack.add_argument("--random-start", choices=("true", "false"))
    p_attack.add_argument("--mode", default="default",
                          choices=("default", "targeted", "least_likely"))
    p_attack.add_argument("--return-type", default="float", choices=("float", "int"))
    p_attack.add_argument("--seed", type=int)
    p_attack.add_argument("--noise-sigma", type=float, default=0.0,
                          help="wrap the model with Gaussian hidden noise (eotpgd)")
    p_attack.add_argument("--noise-seed", type=int, default=0)
    p_attack.add_argument("--batch-size", type=int, help="evaluation chunk size")
    p_attack.add_argument("--out", help="archive path")
    p_attack.add_argument("--report")

    p_eval = sub.add_parser("eval", help="measure accuracy under an archive or dataset")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--archive")
    _add_dataset_flags(p_eval)
    p_eval.add_argument("--report")

    p_grad = sub.add_parser("gradcheck", help="verify analytic gradients")
    p_grad.add_argument("--model", required=True)
    p_grad.add_argument("--tol", type=float, default=1e-4)
    p_grad.add_argument("--trials", type=int, default=20)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--report")
    return parser


_COMMANDS = {
    "train": _cmd_train,
    "attack": _cmd_attack,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
}


def cli(argv) -> int:
    parser = build_parser()
    try:
        _check_thread_hint()
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
