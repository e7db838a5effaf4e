"""ctxrank command line: simulate, train, rerank, evaluate, ablate.

Exit codes: 0 success, 1 usage error, 2 data or invariant error.
Logs go to stderr, tables to stdout, everything else to files under --out.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint, metrics, training
from .data import RecordError, load_records, split_records, write_records
from .evaluator import EvaluatorConfig
from .generator import MODES, GeneratorConfig
from .simulator import SimConfig, SimConfigError, SimGroundTruth, simulate_records

log = logging.getLogger("ctxrank")

CONFIG_SECTIONS = {"sim": SimConfig, "train": training.TrainConfig,
                   "evaluator": EvaluatorConfig, "generator": GeneratorConfig}
SPLITS = ("train", "val", "test")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------- config

def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise DataError(f"{path}: top level must be an object")
    unknown = set(cfg) - set(CONFIG_SECTIONS)
    if unknown:
        raise DataError(f"{path}: unknown config section {sorted(unknown)[0]!r}")
    return cfg


def _section(args, name: str) -> dict:
    return dict(args.config_data.get(name, {}))


def _build(cls, values: dict, section: str):
    try:
        obj = cls.from_dict(values) if hasattr(cls, "from_dict") else cls(**values)
    except SimConfigError:
        raise
    except TypeError as exc:
        raise DataError(f"[{section}] {exc}") from exc
    except ValueError as exc:
        raise DataError(f"[{section}] {exc}") from exc
    return obj


def sim_config(args) -> SimConfig:
    values = _section(args, "sim")
    for flag, name in (("records", "num_records"), ("m", "m"), ("n", "n"), ("beta", "beta"),
                       ("alpha", "alpha"), ("gamma", "gamma")):
        if getattr(args, flag, None) is not None:
            values[name] = getattr(args, flag)
    values["seed"] = _seed(args, values)
    return _build(SimConfig, values, "sim")


def train_config(args) -> training.TrainConfig:
    values = _section(args, "train")
    for flag, name in (("lr", "lr"), ("batch_size", "batch_size"), ("k", "k")):
        if getattr(args, flag, None) is not None:
            values[name] = getattr(args, flag)
    if getattr(args, "epochs", None) is not None:
        values["evaluator_epochs" if args.stage == "evaluator" else "generator_epochs"] = args.epochs
    values["seed"] = _seed(args, values)
    return _build(training.TrainConfig, values, "train")


def _seed(args, values: dict) -> int:
    if args.seed is not None:
        return args.seed
    if "seed" in values:
        return int(values["seed"])
    raise UsageError("a seed is required (--seed or a 'seed' entry in the config file)")


def _existing(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"{what} is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _records(path: str | None, what: str):
    return load_records(_existing(path, what))


def _truth(path: str | None) -> SimGroundTruth | None:
    if path is None:
        return None
    if not Path(path).is_file():
        log.warning("ground-truth sidecar %s not found; omitting the ground-truth column", path)
        return None
    return SimGroundTruth.read(path)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


class _JsonlLog:
    """Per-epoch metrics; ``wall_time_s`` is the only non-reproducible field."""

    def __init__(self, path: Path):
        self.path = path
        path.write_text("", encoding="utf-8")

    def __call__(self, entry: dict) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    cfg = sim_config(args)
    out = _out_dir(args)
    records, truth = simulate_records(cfg)
    rows = list(range(len(records)))
    train_val, test = split_records(rows, 0.9, seed=cfg.seed)
    train, val = split_records(train_val, 0.9, seed=cfg.seed + 1)
    for name, idx in zip(SPLITS, (train, val, test)):
        write_records([records[i] for i in idx], out / f"{name}.jsonl")
        truth.take(idx).write(out / f"{name}.truth.jsonl")
        log.info("wrote %d records to %s", len(idx), out / f"{name}.jsonl")
    (out / "sim_config.json").write_text(json.dumps(training.config_to_json(cfg), indent=2) + "\n",
                                         encoding="utf-8")
    return 0


def cmd_train(args) -> int:
    if args.stage == "generator" and args.evaluator is None:
        raise UsageError("--stage generator requires --evaluator CHECKPOINT")
    cfg = train_config(args)
    train = _records(args.train, "--train")
    val = _records(args.val, "--val") if args.val else []
    out = _out_dir(args)
    metrics_log = _JsonlLog(out / f"{args.stage}_metrics.jsonl")
    if args.stage == "evaluator":
        model_cfg = _build(EvaluatorConfig, _section(args, "evaluator"), "evaluator")
        model = training.train_evaluator(train, val, cfg, model_cfg, log_fn=metrics_log)
        checkpoint.save_evaluator(model, out / "evaluator.json")
    else:
        evaluator = checkpoint.load_evaluator(_existing(args.evaluator, "--evaluator"))
        model_cfg = _build(GeneratorConfig, _section(args, "generator"), "generator")
        model = training.train_generator(train, val, evaluator, cfg, model_cfg, log_fn=metrics_log)
        checkpoint.save_generator(model, out / "generator.json")
    log.info("saved %s checkpoint to %s", args.stage, out / f"{args.stage}.json")
    return 0


def cmd_rerank(args) -> int:
    generator = checkpoint.load_generator(_existing(args.generator, "--generator"))
    records = _records(args.data, "--data")
    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    out = _out_dir(args)
    failures = 0
    lines = []
    for rid, rec in enumerate(records):
        n = rec.n if args.n is None else args.n
        if n > rec.m:
            failures += 1
            lines.append({"id": rid, "error": f"cannot select {n} items from {rec.m} candidates"})
            continue
        user, cands = generator.represent(generator.featurizer.encode([rec]))
        result = generator.generate_list(user[0], cands[0], n, args.mode, rng)
        lines.append({"id": rid, "order": result.order.tolist(),
                      "probs": result.chosen_probs.tolist()})
    with (out / "reranked.jsonl").open("w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(json.dumps(line) + "\n")
    if failures:
        log.error("%d of %d records could not be reranked", failures, len(records))
        return 2
    return 0


def _evaluate_reports(evaluator, generator, records, truth, k: int) -> list[metrics.EvalReport]:
    groups = evaluator.featurizer.encode_grouped(records)
    reports = [training.evaluate_evaluator(evaluator, groups, "evaluator")]
    named = [("recorded", [g.final for g in groups]),
             ("greedy", training.baseline_orders(evaluator, groups))]
    if generator is not None:
        gen_groups = generator.featurizer.encode_grouped(records)
        named.insert(1, ("generator", training.generate_greedy(generator, gen_groups)))
    for name, orders in named:
        reports.append(training.evaluate_orders(name, evaluator, groups, orders, k, truth))
    return reports


def _emit(reports, path: Path) -> None:
    print(metrics.format_table(reports))
    with path.open("w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")


def cmd_evaluate(args) -> int:
    evaluator = checkpoint.load_evaluator(_existing(args.evaluator, "--evaluator"))
    generator = checkpoint.load_generator(_existing(args.generator, "--generator")) \
        if args.generator else None
    records = _records(args.data, "--data")
    truth = _truth(args.truth)
    if truth is not None and len(truth) != len(records):
        raise DataError(f"sidecar has {len(truth)} rows but the dataset has {len(records)}")
    _emit(_evaluate_reports(evaluator, generator, records, truth, args.k), _out_dir(args) / "report.jsonl")
    return 0


ABLATION_ROWS = ("full", "-BL", "-SA", "-EL", "-AL", "-DR", "-SR", "Greedy")


def run_ablation(train, val, test, truth, cfg: training.TrainConfig,
                 ev_cfg: EvaluatorConfig, gen_cfg: GeneratorConfig) -> list[metrics.EvalReport]:
    """One shared seed; every generator variant is scored by the full evaluator."""
    evaluator = training.train_evaluator(train, val, cfg, ev_cfg)
    groups = evaluator.featurizer.encode_grouped(test)
    reports = {}

    def evaluator_row(name, model):
        rep = training.evaluate_evaluator(model, groups, name)
        reports[name] = rep

    evaluator_row("full", evaluator)
    for name, flags in (("-BL", {"use_bilstm": False}), ("-SA", {"use_selfattn": False})):
        variant = training.train_evaluator(train, val, cfg, replace(ev_cfg, **flags),
                                           featurizer=evaluator.featurizer)
        evaluator_row(name, variant)

    gen_variants = {"full": ({}, {}), "-EL": ({"use_evolving": False}, {}),
                    "-AL": ({"use_activating": False}, {}),
                    "-DR": ({}, {"use_diff_reward": False}), "-SR": ({}, {"use_self_reward": False})}
    for name, (gflags, tflags) in gen_variants.items():
        log.info("ablation: training generator variant %s", name)
        gen = training.train_generator(train, val, evaluator, replace(cfg, **tflags),
                                       replace(gen_cfg, **gflags))
        rep = training.evaluate_orders(name, evaluator, groups, training.generate_greedy(gen, groups),
                                       cfg.k, truth)
        if name in reports:
            for field in ("ndcg_at_k", "lr_at_k", "true_value_at_k"):
                setattr(reports[name], field, getattr(rep, field))
        else:
            reports[name] = rep
    reports["Greedy"] = training.evaluate_orders("Greedy", evaluator, groups,
                                                 training.baseline_orders(evaluator, groups),
                                                 cfg.k, truth)
    return [reports[name] for name in ABLATION_ROWS]


def cmd_ablate(args) -> int:
    args.stage = "both"
    cfg = train_config(args)
    train = _records(args.train, "--train")
    val = _records(args.val, "--val") if args.val else []
    test = _records(args.test, "--test")
    truth = _truth(args.truth)
    ev_cfg = _build(EvaluatorConfig, _section(args, "evaluator"), "evaluator")
    gen_cfg = _build(GeneratorConfig, _section(args, "generator"), "generator")
    if getattr(args, "epochs", None) is not None:
        cfg = replace(cfg, evaluator_epochs=args.epochs, generator_epochs=args.epochs)
    _emit(run_ablation(train, val, test, truth, cfg, ev_cfg, gen_cfg), _out_dir(args) / "ablation.jsonl")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with sim/train/evaluator/generator sections")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    # global flags live on each subcommand so argparse cannot reset them
    p = _Parser(prog="ctxrank", description="Context-wise list reranking: evaluator and generator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="write a synthetic dataset")
    s.add_argument("--records", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--beta", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--gamma", type=float)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", parents=[common], help="train the evaluator or the generator")
    t.add_argument("--stage", choices=("evaluator", "generator"), required=True)
    t.add_argument("--train", required=True, help="training records (JSONL)")
    t.add_argument("--val", help="validation records (JSONL)")
    t.add_argument("--evaluator", help="evaluator checkpoint (required for --stage generator)")
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--k", type=int)
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("rerank", parents=[common], help="rerank records with a generator")
    r.add_argument("--generator", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--mode", choices=MODES, default="greedy")
    r.add_argument("--n", type=int, help="list length (default: each record's n)")
    r.set_defaults(func=cmd_rerank)

    e = sub.add_parser("evaluate", parents=[common], help="report offline metrics")
    e.add_argument("--evaluator", required=True)
    e.add_argument("--generator")
    e.add_argument("--data", required=True)
    e.add_argument("--truth", help="ground-truth sidecar; column omitted when absent")
    e.add_argument("--k", type=int, default=5)
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("ablate", parents=[common], help="train and compare ablation variants")
    a.add_argument("--train", required=True)
    a.add_argument("--val")
    a.add_argument("--test", required=True)
    a.add_argument("--truth", help="ground-truth sidecar for the test split")
    a.add_argument("--epochs", type=int, help="epochs for both stages")
    a.add_argument("--lr", type=float)
    a.add_argument("--batch-size", type=int)
    a.add_argument("--k", type=int)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        args.config_data = load_config(args.config)
        return args.func(args)
    except UsageError as exc:
        print(f"ctxrank: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, RecordError, SimConfigError, checkpoint.CheckpointError) as exc:
        print(f"ctxrank: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"ctxrank: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
