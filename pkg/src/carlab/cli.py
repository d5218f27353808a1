"""Command-line runner: single runs, lambda/seed sweeps and the four-way ablation.

Configuration comes from defaults, then an optional ``key = value`` file
(``#`` starts a comment), then command-line flags, later sources winning.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

from .errors import UsageError
from .metrics import average_accuracy, emit_results
from .model import save_checkpoint
from .numerics import make_rng
from .tasks import build_stream, load_csv, split_protocol, synth_gaussians
from .trainer import MODES, TrainConfig, train_sequence

# Substream keys for data generation, kept apart from the trainer's keys.
_DATA, _CLASS_ORDER = 4, 5


@dataclass
class ExperimentSpec:
    synthetic: bool = False
    csv: str | None = None
    modes: list[str] = field(default_factory=lambda: ["car"])
    lambdas: list[float] = field(default_factory=lambda: [1.0])
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str = "results"
    lr: float = 0.001
    epochs: int = 20
    batch: int = 32
    capacity: int = 20
    replay_batch: int | None = None
    icf_on_replay: bool = False
    classes_per_task: int = 2
    class_order: str = "natural"
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    d_feat: int = 32
    n_classes: int = 10
    d_in: int = 16
    train_per_class: int = 200
    test_per_class: int = 100
    spread: float = 1.0
    data_seed: int | None = None
    train_fraction: float = 0.8
    timing: bool = False

    def validate(self) -> None:
        if self.synthetic == bool(self.csv):
            raise UsageError("choose exactly one dataset: --synthetic or --csv PATH")
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise UsageError(f"unknown mode(s) {bad}; expected one of {list(MODES)}")
        if not self.modes or not self.lambdas or not self.seeds:
            raise UsageError("mode, lambda and seed lists must be non-empty")
        if self.class_order not in ("natural", "shuffle"):
            raise UsageError("class_order must be 'natural' or 'shuffle'")
        for lam in self.lambdas:
            self.train_config(lam, self.seeds[0], self.modes[0])

    def train_config(self, lam: float, seed: int, mode: str) -> TrainConfig:
        try:
            return TrainConfig(
                lam=lam, lr=self.lr, epochs_per_task=self.epochs, batch_size=self.batch,
                buffer_capacity_per_class=self.capacity, replay_batch_size=self.replay_batch,
                icf_on_replay=self.icf_on_replay, seed=seed, mode=mode,
                hidden=tuple(self.hidden), d_feat=self.d_feat,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(conv: Callable) -> Callable[[str], list]:
    return lambda text: [conv(p.strip()) for p in text.split(",") if p.strip()]


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none") else int(text)


# config key -> (ExperimentSpec field, converter)
KEYS: dict[str, tuple[str, Callable]] = {
    "synthetic": ("synthetic", _bool),
    "csv": ("csv", str),
    "mode": ("modes", _list(str)),
    "lambda": ("lambdas", _list(float)),
    "seed": ("seeds", _list(int)),
    "out": ("out", str),
    "lr": ("lr", float),
    "epochs": ("epochs", int),
    "batch": ("batch", int),
    "capacity": ("capacity", int),
    "replay_batch": ("replay_batch", _opt_int),
    "icf_on_replay": ("icf_on_replay", _bool),
    "classes_per_task": ("classes_per_task", int),
    "class_order": ("class_order", str),
    "hidden": ("hidden", _list(int)),
    "d_feat": ("d_feat", int),
    "n_classes": ("n_classes", int),
    "d_in": ("d_in", int),
    "train_per_class": ("train_per_class", int),
    "test_per_class": ("test_per_class", int),
    "spread": ("spread", float),
    "data_seed": ("data_seed", _opt_int),
    "train_fraction": ("train_fraction", float),
    "timing": ("timing", _bool),
}
assert {f for f, _ in KEYS.values()} == {f.name for f in fields(ExperimentSpec)}


def read_config_file(path) -> dict[str, str]:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    """Parser for the flags of ``carlab run``."""
    run = _Parser(prog="carlab run", description="Train, sweep or ablate cluster-aware replay runs.")
    run.add_argument("--config", metavar="PATH")
    run.add_argument("--mode", help=f"one of {', '.join(MODES)}; comma list allowed")
    run.add_argument("--ablation", action="store_true", help="run all four modes")
    run.add_argument("--lambda", dest="lambda_", metavar="LIST")
    run.add_argument("--seed", metavar="LIST")
    run.add_argument("--synthetic", action="store_true")
    run.add_argument("--csv", metavar="PATH")
    run.add_argument("--classes-per-task", metavar="N")
    run.add_argument("--epochs", metavar="N")
    run.add_argument("--batch", metavar="N")
    run.add_argument("--capacity", metavar="N")
    run.add_argument("--replay-batch", metavar="N")
    run.add_argument("--lr")
    run.add_argument("--icf-on-replay", action="store_true")
    run.add_argument("--out", metavar="DIR")
    run.add_argument("--timing", action="store_true", help="include wall times in runlog.json")
    return run


def parse_config(argv: Sequence[str] | None = None) -> ExperimentSpec:
    """Merge defaults, the ``--config`` file and flags into an ``ExperimentSpec``."""
    args = build_parser().parse_args(list(argv or []))
    raw = read_config_file(args.config) if args.config else {}
    flags = {
        "mode": args.mode, "lambda": args.lambda_, "seed": args.seed, "csv": args.csv,
        "classes_per_task": args.classes_per_task, "epochs": args.epochs, "batch": args.batch,
        "capacity": args.capacity, "replay_batch": args.replay_batch, "lr": args.lr, "out": args.out,
    }
    raw.update({k: v for k, v in flags.items() if v is not None})
    for switch in ("synthetic", "icf_on_replay", "timing"):
        if getattr(args, switch):
            raw[switch] = "true"
    if args.ablation:
        if args.mode is not None:
            raise UsageError("--ablation and --mode are mutually exclusive")
        raw["mode"] = ",".join(MODES)

    spec = ExperimentSpec()
    for key, text in raw.items():
        attr, conv = KEYS[key]
        try:
            setattr(spec, attr, conv(text))
        except ValueError:
            raise UsageError(f"invalid value {text!r} for {key}") from None
    return spec


def load_stream(spec: ExperimentSpec, seed: int):
    data_seed = seed if spec.data_seed is None else spec.data_seed
    order = make_rng(data_seed, _CLASS_ORDER) if spec.class_order == "shuffle" else None
    if spec.synthetic:
        train, test = synth_gaussians(spec.n_classes, spec.d_in, spec.train_per_class,
                                      spec.test_per_class, spec.spread, make_rng(data_seed, _DATA))
        return build_stream(train, test, spec.classes_per_task, order)
    data = load_csv(spec.csv)
    return split_protocol(data, spec.classes_per_task, order, make_rng(data_seed, _DATA), spec.train_fraction)


def run_dir_name(mode: str, lam: float, seed: int) -> str:
    return f"{mode}_lambda{lam:g}_seed{seed}"


def _run_one(spec: ExperimentSpec, mode: str, lam: float, seed: int) -> tuple[bool, float | None]:
    out = Path(spec.out) / run_dir_name(mode, lam, seed)
    out.mkdir(parents=True, exist_ok=True)
    try:
        config = spec.train_config(lam, seed, mode)
        log = train_sequence(config, load_stream(spec, seed))
        emit_results(log.accuracy, log, out)
        (out / "runlog.json").write_text(log.to_json(include_timing=spec.timing))
        save_checkpoint(log.params, out / "model.json")
        return True, average_accuracy(log.accuracy, len(log.accuracy))
    except Exception:
        (out / "error.txt").write_text(
            f"run {mode} lambda={lam} seed={seed} aborted\n{traceback.format_exc()}"
        )
        return False, None


def run(spec: ExperimentSpec) -> int:
    """Execute every (mode, lambda, seed) combination; 0 iff all succeeded."""
    spec.validate()
    jobs = [(m, lam, s) for m in spec.modes for lam in spec.lambdas for s in spec.seeds]
    Path(spec.out).mkdir(parents=True, exist_ok=True)
    workers = max(1, int(os.environ.get("CAR_LAB_THREADS", "1") or 1))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_one, *zip(*[(spec, *j) for j in jobs])))
    else:
        results = [_run_one(spec, *j) for j in jobs]

    ok = True
    with open(Path(spec.out) / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "lambda", "seed", "final_avg_acc"])
        for (mode, lam, seed), (done, avg) in zip(jobs, results):
            if done:
                w.writerow([mode, repr(float(lam)), seed, repr(avg)])
            else:
                ok = False
                print(f"carlab: run {run_dir_name(mode, lam, seed)} failed; see error.txt", file=sys.stderr)
    return 0 if ok else 1


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print("usage: carlab run [flags]   (carlab run --help for flags)")
        return 0 if argv else 2
    try:
        if argv[0] != "run":
            raise UsageError(f"unknown command {argv[0]!r}; expected 'run'")
        return run(parse_config(argv[1:]))
    except UsageError as exc:
        print(f"carlab: usage error: {exc}", file=sys.stderr)
        return 2

