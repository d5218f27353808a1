"""Sequential training over a task stream with replay and the ICF penalty."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NonFiniteLossError
from .geometry import CentroidStore, update_store
from .memory import ReplayBuffer
from .metrics import AccuracyMatrix
from .model import AdamState, ModelParams, adam_step, backward, forward, init_model
from .numerics import make_rng
from .objective import LossBreakdown, class_mask, total_loss
from .tasks import LabeledData, TaskStream

logger = logging.getLogger(__name__)

MODES = ("finetune", "replay_only", "icf_only", "car")

# Substream keys passed to make_rng alongside the run seed.
_INIT, _SHUFFLE, _EXEMPLARS, _REPLAY = 0, 1, 2, 3


@dataclass
class TrainConfig:
    lam: float = 1.0
    lr: float = 0.001
    epochs_per_task: int = 20
    batch_size: int = 32
    buffer_capacity_per_class: int = 20
    replay_batch_size: int | None = None  # None: same as batch_size
    icf_on_replay: bool = False
    seed: int = 0
    mode: str = "car"
    hidden: tuple[int, ...] = (64, 64)
    d_feat: int = 32

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs_per_task < 0 or self.batch_size < 1 or self.buffer_capacity_per_class < 0:
            raise ValueError("epochs must be >= 0, batch >= 1, capacity >= 0")
        if self.replay_batch_size is not None and self.replay_batch_size < 0:
            raise ValueError("replay_batch_size must be >= 0")
        if self.d_feat < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("layer widths must be >= 1")
        self.hidden = tuple(int(h) for h in self.hidden)

    @property
    def effective_lambda(self) -> float:
        return 0.0 if self.mode in ("finetune", "replay_only") else float(self.lam)

    @property
    def effective_capacity(self) -> int:
        return 0 if self.mode in ("finetune", "icf_only") else self.buffer_capacity_per_class

    @property
    def effective_replay_batch(self) -> int:
        return self.batch_size if self.replay_batch_size is None else self.replay_batch_size


@dataclass(frozen=True)
class StepRecord:
    step: int
    task: int
    epoch: int
    loss: LossBreakdown


@dataclass
class RunLog:
    config: TrainConfig
    losses: list[StepRecord] = field(default_factory=list)
    task_seconds: list[float] = field(default_factory=list)
    accuracy: AccuracyMatrix = field(default_factory=AccuracyMatrix)
    params: ModelParams | None = None

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "config": asdict(self.config),
            "losses": [
                {"step": r.step, "task": r.task, "epoch": r.epoch,
                 "ce": r.loss.ce, "icf": r.loss.icf, "total": r.loss.total}
                for r in self.losses
            ],
            "accuracy_matrix": self.accuracy.rows,
        }
        out["config"]["hidden"] = list(self.config.hidden)
        if include_timing:
            out["task_seconds"] = self.task_seconds
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=1)


def evaluate(params: ModelParams, test: LabeledData, mask) -> float:
    """Fraction of ``test`` whose masked argmax logit equals the label.

    Ties go to the lowest class id.
    """
    if len(test) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    active = mask if isinstance(mask, np.ndarray) and mask.dtype == bool else class_mask(mask, params.n_classes)
    logits = forward(params, test.x).logits
    pred = np.argmax(np.where(active, logits, -np.inf), axis=1)
    return int(np.count_nonzero(pred == test.y)) / len(test)


def train_sequence(config: TrainConfig, stream: TaskStream) -> RunLog:
    if len(stream) == 0:
        raise ValueError("task stream is empty")
    seed = config.seed
    lam = config.effective_lambda
    dims = (stream.d_in, *config.hidden, config.d_feat, stream.total_classes)
    params = init_model(dims, make_rng(seed, _INIT))
    state = AdamState.zeros_like(params, lr=config.lr)
    store = CentroidStore(config.d_feat)
    buffer = ReplayBuffer(config.effective_capacity)
    log = RunLog(config)
    step = 0

    for k, task in enumerate(stream.tasks):
        started = time.perf_counter()
        mask = class_mask(stream.seen_classes(k), stream.total_classes)
        replay_rng = make_rng(seed, _REPLAY, k)
        n_train = len(task.train)
        for epoch in range(config.epochs_per_task):
            order = make_rng(seed, _SHUFFLE, k, epoch).permutation(n_train)
            for start in range(0, n_train, config.batch_size):
                idx = order[start:start + config.batch_size]
                x, y = task.train.x[idx], task.train.y[idx]
                n_cur = idx.size
                n_replay = min(config.effective_replay_batch, len(buffer)) if buffer.per_class else 0
                if n_replay:
                    xr, yr = buffer.sample(n_replay, replay_rng)
                    x = np.concatenate([x, xr])
                    y = np.concatenate([y, yr])
                icf_rows = None if config.icf_on_replay else np.arange(x.shape[0]) < n_cur
                cache = forward(params, x)
                breakdown, dlogits, dfeat = total_loss(cache, y, store, lam, mask, icf_rows)
                if not np.isfinite(breakdown.total):
                    raise NonFiniteLossError(
                        f"non-finite loss at step {step} (task {k + 1}, epoch {epoch + 1}): "
                        f"{breakdown}; config {asdict(config)}"
                    )
                grads = backward(params, cache, dlogits, dfeat)
                params, state = adam_step(params, grads, state)
                log.losses.append(StepRecord(step, k + 1, epoch + 1, breakdown))
                step += 1

        by_class = task.train.by_class()
        if lam > 0:
            store = update_store(store, params, by_class)
        if config.effective_capacity > 0:
            buffer.add_exemplars(by_class, make_rng(seed, _EXEMPLARS, k))
        row = [100.0 * evaluate(params, stream.tasks[i].test, mask) for i in range(k + 1)]
        log.accuracy.append(row)
        log.task_seconds.append(time.perf_counter() - started)
        logger.info("task %d/%d done: %s", k + 1, len(stream), row)

    log.params = params
    return log
