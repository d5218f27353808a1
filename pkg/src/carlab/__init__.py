"""carlab: a small continual-learning lab for cluster-aware replay.

Replay of class-balanced exemplars is combined with an inter-cluster fitness
penalty that pushes new-task embeddings away from the frozen, normalised
centroids of earlier classes.
"""

from .geometry import CentroidStore, compute_centroid, icf_loss, update_store
from .memory import ReplayBuffer
from .metrics import AccuracyMatrix, average_accuracy, emit_results, forgetting
from .model import AdamState, ModelParams, adam_step, backward, forward, init_model
from .objective import LossBreakdown, cross_entropy, total_loss
from .tasks import LabeledData, Sample, TaskStream, load_csv, split_protocol, synth_gaussians
from .trainer import RunLog, TrainConfig, evaluate, train_sequence

__version__ = "0.1.0"

__all__ = [
    "AccuracyMatrix", "AdamState", "CentroidStore", "LabeledData", "LossBreakdown", "ModelParams",
    "ReplayBuffer", "RunLog", "Sample", "TaskStream", "TrainConfig", "adam_step", "average_accuracy",
    "backward", "compute_centroid", "cross_entropy", "emit_results", "evaluate", "forgetting",
    "forward", "icf_loss", "init_model", "load_csv", "split_protocol", "synth_gaussians",
    "total_loss", "train_sequence", "update_store",
]
