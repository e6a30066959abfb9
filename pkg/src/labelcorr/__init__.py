"""Label-noise-robust training with distribution correction and skeptical loss."""

from ._accel import BACKEND
from .data import LabeledDataset, load_idx, read_sidecar, synth_clusters, write_sidecar
from .losses import (
    BackwardLoss,
    ForwardLoss,
    LogLoss,
    LossOutput,
    SkepticalLoss,
    UnhingedLoss,
    backward_corrected_loss,
    forward_corrected_loss,
    log_loss,
    magnification,
    make_loss,
    skeptical_loss,
    skeptical_objective,
    unhinged_loss,
)
from .metrics import ExperimentRecord, accuracy, partial_mean, recovery_metrics
from .model import (
    NetworkSpec,
    NetworkState,
    OptimizerConfig,
    apply_update,
    backprop_per_sample,
    init_network,
    predict,
)
from .noise import NoiseSpec, confusing_noise, noise_rate, symmetric_noise
from .training import TrainResult, train
from .transition import (
    EstimatorConfig,
    TransitionMatrix,
    empirical_transition,
    init_identity,
    maybe_update,
)

__version__ = "0.1.0"
