"""Temporal supervision tracking for class-incremental learning.

The library keeps, for every class, an exponentially decaying balance of
its positive and negative supervision (the tracker Q), and uses it to
reweight the negative side of cross-entropy so recently under-reinforced
classes stop being pushed down.  A calibration solver pins the alignment
parameter so the adjusted loss collapses to plain cross-entropy on
balanced, temporally uniform data.  A desk-scale simulator (synthetic
Gaussian classes, SGD softmax classifier, replay) demonstrates the
temporal-imbalance phenomenon and its correction end to end.
"""

from .calibration import CalibrationResult, degeneracy_check, solve_calibration
from .errors import DomainError, SolverError, SpecError, TalcilError, TrainingError
from .kernel import (
    MemoryKernel,
    PolaritySequence,
    QState,
    negative_weight,
    q_from_convolution,
    update_batched,
    update_plain,
    update_tal,
)
from .loss import LossOutput, TalConfig, ce_forward, tal_forward, training_step
from .metrics import (
    AsymmetryResult,
    MetricsReport,
    PerClassRow,
    asymmetry_index,
    confusion_and_prf,
    forgetting_curve,
    spearman,
)
from .sim import (
    Classifier,
    SyntheticDataset,
    TrainState,
    ablate,
    fresh_state,
    make_gaussian_tasks,
    train_incremental,
)
from .streams import (
    SupervisionTrace,
    TaskSchedule,
    TaskSpec,
    TheoremVerdict,
    generate_stream,
    sample_dominance_pair,
    verify_theorem1,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "MemoryKernel",
    "QState",
    "PolaritySequence",
    "negative_weight",
    "q_from_convolution",
    "update_plain",
    "update_tal",
    "update_batched",
    "CalibrationResult",
    "solve_calibration",
    "degeneracy_check",
    "TalConfig",
    "LossOutput",
    "tal_forward",
    "ce_forward",
    "training_step",
    "TaskSpec",
    "TaskSchedule",
    "SupervisionTrace",
    "TheoremVerdict",
    "generate_stream",
    "verify_theorem1",
    "sample_dominance_pair",
    "SyntheticDataset",
    "Classifier",
    "TrainState",
    "fresh_state",
    "make_gaussian_tasks",
    "train_incremental",
    "ablate",
    "MetricsReport",
    "PerClassRow",
    "AsymmetryResult",
    "confusion_and_prf",
    "asymmetry_index",
    "forgetting_curve",
    "spearman",
    "TalcilError",
    "SpecError",
    "DomainError",
    "SolverError",
    "TrainingError",
]
