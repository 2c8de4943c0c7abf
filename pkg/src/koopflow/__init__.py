"""koopflow: goal-converging flow fields learned from demonstrations.

Demonstration trajectories are lifted through learnable Fourier features, a
low-rank linear operator is trained to advance the lifted state one step,
and the induced displacement field is regularized to be almost
divergence-free along the data and to hold the goal fixed. The package
covers the full pipeline: corpus ingest, training, rollout and convergence
studies, spectral analysis, trajectory-similarity metrics, and a
surface-vehicle tracking simulator.
"""

__version__ = "0.1.0"

from ._kernels import HAVE_NATIVE, backend_name
from .data import (
    Box,
    Demonstration,
    DemonstrationSet,
    TrainingPair,
    load_corpus,
    pair_arrays,
    subsample,
    training_pairs,
)
from .exceptions import (
    CheckpointError,
    CheckpointVersionError,
    CorpusFormatError,
    CorruptCheckpointError,
    DegenerateFieldError,
    DimensionError,
    DivergedTrainingError,
    EigensolverError,
    GoalMismatchError,
    InsufficientDataError,
    KoopflowError,
    NumericBlowupError,
    SamplingError,
)
from .lifting import LiftingParams, init_lifting, lift, lift_batch, lift_jacobian
from .losses import (
    LossBreakdown,
    LossWeights,
    ParameterGradient,
    gradients,
    loss_divergence,
    loss_goal,
    loss_koopman,
    total_loss,
)
from .metrics import MetricsReport, dtwd, evaluate, resample_to, sea
from .model import (
    AffineNormalization,
    FlowField,
    KoopmanModel,
    divergence,
    divergence_batch,
    load,
    predict_lifted,
    predict_state,
    predict_state_batch,
    save,
    scale_to_speed,
    vector_field,
    vector_field_batch,
)
from .rollout import (
    ConvergenceReport,
    FieldGrid,
    Rollout,
    convergence_study,
    field_grid,
    grid_points,
    rollout,
    substep_rollout,
)
from .spectral import SpectralReport, eigen_decompose, eigenfunction_grid
from .train import (
    AdamState,
    TrainingConfig,
    TrainingReport,
    ablation_sweep,
    adam_step,
    calibrate_weights,
    train,
)
from .vehicle import (
    Command,
    ControllerGains,
    Disturbance,
    PidState,
    TrackingReport,
    VehicleState,
    WorldMap,
    desired_command,
    simulate_run,
    step_vehicle,
)

__all__ = [name for name in dir() if not name.startswith("_")]
