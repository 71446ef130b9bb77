"""Simulation and Bayesian reconstruction of continuously measured qubit trajectories."""

from .core import (
    Axis,
    BlochVector,
    ConfigError,
    Ensemble,
    HermitianMatrix2,
    InsufficientStatisticsError,
    MeasurementConfig,
    MeasurementRecord,
    QTrajError,
    StatisticsError,
    Trajectory,
    ZeroProbabilityError,
    config_from_physical,
    config_from_tau,
    phase_shift,
)
from .estimators import PastStateSmoother, TrajectoryFilter
from .measurement import marginal_density, measurement_update, povm_weight, rabi_rotate, update_phi, update_z
from .past_state import (
    SmoothedState,
    backward_step,
    forward_step,
    gaussian_povm,
    guessing_game,
    predict_hidden,
    projective_povm,
    smooth,
)
from .presets import PRESETS, ExperimentPreset, get_preset, resolve
from .records import GeneratorSettings, generate_record, relax_map
from .tomography import (
    MatchingWindow,
    RecordWindow,
    ShotTable,
    TomographyEstimate,
    TomographyShot,
    conditional_tomography,
    projective_sample,
    simulate_shots,
    tomography_pulse,
)
from .trajectory import (
    EnsembleHistogram,
    PostSelectionWindow,
    ensemble_mean,
    histogram,
    post_select,
    reconstruct,
    run_ensemble,
)
from .two_qubit import (
    CascadeConfig,
    TwoQubitBayesState,
    cascade_ensemble,
    cascade_sample,
    cascade_step,
    cascade_trajectory,
    cascade_update_diag,
    cascade_update_offdiag,
    concurrence,
)

__version__ = "0.1.0"
