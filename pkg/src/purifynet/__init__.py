"""Train, contaminate, and purify one-hidden-layer patch ReLU networks."""

from .patching import PatchConfig, PatchConfigError, patch, patches_of, validate_config
from .model import (
    CnnParams, LossKind, ModelError, MultiLayerParams, Regime, TrainConfig,
    TrainDivergedError, TrainTrace, forward, gradients, gradients_multilayer,
    init_multilayer, init_params, load_model, loss, predict, predict_multilayer,
    save_model, train, train_multilayer, train_two_phase,
)
from .contamination import (
    BackdoorSpec, ConstantShift, ContaminationError, NoiseSpec, Normal, Uniform,
    apply_trigger, contaminate, parse_dist, poison_dataset,
)
from .lad import (
    LadError, LadProblem, LadSolution, RankDeficientError, SolveOptions,
    solve, solve_many, solve_oracle,
)
from .purification import (
    DesignWarning, PurifyError, PurifyReport, RepairOrigin, RepairSet,
    build_design_W, build_design_beta, purified_params, purify, purify_multilayer,
)
from .datasets import (
    Dataset, DatasetError, filter_classes, load_cifar10, load_idx,
    synth_class_clusters, synth_gaussian, write_idx_images, write_idx_labels,
)
from .diagnostics import (
    ConditionEstimate, DiagnosticsError, accuracy, asr_on_clean,
    attack_success_rate, check_trajectory, err_W, err_beta,
    estimate_conditions, r_beta_bound, r_w_bound,
)

__version__ = "0.1.0"
