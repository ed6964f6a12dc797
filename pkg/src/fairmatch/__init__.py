"""Fair classification by penalising score gaps between optimal-transport matched individuals."""
from .audit import evaluate_model, prophecy_audit, subset_audit, tukey_summary
from .data import Dataset, Schema, load_csv, load_dataset, load_schema, make_imbalanced, prepare, preprocess, split
from .estimator import FairMatchingClassifier
from .matching import estimate_fair_matching, fair_matching_function, quantile_match
from .metrics import FairnessReport, dp_bar_gap, dp_gap, ks_dp, tv_dp, wasserstein_dp
from .model import ModelParams, init_params, load_checkpoint, save_checkpoint
from .ot import CostMatrix, TransportPlan, build_cost_matrix, construct_common_point_coupling, solve_assignment, solve_kantorovich
from .synthetic import GaussianPair, LinearGaussianSCM, uniform_pair_models, make_synthetic_classification
from .trainer import TrainConfig, calibrate_lambda, sweep, train

__version__ = "0.1.0"
