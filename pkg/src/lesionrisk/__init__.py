"""Breast-lesion malignancy risk toolkit.

Interpretable logistic risk scoring, residual-tree lesion subgroups, and
leaf-local conformal prediction sets, shipped as a library, CLI, and HTTP
inference service.
"""

from .bundle import BundleError, ModelBundle, load_bundle, save_bundle
from .conformal import (CalibrationError, CoverageReport, LeafCalibration, PredictionSet,
                        ResidualDataset, ResidualSample, calibrate_leaves, compute_residuals,
                        conformal_cutoff, coverage_report, predict_set, quantile_index,
                        split_residuals)
from .encoding import (DEFAULT_FEATURES, EncoderSpec, OrdinalEncoderSpec, fit_encoder,
                       make_ordinal_encoder)
from .logistic import (ConvergenceError, GridSearchReport, RiskModel, fit_logistic,
                       grid_search, predict_proba, predict_proba_dataset, sigmoid)
from .metrics import (CalibrationCurve, MetricsError, ScalarMetrics, ThresholdCurve,
                      ThresholdDecision, auprc_score, auroc_score, calibration_curve,
                      log_loss, optimize_threshold, scalar_metrics, threshold_curve)
from .pipeline import (build_bundle, calibrate_model, evaluate_bundle, predict_response,
                       prediction_sets, train_risk_model)
from .records import (Dataset, LesionRecord, SplitSpec, SummaryStats, ValidationError,
                      dataset_hash, parse_csv, serialize_csv, split_dataset, summarize)
from .synth import GeneratorConfig, SubgroupRule, make_oracle, subgroup_of, synthesize
from .tree import (LeafProfile, PartitionTree, assign_leaf, fit_tree, format_rules,
                   leaf_profiles, rule_path, tree_from_dict, tree_grid_search, tree_to_dict)

__version__ = "0.1.0"
