"""Weakly supervised convolutive labeling of time-series instances.

Trains per-instant multinomial labelers from signal-level label sets with a
cap on how many instants may carry an event, using exact subset/count
dynamic programming for the E-step.
"""

__version__ = "0.1.0"

from .backends import label_set_log_likelihood, posterior, posterior_with_evidence, select_backend
from .benchmark import (
    BenchGrid,
    FULL_GRID,
    QUICK_GRID,
    bench_posterior,
    fit_scaling,
    panel_data,
    read_bench_csv,
    write_bench_csv,
)
from .chain import (
    chain_all_set_log_weights,
    chain_backward,
    chain_forward,
    chain_joint,
    chain_label_set_likelihood,
    chain_label_set_log_likelihood,
    chain_posterior,
    chain_posterior_with_evidence,
)
from .datagen import (
    GenConfig,
    class_template,
    gabor_template,
    gen_binary_dataset,
    gen_gabor_dataset,
    split_dataset,
)
from .io import (
    load_dataset,
    load_manifest,
    load_model,
    load_predictions,
    load_templates,
    load_trace,
    load_truth,
    save_dataset,
    save_model,
    save_predictions,
    save_templates,
    save_trace,
    save_truth,
    write_manifest,
)
from .metrics import DegenerateClassWarning, auc, miml_metrics, per_class_auc
from .predict import (
    field_signal_scores,
    predict_instances,
    predict_map,
    predict_record,
    predict_union,
    signal_score,
    signal_scores,
)
from .prior import AnalysisField, analyze, prior_field, prior_for
from .report import evaluate, report_csv
from .train import (
    EMState,
    TrainConfig,
    align_detector_timing,
    auxiliary_q,
    e_step,
    em_fit,
    gradients,
    incomplete_log_likelihood,
    infer_num_classes,
    init_params,
    init_pattern_contrast,
)
from .tree import (
    TreeMessages,
    count_axis_convolve,
    tree_backward,
    tree_forward,
    tree_joint,
    tree_label_set_likelihood,
    tree_label_set_log_likelihood,
    tree_posterior,
    tree_posterior_with_evidence,
)
from .types import (
    DatasetError,
    EvidenceImpossibleError,
    LabelState,
    MessageTable,
    ModelParams,
    PriorField,
    Signal,
    WeakExample,
    num_instants,
    state_enumerate,
    window_extract,
)
