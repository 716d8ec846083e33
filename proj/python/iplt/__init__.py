"""Incremental filter pruning (IPLT) for small CNNs.

Thin python surface over the C++ core: model presets, pruning operations,
FPR/PPR/MAC accounting, checkpoints, datasets and the train/iplt/traditional
run flows.
"""

from iplt._core import (  # noqa: F401
    Dataset,
    LayerCollapseError,
    Model,
    RunConfig,
    RunResult,
    apply_mask,
    compute_fpr,
    compute_macs,
    compute_ppr,
    filter_norm,
    iplt_run,
    load_checkpoint,
    load_mnist_idx,
    make_digits,
    make_mnist_cnn,
    make_synthetic,
    make_toy_cnn,
    rebuild_without_masked,
    remove_output_channels,
    report_text,
    report_text_vs,
    save_checkpoint,
    select_filters,
    traditional_run,
    train_run,
)

__all__ = [
    "Dataset",
    "LayerCollapseError",
    "Model",
    "RunConfig",
    "RunResult",
    "apply_mask",
    "compute_fpr",
    "compute_macs",
    "compute_ppr",
    "filter_norm",
    "iplt_run",
    "load_checkpoint",
    "load_mnist_idx",
    "make_digits",
    "make_mnist_cnn",
    "make_synthetic",
    "make_toy_cnn",
    "rebuild_without_masked",
    "remove_output_channels",
    "report_text",
    "report_text_vs",
    "save_checkpoint",
    "select_filters",
    "traditional_run",
    "train_run",
]

__version__ = "0.1.0"
