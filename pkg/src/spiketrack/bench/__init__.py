"""Synthetic benchmark: scene generation, metrics, ablation/sweep harness."""

from .ablation import (
    ABLATION_CONFIGS,
    RunRow,
    default_sweep_grid,
    rows_to_csv,
    run_ablation,
    run_sweep,
)
from .io import (
    format_box_line,
    load_frames,
    load_init_box,
    parse_box_line,
    read_boxes,
    save_sequence,
    write_boxes,
)
from .metrics import (
    EvalResult,
    center_error,
    evaluate_boxes,
    iou,
    precision_score,
    success_auc,
)
from .synthetic import SceneError, SceneSpec, generate_sequence

__all__ = [
    "ABLATION_CONFIGS",
    "EvalResult",
    "RunRow",
    "SceneError",
    "SceneSpec",
    "center_error",
    "default_sweep_grid",
    "evaluate_boxes",
    "format_box_line",
    "generate_sequence",
    "iou",
    "load_frames",
    "load_init_box",
    "parse_box_line",
    "precision_score",
    "read_boxes",
    "rows_to_csv",
    "run_ablation",
    "run_sweep",
    "save_sequence",
    "success_auc",
    "write_boxes",
]
