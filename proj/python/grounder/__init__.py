"""Python bindings for the grounder core."""

from ._grounder import (
    ProjectionConfig,
    ProjectionError,
    ValidationError,
    accuracy_report_json,
    chamfer_l2,
    iou3d,
    nr3d_match,
    plan_layouts,
    project,
    remove_statistical_outliers,
    run_cli,
    score_retrieval,
    statistical_inlier_indices,
    version,
    vlm_target_size,
)

import json as _json


def accuracy_report(ious, splits=None):
    """Acc@0.25 / Acc@0.5 in percent, overall and per split, as a dict."""
    return _json.loads(accuracy_report_json(list(ious), splits or []))


__version__ = version()

__all__ = [
    "ProjectionConfig",
    "ProjectionError",
    "ValidationError",
    "accuracy_report",
    "chamfer_l2",
    "iou3d",
    "nr3d_match",
    "plan_layouts",
    "project",
    "remove_statistical_outliers",
    "run_cli",
    "score_retrieval",
    "statistical_inlier_indices",
    "version",
    "vlm_target_size",
]
