"""Seismic ground-roll suppression with learned detection and filtering.

The pipeline: equalize amplitudes, detect the ground-roll region (cheap
positional tile labels -> CNN likelihood map -> logarithmic boundary ->
per-trace segmentation), then replace only the detected region with the
output of an adversarially trained tile filter, matching amplitudes back
so everything outside the mask survives bit-identical.
"""

__version__ = "0.1.0"

from .gathers import GroundRollMask, ShotGather, TraceWindow, blend_region, extract_window
from .fileio import read_gather, read_mask, write_gather, write_mask
from .synthetic import (
    GeologyConfig,
    GroundRollBand,
    Reflection,
    make_gather,
    make_survey,
)
from .equalize import (
    HistogramEqualizer,
    TransferMap,
    apply_equalization,
    fit_equalization,
    masked_equalize,
)
from .detection import (
    LikelihoodMap,
    LogBoundary,
    TileClassifier,
    fit_log_boundary,
    fit_log_curve,
    likelihood_map,
    rough_mask_from_boundary,
    sample_heuristic_tiles,
    train_tile_classifier,
)
from .segmentation import (
    TraceSegmenter,
    make_trace_training_set,
    mask_postprocess,
    segment_gather,
    train_trace_unet,
)
from .filtering import (
    GroundRollFilter,
    apply_generator,
    filter_pipeline,
    sample_paired_tiles,
    train_cgan,
)
from .metrics import (
    GatherScores,
    Periodogram,
    ScoreReport,
    amp_distance,
    amp_histogram,
    amp_score,
    choose_windows,
    evaluate_gather,
    periodogram,
    power_distance,
    power_score,
    survey_report,
    trace_correlation,
)

__all__ = [
    "__version__",
    "ShotGather", "GroundRollMask", "TraceWindow", "extract_window", "blend_region",
    "read_gather", "write_gather", "read_mask", "write_mask",
    "GeologyConfig", "GroundRollBand", "Reflection", "make_gather", "make_survey",
    "TransferMap", "HistogramEqualizer", "fit_equalization", "apply_equalization",
    "masked_equalize",
    "TileClassifier", "LikelihoodMap", "LogBoundary", "sample_heuristic_tiles",
    "train_tile_classifier", "likelihood_map", "fit_log_curve", "fit_log_boundary",
    "rough_mask_from_boundary",
    "TraceSegmenter", "make_trace_training_set", "train_trace_unet",
    "segment_gather", "mask_postprocess",
    "GroundRollFilter", "sample_paired_tiles", "train_cgan", "apply_generator",
    "filter_pipeline",
    "Periodogram", "GatherScores", "ScoreReport", "periodogram", "power_distance",
    "power_score", "amp_histogram", "amp_distance", "amp_score", "trace_correlation",
    "choose_windows", "evaluate_gather", "survey_report",
]
