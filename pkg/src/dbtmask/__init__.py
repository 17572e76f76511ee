"""Dense-tissue mask generation and evaluation for tomosynthesis volumes."""

from .engine import (
    Annotation,
    DenseMask,
    Measurements,
    candidate_thresholds,
    find_matching_threshold,
    make_annotation,
    measure,
    propagate,
    segment_slice,
)
from .errors import (
    ConsistencyError,
    CorruptFileError,
    FormatVersionError,
    StoreError,
    ValidationError,
)
from .geometry import PolygonRoi, check_bounds, mask_area, rasterize_polygon
from .metrics import (
    BoxplotStats,
    DiceRecord,
    DiceScope,
    StratifiedStats,
    boxplot_stats,
    dice,
    patient_dice,
    slice_eval,
    stratify,
)
from .phantom import EDGE_BLUR_MAX_SIGMA, DenseShape, PhantomSpec, generate
from .store import (
    SessionRecord,
    VolumeContainer,
    decode_rle,
    encode_rle,
    read_mask,
    read_session,
    read_volume,
    replay_session,
    write_mask,
    write_session,
    write_volume,
)
from .volume import (
    DbtVolume,
    VadCategory,
    View,
    central_slice_index,
    normalize_slice,
    percentile_index,
    percentile_slice_index,
)

__all__ = [
    "Annotation",
    "BoxplotStats",
    "ConsistencyError",
    "CorruptFileError",
    "DbtVolume",
    "DenseMask",
    "DenseShape",
    "DiceRecord",
    "DiceScope",
    "EDGE_BLUR_MAX_SIGMA",
    "FormatVersionError",
    "Measurements",
    "PhantomSpec",
    "PolygonRoi",
    "SessionRecord",
    "StoreError",
    "StratifiedStats",
    "VadCategory",
    "ValidationError",
    "View",
    "VolumeContainer",
    "boxplot_stats",
    "candidate_thresholds",
    "central_slice_index",
    "check_bounds",
    "decode_rle",
    "dice",
    "encode_rle",
    "find_matching_threshold",
    "generate",
    "make_annotation",
    "mask_area",
    "measure",
    "normalize_slice",
    "patient_dice",
    "percentile_index",
    "percentile_slice_index",
    "propagate",
    "rasterize_polygon",
    "read_mask",
    "read_session",
    "read_volume",
    "replay_session",
    "segment_slice",
    "slice_eval",
    "stratify",
    "write_mask",
    "write_session",
    "write_volume",
]
