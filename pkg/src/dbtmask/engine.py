"""Dense-mask propagation: area-matched thresholding across slices.

The reader annotates the central slice only: a polygon plus an intensity
threshold on the normalized slice.  That pair fixes a reference dense area
in pixels.  Every other slice reuses the same polygon but gets its own
threshold, chosen so its dense area inside the polygon is as close as
possible to the reference.  Slices are solved independently; there is no
chaining, so an odd slice cannot poison its neighbors.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import isfinite

import numpy as np

from .errors import ValidationError
from .geometry import PolygonRoi, rasterize_polygon
from .volume import DbtVolume, central_slice_index, normalize_slice


@dataclass(frozen=True)
class Annotation:
    """Central-slice annotation: polygon, threshold, and the area it implies.

    reference_area_px is the dense pixel count the threshold produces on the
    annotated slice; it is stored so propagation can detect a stale pairing
    of annotation and volume.
    """

    polygon: PolygonRoi
    central_threshold: float
    reference_area_px: int

    def __post_init__(self):
        t = float(self.central_threshold)
        if not (isfinite(t) and 0.0 <= t <= 1.0):
            raise ValidationError(f"threshold must be in [0, 1], got {self.central_threshold}")
        object.__setattr__(self, "central_threshold", t)
        if self.reference_area_px < 0:
            raise ValidationError(f"reference_area_px must be >= 0, got {self.reference_area_px}")


def segment_slice(norm: np.ndarray, roi_mask: np.ndarray, threshold: float) -> np.ndarray:
    """Dense pixels of one slice: inside the ROI and at least as bright as t.

    norm is the min-max normalized slice.  t=0 selects the whole ROI since
    normalized values are never negative.
    """
    norm = np.asarray(norm)
    roi_mask = np.asarray(roi_mask)
    if norm.shape != roi_mask.shape:
        raise ValidationError(f"shape mismatch: slice {norm.shape} vs ROI {roi_mask.shape}")
    if roi_mask.dtype != bool:
        raise ValidationError(f"ROI mask must be bool, got {roi_mask.dtype}")
    t = float(threshold)
    if not (isfinite(t) and 0.0 <= t <= 1.0):
        raise ValidationError(f"threshold must be in [0, 1], got {threshold}")
    return roi_mask & (norm >= t)


def candidate_thresholds(norm: np.ndarray, roi_mask: np.ndarray) -> np.ndarray:
    """Thresholds that can change the mask: unique ROI values, plus 0.0.

    area(t) is a non-increasing step function of t; it only steps at observed
    pixel values, so these candidates cover every achievable mask.  0.0 is
    prepended (when not already observed) as the select-everything threshold.
    """
    norm = np.asarray(norm)
    roi_mask = np.asarray(roi_mask)
    if norm.shape != roi_mask.shape:
        raise ValidationError(f"shape mismatch: slice {norm.shape} vs ROI {roi_mask.shape}")
    values = norm[roi_mask]
    if values.size == 0:
        raise ValidationError("ROI rasterizes to zero pixels")
    cands = np.unique(values)
    if cands[0] != 0.0:
        cands = np.concatenate(([0.0], cands))
    return cands


def find_matching_threshold(
    norm: np.ndarray, roi_mask: np.ndarray, reference_area_px: int
) -> tuple[float, int]:
    """Candidate threshold whose area is closest to the reference.

    Exploits monotonicity rather than scanning: with the ROI values sorted,
    the area at candidate c is the count of values >= c, which is n minus
    the rank of c's first occurrence.  searchsorted locates the last
    candidate with area >= reference, and the winner is that candidate or
    its successor, whichever is closer.  Ties in distance resolve to the
    larger threshold, as do plateaus of equal area.

    Returns (threshold, area_px).
    """
    if reference_area_px < 0:
        raise ValidationError(f"reference_area_px must be >= 0, got {reference_area_px}")
    norm = np.asarray(norm)
    roi_mask = np.asarray(roi_mask)
    values = np.sort(norm[roi_mask])
    n = values.size
    if n == 0:
        raise ValidationError("ROI rasterizes to zero pixels")
    cands, first = np.unique(values, return_index=True)
    if cands[0] != 0.0:
        cands = np.concatenate(([0.0], cands))
        first = np.concatenate(([0], first))
    areas = n - first  # area(cands[k]) = count of values >= cands[k]

    # Last k with areas[k] >= reference, i.e. first[k] <= n - reference.
    k = int(np.searchsorted(first, n - reference_area_px, side="right")) - 1
    if k < 0:
        # reference exceeds the ROI size; every candidate undershoots and the
        # closest area is the full plateau, whose largest threshold wins.
        k = int(np.searchsorted(first, 0, side="right")) - 1
        return float(cands[k]), int(areas[k])
    # Plateau of equal area: take its largest threshold.
    k = int(np.searchsorted(first, first[k], side="right")) - 1
    if k + 1 < len(cands):
        over = int(areas[k]) - reference_area_px
        under = reference_area_px - int(areas[k + 1])
        if under <= over:
            k += 1
    return float(cands[k]), int(areas[k])


def make_annotation(
    volume: DbtVolume, polygon: PolygonRoi, central_threshold: float
) -> Annotation:
    """Bind a polygon and threshold to a volume, deriving the reference area."""
    central = central_slice_index(volume)
    if polygon.annotated_slice != central:
        raise ValidationError(
            f"polygon annotates slice {polygon.annotated_slice}, "
            f"but the central slice is {central}"
        )
    roi_mask = rasterize_polygon(polygon, volume.rows, volume.cols)
    if not roi_mask.any():
        raise ValidationError("ROI rasterizes to zero pixels")
    norm = normalize_slice(volume, central)
    ref = int(np.count_nonzero(segment_slice(norm, roi_mask, central_threshold)))
    return Annotation(polygon=polygon, central_threshold=central_threshold, reference_area_px=ref)


@dataclass(frozen=True)
class DenseMask:
    """Propagation result: per-slice masks with the thresholds behind them.

    slices is (n_slices, rows, cols) bool; slice_thresholds and
    slice_areas_px run parallel to it, and each area is the popcount of its
    slice.
    """

    slices: np.ndarray
    slice_thresholds: tuple[float, ...]
    slice_areas_px: tuple[int, ...]

    def __post_init__(self):
        slices = np.asarray(self.slices)
        if slices.ndim != 3 or slices.dtype != bool:
            raise ValidationError(
                f"slices must be 3-D bool, got {slices.dtype} {slices.shape}"
            )
        thresholds = tuple(float(t) for t in self.slice_thresholds)
        areas = tuple(int(a) for a in self.slice_areas_px)
        n = slices.shape[0]
        if len(thresholds) != n or len(areas) != n:
            raise ValidationError(
                f"per-slice arrays disagree: {n} slices, "
                f"{len(thresholds)} thresholds, {len(areas)} areas"
            )
        for s, t in enumerate(thresholds):
            if not (isfinite(t) and 0.0 <= t <= 1.0):
                raise ValidationError(f"slice {s} threshold {t} outside [0, 1]")
        for s, a in enumerate(areas):
            actual = int(np.count_nonzero(slices[s]))
            if a != actual:
                raise ValidationError(
                    f"slice {s} area {a} does not match mask popcount {actual}"
                )
        object.__setattr__(self, "slices", slices)
        object.__setattr__(self, "slice_thresholds", thresholds)
        object.__setattr__(self, "slice_areas_px", areas)

    @property
    def n_slices(self) -> int:
        return self.slices.shape[0]

    @property
    def rows(self) -> int:
        return self.slices.shape[1]

    @property
    def cols(self) -> int:
        return self.slices.shape[2]


def propagate(volume: DbtVolume, annotation: Annotation, workers: int = 1) -> DenseMask:
    """Extend a central-slice annotation to a full-volume dense mask.

    The central slice uses the annotated threshold verbatim.  Every other
    slice is normalized and searched independently for the threshold whose
    area best matches annotation.reference_area_px, always inside the same
    rasterized polygon.  workers > 1 solves slices in a thread pool; the
    result is identical either way.
    """
    central = central_slice_index(volume)
    if annotation.polygon.annotated_slice != central:
        raise ValidationError(
            f"annotation is for slice {annotation.polygon.annotated_slice}, "
            f"but the central slice is {central}"
        )
    roi_mask = rasterize_polygon(annotation.polygon, volume.rows, volume.cols)
    if not roi_mask.any():
        raise ValidationError("ROI rasterizes to zero pixels")

    central_mask = segment_slice(
        normalize_slice(volume, central), roi_mask, annotation.central_threshold
    )
    ref = int(np.count_nonzero(central_mask))
    if ref != annotation.reference_area_px:
        raise ValidationError(
            f"stale annotation: stored reference area {annotation.reference_area_px} px, "
            f"recomputed {ref} px"
        )

    def solve(s: int) -> tuple[np.ndarray, float, int]:
        if s == central:
            return central_mask, annotation.central_threshold, ref
        norm = normalize_slice(volume, s)
        t, area = find_matching_threshold(norm, roi_mask, ref)
        return roi_mask & (norm >= t), t, area

    indices = range(volume.n_slices)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solved = list(pool.map(solve, indices))
    else:
        solved = [solve(s) for s in indices]

    return DenseMask(
        slices=np.stack([m for m, _, _ in solved]),
        slice_thresholds=tuple(t for _, t, _ in solved),
        slice_areas_px=tuple(a for _, _, a in solved),
    )


@dataclass(frozen=True)
class Measurements:
    """Volumetric summary of a dense mask relative to its ROI."""

    slice_areas_px: tuple[int, ...]
    slice_areas_mm2: tuple[float, ...]
    total_dense_voxels: int
    roi_area_px: int
    percent_density: float


def measure(
    mask: DenseMask, roi_mask: np.ndarray, pixel_spacing_mm: tuple[float, float]
) -> Measurements:
    """Per-slice and volumetric density of a mask.

    percent_density is the dense voxel count over the ROI prism volume
    (ROI area times slice count), as a fraction in [0, 1].
    """
    roi_mask = np.asarray(roi_mask)
    if roi_mask.shape != (mask.rows, mask.cols) or roi_mask.dtype != bool:
        raise ValidationError(
            f"ROI mask must be bool of shape {(mask.rows, mask.cols)}, "
            f"got {roi_mask.dtype} {roi_mask.shape}"
        )
    if not np.array_equal(mask.slices & roi_mask, mask.slices):
        raise ValidationError("mask has dense pixels outside the ROI")
    row_mm, col_mm = pixel_spacing_mm
    px_mm2 = float(row_mm) * float(col_mm)
    areas_px = mask.slice_areas_px
    total = int(sum(areas_px))
    roi_px = int(np.count_nonzero(roi_mask))
    denom = roi_px * mask.n_slices
    return Measurements(
        slice_areas_px=areas_px,
        slice_areas_mm2=tuple(a * px_mm2 for a in areas_px),
        total_dense_voxels=total,
        roi_area_px=roi_px,
        percent_density=total / denom if denom else 0.0,
    )
