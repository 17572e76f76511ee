"""Tomosynthesis volume model and per-slice intensity normalization.

A reconstructed volume is a stack of uint16 slices with isotropic-in-plane
pixel spacing.  Slices are indexed 0..n_slices-1 along the reconstruction
axis; within a slice, pixel (i, j) sits at continuous coordinates
(x=j, y=i), so the slice occupies [-0.5, cols-0.5] x [-0.5, rows-0.5].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError


class View(str, Enum):
    """Standard acquisition views: side (R/L) crossed with projection (CC/MLO)."""

    RCC = "RCC"
    LCC = "LCC"
    RMLO = "RMLO"
    LMLO = "LMLO"


class VadCategory(str, Enum):
    """Volumetric density quartile bins, in percent dense tissue."""

    Q1 = "0-25"
    Q2 = "26-50"
    Q3 = "51-75"
    Q4 = "76-100"


@dataclass(frozen=True)
class DbtVolume:
    """A reconstructed volume plus the identifiers evaluation needs.

    voxels has shape (n_slices, rows, cols) and dtype uint16.
    pixel_spacing_mm is (row_mm, col_mm), both strictly positive.
    """

    patient_id: str
    view: View
    pixel_spacing_mm: tuple[float, float]
    voxels: np.ndarray

    def __post_init__(self):
        if not self.patient_id:
            raise ValidationError("patient_id must be non-empty")
        view = View(self.view)
        object.__setattr__(self, "view", view)
        spacing = tuple(float(v) for v in self.pixel_spacing_mm)
        if len(spacing) != 2:
            raise ValidationError("pixel_spacing_mm must be (row_mm, col_mm)")
        if not all(v > 0 and math.isfinite(v) for v in spacing):
            raise ValidationError(f"pixel_spacing_mm must be positive, got {spacing}")
        object.__setattr__(self, "pixel_spacing_mm", spacing)
        vox = np.asarray(self.voxels)
        if vox.ndim != 3:
            raise ValidationError(f"voxels must be 3-dimensional, got shape {vox.shape}")
        if vox.dtype != np.uint16:
            raise ValidationError(f"voxels must be uint16, got {vox.dtype}")
        if min(vox.shape) < 1:
            raise ValidationError(f"all volume dimensions must be >= 1, got {vox.shape}")
        object.__setattr__(self, "voxels", vox)

    @property
    def n_slices(self) -> int:
        return self.voxels.shape[0]

    @property
    def rows(self) -> int:
        return self.voxels.shape[1]

    @property
    def cols(self) -> int:
        return self.voxels.shape[2]


def central_slice_index(volume: DbtVolume) -> int:
    """Index of the slice annotated by the reader: floor((n - 1) / 2)."""
    return (volume.n_slices - 1) // 2


def percentile_index(n_slices: int, p: float) -> int:
    """Slice index at depth fraction p, rounding half away from the start.

    p must lie in [0, 1]; p=0 is the first slice and p=1 the last.
    """
    if n_slices < 1:
        raise ValidationError(f"n_slices must be >= 1, got {n_slices}")
    if not (0.0 <= p <= 1.0):
        raise ValidationError(f"percentile fraction must be in [0, 1], got {p}")
    return int(math.floor(p * (n_slices - 1) + 0.5))


def percentile_slice_index(volume: DbtVolume, p: float) -> int:
    return percentile_index(volume.n_slices, p)


def normalize_slice(volume: DbtVolume, slice_index: int) -> np.ndarray:
    """Min-max normalize one slice to float64 in [0, 1].

    Normalization is per-slice: (raw - min) / (max - min) over the full
    slice.  A constant slice maps to all zeros rather than dividing by zero.
    """
    if not (0 <= slice_index < volume.n_slices):
        raise ValidationError(
            f"slice index {slice_index} out of range for {volume.n_slices} slices"
        )
    raw = volume.voxels[slice_index].astype(np.float64)
    lo = raw.min()
    hi = raw.max()
    if hi == lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)
