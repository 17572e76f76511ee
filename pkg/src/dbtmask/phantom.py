"""Synthetic volumes with known dense-tissue geometry.

A phantom is a fat background with one dense shape embedded at an exact
analytic position, optionally degraded by Gaussian noise and by blurring of
the outermost slices, which mimics the out-of-plane artifacts at the edges
of a reconstructed stack.  The returned ground truth is the clean analytic
membership, untouched by any degradation.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import isfinite

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ValidationError
from .volume import DbtVolume, View

# In-plane blur sigma (pixels) of the outermost slice; decays linearly to 0
# over edge_blur_slices slices.
EDGE_BLUR_MAX_SIGMA = 3.0


class DenseShape(str, Enum):
    CYLINDER = "CYLINDER"
    ELLIPSOID = "ELLIPSOID"


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry, contrast, and degradation knobs for one synthetic volume.

    dense_center is (x, y, z) in voxel coordinates, dense_radii (rx, ry, rz).
    A CYLINDER's axis runs along z: the xy ellipse cross-section holds for
    |z - cz| <= rz.  Intensities are fractions of the uint16 dynamic range.
    """

    rows: int = 96
    cols: int = 96
    n_slices: int = 30
    dense_shape: DenseShape = DenseShape.CYLINDER
    dense_center: tuple[float, float, float] = (47.5, 47.5, 14.5)
    dense_radii: tuple[float, float, float] = (24.0, 20.0, 15.0)
    fat_intensity: float = 0.25
    dense_intensity: float = 0.75
    noise_sigma: float = 0.0
    edge_blur_slices: int = 0
    seed: int = 0
    patient_id: str = "phantom"
    view: View = View.RCC
    pixel_spacing_mm: tuple[float, float] = (0.1, 0.1)

    def __post_init__(self):
        if min(self.rows, self.cols, self.n_slices) < 1:
            raise ValidationError(
                f"dimensions must be >= 1, got "
                f"{self.n_slices}x{self.rows}x{self.cols}"
            )
        object.__setattr__(self, "dense_shape", DenseShape(self.dense_shape))
        center = tuple(float(v) for v in self.dense_center)
        radii = tuple(float(v) for v in self.dense_radii)
        if len(center) != 3 or len(radii) != 3:
            raise ValidationError("dense_center and dense_radii must have 3 components")
        if not all(isfinite(v) for v in center + radii):
            raise ValidationError("dense_center and dense_radii must be finite")
        if not all(r > 0 for r in radii):
            raise ValidationError(f"dense_radii must be positive, got {radii}")
        object.__setattr__(self, "dense_center", center)
        object.__setattr__(self, "dense_radii", radii)
        fat = float(self.fat_intensity)
        dense = float(self.dense_intensity)
        if not (0.0 <= fat < dense <= 1.0):
            raise ValidationError(
                f"need 0 <= fat_intensity < dense_intensity <= 1, got {fat} and {dense}"
            )
        object.__setattr__(self, "fat_intensity", fat)
        object.__setattr__(self, "dense_intensity", dense)
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.edge_blur_slices < 0:
            raise ValidationError(
                f"edge_blur_slices must be >= 0, got {self.edge_blur_slices}"
            )
        if 2 * self.edge_blur_slices > self.n_slices:
            raise ValidationError(
                f"edge_blur_slices {self.edge_blur_slices} overlaps itself "
                f"on {self.n_slices} slices"
            )
        cx, cy, cz = center
        rx, ry, rz = radii
        extents = (
            (cx - rx, cx + rx, self.cols, "x"),
            (cy - ry, cy + ry, self.rows, "y"),
            (cz - rz, cz + rz, self.n_slices, "z"),
        )
        for lo, hi, dim, axis in extents:
            if lo < -0.5 or hi > dim - 0.5:
                raise ValidationError(
                    f"dense shape exceeds the volume along {axis}: "
                    f"[{lo}, {hi}] vs [-0.5, {dim - 0.5}]"
                )
        object.__setattr__(self, "view", View(self.view))
        spacing = tuple(float(v) for v in self.pixel_spacing_mm)
        if len(spacing) != 2 or not all(v > 0 for v in spacing):
            raise ValidationError(f"pixel_spacing_mm must be two positive values, got {spacing}")
        object.__setattr__(self, "pixel_spacing_mm", spacing)


def _membership(spec: PhantomSpec) -> np.ndarray:
    """Analytic dense membership at voxel centers, (n_slices, rows, cols) bool."""
    cx, cy, cz = spec.dense_center
    rx, ry, rz = spec.dense_radii
    z = np.arange(spec.n_slices, dtype=np.float64)[:, None, None]
    y = np.arange(spec.rows, dtype=np.float64)[None, :, None]
    x = np.arange(spec.cols, dtype=np.float64)[None, None, :]
    dx2 = ((x - cx) / rx) ** 2
    dy2 = ((y - cy) / ry) ** 2
    if spec.dense_shape is DenseShape.CYLINDER:
        return (dx2 + dy2 <= 1.0) & (np.abs(z - cz) <= rz)
    dz2 = ((z - cz) / rz) ** 2
    return dx2 + dy2 + dz2 <= 1.0


def generate(spec: PhantomSpec) -> tuple[DbtVolume, np.ndarray]:
    """Render the phantom: (degraded uint16 volume, clean bool ground truth).

    Degradation order: intensities, additive Gaussian noise, then edge-slice
    blur with sigma shrinking linearly away from each end.  The float image
    is clipped to [0, 1] and quantized to uint16.  Identical specs produce
    identical volumes; only `seed` drives the randomness.
    """
    truth = _membership(spec)
    img = np.where(truth, spec.dense_intensity, spec.fat_intensity)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
    ebs = spec.edge_blur_slices
    for k in range(ebs):
        sigma = EDGE_BLUR_MAX_SIGMA * (ebs - k) / ebs
        img[k] = gaussian_filter(img[k], sigma=sigma)
        img[spec.n_slices - 1 - k] = gaussian_filter(img[spec.n_slices - 1 - k], sigma=sigma)
    voxels = np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(np.uint16)
    volume = DbtVolume(
        patient_id=spec.patient_id,
        view=spec.view,
        pixel_spacing_mm=spec.pixel_spacing_mm,
        voxels=voxels,
    )
    return volume, truth
