"""Polygon regions of interest and their rasterization.

Vertices live in continuous slice coordinates (x=j, y=i).  A pixel belongs
to the polygon when its center passes the even-odd rule; ties on the
boundary resolve so that top and left edges are inside and bottom and right
edges are outside, which keeps abutting polygons from double-counting
pixels.  Self-intersecting polygons are legal and follow the same rule.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import ceil, isfinite

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class PolygonRoi:
    """Closed polygon drawn on one slice.

    vertices are (x, y) pairs in order; the closing edge back to the first
    vertex is implicit.  Consecutive duplicate vertices (including the
    wrap-around pair) are rejected because they produce degenerate edges.
    """

    vertices: tuple[tuple[float, float], ...]
    annotated_slice: int

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise ValidationError(f"polygon needs at least 3 vertices, got {len(verts)}")
        for x, y in verts:
            if not (isfinite(x) and isfinite(y)):
                raise ValidationError(f"vertex ({x}, {y}) is not finite")
        for k in range(len(verts)):
            if verts[k] == verts[(k + 1) % len(verts)]:
                raise ValidationError(f"consecutive duplicate vertex at index {k}")
        if self.annotated_slice < 0:
            raise ValidationError(f"annotated_slice must be >= 0, got {self.annotated_slice}")
        object.__setattr__(self, "vertices", verts)


def check_bounds(roi: PolygonRoi, rows: int, cols: int) -> None:
    """Reject vertices outside the slice extent [-0.5, cols-0.5] x [-0.5, rows-0.5]."""
    for x, y in roi.vertices:
        if not (-0.5 <= x <= cols - 0.5 and -0.5 <= y <= rows - 0.5):
            raise ValidationError(
                f"vertex ({x}, {y}) outside slice extent "
                f"[-0.5, {cols - 0.5}] x [-0.5, {rows - 0.5}]"
            )


def rasterize_polygon(roi: PolygonRoi, rows: int, cols: int) -> np.ndarray:
    """Even-odd rasterization of the polygon onto a (rows, cols) bool grid.

    Scanline implementation: for each pixel row the crossing x of every edge
    straddling y is computed, crossings are sorted, and pixels between
    successive pairs are filled.  A pixel center x is inside a span (lo, hi]
    when lo <= x < hi in the crossing order, i.e. columns ceil(lo) through
    ceil(hi) - 1.  This matches the per-pixel parity test with a strict
    center < crossing comparison, evaluated in the same float arithmetic.
    """
    check_bounds(roi, rows, cols)
    mask = np.zeros((rows, cols), dtype=bool)
    vx = np.array([v[0] for v in roi.vertices], dtype=np.float64)
    vy = np.array([v[1] for v in roi.vertices], dtype=np.float64)
    x2 = np.roll(vx, -1)
    y2 = np.roll(vy, -1)
    for i in range(rows):
        y = float(i)
        straddles = (vy > y) != (y2 > y)
        if not straddles.any():
            continue
        xa, ya = vx[straddles], vy[straddles]
        xb, yb = x2[straddles], y2[straddles]
        xc = xa + (y - ya) * (xb - xa) / (yb - ya)
        xc.sort()
        for k in range(0, len(xc) - 1, 2):
            lo = max(ceil(xc[k]), 0)
            hi = min(ceil(xc[k + 1]) - 1, cols - 1)
            if lo <= hi:
                mask[i, lo : hi + 1] = True
    return mask


def mask_area(mask: np.ndarray, pixel_spacing_mm: tuple[float, float]) -> tuple[int, float]:
    """Pixel count and physical area in mm^2 of a boolean mask."""
    mask = np.asarray(mask)
    if mask.dtype != bool or mask.ndim != 2:
        raise ValidationError(f"mask must be 2-D bool, got {mask.dtype} {mask.shape}")
    px = int(np.count_nonzero(mask))
    row_mm, col_mm = pixel_spacing_mm
    return px, px * float(row_mm) * float(col_mm)
