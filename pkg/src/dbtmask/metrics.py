"""Agreement metrics and cohort summaries for dense masks.

Dice overlap between mask pairs, patient-level averaging across views, and
boxplot-style descriptive statistics stratified by volumetric density bin.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import isfinite, nan

import numpy as np

from .engine import DenseMask
from .errors import ValidationError
from .volume import VadCategory, View, percentile_index


class DiceScope(str, Enum):
    """What a Dice value was computed over."""

    VOLUME = "VOLUME"
    SLICE_P20 = "SLICE_P20"
    SLICE_P80 = "SLICE_P80"


@dataclass(frozen=True)
class DiceRecord:
    patient_id: str
    view: View
    scope: DiceScope
    dice: float

    def __post_init__(self):
        if not self.patient_id:
            raise ValidationError("patient_id must be non-empty")
        object.__setattr__(self, "view", View(self.view))
        object.__setattr__(self, "scope", DiceScope(self.scope))
        d = float(self.dice)
        if not (isfinite(d) and 0.0 <= d <= 1.0):
            raise ValidationError(f"dice must be in [0, 1], got {self.dice}")
        object.__setattr__(self, "dice", d)


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Dice overlap 2|A&B| / (|A|+|B|).  Two empty masks agree perfectly: 1.0."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.dtype != bool or b.dtype != bool:
        raise ValidationError(f"masks must be bool, got {a.dtype} and {b.dtype}")
    size_a = int(np.count_nonzero(a))
    size_b = int(np.count_nonzero(b))
    if size_a + size_b == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(a & b)) / (size_a + size_b)


def patient_dice(values) -> float:
    """Patient-level score: plain mean of that patient's per-view Dice values."""
    values = [float(v) for v in values]
    if not values:
        raise ValidationError("cannot average an empty set of dice values")
    return sum(values) / len(values)


@dataclass(frozen=True)
class BoxplotStats:
    """Five-number summary plus mean, sample SD, and the outliers themselves.

    Quartiles use linear interpolation between order statistics.  Whiskers
    reach the most extreme data points within 1.5 IQR of the quartiles but
    never retreat past the quartiles themselves; points beyond the whiskers
    are outliers.
    """

    q1: float
    median: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]
    mean: float
    sd: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        if not (self.q1 <= self.median <= self.q3):
            raise ValidationError(
                f"quartiles out of order: {self.q1}, {self.median}, {self.q3}"
            )
        if self.whisker_low > self.q1 or self.whisker_high < self.q3:
            raise ValidationError("whiskers must enclose the quartile box")


def boxplot_stats(values) -> BoxplotStats:
    """Describe a sample the way a boxplot draws it.

    sd is the sample standard deviation (ddof=1), NaN for a single point.
    """
    data = np.asarray([float(v) for v in values], dtype=np.float64)
    if data.size == 0:
        raise ValidationError("cannot summarize an empty sample")
    if not np.isfinite(data).all():
        raise ValidationError("sample contains non-finite values")
    q1, med, q3 = np.percentile(data, [25, 50, 75])
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    in_lo = data[data >= lo_fence]
    # Clamp to the quartile when no data point sits between fence and box.
    whisker_low = float(min(in_lo.min(), q1)) if in_lo.size else float(q1)
    in_hi = data[data <= hi_fence]
    whisker_high = float(max(in_hi.max(), q3)) if in_hi.size else float(q3)
    outliers = tuple(float(v) for v in np.sort(data[(data < whisker_low) | (data > whisker_high)]))
    return BoxplotStats(
        q1=float(q1),
        median=float(med),
        q3=float(q3),
        whisker_low=whisker_low,
        whisker_high=whisker_high,
        outliers=outliers,
        mean=float(data.mean()),
        sd=float(data.std(ddof=1)) if data.size > 1 else nan,
        n=int(data.size),
    )


@dataclass(frozen=True)
class StratifiedStats:
    """Boxplot summaries per density bin plus one over all patients."""

    per_category: dict[VadCategory, BoxplotStats]
    overall: BoxplotStats


def stratify(records, vad_by_patient: dict[str, VadCategory]) -> StratifiedStats:
    """Patient-level Dice summaries grouped by density category.

    records with the same patient_id are first averaged into one value per
    patient.  Every patient must have a density category; bins with no
    patients are omitted rather than reported empty.
    """
    by_patient: dict[str, list[float]] = {}
    for rec in records:
        by_patient.setdefault(rec.patient_id, []).append(rec.dice)
    if not by_patient:
        raise ValidationError("no records to stratify")
    per_patient = {pid: patient_dice(vals) for pid, vals in by_patient.items()}
    by_cat: dict[VadCategory, list[float]] = {}
    for pid, value in per_patient.items():
        if pid not in vad_by_patient:
            raise ValidationError(f"no density category for patient {pid}")
        by_cat.setdefault(VadCategory(vad_by_patient[pid]), []).append(value)
    return StratifiedStats(
        per_category={cat: boxplot_stats(vals) for cat, vals in sorted(by_cat.items())},
        overall=boxplot_stats(list(per_patient.values())),
    )


def slice_eval(
    manual: np.ndarray,
    generated: DenseMask,
    p: float,
    patient_id: str,
    view: View,
) -> DiceRecord:
    """Compare a manually drawn slice mask against the generated mask at depth p.

    Only the depth fractions 0.2 and 0.8 are defined scopes.
    """
    if p == 0.2:
        scope = DiceScope.SLICE_P20
    elif p == 0.8:
        scope = DiceScope.SLICE_P80
    else:
        raise ValidationError(f"slice evaluation depth must be 0.2 or 0.8, got {p}")
    manual = np.asarray(manual)
    if manual.shape != (generated.rows, generated.cols):
        raise ValidationError(
            f"manual mask shape {manual.shape} does not match "
            f"volume slice shape {(generated.rows, generated.cols)}"
        )
    s = percentile_index(generated.n_slices, p)
    return DiceRecord(
        patient_id=patient_id,
        view=view,
        scope=scope,
        dice=dice(manual, generated.slices[s]),
    )
