"""File formats for volumes, dense masks, and annotation sessions.

All three formats share one shape: a text header of "key: value" lines,
format_version first, terminated by a blank line, then a payload.  Volumes
carry raw little-endian uint16 voxels; masks carry one run-length line per
slice; sessions are all header plus a vertex block.  Reals are written with
17 significant digits so a read-back value is bit-identical, and writes to
a path go through a temp file and rename so a crash cannot leave a half
file behind.
"""
from __future__ import annotations

import os
from contextlib import contextmanager
from dataclasses import dataclass
from math import isfinite
from pathlib import Path

import numpy as np

from .engine import DenseMask, make_annotation, propagate
from .errors import (
    ConsistencyError,
    CorruptFileError,
    FormatVersionError,
    ValidationError,
)
from .geometry import PolygonRoi
from .volume import DbtVolume, VadCategory, View

FORMAT_VERSION = 1


def _fmt_float(x: float) -> str:
    return format(float(x), ".17g")


@contextmanager
def _write_dest(dest):
    """Yield a binary write handle for a path or file-like destination.

    Paths are written atomically: temp file in the same directory, then
    os.replace.
    """
    if hasattr(dest, "write"):
        yield dest
        return
    path = Path(dest)
    tmp = path.with_name(f"{path.name}.tmp{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def _read_source(src) -> bytes:
    if hasattr(src, "read"):
        return src.read()
    with open(src, "rb") as fh:
        return fh.read()


def _split_header(data: bytes, what: str) -> tuple[list[str], bytes]:
    """Split raw bytes at the header-terminating blank line."""
    sep = data.find(b"\n\n")
    if sep < 0:
        raise CorruptFileError(f"{what}: no blank line terminating the header")
    try:
        text = data[:sep].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptFileError(f"{what}: header is not valid UTF-8") from exc
    return text.split("\n"), data[sep + 2 :]


def _parse_header(
    lines: list[str], what: str, required: set[str], optional: set[str]
) -> dict[str, str]:
    """Parse "key: value" lines; format_version must come first and be known."""
    fields: dict[str, str] = {}
    for line in lines:
        key, sep, value = line.partition(": ")
        if not sep or not key:
            raise CorruptFileError(f"{what}: malformed header line {line!r}")
        if key in fields:
            raise CorruptFileError(f"{what}: duplicate header key {key!r}")
        fields[key] = value
    if not lines or not lines[0].startswith("format_version: "):
        raise CorruptFileError(f"{what}: first header line must be format_version")
    version = fields["format_version"]
    if version != str(FORMAT_VERSION):
        raise FormatVersionError(f"{what}: unsupported format_version {version!r}")
    for key in fields:
        if key not in required and key not in optional:
            raise CorruptFileError(f"{what}: unknown header key {key!r}")
    for key in required:
        if key not in fields:
            raise CorruptFileError(f"{what}: missing header key {key!r}")
    return fields


def _parse_int(fields: dict[str, str], key: str, what: str, minimum: int = 0) -> int:
    try:
        value = int(fields[key])
    except ValueError as exc:
        raise CorruptFileError(f"{what}: {key} is not an integer: {fields[key]!r}") from exc
    if value < minimum:
        raise CorruptFileError(f"{what}: {key} must be >= {minimum}, got {value}")
    return value


def _parse_floats(text: str, what: str, label: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split()]
    except ValueError as exc:
        raise CorruptFileError(f"{what}: {label} holds a non-numeric token") from exc


# --- volume container ---------------------------------------------------

@dataclass(frozen=True)
class VolumeContainer:
    """A volume plus the optional density category evaluation groups by."""

    volume: DbtVolume
    vad_category: VadCategory | None = None

    def __post_init__(self):
        if self.vad_category is not None:
            object.__setattr__(self, "vad_category", VadCategory(self.vad_category))


def write_volume(container: VolumeContainer, dest) -> None:
    vol = container.volume
    lines = [
        f"format_version: {FORMAT_VERSION}",
        f"patient_id: {vol.patient_id}",
        f"view: {vol.view.value}",
        f"rows: {vol.rows}",
        f"cols: {vol.cols}",
        f"n_slices: {vol.n_slices}",
        f"pixel_spacing_mm: {_fmt_float(vol.pixel_spacing_mm[0])}"
        f" {_fmt_float(vol.pixel_spacing_mm[1])}",
    ]
    if container.vad_category is not None:
        lines.append(f"vad_category: {container.vad_category.value}")
    header = ("\n".join(lines) + "\n\n").encode("utf-8")
    with _write_dest(dest) as fh:
        fh.write(header)
        fh.write(vol.voxels.astype("<u2").tobytes(order="C"))


def read_volume(src) -> VolumeContainer:
    what = "volume file"
    lines, payload = _split_header(_read_source(src), what)
    fields = _parse_header(
        lines,
        what,
        required={
            "format_version", "patient_id", "view",
            "rows", "cols", "n_slices", "pixel_spacing_mm",
        },
        optional={"vad_category"},
    )
    rows = _parse_int(fields, "rows", what, minimum=1)
    cols = _parse_int(fields, "cols", what, minimum=1)
    n_slices = _parse_int(fields, "n_slices", what, minimum=1)
    spacing = _parse_floats(fields["pixel_spacing_mm"], what, "pixel_spacing_mm")
    if len(spacing) != 2:
        raise CorruptFileError(f"{what}: pixel_spacing_mm needs 2 values, got {len(spacing)}")
    try:
        view = View(fields["view"])
    except ValueError as exc:
        raise CorruptFileError(f"{what}: unknown view {fields['view']!r}") from exc
    vad = None
    if "vad_category" in fields:
        try:
            vad = VadCategory(fields["vad_category"])
        except ValueError as exc:
            raise CorruptFileError(
                f"{what}: unknown vad_category {fields['vad_category']!r}"
            ) from exc
    expected = n_slices * rows * cols * 2
    if len(payload) != expected:
        raise CorruptFileError(
            f"{what}: payload expected {expected} bytes, got {len(payload)}"
        )
    voxels = (
        np.frombuffer(payload, dtype="<u2")
        .reshape(n_slices, rows, cols)
        .astype(np.uint16)
    )
    try:
        volume = DbtVolume(
            patient_id=fields["patient_id"],
            view=view,
            pixel_spacing_mm=(spacing[0], spacing[1]),
            voxels=voxels,
        )
    except ValidationError as exc:
        raise CorruptFileError(f"{what}: {exc}") from exc
    return VolumeContainer(volume=volume, vad_category=vad)


# --- run-length coding ----------------------------------------------------

def encode_rle(mask: np.ndarray) -> list[int]:
    """Run lengths of a flattened mask, alternating zero/one, zeros first.

    The leading zero run may be 0 when the mask starts set; runs always sum
    to the pixel count.
    """
    flat = np.asarray(mask).astype(bool).ravel()
    n = flat.size
    changes = np.flatnonzero(np.diff(flat.view(np.uint8)))
    boundaries = np.concatenate(([0], changes + 1, [n]))
    runs = np.diff(boundaries).astype(int).tolist()
    if n and flat[0]:
        runs.insert(0, 0)
    return runs


def decode_rle(runs, n_pixels: int) -> np.ndarray:
    """Rebuild the flat bool mask; the runs must tile n_pixels exactly."""
    runs = [int(r) for r in runs]
    if any(r < 0 for r in runs):
        raise CorruptFileError(f"negative run length in {runs}")
    total = sum(runs)
    if total != n_pixels:
        raise CorruptFileError(f"run lengths sum to {total}, expected {n_pixels}")
    values = np.arange(len(runs)) % 2 == 1
    return np.repeat(values, runs)


# --- dense mask file ------------------------------------------------------

def write_mask(mask: DenseMask, dest) -> None:
    lines = [
        f"format_version: {FORMAT_VERSION}",
        f"n_slices: {mask.n_slices}",
        f"rows: {mask.rows}",
        f"cols: {mask.cols}",
        "slice_thresholds: " + " ".join(_fmt_float(t) for t in mask.slice_thresholds),
        "slice_areas_px: " + " ".join(str(a) for a in mask.slice_areas_px),
    ]
    body = "\n".join(
        " ".join(str(r) for r in encode_rle(mask.slices[s])) for s in range(mask.n_slices)
    )
    with _write_dest(dest) as fh:
        fh.write(("\n".join(lines) + "\n\n" + body + "\n").encode("utf-8"))


def read_mask(src) -> DenseMask:
    what = "mask file"
    lines, payload = _split_header(_read_source(src), what)
    fields = _parse_header(
        lines,
        what,
        required={
            "format_version", "n_slices", "rows", "cols",
            "slice_thresholds", "slice_areas_px",
        },
        optional=set(),
    )
    n_slices = _parse_int(fields, "n_slices", what, minimum=1)
    rows = _parse_int(fields, "rows", what, minimum=1)
    cols = _parse_int(fields, "cols", what, minimum=1)
    thresholds = _parse_floats(fields["slice_thresholds"], what, "slice_thresholds")
    areas = _parse_floats(fields["slice_areas_px"], what, "slice_areas_px")
    if len(thresholds) != n_slices or len(areas) != n_slices:
        raise CorruptFileError(
            f"{what}: per-slice header lengths {len(thresholds)} and {len(areas)} "
            f"do not match n_slices {n_slices}"
        )
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptFileError(f"{what}: run-length payload is not valid UTF-8") from exc
    rle_lines = text.splitlines()
    if len(rle_lines) != n_slices:
        raise CorruptFileError(
            f"{what}: expected {n_slices} run-length lines, got {len(rle_lines)}"
        )
    slices = np.empty((n_slices, rows, cols), dtype=bool)
    for s, line in enumerate(rle_lines):
        runs = _parse_floats(line, what, f"slice {s} run lengths")
        if any(r != int(r) for r in runs):
            raise CorruptFileError(f"{what}: slice {s} has a fractional run length")
        slices[s] = decode_rle([int(r) for r in runs], rows * cols).reshape(rows, cols)
        decoded = int(np.count_nonzero(slices[s]))
        if decoded != int(areas[s]):
            raise ConsistencyError(
                f"{what}: slice {s} decodes to {decoded} px "
                f"but the header claims {int(areas[s])}"
            )
    try:
        return DenseMask(
            slices=slices,
            slice_thresholds=tuple(thresholds),
            slice_areas_px=tuple(int(a) for a in areas),
        )
    except ValidationError as exc:
        raise CorruptFileError(f"{what}: {exc}") from exc


# --- annotation session ---------------------------------------------------

@dataclass(frozen=True)
class SessionRecord:
    """Everything needed to replay one reader's annotation of one volume.

    slice_thresholds and slice_areas_px capture the propagation result when
    present; both or neither must be given.
    """

    reader_id: str
    volume_ref: str
    annotated_slice: int
    vertices: tuple[tuple[float, float], ...]
    central_threshold: float
    timestamp: str
    slice_thresholds: tuple[float, ...] | None = None
    slice_areas_px: tuple[int, ...] | None = None

    def __post_init__(self):
        for field in ("reader_id", "volume_ref", "timestamp"):
            if not getattr(self, field):
                raise ValidationError(f"{field} must be non-empty")
        if self.annotated_slice < 0:
            raise ValidationError(f"annotated_slice must be >= 0, got {self.annotated_slice}")
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise ValidationError(f"session needs at least 3 vertices, got {len(verts)}")
        object.__setattr__(self, "vertices", verts)
        t = float(self.central_threshold)
        if not (isfinite(t) and 0.0 <= t <= 1.0):
            raise ValidationError(f"central_threshold must be in [0, 1], got {t}")
        object.__setattr__(self, "central_threshold", t)
        if (self.slice_thresholds is None) != (self.slice_areas_px is None):
            raise ValidationError(
                "slice_thresholds and slice_areas_px must be given together"
            )
        if self.slice_thresholds is not None:
            ts = tuple(float(v) for v in self.slice_thresholds)
            ar = tuple(int(v) for v in self.slice_areas_px)
            if len(ts) != len(ar):
                raise ValidationError(
                    f"{len(ts)} slice_thresholds vs {len(ar)} slice_areas_px"
                )
            object.__setattr__(self, "slice_thresholds", ts)
            object.__setattr__(self, "slice_areas_px", ar)


def write_session(record: SessionRecord, dest) -> None:
    lines = [
        f"format_version: {FORMAT_VERSION}",
        f"reader_id: {record.reader_id}",
        f"volume_ref: {record.volume_ref}",
        f"timestamp: {record.timestamp}",
        f"annotated_slice: {record.annotated_slice}",
        f"central_threshold: {_fmt_float(record.central_threshold)}",
        f"vertices: {len(record.vertices)}",
    ]
    lines += [f"{_fmt_float(x)} {_fmt_float(y)}" for x, y in record.vertices]
    if record.slice_thresholds is not None:
        lines.append(
            "slice_thresholds: " + " ".join(_fmt_float(t) for t in record.slice_thresholds)
        )
        lines.append("slice_areas_px: " + " ".join(str(a) for a in record.slice_areas_px))
    with _write_dest(dest) as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))


def read_session(src) -> SessionRecord:
    what = "session file"
    try:
        text = _read_source(src).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptFileError(f"{what}: not valid UTF-8") from exc
    lines = text.splitlines()
    if not lines or not lines[0].startswith("format_version: "):
        raise CorruptFileError(f"{what}: first header line must be format_version")
    version = lines[0].partition(": ")[2]
    if version != str(FORMAT_VERSION):
        raise FormatVersionError(f"{what}: unsupported format_version {version!r}")

    fields: dict[str, str] = {}
    vertices: list[tuple[float, float]] = []
    i = 1
    while i < len(lines):
        key, sep, value = lines[i].partition(": ")
        if not sep or not key:
            raise CorruptFileError(f"{what}: malformed line {lines[i]!r}")
        if key in fields or (key == "vertices" and vertices):
            raise CorruptFileError(f"{what}: duplicate key {key!r}")
        i += 1
        if key == "vertices":
            count = _parse_int({"vertices": value}, "vertices", what)
            if i + count > len(lines):
                raise CorruptFileError(
                    f"{what}: vertex block claims {count} vertices, "
                    f"only {len(lines) - i} lines remain"
                )
            for k in range(count):
                pair = _parse_floats(lines[i + k], what, f"vertex {k}")
                if len(pair) != 2:
                    raise CorruptFileError(
                        f"{what}: vertex {k} needs 2 coordinates, got {len(pair)}"
                    )
                vertices.append((pair[0], pair[1]))
            i += count
        else:
            fields[key] = value

    known = {
        "reader_id", "volume_ref", "timestamp",
        "annotated_slice", "central_threshold",
        "slice_thresholds", "slice_areas_px",
    }
    for key in fields:
        if key not in known:
            raise CorruptFileError(f"{what}: unknown key {key!r}")
    for key in ("reader_id", "volume_ref", "timestamp", "annotated_slice", "central_threshold"):
        if key not in fields:
            raise ValidationError(f"{what}: missing field {key!r}")
    if not vertices:
        raise ValidationError(f"{what}: missing field 'vertices'")

    thresholds = None
    areas = None
    if "slice_thresholds" in fields or "slice_areas_px" in fields:
        if "slice_thresholds" not in fields or "slice_areas_px" not in fields:
            raise ValidationError(
                f"{what}: slice_thresholds and slice_areas_px must appear together"
            )
        thresholds = tuple(_parse_floats(fields["slice_thresholds"], what, "slice_thresholds"))
        area_vals = _parse_floats(fields["slice_areas_px"], what, "slice_areas_px")
        if any(a != int(a) for a in area_vals):
            raise CorruptFileError(f"{what}: fractional slice_areas_px value")
        areas = tuple(int(a) for a in area_vals)

    try:
        return SessionRecord(
            reader_id=fields["reader_id"],
            volume_ref=fields["volume_ref"],
            annotated_slice=_parse_int(fields, "annotated_slice", what),
            vertices=tuple(vertices),
            central_threshold=float(fields["central_threshold"]),
            timestamp=fields["timestamp"],
            slice_thresholds=thresholds,
            slice_areas_px=areas,
        )
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise CorruptFileError(f"{what}: {exc}") from exc


def replay_session(volume: DbtVolume, record: SessionRecord, workers: int = 1) -> DenseMask:
    """Re-run propagation exactly as the recorded session would have.

    The stored result fields, when present, are ignored here; callers can
    compare them against the replayed mask to verify a record.
    """
    polygon = PolygonRoi(vertices=record.vertices, annotated_slice=record.annotated_slice)
    annotation = make_annotation(volume, polygon, record.central_threshold)
    return propagate(volume, annotation, workers=workers)
