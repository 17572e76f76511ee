"""Command-line interface.

Subcommands: phantom (synthesize a test volume), propagate (replay a saved
session into a mask file), evaluate (score mask pairs from a manifest), and
serve (run the HTTP annotation service).

Exit codes: 0 success, 1 bad input (files, arguments, manifest rows),
2 internal failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import store
from .engine import DenseMask, measure
from .errors import StoreError, ValidationError
from .geometry import PolygonRoi, rasterize_polygon
from .metrics import (
    BoxplotStats,
    DiceRecord,
    DiceScope,
    dice,
    slice_eval,
    stratify,
)
from .phantom import DenseShape, PhantomSpec, generate
from .volume import VadCategory, View


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; these are input errors, so exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> _Parser:
    parser = _Parser(prog="dbtmask", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic volume with known truth")
    p.add_argument("--spec", help="JSON file overriding phantom defaults")
    p.add_argument("--seed", type=int, help="override the noise seed")
    p.add_argument("--out", required=True, help="output prefix; writes <out>.dbtvol and <out>.truth.dbtmask")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("propagate", help="replay a session file into a dense mask")
    p.add_argument("--volume", required=True, help="volume container file")
    p.add_argument("--session", required=True, help="session file to replay")
    p.add_argument("--out", required=True, help="mask file to write")
    p.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("evaluate", help="score mask pairs listed in a manifest")
    p.add_argument("--manifest", required=True, help="CSV manifest of mask pairs")
    p.add_argument("--out-csv", help="write per-record rows here instead of stdout")
    p.add_argument("--out-summary", help="write the summary here instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the HTTP annotation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument(
        "--max-upload-bytes",
        type=int,
        default=int(os.environ.get("DBTMASK_MAX_UPLOAD_BYTES", 512 * 1024 * 1024)),
    )
    p.add_argument("--ui-dir", help="serve a static UI from this directory under /ui")
    p.set_defaults(func=cmd_serve)

    return parser


# --- phantom ----------------------------------------------------------------

_PHANTOM_FIELDS = {f.name for f in dataclasses.fields(PhantomSpec)}


def load_phantom_spec(path: str | None, seed: int | None) -> PhantomSpec:
    overrides: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                overrides = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: not valid JSON: {exc}")
        if not isinstance(overrides, dict):
            raise ValidationError(f"{path}: phantom overrides must be a JSON object")
        for key in overrides:
            if key not in _PHANTOM_FIELDS:
                raise ValidationError(f"{path}: unknown phantom field {key!r}")
        for key in ("dense_center", "dense_radii", "pixel_spacing_mm"):
            if key in overrides:
                overrides[key] = tuple(overrides[key])
        if "dense_shape" in overrides:
            try:
                overrides["dense_shape"] = DenseShape(overrides["dense_shape"])
            except ValueError:
                raise ValidationError(
                    f"{path}: unknown dense_shape {overrides['dense_shape']!r}"
                )
        if "view" in overrides:
            try:
                overrides["view"] = View(overrides["view"])
            except ValueError:
                raise ValidationError(f"{path}: unknown view {overrides['view']!r}")
    if seed is not None:
        overrides["seed"] = seed
    try:
        return PhantomSpec(**overrides)
    except TypeError as exc:
        raise ValidationError(f"bad phantom overrides: {exc}")


def cmd_phantom(args) -> int:
    spec = load_phantom_spec(args.spec, args.seed)
    volume, truth = generate(spec)
    vol_path = Path(f"{args.out}.dbtvol")
    truth_path = Path(f"{args.out}.truth.dbtmask")
    store.write_volume(store.VolumeContainer(volume=volume), vol_path)
    truth_mask = DenseMask(
        slices=truth,
        slice_thresholds=(0.0,) * spec.n_slices,
        slice_areas_px=tuple(int(truth[s].sum()) for s in range(spec.n_slices)),
    )
    store.write_mask(truth_mask, truth_path)
    print(vol_path)
    print(truth_path)
    return 0


# --- propagate --------------------------------------------------------------

def cmd_propagate(args) -> int:
    container = store.read_volume(args.volume)
    record = store.read_session(args.session)
    volume = container.volume
    mask = store.replay_session(volume, record, workers=args.jobs)
    store.write_mask(mask, args.out)

    polygon = PolygonRoi(vertices=record.vertices, annotated_slice=record.annotated_slice)
    roi_mask = rasterize_polygon(polygon, volume.rows, volume.cols)
    m = measure(mask, roi_mask, volume.pixel_spacing_mm)
    print(f"wrote {args.out}")
    print("slice threshold area_px")
    for s in range(mask.n_slices):
        print(f"{s} {mask.slice_thresholds[s]:.6g} {mask.slice_areas_px[s]}")
    print(f"total_dense_voxels {m.total_dense_voxels}")
    print(f"percent_density {m.percent_density:.6f}")
    return 0


# --- evaluate ---------------------------------------------------------------

_MANIFEST_COLUMNS = ["patient_id", "view", "vad_category", "scope", "mask_a", "mask_b"]


def read_manifest(path: str):
    """Score every manifest row.

    Returns (records, vad_by_patient, errors); errors are per-row messages,
    and a failing row never aborts the remainder.
    """
    base = Path(path).parent
    records: list[DiceRecord] = []
    vad_by_patient: dict[str, VadCategory] = {}
    errors: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _MANIFEST_COLUMNS:
            raise ValidationError(
                f"manifest columns must be {','.join(_MANIFEST_COLUMNS)}, "
                f"got {','.join(reader.fieldnames or [])}"
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(_score_row(row, base, vad_by_patient))
            except (ValidationError, StoreError, OSError) as exc:
                errors.append(f"{path}:{lineno}: {exc}")
    if not records and not errors:
        raise ValidationError(f"{path}: manifest has no data rows")
    return records, vad_by_patient, errors


def _score_row(row: dict, base: Path, vad_by_patient: dict) -> DiceRecord:
    for col in _MANIFEST_COLUMNS:
        if not row.get(col):
            raise ValidationError(f"missing value for column {col!r}")
    patient_id = row["patient_id"]
    try:
        view = View(row["view"])
    except ValueError:
        raise ValidationError(f"unknown view {row['view']!r}")
    try:
        vad = VadCategory(row["vad_category"])
    except ValueError:
        raise ValidationError(f"unknown vad_category {row['vad_category']!r}")
    if vad_by_patient.setdefault(patient_id, vad) != vad:
        raise ValidationError(
            f"patient {patient_id} listed with conflicting vad_category values"
        )
    try:
        scope = DiceScope(row["scope"])
    except ValueError:
        raise ValidationError(f"unknown scope {row['scope']!r}")
    mask_a = store.read_mask(base / row["mask_a"])
    mask_b = store.read_mask(base / row["mask_b"])
    if scope is DiceScope.VOLUME:
        return DiceRecord(
            patient_id=patient_id,
            view=view,
            scope=scope,
            dice=dice(mask_a.slices, mask_b.slices),
        )
    if mask_a.n_slices != 1:
        raise ValidationError(
            f"slice-scope mask_a must hold exactly 1 slice, got {mask_a.n_slices}"
        )
    p = 0.2 if scope is DiceScope.SLICE_P20 else 0.8
    return slice_eval(mask_a.slices[0], mask_b, p, patient_id, view)


def _format_stats(label: str, st: BoxplotStats) -> str:
    outliers = " ".join(f"{v:.6f}" for v in st.outliers) or "-"
    return (
        f"  group {label}: n={st.n} median={st.median:.6f} q1={st.q1:.6f} q3={st.q3:.6f}"
        f" whiskers=[{st.whisker_low:.6f}, {st.whisker_high:.6f}]"
        f" mean={st.mean:.6f} sd={st.sd:.6f} outliers={outliers}"
    )


def format_summary(records, vad_by_patient) -> str:
    """Per-scope, per-density-bin boxplot summary of patient-level Dice."""
    lines = []
    for scope in DiceScope:
        scoped = [r for r in records if r.scope is scope]
        if not scoped:
            continue
        strat = stratify(scoped, vad_by_patient)
        lines.append(f"scope {scope.value}")
        lines.append(_format_stats("all", strat.overall))
        for cat, st in strat.per_category.items():
            lines.append(_format_stats(cat.value, st))
    return "\n".join(lines) + "\n"


def cmd_evaluate(args) -> int:
    records, vad_by_patient, errors = read_manifest(args.manifest)
    for message in errors:
        print(f"error: {message}", file=sys.stderr)

    rows = sorted(records, key=lambda r: (r.patient_id, r.view.value, r.scope.value))
    csv_dest = open(args.out_csv, "w", newline="", encoding="utf-8") if args.out_csv else sys.stdout
    try:
        writer = csv.writer(csv_dest)
        writer.writerow(["patient_id", "view", "scope", "dice", "vad_category"])
        for r in rows:
            writer.writerow(
                [r.patient_id, r.view.value, r.scope.value, f"{r.dice:.6f}",
                 vad_by_patient[r.patient_id].value]
            )
    finally:
        if args.out_csv:
            csv_dest.close()

    if records:
        summary = format_summary(records, vad_by_patient)
        if args.out_summary:
            Path(args.out_summary).write_text(summary, encoding="utf-8")
        else:
            sys.stdout.write(summary)
    return 1 if errors else 0


# --- serve ------------------------------------------------------------------

def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(max_upload_bytes=args.max_upload_bytes, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValidationError, StoreError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
