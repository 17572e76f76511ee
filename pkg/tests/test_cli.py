import csv
import io
import json

import numpy as np
import pytest

from dbtmask import cli, store
from dbtmask.engine import DenseMask, make_annotation, propagate
from dbtmask.geometry import PolygonRoi
from dbtmask.metrics import dice
from dbtmask.phantom import PhantomSpec, generate
from dbtmask.store import SessionRecord, VolumeContainer
from dbtmask.volume import DbtVolume, View, central_slice_index


def write_mask_file(path, slices):
    mask = DenseMask(
        slices=slices,
        slice_thresholds=(0.5,) * slices.shape[0],
        slice_areas_px=tuple(int(slices[s].sum()) for s in range(slices.shape[0])),
    )
    store.write_mask(mask, path)
    return mask


class TestParsing:
    def test_no_command_is_input_error(self, capsys):
        assert cli.main([]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_command_is_input_error(self, capsys):
        assert cli.main(["frobnicate"]) == 1

    def test_help_exits_clean(self, capsys):
        assert cli.main(["--help"]) == 0
        assert "phantom" in capsys.readouterr().out

    def test_missing_required_flag(self, capsys):
        assert cli.main(["phantom"]) == 1


class TestPhantomCommand:
    def test_writes_volume_and_truth(self, tmp_path, capsys):
        out = tmp_path / "ph"
        spec_file = tmp_path / "spec.json"
        spec_file.write_text(json.dumps({"rows": 32, "cols": 32, "n_slices": 4,
                                         "dense_center": [15.5, 15.5, 1.5],
                                         "dense_radii": [8, 6, 2]}))
        assert cli.main(["phantom", "--spec", str(spec_file), "--out", str(out)]) == 0
        paths = capsys.readouterr().out.splitlines()
        assert paths == [f"{out}.dbtvol", f"{out}.truth.dbtmask"]
        vol = store.read_volume(paths[0]).volume
        truth = store.read_mask(paths[1])
        assert vol.voxels.shape == (4, 32, 32)
        assert truth.n_slices == 4
        # truth mask encodes the analytic membership of the same spec
        _, expected = generate(PhantomSpec(rows=32, cols=32, n_slices=4,
                                           dense_center=(15.5, 15.5, 1.5),
                                           dense_radii=(8, 6, 2)))
        assert np.array_equal(truth.slices, expected)

    def test_seed_flag_overrides(self, tmp_path):
        spec_file = tmp_path / "spec.json"
        spec_file.write_text(json.dumps({"noise_sigma": 0.05, "seed": 1}))
        cli.main(["phantom", "--spec", str(spec_file), "--out", str(tmp_path / "a")])
        cli.main(["phantom", "--spec", str(spec_file), "--seed", "2",
                  "--out", str(tmp_path / "b")])
        va = store.read_volume(tmp_path / "a.dbtvol").volume
        vb = store.read_volume(tmp_path / "b.dbtvol").volume
        assert not np.array_equal(va.voxels, vb.voxels)

    def test_unknown_spec_key(self, tmp_path, capsys):
        spec_file = tmp_path / "spec.json"
        spec_file.write_text(json.dumps({"radius": 3}))
        assert cli.main(["phantom", "--spec", str(spec_file), "--out", str(tmp_path / "x")]) == 1
        assert "radius" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path):
        spec_file = tmp_path / "spec.json"
        spec_file.write_text("{nope")
        assert cli.main(["phantom", "--spec", str(spec_file), "--out", str(tmp_path / "x")]) == 1

    def test_internal_error_exit_code(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setattr(cli, "generate", lambda spec: (_ for _ in ()).throw(RuntimeError("boom")))
        assert cli.main(["phantom", "--out", str(tmp_path / "x")]) == 2
        assert "internal error" in capsys.readouterr().err


@pytest.fixture
def annotated_case(tmp_path):
    rng = np.random.default_rng(83)
    vox = rng.integers(0, 65536, size=(5, 16, 16)).astype(np.uint16)
    vol = DbtVolume("p1", View.RCC, (0.1, 0.1), vox)
    vol_path = tmp_path / "vol.dbtvol"
    store.write_volume(VolumeContainer(volume=vol), vol_path)
    c = central_slice_index(vol)
    vertices = ((2.5, 2.5), (12.5, 2.5), (12.5, 12.5), (2.5, 12.5))
    rec = SessionRecord(
        reader_id="r1",
        volume_ref="vol.dbtvol",
        annotated_slice=c,
        vertices=vertices,
        central_threshold=0.5,
        timestamp="2026-08-22T00:00:00+00:00",
    )
    ses_path = tmp_path / "ses.session"
    store.write_session(rec, ses_path)
    return vol, rec, vol_path, ses_path


class TestPropagateCommand:
    def test_writes_mask_and_summary(self, tmp_path, annotated_case, capsys):
        vol, rec, vol_path, ses_path = annotated_case
        out = tmp_path / "mask.dbtmask"
        code = cli.main(["propagate", "--volume", str(vol_path),
                         "--session", str(ses_path), "--out", str(out)])
        assert code == 0
        printed = capsys.readouterr().out
        assert "percent_density" in printed and "total_dense_voxels" in printed

        written = store.read_mask(out)
        ann = make_annotation(
            vol,
            PolygonRoi(vertices=rec.vertices, annotated_slice=rec.annotated_slice),
            rec.central_threshold,
        )
        expected = propagate(vol, ann)
        assert np.array_equal(written.slices, expected.slices)
        assert written.slice_thresholds == expected.slice_thresholds

    def test_missing_volume_file(self, tmp_path, annotated_case, capsys):
        _, _, _, ses_path = annotated_case
        code = cli.main(["propagate", "--volume", str(tmp_path / "nope.dbtvol"),
                         "--session", str(ses_path), "--out", str(tmp_path / "m")])
        assert code == 1
        assert "error" in capsys.readouterr().err


@pytest.fixture
def evaluation_tree(tmp_path):
    """Two patients, VOLUME and SLICE_P20 rows, with known masks."""
    rng = np.random.default_rng(89)
    rows = []
    truth = {}
    for pid, vad in (("p1", "0-25"), ("p2", "51-75")):
        for view in ("RCC", "LCC"):
            a = rng.uniform(size=(10, 6, 6)) < 0.5
            b = rng.uniform(size=(10, 6, 6)) < 0.5
            write_mask_file(tmp_path / f"{pid}_{view}_a.dbtmask", a)
            write_mask_file(tmp_path / f"{pid}_{view}_b.dbtmask", b)
            truth[(pid, view, "VOLUME")] = dice(a, b)
            rows.append([pid, view, vad, "VOLUME",
                         f"{pid}_{view}_a.dbtmask", f"{pid}_{view}_b.dbtmask"])
            manual = a[2:3]  # depth 0.2 of 10 slices
            write_mask_file(tmp_path / f"{pid}_{view}_m.dbtmask", manual)
            truth[(pid, view, "SLICE_P20")] = dice(manual[0], b[2])
            rows.append([pid, view, vad, "SLICE_P20",
                         f"{pid}_{view}_m.dbtmask", f"{pid}_{view}_b.dbtmask"])
    manifest = tmp_path / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cli._MANIFEST_COLUMNS)
        writer.writerows(rows)
    return manifest, truth


class TestEvaluateCommand:
    def test_rows_match_direct_metrics(self, tmp_path, evaluation_tree, capsys):
        manifest, truth = evaluation_tree
        out_csv = tmp_path / "rows.csv"
        code = cli.main(["evaluate", "--manifest", str(manifest),
                         "--out-csv", str(out_csv)])
        assert code == 0
        with open(out_csv, newline="") as fh:
            got = list(csv.DictReader(fh))
        assert len(got) == len(truth)
        keys = [(r["patient_id"], r["view"], r["scope"]) for r in got]
        assert keys == sorted(keys)  # deterministic ordering
        for r in got:
            want = truth[(r["patient_id"], r["view"], r["scope"])]
            assert float(r["dice"]) == pytest.approx(want, abs=5e-7)

    def test_summary_matches_metrics_module(self, tmp_path, evaluation_tree, capsys):
        manifest, _ = evaluation_tree
        out_summary = tmp_path / "summary.txt"
        code = cli.main(["evaluate", "--manifest", str(manifest),
                         "--out-csv", str(tmp_path / "rows.csv"),
                         "--out-summary", str(out_summary)])
        assert code == 0
        records, vad_by_patient, errors = cli.read_manifest(str(manifest))
        assert not errors
        assert out_summary.read_text() == cli.format_summary(records, vad_by_patient)

    def test_bad_row_continues_and_fails(self, tmp_path, evaluation_tree, capsys):
        manifest, truth = evaluation_tree
        with open(manifest, "a", newline="") as fh:
            csv.writer(fh).writerow(
                ["p9", "RCC", "0-25", "VOLUME", "missing.dbtmask", "missing.dbtmask"]
            )
        out_csv = tmp_path / "rows.csv"
        code = cli.main(["evaluate", "--manifest", str(manifest),
                         "--out-csv", str(out_csv)])
        assert code == 1
        err = capsys.readouterr().err
        assert "missing.dbtmask" in err or "No such file" in err
        with open(out_csv, newline="") as fh:
            assert len(list(csv.DictReader(fh))) == len(truth)  # good rows kept

    def test_wrong_columns_rejected(self, tmp_path):
        manifest = tmp_path / "m.csv"
        manifest.write_text("a,b\n1,2\n")
        assert cli.main(["evaluate", "--manifest", str(manifest)]) == 1

    def test_conflicting_vad_reported(self, tmp_path, evaluation_tree, capsys):
        manifest, _ = evaluation_tree
        with open(manifest, "a", newline="") as fh:
            csv.writer(fh).writerow(
                ["p1", "RMLO", "76-100", "VOLUME", "p1_RCC_a.dbtmask", "p1_RCC_b.dbtmask"]
            )
        assert cli.main(["evaluate", "--manifest", str(manifest),
                         "--out-csv", str(tmp_path / "r.csv")]) == 1
        assert "conflicting" in capsys.readouterr().err
