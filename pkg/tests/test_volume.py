import numpy as np
import pytest

from dbtmask.errors import ValidationError
from dbtmask.volume import (
    DbtVolume,
    View,
    central_slice_index,
    normalize_slice,
    percentile_index,
    percentile_slice_index,
)


def make_volume(voxels, spacing=(0.1, 0.1)):
    return DbtVolume(
        patient_id="p1", view=View.RCC, pixel_spacing_mm=spacing, voxels=voxels
    )


class TestDbtVolume:
    def test_accepts_uint16_stack(self):
        vol = make_volume(np.zeros((3, 4, 5), dtype=np.uint16))
        assert (vol.n_slices, vol.rows, vol.cols) == (3, 4, 5)

    def test_view_coerced_from_string(self):
        vol = DbtVolume("p1", "LMLO", (1.0, 1.0), np.zeros((1, 1, 1), dtype=np.uint16))
        assert vol.view is View.LMLO

    def test_rejects_wrong_dtype(self):
        with pytest.raises(ValidationError):
            make_volume(np.zeros((2, 2, 2), dtype=np.float32))

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValidationError):
            make_volume(np.zeros((2, 2), dtype=np.uint16))

    def test_rejects_empty_dimension(self):
        with pytest.raises(ValidationError):
            make_volume(np.zeros((0, 2, 2), dtype=np.uint16))

    def test_rejects_bad_spacing(self):
        with pytest.raises(ValidationError):
            make_volume(np.zeros((1, 1, 1), dtype=np.uint16), spacing=(0.0, 0.1))
        with pytest.raises(ValidationError):
            make_volume(np.zeros((1, 1, 1), dtype=np.uint16), spacing=(-1.0, 0.1))

    def test_rejects_unknown_view(self):
        with pytest.raises(ValueError):
            DbtVolume("p1", "XCC", (1.0, 1.0), np.zeros((1, 1, 1), dtype=np.uint16))

    def test_rejects_empty_patient_id(self):
        with pytest.raises(ValidationError):
            DbtVolume("", View.RCC, (1.0, 1.0), np.zeros((1, 1, 1), dtype=np.uint16))


class TestSliceIndexing:
    @pytest.mark.parametrize("n,expected", [(1, 0), (2, 0), (3, 1), (100, 49), (101, 50)])
    def test_central_index(self, n, expected):
        vol = make_volume(np.zeros((n, 1, 1), dtype=np.uint16))
        assert central_slice_index(vol) == expected

    @pytest.mark.parametrize(
        "n,p,expected",
        [(100, 0.2, 20), (100, 0.8, 79), (100, 0.0, 0), (100, 1.0, 99), (1, 0.5, 0)],
    )
    def test_percentile_index(self, n, p, expected):
        assert percentile_index(n, p) == expected

    def test_percentile_rounds_half_up(self):
        # 0.5 * (4 - 1) = 1.5 rounds away from the start
        assert percentile_index(4, 0.5) == 2

    @pytest.mark.parametrize("p", [-0.1, 1.1, 2.0])
    def test_percentile_domain(self, p):
        with pytest.raises(ValidationError):
            percentile_index(10, p)

    def test_percentile_monotone_in_p(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = int(rng.integers(1, 300))
            p1, p2 = sorted(rng.uniform(0, 1, size=2))
            assert percentile_index(n, p1) <= percentile_index(n, p2)

    def test_percentile_slice_index_bounds(self):
        vol = make_volume(np.zeros((7, 1, 1), dtype=np.uint16))
        assert percentile_slice_index(vol, 0.0) == 0
        assert percentile_slice_index(vol, 1.0) == 6


class TestNormalizeSlice:
    def test_range_and_extremes(self):
        rng = np.random.default_rng(3)
        vox = rng.integers(0, 65536, size=(2, 16, 16)).astype(np.uint16)
        norm = normalize_slice(make_volume(vox), 0)
        assert norm.dtype == np.float64
        assert norm.min() == 0.0
        assert norm.max() == 1.0

    def test_constant_slice_is_zero(self):
        vox = np.full((1, 4, 4), 777, dtype=np.uint16)
        assert not normalize_slice(make_volume(vox), 0).any()

    def test_index_out_of_range(self):
        vol = make_volume(np.zeros((2, 2, 2), dtype=np.uint16))
        with pytest.raises(ValidationError):
            normalize_slice(vol, 2)
        with pytest.raises(ValidationError):
            normalize_slice(vol, -1)

    def test_idempotent_after_requantization(self):
        # Quantizing the normalized slice back to uint16 and normalizing
        # again must reproduce the same quantized image.
        rng = np.random.default_rng(4)
        vox = rng.integers(100, 40000, size=(1, 32, 32)).astype(np.uint16)
        norm = normalize_slice(make_volume(vox), 0)
        quantized = np.round(norm * 65535.0).astype(np.uint16)
        norm2 = normalize_slice(make_volume(quantized[None, :, :].copy()), 0)
        requantized = np.round(norm2 * 65535.0).astype(np.uint16)
        assert np.array_equal(quantized, requantized)

    def test_affine_invariance_bitwise(self):
        # Integer rescaling of the raw values must not move the normalized
        # image by even one bit.
        rng = np.random.default_rng(5)
        for _ in range(20):
            vox = rng.integers(0, 2000, size=(1, 24, 24)).astype(np.uint16)
            a = int(rng.integers(1, 30))
            b = int(rng.integers(0, 3000))
            transformed = (vox.astype(np.int64) * a + b)
            assert transformed.max() <= 65535
            n1 = normalize_slice(make_volume(vox), 0)
            n2 = normalize_slice(make_volume(transformed.astype(np.uint16)), 0)
            assert np.array_equal(n1, n2)
