import json

import numpy as np
import pytest

from vesseltrace.errors import ComputeError, DataError, OutOfBoundsError
from vesseltrace.volume import (
    NORMALIZED_UNIT,
    RAW_STORED,
    Volume,
    WindowParams,
    apply_window,
    gradient_at,
    hessian_at_scale,
    hessian_volumes,
    load_nrrd,
    load_volume,
    normalize_hu,
    sample_trilinear,
    save_volume,
)


def make_volume(dims, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), fn=None):
    nx, ny, nz = dims
    data = np.zeros((nz, ny, nx), dtype=np.float32)
    if fn is not None:
        ks, js, is_ = np.meshgrid(range(nz), range(ny), range(nx), indexing="ij")
        x = origin[0] + is_ * spacing[0]
        y = origin[1] + js * spacing[1]
        z = origin[2] + ks * spacing[2]
        data = fn(x, y, z).astype(np.float32)
    return Volume(dims, spacing, origin, data, RAW_STORED)


class TestContainerIO:
    def test_minimal_roundtrip_order(self, tmp_path):
        values = np.arange(8, dtype=np.float32)
        vol = Volume((2, 2, 2), (1, 1, 1), (0, 0, 0), values.reshape(2, 2, 2))
        save_volume(vol, tmp_path / "mini")
        back = load_volume(tmp_path / "mini.json")
        assert back.dims == (2, 2, 2)
        # x-fastest payload order: flattening the (z, y, x) array reproduces it
        assert np.array_equal(back.data.ravel(), values)

    def test_payload_size_mismatch(self, tmp_path):
        header = {
            "dims": [3, 3, 3],
            "spacing_mm": [1, 1, 1],
            "origin_mm": [0, 0, 0],
            "dtype": "f32",
            "value_kind": "raw-stored",
        }
        (tmp_path / "bad.json").write_text(json.dumps(header))
        (tmp_path / "bad.raw").write_bytes(
            np.zeros(26, dtype="<f4").tobytes()
        )
        with pytest.raises(DataError, match="payload size mismatch"):
            load_volume(tmp_path / "bad.json")

    def test_random_roundtrip_bitwise(self, tmp_path):
        rng = np.random.default_rng(7)
        data = rng.random((64, 64, 64), dtype=np.float32)
        vol = Volume((64, 64, 64), (0.7, 0.7, 1.2), (-3.0, 5.0, 0.0), data)
        save_volume(vol, tmp_path / "rt")
        back = load_volume(tmp_path / "rt")
        assert back.dims == vol.dims
        assert back.spacing == vol.spacing
        assert back.origin == vol.origin
        assert np.array_equal(back.data, vol.data)

    def test_missing_header(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_volume(tmp_path / "nope.json")

    def test_non_positive_spacing_rejected(self, tmp_path):
        header = {
            "dims": [2, 2, 2],
            "spacing_mm": [1, 0, 1],
            "origin_mm": [0, 0, 0],
            "dtype": "f32",
            "value_kind": "raw-stored",
        }
        (tmp_path / "s.json").write_text(json.dumps(header))
        (tmp_path / "s.raw").write_bytes(np.zeros(8, dtype="<f4").tobytes())
        with pytest.raises(DataError):
            load_volume(tmp_path / "s.json")

    def test_i16_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        data = rng.integers(-1024, 2000, size=(4, 5, 6), dtype=np.int16)
        vol = Volume((6, 5, 4), (0.5, 0.6, 0.7), (0, 0, 0), data)
        save_volume(vol, tmp_path / "ct")
        back = load_volume(tmp_path / "ct")
        assert back.data.dtype == np.int16
        assert np.array_equal(back.data, data)

    def test_nrrd_import(self, tmp_path):
        rng = np.random.default_rng(11)
        data = rng.random((3, 4, 5)).astype("<f4")
        (tmp_path / "vol.raw").write_bytes(data.tobytes())
        (tmp_path / "vol.nhdr").write_text(
            "NRRD0004\n"
            "type: float\n"
            "dimension: 3\n"
            "sizes: 5 4 3\n"
            "space directions: (0.5,0,0) (0,0.6,0) (0,0,1.2)\n"
            "endian: little\n"
            "encoding: raw\n"
            "space origin: (1.0, 2.0, 3.0)\n"
            "data file: vol.raw\n"
        )
        vol = load_nrrd(tmp_path / "vol.nhdr")
        assert vol.dims == (5, 4, 3)
        assert vol.spacing == (0.5, 0.6, 1.2)
        assert vol.origin == (1.0, 2.0, 3.0)
        assert np.array_equal(vol.data, data)


class TestNormalizeHU:
    def test_window_midpoint(self):
        vol = make_volume((2, 2, 2))
        vol.data[:] = 1084.0
        w = WindowParams(60, 400, -1024, 1)
        out = normalize_hu(vol, w)
        assert out.value_kind == NORMALIZED_UNIT
        assert np.allclose(out.data, 0.5)

    def test_window_edges(self):
        w = WindowParams(60, 400, -1024, 1)
        # HU of -140 / 260 are the window edges
        assert apply_window(np.array([-140.0 + 1024.0]), w)[0] == 0.0
        assert apply_window(np.array([260.0 + 1024.0]), w)[0] == 1.0

    def test_clamps_above_window(self):
        w = WindowParams(60, 400, -1024, 1)
        assert apply_window(np.array([500.0 + 1024.0]), w)[0] == 1.0

    def test_monotone(self):
        rng = np.random.default_rng(5)
        stored = np.sort(rng.uniform(-500, 3000, size=200))
        w = WindowParams(60, 400, -1024, 1)
        out = apply_window(stored, w)
        assert np.all(np.diff(out) >= 0)

    def test_identity_window_idempotent(self):
        rng = np.random.default_rng(6)
        unit = rng.random(100)
        w = WindowParams(0.5, 1.0, 0.0, 1.0)
        assert np.allclose(apply_window(unit, w), unit)

    def test_requires_raw(self):
        vol = make_volume((2, 2, 2))
        vol = vol.with_data(np.zeros((2, 2, 2), np.float32), NORMALIZED_UNIT)
        with pytest.raises(DataError):
            normalize_hu(vol, WindowParams())


class TestTrilinear:
    def test_exact_at_voxel_centers(self):
        rng = np.random.default_rng(2)
        vol = make_volume((4, 4, 4), spacing=(0.7, 1.1, 0.9), origin=(1, 2, 3))
        vol.data[:] = rng.random((4, 4, 4)).astype(np.float32)
        for idx in [(0, 0, 0), (3, 2, 1), (2, 3, 3)]:
            p = vol.index_to_mm(idx)
            assert sample_trilinear(vol, p) == pytest.approx(
                vol.voxel_value(idx), abs=1e-7
            )

    def test_midpoint_linear(self):
        vol = make_volume((2, 2, 2))
        vol.data[0, 0, 1] = 1.0
        assert sample_trilinear(vol, (0.5, 0, 0)) == pytest.approx(0.5)

    def test_constant(self):
        vol = make_volume((3, 3, 3))
        vol.data[:] = 4.25
        assert sample_trilinear(vol, (1.3, 0.2, 1.9)) == pytest.approx(4.25)

    def test_bounded_by_corners(self):
        rng = np.random.default_rng(9)
        vol = make_volume((5, 5, 5))
        vol.data[:] = rng.random((5, 5, 5)).astype(np.float32)
        for _ in range(200):
            p = rng.uniform(0, 4, size=3)
            v = sample_trilinear(vol, p)
            i0 = np.floor(p).astype(int)
            i0 = np.minimum(i0, 3)
            block = vol.data[
                i0[2] : i0[2] + 2, i0[1] : i0[1] + 2, i0[0] : i0[0] + 2
            ]
            assert block.min() - 1e-7 <= v <= block.max() + 1e-7

    def test_out_of_bounds(self):
        vol = make_volume((3, 3, 3))
        with pytest.raises(OutOfBoundsError):
            sample_trilinear(vol, (-0.5, 1, 1))
        with pytest.raises(OutOfBoundsError):
            sample_trilinear(vol, (1, 1, 2.5))


class TestGradient:
    def test_linear_ramp(self):
        vol = make_volume(
            (8, 8, 8), spacing=(0.6, 1.3, 0.9), fn=lambda x, y, z: 2.0 * x
        )
        g = gradient_at(vol, vol.index_to_mm((3, 3, 3)))
        assert np.allclose(g, [2.0, 0.0, 0.0], atol=1e-6)

    def test_constant(self):
        vol = make_volume((6, 6, 6))
        vol.data[:] = 3.0
        g = gradient_at(vol, (2.5, 2.5, 2.5))
        assert np.allclose(g, 0.0, atol=1e-9)

    def test_affine_combination(self):
        vol = make_volume(
            (8, 8, 8), spacing=(0.5, 0.8, 1.4), fn=lambda x, y, z: x + 3.0 * z
        )
        g = gradient_at(vol, vol.index_to_mm((4, 4, 4)))
        assert np.allclose(g, [1.0, 0.0, 3.0], atol=1e-6)

    def test_stencil_out_of_bounds(self):
        vol = make_volume((3, 3, 3))
        with pytest.raises(OutOfBoundsError):
            gradient_at(vol, (0.0, 1.0, 1.0), h=0.5)


def finite_difference_hessian(vol, index, sigma):
    """Oracle: central differences of the Gaussian-smoothed grid values."""
    from scipy.ndimage import correlate1d

    from vesseltrace.volume import gaussian_kernel1d

    smoothed = vol.data.astype(np.float64)
    for phys_axis in range(3):
        k0 = gaussian_kernel1d(sigma, vol.spacing[phys_axis], 0)
        smoothed = correlate1d(smoothed, k0, axis=2 - phys_axis, mode="reflect")
    i, j, k = index
    s = vol.spacing

    def val(di, dj, dk):
        return smoothed[k + dk, j + dj, i + di]

    h = np.zeros((3, 3))
    steps = {0: (1, 0, 0), 1: (0, 1, 0), 2: (0, 0, 1)}
    for a in range(3):
        da = steps[a]
        h[a, a] = (val(*[d for d in da]) - 2 * val(0, 0, 0) + val(*[-d for d in da])) / (
            s[a] ** 2
        )
    for a in range(3):
        for b in range(a + 1, 3):
            da, db = np.array(steps[a]), np.array(steps[b])
            h[a, b] = h[b, a] = (
                val(*(da + db)) - val(*(da - db)) - val(*(db - da)) + val(*(-da - db))
            ) / (4.0 * s[a] * s[b])
    return h


class TestHessian:
    def test_quadratic_x2(self):
        vol = make_volume(
            (24, 24, 24), spacing=(0.8, 1.0, 1.2), fn=lambda x, y, z: x**2
        )
        h = hessian_at_scale(vol, (12, 12, 12), sigma_mm=1.0)
        assert h[0, 0] == pytest.approx(2.0, rel=0.05)
        assert abs(h[1, 1]) < 0.05 and abs(h[2, 2]) < 0.05
        oracle = finite_difference_hessian(vol, (12, 12, 12), 1.0)
        assert np.allclose(h, oracle, atol=0.05)

    def test_constant_zero(self):
        vol = make_volume((12, 12, 12))
        vol.data[:] = 0.7
        h = hessian_at_scale(vol, (6, 6, 6), sigma_mm=1.0)
        assert np.allclose(h, 0.0, atol=1e-9)

    def test_cross_term_xy(self):
        vol = make_volume(
            (24, 24, 24), spacing=(0.9, 0.7, 1.1), fn=lambda x, y, z: x * y
        )
        h = hessian_at_scale(vol, (12, 12, 12), sigma_mm=1.0)
        assert h[0, 1] == pytest.approx(1.0, rel=0.05)
        assert abs(h[0, 0]) < 0.05 and abs(h[2, 2]) < 0.05
        oracle = finite_difference_hessian(vol, (12, 12, 12), 1.0)
        assert np.allclose(h, oracle, atol=0.05)

    def test_exactly_symmetric(self):
        rng = np.random.default_rng(4)
        vol = make_volume((16, 16, 16), spacing=(0.6, 0.8, 1.0))
        vol.data[:] = rng.random((16, 16, 16)).astype(np.float32)
        h = hessian_at_scale(vol, (8, 7, 9), sigma_mm=0.9)
        assert np.array_equal(h, h.T)

    def test_under_resolved_scale(self):
        vol = make_volume((8, 8, 8), spacing=(1.0, 1.0, 1.0))
        with pytest.raises(ComputeError, match="under-resolved"):
            hessian_at_scale(vol, (4, 4, 4), sigma_mm=0.4)

    def test_matches_full_volume_filtering(self):
        rng = np.random.default_rng(8)
        vol = make_volume((14, 12, 10), spacing=(0.7, 0.9, 1.3))
        vol.data[:] = rng.random((10, 12, 14)).astype(np.float32)
        full = hessian_volumes(vol, sigma_mm=1.1)
        for idx in [(0, 0, 0), (7, 5, 4), (13, 11, 9)]:
            local = hessian_at_scale(vol, idx, sigma_mm=1.1)
            i, j, k = idx
            for (a, b), arr in full.items():
                assert local[a, b] == pytest.approx(arr[k, j, i], rel=1e-9, abs=1e-12)
