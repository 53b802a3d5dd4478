import numpy as np
import pytest

from vesseltrace.errors import DataError
from vesseltrace.phantom import StraightCurve, TubeSpec, generate
from vesseltrace.vesselness import (
    PRESETS,
    EigenTriple,
    FrangiParams,
    eig3_symmetric,
    enhance_volume,
    frangi_vesselness,
    normalize_vesselness,
)
from vesseltrace.volume import NORMALIZED_UNIT, Volume


def random_symmetric(rng, scale=1.0):
    a = rng.normal(size=(3, 3)) * scale
    return (a + a.T) / 2.0


def charpoly_eigenvalues(m):
    """Oracle: eigenvalues via the characteristic polynomial's roots."""
    a, b, c = m[0]
    _, d, e = m[1]
    f = m[2, 2]
    # det(M - x I) expanded for a symmetric matrix [[a,b,c],[b,d,e],[c,e,f]]
    coeffs = [
        -1.0,
        a + d + f,
        -(a * d + a * f + d * f - b * b - c * c - e * e),
        a * d * f + 2 * b * c * e - a * e * e - d * c * c - f * b * b,
    ]
    roots = np.roots(coeffs)
    return np.sort(roots.real)


class TestEig3:
    def test_diagonal(self):
        eig = eig3_symmetric(np.diag([1.0, -5.0, 2.0]))
        assert np.allclose(eig.lambdas, [1.0, 2.0, -5.0])
        # eigenvectors are signed axes with non-negative leading component
        assert np.allclose(np.abs(eig.vectors), np.eye(3)[:, [0, 2, 1]])
        assert np.all(eig.vectors.max(axis=0) >= 0)

    def test_zero_matrix(self):
        eig = eig3_symmetric(np.zeros((3, 3)))
        assert np.allclose(eig.lambdas, 0.0)
        assert np.allclose(eig.vectors @ eig.vectors.T, np.eye(3), atol=1e-12)

    def test_reconstruction_and_charpoly(self):
        rng = np.random.default_rng(42)
        for _ in range(500):
            m = random_symmetric(rng, scale=rng.uniform(0.1, 10))
            eig = eig3_symmetric(m)
            recon = sum(
                eig.lambdas[i] * np.outer(eig.vectors[:, i], eig.vectors[:, i])
                for i in range(3)
            )
            norm = max(np.linalg.norm(m), 1e-30)
            assert np.linalg.norm(recon - m) < 1e-6 * norm
            assert np.all(np.diff(np.abs(eig.lambdas)) >= -1e-12)
            assert np.allclose(
                np.sort(eig.lambdas), charpoly_eigenvalues(m), rtol=1e-6, atol=1e-8
            )

    def test_orthonormal(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            eig = eig3_symmetric(random_symmetric(rng))
            assert np.allclose(eig.vectors.T @ eig.vectors, np.eye(3), atol=1e-6)

    def test_eigenpair_residual(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            m = random_symmetric(rng)
            eig = eig3_symmetric(m)
            for i in range(3):
                r = m @ eig.vectors[:, i] - eig.lambdas[i] * eig.vectors[:, i]
                assert np.linalg.norm(r) < 1e-6 * max(1.0, np.linalg.norm(m))

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            eig3_symmetric(np.array([[1, 2, 0], [0, 1, 0], [0, 0, 1.0]]))

    def test_deterministic_sign(self):
        m = np.diag([3.0, -1.0, 2.0])
        a = eig3_symmetric(m)
        b = eig3_symmetric(m)
        assert np.array_equal(a.vectors, b.vectors)


def triple(l1, l2, l3):
    return EigenTriple(np.array([l1, l2, l3], float), np.eye(3))


class TestFrangi:
    def test_sign_branch(self):
        p = FrangiParams(0.5, 10, 500)
        assert frangi_vesselness(triple(0.1, 5.0, -3.0), p) == 0.0

    def test_derived_value(self):
        p = FrangiParams(alpha=0.5, beta=10.0, c=500.0)
        v = frangi_vesselness(triple(0.0, -100.0, -100.0), p)
        assert v == pytest.approx(0.03390398848949004, rel=1e-9)

    def test_no_structure(self):
        p = FrangiParams(0.5, 10, 500)
        assert frangi_vesselness(triple(0.0, 0.0, 0.0), p) == 0.0

    def test_range(self):
        rng = np.random.default_rng(3)
        p = FrangiParams(0.5, 0.5, 1.0)
        for _ in range(2000):
            lam = np.sort(rng.normal(scale=5.0, size=3))
            order = np.argsort(np.abs(lam), kind="stable")
            lam = lam[order]
            v = frangi_vesselness(triple(*lam), p)
            assert 0.0 <= v < 1.0
            if lam[1] > 0 or lam[2] > 0:
                assert v == 0.0

    def test_rotational_invariance(self):
        from scipy.spatial.transform import Rotation

        rng = np.random.default_rng(17)
        p = FrangiParams(0.5, 0.5, 1.0)
        for _ in range(200):
            lam = -np.sort(np.abs(rng.normal(scale=3.0, size=3)))
            lam_sorted = lam[np.argsort(np.abs(lam), kind="stable")]
            base = frangi_vesselness(triple(*lam_sorted), p)
            r = Rotation.random(random_state=rng).as_matrix()
            m = r @ np.diag(lam) @ r.T
            m = (m + m.T) / 2.0
            v = frangi_vesselness(eig3_symmetric(m), p)
            assert v == pytest.approx(base, abs=1e-6)

    def test_monotone_in_structure(self):
        p = FrangiParams(0.5, 10.0, 1.0)
        prev = -1.0
        for k in np.linspace(0.1, 10, 50):
            v = frangi_vesselness(triple(0.0, -k, -k), p)
            assert v >= prev - 1e-12
            prev = v

    def test_dark_on_bright_polarity(self):
        p = FrangiParams(0.5, 10.0, 1.0, polarity="dark-on-bright")
        # positive lambdas are a dark tube: accepted under this polarity
        assert frangi_vesselness(triple(0.0, 2.0, 2.0), p) > 0.0
        assert frangi_vesselness(triple(0.0, -2.0, -2.0), p) == 0.0


def tube_volume(radius=1.0, dims=(40, 40, 40), spacing=(0.5, 0.5, 0.5)):
    lo = np.array([0.0, 0.0, 0.0])
    hi = lo + (np.array(dims) - 1) * np.array(spacing)
    center = (lo + hi) / 2
    curve = StraightCurve(
        (center[0], center[1], lo[2] + radius), (center[0], center[1], hi[2] - radius)
    )
    spec = TubeSpec(curve=curve, radius_mm=radius, peak_intensity=0.9, background=0.0)
    return generate(spec, dims, spacing)


class TestEnhance:
    def test_tube_axis_dominates(self):
        vol, sampler = tube_volume()
        vness = enhance_volume(vol, FrangiParams(0.5, 10, 500, sigma_mm=1.0))
        mid = sampler.point_at(sampler.length_mm / 2)
        axis_idx = np.round(vol.mm_to_index(mid)).astype(int)
        off_idx = axis_idx + np.array([6, 0, 0])  # 3 mm off-axis
        on = vness.data[axis_idx[2], axis_idx[1], axis_idx[0]]
        off = vness.data[off_idx[2], off_idx[1], off_idx[0]]
        assert on >= 10.0 * max(off, 1e-12)

    def test_constant_volume_zero(self):
        vol = Volume(
            (12, 12, 12), (1, 1, 1), (0, 0, 0),
            np.full((12, 12, 12), 0.4, np.float32), NORMALIZED_UNIT,
        )
        vness = enhance_volume(vol, FrangiParams())
        assert np.allclose(vness.data, 0.0)

    def test_plate_below_tube(self):
        dims, spacing = (40, 40, 40), (0.5, 0.5, 0.5)
        tube_vol, sampler = tube_volume(dims=dims, spacing=spacing)
        # bright slab of the same contrast and comparable thickness
        zz = np.arange(dims[2]) * spacing[2]
        plate = np.zeros((dims[2], dims[1], dims[0]), np.float32)
        sigma = 0.5
        prof = 0.9 * np.exp(-((zz - zz.mean()) ** 2) / (2 * sigma**2))
        plate += prof[:, None, None].astype(np.float32)
        plate_vol = Volume(dims, spacing, (0, 0, 0), plate, NORMALIZED_UNIT)

        p = FrangiParams(0.5, 10, 500, sigma_mm=1.0)
        v_tube = enhance_volume(tube_vol, p)
        v_plate = enhance_volume(plate_vol, p)
        mid = sampler.point_at(sampler.length_mm / 2)
        ai = np.round(tube_vol.mm_to_index(mid)).astype(int)
        on_tube = v_tube.data[ai[2], ai[1], ai[0]]
        k_mid = dims[2] // 2
        on_plate = v_plate.data[k_mid, dims[1] // 2, dims[0] // 2]
        assert on_plate < on_tube

    def test_requires_normalized(self):
        vol = Volume(
            (4, 4, 4), (1, 1, 1), (0, 0, 0), np.zeros((4, 4, 4), np.float32)
        )
        with pytest.raises(DataError):
            enhance_volume(vol, FrangiParams())

    def test_matches_scalar_composition(self):
        from vesseltrace.volume import hessian_at_scale

        vol, _ = tube_volume(dims=(16, 16, 16))
        p = FrangiParams(0.5, 10, 500, sigma_mm=1.0)
        vness = enhance_volume(vol, p)
        for idx in [(8, 8, 8), (3, 9, 12), (12, 4, 2)]:
            h = hessian_at_scale(vol, idx, p.sigma_mm)
            expect = frangi_vesselness(eig3_symmetric(h), p)
            got = float(vness.data[idx[2], idx[1], idx[0]])
            assert got == pytest.approx(expect, rel=1e-5, abs=1e-9)


class TestNormalizeVesselness:
    def _vness(self, values):
        arr = np.array(values, np.float32).reshape(2, 2, 2)
        return Volume((2, 2, 2), (1, 1, 1), (0, 0, 0), arr, "vesselness")

    def test_affine_map(self):
        vol = self._vness([0, 0.2, 0.4, 0.4, 0.2, 0, 0.4, 0.2])
        out = normalize_vesselness(vol)
        assert out.value_kind == NORMALIZED_UNIT
        assert set(np.unique(out.data)) == {0.0, 0.5, 1.0}

    def test_constant_all_zero(self):
        vol = self._vness([0.3] * 8)
        out = normalize_vesselness(vol)
        assert np.all(out.data == 0.0)

    def test_full_range(self):
        rng = np.random.default_rng(5)
        arr = rng.random((6, 6, 6)).astype(np.float32)
        vol = Volume((6, 6, 6), (1, 1, 1), (0, 0, 0), arr, "vesselness")
        out = normalize_vesselness(vol)
        assert out.data.min() == 0.0
        assert out.data.max() == 1.0


class TestMultiscale:
    def test_max_over_scales(self):
        from vesseltrace.vesselness import enhance_multiscale

        vol, _ = tube_volume(dims=(20, 20, 20))
        p = FrangiParams(0.5, 10, 500)
        single_a = enhance_volume(vol, FrangiParams(0.5, 10, 500, sigma_mm=0.8))
        single_b = enhance_volume(vol, FrangiParams(0.5, 10, 500, sigma_mm=1.4))
        multi = enhance_multiscale(vol, p, [0.8, 1.4])
        assert np.array_equal(multi.data,
                              np.maximum(single_a.data, single_b.data))

    def test_needs_scales(self):
        from vesseltrace.vesselness import enhance_multiscale

        vol, _ = tube_volume(dims=(16, 16, 16))
        with pytest.raises(DataError):
            enhance_multiscale(vol, FrangiParams(), [])


def test_presets_match_reported_configurations():
    assert PRESETS["subcutaneous"].alpha == 0.5
    assert PRESETS["subcutaneous"].beta == 10.0
    assert PRESETS["subcutaneous"].c == 500.0
    assert PRESETS["intramuscular"].alpha == 0.5
    assert PRESETS["intramuscular"].beta == 0.5
    assert PRESETS["intramuscular"].c == 100.0
