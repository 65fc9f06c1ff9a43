import numpy as np
import pytest

from vesselmark.errors import NoConvergenceError, OutOfBoundsError
from vesselmark.evaluation import LandmarkPair
from vesselmark.phantom import (
    PhantomPair,
    SyntheticTransform,
    invert_point,
    invert_points,
    load_phantom_pair,
    make_observer_patch_pair,
    make_phantom_pair,
    map_point_forward,
    map_points_forward,
    random_transform,
    save_phantom_pair,
)
from vesselmark.volume import (
    ScalarVolume,
    VolumeGeometry,
    sample_trilinear,
)

from synthetic import smooth_test_image

PIVOT = np.array([10.0, -5.0, 30.0])


class TestRandomTransform:
    def test_deterministic(self):
        a = random_transform(42, PIVOT)
        b = random_transform(42, PIVOT)
        assert np.array_equal(a.axis, b.axis)
        assert a.angle_deg == b.angle_deg
        assert a.scale == b.scale
        assert np.array_equal(a.amplitudes_mm, b.amplitudes_mm)
        assert np.array_equal(a.phases_rad, b.phases_rad)

    def test_parameter_ranges(self):
        rng = np.random.default_rng(0)
        angles, scales, amps, waves = [], [], [], []
        for seed in rng.integers(0, 2**31, size=10_000):
            t = random_transform(int(seed), PIVOT)
            angles.append(t.angle_deg)
            scales.append(t.scale)
            amps.append(t.amplitudes_mm)
            waves.append(t.wavelengths_mm)
        angles = np.array(angles)
        scales = np.array(scales)
        amps = np.concatenate(amps)
        waves = np.concatenate(waves)
        assert angles.min() >= 0.0 and angles.max() <= 50.0
        assert scales.min() >= 0.9 and scales.max() <= 1.1
        assert amps.min() >= 2.0 and amps.max() <= 5.0
        assert waves.min() >= 40.0 and waves.max() <= 80.0
        # the draws actually span the ranges
        assert angles.max() > 45.0 and angles.min() < 5.0
        assert scales.max() > 1.08 and scales.min() < 0.92

    def test_axis_uniform_on_sphere(self):
        axes = np.array([random_transform(s, PIVOT).axis for s in range(10_000)])
        lengths = np.linalg.norm(axes, axis=1)
        assert np.allclose(lengths, 1.0, atol=1e-9)
        assert np.linalg.norm(axes.mean(axis=0)) < 0.05


class TestForwardMap:
    def test_identity(self):
        t = SyntheticTransform.identity(PIVOT)
        p = np.array([3.0, 4.0, 5.0])
        assert np.allclose(map_point_forward(t, p), p, atol=1e-12)

    def test_rotation_30_about_z(self):
        t = SyntheticTransform(
            axis=(0, 0, 1), angle_deg=30.0, scale=1.0,
            amplitudes_mm=(0, 0, 0), wavelengths_mm=(50, 50, 50),
            phases_rad=(0, 0, 0), pivot=(0.0, 0.0, 0.0),
        )
        got = map_point_forward(t, (1.0, 0.0, 0.0))
        # oracle: hand-computed rotation matrix row
        assert np.allclose(got, [np.cos(np.pi / 6), np.sin(np.pi / 6), 0.0], atol=1e-12)
        assert got[0] == pytest.approx(0.8660254, abs=1e-6)
        assert got[1] == pytest.approx(0.5, abs=1e-9)

    def test_pivot_fixed_without_sinusoid(self):
        for seed in range(5):
            t = random_transform(seed, PIVOT)
            t_rigid = SyntheticTransform(
                t.axis, t.angle_deg, t.scale, (0, 0, 0), t.wavelengths_mm,
                t.phases_rad, PIVOT, seed,
            )
            assert np.allclose(map_point_forward(t_rigid, PIVOT), PIVOT, atol=1e-12)

    def test_rotation_preserves_pivot_distances(self):
        rng = np.random.default_rng(1)
        t = random_transform(17, PIVOT)
        rigid = SyntheticTransform(
            t.axis, t.angle_deg, 1.0, (0, 0, 0), t.wavelengths_mm,
            t.phases_rad, PIVOT, 17,
        )
        pts = PIVOT + rng.uniform(-40, 40, size=(200, 3))
        mapped = map_points_forward(rigid, pts)
        d0 = np.linalg.norm(pts - PIVOT, axis=1)
        d1 = np.linalg.norm(mapped - PIVOT, axis=1)
        assert np.max(np.abs(d0 - d1)) < 1e-9

    def test_axis_invariants_enforced(self):
        with pytest.raises(ValueError):
            SyntheticTransform((0, 0, 2.0), 10.0, 1.0, (0, 0, 0),
                               (50, 50, 50), (0, 0, 0), PIVOT)
        with pytest.raises(ValueError):
            SyntheticTransform((0, 0, 1.0), 80.0, 1.0, (0, 0, 0),
                               (50, 50, 50), (0, 0, 0), PIVOT)
        with pytest.raises(ValueError):
            SyntheticTransform((0, 0, 1.0), 10.0, 1.5, (0, 0, 0),
                               (50, 50, 50), (0, 0, 0), PIVOT)


class TestInverse:
    def test_zero_sinusoid_exact(self):
        t = random_transform(3, PIVOT)
        rigid = SyntheticTransform(
            t.axis, t.angle_deg, t.scale, (0, 0, 0), t.wavelengths_mm,
            t.phases_rad, PIVOT, 3,
        )
        rng = np.random.default_rng(2)
        pts = PIVOT + rng.uniform(-50, 50, size=(100, 3))
        back = invert_points(rigid, map_points_forward(rigid, pts))
        assert np.max(np.abs(back - pts)) < 1e-9

    def test_round_trip_under_0p01mm(self):
        rng = np.random.default_rng(3)
        for seed in range(20):
            t = random_transform(seed, PIVOT)
            pts = PIVOT + rng.uniform(-100, 100, size=(1000, 3))
            q = map_points_forward(t, pts)
            again = map_points_forward(t, invert_points(t, q))
            err = np.linalg.norm(again - q, axis=1)
            assert err.max() < 0.01

    def test_folding_field_raises(self):
        fold = SyntheticTransform(
            axis=(0, 0, 1.0), angle_deg=0.0, scale=1.0,
            amplitudes_mm=(30.0, 30.0, 30.0), wavelengths_mm=(40.0, 40.0, 40.0),
            phases_rad=(0.0, 0.0, 0.0), pivot=(0.0, 0.0, 0.0),
        )
        # oracle: the displacement Jacobian determinant changes sign, so
        # the forward map folds (det(I+J) = 1 + g1*g2*g3 for the cyclic
        # drive structure)
        gain = 2 * np.pi * 30.0 / 40.0
        rng = np.random.default_rng(4)
        pts = rng.uniform(0, 80, size=(500, 3))
        c = np.cos(2 * np.pi * pts[:, [1, 2, 0]] / 40.0)
        dets = 1.0 + gain**3 * c[:, 0] * c[:, 1] * c[:, 2]
        assert dets.min() < 0
        raised = 0
        for q in pts[:25]:
            try:
                invert_point(fold, q)
            except NoConvergenceError:
                raised += 1
        assert raised > 0


class TestPhantomPair:
    def test_identity_transform_reproduces_patch(self):
        image = smooth_test_image(n=40, spacing=1.0)
        landmark = image.geometry.world_of(np.array([20.0, 20.0, 20.0]))
        t = SyntheticTransform.identity(landmark)
        pair = make_phantom_pair(image, landmark, seed=0, transform=t,
                                 side_mm=25.0, spacing_mm=1.0)
        rms = np.sqrt(np.mean((pair.patch2.values - pair.patch1.values) ** 2))
        assert rms < 1e-4

    def test_gt_points_match_through_map(self):
        image = smooth_test_image(n=48, spacing=1.0)
        landmark = image.geometry.world_of(np.array([24.0, 24.0, 24.0]))
        # oracle first: the trilinear error of this image bounds the check
        rng = np.random.default_rng(5)
        probe_vox = rng.uniform(10, 38, size=(300, 3))
        exact = []
        for v in probe_vox:
            exact.append(sample_trilinear(image, image.geometry.world_of(v)))
        diffs = []
        for v, e in zip(probe_vox, exact):
            node = np.round(v)
            if np.max(np.abs(v - node)) < 1e-6:
                continue
            diffs.append(abs(e - image.values[tuple(node.astype(int))]))
        tri_err = max(diffs)

        for seed in (11, 12, 13):
            pair = make_phantom_pair(image, landmark, seed=seed,
                                     side_mm=30.0, spacing_mm=1.0)
            assert np.allclose(
                pair.gt_landmark2,
                np.asarray(map_point_forward(pair.transform, pair.gt_landmark1)),
                atol=1e-12,
            )
            v1 = sample_trilinear(pair.patch1, pair.gt_landmark1)
            v2 = sample_trilinear(pair.patch2, pair.gt_landmark2)
            assert abs(v1 - v2) <= 2 * tri_err

    def test_full_size_patch_dims(self):
        g = VolumeGeometry((85, 85, 85), (2.5, 2.5, 2.5), (0.0, 0.0, 0.0))
        image = ScalarVolume.filled(g, 0.0)
        from vesselmark.volume import extract_subvolume, resample_isotropic
        landmark = g.world_of(np.array([42.0, 42.0, 42.0]))
        patch = resample_isotropic(extract_subvolume(image, landmark, 200.0), 0.7)
        assert all(283 <= d <= 287 for d in patch.geometry.dims)

    def test_deterministic_given_seed(self):
        image = smooth_test_image(n=32, spacing=1.0)
        landmark = image.geometry.world_of(np.array([16.0, 16.0, 16.0]))
        a = make_phantom_pair(image, landmark, seed=77, side_mm=20.0, spacing_mm=1.0)
        b = make_phantom_pair(image, landmark, seed=77, side_mm=20.0, spacing_mm=1.0)
        assert np.array_equal(a.patch2.values, b.patch2.values)
        assert np.array_equal(a.gt_landmark2, b.gt_landmark2)

    def test_save_load_round_trip(self, tmp_path):
        image = smooth_test_image(n=32, spacing=1.0)
        landmark = image.geometry.world_of(np.array([16.0, 16.0, 16.0]))
        pair = make_phantom_pair(image, landmark, seed=5, side_mm=20.0, spacing_mm=1.0)
        save_phantom_pair(pair, tmp_path / "pair_000")
        back = load_phantom_pair(tmp_path / "pair_000")
        assert np.allclose(back.gt_landmark2, pair.gt_landmark2, atol=1e-12)
        assert back.transform.seed == pair.transform.seed
        assert np.allclose(back.patch1.values, pair.patch1.values, atol=1e-2)
        # the manifest alone re-verifies the ground-truth mapping
        assert np.allclose(
            map_point_forward(back.transform, back.gt_landmark1),
            back.gt_landmark2, atol=1e-9,
        )


class TestObserverPatches:
    def _images(self):
        # larger than the 100 mm patch so shifts actually move the window
        img1 = smooth_test_image(n=130, spacing=1.0, seed=6)
        img2 = smooth_test_image(n=130, spacing=1.0, seed=7)
        pair = LandmarkPair(
            1,
            img1.geometry.world_of(np.array([65.0, 65.0, 65.0])),
            img2.geometry.world_of(np.array([64.0, 66.0, 65.0])),
        )
        return img1, img2, pair

    def test_shift_range(self):
        img1, img2, pair = self._images()
        shifts = []
        for seed in range(1000):
            _, _, shift = make_observer_patch_pair(img1, img2, pair, seed)
            shifts.append(shift)
        shifts = np.array(shifts)
        assert shifts.min() >= -3 and shifts.max() <= 3
        assert shifts.max() == 3 and shifts.min() == -3

    def test_zero_shift_centers_on_landmark2(self):
        img1, img2, pair = self._images()
        zero_seed = next(
            s for s in range(5000)
            if tuple(np.random.default_rng(s).integers(-3, 4, size=3)) == (0, 0, 0)
        )
        p1, p2, shift = make_observer_patch_pair(img1, img2, pair, zero_seed)
        assert shift == (0, 0, 0)
        lo = np.asarray(p2.geometry.origin)
        hi = p2.geometry.world_of(np.array(p2.geometry.dims) - 1.0)
        mid = (lo + hi) / 2
        assert np.all(np.abs(mid - pair.p2) <= np.asarray(img2.geometry.spacing))

    def test_reverse_shift_recenters(self):
        img1, img2, pair = self._images()
        seed = next(
            s for s in range(1000)
            if np.all(np.random.default_rng(s).integers(-3, 4, size=3) != 0)
        )
        p1, p2, shift = make_observer_patch_pair(img1, img2, pair, seed)
        # oracle: world-coordinate arithmetic - the shifted patch origin is
        # the unshifted one displaced by exactly the recorded shift
        from vesselmark.volume import extract_subvolume
        base = extract_subvolume(img2, np.asarray(pair.p2), 100.0)
        expect = np.asarray(base.geometry.origin) + np.array(shift) * np.asarray(
            img2.geometry.spacing
        )
        assert np.allclose(np.asarray(p2.geometry.origin), expect, atol=1e-9)

    def test_out_of_bounds_landmark(self):
        img1, img2, pair = self._images()
        bad = LandmarkPair(2, (1e5, 0, 0), pair.p2)
        with pytest.raises(OutOfBoundsError):
            make_observer_patch_pair(img1, img2, bad, 0)
