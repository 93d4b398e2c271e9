import numpy as np
import pytest

from corrdepth.errors import (BehindCameraError, InvalidDepthError,
                              InvalidPoseError)
from corrdepth.geometry import (CameraRig, Intrinsics, Pixel, Pose,
                                RelativePose, pixel_grid, project,
                                relative_pose, reproject, reproject_grid,
                                unproject)
from corrdepth.seeding import normal, uniform


def random_pose(seed):
    axis = normal(seed, (3,))
    axis /= np.linalg.norm(axis)
    angle = float(uniform(seed + 1, (1,), -0.5, 0.5)[0])
    k = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    r = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
    t = normal(seed + 2, (3,))
    return Pose(r, t)


K = Intrinsics(50.0, 55.0, 31.5, 23.5)


class TestIntrinsics:
    def test_matrix_layout(self):
        m = K.matrix()
        assert m.shape == (3, 3)
        assert m[0, 0] == 50.0 and m[1, 1] == 55.0
        assert m[0, 2] == 31.5 and m[1, 2] == 23.5
        assert m[2, 2] == 1.0 and m[0, 1] == 0.0

    def test_scaled_half_pixel_convention(self):
        k2 = K.scaled(2.0)
        assert k2.fx == 100.0 and k2.fy == 110.0
        # pixel centers: c' = s*(c + 0.5) - 0.5
        assert k2.cx == 2.0 * (31.5 + 0.5) - 0.5
        assert k2.cy == 2.0 * (23.5 + 0.5) - 0.5

    def test_rejects_nonpositive_focal(self):
        with pytest.raises(InvalidPoseError):
            Intrinsics(0.0, 55.0, 31.5, 23.5)
        with pytest.raises(InvalidPoseError):
            Intrinsics(50.0, -1.0, 31.5, 23.5)


class TestPose:
    def test_rejects_non_rotation(self):
        bad = np.eye(3)
        bad[0, 0] = 1.1
        with pytest.raises(InvalidPoseError):
            Pose(bad, np.zeros(3))

    def test_rejects_reflection(self):
        refl = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(InvalidPoseError):
            Pose(refl, np.zeros(3))

    def test_rejects_bad_shapes(self):
        with pytest.raises(InvalidPoseError):
            Pose(np.eye(4), np.zeros(3))
        with pytest.raises(InvalidPoseError):
            Pose(np.eye(3), np.zeros(4))

    def test_arrays_read_only(self):
        p = random_pose(10)
        with pytest.raises(ValueError):
            p.rotation[0, 0] = 2.0
        with pytest.raises(ValueError):
            p.translation[0] = 2.0

    def test_center_round_trip(self):
        p = random_pose(20)
        # x_cam = R @ c + t must vanish at the camera center
        assert np.allclose(p.rotation @ p.center() + p.translation, 0.0,
                           atol=1e-12)


class TestRelativePose:
    def test_two_path_point_transform(self):
        # same world point through (ref -> world -> src) and the relative map
        ref, src = random_pose(30), random_pose(40)
        rel = relative_pose(ref, src)
        worst = 0.0
        for i in range(10):
            x_world = normal(50 + i, (3,))
            x_ref = ref.rotation @ x_world + ref.translation
            x_src = src.rotation @ x_world + src.translation
            via_rel = rel.rotation @ x_ref + rel.translation
            worst = max(worst, float(np.abs(via_rel - x_src).max()))
        assert worst < 1e-9

    def test_identity_pair(self):
        p = random_pose(60)
        rel = relative_pose(p, p)
        assert np.allclose(rel.rotation, np.eye(3), atol=1e-12)
        assert np.allclose(rel.translation, 0.0, atol=1e-12)


class TestProjection:
    def test_unproject_project_round_trip(self):
        worst = 0.0
        for i in range(100):
            x, y = uniform(100 + i, (2,), 0.0, 60.0)
            d = float(uniform(300 + i, (1,), 0.5, 15.0)[0])
            p = Pixel(float(x), float(y))
            q = project(unproject(p, d, K), K)
            worst = max(worst, abs(q.x - p.x), abs(q.y - p.y))
        assert worst < 1e-9

    def test_unproject_depth_scales_ray(self):
        pt = unproject(Pixel(31.5, 23.5), 3.0, K)
        assert np.allclose(pt, [0.0, 0.0, 3.0], atol=1e-12)

    def test_unproject_rejects_nonpositive_depth(self):
        with pytest.raises(InvalidDepthError):
            unproject(Pixel(1.0, 1.0), 0.0, K)

    def test_project_rejects_point_behind_camera(self):
        with pytest.raises(BehindCameraError):
            project(np.array([0.0, 0.0, -1.0]), K)

    def test_reproject_identity_pose_fixes_pixel(self):
        p = Pixel(10.25, 7.5)
        q, z = reproject(p, 2.0, K, RelativePose.identity())
        assert abs(q.x - p.x) < 1e-12 and abs(q.y - p.y) < 1e-12
        assert abs(z - 2.0) < 1e-12


class TestReprojectGrid:
    def test_matches_scalar_reproject(self):
        rel = relative_pose(random_pose(70), random_pose(80))
        depth = uniform(90, (6, 8), 1.0, 5.0)
        coords, z = reproject_grid(depth, K, rel)
        for y in range(6):
            for x in range(8):
                q, zz = reproject(Pixel(float(x), float(y)),
                                  float(depth[y, x]), K, rel)
                assert abs(coords[y, x, 0] - q.x) < 1e-9
                assert abs(coords[y, x, 1] - q.y) < 1e-9
                assert abs(z[y, x] - zz) < 1e-9

    def test_pixel_grid_layout(self):
        px, py = pixel_grid(2, 3)
        assert px.shape == (2, 3) and py.shape == (2, 3)
        assert px[0, 2] == 2.0 and py[1, 0] == 1.0


class TestCameraRig:
    def test_relative_poses_cached_per_source(self):
        ref = random_pose(200)
        srcs = [random_pose(210), random_pose(220)]
        rig = CameraRig(K, ref, srcs)
        assert rig.num_sources == 2
        for rel, src in zip(rig.rel_poses, srcs):
            expect = relative_pose(ref, src)
            assert np.allclose(rel.rotation, expect.rotation, atol=1e-15)
            assert np.allclose(rel.translation, expect.translation, atol=1e-15)
