import numpy as np
import pytest

from tcrbench.pointcloud import Pose, aggregate_map, transform_cloud, yaw_quat
from tcrbench.synthgen import (BuildingSpec, LidarSpec, SceneSpec, brute_tcr, build_map,
                               expected_map_size, gen_sequence, random_city, simulate_scan,
                               surface_residual, trajectory_from_waypoints)
from tcrbench.tcr import EmptyDomain, TcrParams, tcr_pair

ONE_BOX = SceneSpec((BuildingSpec((20, 0), 6, 8, 12, (1, 1)),), ground_extent=60, density=0.5)


def test_lidar_defaults():
    l = LidarSpec()
    assert (l.channels, l.vertical_fov, l.max_range, l.rate) == (32, 22.5, 120.0, 20.0)
    el = np.degrees(l.elevations())
    assert len(el) == 32 and el[0] == pytest.approx(-22.5) and el[-1] == pytest.approx(22.5)
    assert len(l.azimuths()) == 1029


def test_building_validation():
    with pytest.raises(ValueError):
        BuildingSpec((0, 0), 0, 1, 1)
    with pytest.raises(ValueError):
        BuildingSpec((0, 0), 1, 1, 1, (3, 2))


def test_empty_scene_is_ground_only():
    sc = SceneSpec((), ground_extent=10, density=1.0)
    m = build_map(sc, 1)
    assert len(m) == 400
    assert np.all(m.points[:, 2] == 0)
    assert np.all(np.abs(m.points[:, :2]) <= 10)


def test_building_adds_points_at_its_stage():
    sc = SceneSpec((BuildingSpec((0, 0), 5, 5, 10, (2, 2)),), ground_extent=20, density=1.0, n_stages=2)
    assert len(build_map(sc, 1)) < len(build_map(sc, 2))


def test_map_size_closed_form():
    sc = random_city(3, n_buildings=10, n_stages=3, density=0.37)
    for st in sc.stages:
        area = (2 * sc.ground_extent) ** 2
        walls = sum(2 * b.height * (b.width + b.depth) + b.width * b.depth for b in sc.buildings_at(st))
        n = len(build_map(sc, st))
        assert n == expected_map_size(sc, st)
        # rounding is at most half a point per face
        assert abs(n - (area + walls) * sc.density) <= 0.5 * (1 + 5 * len(sc.buildings_at(st)))


def test_map_points_lie_on_surfaces():
    sc = random_city(5, n_stages=2)
    for st in sc.stages:
        assert surface_residual(sc, st, build_map(sc, st).points).max() < 1e-9


def test_map_deterministic_and_stage_stable():
    sc = random_city(6, n_stages=3)
    assert build_map(sc, 2).equals(build_map(sc, 2))
    m1, m3 = build_map(sc, 1), build_map(sc, 3)
    # nested stages: every stage-1 point reappears unchanged at stage 3
    s3 = {tuple(p) for p in m3.points}
    assert all(tuple(p) in s3 for p in m1.points)


def test_invalid_stage():
    with pytest.raises(ValueError):
        build_map(ONE_BOX, 2)


def test_ground_ranges_closed_form():
    sc = SceneSpec((), ground_extent=1000)
    h = 1.8
    lidar = LidarSpec(horizontal_resolution=5.0)
    scan = simulate_scan(sc, 1, Pose(0, (0, 0, h)), lidar)
    el = lidar.elevations()
    down = el[el < 0]
    expected_rows = [h / np.sin(-e) for e in down if h / np.sin(-e) <= lidar.max_range]
    r = np.linalg.norm(scan.points, axis=1)
    assert len(scan) == len(expected_rows) * len(lidar.azimuths())
    got = np.unique(np.round(r, 6))
    np.testing.assert_allclose(np.sort(got), np.sort(np.round(expected_rows, 6)), atol=1e-6)
    np.testing.assert_allclose(scan.points[:, 2], -h, atol=1e-12)


def test_box_returns_lie_on_faces():
    pose = Pose(0, (0, 0, 1.8), yaw_quat(0.3))
    scan = simulate_scan(ONE_BOX, 1, pose)
    world = transform_cloud(scan, pose).points
    lo, hi = ONE_BOX.buildings[0].bounds
    on_box = np.all((world >= lo - 1e-6) & (world <= hi + 1e-6), axis=1)
    assert on_box.sum() > 100
    face_res = np.min(np.abs(np.concatenate([world[on_box] - lo, world[on_box] - hi], axis=1)), axis=1)
    assert face_res.max() < 1e-9
    assert surface_residual(ONE_BOX, 1, world).max() < 1e-9


def test_box_occludes_ground_behind_it():
    pose = Pose(0, (0, 0, 1.8))
    world = transform_cloud(simulate_scan(ONE_BOX, 1, pose), pose).points
    behind = (world[:, 0] > 23.5) & (np.abs(world[:, 1]) < 1.0) & (world[:, 2] < 1e-9)
    assert not behind.any()


def test_tiny_range_gives_empty_scan():
    assert len(simulate_scan(ONE_BOX, 1, Pose(0, (0, 0, 1.8)), LidarSpec(max_range=0.001))) == 0


def test_returns_within_max_range():
    scan = simulate_scan(ONE_BOX, 1, Pose(0, (0, 0, 1.8)), LidarSpec(max_range=30))
    assert np.linalg.norm(scan.points, axis=1).max() <= 30


def test_gen_sequence_single_pose():
    traj = trajectory_from_waypoints([[0, 0], [0.5, 0]], step=1.0)
    scans, poses = gen_sequence(ONE_BOX, 1, traj, LidarSpec(horizontal_resolution=2))
    assert len(scans) == 1 and poses == list(traj.poses)


def test_gen_sequence_deterministic():
    sc = random_city(2, n_stages=2)
    traj = trajectory_from_waypoints([[-30, 0], [30, 0]], step=10.0)
    lidar = LidarSpec(horizontal_resolution=2)
    a, _ = gen_sequence(sc, 2, traj, lidar)
    b, _ = gen_sequence(sc, 2, traj, lidar)
    assert all(x.equals(y) for x, y in zip(a, b))


def test_aggregated_scans_lie_on_map_surfaces():
    sc = random_city(8, n_stages=2, road_halfwidth=6)
    traj = trajectory_from_waypoints([[-40, 0], [40, 0]], step=8.0)
    scans, poses = gen_sequence(sc, 2, traj, LidarSpec(horizontal_resolution=1.0))
    (m,) = aggregate_map(scans, poses)
    assert len(m) > 10000
    assert surface_residual(sc, 2, m.points).max() < 1e-6


def test_trajectory_from_waypoints():
    t = trajectory_from_waypoints([[0, 0], [10, 0], [10, 10]], step=2.5, height=2.0, speed=5.0)
    pos = t.positions
    assert len(t) == 9
    np.testing.assert_allclose(pos[4], [10, 0, 2])
    np.testing.assert_allclose(pos[-1], [10, 10, 2])
    assert [p.t for p in t.poses][:2] == [0.0, 0.5]
    off = trajectory_from_waypoints([[0, 0], [10, 0]], step=5, lateral_offset=3.5)
    np.testing.assert_allclose(off.positions[:, 1], 3.5)


def test_brute_identity_and_disjoint():
    sc = random_city(1, n_buildings=6, n_stages=1, ground_extent=40, density=0.1)
    m = build_map(sc, 1)
    assert brute_tcr(m, m).tcr_sym == 0
    far = transform_cloud(m, Pose(0, (1000, 0, 0)))
    with pytest.raises(EmptyDomain):
        brute_tcr(m, far)
    with pytest.raises(EmptyDomain):
        tcr_pair(m, far)


def test_brute_refuses_large_inputs():
    sc = random_city(1, ground_extent=200, density=0.5, n_stages=1)
    with pytest.raises(ValueError):
        brute_tcr(build_map(sc, 1), build_map(sc, 1), TcrParams(voxel_resolution=1.0))


def test_stage_monotonicity_on_nested_scenes():
    for seed in range(20):
        sc = random_city(100 + seed, n_buildings=12, n_stages=4, ground_extent=60, density=0.1)
        maps = {s: build_map(sc, s) for s in sc.stages}
        tcr = {(i, j): tcr_pair(maps[i], maps[j]).tcr_sym for i in sc.stages for j in sc.stages if i < j}
        for a in sc.stages:
            for lo, hi in ((1, 2), (2, 3)):
                for side in (1, -1):
                    b1, b2 = a + side * lo, a + side * hi
                    if b2 not in sc.stages:
                        continue
                    key = lambda x, y: (min(x, y), max(x, y))
                    assert tcr[key(a, b1)] <= tcr[key(a, b2)], (seed, a, b1, b2)
