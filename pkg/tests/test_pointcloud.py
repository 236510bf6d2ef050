import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tcrbench.pointcloud import (ASCII, BINARY, CloudFormatError, PointCloud, Pose, Trajectory,
                                 aggregate_map, crop_range, load_cloud, load_poses, save_cloud,
                                 save_poses, transform_cloud, yaw_quat)

f32 = st.floats(-1e4, 1e4, allow_nan=False, width=32)


def f32_clouds(with_intensity=st.booleans()):
    return st.integers(0, 50).flatmap(lambda n: st.tuples(
        arrays(np.float32, (n, 3), elements=f32),
        arrays(np.float32, (n,), elements=f32),
        with_intensity,
    )).map(lambda t: PointCloud(t[0].astype(np.float64),
                                t[1].astype(np.float64) if t[2] else None))


def random_pose(rng, t=0.0):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Pose(t, tuple(rng.uniform(-50, 50, 3)), tuple(q))


def test_pointcloud_rejects_nonfinite_and_bad_intensity():
    with pytest.raises(ValueError):
        PointCloud([[0, 0, np.nan]])
    with pytest.raises(ValueError):
        PointCloud([[0, 0, 0]], [1.0, 2.0])


def test_cloud_is_immutable():
    c = PointCloud([[1, 2, 3]])
    with pytest.raises(ValueError):
        c.points[0, 0] = 5


def test_single_binary_record(tmp_path):
    p = tmp_path / "one.bin"
    p.write_bytes(np.array([1, 2, 3, 0.5], dtype="<f4").tobytes())
    c = load_cloud(p, BINARY)
    assert c.points.tolist() == [[1, 2, 3]]
    assert c.intensity.tolist() == [0.5]


def test_empty_ascii(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("")
    assert len(load_cloud(p, ASCII)) == 0


def test_empty_binary_is_zero_bytes(tmp_path):
    p = tmp_path / "e.bin"
    save_cloud(PointCloud.empty(), p)
    assert p.stat().st_size == 0


def test_missing_intensity_written_as_zero(tmp_path):
    p = tmp_path / "one.bin"
    save_cloud(PointCloud([[1, 2, 3]]), p)
    raw = p.read_bytes()
    assert len(raw) == 16
    assert np.frombuffer(raw, "<f4").tolist() == [1, 2, 3, 0]


def test_ascii_comments_and_intensity(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("# header\n1 2 3 4\n\n5 6 7 8  # trailing\n")
    c = load_cloud(p, ASCII)
    assert c.points.tolist() == [[1, 2, 3], [5, 6, 7]]
    assert c.intensity.tolist() == [4, 8]


@pytest.mark.parametrize("text, line", [("1 2 3\n1 2\n", 2), ("1 2 x\n", 1), ("1 2 3\n1 2 3 4\n", 2),
                                        ("1 2 inf\n", 1)])
def test_ascii_errors_report_line(tmp_path, text, line):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(CloudFormatError, match=f":{line}:"):
        load_cloud(p, ASCII)


def test_binary_truncated_reports_offset(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"\0" * 20)
    with pytest.raises(CloudFormatError, match="byte offset 16"):
        load_cloud(p, BINARY)


def test_binary_nonfinite_reports_offset(tmp_path):
    p = tmp_path / "nan.bin"
    p.write_bytes(np.array([0, 0, 0, 0, 1, np.nan, 0, 0], dtype="<f4").tobytes())
    with pytest.raises(CloudFormatError, match="byte offset 16"):
        load_cloud(p, BINARY)


def test_missing_file_is_oserror(tmp_path):
    with pytest.raises(OSError):
        load_cloud(tmp_path / "nope.bin")


@settings(max_examples=60, deadline=None)
@given(f32_clouds())
def test_binary_round_trip_is_exact(tmp_path_factory, cloud):
    p = tmp_path_factory.mktemp("rt") / "c.bin"
    save_cloud(cloud, p, BINARY)
    back = load_cloud(p, BINARY)
    assert np.array_equal(back.points, cloud.points)
    expected_i = cloud.intensity if cloud.intensity is not None else np.zeros(len(cloud))
    assert np.array_equal(back.intensity, expected_i)


@settings(max_examples=60, deadline=None)
@given(f32_clouds())
def test_ascii_round_trip(tmp_path_factory, cloud):
    p = tmp_path_factory.mktemp("rt") / "c.txt"
    save_cloud(cloud, p, ASCII)
    back = load_cloud(p, ASCII)
    np.testing.assert_allclose(back.points, cloud.points, rtol=1e-6)
    if len(cloud):
        assert (back.intensity is None) == (cloud.intensity is None)


def test_random_binary_round_trip_bitwise(tmp_path, rng):
    pts = rng.normal(size=(1000, 3)).astype(np.float32).astype(np.float64)
    c = PointCloud(pts, rng.random(1000).astype(np.float32))
    save_cloud(c, tmp_path / "c.bin")
    assert load_cloud(tmp_path / "c.bin").equals(c)


def test_crop_range_examples():
    c = PointCloud([[0, 0, 0], [150, 0, 0]], [1.0, 2.0])
    out = crop_range(c, 100)
    assert out.points.tolist() == [[0, 0, 0]]
    assert out.intensity.tolist() == [1.0]
    inside = PointCloud([[1, 2, 3], [-4, 5, 6]])
    assert crop_range(inside, 100).equals(inside)


def test_crop_range_matches_brute_count(rng):
    c = PointCloud(rng.uniform(-150, 150, size=(5000, 3)))
    expected = sum(1 for p in c.points if np.sqrt(p @ p) <= 100)
    assert len(crop_range(c, 100)) == expected


def test_crop_box_is_per_axis():
    c = PointCloud([[90, 90, 0], [101, 0, 0]])
    assert len(crop_range(c, 100)) == 0
    assert crop_range(c, 100, box=True).points.tolist() == [[90, 90, 0]]


@settings(max_examples=50, deadline=None)
@given(f32_clouds(), st.floats(1, 2e4))
def test_crop_is_idempotent(cloud, r):
    once = crop_range(cloud, r)
    assert crop_range(once, r).equals(once)


def test_crop_rejects_nonpositive():
    with pytest.raises(ValueError):
        crop_range(PointCloud.empty(), 0)


def test_pose_validation():
    with pytest.raises(ValueError):
        Pose(0, (0, 0, 0), (1, 1, 0, 0))
    with pytest.raises(ValueError):
        Trajectory([Pose(1.0), Pose(1.0)])
    with pytest.raises(ValueError):
        Trajectory([])


def test_transform_identity_and_translation():
    c = PointCloud([[0, 0, 0], [1, 2, 3]], [5, 6])
    assert transform_cloud(c, Pose()).equals(c)
    out = transform_cloud(PointCloud([[0, 0, 0]]), Pose(0, (1, 0, 0)))
    assert out.points.tolist() == [[1, 0, 0]]


def test_transform_quarter_turn():
    out = transform_cloud(PointCloud([[1, 0, 0]]), Pose(0, (0, 0, 0), yaw_quat(np.pi / 2)))
    np.testing.assert_allclose(out.points, [[0, 1, 0]], atol=1e-15)


def test_transform_composition(rng):
    c = PointCloud(rng.uniform(-20, 20, size=(200, 3)))
    a, b = random_pose(rng), random_pose(rng)
    twice = transform_cloud(transform_cloud(c, b), a)
    once = transform_cloud(c, a.compose(b))
    np.testing.assert_allclose(twice.points, once.points, atol=1e-9)


def test_pose_inverse(rng):
    c = PointCloud(rng.uniform(-20, 20, size=(50, 3)))
    p = random_pose(rng)
    back = transform_cloud(transform_cloud(c, p), p.inverse())
    np.testing.assert_allclose(back.points, c.points, atol=1e-9)


def test_transform_is_rigid(rng):
    c = PointCloud(rng.uniform(-100, 100, size=(100, 3)))
    out = transform_cloud(c, random_pose(rng))
    d0 = np.linalg.norm(c.points[:, None] - c.points[None], axis=2)
    d1 = np.linalg.norm(out.points[:, None] - out.points[None], axis=2)
    assert np.abs(d0 - d1).max() < 1e-9


def test_pose_file_round_trip(tmp_path, rng):
    traj = Trajectory([random_pose(rng, t=0.05 * i) for i in range(20)])
    save_poses(traj, tmp_path / "poses.txt")
    back = load_poses(tmp_path / "poses.txt")
    assert back.poses == traj.poses


def test_pose_file_is_tum_order(tmp_path):
    save_poses([Pose(1.5, (1, 2, 3), (0.0, 1.0, 0.0, 0.0))], tmp_path / "p.txt")
    assert (tmp_path / "p.txt").read_text().split() == \
        ["1.5", "1.0", "2.0", "3.0", "1.0", "0.0", "0.0", "0.0"]


def test_pose_file_errors(tmp_path):
    p = tmp_path / "p.txt"
    p.write_text("0 0 0 0 0 0 0 1\n1 0 0\n")
    with pytest.raises(CloudFormatError, match=":2:"):
        load_poses(p)


def test_aggregate_single_scan():
    s = PointCloud([[1, 2, 3]])
    (m,) = aggregate_map([s], [Pose()], window=1)
    assert m.equals(s)


def test_aggregate_two_scans_world_frame():
    scans = [PointCloud([[1, 0, 0]]), PointCloud([[1, 0, 0]])]
    poses = [Pose(0), Pose(1, (10, 0, 0), yaw_quat(np.pi))]
    (m,) = aggregate_map(scans, poses, window=2)
    np.testing.assert_allclose(m.points, [[1, 0, 0], [9, 0, 0]], atol=1e-12)


def test_aggregate_counts_and_windows(rng):
    scans = [PointCloud(rng.normal(size=(rng.integers(1, 30), 3))) for _ in range(10)]
    poses = [random_pose(rng, i) for i in range(10)]
    (m,) = aggregate_map(scans, poses, window=10)
    assert len(m) == sum(len(s) for s in scans)
    subs = aggregate_map(scans, poses, window=3)
    assert [len(s) for s in subs] == [sum(len(s) for s in scans[i:i + 3]) for i in (0, 3, 6, 9)]


def test_aggregate_length_mismatch():
    with pytest.raises(ValueError):
        aggregate_map([PointCloud.empty()], [])
