import numpy as np
import pytest

from rowloc.cloudio import (
    CloudFormatError,
    load_cloud_binary,
    load_cloud_csv,
    save_cloud_binary,
    save_cloud_csv,
)
from rowloc.geometry import PointCloud


def test_csv_round_trip(tmp_path):
    pts = np.array([[1.25, -0.5, 3.0], [0.1, 0.2, 0.3]])
    path = tmp_path / "cloud.csv"
    save_cloud_csv(PointCloud(pts), path)
    back = load_cloud_csv(path, frame="T")
    assert back.frame == "T"
    np.testing.assert_array_equal(back.points, pts)


def test_csv_ignores_comments_and_blank_lines(tmp_path):
    path = tmp_path / "cloud.csv"
    path.write_text("# header\n\n1,2,3\n# mid\n4,5,6\n")
    np.testing.assert_array_equal(load_cloud_csv(path).points, [[1, 2, 3], [4, 5, 6]])


def test_csv_rejects_wrong_field_count(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n")
    with pytest.raises(CloudFormatError):
        load_cloud_csv(path)


def test_binary_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    # float32-representable values survive the f64 -> f32 -> f64 round trip exactly
    pts = rng.normal(size=(257, 3)).astype(np.float32).astype(np.float64)
    path = tmp_path / "cloud.pc3d"
    save_cloud_binary(PointCloud(pts), path)
    back = load_cloud_binary(path)
    np.testing.assert_array_equal(back.points, pts)
    # writing the loaded cloud again reproduces the file byte for byte
    path2 = tmp_path / "cloud2.pc3d"
    save_cloud_binary(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_binary_empty_cloud(tmp_path):
    path = tmp_path / "empty.pc3d"
    save_cloud_binary(PointCloud(np.zeros((0, 3))), path)
    assert len(load_cloud_binary(path)) == 0


def test_binary_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.pc3d"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CloudFormatError):
        load_cloud_binary(path)


def test_binary_rejects_truncated_payload(tmp_path):
    path = tmp_path / "trunc.pc3d"
    save_cloud_binary(PointCloud(np.zeros((4, 3))), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(CloudFormatError):
        load_cloud_binary(path)
