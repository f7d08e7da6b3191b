import numpy as np
import pytest

from tivreg.errors import CloudIOError, ParseError, UnsupportedFormat
from tivreg.io import detect_format, downsample, load_cloud, save_cloud


def test_xyz_round_trip_is_exact(tmp_path, rng):
    pts = rng.normal(size=(25, 3))
    save_cloud(tmp_path / "a.xyz", pts)
    assert np.array_equal(load_cloud(tmp_path / "a.xyz"), pts)


def test_ply_round_trip_is_exact(tmp_path, rng):
    pts = rng.normal(size=(25, 3))
    save_cloud(tmp_path / "a.ply", pts)
    assert np.array_equal(load_cloud(tmp_path / "a.ply"), pts)


def test_xyz_comments_and_extra_columns(tmp_path):
    p = tmp_path / "c.xyz"
    p.write_text("# header\n1 2 3 0.5\n\n4,5,6  # tail\n")
    np.testing.assert_array_equal(load_cloud(p), [[1, 2, 3], [4, 5, 6]])


def test_ply_with_faces_and_extra_properties(tmp_path):
    p = tmp_path / "m.ply"
    p.write_text(
        "ply\nformat ascii 1.0\ncomment test\nelement vertex 3\n"
        "property float nx\nproperty float x\nproperty float y\nproperty float z\n"
        "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
        "9 0 0 0\n9 1 0 0\n9 0 1 0\n3 0 1 2\n"
    )
    np.testing.assert_array_equal(load_cloud(p), [[0, 0, 0], [1, 0, 0], [0, 1, 0]])


@pytest.mark.parametrize("body, line", [
    ("1 2 3\n1 2\n", 2),
    ("1 2 3\n1 x 3\n", 2),
    ("1 2 nan\n", 1),
])
def test_xyz_parse_errors(tmp_path, body, line):
    p = tmp_path / "bad.xyz"
    p.write_text(body)
    with pytest.raises(ParseError) as exc:
        load_cloud(p)
    assert exc.value.line == line
    assert f"bad.xyz:{line}:" in str(exc.value)


def test_ply_errors(tmp_path):
    p = tmp_path / "t.ply"
    p.write_text("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\n"
                 "property float y\nproperty float z\nend_header\n0 0 0\n")
    with pytest.raises(ParseError):
        load_cloud(p)
    p.write_text("ply\nformat binary_little_endian 1.0\nend_header\n")
    with pytest.raises(UnsupportedFormat):
        load_cloud(p)
    p.write_bytes(b"ply\nformat binary_little_endian 1.0\nend_header\n\xff\xfe")
    with pytest.raises(UnsupportedFormat):
        load_cloud(p)


def test_missing_file(tmp_path):
    with pytest.raises(CloudIOError):
        load_cloud(tmp_path / "nope.xyz")


def test_detect_format():
    assert detect_format("a.PLY") == "ply"
    assert detect_format("a.txt") == "xyz"
    assert detect_format("a.bin", b"ply\n") == "ply"
    with pytest.raises(UnsupportedFormat):
        detect_format("a.obj")


def test_downsample(rng):
    pts = rng.normal(size=(100, 3))
    d = downsample(pts, 10, seed=1)
    assert d.shape == (10, 3)
    assert np.array_equal(d, downsample(pts, 10, seed=1))
    assert np.array_equal(downsample(pts, 200), pts)
    with pytest.raises(ValueError):
        downsample(pts, 0)
