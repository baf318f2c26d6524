import os

import numpy as np
import pytest

from dynslam.defs.errors import DataError
from dynslam.ingest import associate, decode_depth, load_sequence, read_frame


def write_index(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        f.write("# timestamp filename\n")
        for ts, name in rows:
            f.write(f"{ts} {name}\n")


def test_associate_takes_closest_pairs_first():
    a = np.array([1.00, 1.02, 2.00])
    b = np.array([1.015, 1.99, 5.0])
    assert associate(a, b, 0.02) == [(1, 0), (2, 1)]


def test_associate_uses_each_index_once():
    pairs = associate(np.array([1.0, 1.001]), np.array([1.0005]), 0.02)
    assert pairs == [(0, 0)]


def test_associate_empty():
    assert associate(np.array([]), np.array([1.0])) == []


def test_decode_depth_keeps_invalid_zero():
    depth = decode_depth(np.array([[0, 10000]], dtype=np.uint16), 5000.0)
    assert depth.dtype == np.float32
    assert depth.tolist() == [[0.0, 2.0]]


def test_decode_depth_rejects_bad_scale():
    with pytest.raises(ValueError):
        decode_depth(np.zeros((2, 2), dtype=np.uint16), 0.0)


def test_load_sequence_associates_and_sorts(tmp_path):
    write_index(tmp_path / "rgb.txt", [(2.0, "rgb/2.png"), (1.0, "rgb/1.png"), (9.0, "rgb/9.png")])
    write_index(tmp_path / "depth.txt", [(1.01, "depth/1.png"), (2.005, "depth/2.png")])
    records, gt = load_sequence(str(tmp_path))
    assert gt is None
    assert [r.timestamp for r in records] == [1.0, 2.0]
    assert records[0].depth_path == os.path.join(str(tmp_path), "depth/1.png")
    assert records[1].depth_timestamp == pytest.approx(2.005)


def test_load_sequence_missing_index(tmp_path):
    write_index(tmp_path / "rgb.txt", [(1.0, "rgb/1.png")])
    with pytest.raises(DataError):
        load_sequence(str(tmp_path))


def test_load_sequence_without_pairs(tmp_path):
    write_index(tmp_path / "rgb.txt", [(1.0, "rgb/1.png")])
    write_index(tmp_path / "depth.txt", [(3.0, "depth/3.png")])
    with pytest.raises(DataError):
        load_sequence(str(tmp_path))


def test_load_rendered_sequence(sequence_dir, scene):
    records, gt = load_sequence(sequence_dir)
    assert len(records) == scene.frames
    assert len(gt) == scene.frames
    rgb, depth = read_frame(records[0], scene.depth_scale)
    assert rgb.shape == (scene.height, scene.width, 3)
    assert depth.shape == (scene.height, scene.width)
    assert float(depth.max()) == pytest.approx(scene.wall_depth, abs=0.01)
