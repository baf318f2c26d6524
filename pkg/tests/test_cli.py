import json
import os

import numpy as np
import pytest

from dynslam.__main__ import run
from dynslam.mapping import read_ply
from dynslam.utils.file_utils import (read_mask, read_trajectory, write_depth, write_keypoints_csv,
                                      write_mask, write_rgb)


@pytest.fixture(scope="session")
def ablation(sequence_dir, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("ablation"))
    assert run(["pipeline", sequence_dir, "-o", out, "--ablation"]) == 0
    with open(os.path.join(out, "ablation.json"), encoding="utf-8") as f:
        return out, json.load(f)


def test_masking_improves_the_trajectory(ablation):
    _, summary = ablation
    masked, unmasked = summary["masked"], summary["unmasked"]
    assert masked["metrics"]["ate_rmse"] <= 0.5 * unmasked["metrics"]["ate_rmse"]
    assert summary["improvement_percent"]["ate_rmse"] > 0


def test_masking_keeps_the_moving_box_out_of_the_map(ablation):
    out, summary = ablation
    assert summary["masked"]["dynamic_fraction"] < 0.005
    assert summary["unmasked"]["dynamic_fraction"] > 0.05
    cloud = read_ply(os.path.join(out, "masked", "map.ply"))
    assert len(cloud) == summary["masked"]["map_points"]


def test_pipeline_writes_every_artifact(ablation, scene):
    out, _ = ablation
    for run_dir in ("masked", "unmasked"):
        for name in ("trajectory.txt", "map.ply", "report.json"):
            assert os.path.isfile(os.path.join(out, run_dir, name))
    assert len(read_trajectory(os.path.join(out, "masked", "trajectory.txt"))) == scene.frames
    with open(os.path.join(out, "run_config.json"), encoding="utf-8") as f:
        assert json.load(f)["command"] == "pipeline"


def test_pipeline_is_deterministic(sequence_dir, tmp_path):
    outputs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert run(["pipeline", sequence_dir, "-o", out, "--seed", "42", "--write-masks"]) == 0
        outputs.append(out)
    masks = sorted(os.listdir(os.path.join(outputs[0], "masks")))
    assert masks
    for rel in ["trajectory.txt", "map.ply"] + [os.path.join("masks", m) for m in masks]:
        with open(os.path.join(outputs[0], rel), "rb") as a, \
                open(os.path.join(outputs[1], rel), "rb") as b:
            assert a.read() == b.read(), rel


def test_track_then_map_then_eval(sequence_dir, tmp_path):
    trajectory = str(tmp_path / "trajectory.txt")
    assert run(["track", sequence_dir, "-o", trajectory, "--mask-mode", "depth"]) == 0
    ply = str(tmp_path / "map.ply")
    assert run(["map", sequence_dir, trajectory, "-o", ply, "--ascii", "--voxel", "0"]) == 0
    assert len(read_ply(ply)) > 0
    report = str(tmp_path / "report.json")
    ate_csv = str(tmp_path / "ate.csv")
    gt = os.path.join(sequence_dir, "groundtruth.txt")
    assert run(["eval", trajectory, gt, "--json", report, "--ate-csv", ate_csv,
                "--baseline", gt]) == 0
    with open(report, encoding="utf-8") as f:
        metrics = json.load(f)
    assert metrics["pairs_used"] > 0
    assert metrics["baseline"]["ate_rmse"] == pytest.approx(0.0, abs=1e-6)
    assert np.loadtxt(ate_csv, delimiter=",", skiprows=1).shape[1] == 2


def test_eval_of_identical_trajectories(sequence_dir, tmp_path, capsys):
    gt = os.path.join(sequence_dir, "groundtruth.txt")
    report = str(tmp_path / "report.json")
    assert run(["eval", gt, gt, "--json", report]) == 0
    assert "ATE RMSE (m)" in capsys.readouterr().out
    with open(report, encoding="utf-8") as f:
        metrics = json.load(f)
    assert metrics["ate_rmse"] == pytest.approx(0.0, abs=1e-6)
    assert metrics["rpe_trans_rmse"] == pytest.approx(0.0, abs=1e-6)


def test_mask_of_a_constant_depth_image(tmp_path):
    depth_png = str(tmp_path / "depth.png")
    write_depth(depth_png, np.full((48, 64), 2.0), 5000.0)
    out = str(tmp_path / "masks")
    assert run(["mask", depth_png, "-o", out]) == 0
    for stage in ("m_depth", "m_broad", "m_c"):
        assert read_mask(os.path.join(out, stage, "mask.png")).sum() == 0


def test_mask_merges_the_external_mask(tmp_path):
    depth_png = str(tmp_path / "depth.png")
    write_depth(depth_png, np.full((48, 64), 2.0), 5000.0)
    ext_dir = tmp_path / "ext"
    ext = np.zeros((48, 64), dtype=np.uint8)
    ext[:10, :10] = 1
    write_mask(str(ext_dir / "depth.png"), ext)
    out = str(tmp_path / "masks")
    assert run(["mask", depth_png, "-o", out, "--ext-mask-dir", str(ext_dir)]) == 0
    merged = read_mask(os.path.join(out, "m_c", "mask.png"))
    assert merged[:10, :10].all()
    assert merged.sum() == 100
    assert read_mask(os.path.join(out, "m_depth", "mask.png")).sum() == 0


def test_mask_of_a_sequence(sequence_dir, tmp_path, scene):
    out = str(tmp_path / "masks")
    assert run(["mask", sequence_dir, "-o", out]) == 0
    assert len(os.listdir(os.path.join(out, "m_c"))) == scene.frames


def test_hist(sequence_dir, tmp_path):
    out = str(tmp_path / "hist.csv")
    assert run(["hist", sequence_dir, "-o", out, "--bins", "20", "--max-frames", "3"]) == 0
    with open(out, encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert lines[0].startswith("# frames: 3")
    assert lines[1] == "low,high,count"
    assert len(lines) == 22


def test_resample(tmp_path):
    rng = np.random.default_rng(0)
    kps = np.column_stack([rng.uniform(0, 100, 40), rng.uniform(0, 100, 40), np.full(40, 7.0),
                           rng.uniform(0, 360, 40), rng.random(40), np.zeros(40)])
    src = str(tmp_path / "kps.csv")
    write_keypoints_csv(src, kps)
    image = str(tmp_path / "frame.png")
    write_rgb(image, np.zeros((100, 100, 3), dtype=np.uint8))
    out = str(tmp_path / "kept.csv")
    assert run(["resample", src, "-o", out, "--image", image, "--epochs", "10"]) == 0
    assert os.path.isfile(str(tmp_path / "kept_overlay.png"))
    assert 0 < len(np.loadtxt(out, delimiter=",", skiprows=1, ndmin=2)) <= 40


def test_synth(tmp_path):
    out = str(tmp_path / "scene")
    assert run(["synth", out, "--frames", "3", "--static"]) == 0
    assert len(read_trajectory(os.path.join(out, "groundtruth.txt"))) == 3


def test_usage_errors_exit_with_one():
    assert run([]) == 1
    assert run(["teleport"]) == 1
    assert run(["eval", "only-one-file"]) == 1


def test_data_and_config_errors_exit_with_two(tmp_path, sequence_dir):
    assert run(["track", str(tmp_path / "missing"), "-o", str(tmp_path / "t.txt")]) == 2
    assert run(["track", sequence_dir, "-o", str(tmp_path / "t.txt"),
                "--tau-a", "1e-3", "--tau-b", "1e-4"]) == 2
    assert run(["eval", str(tmp_path / "none.txt"), str(tmp_path / "none.txt")]) == 2
