import json
import math

import numpy as np
import pytest

from panokit.calib import (
    CornerFrame,
    CornerObservationSet,
    project_cloud,
    save_board_file,
    save_corner_file,
)
from panokit.cli import main
from panokit.dataio import align_streams, load_manifest, save_manifest
from panokit.fusion import MODALITY_ORDER, MipfWeights, VjcWeights, mipf_forward
from panokit.geometry import (
    RigidTransform,
    load_camera,
    rotation_from_axis_angle,
    save_camera,
)
from panokit.jitter import jitter_stats, load_imu_csv
from panokit.occupancy import GridSpec, OccupancyGrid, write_labels
from panokit.synthetic import (
    board_views,
    default_pinhole_camera,
    example_extrinsics,
    make_extrinsic_target,
)
from panokit.tensorio import (
    load_raster,
    load_tensor,
    save_bundle,
    save_cloud_ascii,
    save_pgm,
    save_raster,
    save_tensor,
)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cam = default_pinhole_camera()
    save_camera(root / "camera.json", cam)

    views, _ = board_views(cam, 10, np.random.default_rng(0))
    save_board_file(root / "views.json", views)

    T_true = example_extrinsics()
    obs = make_extrinsic_target(cam, T_true, 5, np.random.default_rng(1))
    save_corner_file(root / "corners.json", obs)

    obs_id = make_extrinsic_target(cam, RigidTransform.identity(), 5,
                                   np.random.default_rng(2))
    save_corner_file(root / "corners_identity.json", obs_id)

    (root / "identity.json").write_text(json.dumps(
        RigidTransform.identity().to_json_dict()))
    return {"root": root, "camera": cam, "T_true": T_true}


def run(args, capsys):
    rc = main([str(a) for a in args])
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def test_calibrate_intrinsics_recovers_camera(workdir, tmp_path, capsys):
    root = workdir["root"]
    rc, out, _ = run(["--output", tmp_path, "calibrate-intrinsics",
                      "--views", root / "views.json", "--model", "pinhole",
                      "--image-size", "640x480"], capsys)
    assert rc == 0
    assert "rms" in out
    doc = json.loads((tmp_path / "intrinsics_result.json").read_text())
    cam = workdir["camera"]
    fx = doc["camera"]["fx"]
    assert abs(fx - cam.intrinsics.fx) / cam.intrinsics.fx < 0.01
    assert doc["rms"] < 1e-6
    assert doc["report"]["termination"] in ("gradient_tolerance",
                                            "step_tolerance")


def test_calibrate_intrinsics_missing_file(tmp_path, capsys):
    rc, _, err = run(["--output", tmp_path, "calibrate-intrinsics",
                      "--views", tmp_path / "nope.json", "--model", "pinhole",
                      "--image-size", "640x480"], capsys)
    assert rc == 1
    assert "error" in err


def test_calibrate_intrinsics_two_views(workdir, tmp_path, capsys):
    cam = workdir["camera"]
    views, _ = board_views(cam, 2, np.random.default_rng(3))
    save_board_file(tmp_path / "two.json", views)
    rc, _, err = run(["--output", tmp_path, "calibrate-intrinsics",
                      "--views", tmp_path / "two.json", "--model", "pinhole",
                      "--image-size", "640x480"], capsys)
    assert rc == 2
    assert "3 views" in err


def test_calibrate_intrinsics_needs_size_or_init(workdir, tmp_path, capsys):
    rc, _, err = run(["--output", tmp_path, "calibrate-intrinsics",
                      "--views", workdir["root"] / "views.json",
                      "--model", "pinhole"], capsys)
    assert rc == 1
    assert "--image-size" in err


def test_calibrate_extrinsics_recovers_transform(workdir, tmp_path, capsys):
    root = workdir["root"]
    rc, _, _ = run(["--output", tmp_path, "calibrate-extrinsics",
                    "--corners", root / "corners.json",
                    "--camera", root / "camera.json"], capsys)
    assert rc == 0
    doc = json.loads((tmp_path / "extrinsics_result.json").read_text())
    T = RigidTransform.from_json_dict(doc["extrinsics"])
    T_true = workdir["T_true"]
    cos = (np.trace(T.rotation.T @ T_true.rotation) - 1.0) / 2.0
    angle = math.degrees(math.acos(min(1.0, max(-1.0, cos))))
    assert angle < 0.01
    assert np.linalg.norm(T.translation - T_true.translation) < 1e-3
    assert len(doc["frames"]) == 5
    assert all("rms" in row for row in doc["frames"])


def test_calibrate_extrinsics_identity_fixture(workdir, tmp_path, capsys):
    root = workdir["root"]
    rc, _, _ = run(["--output", tmp_path, "calibrate-extrinsics",
                    "--corners", root / "corners_identity.json",
                    "--camera", root / "camera.json"], capsys)
    assert rc == 0
    doc = json.loads((tmp_path / "extrinsics_result.json").read_text())
    assert doc["rms"] < 1e-10


def test_calibrate_extrinsics_too_few_correspondences(workdir, tmp_path,
                                                      capsys):
    frame = CornerFrame(
        frame_id="f0",
        image_corners=np.array([[10.0, 10.0], [100.0, 10.0],
                                [100.0, 100.0], [10.0, 100.0]]),
        lidar_corners=np.array([[0.0, 0.0, 3.0], [1.0, 0.0, 3.0],
                                [1.0, 1.0, 3.0], [0.0, 1.0, 3.0]]))
    save_corner_file(tmp_path / "one.json",
                     CornerObservationSet(frames=(frame,)))
    rc, _, err = run(["--output", tmp_path, "calibrate-extrinsics",
                      "--corners", tmp_path / "one.json",
                      "--camera", workdir["root"] / "camera.json"], capsys)
    assert rc == 2
    assert "8" in err


def test_project_axis_point(workdir, tmp_path, capsys):
    root = workdir["root"]
    save_cloud_ascii(tmp_path / "axis.xyz",
                     np.array([[0.0, 0.0, 5.0], [0.0, 0.0, -5.0]]))
    rc, out, _ = run(["--output", tmp_path, "project",
                      "--cloud", tmp_path / "axis.xyz",
                      "--camera", root / "camera.json",
                      "--extrinsics", root / "identity.json"], capsys)
    assert rc == 0
    doc = json.loads((tmp_path / "overlay.json").read_text())
    assert doc["projected"] == 1 and doc["dropped"] == 1
    cam = workdir["camera"]
    np.testing.assert_allclose(doc["pixels"][0],
                               [cam.intrinsics.cx, cam.intrinsics.cy],
                               atol=1e-6)
    assert "projected 1 of 2" in out


def test_project_matches_library(workdir, tmp_path, capsys):
    root = workdir["root"]
    rng = np.random.default_rng(4)
    pts = rng.normal(scale=2.0, size=(300, 3)) + [0.0, 0.0, 4.0]
    save_cloud_ascii(tmp_path / "cloud.xyz", pts)
    rc, _, _ = run(["--output", tmp_path, "project",
                    "--cloud", tmp_path / "cloud.xyz",
                    "--camera", root / "camera.json",
                    "--extrinsics", root / "identity.json"], capsys)
    assert rc == 0
    doc = json.loads((tmp_path / "overlay.json").read_text())
    loaded, _ = __import__("panokit.tensorio", fromlist=["load_cloud"]) \
        .load_cloud(tmp_path / "cloud.xyz")
    pixels, depths, indices = project_cloud(
        loaded, RigidTransform.identity(), workdir["camera"])
    np.testing.assert_allclose(doc["pixels"], pixels, atol=1e-8)
    np.testing.assert_allclose(doc["depths"], depths, atol=1e-8)
    assert doc["indices"] == indices.tolist()


def test_polarization_uniform_images(tmp_path, capsys):
    img = np.full((6, 8), 700.0)
    for name in ("i0", "i45", "i90", "i135"):
        save_pgm(tmp_path / f"{name}.pgm", img.astype(np.uint16))
    rc, _, _ = run(["--output", tmp_path / "out", "polarization",
                    "--i0", tmp_path / "i0.pgm", "--i45", tmp_path / "i45.pgm",
                    "--i90", tmp_path / "i90.pgm",
                    "--i135", tmp_path / "i135.pgm"], capsys)
    assert rc == 0
    dolp = load_raster(tmp_path / "out" / "dolp.f32")
    assert np.all(dolp == 0.0)
    summary = json.loads((tmp_path / "out" /
                          "polarization_summary.json").read_text())
    assert summary["clamp_violations"] == 0
    assert summary["valid_pixels"] == 48


def test_polarization_worked_examples(tmp_path, capsys):
    shape = (4, 4)
    cases = {
        "i0": np.full(shape, 1.0), "i45": np.full(shape, 0.5),
        "i90": np.full(shape, 0.0), "i135": np.full(shape, 0.5),
    }
    for name, img in cases.items():
        save_raster(tmp_path / f"{name}.f32", img)
    rc, _, _ = run(["--output", tmp_path / "out", "polarization",
                    "--i0", tmp_path / "i0.f32", "--i45", tmp_path / "i45.f32",
                    "--i90", tmp_path / "i90.f32",
                    "--i135", tmp_path / "i135.f32"], capsys)
    assert rc == 0
    dolp = load_raster(tmp_path / "out" / "dolp.f32")
    aolp = load_raster(tmp_path / "out" / "aolp.f32")
    np.testing.assert_allclose(dolp, 1.0, atol=1e-6)
    np.testing.assert_allclose(aolp, 0.0, atol=1e-6)


def test_polarization_mismatched_sizes(tmp_path, capsys):
    save_raster(tmp_path / "a.f32", np.zeros((4, 4)))
    save_raster(tmp_path / "b.f32", np.zeros((4, 5)))
    rc, _, err = run(["--output", tmp_path / "out", "polarization",
                      "--i0", tmp_path / "a.f32", "--i45", tmp_path / "a.f32",
                      "--i90", tmp_path / "b.f32",
                      "--i135", tmp_path / "a.f32"], capsys)
    assert rc == 1


def test_voxelize_output(tmp_path, capsys):
    rng = np.random.default_rng(5)
    pts = rng.uniform(-3.0, 3.0, size=(400, 3))
    save_cloud_ascii(tmp_path / "c.xyz", pts)
    rc, _, _ = run(["--output", tmp_path / "out", "voxelize",
                    "--cloud", tmp_path / "c.xyz"], capsys)
    assert rc == 0
    doc = json.loads((tmp_path / "out" / "voxels.json").read_text())
    assert doc["cap"] == 10
    assert doc["feature_width"] == 3
    assert all(v["count"] >= 1 for v in doc["voxels"])
    indices = [tuple(v["index"]) for v in doc["voxels"]]
    assert indices == sorted(indices)


def test_eval_miou_identical_files(tmp_path, capsys):
    spec = GridSpec(x_range=(0.0, 3.2), y_range=(0.0, 3.2),
                    z_range=(0.0, 1.6), voxel_size=0.4)
    labels = np.random.default_rng(6).integers(0, 5, size=(8, 8, 4))
    grid = OccupancyGrid(spec=spec, labels=labels.astype(np.uint8),
                         num_classes=12)
    write_labels(tmp_path / "gt.occ", grid)
    write_labels(tmp_path / "pred.occ", grid)
    rc, out, _ = run(["--output", tmp_path / "out", "eval-miou",
                      "--pred", tmp_path / "pred.occ",
                      "--gt", tmp_path / "gt.occ"], capsys)
    assert rc == 0
    assert "mIoU: 1.000000" in out
    doc = json.loads((tmp_path / "out" / "miou.json").read_text())
    assert doc["miou"] == 1.0


def test_jitter_matches_module(tmp_path, capsys):
    t = np.arange(200) / 100.0
    az = 9.81 + 0.25 * np.sin(2 * np.pi * 5.0 * t)
    lines = ["timestamp,ax,ay,az"] + [f"{ti},0,0,{a}" for ti, a in zip(t, az)]
    (tmp_path / "imu.csv").write_text("\n".join(lines) + "\n")
    rc, _, _ = run(["--output", tmp_path / "out", "jitter",
                    "--imu", tmp_path / "imu.csv"], capsys)
    assert rc == 0
    doc = json.loads((tmp_path / "out" / "jitter_stats.json").read_text())
    stats = jitter_stats(load_imu_csv(tmp_path / "imu.csv"))
    assert abs(doc["rms"] - stats.rms) < 1e-12
    assert doc["dominant_frequency"] == stats.dominant_frequency
    assert doc["samples"] == 200


def test_fusion_vjc_zero_weights_bit_identical(tmp_path, capsys):
    rng = np.random.default_rng(7)
    F = rng.normal(size=(3, 8, 8)).astype(np.float32)
    save_tensor(tmp_path / "feat.f32", F)
    w = VjcWeights(conv1_w=np.zeros((2, 3, 3)), conv1_b=np.zeros(2),
                   conv2_w=np.zeros((2, 2, 3)), conv2_b=np.zeros(2),
                   linear_w=np.zeros(2), linear_b=0.0)
    save_bundle(tmp_path / "w.pkwb",
                {k: np.asarray(v, dtype=np.float32)
                 for k, v in w.to_bundle().items()})
    rc, out, _ = run(["--output", tmp_path / "out", "fusion", "vjc",
                      "--features", tmp_path / "feat.f32",
                      "--weights", tmp_path / "w.pkwb"], capsys)
    assert rc == 0
    assert (tmp_path / "out" / "fused.f32").read_bytes() == \
        (tmp_path / "feat.f32").read_bytes()
    offset = json.loads((tmp_path / "out" / "vjc_offset.json").read_text())
    assert offset["raw_offset"] == 0.0


def test_fusion_mipf_matches_module(tmp_path, capsys):
    rng = np.random.default_rng(8)
    D, heads = 8, 2
    channels = {"lidar": 4, "pal": 3, "thermal": 1, "polar": 2}
    proj = {m: (rng.normal(size=(D, c)), rng.normal(size=D))
            for m, c in channels.items()}
    mlp = {m: (rng.normal(size=(5, D)), rng.normal(size=5),
               rng.normal(size=(D, 5)), rng.normal(size=D))
           for m in MODALITY_ORDER}
    w = MipfWeights(proj=proj, prompt_mlp=mlp,
                    key_w=rng.normal(size=(D, D)),
                    value_w=rng.normal(size=(D, D)),
                    gate_w=rng.normal(size=(D, D)),
                    gate_b=rng.normal(size=D), heads=heads)
    save_bundle(tmp_path / "w.pkwb",
                {k: np.asarray(v, dtype=np.float32)
                 for k, v in w.to_bundle().items()})
    maps = {}
    for name, c in channels.items():
        maps[name] = rng.normal(size=(c, 6, 6)).astype(np.float32)
        save_tensor(tmp_path / f"{name}.f32", maps[name])
    rc, _, _ = run(["--output", tmp_path / "out", "fusion", "mipf",
                    "--lidar", tmp_path / "lidar.f32",
                    "--pal", tmp_path / "pal.f32",
                    "--thermal", tmp_path / "thermal.f32",
                    "--polar", tmp_path / "polar.f32",
                    "--weights", tmp_path / "w.pkwb", "--heads", "2"], capsys)
    assert rc == 0
    fused = load_tensor(tmp_path / "out" / "fused.f32")
    w32 = MipfWeights.from_bundle(
        {k: np.asarray(v, dtype=np.float32)
         for k, v in w.to_bundle().items()}, heads=heads)
    expect = mipf_forward(maps["lidar"], maps["pal"], maps["thermal"],
                          maps["polar"], w32)
    np.testing.assert_array_equal(fused, expect.astype(np.float32))


def test_align_matches_module(tmp_path, capsys):
    doc = {
        "sequence_id": "seq001", "scene": "urban", "lighting": "day",
        "split": "train",
        "streams": {
            "lidar": [{"t": f"{1000.0 + 0.1 * i:.9f}",
                       "path": f"clouds/{i:06d}.bin"} for i in range(8)],
            "pal": [{"t": f"{1000.01 + 0.1 * i:.9f}",
                     "path": f"images/pal/{i:06d}.png"} for i in range(8)],
        },
    }
    (tmp_path / "manifest.json").write_text(json.dumps(doc))
    rc, _, _ = run(["--output", tmp_path / "out", "align",
                    "--manifest", tmp_path / "manifest.json",
                    "--stride", "5"], capsys)
    assert rc == 0
    got = json.loads((tmp_path / "out" / "alignment.json").read_text())
    manifest = load_manifest(tmp_path / "manifest.json")
    frames = align_streams(list(manifest.streams.values()))
    assert len(got["frames"]) == 2  # 8 aligned frames, stride 5 -> 0 and 5
    assert got["frames"][0]["t"] == "1000.000000000"
    assert got["frames"][1]["t"] == "1000.500000000"
    assert abs(got["frames"][0]["matches"]["pal"]["offset"] - 0.01) < 1e-9
    assert len(frames) == 8


def test_double_run_byte_identical(workdir, tmp_path, capsys):
    root = workdir["root"]
    for sub in ("a", "b"):
        rc, _, _ = run(["--deterministic", "--seed", "0",
                        "--output", tmp_path / sub, "calibrate-extrinsics",
                        "--corners", root / "corners.json",
                        "--camera", root / "camera.json"], capsys)
        assert rc == 0
    assert (tmp_path / "a" / "extrinsics_result.json").read_bytes() == \
        (tmp_path / "b" / "extrinsics_result.json").read_bytes()


def test_config_file_sets_output(workdir, tmp_path, capsys):
    root = workdir["root"]
    out = tmp_path / "from_config"
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"output": str(out)}))
    rc, _, _ = run(["--config", cfg, "calibrate-extrinsics",
                    "--corners", root / "corners.json",
                    "--camera", root / "camera.json"], capsys)
    assert rc == 0
    assert (out / "extrinsics_result.json").exists()


def test_config_unknown_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"vibes": "good"}))
    rc, _, err = run(["--config", cfg, "align",
                      "--manifest", tmp_path / "x.json"], capsys)
    assert rc == 1
    assert "vibes" in err


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit):
        main(["--bogus-flag", "align", "--manifest", "x.json"])
