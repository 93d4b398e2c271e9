"""Command-line front end: stage commands, exit codes, determinism."""

import numpy as np
import pytest

from corrdepth import fileio
from corrdepth.cli import main
from corrdepth.geometry import CameraRig, Intrinsics, Pose
from corrdepth.grids import DepthMap, FlowField
from corrdepth.metrics import compute_metrics

SCENE = ["--views", "2", "--height", "16", "--width", "24",
         "--dim", "48", "--seed", "3"]


def _parse_report(text):
    out = {}
    for line in text.strip().splitlines():
        key, val = line.split("=", 1)
        out[key] = float(val)
    return out


def _synth(ws):
    assert main(["synth", "--out", str(ws)] + SCENE) == 0


def _chain_to_init(ws):
    _synth(ws)
    assert main(["corr", "--features", str(ws), "--out", str(ws)]) == 0
    assert main(["flow", "--features", str(ws), "--out", str(ws)]) == 0
    assert main(["init", "--cameras", str(ws / "cameras.txt"),
                 "--flows", str(ws), "--out", str(ws / "init.pfm")]) == 0


class TestStages:
    def test_synth_writes_workspace(self, tmp_path):
        _synth(tmp_path)
        for name in ("cameras.txt", "ref.cort", "src0.cort", "src1.cort",
                     "gt_lo.pfm", "gt_full.pfm"):
            assert (tmp_path / name).exists()
        rig = fileio.read_camera_file(tmp_path / "cameras.txt")
        assert rig.num_sources == 2
        assert fileio.load_depth(tmp_path / "gt_lo.pfm").shape == (16, 24)
        assert fileio.load_depth(tmp_path / "gt_full.pfm").shape == (128, 192)

    def test_corr_flow_init_chain(self, tmp_path):
        _chain_to_init(tmp_path)
        vol = fileio.read_tensor(tmp_path / "corr0.cort")
        assert vol.shape == (16, 24, 16, 24)
        flow = fileio.load_flow(tmp_path / "flow1.corw")
        assert flow.shape == (16, 24)
        init = fileio.load_depth(tmp_path / "init.pfm")
        gt = fileio.load_depth(tmp_path / "gt_lo.pfm")
        assert init.num_valid() > 0
        assert compute_metrics(init, gt).abs_rel < 0.1

    def test_refine_oracle_improves_init(self, tmp_path):
        _chain_to_init(tmp_path)
        rc = main(["refine", "--cameras", str(tmp_path / "cameras.txt"),
                   "--features", str(tmp_path),
                   "--init", str(tmp_path / "init.pfm"),
                   "--out", str(tmp_path / "refined.pfm"),
                   "--updater", "oracle", "--iters", "6"])
        assert rc == 0
        gt = fileio.load_depth(tmp_path / "gt_lo.pfm")
        before = compute_metrics(fileio.load_depth(tmp_path / "init.pfm"), gt)
        after = compute_metrics(fileio.load_depth(tmp_path / "refined.pfm"), gt)
        assert after.abs_rel <= before.abs_rel

    def test_refine_gru_runs_with_seeded_weights(self, tmp_path):
        _chain_to_init(tmp_path)
        rc = main(["refine", "--cameras", str(tmp_path / "cameras.txt"),
                   "--features", str(tmp_path),
                   "--init", str(tmp_path / "init.pfm"),
                   "--out", str(tmp_path / "refined.pfm"),
                   "--updater", "gru", "--iters", "2", "--seed", "1"])
        assert rc == 0
        refined = fileio.load_depth(tmp_path / "refined.pfm")
        assert refined.shape == (16, 24)
        assert refined.num_valid() == 16 * 24

    def test_upsample_multiplies_resolution_by_eight(self, tmp_path):
        _chain_to_init(tmp_path)
        rc = main(["upsample", "--init", str(tmp_path / "init.pfm"),
                   "--out", str(tmp_path / "full.pfm")])
        assert rc == 0
        assert fileio.load_depth(tmp_path / "full.pfm").shape == (128, 192)

    def test_eval_self_is_perfect(self, tmp_path, capsys):
        _synth(tmp_path)
        rc = main(["eval", "--pred", str(tmp_path / "gt_lo.pfm"),
                   "--gt", str(tmp_path / "gt_lo.pfm"),
                   "--report", "structured"])
        assert rc == 0
        rep = _parse_report(capsys.readouterr().out)
        assert rep["abs_rel"] == 0.0
        assert rep["delta_125"] == 100.0

    def test_eval_doubled_prediction(self, tmp_path, capsys):
        _synth(tmp_path)
        gt = fileio.load_depth(tmp_path / "gt_lo.pfm")
        fileio.save_depth(tmp_path / "pred.pfm", DepthMap(2.0 * gt.values))
        rc = main(["eval", "--pred", str(tmp_path / "pred.pfm"),
                   "--gt", str(tmp_path / "gt_lo.pfm"),
                   "--report", "structured"])
        assert rc == 0
        rep = _parse_report(capsys.readouterr().out)
        assert rep["abs_rel"] == 1.0
        assert rep["delta_125"] == 0.0


PIPELINE = ["--surface", "plane", "--views", "2", "--seed", "7",
            "--height", "16", "--width", "24", "--dim", "64",
            "--updater", "oracle", "--iters", "8"]


class TestPipeline:
    def test_end_to_end_accuracy(self, tmp_path, capsys):
        rc = main(["pipeline", "--out", str(tmp_path / "ws"),
                   "--report", "structured"] + PIPELINE)
        assert rc == 0
        rep = _parse_report(capsys.readouterr().out)
        assert rep["abs_rel"] < 0.05
        assert (tmp_path / "ws" / "depth_full.pfm").exists()

    def test_two_runs_byte_identical(self, tmp_path, capsys):
        outputs = []
        for name in ("a", "b"):
            ws = tmp_path / name
            assert main(["pipeline", "--out", str(ws)] + PIPELINE) == 0
            outputs.append({p.name: p.read_bytes()
                            for p in sorted(ws.iterdir())})
        capsys.readouterr()
        assert outputs[0].keys() == outputs[1].keys()
        for name in outputs[0]:
            assert outputs[0][name] == outputs[1][name], name

    def test_pipeline_matches_manual_chaining(self, tmp_path, capsys):
        auto = tmp_path / "auto"
        assert main(["pipeline", "--out", str(auto), "--report",
                     "structured"] + PIPELINE) == 0
        auto_report = capsys.readouterr().out
        ws = tmp_path / "manual"
        assert main(["synth", "--out", str(ws), "--surface", "plane",
                     "--views", "2", "--height", "16", "--width", "24",
                     "--dim", "64", "--seed", "7"]) == 0
        assert main(["corr", "--features", str(ws), "--out", str(ws)]) == 0
        assert main(["flow", "--features", str(ws), "--out", str(ws)]) == 0
        assert main(["init", "--cameras", str(ws / "cameras.txt"),
                     "--flows", str(ws), "--out", str(ws / "init.pfm")]) == 0
        assert main(["refine", "--cameras", str(ws / "cameras.txt"),
                     "--features", str(ws), "--init", str(ws / "init.pfm"),
                     "--out", str(ws / "refined.pfm"),
                     "--updater", "oracle", "--iters", "8"]) == 0
        assert main(["upsample", "--init", str(ws / "refined.pfm"),
                     "--out", str(ws / "depth_full.pfm")]) == 0
        assert main(["eval", "--pred", str(ws / "depth_full.pfm"),
                     "--gt", str(ws / "gt_full.pfm"),
                     "--report", "structured"]) == 0
        manual_report = capsys.readouterr().out
        assert manual_report == auto_report
        for name in ("init.pfm", "refined.pfm", "depth_full.pfm"):
            assert (ws / name).read_bytes() == (auto / name).read_bytes()


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--out", str(tmp_path), "--frobnicate", "1"])
        assert exc.value.code == 2
        capsys.readouterr()

    def test_unknown_subcommand_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["transmogrify"])
        assert exc.value.code == 2
        capsys.readouterr()

    def test_corrupted_tensor_is_format_error(self, tmp_path, capsys):
        _synth(tmp_path)
        assert main(["corr", "--features", str(tmp_path),
                     "--out", str(tmp_path)]) == 0
        (tmp_path / "corr0.cort").write_bytes(b"JUNKJUNKJUNK")
        rc = main(["flow", "--features", str(tmp_path), "--out", str(tmp_path)])
        assert rc == 3
        assert "file error" in capsys.readouterr().err

    def test_missing_file_is_format_error(self, tmp_path, capsys):
        rc = main(["eval", "--pred", str(tmp_path / "nope.pfm"),
                   "--gt", str(tmp_path / "nope.pfm")])
        assert rc == 3
        capsys.readouterr()

    def test_bad_config_value_is_config_error(self, tmp_path, capsys):
        rc = main(["synth", "--out", str(tmp_path), "--views", "0"])
        assert rc == 4
        assert "invalid input" in capsys.readouterr().err

    def test_rotation_only_rig_is_geometry_error(self, tmp_path, capsys):
        k = Intrinsics(48.0, 48.0, 11.5, 7.5)
        angle = 0.02
        rot = np.array([[np.cos(angle), -np.sin(angle), 0.0],
                        [np.sin(angle), np.cos(angle), 0.0],
                        [0.0, 0.0, 1.0]])
        rig = CameraRig(k, Pose.identity(), [Pose(rot, np.zeros(3))])
        fileio.write_camera_file(tmp_path / "cameras.txt", rig)
        fileio.save_flow(tmp_path / "flow0.corw",
                         FlowField(np.zeros((16, 24, 2))))
        rc = main(["init", "--cameras", str(tmp_path / "cameras.txt"),
                   "--flows", str(tmp_path), "--out", str(tmp_path / "d.pfm")])
        assert rc == 5
        assert "degenerate" in capsys.readouterr().err
