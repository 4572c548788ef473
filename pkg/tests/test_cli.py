import json
import subprocess
import sys

import numpy as np
import pytest

from tnjet.cli import run


def invoke(capsys, *argv):
    code = run(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A small synthetic dataset plus trained chain/tree checkpoints."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "jets.jtn1"
    assert run(["synth", "--out", str(data), "--jets", "1500", "--seed", "3"]) == 0
    common = ["--data", str(data), "--epochs", "2", "--batch", "256", "--seed", "1"]
    mps_ckpt = root / "chain.mpsc"
    assert run(["train", "--arch", "mps", "--n", "8", "--bond", "4",
                "--out", str(mps_ckpt), *common]) == 0
    ttn_ckpt = root / "tree.ttnc"
    assert run(["train", "--arch", "ttn", "--n", "8", "--chi", "4",
                "--out", str(ttn_ckpt), *common]) == 0
    return {"root": root, "data": data, "mps": mps_ckpt, "ttn": ttn_ckpt}


class TestParams:
    @pytest.mark.parametrize(
        "args,expected",
        [
            (("--arch", "mps", "--n", "8", "--bond", "10"), "6678"),
            (("--arch", "mps", "--n", "16", "--bond", "10"), "12278"),
            (("--arch", "ttn", "--n", "32", "--chi", "10"), "22340"),
        ],
    )
    def test_reference_counts(self, capsys, args, expected):
        code, out, _ = invoke(capsys, "params", *args)
        assert code == 0
        assert out.strip() == expected

    def test_no_arguments_prints_usage_and_exits_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "tnjet.cli"], capture_output=True, text=True
        )
        assert proc.returncode == 2
        assert "usage" in proc.stderr.lower()

    def test_unknown_flag_exits_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "tnjet.cli", "params", "--arch", "mps",
             "--n", "8", "--bond", "10", "--wat", "1"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 2


class TestTrainEval:
    def test_train_writes_checkpoint_metrics_figure_manifest(self, workspace):
        ckpt = workspace["mps"]
        assert ckpt.exists()
        metrics = json.loads(ckpt.with_suffix(".metrics.json").read_text())
        assert 0.0 <= metrics["accuracy"] <= 1.0
        assert len(metrics["loss_curve"]) == 2
        assert len(metrics["auc"]) == 5
        assert ckpt.with_suffix(".loss.png").exists()
        manifest = json.loads((ckpt.parent / (ckpt.name + ".manifest.json")).read_text())
        assert manifest["subcommand"] == "train"
        assert manifest["seed"] == 1
        assert len(manifest["inputs"]) == 1

    def test_train_writes_scaler_sidecar_used_by_eval(self, capsys, workspace, tmp_path):
        sidecar = workspace["root"] / "chain.mpsc.scaler.json"
        assert sidecar.exists()
        payload = json.loads(sidecar.read_text())
        assert payload["feature_indices"] == {"pt": 5, "e_rel": 4, "delta_r": 13}
        assert len(payload["q5"]) == 3
        # evaluation on a subsample matches evaluation scaled the same way;
        # a refit scaler on 50 jets would shift the quantiles noticeably
        out = tmp_path / "m.json"
        code, _, _ = invoke(
            capsys, "eval", "--ckpt", str(workspace["mps"]),
            "--data", str(workspace["data"]), "--out", str(out), "--max-jets", "50",
        )
        assert code == 0

    def test_eval_reports_metrics(self, capsys, workspace, tmp_path):
        out = tmp_path / "metrics.json"
        code, stdout, _ = invoke(
            capsys, "eval", "--ckpt", str(workspace["ttn"]),
            "--data", str(workspace["data"]), "--out", str(out),
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["arch"] == "ttn"
        assert payload["auc_class_names"] == ["g", "q", "W", "Z", "t"]
        assert json.loads(stdout)["accuracy"] == payload["accuracy"]

    def test_config_contradiction_is_reported(self, capsys, workspace, tmp_path):
        code, _, err = invoke(
            capsys, "train", "--arch", "ttn", "--n", "12",
            "--data", str(workspace["data"]), "--out", str(tmp_path / "x.ttnc"),
        )
        assert code == 1
        record = json.loads(err)
        assert record["error"] == "ConfigError"
        assert "power of two" in record["message"]

    def test_missing_file_gives_error_record(self, capsys, tmp_path):
        code, _, err = invoke(
            capsys, "eval", "--ckpt", str(tmp_path / "nope.mpsc"),
            "--data", str(tmp_path / "nope.jtn1"), "--out", str(tmp_path / "m.json"),
        )
        assert code == 1
        record = json.loads(err)
        assert "error" in record and "message" in record


class TestSweepQmiEstimate:
    def test_ptq_sweep_csv_and_figure(self, capsys, workspace, tmp_path):
        out = tmp_path / "sweep.csv"
        code, stdout, _ = invoke(
            capsys, "ptq-sweep", "--ckpt", str(workspace["mps"]),
            "--data", str(workspace["data"]), "--fb", "4,8,14",
            "--mode", "both", "--out", str(out), "--max-jets", "400",
        )
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "arch,N,FB,mode,accuracy"
        assert len(lines) == 1 + 3 * 2
        assert out.with_suffix(".png").exists()
        summary = json.loads(stdout)
        assert "knee" in summary

    def test_fb_range_syntax(self, capsys, workspace, tmp_path):
        out = tmp_path / "sweep.csv"
        code, _, _ = invoke(
            capsys, "ptq-sweep", "--ckpt", str(workspace["ttn"]),
            "--data", str(workspace["data"]), "--fb", "13..14",
            "--mode", "qop", "--out", str(out), "--max-jets", "200",
        )
        assert code == 0
        assert len(out.read_text().strip().splitlines()) == 3

    def test_qmi_csv_is_labeled_and_symmetric(self, capsys, workspace, tmp_path):
        out = tmp_path / "qmi.csv"
        code, _, _ = invoke(
            capsys, "qmi", "--ckpt", str(workspace["mps"]), "--out", str(out)
        )
        assert code == 0
        lines = out.read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[0] == "site" and header[1] == "particle0"
        assert len(lines) == 9
        values = np.array(
            [[float(v) for v in line.split(",")[1:]] for line in lines[1:]]
        )
        assert np.allclose(values, values.T)
        assert out.with_suffix(".png").exists()

    def test_estimate_report(self, capsys, workspace, tmp_path):
        out = tmp_path / "report.json"
        code, stdout, _ = invoke(
            capsys, "estimate", "--ckpt", str(workspace["ttn"]), "--fb", "14",
            "--out", str(out),
        )
        assert code == 0
        report = json.loads(out.read_text())
        assert report["arch"] == "ttn"
        assert report["word_bits"] == 16
        assert json.loads(stdout)["latency_ns"] == report["latency_ns"]


class TestSynthConvertCheck:
    def test_convert_check_valid(self, capsys, workspace):
        code, out, _ = invoke(capsys, "convert-check", "--data", str(workspace["data"]))
        assert code == 0
        payload = json.loads(out)
        assert payload["valid"] and payload["jets"] == 1500
        assert sum(payload["labels"].values()) == 1500

    def test_convert_check_invalid(self, capsys, tmp_path):
        bad = tmp_path / "bad.jtn1"
        bad.write_bytes(b"nope")
        code, _, err = invoke(capsys, "convert-check", "--data", str(bad))
        assert code == 1
        assert json.loads(err)["error"] == "MalformedHeaderError"

    def test_seed_changes_synth_output(self, capsys, tmp_path):
        a, b, c = (tmp_path / name for name in ("a.jtn1", "b.jtn1", "c.jtn1"))
        invoke(capsys, "synth", "--out", str(a), "--jets", "50", "--seed", "1")
        invoke(capsys, "synth", "--out", str(b), "--jets", "50", "--seed", "1")
        invoke(capsys, "synth", "--out", str(c), "--jets", "50", "--seed", "2")
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes() != c.read_bytes()
