import json

import numpy as np
import pytest

from muster import io, windowing
from muster.cli import main


@pytest.fixture
def toy_config(tmp_path):
    doc = {
        "image": {"h": 64, "w": 64},
        "base_channels": 16,
        "window_size": 4,
        "num_classes": 3,
        "seed": 9,
        "stages": [
            {"channels": 128, "heads": 4},
            {"channels": 64, "heads": 4},
            {"channels": 32, "heads": 4},
            {"channels": 16, "heads": 4},
        ],
    }
    p = tmp_path / "run.json"
    p.write_text(json.dumps(doc))
    return p


def test_gen_features_then_forward(tmp_path, toy_config, capsys):
    feat_dir = tmp_path / "feats"
    assert main(["gen-features", "--config", str(toy_config), "--out", str(feat_dir)]) == 0
    out = capsys.readouterr().out
    assert "F0:" in out and "F3:" in out
    f0 = io.read_tensor(feat_dir / "F0.mtsr")
    assert f0.shape == (2, 2, 128)

    logits_path = tmp_path / "logits.mtsr"
    assert (
        main(
            [
                "forward",
                "--config",
                str(toy_config),
                "--features",
                str(feat_dir),
                "--out",
                str(logits_path),
            ]
        )
        == 0
    )
    logits = io.read_tensor(logits_path)
    assert logits.shape == (64, 64, 3)

    # byte-identical on a second run
    logits2_path = tmp_path / "logits2.mtsr"
    main(
        [
            "forward",
            "--config",
            str(toy_config),
            "--features",
            str(feat_dir),
            "--out",
            str(logits2_path),
        ]
    )
    assert logits_path.read_bytes() == logits2_path.read_bytes()


def test_forward_dump_stages(tmp_path, toy_config):
    feat_dir = tmp_path / "feats"
    main(["gen-features", "--config", str(toy_config), "--out", str(feat_dir)])
    stage_dir = tmp_path / "stages"
    rc = main(
        [
            "forward",
            "--config",
            str(toy_config),
            "--features",
            str(feat_dir),
            "--out",
            str(tmp_path / "logits.mtsr"),
            "--dump-stages",
            str(stage_dir),
        ]
    )
    assert rc == 0
    shapes = [io.read_tensor(stage_dir / f"stage{i}.mtsr").shape for i in range(4)]
    assert shapes == [(4, 4, 64), (8, 8, 32), (16, 16, 16), (16, 16, 32)]


def test_forward_deterministic_across_thread_env(tmp_path, toy_config, monkeypatch):
    feat_dir = tmp_path / "feats"
    main(["gen-features", "--config", str(toy_config), "--out", str(feat_dir)])
    outs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("MUSTER_THREADS", threads)
        path = tmp_path / f"logits_{threads}.mtsr"
        assert (
            main(
                [
                    "forward",
                    "--config",
                    str(toy_config),
                    "--features",
                    str(feat_dir),
                    "--out",
                    str(path),
                ]
            )
            == 0
        )
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_bad_thread_env_rejected(tmp_path, toy_config, monkeypatch, capsys):
    monkeypatch.setenv("MUSTER_THREADS", "zero")
    assert main(["selftest"]) == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "config"
    assert "MUSTER_THREADS" in err["message"]

    monkeypatch.setenv("MUSTER_THREADS", "0")
    assert main(["selftest"]) == 1


def test_masks_command(tmp_path, capsys):
    out = tmp_path / "masks"
    assert main(["masks", "--window", "4", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    for name in windowing.MASK_NAMES:
        assert name in text
        stored = io.read_tensor(out / f"{name}.mtsr")
        want = windowing.canonical_masks(4)[name]
        # float32 storage keeps -inf and 0 exactly
        assert np.array_equal(stored, want.astype(np.float32))
        art = (out / f"{name}.txt").read_text()
        assert set(art.strip()) <= {".", "#", "\n"}
    assert "corner" in text and "blocked pairs" in text


def test_masks_light_variant(tmp_path):
    out = tmp_path / "masks"
    assert main(["masks", "--window", "8", "--variant", "light", "--out", str(out)]) == 0
    stored = io.read_tensor(out / "right_edge.mtsr")
    assert stored.shape == (64, 16)


def test_masks_odd_window_fails(tmp_path, capsys):
    assert main(["masks", "--window", "5", "--out", str(tmp_path)]) == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "mask"


def test_flops_command(tmp_path, toy_config, capsys):
    json_path = tmp_path / "flops.json"
    rc = main(
        [
            "flops",
            "--config",
            str(toy_config),
            "--sizes",
            "16x16,32x16,32x32",
            "--json",
            str(json_path),
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "muster decoder" in out and "light decoder" in out
    assert "% lower" in out
    doc = json.loads(json_path.read_text())
    assert doc["muster"]["totals"]["flops"] > doc["light"]["totals"]["flops"]
    assert 0 < doc["light_reduction"] < 1
    assert doc["fit"]["rel_residual"] < 1e-9
    assert len(doc["fit"]["points"]) == 3


def test_flops_bad_sizes(toy_config, capsys):
    assert main(["flops", "--config", str(toy_config), "--sizes", "16xx,2"]) == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "config"


def test_gradcheck_command(tmp_path, capsys):
    doc = {
        "image": {"h": 32, "w": 32},
        "base_channels": 8,
        "window_size": 4,
        "num_classes": 2,
        "seed": 2,
        "stages": [{"channels": 16, "heads": 2}, {"channels": 8, "heads": 2}],
    }
    p = tmp_path / "run.json"
    p.write_text(json.dumps(doc))
    assert main(["gradcheck", "--config", str(p), "--max-coords", "2"]) == 0
    out = capsys.readouterr().out
    assert "passed" in out


def test_gradcheck_eps_bounds(toy_config, capsys):
    assert main(["gradcheck", "--config", str(toy_config), "--eps", "0.5"]) == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "config"


def test_selftest_command(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "ok" in out and "FAIL" not in out


def test_usage_errors_are_json(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["masks", "--window"])  # missing value
    assert ei.value.code == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "usage"

    with pytest.raises(SystemExit):
        main(["no-such-command"])
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "usage"


def test_missing_config_file_reports_io(capsys):
    assert main(["flops", "--config", "/nonexistent/run.json"]) == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "io"


def test_config_error_slug(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"image": {"h": 64, "w": 64}}))
    assert main(["flops", "--config", str(p)]) == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "config"
    assert "base_channels" in err["message"]


def test_corrupt_tensor_slug(tmp_path, toy_config, capsys):
    feat_dir = tmp_path / "feats"
    main(["gen-features", "--config", str(toy_config), "--out", str(feat_dir)])
    capsys.readouterr()
    (feat_dir / "F1.mtsr").write_bytes(b"JUNKJUNKJUNKJUNK")
    rc = main(
        [
            "forward",
            "--config",
            str(toy_config),
            "--features",
            str(feat_dir),
            "--out",
            str(tmp_path / "logits.mtsr"),
        ]
    )
    assert rc == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "bad_magic"


def test_module_entrypoint():
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "muster", "masks", "--window", "4", "--out", "/tmp/muster-masks"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "interior" in proc.stdout
