"""End-to-end CLI tests: verbs, determinism, exit codes."""

import json

import numpy as np
import pytest

from lcquant.checkpoint import load_checkpoint
from lcquant.cli import EXIT_CONFIG, EXIT_IO, file_sha256, main
from lcquant.lc import Trace


def write_config(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def regression_config(tmp_path):
    return write_config(tmp_path / "reg.json", {
        "task": "regression",
        "seed": 0,
        "data": {"source": "superres", "n": 120, "n_test": 30, "side": 8,
                 "noise_sigma": 0.05},
        "scheme": {"kind": "adaptive", "k": 4},
        "schedule": {"mu0": 10.0, "growth": 1.2, "iters": 10},
    })


@pytest.fixture
def mlp_config(tmp_path):
    return write_config(tmp_path / "mlp.json", {
        "task": "mlp_classify",
        "seed": 0,
        "data": {"source": "synthetic_classes", "n_classes": 4, "d": 8,
                 "n_train": 300, "n_test": 100, "separation": 3.0},
        "model": {"hidden": [8], "activation": "tanh"},
        "scheme": {"kind": "adaptive", "k": 2},
        "schedule": {"mu0": 1e-3, "growth": 1.2, "iters": 5},
        "sgd": {"lr0": 0.1, "epochs_per_step": 2, "reference_epochs": 8},
    })


def test_train_is_deterministic_given_seed(tmp_path, regression_config, capsys):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["train", "--config", regression_config, "--out", str(out1)]) == 0
    assert main(["train", "--config", regression_config, "--out", str(out2)]) == 0
    capsys.readouterr()
    assert file_sha256(out1 / "reference.ckpt") == file_sha256(out2 / "reference.ckpt")


def test_train_compress_report_regression(tmp_path, regression_config, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", regression_config, "--out", str(out)]) == 0
    assert main(["compress", "--config", regression_config,
                 "--checkpoint", str(out / "reference.ckpt"),
                 "--method", "lc", "--out", str(out)]) == 0
    captured = capsys.readouterr().out
    assert "rho=" in captured

    ckpt = load_checkpoint(out / "quantized.ckpt")
    assert ckpt.quant is not None
    for w in ckpt.weights:
        assert len(np.unique(w)) <= 4

    trace_csv = Trace.from_csv(out / "trace.csv")
    trace_json = Trace.from_json(out / "trace.json")
    assert [r for r in trace_csv.rows] == [r for r in trace_json.rows]
    with open(out / "stats.json") as f:
        stats = json.load(f)
    assert stats["stats"]["k"] == 4
    assert stats["provenance"]["seed"] == 0

    assert main(["report", "--run", str(out)]) == 0
    report = capsys.readouterr().out
    assert "loss_train" in report


def test_compress_dc_round_trips_quantized_file(tmp_path, mlp_config, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", mlp_config, "--out", str(out)]) == 0
    assert main(["compress", "--config", mlp_config,
                 "--checkpoint", str(out / "reference.ckpt"),
                 "--method", "dc", "--out", str(out)]) == 0
    capsys.readouterr()
    ckpt = load_checkpoint(out / "quantized.ckpt")
    for w, q in zip(ckpt.weights, ckpt.quant):
        from lcquant.quantizers import decompress

        assert np.array_equal(w.ravel(), decompress(q))


def test_compress_idc_runs(tmp_path, mlp_config, capsys):
    out = tmp_path / "run"
    main(["train", "--config", mlp_config, "--out", str(out)])
    assert main(["compress", "--config", mlp_config,
                 "--checkpoint", str(out / "reference.ckpt"),
                 "--method", "idc", "--out", str(out)]) == 0
    capsys.readouterr()


def test_compress_cli_overrides(tmp_path, mlp_config, capsys):
    out = tmp_path / "run"
    main(["train", "--config", mlp_config, "--out", str(out)])
    assert main(["compress", "--config", mlp_config,
                 "--checkpoint", str(out / "reference.ckpt"),
                 "--method", "dc", "--K", "8", "--out", str(out)]) == 0
    capsys.readouterr()
    with open(out / "stats.json") as f:
        assert json.load(f)["stats"]["k"] == 8


def test_quantize_binary_and_adaptive(tmp_path, capsys):
    rng = np.random.default_rng(0)
    weights = tmp_path / "w.npy"
    np.save(weights, rng.standard_normal(500))

    out = tmp_path / "wq.npy"
    assert main(["quantize", "--weights", str(weights), "--scheme", "binary",
                 "--out", str(out)]) == 0
    assert set(np.unique(np.load(out))) <= {-1.0, 1.0}

    assert main(["quantize", "--weights", str(weights), "--K", "4",
                 "--out", str(out)]) == 0
    assert len(np.unique(np.load(out))) <= 4

    assert main(["quantize", "--weights", str(weights), "--scheme", "pow2",
                 "--c-exp", "3", "--out", str(out)]) == 0
    values = np.load(out)
    allowed = {0.0, 1.0, 0.5, 0.25, 0.125, -1.0, -0.5, -0.25, -0.125}
    assert set(np.unique(values)) <= allowed
    capsys.readouterr()
    with open(str(out) + ".json") as f:
        sidecar = json.load(f)
    assert sidecar["stats"]["p1"] == 500


def test_quantize_reads_text_weights(tmp_path, capsys):
    weights = tmp_path / "w.txt"
    weights.write_text("0.4 -1.2\n0.9 0.0\n")
    out = tmp_path / "wq.txt"
    assert main(["quantize", "--weights", str(weights), "--scheme", "ternary",
                 "--out", str(out)]) == 0
    capsys.readouterr()
    assert set(np.loadtxt(out).ravel()) <= {-1.0, 0.0, 1.0}


def test_sweep_small_grid(tmp_path, capsys):
    cfg = write_config(tmp_path / "sweep.json", {
        "task": "mlp_classify",
        "seed": 0,
        "data": {"source": "synthetic_classes", "n_classes": 3, "d": 6,
                 "n_train": 200, "n_test": 100, "separation": 2.5},
        "schedule": {"mu0": 1e-3, "growth": 1.2, "iters": 3},
        "sgd": {"lr0": 0.1, "epochs_per_step": 1, "reference_epochs": 5},
        "sweep": {"hidden_sizes": [2, 3], "log2_ks": [1],
                  "loss_targets": [5.0]},
    })
    out = tmp_path / "sweep-out"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    capsys.readouterr()
    lines = (out / "sweep.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 4  # header + 2 hidden sizes x (ref + 1 K)
    with open(out / "selection.json") as f:
        sel = json.load(f)["selections"]["5.0"]
    assert sel["log2_k"] == 1  # loose target -> maximal compression


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------

def test_exit_code_missing_config(tmp_path, capsys):
    code = main(["train", "--config", str(tmp_path / "nope.json")])
    capsys.readouterr()
    assert code == EXIT_IO


def test_exit_code_unknown_config_key(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.json", {
        "task": "regression", "data": {"source": "superres"},
        "grouth": 1.2,
    })
    code = main(["train", "--config", cfg])
    err = capsys.readouterr().err
    assert code == EXIT_CONFIG
    assert "grouth" in err


def test_exit_code_bad_task(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.json", {"task": "gan"})
    assert main(["train", "--config", cfg]) == EXIT_CONFIG
    capsys.readouterr()


def test_exit_code_invalid_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["train", "--config", str(path)]) == EXIT_CONFIG
    capsys.readouterr()


def test_exit_code_unparseable_weights(tmp_path, capsys):
    weights = tmp_path / "w.txt"
    weights.write_text("not a number\n")
    assert main(["quantize", "--weights", str(weights),
                 "--scheme", "binary"]) == EXIT_IO
    capsys.readouterr()


def test_exit_code_checkpoint_layout_mismatch(tmp_path, mlp_config, capsys):
    out = tmp_path / "run"
    main(["train", "--config", mlp_config, "--out", str(out)])
    other = write_config(tmp_path / "other.json", {
        "task": "mlp_classify",
        "data": {"source": "synthetic_classes", "n_classes": 4, "d": 8,
                 "n_train": 300, "n_test": 100, "separation": 3.0},
        "model": {"hidden": [16]},
        "scheme": {"kind": "adaptive", "k": 2},
    })
    code = main(["compress", "--config", other,
                 "--checkpoint", str(out / "reference.ckpt"),
                 "--method", "dc", "--out", str(out)])
    capsys.readouterr()
    assert code == EXIT_CONFIG


def test_argparse_rejects_unknown_verb(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    capsys.readouterr()
    assert info.value.code == 2


def test_shipped_configs_are_valid():
    from pathlib import Path

    from lcquant.cli import (
        load_config,
        schedule_from_config,
        scheme_from_config,
        sgd_from_config,
    )

    root = Path(__file__).resolve().parent.parent / "configs"
    for name in ("regression.json", "classify.json", "sweep.json"):
        cfg = load_config(root / name)
        schedule_from_config(cfg)
        sgd_from_config(cfg, 0)
        if "scheme" in cfg:
            scheme_from_config(cfg)


def test_data_dir_env_var_resolves_relative_paths(tmp_path, monkeypatch, capsys):
    import struct

    data_dir = tmp_path / "data"
    data_dir.mkdir()
    n, rows, cols = 40, 4, 4
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(n, rows, cols)).astype(np.uint8)
    labels = rng.integers(0, 2, size=n).astype(np.uint8)
    with open(data_dir / "imgs.idx", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(pixels.tobytes())
    with open(data_dir / "lbls.idx", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.tobytes())
    monkeypatch.setenv("LCQUANT_DATA_DIR", str(data_dir))

    cfg = write_config(tmp_path / "idx.json", {
        "task": "mlp_classify",
        "seed": 0,
        "data": {"source": "idx", "images": "imgs.idx", "labels": "lbls.idx"},
        "model": {"hidden": [4]},
        "sgd": {"reference_epochs": 2},
    })
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    capsys.readouterr()
    assert (out / "reference.ckpt").exists()
