"""End-to-end exercises of the command-line surface.

Everything runs in-process through main(argv) so exit codes and stdout
can be asserted directly; no subprocesses.
"""

import csv
import json
import struct

import numpy as np
import pytest

from boolnet.cli import main
from boolnet.data import MNIST_FILES
from boolnet.model import harden
from boolnet.serialize import dump_netlist, load_checkpoint, save_netlist
from boolnet.model import random_network

SYNTH_INI = """\
[data]
dataset = synth
synth_kind = parity-of-subset
synth_features = 8
synth_samples = 1200

[encoding]
mode = binary

[model]
layer_widths = 16 8

[train]
total_epochs = 4
finetune_epochs = 1
layers_to_learn = 1
c = 4
tau = 1.0
batch_size = 50
lr_init = 0.05
seed = 1
"""


@pytest.fixture(scope="module")
def synth_run(tmp_path_factory):
    """One trained synth checkpoint shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    ini = root / "run.ini"
    ini.write_text(SYNTH_INI)
    out = root / "train"
    rc = main(["train", "--config", str(ini), "--out", str(out), "--quiet"])
    assert rc == 0
    return ini, out


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ------------------------------------------------------------------ train


def test_train_writes_artifacts(synth_run):
    _, out = synth_run
    for name in ("checkpoint.npz", "metrics.csv", "curves.csv",
                 "manifest.json"):
        assert (out / name).exists(), name

    rows = _read_csv(out / "metrics.csv")
    assert rows[0] == ["epoch", "split", "accuracy", "loss", "wall_clock_s",
                       "phase"]
    assert all(len(r) == 6 for r in rows[1:])
    assert {r[1] for r in rows[1:]} == {"train", "val"}
    epochs = sorted({int(r[0]) for r in rows[1:]})
    assert epochs == list(range(5))  # 4 schedule epochs + 1 finetune

    curves = _read_csv(out / "curves.csv")
    assert curves[0] == ["epoch", "time", "train_mean", "test_mean"]
    assert len(curves) == 6
    accs = [float(r[2]) for r in curves[1:]]
    assert all(0.0 <= a <= 1.0 for a in accs)


def test_train_manifest_contents(synth_run):
    _, out = synth_run
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["seed"] == 1
    assert manifest["numpy_version"] == np.__version__
    assert manifest["adam"] == {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8}
    assert manifest["config"]["train"]["total_epochs"] == 4
    assert manifest["config"]["model"]["layer_widths"] == [16, 8]
    assert manifest["dataset_provenance"].startswith("synth:")
    assert any(p.endswith("checkpoint.npz") for p in manifest["outputs"])
    assert manifest["wall_s"] > 0


def test_checkpoint_round_trips_through_loader(synth_run):
    _, out = synth_run
    model, thresholds, extra = load_checkpoint(out / "checkpoint.npz")
    assert thresholds is None  # binary encoding stores no thresholds
    assert extra["train_config"]["seed"] == 1
    assert 0.0 <= extra["test_accuracy"] <= 1.0
    assert model.input_width == 8


def test_set_override_beats_config_file(synth_run, tmp_path):
    ini, _ = synth_run
    out = tmp_path / "short"
    rc = main([
        "train", "--config", str(ini), "--out", str(out), "--quiet",
        "--set", "train.total_epochs=2",
        "--set", "train.finetune_epochs=0",
    ])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["train"]["total_epochs"] == 2
    rows = _read_csv(out / "metrics.csv")
    assert max(int(r[0]) for r in rows[1:]) == 1  # epochs 0 and 1


def test_train_rerun_is_deterministic(synth_run, tmp_path, capsys):
    ini, _ = synth_run
    dumps, metrics = [], []
    for sub in ("a", "b"):
        out = tmp_path / sub
        rc = main([
            "train", "--config", str(ini), "--out", str(out), "--quiet",
            "--set", "train.total_epochs=3",
        ])
        assert rc == 0
        model, _, _ = load_checkpoint(out / "checkpoint.npz")
        dumps.append(dump_netlist(harden(model)))
        rows = _read_csv(out / "metrics.csv")
        # Drop the wall-clock column; everything else must be bit-equal.
        metrics.append([r[:4] + r[5:] for r in rows])
    assert dumps[0] == dumps[1]
    assert metrics[0] == metrics[1]


def test_quiet_flag_suppresses_progress(synth_run, tmp_path, capsys):
    ini, _ = synth_run
    capsys.readouterr()
    out = tmp_path / "quiet"
    rc = main([
        "train", "--config", str(ini), "--out", str(out), "--quiet",
        "--set", "train.total_epochs=1", "--set", "train.finetune_epochs=0",
    ])
    assert rc == 0
    captured = capsys.readouterr().out
    assert "epoch" not in captured
    assert "test accuracy" in captured


# ------------------------------------------------------------- prune/eval


def test_prune_exact_passes_keep_eval_accuracy(synth_run, tmp_path, capsys):
    ini, out = synth_run
    capsys.readouterr()
    rc = main([
        "eval", "--config", str(ini),
        "--checkpoint", str(out / "checkpoint.npz"), "--split", "test",
    ])
    assert rc == 0
    before = capsys.readouterr().out.splitlines()[-1]

    prune_dir = tmp_path / "pruned"
    rc = main([
        "prune", "--config", str(ini),
        "--checkpoint", str(out / "checkpoint.npz"),
        "--out", str(prune_dir), "--passes", "trivial,equivalence",
    ])
    assert rc == 0
    assert (prune_dir / "pruned.netlist").exists()
    report = _read_csv(prune_dir / "prune_report.csv")
    assert report[0] == ["pass", "layer", "before", "after", "accuracy"]
    assert {r[0] for r in report[1:]} == {"trivial", "logic-equivalence"}

    capsys.readouterr()
    rc = main([
        "eval", "--config", str(ini),
        "--netlist", str(prune_dir / "pruned.netlist"), "--split", "test",
    ])
    assert rc == 0
    after = capsys.readouterr().out.splitlines()[-1]
    # Rewrite-only passes cannot change any prediction.
    assert before == after


def test_prune_all_passes_reports_accuracy(synth_run, tmp_path, capsys):
    ini, out = synth_run
    prune_dir = tmp_path / "pruned_all"
    capsys.readouterr()
    rc = main([
        "prune", "--config", str(ini),
        "--checkpoint", str(out / "checkpoint.npz"),
        "--out", str(prune_dir),
        "--greedy-threshold", "0.98", "--similarity-c", "0.99",
        "--split", "val",
    ])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "val accuracy" in stdout
    report = _read_csv(prune_dir / "prune_report.csv")
    assert {r[0] for r in report[1:]} == {
        "trivial", "logic-equivalence", "greedy", "similarity"
    }
    # Per-layer gate counts never grow.
    assert all(int(r[3]) <= int(r[2]) for r in report[1:])
    manifest = json.loads((prune_dir / "manifest.json").read_text())
    assert manifest["command"] == "prune"
    assert manifest["dataset_provenance"].startswith("synth:")


def test_eval_writes_confusion_matrix(synth_run, tmp_path, capsys):
    ini, out = synth_run
    eval_dir = tmp_path / "eval"
    capsys.readouterr()
    rc = main([
        "eval", "--config", str(ini),
        "--checkpoint", str(out / "checkpoint.npz"),
        "--split", "test", "--out", str(eval_dir),
    ])
    assert rc == 0
    line = capsys.readouterr().out.splitlines()[-1]
    rows = _read_csv(eval_dir / "confusion.csv")
    assert rows[0] == ["true_class", "pred_0", "pred_1"]
    counts = np.array([[int(v) for v in r[1:]] for r in rows[1:]])
    assert counts.sum() == int(line.split()[-2])
    acc = counts.trace() / counts.sum()
    assert f"{acc:.4f}" in line


def test_eval_limit_caps_samples(synth_run, capsys):
    ini, out = synth_run
    capsys.readouterr()
    rc = main([
        "eval", "--config", str(ini),
        "--checkpoint", str(out / "checkpoint.npz"),
        "--split", "test", "--limit", "7",
    ])
    assert rc == 0
    assert "on 7 samples" in capsys.readouterr().out


# ------------------------------------------------------------ estimate-mem


def test_estimate_mem_matches_formulas(tmp_path, capsys):
    csv_path = tmp_path / "mem.csv"
    rc = main([
        "estimate-mem", "12000", "30720", "--k", "2", "--C", "8",
        "--csv", str(csv_path),
    ])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "2.949 GB" in stdout
    assert "1.536 MB" in stdout
    rows = _read_csv(csv_path)
    assert rows[0] == ["G", "I", "k", "C", "bytes_full", "bytes_sparse"]
    assert rows[1] == ["12000", "30720", "2", "8", "2949120000", "1536000"]


# ------------------------------------------------------------- exit codes


def test_unknown_config_key_exits_2(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[data]\ndataset = synth\nbogus = 1\n")
    rc = main(["train", "--config", str(ini), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "data.bogus" in capsys.readouterr().err


def test_unknown_set_key_exits_2(tmp_path, capsys):
    rc = main([
        "train", "--out", str(tmp_path / "o"),
        "--set", "train.bogus=1",
    ])
    assert rc == 2
    assert "train.bogus" in capsys.readouterr().err


def test_malformed_set_exits_2(tmp_path, capsys):
    rc = main(["train", "--out", str(tmp_path / "o"), "--set", "nodot"])
    assert rc == 2
    assert "section.key=value" in capsys.readouterr().err


def test_missing_data_dir_exits_2(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("BOOLNET_DATA_DIR", raising=False)
    rc = main(["train", "--out", str(tmp_path / "o")])  # mnist, no path
    assert rc == 2
    assert "BOOLNET_DATA_DIR" in capsys.readouterr().err


def test_unreadable_dataset_exits_3(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    rc = main([
        "train", "--out", str(tmp_path / "o"), "--data", str(empty),
    ])
    assert rc == 3
    assert "missing dataset file" in capsys.readouterr().err


def test_foreign_checkpoint_exits_4(synth_run, tmp_path, capsys):
    ini, _ = synth_run
    bogus = tmp_path / "bogus.npz"
    np.savez(bogus, stuff=np.arange(4))
    rc = main([
        "eval", "--config", str(ini), "--checkpoint", str(bogus),
        "--split", "test",
    ])
    assert rc == 4


def test_width_mismatch_exits_4(synth_run, tmp_path, capsys):
    ini, _ = synth_run
    other = harden(random_network(12, [4, 4], 2, 4, seed=0))
    nl = tmp_path / "other.netlist"
    save_netlist(nl, other)
    rc = main([
        "eval", "--config", str(ini), "--netlist", str(nl),
        "--split", "test",
    ])
    assert rc == 4
    assert "encoded width" in capsys.readouterr().err


def test_unknown_prune_pass_exits_2(synth_run, tmp_path, capsys):
    ini, out = synth_run
    rc = main([
        "prune", "--config", str(ini),
        "--checkpoint", str(out / "checkpoint.npz"),
        "--out", str(tmp_path / "o"), "--passes", "trivial,magic",
    ])
    assert rc == 2
    assert "magic" in capsys.readouterr().err


def test_eval_without_artifact_exits_2(synth_run, capsys):
    ini, _ = synth_run
    rc = main(["eval", "--config", str(ini), "--split", "test"])
    assert rc == 2
    assert "--checkpoint or --netlist" in capsys.readouterr().err


# ---------------------------------------------------------------- env var


def _tiny_mnist(tmp_path):
    rng = np.random.default_rng(7)
    shapes = {
        "train_images": ((40, 5, 5), 0x803),
        "train_labels": ((40,), 0x801),
        "test_images": ((12, 5, 5), 0x803),
        "test_labels": ((12,), 0x801),
    }
    for key, (dims, magic) in shapes.items():
        hi = 10 if "labels" in key else 256
        payload = rng.integers(0, hi, size=dims).astype(np.uint8)
        header = struct.pack(">i", magic) + b"".join(
            struct.pack(">i", d) for d in dims
        )
        (tmp_path / MNIST_FILES[key]).write_bytes(header + payload.tobytes())


def test_data_dir_env_var(tmp_path, monkeypatch):
    _tiny_mnist(tmp_path)
    monkeypatch.setenv("BOOLNET_DATA_DIR", str(tmp_path))
    out = tmp_path / "run"
    rc = main([
        "train", "--out", str(out), "--quiet",
        "--set", "data.val_size=8",
        "--set", "encoding.thresholds=2",
        "--set", "model.layer_widths=10",
        "--set", "train.total_epochs=1",
        "--set", "train.finetune_epochs=0",
        "--set", "train.batch_size=8",
        "--set", "train.c=4",
    ])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["dataset_provenance"].startswith("mnist-idx:")
