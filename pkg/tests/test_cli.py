import json
import os

import numpy as np
import pytest

from bct import numerics as num
from bct.bench import parse_report
from bct.cli import demo_transcript, main
from bct.core import ModelConfig, init_layer, update_sequence
from bct.serialize import load_tensors, save_config


def run(argv):
    return main(argv)


# --------------------------------------------------------------------------
# verify


def test_verify_passes_on_fresh_build(capsys):
    assert run(["verify"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6
    assert "6/6 invariants passed" in out


def test_verify_seed_override_keeps_verdict(capsys):
    assert run(["verify", "--seed", "12345"]) == 0
    assert "6/6" in capsys.readouterr().out


def test_verify_catches_unnormalized_softmax(monkeypatch, capsys):
    def broken_softmax(scores):
        shifted = scores - scores.max(axis=1, keepdims=True)
        return np.exp(shifted)  # forgot to normalize

    monkeypatch.setattr("bct.numerics.softmax_row", broken_softmax)
    assert run(["verify"]) == 3
    assert "FAIL" in capsys.readouterr().out


# --------------------------------------------------------------------------
# bench


def test_bench_writes_both_reports(tmp_path, capsys):
    out = str(tmp_path)
    assert run(["bench", "--out", out, "--lengths", "8,16", "--reps", "5",
                "--format", "csv"]) == 0
    for model in ("bct", "baseline"):
        path = os.path.join(out, f"bench_{model}.csv")
        assert os.path.exists(path)
        lines = open(path).read().strip().splitlines()
        assert lines[0].startswith("model,context_length,cache_bytes")
        rows = [line.split(",") for line in lines[1:]]
        assert [r[1] for r in rows] == ["8", "16"]  # lengths respected verbatim


def test_bench_memory_columns_match_formula(tmp_path):
    out = str(tmp_path)
    cfg = ModelConfig(d_model=8, d_k=4, d_v=8, n_slots=16, seed=0)
    save_config(os.path.join(out, "m.cfg"), cfg)
    assert run(["bench", "--config", os.path.join(out, "m.cfg"), "--out", out,
                "--lengths", "4,8", "--reps", "5", "--format", "json"]) == 0
    # bench defaults to 32-bit
    doc = json.load(open(os.path.join(out, "bench_bct.json")))
    assert doc["element_width"] == 32
    assert [s["cache_bytes"] for s in doc["samples"]] == [16 * 12 * 4] * 2
    base = json.load(open(os.path.join(out, "bench_baseline.json")))
    assert [s["cache_bytes"] for s in base["samples"]] == [4 * 12 * 4, 8 * 12 * 4]
    for s in doc["samples"] + base["samples"]:
        assert s["cache_bytes"] == s["payload_bytes"]


def test_bench_env_width_override(tmp_path, monkeypatch):
    monkeypatch.setenv("BCT_ELEMENT_WIDTH", "64")
    out = str(tmp_path)
    cfg = ModelConfig(d_model=8, d_k=4, d_v=8, n_slots=16, seed=0)
    save_config(os.path.join(out, "m.cfg"), cfg)
    assert run(["bench", "--config", os.path.join(out, "m.cfg"), "--out", out,
                "--lengths", "4", "--reps", "5", "--format", "json"]) == 0
    doc = json.load(open(os.path.join(out, "bench_bct.json")))
    assert doc["element_width"] == 64
    assert doc["samples"][0]["cache_bytes"] == 16 * 12 * 8


def test_bench_json_round_trips(tmp_path):
    out = str(tmp_path)
    assert run(["bench", "--out", out, "--lengths", "8", "--reps", "5",
                "--format", "json"]) == 0
    report = parse_report(open(os.path.join(out, "bench_bct.json")).read())
    assert report.model_id == "bct" and report.repetitions == 5


def test_bench_bad_env_width(monkeypatch, capsys):
    monkeypatch.setenv("BCT_ELEMENT_WIDTH", "48")
    assert run(["bench", "--lengths", "4", "--reps", "5"]) == 2


def test_bench_out_path_collision_is_io_error(tmp_path):
    blocker = tmp_path / "blocked"
    blocker.write_text("file, not a directory")
    assert run(["bench", "--out", str(blocker), "--lengths", "4", "--reps", "5"]) == 4


# --------------------------------------------------------------------------
# train


def train_args(tmp_path, extra=()):
    return ["train", "--out", str(tmp_path), "--vocab", "4", "--seq-len", "6",
            "--slots", "8", "--steps", "4", "--batch-size", "2", *extra]


def test_train_writes_curve_and_checkpoint(tmp_path, capsys):
    assert run(train_args(tmp_path)) == 0
    curve = open(tmp_path / "train_curve.csv").read().strip().splitlines()
    assert curve[0] == "step,loss,accuracy"
    assert len(curve) == 5
    entries = load_tensors(str(tmp_path / "train_checkpoint.bin"))
    assert "w_write_query" in entries and "head_weight" in entries
    assert "held-out accuracy" in capsys.readouterr().out


def test_train_zero_lr_flat_curve(tmp_path):
    assert run(train_args(tmp_path, ["--lr", "0"])) == 0
    rows = open(tmp_path / "train_curve.csv").read().strip().splitlines()[1:]
    losses = {row.split(",")[1] for row in rows}
    assert len(losses) == 1


def test_train_same_seed_reproducible(tmp_path):
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    assert run(train_args(a_dir, ["--seed", "7"])) == 0
    assert run(train_args(b_dir, ["--seed", "7"])) == 0
    assert open(a_dir / "train_curve.csv").read() == open(b_dir / "train_curve.csv").read()


def test_train_divergence_reported_but_curve_written(tmp_path, capsys):
    assert run(train_args(tmp_path, ["--lr", "1e8", "--steps", "30"])) == 0
    assert "DIVERGED" in capsys.readouterr().out
    assert os.path.exists(tmp_path / "train_curve.csv")


def test_train_config_mismatch_rejected(tmp_path, capsys):
    cfg = ModelConfig(d_model=4, d_k=4, d_v=4, n_slots=8, seed=0)
    path = tmp_path / "bad.cfg"
    save_config(str(path), cfg)
    assert run(train_args(tmp_path, ["--config", str(path)])) == 2


# --------------------------------------------------------------------------
# demo


def test_demo_prints_write_path(capsys):
    assert run(["demo", "--tokens", "2"]) == 0
    out = capsys.readouterr().out
    for label in ("write query", "write value", "slot scores", "write weights",
                  "value delta", "final slot values"):
        assert label in out


def test_demo_refuses_large_config(tmp_path, capsys):
    cfg = ModelConfig(d_model=16, d_k=16, d_v=16, n_slots=64, seed=0)
    path = tmp_path / "big.cfg"
    save_config(str(path), cfg)
    assert run(["demo", "--config", str(path)]) == 2
    assert "human-readable" in capsys.readouterr().err


def test_demo_zero_input_leaves_values_unchanged():
    config = ModelConfig(d_model=4, d_k=4, d_v=4, n_slots=4, seed=0)
    params, _ = init_layer(config, num.make_rng(0))
    _, final_values = demo_transcript(config, np.zeros((3, 4)), params)
    assert not final_values.any()


def test_demo_one_hot_weights_touch_single_slot():
    config = ModelConfig(d_model=4, d_k=4, d_v=4, n_slots=4, seed=1)
    params, _ = init_layer(config, num.make_rng(1))
    x = num.make_rng(2).standard_normal((1, 4))
    wq = x @ params.w_write_query[0]
    params.slot_keys[0][:] = -50.0 * wq / np.abs(wq).max()
    params.slot_keys[0][2] = 50.0 * wq[0] / np.abs(wq).max()  # slot 2 wins by a mile
    _, final_values = demo_transcript(config, x, params)
    assert np.abs(final_values[2]).max() > 0.01
    others = np.abs(final_values[[0, 1, 3]]).max()
    assert others < 1e-12


def test_demo_transcript_matches_update_sequence():
    config = ModelConfig(d_model=4, d_k=4, d_v=4, n_slots=4, seed=5)
    params, _ = init_layer(config, num.make_rng(5))
    xs = num.make_rng(6).standard_normal((4, 4))
    text, final_values = demo_transcript(config, xs, params)
    expected = update_sequence(xs, np.zeros((4, 4)), params, config)
    assert np.abs(final_values - expected).max() < 1e-12
    steps = [line for line in text.splitlines() if line.startswith("token ")]
    assert len(steps) == 4


# --------------------------------------------------------------------------
# argument handling


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as e:
        run(["verify", "--bogus"])
    assert e.value.code == 2


def test_missing_subcommand_rejected():
    with pytest.raises(SystemExit) as e:
        run([])
    assert e.value.code == 2


def test_config_file_unknown_key_is_validation_error(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("d_model=4\nd_k=4\nd_v=4\nn_slots=4\nwindow=9\n")
    assert run(["demo", "--config", str(path)]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_missing_config_file_is_io_error(tmp_path):
    assert run(["demo", "--config", str(tmp_path / "absent.cfg")]) == 4
