import json
import subprocess
import sys

import numpy as np
import pytest

from pulsebench.bdc import AttentionStackConfig, init_params, save_checkpoint
from pulsebench.cli import main
from pulsebench.signal_store import read_json, write_npy
from pulsebench.synthgen import synth_corpus


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        'output_dir = "out"\nseed = 2\nstages = ["synth", "ablate", "impute", "evaluate", "report"]\n'
        "[synth]\nn_train = 0\nn_test = 4\n"
        '[impute]\nmethods = ["mean", "linear"]\n'
        "[evaluate]\nn_boot = 50\n")
    return path


def test_run_prints_table(cfg_file, capsys):
    assert main(["run", "--config", str(cfg_file)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("task: ecg_beats") and "linear" in out


def test_set_override_and_unknown_key(cfg_file, capsys):
    assert main(["run", "--config", str(cfg_file), "--set", "ablate.p=0.5", "--set", 'impute.methods=["mean"]']) == 0
    table = (cfg_file.parent / "out" / "report" / "table.txt").read_text()
    assert "linear" not in table
    assert main(["run", "--config", str(cfg_file), "--set", "ablate.q=1"]) == 1
    assert main(["run", "--config", str(cfg_file), "--set", "noequals"]) == 1
    assert "error" in capsys.readouterr().err


def test_single_stage_subcommands(cfg_file, tmp_path, capsys):
    out = tmp_path / "o2"
    assert main(["synth", "--config", str(cfg_file), "--out", str(out), "--n-test", "3"]) == 0
    assert main(["ablate", "--config", str(cfg_file), "--out", str(out), "--kind", "transient", "--p", "0.2"]) == 0
    assert main(["impute", "--config", str(cfg_file), "--out", str(out), "--method", "mean"]) == 0
    assert main(["evaluate", "--config", str(cfg_file), "--out", str(out), "--set", 'impute.methods=["mean"]',
                 "--task", "mse_only"]) == 0
    assert read_json(out / "evaluate" / "mean.json")["task"] == "mse_only"
    assert main(["report", "--config", str(cfg_file), "--out", str(out),
                 str(out / "evaluate" / "mean.json")]) == 0
    assert "task: mse_only" in capsys.readouterr().out


def test_missing_input_is_user_error(cfg_file, tmp_path, capsys):
    code = main(["ablate", "--config", str(cfg_file), "--signals", str(tmp_path / "nope.npy")])
    assert code == 1
    assert "nope.npy" in capsys.readouterr().err


def test_malformed_input_is_user_error(cfg_file, tmp_path):
    (tmp_path / "bad.npy").write_bytes(b"not an npy file")
    assert main(["ablate", "--config", str(cfg_file), "--out", str(tmp_path / "o"),
                 "--signals", str(tmp_path / "bad.npy")]) == 1
    assert read_json(tmp_path / "o" / "ablate" / "manifest.json")["status"] == "failed"


def test_bad_config_file_is_user_error(tmp_path):
    (tmp_path / "c.toml").write_text("[train]\nsteps = 'many'\nbogus = 1\n")
    assert main(["run", "--config", str(tmp_path / "c.toml")]) == 1


def test_detect(tmp_path):
    ws = synth_corpus(2, seed=0, duration_s=10)
    write_npy(tmp_path / "s.npy", np.stack([w.samples for w, _ in ws]))
    assert main(["detect", str(tmp_path / "s.npy"), "--output", str(tmp_path / "p.json")]) == 0
    found = json.loads((tmp_path / "p.json").read_text())
    for (w, peaks), key in zip(ws, sorted(found)):
        assert len(found[key]) == len(peaks)


def test_inspect_attn(tmp_path):
    cfg = AttentionStackConfig(d=4, d_x=4, dilations=(1, 2), filter_size=3)
    save_checkpoint(tmp_path / "m.ckpt", cfg, init_params(cfg))
    write_npy(tmp_path / "x.npy", np.random.default_rng(0).normal(size=(2, 50)))
    args = ["inspect-attn", "--checkpoint", str(tmp_path / "m.ckpt"), "--input", str(tmp_path / "x.npy"),
            "--output", str(tmp_path / "a.csv")]
    assert main(args + ["--query", "10", "--row", "1"]) == 0
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "key,weight" and len(lines) == 51
    assert abs(sum(float(ln.split(",")[1]) for ln in lines[1:]) - 1) < 1e-6
    assert main(args + ["--query", "50"]) == 1
    assert main(args + ["--query", "0", "--layer", "5"]) == 1


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "pulsebench.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "inspect-attn" in res.stdout
    res = subprocess.run([sys.executable, "-m", "pulsebench.cli", "frobnicate"], capture_output=True, text=True)
    assert res.returncode == 2  # argparse usage error
