import json
import subprocess
import sys

import numpy as np
import pytest

from plate_surrogates.cli import main
from plate_surrogates.config import ConfigError, RunConfig, apply_overrides, load_config, parse_value
from plate_surrogates.dataio import load_csv


def _run(out, *args):
    return main([*args, "-o", str(out)])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert _run(out, "simulate", "--set", "excitation.duration_s=4", "--set", "plate.fs=3000") == 0
    return out


# --- config ------------------------------------------------------------------

def test_parse_value():
    assert parse_value("3") == 3 and parse_value("1e-3") == 1e-3
    assert parse_value("[1, 2]") == [1, 2] and parse_value("true") is True
    assert parse_value("runs/x") == "runs/x"


def test_overrides_nest_and_reject():
    out = apply_overrides({"train": {"lr": 1.0}}, ["train.lr=0.5", "grid.s_values=[10]"])
    assert out == {"train": {"lr": 0.5}, "grid": {"s_values": [10]}}
    for bad in ("train.lr", "=3"):
        with pytest.raises(ConfigError):
            apply_overrides({}, [bad])


def test_defaults_and_fs_shortcut():
    cfg = load_config(None, ["plate.fs=30000"])
    assert cfg.plate.dt == pytest.approx(1 / 30000, rel=1e-15)
    assert cfg.train.batch_size == 256 and cfg.grid["n_runs"] == 3
    assert RunConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("overrides", [["train.momentum=1"], ["bogus.x=1"], ["grid.s_values=[]"],
                                       ["grid.families=[\"CNN\"]"], ["grid.n_runs=0"],
                                       ["excitation.duration_s=0"], ["data.split_rule=\"odd\""],
                                       ["grid.family_overrides={\"GRU\": {\"lr\": -1}}"]])
def test_config_rejects(overrides):
    with pytest.raises(ConfigError):
        load_config(None, overrides)


def test_shipped_configs_load():
    for name in ("desk", "full"):
        cfg = load_config(f"configs/{name}.json")
        assert cfg.train.batch_size == 256


# --- simulate ----------------------------------------------------------------

def test_simulate_rows_and_manifest(sim_dir):
    ts = load_csv(sim_dir / "dataset.csv")
    assert len(ts) == 4 * 3000
    man = json.loads((sim_dir / "manifest_simulate.json").read_text())
    assert set(man["artifacts"]) == {"dataset.csv"}
    assert man["simulation"]["samples"] == 12000
    assert "time" not in json.dumps(man).lower().replace("timestep", "")


def test_simulate_is_byte_identical(sim_dir, tmp_path):
    assert _run(tmp_path, "simulate", "--set", "excitation.duration_s=4", "--set", "plate.fs=3000") == 0
    assert (tmp_path / "dataset.csv").read_bytes() == (sim_dir / "dataset.csv").read_bytes()
    a = json.loads((tmp_path / "manifest_simulate.json").read_text())
    b = json.loads((sim_dir / "manifest_simulate.json").read_text())
    assert a["artifacts"] == b["artifacts"]


def test_simulate_full_rate_row_count(tmp_path):
    assert _run(tmp_path, "simulate", "--set", "plate.fs=30000", "--set", "excitation.duration_s=16") == 0
    with (tmp_path / "dataset.csv").open() as fh:
        assert sum(1 for _ in fh) == 480_000 + 1


def test_simulate_zero_duration_is_usage_error(tmp_path):
    assert _run(tmp_path, "simulate", "--set", "excitation.duration_s=0") == 1
    assert not (tmp_path / "dataset.csv").exists()


# --- train / scatter ---------------------------------------------------------

def _data(sim_dir):
    return ["--set", f"data.dataset={json.dumps(str(sim_dir / 'dataset.csv'))}"]


def test_train_lr_writes_artifacts(sim_dir, tmp_path, capsys):
    code = _run(tmp_path, "train", "--family", "lr", "--s", "10", "--seed", "3", *_data(sim_dir),
                "--set", "train.max_epochs=3")
    assert code == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"checkpoint_LR_10_0_seed3.json", "trace_LR_10_0_seed3.csv", "scatter_LR_10_0_test.csv"} <= names
    assert len((tmp_path / "trace_LR_10_0_seed3.csv").read_text().splitlines()) == 4
    assert "test R2" in capsys.readouterr().out


def test_scatter_from_checkpoint_matches_train_export(sim_dir, tmp_path):
    assert _run(tmp_path, "train", "--family", "MLP", "--s", "8", "--h", "1", *_data(sim_dir),
                "--set", "train.max_epochs=2") == 0
    first = (tmp_path / "scatter_MLP_8_1_test.csv").read_bytes()
    other = tmp_path / "again"
    assert _run(other, "scatter", "--checkpoint", str(tmp_path / "checkpoint_MLP_8_1_seed0.json"),
                *_data(sim_dir)) == 0
    assert (other / "scatter_MLP_8_1_test.csv").read_bytes() == first
    assert _run(other, "scatter", "--checkpoint", str(tmp_path / "checkpoint_MLP_8_1_seed0.json"),
                "--split", "val", *_data(sim_dir)) == 0
    y = np.loadtxt(other / "scatter_MLP_8_1_val.csv", delimiter=",", skiprows=1)
    assert y.shape[1] == 2 and np.all(np.isfinite(y))


@pytest.mark.parametrize("args", [["train", "--family", "RNN", "--s", "10"],
                                  ["train", "--family", "MLP", "--s", "10", "--h", "0"],
                                  ["train", "--family", "LR", "--s", "0"],
                                  ["scatter", "--checkpoint", "nope.json"],
                                  ["grid", "--jobs", "0"]])
def test_usage_errors_exit_one(sim_dir, tmp_path, args, capsys):
    try:
        code = _run(tmp_path, *args, *_data(sim_dir))
    except SystemExit as exc:  # argparse rejections
        code = exc.code
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_unknown_subcommand_exits_one():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1


def test_missing_dataset_exits_one(tmp_path):
    assert _run(tmp_path, "train", "--family", "LR", "--s", "5") == 1
    assert _run(tmp_path, "grid") == 1
    assert _run(tmp_path, "report") == 1


# --- grid / report -----------------------------------------------------------

def test_one_cell_grid_and_report(sim_dir, tmp_path, capsys):
    grid = ["--set", 'grid.families=["LR"]', "--set", "grid.s_values=[10]", "--set", "grid.n_runs=2",
            "--set", "train.max_epochs=2"]
    assert _run(tmp_path, "grid", *grid, *_data(sim_dir)) == 0
    rows = (tmp_path / "grid_results.csv").read_text().splitlines()
    assert rows[0] == "family,s,h,run,seed,train_r2,test_r2,best_flag"
    assert len(rows) == 3 and sum(r.endswith(",1") for r in rows[1:]) == 1
    assert (tmp_path / "checkpoints" / "checkpoint_LR_10_0.json").exists()
    man = json.loads((tmp_path / "manifest_grid.json").read_text())
    assert man["seeds"]["runs"] == [0, 1] and "grid_results.csv" in man["artifacts"]
    table = capsys.readouterr().out
    assert _run(tmp_path, "report", *grid) == 0
    assert capsys.readouterr().out.splitlines()[0] == table.splitlines()[0]


def test_empty_grid_lists_exit_one(sim_dir, tmp_path):
    assert _run(tmp_path, "grid", "--set", "grid.h_values=[]", *_data(sim_dir)) == 1


def test_all_ns_grid_exits_two(sim_dir, tmp_path, monkeypatch):
    import plate_surrogates.trainer as tr_mod
    from plate_surrogates.nn_core import DivergenceError

    def boom(*a, **k):
        raise DivergenceError("forced")

    monkeypatch.setattr(tr_mod, "train", boom)
    code = _run(tmp_path, "grid", "--set", 'grid.families=["LR"]', "--set", "grid.s_values=[5]",
                "--set", "grid.n_runs=1", *_data(sim_dir))
    assert code == 2
    assert (tmp_path / "grid_results.csv").read_text().splitlines()[1] == "LR,5,0,0,0,NS,NS,0"


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "plate_surrogates", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
    proc = subprocess.run([sys.executable, "-m", "plate_surrogates", "simulate", "-o", str(tmp_path),
                           "--set", "excitation.duration_s=-1"], capture_output=True, text=True)
    assert proc.returncode == 1 and "error" in proc.stderr
