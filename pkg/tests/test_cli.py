import json
import math

import numpy as np
import pytest

from hankel_doa.cli import main
from hankel_doa.experiments import DEFAULTS, ConfigError, load_config, run_id
from hankel_doa.io import load_checkpoint

SMOKE = """
seed = 3
[array]
m = 5
omega = [1, 2, 4, 5]
[data]
train_count = 100
test_count = 20
[train]
epochs = 2
batch_size = 16
k_phases = 2
lr0 = 1e-3
[experiments]
k_list = [1, 2]
snr_list = [10.0, 20.0, 30.0]
doa_snr_list = [30.0]
"""


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    root = tmp_path_factory.mktemp("smoke")
    cfg = root / "smoke.toml"
    cfg.write_text(SMOKE)
    out = root / "out"
    assert main(["pipeline", "--config", str(cfg), "--out", str(out)]) == 0
    return cfg, out


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [line.split(",") for line in lines[1:]]


def test_train_writes_loadable_checkpoint(smoke):
    _, out = smoke
    params, hmap, header = load_checkpoint(out / "train" / "model.ihtn")
    assert params.k_phases == 2 and hmap.omega == (1, 2, 4, 5)
    header_row, rows = read_csv(out / "train" / "history.csv")
    assert header_row == ["run_id", "epoch", "lr", "loss_total", "loss1", "loss2"]
    assert len(rows) == 2


def test_every_row_carries_run_id(smoke):
    _, out = smoke
    for csv_path in out.rglob("*.csv"):
        manifest = json.loads((csv_path.parent / "manifest.json").read_text())
        _, rows = read_csv(csv_path)
        assert rows and all(r[0] == manifest["run_id"] for r in rows), csv_path


def test_manifest_contents(smoke):
    _, out = smoke
    m = json.loads((out / "train" / "manifest.json").read_text())
    assert m["config"]["train"]["epochs"] == 2 and m["config"]["seed"] == 3
    assert m["run_id"] == run_id("train", m["config"])
    assert len(m["checkpoint_sha256"]) == 64 and len(m["checkpoint_git_sha1"]) == 40
    assert set(m["outputs"]) == {"history.csv"}
    assert "started_utc" in m and len(m["epoch_wall_seconds"]) == 2


def test_sweep_snr_shape(smoke):
    _, out = smoke
    _, rows = read_csv(out / "sweep-snr" / "sweep_snr.csv")
    assert len(rows) == 9
    assert {(float(r[1]), r[2]) for r in rows} == {
        (s, mth) for s in (10.0, 20.0, 30.0) for mth in ("ihtnet", "fiht", "iht")
    }


def test_four_spectra_share_grid(smoke):
    _, out = smoke
    names = ["clean_full", "noisy_full", "fiht", "ihtnet"]
    grids = [np.loadtxt(out / "spectrum" / f"spectrum_{n}.csv", delimiter=",", skiprows=1, usecols=1) for n in names]
    assert all(len(g) == 1201 for g in grids)
    assert all(np.array_equal(g, grids[0]) for g in grids)


def test_doa_csv_columns(smoke):
    _, out = smoke
    header, rows = read_csv(out / "doa" / "doa_mse.csv")
    assert header == ["run_id", "snr_db", "method", "mse_deg2", "median_abs_error_deg", "n_samples", "fallback_count"]
    assert len(rows) == 3


def test_rerun_manifest_is_byte_identical(smoke, tmp_path):
    _, out = smoke
    for command in ("generate", "train", "sweep-snr", "spectrum", "doa"):
        assert main([command, "--config", str(out / command / "manifest.json"), "--out", str(tmp_path)]) == 0
    for csv_path in out.rglob("*.csv"):
        rel = csv_path.relative_to(out)
        assert (tmp_path / rel).read_bytes() == csv_path.read_bytes(), rel
    assert (tmp_path / "train" / "model.ihtn").read_bytes() == (out / "train" / "model.ihtn").read_bytes()


def test_seed_flag_changes_run(smoke, tmp_path):
    cfg, _ = smoke
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["solve", "--config", str(cfg), "--seed", "4", "--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "solve" / "manifest.json").read_text())
    b = json.loads((tmp_path / "b" / "solve" / "manifest.json").read_text())
    assert a["run_id"] != b["run_id"] and b["config"]["seed"] == 4


def test_sweep_phases_single_k(smoke, tmp_path):
    cfg, _ = smoke
    assert main(["sweep-phases", "--config", str(cfg), "--out", str(tmp_path), "--k-list", "1"]) == 0
    header, rows = read_csv(tmp_path / "sweep-phases" / "sweep_phases.csv")
    assert header[1:3] == ["k", "snr_db"] and len(rows) == 1


def test_noiseless_sentinel_full_array(tmp_path):
    # the default 18-element SLA is in the exact-recovery regime without noise
    cfg = tmp_path / "c.toml"
    cfg.write_text('[array]\nn_elements = 18\n[data]\ntest_count = 20\n[experiments]\nmethods = ["fiht"]\n')
    assert main(["sweep-snr", "--config", str(cfg), "--out", str(tmp_path), "--snr-list", "inf"]) == 0
    _, rows = read_csv(tmp_path / "sweep-snr" / "sweep_snr.csv")
    assert rows[0][1] == "inf" and float(rows[0][3]) < 1e-10


@pytest.mark.parametrize(
    "argv",
    [
        ["sweep-phases", "--k-list", ""],
        ["train", "--threads", "0"],
        ["nonsense"],
        ["spectrum", "--checkpoint", "missing.ihtn"],
    ],
)
def test_config_errors_exit_2(smoke, tmp_path, argv):
    cfg, _ = smoke
    assert main([*argv, "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_bad_config_files(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[train]\nepochs = 0\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("[nope]\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("not = [toml")
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_numeric_failure_exit_3(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(
        "[array]\nm = 5\nomega = [1, 2, 4, 5]\n[data]\ntrain_count = 20\n"
        "[train]\nepochs = 3\nk_phases = 1\nlr0 = 1e300\n"
    )
    with np.errstate(all="ignore"):
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 3


def test_defaults_are_desk_scale():
    cfg = load_config()
    assert cfg["data"]["train_count"] == 20000 and cfg["train"]["epochs"] == 30
    assert cfg["train"]["k_phases"] == 8 and cfg["data"]["test_count"] >= 500
    assert cfg == json.loads(json.dumps(DEFAULTS))
    assert not math.isnan(cfg["train"]["lr0"])


def test_solve_flags_recorded(tmp_path):
    argv = ["solve", "--out", str(tmp_path), "--algo", "iht", "--rank", "2", "--beta", "0.5", "--mode", "literal", "--snr", "inf"]
    assert main(argv) == 0
    m = json.loads((tmp_path / "solve" / "manifest.json").read_text())
    assert m["config"]["solver"]["step_beta"] == 0.5 and m["config"]["solver"]["residual_mode"] == "literal"
    assert m["config"]["experiments"]["solve_algo"] == "iht"
    assert main(["solve", "--out", str(tmp_path), "--rank", "0"]) == 2
