"""Experiment runners behind the command line: config resolution, manifests, CSVs.

Each command writes into its own directory ``<out>/<command>/`` containing a
``manifest.json`` and the command's CSV files. Commands that need a trained
model look for ``<out>/train/model.ihtn`` unless a checkpoint path is given.
"""

from __future__ import annotations

import copy
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .array_signal import ArrayConfig, apply_mask, generate_dataset, generate_sample, random_sla
from .doa import Spectrum, beamform, doa_error, find_peaks
from .hankel_ops import build_index_map
from .io import load_checkpoint, load_dataset, save_dataset
from .net import predict
from .solvers import SOLVERS, SolverConfig, complete_batch
from .training import TrainConfig, evaluate_loss1, stack, train

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


DEFAULTS = {
    "seed": 0,
    "array": {"m": 21, "n_elements": 18, "sla_seed": 0, "spacing_ratio": 0.5, "omega": []},
    "data": {"train_count": 20000, "test_count": 500, "p": 2, "snr_range_db": [10.0, 30.0], "min_separation_deg": 0.0},
    "solver": {"rank_r": 2, "step_beta": 1.0, "max_iters": 500, "rel_tol": 1e-8, "residual_mode": "masked"},
    "train": {
        "epochs": 30,
        "batch_size": 256,
        "lr0": 1e-4,
        "lr_decay": 0.5,
        "decay_every": 10,
        "alpha": 0.01,
        "k_phases": 8,
        "init_noise": 1e-2,
    },
    "experiments": {
        "k_list": [1, 2, 4, 8],
        "phase_sweep_snr_db": 20.0,
        "snr_list": [10.0, 20.0, 30.0],
        "methods": ["ihtnet", "fiht", "iht"],
        "spectrum_snr_db": 30.0,
        "spectrum_sample": 0,
        "doa_snr_list": [10.0, 20.0, 30.0],
        "grid_step_deg": 0.1,
        "solve_algo": "fiht",
        "solve_snr_db": 30.0,
        "solve_sample": 0,
    },
}

METHODS = ("ihtnet", "fiht", "iht")
# offsets that keep the train stream and the held-out streams disjoint
TEST_SEED_OFFSET = 1_000_003


# ---------------------------------------------------------------- config


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a table")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def load_config(path=None, seed: int | None = None) -> dict:
    """Defaults overlaid with a TOML file (or a previous run's manifest.json)."""
    user: dict = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            if path.suffix == ".json":
                user = json.loads(text)["config"]
            else:
                user = tomllib.loads(text)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
    cfg = _merge(DEFAULTS, user)
    if seed is not None:
        cfg["seed"] = int(seed)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        array_config(cfg)
        solver_config(cfg)
        train_config(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    d, e = cfg["data"], cfg["experiments"]
    if d["train_count"] < 1 or d["test_count"] < 1 or d["p"] < 1:
        raise ConfigError("data counts and p must be positive")
    if len(d["snr_range_db"]) != 2:
        raise ConfigError("data.snr_range_db must have two entries")
    unknown = set(e["methods"]) - set(METHODS)
    if unknown:
        raise ConfigError(f"unknown methods {sorted(unknown)}")
    if e["solve_algo"] not in ("fiht", "iht"):
        raise ConfigError("experiments.solve_algo must be fiht or iht")
    if not e["grid_step_deg"] > 0:
        raise ConfigError("experiments.grid_step_deg must be positive")


def array_config(cfg: dict) -> ArrayConfig:
    a = cfg["array"]
    if a["omega"]:
        return ArrayConfig(int(a["m"]), tuple(int(i) for i in a["omega"]), float(a["spacing_ratio"]))
    return random_sla(int(a["m"]), int(a["n_elements"]), int(a["sla_seed"]), float(a["spacing_ratio"]))


def solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig(**cfg["solver"])


def train_config(cfg: dict, k_phases: int | None = None) -> TrainConfig:
    t = dict(cfg["train"], seed=int(cfg["seed"]))
    if k_phases is not None:
        t["k_phases"] = int(k_phases)
    return TrainConfig(**t)


def run_id(command: str, cfg: dict) -> str:
    blob = json.dumps({"command": command, "config": cfg}, sort_keys=True, default=float)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def git_blob_sha1(path) -> str:
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------- plumbing


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_rows(path, header, rows, rid: str) -> Path:
    """CSV with a leading ``run_id`` column; floats use round-trip repr."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", *header])
        for row in rows:
            w.writerow([rid, *(_fmt(v) for v in row)])
    return path


class Run:
    """One command invocation: output directory, run id and manifest."""

    def __init__(self, command: str, cfg: dict, out_dir):
        self.command = command
        self.cfg = cfg
        self.id = run_id(command, cfg)
        self.dir = Path(out_dir) / command
        self.dir.mkdir(parents=True, exist_ok=True)
        self.outputs: list[Path] = []
        self.extra: dict = {}
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self._t0 = time.perf_counter()

    def csv(self, name, header, rows) -> Path:
        path = write_rows(self.dir / name, header, rows, self.id)
        self.outputs.append(path)
        return path

    def finish(self) -> Path:
        manifest = {
            "command": self.command,
            "run_id": self.id,
            "config": self.cfg,
            "omega": list(array_config(self.cfg).omega),
            "package_version": __version__,
            "outputs": {p.name: sha256_file(p) for p in self.outputs},
            **self.extra,
            "started_utc": self.started,
            "finished_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "wall_seconds": time.perf_counter() - self._t0,
        }
        path = self.dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
        return path


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"not serializable: {type(v)}")


def train_dataset(cfg: dict, out_dir=None):
    """The training set; reuses ``<out>/generate/dataset`` when it matches the config."""
    config = array_config(cfg)
    d = cfg["data"]
    want = {
        "seed": int(cfg["seed"]),
        "count": int(d["train_count"]),
        "p": int(d["p"]),
        "snr_range_db": [float(x) for x in d["snr_range_db"]],
        "min_separation_deg": float(d["min_separation_deg"]),
    }
    if out_dir is not None:
        cached = Path(out_dir) / "generate" / "dataset"
        if (cached / "manifest.json").exists():
            ds = load_dataset(cached)
            if ds.config == config and all(ds.meta.get(k) == v for k, v in want.items()):
                return ds
            log.warning("ignoring %s: generated with a different config", cached)
    return generate_dataset(config, want["count"], want["p"], tuple(want["snr_range_db"]), want["seed"], want["min_separation_deg"])


def test_dataset(cfg: dict, snr_db: float):
    """Held-out set at a fixed SNR; sources are shared across SNR points."""
    d = cfg["data"]
    return generate_dataset(
        array_config(cfg),
        int(d["test_count"]),
        int(d["p"]),
        (float(snr_db), float(snr_db)),
        int(cfg["seed"]) + TEST_SEED_OFFSET,
        float(d["min_separation_deg"]),
    )


def resolve_checkpoint(cfg: dict, out_dir, checkpoint=None) -> Path:
    path = Path(checkpoint) if checkpoint else Path(out_dir) / "train" / "model.ihtn"
    if not path.exists():
        raise ConfigError(f"checkpoint {path} not found; run the train command first or pass --checkpoint")
    return path


def load_model(cfg: dict, path):
    params, hmap, _ = load_checkpoint(path)
    if hmap.omega != array_config(cfg).omega or hmap.m != cfg["array"]["m"]:
        raise ConfigError(f"checkpoint {path} was trained on a different array geometry")
    return params, hmap


def reconstruction_loss(rec, labels) -> float:
    """Mean squared error over stacked real/imag parts (the training Loss1)."""
    return float(np.sum((stack(rec) - stack(labels)) ** 2) / stack(labels).size)


def complete(method: str, inputs, cfg: dict, hmap, params=None):
    if method == "ihtnet":
        return predict(inputs, params, hmap)
    return complete_batch(inputs, solver_config(cfg), hmap, method)


# ---------------------------------------------------------------- commands


def with_overrides(cfg: dict, **experiments) -> dict:
    """Fold command-line overrides into the config so the manifest records them."""
    given = {k: v for k, v in experiments.items() if v is not None}
    if not given:
        return cfg
    out = copy.deepcopy(cfg)
    out["experiments"].update(given)
    validate_config(out)
    return out


def with_solver_overrides(cfg: dict, **solver) -> dict:
    given = {k: v for k, v in solver.items() if v is not None}
    if not given:
        return cfg
    out = copy.deepcopy(cfg)
    out["solver"].update(given)
    validate_config(out)
    return out


def cmd_generate(cfg: dict, out_dir) -> Run:
    run = Run("generate", cfg, out_dir)
    ds = train_dataset(cfg)
    save_dataset(run.dir / "dataset", ds)
    run.extra["dataset_files"] = {
        name: sha256_file(run.dir / "dataset" / name) for name in ("data.bin", "truth.bin")
    }
    run.finish()
    return run


def cmd_train(cfg: dict, out_dir, resume: bool = False) -> Run:
    run = Run("train", cfg, out_dir)
    ds = train_dataset(cfg, out_dir)
    hmap = build_index_map(ds.config)
    result = train(
        ds.inputs,
        ds.labels,
        hmap,
        train_config(cfg),
        residual_mode=cfg["solver"]["residual_mode"],
        checkpoint_dir=run.dir,
        resume=resume,
    )
    rows = [(r.epoch, r.lr, r.loss_total, r.loss1, r.loss2) for r in result.history]
    run.csv("history.csv", ["epoch", "lr", "loss_total", "loss1", "loss2"], rows)
    ckpt = run.dir / "model.ihtn"
    run.extra["checkpoint_sha256"] = sha256_file(ckpt)
    run.extra["checkpoint_git_sha1"] = git_blob_sha1(ckpt)
    run.extra["epoch_wall_seconds"] = [r.wall_seconds for r in result.history]
    run.finish()
    return run


def cmd_sweep_phases(cfg: dict, out_dir, k_list=None) -> Run:
    cfg = with_overrides(cfg, k_list=None if k_list is None else [int(k) for k in k_list])
    k_list = cfg["experiments"]["k_list"]
    if not k_list:
        raise ConfigError("k_list is empty")
    run = Run("sweep-phases", cfg, out_dir)
    ds = train_dataset(cfg, out_dir)
    hmap = build_index_map(ds.config)
    snr = float(cfg["experiments"]["phase_sweep_snr_db"])
    test = test_dataset(cfg, snr)
    rows, hashes = [], {}
    for k in k_list:
        model_dir = run.dir / f"k{int(k)}"
        result = train(
            ds.inputs,
            ds.labels,
            hmap,
            train_config(cfg, k_phases=k),
            residual_mode=cfg["solver"]["residual_mode"],
            checkpoint_dir=model_dir,
            resume=True,
        )
        loss = evaluate_loss1(test.inputs, test.labels, result.params, hmap)
        hashes[f"k{int(k)}"] = sha256_file(model_dir / "model.ihtn")
        rows.append((int(k), snr, loss, len(test)))
        log.info("k=%d test loss %.6g", k, loss)
    run.csv("sweep_phases.csv", ["k", "snr_db", "test_loss", "n_samples"], rows)
    run.extra["checkpoint_sha256"] = hashes
    run.finish()
    return run


def cmd_sweep_snr(cfg: dict, out_dir, checkpoint=None, snr_list=None) -> Run:
    cfg = with_overrides(cfg, snr_list=None if snr_list is None else [float(v) for v in snr_list])
    snr_list = cfg["experiments"]["snr_list"]
    if not snr_list:
        raise ConfigError("snr_list is empty")
    methods = cfg["experiments"]["methods"]
    run = Run("sweep-snr", cfg, out_dir)
    params = hmap = None
    if "ihtnet" in methods:
        path = resolve_checkpoint(cfg, out_dir, checkpoint)
        params, hmap = load_model(cfg, path)
        run.extra["checkpoint_sha256"] = sha256_file(path)
    hmap = hmap or build_index_map(array_config(cfg))
    rows = []
    for snr in snr_list:
        test = test_dataset(cfg, float(snr))
        for method in methods:
            rec = complete(method, test.inputs, cfg, hmap, params)
            rows.append((float(snr), method, reconstruction_loss(rec, test.labels), len(test)))
    run.csv("sweep_snr.csv", ["snr_db", "method", "recon_loss", "n_samples"], rows)
    run.finish()
    return run


def held_out_sample(cfg: dict, sample: int, snr_db: float):
    """Sample ``sample`` of the held-out stream as (clean full, noisy full, masked, sources)."""
    config = array_config(cfg)
    full = ArrayConfig(config.m, spacing_ratio=config.spacing_ratio)
    label, noisy, sources, _ = generate_sample(
        full, int(cfg["data"]["p"]), (snr_db, snr_db), int(cfg["seed"]) + TEST_SEED_OFFSET, sample
    )
    return label.values, noisy.values, apply_mask(noisy, config).values, sources


def four_spectra(cfg: dict, params, hmap, sample: int, snr_db: float):
    """Spectra of the clean full, noisy full, FIHT- and IHT-Net-completed snapshots."""
    clean, noisy, masked, sources = held_out_sample(cfg, sample, snr_db)
    full = ArrayConfig(hmap.m, spacing_ratio=array_config(cfg).spacing_ratio)
    step = float(cfg["experiments"]["grid_step_deg"])
    spectra = {
        "clean_full": beamform(clean, full, step),
        "noisy_full": beamform(noisy, full, step),
        "fiht": beamform(complete("fiht", masked[None], cfg, hmap)[0], full, step),
    }
    if params is not None:
        spectra["ihtnet"] = beamform(predict(masked, params, hmap), full, step)
    return spectra, sources


def cmd_spectrum(cfg: dict, out_dir, checkpoint=None, sample=None, snr_db=None) -> Run:
    cfg = with_overrides(cfg, spectrum_sample=sample, spectrum_snr_db=snr_db)
    e = cfg["experiments"]
    sample, snr_db = int(e["spectrum_sample"]), float(e["spectrum_snr_db"])
    run = Run("spectrum", cfg, out_dir)
    path = resolve_checkpoint(cfg, out_dir, checkpoint)
    params, hmap = load_model(cfg, path)
    run.extra["checkpoint_sha256"] = sha256_file(path)
    spectra, sources = four_spectra(cfg, params, hmap, sample, snr_db)
    for name, spec in spectra.items():
        run.csv(f"spectrum_{name}.csv", ["angle_deg", "power"], zip(spec.grid_deg, spec.power))
    run.extra["sample"] = {"index": sample, "snr_db": snr_db, "angles_deg": list(map(float, sources.angles_deg))}
    run.finish()
    return run


def doa_rows(cfg: dict, snr_db: float, methods, params, hmap):
    """One row per method: (snr, method, mse, median abs error, n, fallbacks)."""
    test = test_dataset(cfg, snr_db)
    config = array_config(cfg)
    full = ArrayConfig(config.m, spacing_ratio=config.spacing_ratio)
    p = int(cfg["data"]["p"])
    step = float(cfg["experiments"]["grid_step_deg"])
    rows = []
    for method in methods:
        rec = complete(method, test.inputs, cfg, hmap, params)
        spec = beamform(rec, full, step)
        sq, ab, fallbacks = [], [], 0
        for row, truth in zip(np.atleast_2d(spec.power), test.angles_deg):
            peaks = find_peaks(Spectrum(spec.grid_deg, row), p)
            fallbacks += int(peaks.fallback)
            res = doa_error(peaks.angles_deg, truth)
            sq.extend(res.matched_errors_deg**2)
            ab.extend(res.matched_errors_deg)
        rows.append((float(snr_db), method, float(np.mean(sq)), float(np.median(ab)), len(test), fallbacks))
    return rows


def cmd_doa(cfg: dict, out_dir, checkpoint=None, snr_list=None) -> Run:
    cfg = with_overrides(cfg, doa_snr_list=None if snr_list is None else [float(v) for v in snr_list])
    snr_list = cfg["experiments"]["doa_snr_list"]
    if not snr_list:
        raise ConfigError("doa_snr_list is empty")
    methods = cfg["experiments"]["methods"]
    run = Run("doa", cfg, out_dir)
    params = hmap = None
    if "ihtnet" in methods:
        path = resolve_checkpoint(cfg, out_dir, checkpoint)
        params, hmap = load_model(cfg, path)
        run.extra["checkpoint_sha256"] = sha256_file(path)
    hmap = hmap or build_index_map(array_config(cfg))
    rows = []
    for snr in snr_list:
        rows += doa_rows(cfg, float(snr), methods, params, hmap)
    run.csv(
        "doa_mse.csv",
        ["snr_db", "method", "mse_deg2", "median_abs_error_deg", "n_samples", "fallback_count"],
        rows,
    )
    run.finish()
    return run


def cmd_solve(cfg: dict, out_dir, algo=None, sample=None, snr_db=None) -> Run:
    cfg = with_overrides(cfg, solve_algo=algo, solve_sample=sample, solve_snr_db=snr_db)
    e = cfg["experiments"]
    algo = e["solve_algo"]
    if algo not in SOLVERS:
        raise ConfigError(f"unknown algorithm {algo!r}")
    sample, snr_db = int(e["solve_sample"]), float(e["solve_snr_db"])
    run = Run("solve", cfg, out_dir)
    config = array_config(cfg)
    hmap = build_index_map(config)
    clean, _, masked, _ = held_out_sample(cfg, sample, snr_db)
    trace = SOLVERS[algo](masked, solver_config(cfg), hmap)
    rec = trace.reconstruction.values
    run.csv(
        "trace.csv",
        ["iteration", "residual", "change"],
        [(i, r, c) for i, (r, c) in enumerate(zip(trace.residuals, trace.changes), start=1)],
    )
    run.csv(
        "reconstruction.csv",
        ["element", "observed", "real", "imag", "truth_real", "truth_imag"],
        [
            (t + 1, int(config.mask[t]), rec[t].real, rec[t].imag, clean[t].real, clean[t].imag)
            for t in range(config.m)
        ],
    )
    run.extra["solver"] = {
        "algo": algo,
        "sample": sample,
        "snr_db": snr_db,
        "converged": trace.converged,
        "iterations": trace.iterations_used,
        "relative_error": float(np.linalg.norm(rec - clean) / np.linalg.norm(clean)),
    }
    run.finish()
    return run


def cmd_pipeline(cfg: dict, out_dir) -> list:
    """generate, train, sweep-snr, spectrum and doa in sequence."""
    runs = [cmd_generate(cfg, out_dir), cmd_train(cfg, out_dir)]
    runs += [cmd_sweep_snr(cfg, out_dir), cmd_spectrum(cfg, out_dir), cmd_doa(cfg, out_dir)]
    return runs

