"""Binary checkpoint and dataset formats (specified in docs/FORMATS.md)."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .array_signal import ArrayConfig, Dataset
from .hankel_ops import HankelIndexMap, build_index_map
from .net import N_LINEAR, NetParams

MAGIC = b"IHTN"
CHECKPOINT_VERSION = 1
DATASET_VERSION = 1
_F8 = np.dtype("<f8")


class FormatError(ValueError):
    """A file does not follow the documented layout."""


def _phase_shapes(enc_n: int, dec_n: int) -> list:
    shapes = []
    for n in (enc_n, dec_n):
        shapes += [(n, n), (n,)] * N_LINEAR
    return shapes + [(), ()]


def checkpoint_header(params: NetParams, hmap: HankelIndexMap) -> dict:
    return {
        "m": hmap.m,
        "omega": list(hmap.omega),
        "n1": hmap.n1,
        "n2": hmap.n2,
        "k_phases": params.k_phases,
        "flatten_order": hmap.flatten_order,
        "residual_mode": params.residual_mode,
        "encoder_width": len(hmap.phi),
        "decoder_width": 2 * hmap.hankel_size,
    }


def checkpoint_bytes(params: NetParams, hmap: HankelIndexMap) -> bytes:
    header = json.dumps(checkpoint_header(params, hmap), sort_keys=True).encode()
    expected = _phase_shapes(len(hmap.phi), 2 * hmap.hankel_size) * (params.k_phases + 1)
    tensors = params.tensors()
    for t, shape in zip(tensors, expected):
        if np.shape(t) != shape:
            raise FormatError(f"tensor shape {np.shape(t)} does not match {shape}")
    body = b"".join(np.ascontiguousarray(t, dtype=_F8).tobytes() for t in tensors)
    return MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(header)) + header + body


def save_checkpoint(path, params: NetParams, hmap: HankelIndexMap) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(params, hmap))
    tmp.replace(path)


def load_checkpoint(path):
    """Returns ``(params, hmap, header)``."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise FormatError("missing IHTN magic bytes")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    header = json.loads(data[12 : 12 + hlen].decode())
    config = ArrayConfig(header["m"], tuple(header["omega"]))
    hmap = build_index_map(config)
    if (hmap.n1, hmap.n2) != (header["n1"], header["n2"]):
        raise FormatError("header Hankel shape disagrees with m")
    shapes = _phase_shapes(len(hmap.phi), 2 * hmap.hankel_size) * (header["k_phases"] + 1)
    offset = 12 + hlen
    total = sum(int(np.prod(s, dtype=int)) for s in shapes)
    if len(data) != offset + 8 * total:
        raise FormatError("trailing or missing tensor bytes")
    tensors = []
    for shape in shapes:
        count = int(np.prod(shape, dtype=int))
        arr = np.frombuffer(data, dtype=_F8, count=count, offset=offset).reshape(shape)
        tensors.append(arr.astype(float))
        offset += 8 * count
    return NetParams.from_tensors(tensors, header["residual_mode"]), hmap, header


def save_dataset(directory, dataset: Dataset) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cfg = dataset.config
    manifest = {
        "format_version": DATASET_VERSION,
        "config": {"m": cfg.m, "omega": list(cfg.omega), "spacing_ratio": cfg.spacing_ratio},
        **dataset.meta,
        "layout": "count x (2m label ‖ 2m input), real parts then imaginary, <f8",
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    rows = np.concatenate(
        [dataset.labels.real, dataset.labels.imag, dataset.inputs.real, dataset.inputs.imag], axis=1
    )
    (directory / "data.bin").write_bytes(np.ascontiguousarray(rows, dtype=_F8).tobytes())
    truth = np.concatenate([dataset.angles_deg, dataset.snr_db[:, None]], axis=1)
    (directory / "truth.bin").write_bytes(np.ascontiguousarray(truth, dtype=_F8).tobytes())


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format_version") != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {manifest.get('format_version')}")
    c = manifest["config"]
    config = ArrayConfig(c["m"], tuple(c["omega"]), c["spacing_ratio"])
    m, count, p = config.m, manifest["count"], manifest["p"]
    rows = np.frombuffer((directory / "data.bin").read_bytes(), dtype=_F8)
    if rows.size != count * 4 * m:
        raise FormatError("data.bin size does not match the manifest")
    rows = rows.reshape(count, 4 * m)
    labels = rows[:, :m] + 1j * rows[:, m : 2 * m]
    inputs = rows[:, 2 * m : 3 * m] + 1j * rows[:, 3 * m :]
    truth_path = directory / "truth.bin"
    if truth_path.exists():
        truth = np.frombuffer(truth_path.read_bytes(), dtype=_F8).reshape(count, p + 1)
        angles, snr = truth[:, :p].copy(), truth[:, p].copy()
    else:
        angles, snr = np.full((count, p), np.nan), np.full(count, np.nan)
    meta = {k: manifest[k] for k in ("seed", "count", "p", "snr_range_db", "min_separation_deg") if k in manifest}
    return Dataset(config, labels, inputs, angles, snr, meta)
