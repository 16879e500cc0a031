"""Single-snapshot array signal model: ULA synthesis, SLA masking, noise, datasets.

Element indices in :class:`ArrayConfig.omega` are 1-based, matching the usual
array-processing notation; every array returned by this module is 0-based.

Randomness
----------
All draws use numpy's ``Philox`` counter-based bit generator. A sample's
stream is keyed by ``SeedSequence(master_seed, spawn_key=(index,))`` so any
sample can be regenerated in isolation and the dataset does not depend on the
order (or parallelism) in which samples are produced.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

FOV_DEG = (-60.0, 60.0)
AMPLITUDE_RANGE = (0.5, 1.0)

SNAPSHOT_KINDS = ("full_clean", "full_noisy", "masked", "reconstructed")


def sample_rng(seed: int, index: int | None = None) -> np.random.Generator:
    """Philox generator keyed by ``(seed, index)``."""
    if index is None:
        ss = np.random.SeedSequence(int(seed))
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return sample_rng(seed)


@dataclass(frozen=True)
class ArrayConfig:
    """ULA geometry plus the SLA observation set.

    Parameters
    ----------
    m : int
        Number of ULA elements.
    omega : sequence of int, optional
        Observed (SLA) element indices, 1-based and strictly increasing.
        Defaults to the full array.
    spacing_ratio : float
        Element spacing over wavelength, d / lambda.
    """

    m: int
    omega: tuple[int, ...] = ()
    spacing_ratio: float = 0.5

    def __post_init__(self):
        m = int(self.m)
        if m < 1:
            raise ValueError(f"m must be positive, got {self.m}")
        object.__setattr__(self, "m", m)
        omega = tuple(int(i) for i in self.omega) or tuple(range(1, m + 1))
        if any(b <= a for a, b in zip(omega, omega[1:])):
            raise ValueError("omega must be strictly increasing")
        if omega[0] < 1 or omega[-1] > m:
            raise ValueError(f"omega must be a subset of 1..{m}")
        object.__setattr__(self, "omega", omega)
        if not self.spacing_ratio > 0:
            raise ValueError("spacing_ratio must be positive")
        object.__setattr__(self, "spacing_ratio", float(self.spacing_ratio))

    @property
    def mask(self) -> np.ndarray:
        """Boolean observation mask, 0-based, length m."""
        mask = np.zeros(self.m, dtype=bool)
        mask[np.asarray(self.omega) - 1] = True
        return mask

    @property
    def n_observed(self) -> int:
        return len(self.omega)


def random_sla(m: int, n_elements: int, seed: int, spacing_ratio: float = 0.5) -> ArrayConfig:
    """Seeded random SLA that keeps both end elements (aperture preserved)."""
    if not 2 <= n_elements <= m:
        raise ValueError(f"n_elements must lie in [2, {m}]")
    rng = sample_rng(seed)
    interior = np.arange(2, m)
    keep = rng.choice(interior, size=n_elements - 2, replace=False)
    omega = sorted([1, m, *keep.tolist()])
    return ArrayConfig(m=m, omega=tuple(omega), spacing_ratio=spacing_ratio)


@dataclass(frozen=True)
class SourceSet:
    angles_deg: np.ndarray
    amplitudes: np.ndarray
    phases_rad: np.ndarray

    def __post_init__(self):
        for name in ("angles_deg", "amplitudes", "phases_rad"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float)).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        p = len(self.angles_deg)
        if p == 0:
            raise ValueError("a source set needs at least one source")
        if len(self.amplitudes) != p or len(self.phases_rad) != p:
            raise ValueError("angles, amplitudes and phases must share a length")

    @property
    def p(self) -> int:
        return len(self.angles_deg)

    @property
    def complex_amplitudes(self) -> np.ndarray:
        return self.amplitudes * np.exp(1j * self.phases_rad)


@dataclass(frozen=True)
class Snapshot:
    """A complex length-m array output, tagged by provenance."""

    values: np.ndarray
    kind: str = "full_clean"

    def __post_init__(self):
        if self.kind not in SNAPSHOT_KINDS:
            raise ValueError(f"unknown snapshot kind {self.kind!r}")
        values = np.asarray(self.values, dtype=complex).copy()
        if values.ndim != 1:
            raise ValueError("snapshot values must be a 1-D vector")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _values(x) -> np.ndarray:
    return np.asarray(x.values if isinstance(x, Snapshot) else x, dtype=complex)


def steering_vector(config: ArrayConfig, theta_deg) -> np.ndarray:
    """ULA response ``exp(j 2 pi (d/lambda) k sin(theta))``, k = 0..m-1.

    A scalar angle gives shape (m,); an array of P angles gives (m, P).
    """
    theta = np.asarray(theta_deg, dtype=float)
    k = np.arange(config.m)
    phase = 2 * np.pi * config.spacing_ratio * np.multiply.outer(k, np.sin(np.deg2rad(theta)))
    return np.exp(1j * phase)


def synthesize(config: ArrayConfig, sources: SourceSet) -> Snapshot:
    """Noiseless full-array snapshot ``x = A s``."""
    a = steering_vector(config, sources.angles_deg)
    return Snapshot(a @ sources.complex_amplitudes, "full_clean")


def noise_variance(x, snr_db: float) -> float:
    x = _values(x)
    power = np.mean(np.abs(x) ** 2)
    return float(power / 10 ** (snr_db / 10))


def add_noise(x, snr_db: float, seed) -> Snapshot:
    """Add circular complex white Gaussian noise at ``snr_db``.

    The SNR is measured against the snapshot's own mean power. ``snr_db=inf``
    returns the input unchanged. ``seed`` is an int or a ``np.random.Generator``.
    """
    values = _values(x)
    if not np.any(values):
        raise ValueError("SNR is undefined for an all-zero snapshot")
    if np.isposinf(snr_db):
        return Snapshot(values, "full_noisy")
    rng = _as_rng(seed)
    sigma2 = noise_variance(values, snr_db)
    noise = rng.standard_normal(values.shape) + 1j * rng.standard_normal(values.shape)
    return Snapshot(values + np.sqrt(sigma2 / 2) * noise, "full_noisy")


def apply_mask(x, config: ArrayConfig) -> Snapshot:
    values = _values(x)
    if len(values) != config.m:
        raise ValueError(f"snapshot length {len(values)} does not match m={config.m}")
    return Snapshot(np.where(config.mask, values, 0), "masked")


def draw_sources(
    rng: np.random.Generator,
    p: int,
    fov_deg: tuple[float, float] = FOV_DEG,
    min_separation_deg: float = 0.0,
    max_tries: int = 10_000,
) -> SourceSet:
    """Uniform angles in the FoV, amplitudes in [0.5, 1], phases in [0, 2 pi)."""
    if p < 1:
        raise ValueError("p must be at least 1")
    for _ in range(max_tries):
        angles = rng.uniform(*fov_deg, size=p)
        if p == 1 or np.min(np.diff(np.sort(angles))) >= min_separation_deg:
            break
    else:
        raise ValueError("could not satisfy min_separation_deg; lower it or p")
    amplitudes = rng.uniform(*AMPLITUDE_RANGE, size=p)
    phases = rng.uniform(0.0, 2 * np.pi, size=p)
    return SourceSet(angles, amplitudes, phases)


@dataclass(frozen=True)
class Dataset(Sequence):
    """Paired (clean label, noisy masked input) snapshots.

    Behaves as a sequence of ``(label, input)`` :class:`Snapshot` pairs; the
    stacked complex arrays and the per-sample draws are available directly.
    """

    config: ArrayConfig
    labels: np.ndarray
    inputs: np.ndarray
    angles_deg: np.ndarray
    snr_db: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return Snapshot(self.labels[i], "full_clean"), Snapshot(self.inputs[i], "masked")

    def __iter__(self) -> Iterator[tuple[Snapshot, Snapshot]]:
        for i in range(len(self)):
            yield self[i]


def generate_sample(
    config: ArrayConfig,
    p: int,
    snr_range_db: tuple[float, float],
    seed: int,
    index: int,
    min_separation_deg: float = 0.0,
):
    """Draw sample ``index`` of the stream keyed by ``seed``.

    Returns ``(label, input, sources, snr_db)``.
    """
    rng = sample_rng(seed, index)
    sources = draw_sources(rng, p, min_separation_deg=min_separation_deg)
    lo, hi = snr_range_db
    snr = float(lo) if lo == hi else float(rng.uniform(lo, hi))
    label = synthesize(config, sources)
    noisy = add_noise(label, snr, rng)
    return label, apply_mask(noisy, config), sources, snr


def generate_dataset(
    config: ArrayConfig,
    count: int,
    p: int,
    snr_range_db: tuple[float, float] = (10.0, 30.0),
    seed: int = 0,
    min_separation_deg: float = 0.0,
) -> Dataset:
    """Noiseless labels and noisy-then-masked inputs, reproducible from ``seed``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    if p < 1:
        raise ValueError("p must be at least 1")
    labels = np.empty((count, config.m), dtype=complex)
    inputs = np.empty((count, config.m), dtype=complex)
    angles = np.empty((count, p))
    snrs = np.empty(count)
    for i in range(count):
        label, inp, sources, snr = generate_sample(
            config, p, snr_range_db, seed, i, min_separation_deg
        )
        labels[i] = label.values
        inputs[i] = inp.values
        angles[i] = sources.angles_deg
        snrs[i] = snr
    meta = {
        "seed": int(seed),
        "count": int(count),
        "p": int(p),
        "snr_range_db": [float(snr_range_db[0]), float(snr_range_db[1])],
        "min_separation_deg": float(min_separation_deg),
    }
    return Dataset(config, labels, inputs, angles, snrs, meta)
