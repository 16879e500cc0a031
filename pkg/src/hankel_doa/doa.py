"""Beamforming spectra, peak picking and permutation-matched DOA error."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .array_signal import FOV_DEG, ArrayConfig, Snapshot, steering_vector


@dataclass(frozen=True)
class Spectrum:
    grid_deg: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        if len(self.grid_deg) != np.shape(self.power)[-1]:
            raise ValueError("grid and power lengths differ")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["angle_deg", "power"])
            for a, p in zip(self.grid_deg, self.power):
                writer.writerow([f"{a:.4f}", repr(float(p))])


class Peaks(NamedTuple):
    angles_deg: np.ndarray
    fallback: bool


@dataclass(frozen=True)
class DoaResult:
    estimates_deg: np.ndarray
    matched_errors_deg: np.ndarray
    mse_deg2: float


def angle_grid(step_deg: float = 0.1, fov_deg=FOV_DEG) -> np.ndarray:
    if not step_deg > 0:
        raise ValueError("grid step must be positive")
    lo, hi = fov_deg
    n = int(round((hi - lo) / step_deg)) + 1
    return np.linspace(lo, hi, n)


def beamform(x, config: ArrayConfig, grid_step_deg: float = 0.1) -> Spectrum:
    """Conventional beamformer ``|a(theta)^H x|^2 / m^2`` over the FoV.

    ``x`` may be a single snapshot or an (n, m) batch; a batch yields a 2-D
    ``power`` array with one row per snapshot.
    """
    values = np.asarray(x.values if isinstance(x, Snapshot) else x, dtype=complex)
    grid = angle_grid(grid_step_deg)
    A = steering_vector(config, grid)
    power = np.abs(values @ A.conj()) ** 2 / config.m**2
    return Spectrum(grid, power)


def find_peaks(spectrum: Spectrum, p: int) -> Peaks:
    """The ``p`` strongest strict interior local maxima, strongest first.

    Missing peaks are padded with the global maximum and ``fallback`` is set.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    power = np.asarray(spectrum.power, dtype=float)
    if power.size == 0:
        raise ValueError("empty spectrum")
    grid = np.asarray(spectrum.grid_deg)
    interior = np.flatnonzero((power[1:-1] > power[:-2]) & (power[1:-1] > power[2:])) + 1
    order = interior[np.argsort(-power[interior], kind="stable")][:p]
    fallback = len(order) < p
    if fallback:
        order = np.concatenate([order, np.full(p - len(order), np.argmax(power))])
    return Peaks(grid[order], fallback)


def doa_error(estimates, truth) -> DoaResult:
    """Assign estimates to truth by the permutation with least squared error."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError("estimates and truth must have equal lengths")
    best = None
    for perm in itertools.permutations(range(len(est))):
        err = est[list(perm)] - tru
        sse = float(np.sum(err**2))
        if best is None or sse < best[0]:
            best = (sse, perm, err)
    _, perm, err = best
    return DoaResult(est[list(perm)], np.abs(err), float(np.mean(err**2)))


def estimate_doa(x, config: ArrayConfig, p: int, grid_step_deg: float = 0.1) -> Peaks:
    return find_peaks(beamform(x, config, grid_step_deg), p)
