"""Model-based Hankel completion: IHT and its tangent-space accelerated FIHT."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .array_signal import Snapshot
from .hankel_ops import HankelIndexMap, inverse, lift
from .lowrank import (
    RankFactorization,
    tangent_project,
    truncate_tangent,
    truncated_svd,
)

RESIDUAL_MODES = ("masked", "literal")


@dataclass(frozen=True)
class SolverConfig:
    """Iteration settings shared by IHT and FIHT.

    ``residual_mode="masked"`` uses ``mask * (x_s - x)`` as the data-fit
    direction; ``"literal"`` uses ``x_s - x`` everywhere, which also drags the
    unobserved entries toward zero.
    """

    rank_r: int = 2
    step_beta: float = 1.0
    max_iters: int = 500
    rel_tol: float = 1e-8
    residual_mode: str = "masked"
    structured: bool = True

    def __post_init__(self):
        if self.rank_r < 1:
            raise ValueError("rank_r must be at least 1")
        if not self.step_beta >= 0:
            raise ValueError("step_beta must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.residual_mode not in RESIDUAL_MODES:
            raise ValueError(f"residual_mode must be one of {RESIDUAL_MODES}")


@dataclass
class SolverTrace:
    residuals: list = field(default_factory=list)
    changes: list = field(default_factory=list)
    reconstruction: Snapshot | None = None
    converged: bool = False

    @property
    def iterations_used(self) -> int:
        return len(self.changes)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "residual", "change"])
            for i, (res, chg) in enumerate(zip(self.residuals, self.changes), start=1):
                writer.writerow([i, repr(float(res)), repr(float(chg))])


def _observed(x_s):
    return np.asarray(x_s.values if isinstance(x_s, Snapshot) else x_s, dtype=complex)


def residual(x, x_s, mask, mode: str = "masked") -> np.ndarray:
    diff = x_s - x
    return diff * mask if mode == "masked" else diff


def gradient_point(x_i, x_s, cfg: SolverConfig, hmap: HankelIndexMap) -> np.ndarray:
    """The vector ``x_i + beta * res`` that gets lifted and truncated."""
    x_s = _observed(x_s)
    return x_i + cfg.step_beta * residual(x_i, x_s, hmap.mask, cfg.residual_mode)


def iht_step(x_i, x_s, cfg: SolverConfig, hmap: HankelIndexMap) -> np.ndarray:
    X = lift(gradient_point(np.asarray(x_i, dtype=complex), x_s, cfg, hmap), hmap)
    return inverse(truncated_svd(X, cfg.rank_r).matrix(), hmap)


def _spectral_factorization(x_s, cfg, hmap) -> RankFactorization:
    return truncated_svd(lift(_observed(x_s), hmap), cfg.rank_r)


def spectral_init(x_s, cfg: SolverConfig, hmap: HankelIndexMap) -> np.ndarray:
    """One hard threshold of the lifted observation, ``H^+(T_r(H(x_s)))``."""
    return inverse(_spectral_factorization(x_s, cfg, hmap).matrix(), hmap)


def _record(trace, x_new, x_old, x_s, mask):
    scale = max(np.linalg.norm(x_s), np.finfo(float).tiny)
    trace.residuals.append(np.linalg.norm((x_new - x_s)[mask]) / scale)
    trace.changes.append(
        np.linalg.norm(x_new - x_old) / max(np.linalg.norm(x_old), np.finfo(float).tiny)
    )


def iht_solve(x_s, cfg: SolverConfig, hmap: HankelIndexMap) -> SolverTrace:
    x_s = _observed(x_s)
    mask = hmap.mask
    x = spectral_init(x_s, cfg, hmap)
    trace = SolverTrace()
    for _ in range(cfg.max_iters):
        x_new = iht_step(x, x_s, cfg, hmap)
        _record(trace, x_new, x, x_s, mask)
        x = x_new
        if trace.changes[-1] < cfg.rel_tol:
            trace.converged = True
            break
    trace.reconstruction = Snapshot(x, "reconstructed")
    return trace


def fiht_step(x_i, basis, x_s, cfg: SolverConfig, hmap: HankelIndexMap):
    """One FIHT update; returns the new vector and its rank-r factorization."""
    G = lift(gradient_point(np.asarray(x_i, dtype=complex), x_s, cfg, hmap), hmap)
    if cfg.structured:
        fac = truncate_tangent(G, basis, cfg.rank_r)
    else:
        fac = truncated_svd(tangent_project(G, basis), cfg.rank_r)
    return inverse(fac.matrix(), hmap), fac


def fiht_solve(x_s, cfg: SolverConfig, hmap: HankelIndexMap) -> SolverTrace:
    x_s = _observed(x_s)
    mask = hmap.mask
    basis = _spectral_factorization(x_s, cfg, hmap)
    x = inverse(basis.matrix(), hmap)
    trace = SolverTrace()
    for _ in range(cfg.max_iters):
        x_new, basis = fiht_step(x, basis, x_s, cfg, hmap)
        _record(trace, x_new, x, x_s, mask)
        x = x_new
        if trace.changes[-1] < cfg.rel_tol:
            trace.converged = True
            break
    trace.reconstruction = Snapshot(x, "reconstructed")
    return trace


SOLVERS = {"iht": iht_solve, "fiht": fiht_solve}


def complete_batch(X_s, cfg: SolverConfig, hmap: HankelIndexMap, algo: str = "fiht") -> np.ndarray:
    """Run a solver independently on each row of ``X_s`` (n_samples, m)."""
    try:
        solve = SOLVERS[algo]
    except KeyError:
        raise ValueError(f"unknown algorithm {algo!r}; choose from {sorted(SOLVERS)}") from None
    X_s = np.atleast_2d(np.asarray(X_s, dtype=complex))
    return np.stack([solve(row, cfg, hmap).reconstruction.values for row in X_s])
