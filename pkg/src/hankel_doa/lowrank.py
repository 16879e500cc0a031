"""Rank-r truncation and the fixed-rank manifold tangent projector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SVDConvergenceError(ArithmeticError):
    """The dense SVD did not converge."""


@dataclass(frozen=True)
class RankFactorization:
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.sigma)

    def matrix(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.conj().T


def _check_rank(shape, r):
    if not 1 <= r <= min(shape):
        raise ValueError(f"rank {r} outside [1, {min(shape)}] for shape {shape}")


def truncated_svd(X, r: int) -> RankFactorization:
    """The ``r`` dominant singular triplets of ``X`` (LAPACK ``gesdd``)."""
    X = np.asarray(X)
    _check_rank(X.shape, r)
    if not np.all(np.isfinite(X)):
        raise SVDConvergenceError("matrix has non-finite entries")
    try:
        u, s, vh = np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SVDConvergenceError(str(exc)) from exc
    return RankFactorization(u[:, :r], s[:r], vh[:r].conj().T)


def project_fixed_rank(X, r: int) -> np.ndarray:
    return truncated_svd(X, r).matrix()


def tangent_project(X, basis: RankFactorization) -> np.ndarray:
    """``P_T(X) = U U^H X + X V V^H - U U^H X V V^H`` at the point spanned by ``basis``."""
    X = np.asarray(X)
    U, V = basis.u, basis.v
    if X.shape != (U.shape[0], V.shape[0]):
        raise ValueError(f"shape {X.shape} does not match basis {(U.shape[0], V.shape[0])}")
    UhX = U.conj().T @ X
    XV = X @ V
    return U @ UhX + XV @ V.conj().T - U @ (UhX @ V) @ V.conj().T


def truncate_tangent(X, basis: RankFactorization, r: int) -> RankFactorization:
    """Rank-r truncation of ``P_T(X)`` through its 2r x 2r core.

    ``P_T(X) = [U Q1] [[U^H X V, R2^H], [R1, 0]] [V Q2]^H`` where
    ``Q1 R1 = (I - U U^H) X V`` and ``Q2 R2 = (I - V V^H) X^H U``.
    """
    X = np.asarray(X)
    U, V = basis.u, basis.v
    _check_rank(X.shape, r)
    XV = X @ V
    XhU = X.conj().T @ U
    core_uv = U.conj().T @ XV
    Q1, R1 = np.linalg.qr(XV - U @ core_uv)
    Q2, R2 = np.linalg.qr(XhU - V @ core_uv.conj().T)
    k = U.shape[1]
    core = np.zeros((k + R1.shape[0], k + R2.shape[0]), dtype=np.result_type(X, U, complex))
    core[:k, :k] = core_uv
    core[:k, k:] = R2.conj().T
    core[k:, :k] = R1
    small = truncated_svd(core, min(r, *core.shape))
    left = np.hstack([U, Q1]) @ small.u
    right = np.hstack([V, Q2]) @ small.v
    return RankFactorization(left, small.sigma, right)
