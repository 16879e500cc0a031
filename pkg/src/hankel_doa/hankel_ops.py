"""Hankel lift, its anti-diagonal-averaging inverse, and observed-entry indexing.

Conventions (also fixed in docs/FORMATS.md):

* ``H(x)[i, j] = x[i + j]`` (0-based), shape ``(n1, n2)`` with ``n1 + n2 = m + 1``.
* A *Hankel vector* is ``[vec(H(Re x)), vec(H(Im x))]`` with row-major ``vec``,
  length ``2 * n1 * n2``.
* ``phi`` lists the positions of observed entries in that vector, ascending
  within the real segment and then within the imaginary segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array_signal import ArrayConfig


def hankel_shape(m: int) -> tuple[int, int]:
    """Near-square Hankel shape: n1 = n2 for odd m, n2 = n1 + 1 for even m."""
    n1 = (m + 1) // 2 if m % 2 else m // 2
    return n1, m + 1 - n1


@dataclass(frozen=True, eq=False)
class HankelIndexMap:
    m: int
    n1: int
    n2: int
    omega: tuple[int, ...]
    theta: frozenset
    phi: np.ndarray
    anti_diag_len: np.ndarray
    flatten_order: str = "row-major"

    @property
    def n_theta(self) -> int:
        return len(self.theta)

    @property
    def hankel_size(self) -> int:
        return self.n1 * self.n2

    @property
    def mask(self) -> np.ndarray:
        mask = np.zeros(self.m, dtype=bool)
        mask[np.asarray(self.omega) - 1] = True
        return mask

    @property
    def source_index(self) -> np.ndarray:
        """Signal index feeding each row-major Hankel position."""
        i, j = np.indices((self.n1, self.n2))
        return (i + j).ravel()

    def stacked_lift_matrix(self) -> np.ndarray:
        """Real matrix L, shape (2 n1 n2, 2m), with ``L @ stack(x) = hankel_vector(x)``."""
        return _stacked_lift_matrix(self)

    def stacked_inverse_matrix(self) -> np.ndarray:
        """Real matrix A, shape (2m, 2 n1 n2), segment-wise anti-diagonal averaging."""
        return _stacked_inverse_matrix(self)


def build_index_map(config: ArrayConfig) -> HankelIndexMap:
    m = config.m
    n1, n2 = hankel_shape(m)
    observed = set(i - 1 for i in config.omega)
    theta = frozenset(
        (i, j) for i in range(n1) for j in range(n2) if (i + j) in observed
    )
    i, j = np.indices((n1, n2))
    flat_observed = np.flatnonzero(np.isin((i + j).ravel(), sorted(observed)))
    phi = np.concatenate([flat_observed, flat_observed + n1 * n2])
    phi.flags.writeable = False
    anti = np.bincount((i + j).ravel(), minlength=m)
    anti.flags.writeable = False
    return HankelIndexMap(m, n1, n2, tuple(config.omega), theta, phi, anti)


def lift(x, hmap: HankelIndexMap) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[-1] != hmap.m:
        raise ValueError(f"expected length {hmap.m}, got {x.shape[-1]}")
    i, j = np.indices((hmap.n1, hmap.n2))
    return x[..., i + j]


def inverse(X, hmap: HankelIndexMap) -> np.ndarray:
    """Anti-diagonal averaging: the left inverse (and pseudo-inverse) of :func:`lift`."""
    X = np.asarray(X)
    if X.shape[-2:] != (hmap.n1, hmap.n2):
        raise ValueError(f"expected shape {(hmap.n1, hmap.n2)}, got {X.shape[-2:]}")
    flat = X.reshape(X.shape[:-2] + (-1,))
    sums = np.zeros(X.shape[:-2] + (hmap.m,), dtype=np.result_type(X, float))
    np.add.at(sums, (..., hmap.source_index), flat)
    return sums / hmap.anti_diag_len


def extract_observed(v, hmap: HankelIndexMap) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[-1] != 2 * hmap.hankel_size:
        raise ValueError(f"expected Hankel vector of length {2 * hmap.hankel_size}")
    return v[..., hmap.phi]


def embed_observed(u, hmap: HankelIndexMap) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != len(hmap.phi):
        raise ValueError(f"expected length {len(hmap.phi)}, got {u.shape[-1]}")
    out = np.zeros(u.shape[:-1] + (2 * hmap.hankel_size,))
    out[..., hmap.phi] = u
    return out


def complex_to_stacked(x) -> np.ndarray:
    x = np.asarray(x)
    return np.concatenate([x.real, x.imag], axis=-1).astype(float)


def stacked_to_complex(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] % 2:
        raise ValueError("stacked vector must have even length")
    half = v.shape[-1] // 2
    return v[..., :half] + 1j * v[..., half:]


def hankel_vector(x, hmap: HankelIndexMap) -> np.ndarray:
    """Stacked real/imag, row-major flattened Hankel vector of complex ``x``."""
    H = lift(np.asarray(x), hmap)
    flat = H.reshape(H.shape[:-2] + (-1,))
    return np.concatenate([flat.real, flat.imag], axis=-1).astype(float)


def _stacked_lift_matrix(hmap):
    nn, m = hmap.hankel_size, hmap.m
    L = np.zeros((2 * nn, 2 * m))
    rows = np.arange(nn)
    src = hmap.source_index
    L[rows, src] = 1.0
    L[rows + nn, src + m] = 1.0
    return L


def _stacked_inverse_matrix(hmap):
    nn, m = hmap.hankel_size, hmap.m
    A = np.zeros((2 * m, 2 * nn))
    cols = np.arange(nn)
    src = hmap.source_index
    w = 1.0 / hmap.anti_diag_len[src]
    A[src, cols] = w
    A[src + m, cols + nn] = w
    return A
