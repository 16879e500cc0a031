"""IHT-Net forward pass on real/imag-stacked vectors.

Every phase uses the same autoencoder block: gather the Hankel vector at the
observed positions ``phi``, run the encoder (width ``2|Theta|``), scatter back
into a zero Hankel vector, run the decoder (width ``2 n1 n2``) and average
anti-diagonals. Each encoder/decoder is linear-ReLU-linear-ReLU-linear.

Phase 0 (initialization layer) scales the decoder output by ``beta0``. Phases
1..K first take a gradient step ``x + beta_k * res`` and finish with the skip
combination ``x_tilde + gamma_k * (x_tilde - x)``.

All functions operate on batches: vectors are rows of 2-D arrays.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .hankel_ops import HankelIndexMap

N_LINEAR = 3


@dataclass
class PhaseParams:
    enc_w: list
    enc_b: list
    dec_w: list
    dec_b: list
    beta: float
    gamma: float = 0.0

    def tensors(self) -> list:
        """Arrays in checkpoint order: enc W,b x3, dec W,b x3, beta, gamma."""
        out = []
        for ws, bs in ((self.enc_w, self.enc_b), (self.dec_w, self.dec_b)):
            for w, b in zip(ws, bs):
                out += [w, b]
        return out + [np.array(float(self.beta)), np.array(float(self.gamma))]

    @classmethod
    def from_tensors(cls, arrays):
        arrays = list(arrays)
        if len(arrays) != 4 * N_LINEAR + 2:
            raise ValueError("wrong number of phase tensors")
        enc, dec = arrays[: 2 * N_LINEAR], arrays[2 * N_LINEAR : 4 * N_LINEAR]
        return cls(
            enc_w=list(enc[0::2]),
            enc_b=list(enc[1::2]),
            dec_w=list(dec[0::2]),
            dec_b=list(dec[1::2]),
            beta=float(arrays[-2]),
            gamma=float(arrays[-1]),
        )


@dataclass
class NetParams:
    phases: list
    residual_mode: str = "masked"

    @property
    def k_phases(self) -> int:
        return len(self.phases) - 1

    @property
    def beta0(self) -> float:
        return self.phases[0].beta

    def tensors(self) -> list:
        return [t for ph in self.phases for t in ph.tensors()]

    @classmethod
    def from_tensors(cls, arrays, residual_mode: str = "masked"):
        arrays = list(arrays)
        per = 4 * N_LINEAR + 2
        if len(arrays) % per:
            raise ValueError("tensor count is not a whole number of phases")
        phases = [PhaseParams.from_tensors(arrays[i : i + per]) for i in range(0, len(arrays), per)]
        return cls(phases, residual_mode)

    def copy(self) -> "NetParams":
        return NetParams.from_tensors([np.array(t, copy=True) for t in self.tensors()], self.residual_mode)


def init_params(
    hmap: HankelIndexMap,
    k_phases: int = 8,
    seed: int = 0,
    noise_scale: float = 1e-2,
    residual_mode: str = "masked",
) -> NetParams:
    """Identity-plus-noise weights, zero biases, beta0 = 1, beta_k = 0.5, gamma_k = 0."""
    if k_phases < 0:
        raise ValueError("k_phases must be non-negative")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    enc_n, dec_n = len(hmap.phi), 2 * hmap.hankel_size

    def block(n):
        ws = [np.eye(n) + rng.uniform(-noise_scale, noise_scale, (n, n)) for _ in range(N_LINEAR)]
        return ws, [np.zeros(n) for _ in range(N_LINEAR)]

    phases = []
    for k in range(k_phases + 1):
        enc_w, enc_b = block(enc_n)
        dec_w, dec_b = block(dec_n)
        phases.append(PhaseParams(enc_w, enc_b, dec_w, dec_b, beta=1.0 if k == 0 else 0.5))
    return NetParams(phases, residual_mode)


@dataclass(frozen=True, eq=False)
class Operators:
    """Dense stacked operators for one index map."""

    lift: np.ndarray  # (2 n1 n2, 2m)
    inverse: np.ndarray  # (2m, 2 n1 n2)
    phi: np.ndarray
    mask: np.ndarray  # stacked (2m,) float 0/1


@functools.lru_cache(maxsize=32)
def operators(hmap: HankelIndexMap) -> Operators:
    mask = hmap.mask.astype(float)
    return Operators(
        hmap.stacked_lift_matrix(),
        hmap.stacked_inverse_matrix(),
        np.asarray(hmap.phi),
        np.concatenate([mask, mask]),
    )


def _relu(z):
    return np.maximum(z, 0.0)


def mlp_forward(x, ws, bs):
    """Returns the output and the cache ``[(input, pre_activation), ...]``."""
    cache = []
    h = x
    for layer, (w, b) in enumerate(zip(ws, bs)):
        z = h @ w.T + b
        cache.append((h, z))
        h = _relu(z) if layer < len(ws) - 1 else z
    return h, cache


def mlp_backward(grad_out, ws, cache):
    """Returns ``(grad_input, [dW...], [db...])``."""
    dws, dbs = [None] * len(ws), [None] * len(ws)
    g = grad_out
    for layer in reversed(range(len(ws))):
        h, z = cache[layer]
        if layer < len(ws) - 1:
            g = g * (z > 0)
        dws[layer] = g.T @ h
        dbs[layer] = g.sum(axis=0)
        g = g @ ws[layer]
    return g, dws, dbs


@dataclass
class BlockCache:
    enc: list
    dec: list


def autoencoder(Y, phase: PhaseParams, ops: Operators):
    """Hankel vector -> (decoder output, anti-diagonal average, cache)."""
    enc_out, enc_cache = mlp_forward(Y[:, ops.phi], phase.enc_w, phase.enc_b)
    embedded = np.zeros_like(Y)
    embedded[:, ops.phi] = enc_out
    dec_out, dec_cache = mlp_forward(embedded, phase.dec_w, phase.dec_b)
    return dec_out, dec_out @ ops.inverse.T, BlockCache(enc_cache, dec_cache)


@dataclass
class ForwardTrace:
    """Per-phase quantities for the loss and the backward pass.

    ``x_hat[k]`` is the signal after phase k (0 = initialization layer) and
    ``x_tilde[k]`` the autoencoder output of phase k before the beta0 scale or
    skip mix. ``consistency_target[k]`` is what ``x_tilde[k]`` is compared to in
    the autoencoder-consistency loss.
    """

    x_s: np.ndarray
    x_hat: list = field(default_factory=list)
    x_tilde: list = field(default_factory=list)
    consistency_target: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    caches: list = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.x_hat[-1]


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def init_layer(x_s_stacked, phase: PhaseParams, hmap: HankelIndexMap):
    """Initialization layer; returns ``(x_hat0, x_tilde0, consistency_target0, cache)``."""
    ops = operators(hmap)
    xs = _as_batch(x_s_stacked)
    Y = xs @ ops.lift.T
    _, x_tilde, cache = autoencoder(Y, phase, ops)
    observed = np.zeros_like(Y)
    observed[:, ops.phi] = Y[:, ops.phi]
    target = observed @ ops.inverse.T
    return phase.beta * x_tilde, x_tilde, target, cache


def phase_residual(x_hat, x_s_stacked, hmap: HankelIndexMap, residual_mode: str = "masked"):
    diff = _as_batch(x_s_stacked) - _as_batch(x_hat)
    return diff * operators(hmap).mask if residual_mode == "masked" else diff


def gradient_module(x_hat, x_s_stacked, beta: float, hmap: HankelIndexMap, residual_mode: str = "masked"):
    """Stacked Hankel vector of ``x_hat + beta * res``."""
    ops = operators(hmap)
    res = phase_residual(x_hat, x_s_stacked, hmap, residual_mode)
    return (_as_batch(x_hat) + beta * res) @ ops.lift.T


def lowrank_module(X_hat, x_hat, phase: PhaseParams, hmap: HankelIndexMap):
    """Autoencoder plus skip; returns ``(x_hat_next, x_tilde, cache)``."""
    _, x_tilde, cache = autoencoder(_as_batch(X_hat), phase, operators(hmap))
    x_next = x_tilde + phase.gamma * (x_tilde - _as_batch(x_hat))
    return x_next, x_tilde, cache


def forward(x_s_stacked, params: NetParams, hmap: HankelIndexMap) -> ForwardTrace:
    xs = _as_batch(x_s_stacked)
    trace = ForwardTrace(xs)
    x_hat, x_tilde, target, cache = init_layer(xs, params.phases[0], hmap)
    trace.x_hat.append(x_hat)
    trace.x_tilde.append(x_tilde)
    trace.consistency_target.append(target)
    trace.caches.append(cache)
    for phase in params.phases[1:]:
        res = phase_residual(x_hat, xs, hmap, params.residual_mode)
        X_hat = gradient_module(x_hat, xs, phase.beta, hmap, params.residual_mode)
        x_next, x_tilde, cache = lowrank_module(X_hat, x_hat, phase, hmap)
        trace.residuals.append(res)
        trace.consistency_target.append(x_hat)
        trace.x_tilde.append(x_tilde)
        trace.caches.append(cache)
        trace.x_hat.append(x_next)
        x_hat = x_next
    return trace


def predict(x_s, params: NetParams, hmap: HankelIndexMap, batch_size: int = 1024) -> np.ndarray:
    """Complex reconstructions for complex masked inputs of shape (n, m) or (m,)."""
    x_s = np.asarray(x_s, dtype=complex)
    single = x_s.ndim == 1
    rows = np.atleast_2d(x_s)
    stacked = np.concatenate([rows.real, rows.imag], axis=1)
    out = np.concatenate(
        [forward(stacked[i : i + batch_size], params, hmap).output for i in range(0, len(stacked), batch_size)]
    )
    m = hmap.m
    result = out[:, :m] + 1j * out[:, m:]
    return result[0] if single else result
