"""Loss, reverse-mode gradients of the IHT-Net graph, Adam, and the training loop."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .array_signal import sample_rng
from .hankel_ops import HankelIndexMap
from .io import save_checkpoint
from .net import NetParams, forward, init_params, mlp_backward, operators

log = logging.getLogger(__name__)


class NumericalError(ArithmeticError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 256
    lr0: float = 1e-4
    lr_decay: float = 0.5
    decay_every: int = 10
    alpha: float = 0.01
    seed: int = 0
    k_phases: int = 8
    init_noise: float = 1e-2

    def __post_init__(self):
        for name in ("epochs", "batch_size", "decay_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.lr0 < 0 or self.lr_decay <= 0:
            raise ValueError("learning rate settings must be non-negative")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.k_phases < 0:
            raise ValueError("k_phases must be non-negative")

    def learning_rate(self, epoch: int) -> float:
        """Rate for 1-based ``epoch``: halved (by default) every ``decay_every`` epochs."""
        return self.lr0 * self.lr_decay ** ((epoch - 1) // self.decay_every)


@dataclass(frozen=True)
class LossValue:
    total: float
    loss1: float
    loss2: float


def loss(trace, label, alpha: float) -> LossValue:
    """Reconstruction MSE plus ``alpha`` times the autoencoder-consistency MSE.

    Both terms are normalised per sample and per stacked vector entry; the
    consistency term is additionally averaged over the K+1 phases.
    """
    y = np.atleast_2d(np.asarray(label, dtype=float))
    n = y.size
    loss1 = float(np.sum((trace.output - y) ** 2) / n)
    terms = [np.sum((xt - tg) ** 2) for xt, tg in zip(trace.x_tilde, trace.consistency_target)]
    loss2 = float(np.sum(terms) / (n * len(terms)))
    return LossValue(loss1 + alpha * loss2, loss1, loss2)


def backward(trace, label, params: NetParams, hmap: HankelIndexMap, alpha: float) -> list:
    """Exact gradient of the total loss; same ordering as ``params.tensors()``."""
    ops = operators(hmap)
    y = np.atleast_2d(np.asarray(label, dtype=float))
    n = y.size
    n_terms = len(trace.x_tilde)
    c2 = 2.0 * alpha / (n * n_terms)
    grads = []

    g = 2.0 * (trace.output - y) / n
    for k in range(len(params.phases) - 1, -1, -1):
        phase = params.phases[k]
        x_tilde = trace.x_tilde[k]
        diff2 = x_tilde - trace.consistency_target[k]
        if k == 0:
            d_beta = float(np.sum(g * x_tilde))
            d_gamma = 0.0
            g_tilde = phase.beta * g + c2 * diff2
        else:
            d_gamma = float(np.sum(g * diff2))
            g_tilde = (1.0 + phase.gamma) * g + c2 * diff2
            g_prev = -phase.gamma * g - c2 * diff2

        cache = trace.caches[k]
        g_emb, dec_dw, dec_db = mlp_backward(g_tilde @ ops.inverse, phase.dec_w, cache.dec)
        g_obs, enc_dw, enc_db = mlp_backward(g_emb[:, ops.phi], phase.enc_w, cache.enc)

        if k > 0:
            g_Y = np.zeros((g_obs.shape[0], ops.lift.shape[0]))
            g_Y[:, ops.phi] = g_obs
            g_u = g_Y @ ops.lift
            res = trace.residuals[k - 1]
            d_beta = float(np.sum(g_u * res))
            if params.residual_mode == "masked":
                g_prev = g_prev + g_u - phase.beta * ops.mask * g_u
            else:
                g_prev = g_prev + (1.0 - phase.beta) * g_u
            g = g_prev

        phase_grads = []
        for dws, dbs in ((enc_dw, enc_db), (dec_dw, dec_db)):
            for dw, db in zip(dws, dbs):
                phase_grads += [dw, db]
        phase_grads += [np.array(d_beta), np.array(d_gamma)]
        grads[:0] = phase_grads
    return grads


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, tensors, **hyper):
        zeros = [np.zeros(np.shape(t)) for t in tensors]
        return cls(zeros, [z.copy() for z in zeros], **hyper)


def adam_step(tensors, grads, state: AdamState, lr: float):
    """Bias-corrected Adam update. Returns new tensors; ``state`` is updated in place."""
    if len(tensors) != len(grads) or len(tensors) != len(state.m):
        raise ValueError("parameter, gradient and state counts differ")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    out = []
    for p, g, m, v in zip(tensors, grads, state.m, state.v):
        # in place on the moments; same operation order as the textbook form
        g = np.asarray(g, dtype=float)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        denom = np.sqrt(v / bc2)
        denom += state.eps
        step = lr * (m / bc1)
        step /= denom
        out.append(p - step)
    return out


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss_total: float
    loss1: float
    loss2: float
    wall_seconds: float


@dataclass
class TrainResult:
    params: NetParams
    history: list = field(default_factory=list)
    adam: AdamState | None = None

    def loss1_history(self) -> np.ndarray:
        return np.array([r.loss1 for r in self.history])


HISTORY_FIELDS = ["epoch", "lr", "loss_total", "loss1", "loss2", "wall_seconds"]


def write_history(history, path, include_time: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_FIELDS)
        for rec in history:
            row = asdict(rec)
            row["wall_seconds"] = f"{rec.wall_seconds:.3f}" if include_time else ""
            writer.writerow([row["epoch"], repr(rec.lr), repr(rec.loss_total), repr(rec.loss1), repr(rec.loss2), row["wall_seconds"]])


def stack(x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    return np.concatenate([x.real, x.imag], axis=-1)


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return sample_rng(seed, 1_000_000 + epoch).permutation(n)


def train(
    inputs,
    labels,
    hmap: HankelIndexMap,
    cfg: TrainConfig,
    params: NetParams | None = None,
    residual_mode: str = "masked",
    checkpoint_dir=None,
    resume: bool = False,
) -> TrainResult:
    """Mini-batch Adam on complex masked ``inputs`` and clean ``labels`` (n, m).

    With ``checkpoint_dir`` set, the model and optimizer state are written
    after every epoch; ``resume=True`` continues from the latest saved epoch.
    """
    xs, ys = stack(inputs), stack(labels)
    if len(xs) == 0:
        raise ValueError("empty training set")
    if xs.shape != ys.shape or xs.shape[1] != 2 * hmap.m:
        raise ValueError("inputs and labels must both have shape (n, m)")

    start_epoch = 1
    if params is None:
        params = init_params_for(hmap, cfg, residual_mode)
    tensors = params.tensors()
    adam = AdamState.zeros_like(tensors)
    history: list[EpochRecord] = []
    if resume and checkpoint_dir is not None and (Path(checkpoint_dir) / "train_state.npz").exists():
        params, adam, history = load_train_state(checkpoint_dir)
        tensors = params.tensors()
        start_epoch = len(history) + 1
    mode = params.residual_mode

    for epoch in range(start_epoch, cfg.epochs + 1):
        t0 = time.perf_counter()
        lr = cfg.learning_rate(epoch)
        order = epoch_order(len(xs), cfg.seed, epoch)
        sums = np.zeros(3)
        for start in range(0, len(xs), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            current = NetParams.from_tensors(tensors, mode)
            trace = forward(xs[idx], current, hmap)
            value = loss(trace, ys[idx], cfg.alpha)
            if not math.isfinite(value.total):
                if checkpoint_dir is not None:
                    save_checkpoint(Path(checkpoint_dir) / "diverged.ihtn", current, hmap)
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch offset {start}")
            grads = backward(trace, ys[idx], current, hmap, cfg.alpha)
            tensors = adam_step(tensors, grads, adam, lr)
            sums += len(idx) * np.array([value.total, value.loss1, value.loss2])
        means = sums / len(xs)
        rec = EpochRecord(epoch, lr, *map(float, means), time.perf_counter() - t0)
        history.append(rec)
        log.info("epoch %d lr %.3g loss1 %.6g loss2 %.6g", epoch, lr, rec.loss1, rec.loss2)
        params = NetParams.from_tensors(tensors, mode)
        if checkpoint_dir is not None:
            Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
            save_checkpoint(Path(checkpoint_dir) / "model.ihtn", params, hmap)
            save_train_state(checkpoint_dir, params, adam, history)
    return TrainResult(NetParams.from_tensors(tensors, mode), history, adam)


def init_params_for(hmap, cfg: TrainConfig, residual_mode="masked") -> NetParams:
    return init_params(hmap, cfg.k_phases, seed=cfg.seed, noise_scale=cfg.init_noise, residual_mode=residual_mode)


def save_train_state(directory, params: NetParams, adam: AdamState, history) -> None:
    """Optimizer moments and history needed to resume bit-exactly."""
    arrays = {f"p{i}": t for i, t in enumerate(params.tensors())}
    arrays.update({f"m{i}": t for i, t in enumerate(adam.m)})
    arrays.update({f"v{i}": t for i, t in enumerate(adam.v)})
    hist = np.array([[r.epoch, r.lr, r.loss_total, r.loss1, r.loss2, r.wall_seconds] for r in history])
    path = Path(directory) / "train_state.npz"
    tmp = path.with_suffix(".tmp.npz")
    np.savez(
        tmp,
        step=np.array(adam.step),
        n=np.array(len(adam.m)),
        history=hist.reshape(-1, len(HISTORY_FIELDS)),
        residual_mode=np.array(params.residual_mode),
        **arrays,
    )
    tmp.replace(path)


def load_train_state(directory):
    with np.load(Path(directory) / "train_state.npz") as z:
        n = int(z["n"])
        params = NetParams.from_tensors([z[f"p{i}"] for i in range(n)], str(z["residual_mode"]))
        adam = AdamState([z[f"m{i}"] for i in range(n)], [z[f"v{i}"] for i in range(n)], int(z["step"]))
        history = [
            EpochRecord(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]), float(r[5]))
            for r in z["history"]
        ]
    return params, adam, history


def evaluate_loss1(inputs, labels, params: NetParams, hmap: HankelIndexMap, batch_size: int = 1024) -> float:
    """Mean reconstruction loss (per sample, per stacked entry) over a test set."""
    xs, ys = stack(inputs), stack(labels)
    total = 0.0
    for start in range(0, len(xs), batch_size):
        out = forward(xs[start : start + batch_size], params, hmap).output
        total += float(np.sum((out - ys[start : start + batch_size]) ** 2))
    return total / ys.size
