"""scikit-learn style wrappers around the solvers and IHT-Net.

Both estimators take complex snapshots of shape (n_samples, m), zero at the
unobserved elements, and return full-array reconstructions.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .array_signal import ArrayConfig
from ._validation import check_array_config, check_snapshots
from .hankel_ops import build_index_map
from .io import load_checkpoint, save_checkpoint
from .net import predict as net_predict
from .solvers import SOLVERS, SolverConfig, complete_batch
from .training import TrainConfig, evaluate_loss1, train


class HankelCompleter(TransformerMixin, BaseEstimator):
    """Low-rank Hankel completion by IHT or FIHT.

    Parameters
    ----------
    array_config : ArrayConfig or int
        Array geometry; an integer means a fully observed ULA of that size.
    algo : {"fiht", "iht"}
    rank : int
        Target rank, normally the number of sources.
    step_beta, max_iters, rel_tol, residual_mode
        Passed to :class:`SolverConfig`.

    Notes
    -----
    ``fit`` only validates settings; completion is per-sample and has no
    learned state.
    """

    def __init__(
        self,
        array_config=21,
        algo="fiht",
        rank=2,
        step_beta=1.0,
        max_iters=500,
        rel_tol=1e-8,
        residual_mode="masked",
    ):
        self.array_config = array_config
        self.algo = algo
        self.rank = rank
        self.step_beta = step_beta
        self.max_iters = max_iters
        self.rel_tol = rel_tol
        self.residual_mode = residual_mode

    def _solver_config(self) -> SolverConfig:
        return SolverConfig(
            rank_r=self.rank,
            step_beta=self.step_beta,
            max_iters=self.max_iters,
            rel_tol=self.rel_tol,
            residual_mode=self.residual_mode,
        )

    def fit(self, X=None, y=None):
        if self.algo not in SOLVERS:
            raise ValueError(f"algo must be one of {sorted(SOLVERS)}")
        config = check_array_config(self.array_config)
        self.solver_config_ = self._solver_config()
        self.index_map_ = build_index_map(config)
        self.n_features_in_ = config.m
        if X is not None:
            check_snapshots(X, config.m)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "index_map_")
        X = check_snapshots(X, self.n_features_in_)
        return complete_batch(X, self.solver_config_, self.index_map_, self.algo)


class IHTNetRegressor(BaseEstimator):
    """Trainable unrolled IHT network mapping masked snapshots to full ones.

    Parameters
    ----------
    array_config : ArrayConfig or int
        Geometry the network is bound to; fixes the encoder width.
    k_phases : int
        Number of unrolled phases after the initialization layer.
    epochs, batch_size, lr0, lr_decay, decay_every, alpha, seed, init_noise
        Training settings, see :class:`TrainConfig`.
    residual_mode : {"masked", "literal"}
    checkpoint_dir : path or None
        If set, the model and optimizer state are saved after every epoch.

    Attributes
    ----------
    params_ : NetParams
    history_ : list of EpochRecord
    index_map_ : HankelIndexMap
    """

    def __init__(
        self,
        array_config=21,
        k_phases=8,
        epochs=30,
        batch_size=256,
        lr0=1e-4,
        lr_decay=0.5,
        decay_every=10,
        alpha=0.01,
        seed=0,
        init_noise=1e-2,
        residual_mode="masked",
        checkpoint_dir=None,
    ):
        self.array_config = array_config
        self.k_phases = k_phases
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr0 = lr0
        self.lr_decay = lr_decay
        self.decay_every = decay_every
        self.alpha = alpha
        self.seed = seed
        self.init_noise = init_noise
        self.residual_mode = residual_mode
        self.checkpoint_dir = checkpoint_dir

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr0=self.lr0,
            lr_decay=self.lr_decay,
            decay_every=self.decay_every,
            alpha=self.alpha,
            seed=self.seed,
            k_phases=self.k_phases,
            init_noise=self.init_noise,
        )

    def fit(self, X, y):
        """Train from scratch on masked inputs ``X`` and clean full labels ``y``."""
        config = check_array_config(self.array_config)
        X = check_snapshots(X, config.m)
        y = check_snapshots(y, config.m, name="y")
        if len(X) != len(y):
            raise ValueError("X and y have different numbers of samples")
        self.index_map_ = build_index_map(config)
        result = train(
            X,
            y,
            self.index_map_,
            self.train_config(),
            residual_mode=self.residual_mode,
            checkpoint_dir=self.checkpoint_dir,
        )
        self.params_ = result.params
        self.history_ = result.history
        self.n_features_in_ = config.m
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        return net_predict(check_snapshots(X, self.n_features_in_), self.params_, self.index_map_)

    def score(self, X, y) -> float:
        """Negative mean squared error over stacked real/imag parts (higher is better)."""
        check_is_fitted(self, "params_")
        X = check_snapshots(X, self.n_features_in_)
        y = check_snapshots(y, self.n_features_in_, name="y")
        return -evaluate_loss1(X, y, self.params_, self.index_map_)

    def save(self, path) -> None:
        check_is_fitted(self, "params_")
        save_checkpoint(path, self.params_, self.index_map_)

    @classmethod
    def from_checkpoint(cls, path, **kwargs) -> "IHTNetRegressor":
        """A fitted estimator holding the weights stored at ``path``."""
        params, hmap, header = load_checkpoint(path)
        est = cls(
            array_config=ArrayConfig(hmap.m, hmap.omega),
            k_phases=header["k_phases"],
            residual_mode=header["residual_mode"],
            **kwargs,
        )
        est.index_map_ = hmap
        est.params_ = params
        est.history_ = []
        est.n_features_in_ = hmap.m
        return est
