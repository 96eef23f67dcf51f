"""Score models: a from-scratch logistic regression and a synthetic oracle."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_softmax, softmax


@dataclass(frozen=True)
class LogisticHyper:
    learning_rate: float = 0.1
    epochs: int = 60
    l2: float = 1e-4
    batch_size: int = 100
    decay_every: int = 20
    decay_rate: float = 0.5


@dataclass(frozen=True)
class LinearModel:
    """One sigmoid head for K=2, K one-vs-rest heads otherwise.

    ``weights`` has shape (heads, d + 1); the last column is the intercept.
    """

    weights: np.ndarray
    K: int
    degenerate: bool = False
    training_meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.weights.shape[1] - 1


@dataclass(frozen=True)
class OracleScoreModel:
    """Distorted view of the true class posterior.

    Scores are softmax(gamma * log p + noise_sigma * z) with z a fixed
    standard-normal draw per (unit, class) keyed by ``seed``.
    """

    noise_sigma: float = 0.0
    miscalibration_gamma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.miscalibration_gamma <= 0:
            raise ValueError("miscalibration_gamma must be > 0")


def _design(X):
    X = np.asarray(X, dtype=np.float64)
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _targets(y, K):
    y = np.asarray(y, dtype=np.int64)
    if K == 2:
        return (y == 1).astype(np.float64)[:, None]
    return (y[:, None] == np.arange(K)[None, :]).astype(np.float64)


def logistic_loss_and_grad(W, X, Y, l2=0.0):
    """Mean binary log-loss summed over heads, plus its gradient.

    ``X`` already carries the intercept column; the intercept is not penalised.
    """
    Z = X @ W.T
    # log(1 + e^z) - y z, stable
    loss = np.mean(np.sum(np.logaddexp(0.0, Z) - Y * Z, axis=1))
    G = (expit(Z) - Y).T @ X / X.shape[0]
    pen = W.copy()
    pen[:, -1] = 0.0
    loss += 0.5 * l2 * np.sum(pen * pen)
    G += l2 * pen
    return float(loss), G


def train_logistic(X, y, K=2, hyper=None, rng=None) -> LinearModel:
    """Mini-batch gradient descent with step decay.

    A single-class training set yields a degenerate model emitting uniform
    scores.
    """
    hyper = hyper or LogisticHyper()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError("need a non-empty 2-D feature matrix matching the labels")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    heads = 1 if K == 2 else K
    d = X.shape[1]
    if len(np.unique(y)) < 2:
        return LinearModel(weights=np.zeros((heads, d + 1)), K=K, degenerate=True,
                           training_meta={"iterations": 0, "final_loss": float("nan"),
                                          "optimizer": "none (single-class labeled set)"})
    rng = rng if rng is not None else np.random.default_rng(0)
    Xd = _design(X)
    Y = _targets(y, K)
    W = np.zeros((heads, d + 1))
    n = len(y)
    bs = n if not hyper.batch_size else min(hyper.batch_size, n)
    lr = hyper.learning_rate
    losses = []
    steps = 0
    for epoch in range(hyper.epochs):
        if hyper.decay_every and epoch and epoch % hyper.decay_every == 0:
            lr *= hyper.decay_rate
        order = rng.permutation(n) if bs < n else np.arange(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            _, G = logistic_loss_and_grad(W, Xd[idx], Y[idx], hyper.l2)
            W -= lr * G
            steps += 1
        losses.append(logistic_loss_and_grad(W, Xd, Y, hyper.l2)[0])
    return LinearModel(weights=W, K=K, training_meta={
        "iterations": steps, "epochs": hyper.epochs,
        "final_loss": losses[-1] if losses else float("nan"), "loss_history": losses,
        "optimizer": "mini-batch gradient descent with step decay",
    })


def _linear_scores(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.d:
        raise ValueError(f"model expects {model.d} features, got {X.shape[-1]}")
    if model.degenerate:
        return np.full((len(X), model.K), 1.0 / model.K)
    P = expit(_design(X) @ model.weights.T)
    if model.K == 2:
        p = P[:, 0]
        return np.column_stack([1.0 - p, p])
    total = P.sum(axis=1, keepdims=True)
    return P / np.where(total > 0, total, 1.0)


def _oracle_scores(model, pool):
    if pool.true_probs is None:
        raise ValueError("oracle scores need a pool with true class probabilities")
    P = np.asarray(pool.true_probs, dtype=np.float64)
    logp = np.log(np.clip(P, 1e-300, 1.0))
    logits = model.miscalibration_gamma * logp
    if model.noise_sigma > 0:
        z = np.random.default_rng(model.seed).standard_normal(P.shape)
        logits = logits + model.noise_sigma * z
    return softmax(logits, axis=1)


def predict_scores(model, pool) -> np.ndarray:
    """Score vectors for every unit of the pool, labeled or not."""
    if isinstance(model, OracleScoreModel):
        return _oracle_scores(model, pool)
    features = pool.features if hasattr(pool, "features") else pool
    if features is None:
        raise ValueError("pool has no features")
    if model.K != getattr(pool, "K", model.K):
        raise ValueError("model and pool disagree on the number of classes")
    return _linear_scores(model, features)


def gaussian_posterior(X, means, sigma, priors):
    """Class posterior for isotropic Gaussians with a shared sigma."""
    X = np.asarray(X, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    sq = ((X[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    logits = -0.5 * sq / sigma**2 + np.log(np.clip(priors, 1e-300, None))[None, :]
    return np.exp(log_softmax(logits, axis=1))
