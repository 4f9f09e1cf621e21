"""Diagonal-covariance Gaussian mixtures trained by EM, and the LLR score."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


class GmmTrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 50
    tol: float = 1e-4               # nats per frame
    variance_floor_ratio: float = 1e-3


@dataclass(eq=False)
class GmmModel:
    weights: np.ndarray     # (K,)
    means: np.ndarray       # (K, D)
    variances: np.ndarray   # (K, D)
    seed: int | None = None
    history: list = field(default_factory=list)  # mean log-likelihood per EM iteration

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dims(self) -> int:
        return self.means.shape[1]

    def component_log_densities(self, frames: np.ndarray) -> np.ndarray:
        """log w_k + log N(x_t; mu_k, diag var_k), shape (T, K)."""
        frames = np.atleast_2d(np.asarray(frames, dtype=float))
        if frames.shape[1] != self.dims:
            raise ValueError(f"frame dimension {frames.shape[1]} != model dimension {self.dims}")
        prec = 1.0 / self.variances
        const = -0.5 * (self.dims * LOG_2PI + np.sum(np.log(self.variances), axis=1)
                        + np.sum(self.means ** 2 * prec, axis=1))
        quad = -0.5 * (frames ** 2) @ prec.T + frames @ (self.means * prec).T
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return quad + const + logw

    def frame_log_likelihood(self, frames: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_log_densities(frames), axis=1)

    def to_dict(self) -> dict:
        return {"K": self.n_components, "D": self.dims,
                "weights": self.weights.tolist(), "means": self.means.tolist(),
                "variances": self.variances.tolist(), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "GmmModel":
        model = cls(np.array(d["weights"], dtype=float),
                    np.array(d["means"], dtype=float).reshape(d["K"], d["D"]),
                    np.array(d["variances"], dtype=float).reshape(d["K"], d["D"]),
                    d.get("seed"))
        return model


def gmm_log_likelihood(model: GmmModel, frame: np.ndarray) -> float:
    frame = np.asarray(frame, dtype=float)
    if frame.ndim != 1:
        raise ValueError("expected a single D-vector")
    return float(model.frame_log_likelihood(frame[None, :])[0])


def e_step(model: GmmModel, frames: np.ndarray):
    """Responsibilities (T, K) and per-frame log-likelihoods."""
    logp = model.component_log_densities(frames)
    ll = logsumexp(logp, axis=1)
    return np.exp(logp - ll[:, None]), ll


def train_gmm(frames: np.ndarray, n_components: int, seed: int,
              config: EmConfig = EmConfig()) -> GmmModel:
    """EM for a diagonal GMM with random-frame initialisation.

    Means start at K distinct randomly chosen frames, variances at the
    global per-dimension variance, weights uniform.  Variances are floored
    at ``variance_floor_ratio`` times the global variance after every M-step.
    """
    x = np.asarray(frames, dtype=float)
    n, d = x.shape
    k = n_components
    if n < 10 * k:
        raise GmmTrainingError(f"{n} frames is fewer than 10 x {k} components")
    rng = np.random.default_rng(seed)
    global_var = x.var(axis=0)
    floor = np.maximum(config.variance_floor_ratio * global_var, 1e-12)

    model = GmmModel(np.full(k, 1.0 / k), x[rng.choice(n, size=k, replace=False)].copy(),
                     np.tile(np.maximum(global_var, floor), (k, 1)), seed)
    x_sq = x ** 2
    prev = -np.inf
    for it in range(config.max_iters):
        resp, ll = e_step(model, x)
        mean_ll = float(ll.mean())
        if not np.isfinite(mean_ll):
            raise GmmTrainingError(f"non-finite log-likelihood at iteration {it}; "
                                   f"min frame ll {ll.min()}")
        model.history.append(mean_ll)
        if mean_ll - prev < config.tol:
            break
        prev = mean_ll

        occ = resp.sum(axis=0)
        live = occ > 1e-10 * n
        first = resp.T @ x
        second = resp.T @ x_sq
        means = model.means.copy()
        variances = model.variances.copy()
        means[live] = first[live] / occ[live, None]
        variances[live] = second[live] / occ[live, None] - means[live] ** 2
        model.means = means
        model.variances = np.maximum(variances, floor)
        model.weights = occ / occ.sum()
    log.debug("GMM K=%d trained, %d iterations, final ll %.4f", k, len(model.history),
              model.history[-1])
    return model


@dataclass(eq=False)
class GmmPairModel:
    bonafide: GmmModel
    spoof: GmmModel
    fingerprint: str = ""

    def __post_init__(self):
        if self.bonafide.dims != self.spoof.dims:
            raise ValueError("bonafide and spoof models disagree on dimension")

    def to_dict(self):
        return {"kind": "gmm", "fingerprint": self.fingerprint,
                "bonafide": self.bonafide.to_dict(), "spoof": self.spoof.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(GmmModel.from_dict(d["bonafide"]), GmmModel.from_dict(d["spoof"]),
                   d.get("fingerprint", ""))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def score_llr(pair: GmmPairModel, features: np.ndarray) -> float:
    """Average frame log-likelihood ratio, bonafide minus spoof."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("score_llr needs at least one frame")
    # canonical row order makes the score bit-identical under frame shuffles
    x = features[np.lexsort(features.T[::-1])]
    return float(pair.bonafide.frame_log_likelihood(x).mean()
                 - pair.spoof.frame_log_likelihood(x).mean())
