"""Fixed-length utterance embeddings with cosine and linear-SVM backends.

The embedding is a stand-in for i-vectors: a background GMM is MAP-adapted
(means only) to each utterance, the adapted mean supervector is centred on
the training mean and projected onto its leading principal directions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .features import fit_normalizer, mean_variance_normalize
from .gmm import EmConfig, GmmModel, e_step, train_gmm


@dataclass(eq=False)
class EmbeddingExtractor:
    ubm: GmmModel
    relevance: float
    projection: np.ndarray        # (K*D, E), orthonormal columns
    projection_mean: np.ndarray   # (K*D,)
    seed: int | None = None
    fingerprint: str = ""

    @property
    def dims(self) -> int:
        return self.projection.shape[1]

    def to_dict(self):
        return {"ubm": self.ubm.to_dict(), "relevance": self.relevance,
                "projection": self.projection.tolist(),
                "projection_mean": self.projection_mean.tolist(),
                "seed": self.seed, "fingerprint": self.fingerprint}

    @classmethod
    def from_dict(cls, d):
        return cls(GmmModel.from_dict(d["ubm"]), float(d["relevance"]),
                   np.array(d["projection"], dtype=float),
                   np.array(d["projection_mean"], dtype=float),
                   d.get("seed"), d.get("fingerprint", ""))


def canonical_frame_order(features: np.ndarray) -> np.ndarray:
    """Rows sorted lexicographically, so accumulations ignore frame order."""
    features = np.asarray(features, dtype=float)
    order = np.lexsort(features.T[::-1])
    return features[order]


def map_supervector(ubm: GmmModel, features: np.ndarray, relevance: float) -> np.ndarray:
    """Relevance-MAP adapted means, flattened component-major."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("need at least one frame to embed")
    x = canonical_frame_order(features)
    resp, _ = e_step(ubm, x)
    occ = resp.sum(axis=0)
    first = resp.T @ x
    adapted = (first + relevance * ubm.means) / (occ + relevance)[:, None]
    return adapted.ravel()


def pca_basis(centered: np.ndarray, n_dims: int) -> np.ndarray:
    """Leading principal directions of the rows of ``centered`` (p x n_dims).

    Uses the n x n Gram matrix (n utterances << p supervector entries).
    Equal eigenvalues keep index order; each direction's largest-magnitude
    entry is made positive.
    """
    gram = centered @ centered.T
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(-evals, kind="stable")
    evals, evecs = evals[order], evecs[:, order]
    rank = int(np.sum(evals > evals[0] * 1e-10)) if evals[0] > 0 else 0
    if n_dims > rank:
        raise ValueError(f"requested {n_dims} dimensions, supervector covariance has "
                         f"rank {rank}")
    basis = centered.T @ evecs[:, :n_dims] / np.sqrt(evals[:n_dims])
    # re-orthonormalise against round-off
    basis, r = np.linalg.qr(basis)
    basis *= np.sign(np.diag(r))
    pivots = np.argmax(np.abs(basis), axis=0)
    basis *= np.sign(basis[pivots, np.arange(n_dims)])
    return basis


def train_embedding_extractor(features_list, n_ubm: int = 64, n_dims: int = 100,
                              seed: int = 0, relevance: float = 16.0,
                              max_ubm_frames: int = 60000,
                              em: EmConfig = EmConfig(), fingerprint: str = "") -> EmbeddingExtractor:
    features_list = [np.asarray(f, dtype=float) for f in features_list]
    pooled = np.vstack(features_list)
    rng = np.random.default_rng(seed)
    if pooled.shape[0] > max_ubm_frames:
        pooled = pooled[np.sort(rng.choice(pooled.shape[0], max_ubm_frames, replace=False))]
    ubm = train_gmm(pooled, n_ubm, seed, em)
    supervectors = np.array([map_supervector(ubm, f, relevance) for f in features_list])
    mean = supervectors.mean(axis=0)
    basis = pca_basis(supervectors - mean, n_dims)
    return EmbeddingExtractor(ubm, relevance, basis, mean, seed, fingerprint)


def embed_utterance(extractor: EmbeddingExtractor, features: np.ndarray) -> np.ndarray:
    sv = map_supervector(extractor.ubm, features, extractor.relevance)
    return (sv - extractor.projection_mean) @ extractor.projection


# ---------------------------------------------------------------------------
# cosine backend

def cosine(x: np.ndarray, y: np.ndarray) -> float:
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise ValueError("cosine similarity of a zero-norm vector")
    return float(np.dot(x, y) / (nx * ny))


def cosine_backend_score(test, bona_mean, spoof_mean) -> float:
    return cosine(test, bona_mean) - cosine(test, spoof_mean)


@dataclass(eq=False)
class CosineModel:
    extractor: EmbeddingExtractor
    bona_mean: np.ndarray
    spoof_mean: np.ndarray

    def score(self, features) -> float:
        return cosine_backend_score(embed_utterance(self.extractor, features),
                                    self.bona_mean, self.spoof_mean)

    def to_dict(self):
        return {"kind": "cosine", "extractor": self.extractor.to_dict(),
                "bona_mean": self.bona_mean.tolist(), "spoof_mean": self.spoof_mean.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(EmbeddingExtractor.from_dict(d["extractor"]),
                   np.array(d["bona_mean"]), np.array(d["spoof_mean"]))


# ---------------------------------------------------------------------------
# linear SVM (Pegasos)

@dataclass(eq=False)
class LinearSvm:
    weights: np.ndarray
    bias: float
    lam: float
    mean: np.ndarray
    std: np.ndarray
    objective_trace: list | None = None

    def decision(self, embeddings) -> np.ndarray:
        z = mean_variance_normalize(np.atleast_2d(embeddings), self.mean, self.std)
        return z @ self.weights + self.bias

    def to_dict(self):
        return {"weights": self.weights.tolist(), "bias": self.bias, "lam": self.lam,
                "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["weights"]), float(d["bias"]), float(d["lam"]),
                   np.array(d["mean"]), np.array(d["std"]))


def svm_objective(w_aug: np.ndarray, z_aug: np.ndarray, y: np.ndarray, lam: float) -> float:
    margins = y * (z_aug @ w_aug)
    return 0.5 * lam * float(w_aug @ w_aug) + float(np.mean(np.maximum(0.0, 1.0 - margins)))


def train_linear_svm(embeddings, labels, lam: float = 1e-3, epochs: int = 50,
                     seed: int = 0, track_objective: bool = False) -> LinearSvm:
    """Pegasos subgradient descent on the regularised hinge loss.

    ``labels`` are +1 (bonafide) / -1 (spoof).  Inputs are mean-variance
    normalised with training statistics; the bias is an extra constant input
    (regularised like the weights).  Each epoch visits the samples in a
    seeded random order with step 1/(lam*t), followed by projection onto the
    ball of radius 1/sqrt(lam).
    """
    x = np.asarray(embeddings, dtype=float)
    y = np.asarray(labels, dtype=float)
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise ValueError("linear SVM training needs both classes (+1 and -1)")
    mean, std = fit_normalizer(x)
    z = mean_variance_normalize(x, mean, std)
    z_aug = np.hstack([z, np.ones((z.shape[0], 1))])
    n, d = z_aug.shape
    w = np.zeros(d)
    rng = np.random.default_rng(seed)
    radius = 1.0 / np.sqrt(lam)
    trace = [] if track_objective else None
    t = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_obj = []
        for i in order:
            t += 1
            eta = 1.0 / (lam * t)
            margin = y[i] * (z_aug[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * y[i] * z_aug[i]
            norm = np.linalg.norm(w)
            if norm > radius:
                w *= radius / norm
            if track_objective:
                epoch_obj.append(svm_objective(w, z_aug, y, lam))
        if track_objective:
            trace.append(float(np.mean(epoch_obj)))
    return LinearSvm(w[:-1].copy(), float(w[-1]), lam, mean, std, trace)


def svm_score(model: LinearSvm, embedding) -> float:
    embedding = np.asarray(embedding, dtype=float)
    if embedding.shape[-1] != model.weights.shape[0]:
        raise ValueError(f"embedding has {embedding.shape[-1]} dims, SVM expects "
                         f"{model.weights.shape[0]}")
    return float(model.decision(embedding)[0])


@dataclass(eq=False)
class SvmModel:
    extractor: EmbeddingExtractor
    svm: LinearSvm

    def score(self, features) -> float:
        return svm_score(self.svm, embed_utterance(self.extractor, features))

    def to_dict(self):
        return {"kind": "svm", "extractor": self.extractor.to_dict(), "svm": self.svm.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(EmbeddingExtractor.from_dict(d["extractor"]), LinearSvm.from_dict(d["svm"]))


def save_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj.to_dict(), fh)
