"""Countermeasure wrappers: a front-end plus a trained classifier per model kind.

Every countermeasure maps an AudioSignal to one real score (higher means
more bonafide) and serialises to a JSON-ready dict tagged with its kind.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from .audio import AudioSignal, unify_duration
from .embed import (CosineModel, EmbeddingExtractor, LinearSvm, SvmModel, embed_utterance,
                    train_embedding_extractor, train_linear_svm)
from .features import CqccConfig, cqcc, fit_normalizer, mean_variance_normalize, power_spectrogram
from .gmm import EmConfig, GmmPairModel, score_llr, train_gmm
from .metrics import BONAFIDE, ScoreSet, compute_eer
from .neural import (Network, TrainConfig, cnn1_spec, cnn2_spec, dnn_spec, network_train,
                     score_utterance)

log = logging.getLogger(__name__)

MODEL_KINDS = ("gmm", "cosine", "svm", "cnn1", "cnn2", "dnn")


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# front-ends

@dataclass(frozen=True)
class CqccFrontEnd:
    config: CqccConfig = CqccConfig()

    def __call__(self, signal: AudioSignal) -> np.ndarray:
        return cqcc(signal, self.config)

    def to_dict(self):
        return {"type": "cqcc", **asdict(self.config)}

    def fingerprint(self):
        return _hash(self.to_dict())


@dataclass(frozen=True)
class SpectrogramFrontEnd:
    """Fixed-duration log-power spectrogram shaped (1, frames, bins)."""
    duration_s: float = 3.0
    n_fft: int = 512
    win_ms: float = 32.0
    hop_ms: float = 10.0
    log_floor: float = 1e-10

    def __call__(self, signal: AudioSignal) -> np.ndarray:
        x = unify_duration(signal, self.duration_s)
        spec = power_spectrogram(x, self.n_fft, self.win_ms, self.hop_ms)
        return np.log(spec.values + self.log_floor)[None]

    def to_dict(self):
        return {"type": "spectrogram", **asdict(self)}

    def fingerprint(self):
        return _hash(self.to_dict())


def frontend_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("type")
    if kind == "cqcc":
        return CqccFrontEnd(CqccConfig(**d))
    if kind == "spectrogram":
        return SpectrogramFrontEnd(**d)
    raise ValueError(f"unknown front-end {kind!r}")


CNN1_FRONTEND = SpectrogramFrontEnd(4.0, 1728, 108.0, 10.0)
CNN2_FRONTEND = SpectrogramFrontEnd(3.0, 512, 32.0, 10.0)


# ---------------------------------------------------------------------------
# countermeasures

class Countermeasure:
    kind: str = ""

    def __init__(self, frontend, params: dict | None = None, seed: int = 0):
        self.frontend = frontend
        self.params = dict(params or {})
        self.seed = seed

    def features(self, signal: AudioSignal) -> np.ndarray:
        return self.frontend(signal)

    def fit(self, train, dev=None):
        """``train``/``dev``: lists of (file_id, label, features)."""
        raise NotImplementedError

    def score_features(self, feats: np.ndarray) -> float:
        raise NotImplementedError

    def score(self, signal: AudioSignal) -> float:
        return self.score_features(self.features(signal))

    def state(self) -> dict:
        raise NotImplementedError

    def load_state(self, state: dict) -> None:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "params": self.params,
                "frontend": self.frontend.to_dict(), "state": self.state()}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    def dev_eer(self, dev) -> float:
        scores = ScoreSet((f, lab, self.score_features(x)) for f, lab, x in dev)
        return compute_eer(scores).eer


def _split(items):
    bona = [x for _, lab, x in items if lab == BONAFIDE]
    spoof = [x for _, lab, x in items if lab != BONAFIDE]
    if not bona or not spoof:
        raise ValueError("training data needs both classes")
    return bona, spoof


def _em_config(params):
    names = {f.name for f in fields(EmConfig)}
    return EmConfig(**{k: v for k, v in params.items() if k in names})


class GmmCountermeasure(Countermeasure):
    kind = "gmm"

    def fit(self, train, dev=None):
        k = int(self.params.get("n_components", 32))
        em = _em_config(self.params)
        bona, spoof = _split(train)
        self.model = GmmPairModel(train_gmm(np.vstack(bona), k, self.seed, em),
                                  train_gmm(np.vstack(spoof), k, self.seed + 1, em),
                                  self.frontend.fingerprint())
        return self

    def score_features(self, feats):
        return score_llr(self.model, feats)

    def state(self):
        return self.model.to_dict()

    def load_state(self, state):
        self.model = GmmPairModel.from_dict(state)


class _EmbeddingCountermeasure(Countermeasure):
    def _extractor(self, train):
        return train_embedding_extractor(
            [x for _, _, x in train], n_ubm=int(self.params.get("n_ubm", 64)),
            n_dims=int(self.params.get("n_dims", 100)), seed=self.seed,
            relevance=float(self.params.get("relevance", 16.0)),
            max_ubm_frames=int(self.params.get("max_ubm_frames", 60000)),
            em=_em_config(self.params), fingerprint=self.frontend.fingerprint())


class CosineCountermeasure(_EmbeddingCountermeasure):
    kind = "cosine"

    def fit(self, train, dev=None):
        ext = self._extractor(train)
        emb = {f: embed_utterance(ext, x) for f, _, x in train}
        bona = np.mean([emb[f] for f, lab, _ in train if lab == BONAFIDE], axis=0)
        spoof = np.mean([emb[f] for f, lab, _ in train if lab != BONAFIDE], axis=0)
        self.model = CosineModel(ext, bona, spoof)
        return self

    def score_features(self, feats):
        return self.model.score(feats)

    def state(self):
        return self.model.to_dict()

    def load_state(self, state):
        self.model = CosineModel.from_dict(state)


class SvmCountermeasure(_EmbeddingCountermeasure):
    kind = "svm"

    def fit(self, train, dev=None):
        ext = self._extractor(train)
        x = np.array([embed_utterance(ext, f) for _, _, f in train])
        y = np.array([1.0 if lab == BONAFIDE else -1.0 for _, lab, _ in train])
        svm = train_linear_svm(x, y, lam=float(self.params.get("lam", 1e-3)),
                               epochs=int(self.params.get("epochs", 50)), seed=self.seed)
        self.model = SvmModel(ext, svm)
        return self

    def score_features(self, feats):
        return self.model.score(feats)

    def state(self):
        return self.model.to_dict()

    def load_state(self, state):
        self.model = SvmModel(EmbeddingExtractor.from_dict(state["extractor"]),
                              LinearSvm.from_dict(state["svm"]))


def _train_config(params, seed):
    names = {f.name for f in fields(TrainConfig)}
    cfg = {k: v for k, v in params.get("train", {}).items() if k in names}
    cfg.setdefault("seed", seed)
    return TrainConfig(**cfg)


class DnnCountermeasure(Countermeasure):
    """Frame-level network on normalised CQCC frames; score = mean frame log-odds."""
    kind = "dnn"

    def _norm(self, x):
        return mean_variance_normalize(x, self.mean, self.std)

    def fit(self, train, dev=None):
        frames = np.vstack([x for _, _, x in train])
        labels = np.concatenate([np.full(len(x), 1.0 if lab == BONAFIDE else 0.0)
                                 for _, lab, x in train])
        self.mean, self.std = fit_normalizer(frames)
        spec = dnn_spec(frames.shape[1], tuple(self.params.get("hidden", (128, 128, 64))),
                        float(self.params.get("dropout", 0.3)))
        dev_norm = [(f, lab, self._norm(x)) for f, lab, x in dev] if dev else None

        def dev_eer(net):
            s = ScoreSet((f, lab, score_utterance(net, "dnn", x)) for f, lab, x in dev_norm)
            return compute_eer(s).eer

        self.net = network_train(spec, self._norm(frames), labels,
                                 _train_config(self.params, self.seed),
                                 dev_eer if dev_norm else None)
        return self

    def score_features(self, feats):
        return score_utterance(self.net, "dnn", self._norm(feats))

    def state(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "net": self.net.to_dict(),
                "log": self.net.log}

    def load_state(self, state):
        self.mean, self.std = np.array(state["mean"]), np.array(state["std"])
        self.net = Network.from_dict(state["net"])
        self.net.log = [tuple(r) for r in state.get("log", [])]


class CnnCountermeasure(Countermeasure):
    """Fixed-size spectrogram network; input standardised by training-set scalars."""

    def __init__(self, frontend, params=None, seed=0, kind="cnn2"):
        super().__init__(frontend, params, seed)
        self.kind = kind

    def fit(self, train, dev=None):
        x = np.stack([f for _, _, f in train])
        y = np.array([1.0 if lab == BONAFIDE else 0.0 for _, lab, _ in train])
        self.mu, self.sigma = float(x.mean()), float(x.std()) or 1.0
        make = cnn1_spec if self.kind == "cnn1" else cnn2_spec
        spec = make(x.shape[1:], float(self.params.get("width", 1.0)),
                    float(self.params.get("dropout", 0.3)))
        dev_x = [(f, lab, (v - self.mu) / self.sigma) for f, lab, v in dev] if dev else None

        def dev_eer(net):
            s = ScoreSet((f, lab, score_utterance(net, "cnn", v)) for f, lab, v in dev_x)
            return compute_eer(s).eer

        self.net = network_train(spec, (x - self.mu) / self.sigma, y,
                                 _train_config(self.params, self.seed),
                                 dev_eer if dev_x else None)
        return self

    def score_features(self, feats):
        return score_utterance(self.net, "cnn", (feats - self.mu) / self.sigma)

    def state(self):
        return {"mu": self.mu, "sigma": self.sigma, "net": self.net.to_dict(), "log": self.net.log}

    def load_state(self, state):
        self.mu, self.sigma = state["mu"], state["sigma"]
        self.net = Network.from_dict(state["net"])
        self.net.log = [tuple(r) for r in state.get("log", [])]


def make_countermeasure(kind: str, params: dict | None = None, seed: int = 0,
                        features: dict | None = None) -> Countermeasure:
    """Untrained countermeasure of the given kind.

    ``features`` overrides CqccConfig fields for the CQCC kinds, or
    SpectrogramFrontEnd fields for the CNNs.
    """
    features = dict(features or {})
    if kind in ("gmm", "cosine", "svm", "dnn"):
        fe = CqccFrontEnd(CqccConfig(**features))
        cls = {"gmm": GmmCountermeasure, "cosine": CosineCountermeasure,
               "svm": SvmCountermeasure, "dnn": DnnCountermeasure}[kind]
        return cls(fe, params, seed)
    if kind in ("cnn1", "cnn2"):
        base = CNN1_FRONTEND if kind == "cnn1" else CNN2_FRONTEND
        fe = SpectrogramFrontEnd(**{**asdict(base), **features})
        return CnnCountermeasure(fe, params, seed, kind)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def countermeasure_from_dict(d: dict) -> Countermeasure:
    fe = frontend_from_dict(d["frontend"])
    kind = d["kind"]
    if kind in ("cnn1", "cnn2"):
        cm = CnnCountermeasure(fe, d["params"], d["seed"], kind)
    else:
        cls = {"gmm": GmmCountermeasure, "cosine": CosineCountermeasure,
               "svm": SvmCountermeasure, "dnn": DnnCountermeasure}[kind]
        cm = cls(fe, d["params"], d["seed"])
    cm.load_state(d["state"])
    return cm


def load_countermeasure(path) -> Countermeasure:
    with open(path) as fh:
        return countermeasure_from_dict(json.load(fh))
