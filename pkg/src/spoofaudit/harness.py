"""Experiment orchestration: corpus -> audit -> train -> score -> evaluate -> intervene.

All state lives under the run's output directory; every stage writes a
manifest (config hash, produced files, timing, library versions) next to
its outputs so a rerun can be checked against it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import platform
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import scipy

from .audio import AudioSignal, load_wav
from .audit import (ARTEFACT_NAMES, AuditConfig, ArtefactReport, artefact_present, audit_corpus,
                    read_protocol, write_side_info)
from .interventions import Intervention, SideInfo, apply_intervention, extract_signature
from .metrics import (BONAFIDE, SPOOF, ScoreSet, compute_eer, diff_report, format_table,
                      write_json)
from .models import MODEL_KINDS, Countermeasure, make_countermeasure
from .synth import SUBSETS, CorpusSpec, generate_corpus
from .vad import NoSpeechError, detect_endpoints, parse_annotations, trim_to_endpoints

log = logging.getLogger(__name__)

STAGES = ("synth", "audit", "train", "score", "evaluate", "intervene")
ENDPOINT_MODES = ("none", "manual", "automatic")
TARGETS = ("TP", "TN", "FP", "FN", "all")
EXPERIMENTS = ("bcs-removal", "dtmf-removal", "pattern-difference", "bcs-attack",
               "noise-attack", "silence-attack", "robustness")


class ValidationError(ValueError):
    """Bad configuration (CLI exit code 2)."""


class PrerequisiteError(RuntimeError):
    """A stage input is missing (CLI exit code 3)."""


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


@dataclass
class ExperimentConfig:
    corpus_dir: str
    out_dir: str = "runs/default"
    model: dict = field(default_factory=lambda: {"kind": "gmm", "params": {}})
    features: dict = field(default_factory=dict)
    endpoint: dict = field(default_factory=lambda: {"train": "none", "test": "none"})
    subset: str = "eval"
    intervention: dict | None = None
    experiment: dict | None = None
    corpus: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    annotations: str | None = None
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "corpus_dir" not in d:
            raise ValidationError("config needs 'corpus_dir'")
        cfg = cls(**d)
        for name in ("corpus_dir", "out_dir", "annotations"):
            v = getattr(cfg, name)
            if v is not None and not os.path.isabs(v):
                setattr(cfg, name, os.path.normpath(os.path.join(base_dir, v)))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc})") from None
        except OSError as exc:
            raise ValidationError(f"cannot read config: {exc}") from None
        return cls.from_dict(d, os.path.dirname(os.path.abspath(path)))

    def validate(self):
        kind = self.model.get("kind")
        if kind not in MODEL_KINDS:
            raise ValidationError(f"model.kind must be one of {MODEL_KINDS}, got {kind!r}")
        for side in ("train", "test"):
            mode = self.endpoint.get(side, "none")
            if mode not in ENDPOINT_MODES:
                raise ValidationError(f"endpoint.{side} must be one of {ENDPOINT_MODES}")
        if self.subset not in SUBSETS:
            raise ValidationError(f"subset must be one of {SUBSETS}")
        if self.intervention is not None:
            iv = self.intervention
            try:
                Intervention.from_dict(iv)
            except (KeyError, ValueError) as exc:
                raise ValidationError(f"intervention: {exc}") from None
            if iv.get("target", "all") not in TARGETS:
                raise ValidationError(f"intervention.target must be one of {TARGETS}")
            if iv.get("class", "both") not in (BONAFIDE, SPOOF, "both"):
                raise ValidationError("intervention.class must be bonafide, spoof or both")
            if iv.get("artefact") not in (None,) + ARTEFACT_NAMES:
                raise ValidationError(f"intervention.artefact must be one of {ARTEFACT_NAMES}")
        if self.experiment is not None and self.experiment.get("name") not in EXPERIMENTS:
            raise ValidationError(f"experiment.name must be one of {EXPERIMENTS}")
        try:
            CorpusSpec.from_dict(self.corpus)
            AuditConfig.from_dict(self.audit)
        except (TypeError, ValueError) as exc:
            raise ValidationError(str(exc)) from None

    def to_dict(self):
        return asdict(self)

    def model_hash(self) -> str:
        """Hash of everything that determines the trained model."""
        model = {"params": {}, **self.model}  # omitted params == empty params
        return config_hash({"model": model, "features": self.features,
                            "endpoint_train": self.endpoint.get("train", "none"),
                            "seed": self.seed, "corpus_dir": self.corpus_dir})

    def with_updates(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(kw)
        cfg = ExperimentConfig(**d)
        cfg.validate()
        return cfg


def _versions():
    from . import __version__
    return {"spoofaudit": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# ---------------------------------------------------------------------------

class Pipeline:
    """Runs stages for one ExperimentConfig; caches audio and features in memory."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self._signals: dict[str, AudioSignal] = {}
        self._features: dict = {}
        self._protocols = None
        self._annotations = None
        self._audit = None
        self._model = None

    # -- paths ---------------------------------------------------------------
    def out(self, *parts) -> str:
        path = os.path.join(self.config.out_dir, *parts)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        return path

    @property
    def model_path(self):
        return os.path.join(self.config.out_dir, "model.json")

    def score_path(self, subset):
        return os.path.join(self.config.out_dir, "scores", f"{subset}.txt")

    def eval_path(self, subset):
        return os.path.join(self.config.out_dir, "eval", f"{subset}.json")

    # -- corpus access ---------------------------------------------------------
    def _require_corpus(self):
        proto = os.path.join(self.config.corpus_dir, "protocols")
        if not os.path.isdir(proto):
            raise PrerequisiteError(f"no corpus at {self.config.corpus_dir} "
                                    "(run the synth stage first)")

    @property
    def protocols(self):
        if self._protocols is None:
            self._require_corpus()
            self._protocols = {}
            for s in SUBSETS:
                path = os.path.join(self.config.corpus_dir, "protocols", f"{s}.txt")
                if os.path.exists(path):
                    self._protocols[s] = read_protocol(path)
        return self._protocols

    def labels(self, subset) -> dict:
        return {e.file_id: e.label for e in self.protocols[subset]}

    @property
    def annotations(self) -> dict:
        if self._annotations is None:
            path = self.config.annotations or os.path.join(self.config.corpus_dir, "annotations.txt")
            self._annotations = parse_annotations(path) if os.path.exists(path) else {}
        return self._annotations

    def signal(self, file_id) -> AudioSignal:
        if file_id not in self._signals:
            path = os.path.join(self.config.corpus_dir, "wav", f"{file_id}.wav")
            if not os.path.exists(path):
                raise PrerequisiteError(f"missing audio file {path}")
            self._signals[file_id] = load_wav(path)
        return self._signals[file_id]

    @property
    def audit_config(self):
        return AuditConfig.from_dict(self.config.audit)

    @property
    def audit_report(self) -> ArtefactReport:
        if self._audit is None:
            self._audit = audit_corpus(self.protocols, os.path.join(self.config.corpus_dir, "wav"),
                                       self.audit_config)
        return self._audit

    # -- preprocessing (endpoint modes) --------------------------------------
    def preprocess(self, file_id, signal: AudioSignal, mode: str):
        """Endpoint trimming per mode; None means 'exclude this file'."""
        if mode == "none":
            return signal
        if mode == "manual":
            ann = self.annotations.get(file_id)
            if ann is None:
                return None
            return apply_intervention(Intervention("TrimEndpoints"), signal,
                                      SideInfo(self.annotations), file_id)
        try:
            return trim_to_endpoints(signal, detect_endpoints(signal, self.audit_config.vad))
        except NoSpeechError:
            return None

    def test_view(self, file_id, signal):
        """Test-time preprocessing; files with no detectable speech are scored raw."""
        out = self.preprocess(file_id, signal, self.config.endpoint.get("test", "none"))
        return signal if out is None else out

    # -- model -----------------------------------------------------------------
    def new_model(self) -> Countermeasure:
        m = self.config.model
        return make_countermeasure(m["kind"], m.get("params", {}), self.config.seed,
                                   self.config.features)

    @property
    def model(self) -> Countermeasure:
        if self._model is None:
            if not os.path.exists(self.model_path):
                raise PrerequisiteError(f"no trained model at {self.model_path} "
                                        "(run the train stage first)")
            with open(self.model_path) as fh:
                d = json.load(fh)
            if d.get("config_hash") != self.config.model_hash():
                raise ValidationError("model file was trained with different model/feature "
                                      "settings than this config")
            from .models import countermeasure_from_dict
            self._model = countermeasure_from_dict(d)
        return self._model

    def features_for(self, cm, file_id, mode):
        key = (cm.frontend, file_id, mode)
        if key not in self._features:
            s = self.preprocess(file_id, self.signal(file_id), mode)
            self._features[key] = None if s is None else cm.features(s)
        return self._features[key]

    def _items(self, cm, subset, mode, drop_corrupted):
        items = []
        for e in self.protocols[subset]:
            if drop_corrupted and self.audit_report.flags[e.file_id].is_corrupted:
                continue
            feats = self.features_for(cm, e.file_id, mode)
            if feats is None:
                if mode == "manual" or drop_corrupted:
                    continue
                feats = cm.features(self.signal(e.file_id))
            items.append((e.file_id, e.label, feats))
        return items

    def score_signal(self, file_id, signal) -> float:
        return self.model.score(self.test_view(file_id, signal))

    # -- manifests ---------------------------------------------------------------
    def _manifest(self, stage, outputs, started):
        missing = [p for p in outputs if not os.path.exists(p)]
        if missing:
            raise RuntimeError(f"stage {stage} did not produce {missing}")
        man = {"stage": stage, "config": self.config.to_dict(),
               "config_hash": config_hash(self.config.to_dict()),
               "model_hash": self.config.model_hash(), "outputs": sorted(outputs),
               "seconds": round(time.time() - started, 3), "versions": _versions()}
        write_json(man, self.out("manifests", f"{stage}.json"))
        return man

    # -- stages --------------------------------------------------------------------
    def synth(self):
        t0 = time.time()
        spec = CorpusSpec.from_dict({**self.config.corpus, "seed": self.config.corpus.get(
            "seed", CorpusSpec().seed)})
        generate_corpus(spec, self.config.corpus_dir)
        self._protocols = None
        return self._manifest("synth", [os.path.join(self.config.corpus_dir, "ground_truth.json")], t0)

    def audit(self):
        t0 = time.time()
        rep = self.audit_report
        paths = [self.out("audit", "report.json"), self.out("audit", "artefacts.txt"),
                 self.out("audit", "table.txt")]
        rep.write(paths[0])
        write_side_info(rep.side_info_lines(), paths[1])
        with open(paths[2], "w") as fh:
            fh.write(audit_table_text(rep))
        return self._manifest("audit", paths, t0)

    def train(self):
        t0 = time.time()
        cm = self.new_model()
        mode_tr = self.config.endpoint.get("train", "none")
        mode_te = self.config.endpoint.get("test", "none")
        drop = mode_tr != "none"
        train = self._items(cm, "train", mode_tr, drop)
        dev = self._items(cm, "dev", mode_te, False) if "dev" in self.protocols else None
        log.info("training %s on %d files (endpoint mode %s)", cm.kind, len(train), mode_tr)
        cm.fit(train, dev)
        d = cm.to_dict()
        d["config_hash"] = self.config.model_hash()
        d["train_files"] = [f for f, _, _ in train]
        with open(self.out("model.json"), "w") as fh:
            json.dump(d, fh)
        self._model = cm
        outputs = [self.model_path]
        net = getattr(cm, "net", None)
        if net is not None:
            from .neural import write_training_log
            write_training_log(net, self.out("training_log.csv"))
            outputs.append(os.path.join(self.config.out_dir, "training_log.csv"))
        return self._manifest("train", outputs, t0)

    def scores(self, subset) -> ScoreSet:
        cm = self.model
        mode = self.config.endpoint.get("test", "none")
        out = ScoreSet()
        for e in self.protocols[subset]:
            feats = self.features_for(cm, e.file_id, mode)
            if feats is None:
                feats = cm.features(self.signal(e.file_id))
            out.add(e.file_id, e.label, cm.score_features(feats))
        return out

    def score(self, subset=None):
        t0 = time.time()
        subset = subset or self.config.subset
        s = self.scores(subset)
        path = self.out("scores", f"{subset}.txt")
        s.write(path)
        return self._manifest(f"score-{subset}", [path], t0)

    def read_scores(self, subset) -> ScoreSet:
        path = self.score_path(subset)
        if not os.path.exists(path):
            raise PrerequisiteError(f"no score file {path} (run the score stage first)")
        return ScoreSet.read(path, self.labels(subset))

    def evaluate(self, subset=None):
        t0 = time.time()
        subset = subset or self.config.subset
        res = compute_eer(self.read_scores(subset))
        path = self.out("eval", f"{subset}.json")
        write_json({"subset": subset, **res.to_dict()}, path)
        return self._manifest(f"evaluate-{subset}", [path], t0)

    def theta(self, subset) -> float:
        path = self.eval_path(subset)
        if not os.path.exists(path):
            raise PrerequisiteError(f"no evaluation report {path} (run evaluate first)")
        with open(path) as fh:
            return float(json.load(fh)["theta"])

    # -- interventions -------------------------------------------------------------
    def signature(self, first_ms=100.0, artefact="bcs"):
        """Most bonafide-looking prefix among training bonafide files with the artefact.

        Each candidate prefix is scored on its own by the current model, so
        the attacker picks the cue the model trusts most.
        """
        flags = self.audit_report.flags
        cands = [e.file_id for e in self.protocols["train"]
                 if e.label == BONAFIDE and artefact_present(flags[e.file_id], artefact)]
        if not cands:
            raise PrerequisiteError(f"no training bonafide file flagged {artefact}")
        model = self.model
        scored = {f: model.score(extract_signature(self.signal(f), first_ms)) for f in cands}
        best = max(sorted(scored), key=lambda f: scored[f])
        return best, extract_signature(self.signal(best), first_ms)

    def side_info(self, signature=None) -> SideInfo:
        return SideInfo(self.annotations, signature, {}, self.config.seed)

    def select_targets(self, base: ScoreSet, theta: float, target="all", cls="both",
                       artefact=None):
        flags = self.audit_report.flags if artefact else None
        out = []
        for f, label, s in base:
            if cls != "both" and label != cls:
                continue
            accepted = s >= theta
            cell = ("TP" if accepted else "FN") if label == BONAFIDE else ("FP" if accepted else "TN")
            if target != "all" and cell != target:
                continue
            if artefact and not artefact_present(flags[f], artefact):
                continue
            out.append(f)
        return out

    def intervened_scores(self, spec: dict, base: ScoreSet, theta: float,
                          side: SideInfo) -> tuple[list, ScoreSet]:
        """Targets selected per ``spec`` and their re-scored intervened signals."""
        iv = Intervention.from_dict(spec)
        targets = self.select_targets(base, theta, spec.get("target", "all"),
                                      spec.get("class", "both"), spec.get("artefact"))
        if spec.get("annotated_only") or iv.kind in ("TrimEndpoints", "TrimThenPrepend"):
            targets = [f for f in targets if f in side.annotations]
        after = ScoreSet((f, base.label(f),
                          self.score_signal(f, apply_intervention(iv, self.signal(f), side, f)))
                         for f in targets)
        return targets, after

    def run_intervention(self, spec: dict, base: ScoreSet, theta: float,
                         side: SideInfo, name: str | None = None, _after=None) -> dict:
        targets, after = _after or self.intervened_scores(spec, base, theta, side)
        iv = Intervention.from_dict(spec)
        rep = diff_report(base, after, theta, targets, name or spec.get("name", iv.kind))
        rep["intervention"] = iv.to_dict()
        rep["target"] = spec.get("target", "all")
        rep["class"] = spec.get("class", "both")
        return rep

    def intervene(self, spec=None):
        t0 = time.time()
        spec = spec or self.config.intervention
        if spec is None:
            raise ValidationError("the intervene stage needs an 'intervention' entry")
        subset = self.config.subset
        base = self.read_scores(subset)
        theta = self.theta(subset)
        sig = None
        if spec["kind"] in ("PrependSignature", "TrimThenPrepend") or \
                (spec["kind"] == "InsertSegment" and spec.get("params", {}).get("segment", "signature") == "signature"):
            _, sig = self.signature(spec.get("params", {}).get("first_ms", 100.0))
        rep = self.run_intervention(spec, base, theta, self.side_info(sig))
        name = spec.get("name", spec["kind"])
        paths = [self.out("interventions", f"{name}.json"), self.out("interventions", f"{name}.txt")]
        write_json(rep, paths[0])
        with open(paths[1], "w") as fh:
            fh.write(format_table([rep]) + "\n")
        return self._manifest(f"intervene-{name}", paths, t0)

    # -- named experiments -----------------------------------------------------------
    def ensure_baseline(self, subset):
        """Train/score/evaluate as needed; returns (scores, theta)."""
        if not os.path.exists(self.model_path):
            self.train()
        if not os.path.exists(self.score_path(subset)):
            self.score(subset)
        if not os.path.exists(self.eval_path(subset)):
            self.evaluate(subset)
        return self.read_scores(subset), self.theta(subset)

    def experiment(self, name=None, **overrides):
        t0 = time.time()
        spec = dict(self.config.experiment or {})
        spec.update(overrides)
        name = name or spec.get("name")
        if name not in EXPERIMENTS:
            raise ValidationError(f"unknown experiment {name!r}")
        subset = spec.get("subset", self.config.subset)
        if name == "robustness":
            result = self._robustness(spec, subset)
        else:
            base, theta = self.ensure_baseline(subset)
            runs = experiment_interventions(name, spec)
            needs_sig = any(r["kind"] in ("PrependSignature", "TrimThenPrepend") for r in runs)
            sig_file, sig = self.signature(spec.get("first_ms", 100.0)) if needs_sig else (None, None)
            side = self.side_info(sig)
            reports = [self.run_intervention(r, base, theta, side, r["name"]) for r in runs]
            result = {"experiment": name, "subset": subset, "theta": theta,
                      "signature_file": sig_file, "reports": reports,
                      "table": format_table(reports)}
        paths = [self.out("experiments", name, "report.json"),
                 self.out("experiments", name, "table.txt")]
        write_json(result, paths[0])
        with open(paths[1], "w") as fh:
            fh.write(result["table"] + "\n")
        self._manifest(f"experiment-{name}", paths, t0)
        return result

    def _robustness(self, spec, subset):
        """Initial model vs endpoint-trained model under the trim-then-prepend attack."""
        new_endpoint = spec.get("new_endpoint", {"train": "manual", "test": "automatic"})
        new_cfg = self.config.with_updates(
            out_dir=os.path.join(self.config.out_dir, "endpoint_model"), endpoint=new_endpoint)
        new = Pipeline(new_cfg)
        new._signals, new._annotations, new._audit = self._signals, self._annotations, self._audit
        base, theta = self.ensure_baseline(subset)
        new_base, new_theta = new.ensure_baseline(subset)
        sig_file, sig = self.signature(spec.get("first_ms", 100.0))
        side = self.side_info(sig)
        attack = {"kind": "TrimThenPrepend", "target": "all", "class": "both"}
        rows = []
        for label, pipe, scores, th in (("initial", self, base, theta),
                                        ("endpoint", new, new_base, new_theta)):
            targets, after = pipe.intervened_scores(attack, scores, th, side)
            rep = pipe.run_intervention(attack, scores, th, side, f"{label} model",
                                        _after=(targets, after))
            merged = scores.replaced({f: after.score(f) for f in targets})
            before, after_eer = compute_eer(scores).eer, compute_eer(merged).eer
            rows.append({"model": label, "endpoint": dict(pipe.config.endpoint),
                         "eer_before": before, "eer_after": after_eer,
                         "eer_delta": after_eer - before, "delta_report": rep})
        # the endpoint model under test condition 1 (raw audio) and 2 (automatic VAD)
        raw = ScoreSet((e.file_id, e.label, new.model.score(self.signal(e.file_id)))
                       for e in self.protocols[subset])
        conditions = {"1": compute_eer(raw).eer, "2": compute_eer(new_base).eer}
        lines = ["model      EER before  EER after  change"]
        for r in rows:
            lines.append(f"{r['model']:<10} {100 * r['eer_before']:10.2f} "
                         f"{100 * r['eer_after']:10.2f} {100 * r['eer_delta']:+7.2f}")
        lines.append(f"endpoint model EER, condition 1 (none): {100 * conditions['1']:.2f}  "
                     f"condition 2 (automatic): {100 * conditions['2']:.2f}")
        return {"experiment": "robustness", "subset": subset, "signature_file": sig_file,
                "kind": self.config.model["kind"], "rows": rows, "conditions": conditions,
                "table": "\n".join(lines)}


def experiment_interventions(name: str, spec: dict | None = None) -> list[dict]:
    """Intervention runs composing each named experiment."""
    spec = spec or {}
    if name == "bcs-removal":
        return [{"name": "BCS removal (TP)", "kind": "RemovePrefix", "params": {"ms": 100.0},
                 "target": "TP", "class": BONAFIDE, "artefact": "bcs"}]
    if name == "dtmf-removal":
        return [{"name": "DTMF removal (TN)", "kind": "RemovePrefix", "params": {"ms": 250.0},
                 "target": "TN", "class": SPOOF, "artefact": "dtmf"}]
    if name == "pattern-difference":
        return [{"name": "Trim endpoints (TP)", "kind": "TrimEndpoints", "target": "TP",
                 "class": BONAFIDE},
                {"name": "Trim endpoints (FP)", "kind": "TrimEndpoints", "target": "FP",
                 "class": SPOOF}]
    cells = (("FN", BONAFIDE), ("TN", SPOOF))
    if name == "bcs-attack":
        return [{"name": f"BCS signature ({c})", "kind": "PrependSignature", "target": c,
                 "class": k} for c, k in cells]
    if name == "noise-attack":
        runs = []
        for snr in spec.get("snr_exponents", (0.0, 6.0)):
            for loc in spec.get("locations", ("start", "random")):
                for c, k in cells:
                    runs.append({"name": f"noise snr={snr:g} {loc} ({c})", "kind": "InjectNoise",
                                 "params": {"snr_exponent": float(snr), "duration_ms": 100.0,
                                            "location": loc, "mode": spec.get("mode", "concat")},
                                 "target": c, "class": k})
        return runs
    if name == "silence-attack":
        return [{"name": f"silence {loc} ({c})", "kind": "InjectSilence",
                 "params": {"duration_ms": 100.0, "location": loc}, "target": c, "class": k}
                for loc in spec.get("locations", ("start", "random")) for c, k in cells]
    raise ValidationError(f"no intervention recipe for {name!r}")


def audit_table_text(report: ArtefactReport) -> str:
    table = report.table()
    rows = [["subset", "class", *ARTEFACT_NAMES]]
    for subset in table:
        for label, row in table[subset].items():
            rows.append([subset, label] + [f"{row[n]['percent']:.2f}" for n in ARTEFACT_NAMES])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    lines.insert(1, "-" * len(lines[0]))
    lines.append("(bcs and dtmf flags are heuristic detections)")
    return "\n".join(lines) + "\n"


def run_stage(stage: str, config: ExperimentConfig, pipeline: Pipeline | None = None):
    if stage not in STAGES:
        raise ValidationError(f"unknown stage {stage!r}")
    p = pipeline or Pipeline(config)
    if stage == "score":
        return p.score()
    if stage == "evaluate":
        return p.evaluate()
    return getattr(p, stage)()


def run_experiment(name: str, config: ExperimentConfig, pipeline: Pipeline | None = None, **kw):
    return (pipeline or Pipeline(config)).experiment(name, **kw)
