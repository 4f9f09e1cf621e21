"""End-to-end acceptance checks on the canonical synthetic corpus.

Each test prints one ``PASS``/``FAIL`` line with the measured values and
its runtime, then asserts.  Training is shared: a model trained for one
criterion is reused by the next, and each runtime line counts the
training it triggered.  Run with ``pytest -s tests/test_acceptance.py``
to see the lines live; the full suite takes tens of minutes on one core.
"""

import filecmp
import json
import os
import time

import numpy as np
import pytest

from spoofaudit.audio import AudioSignal, sample_variance
from spoofaudit.audit import ARTEFACT_NAMES
from spoofaudit.gmm import EmConfig, train_gmm
from spoofaudit.harness import ExperimentConfig, Pipeline
from spoofaudit.interventions import make_white_noise, scale_noise_for_snr
from spoofaudit.metrics import BONAFIDE, SPOOF, compute_eer
from spoofaudit.neural import build_network, cnn1_spec, cnn2_spec, dnn_spec, gradient_check
from spoofaudit.synth import SUBSETS, load_ground_truth

pytestmark = pytest.mark.acceptance

# desk-scale training budgets for the neural models; everything else uses defaults
PARAMS = {"gmm": {}, "cosine": {}, "svm": {},
          "dnn": {"train": {"max_epochs": 15}}, "cnn2": {"train": {"max_epochs": 15}}}
KINDS = tuple(PARAMS)


def pts(x, scale=1.0):
    """Percentage points, rounded so count ratios like 26/100 - 21/100 compare exactly."""
    return round(scale * x, 6)


# one line per criterion; conftest.py repeats them in the terminal summary
LINES = []


def report(n, ok, text, seconds, budget=None):
    ok = ok and (budget is None or seconds < budget)
    limit = f" (budget {budget:.0f} s)" if budget else ""
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {text} [{seconds:.1f} s{limit}]"
    LINES.append(line)
    print("\n" + line)
    return ok


class Runs:
    """Lazily trained baselines and experiment results, shared across criteria."""

    def __init__(self, root):
        self.root = str(root)
        self.corpus = os.path.join(self.root, "corpus")
        self.pipes, self.results = {}, {}
        self.synth_seconds = self._synth()

    def config(self, kind, out=None):
        return ExperimentConfig.from_dict({
            "corpus_dir": self.corpus, "out_dir": out or os.path.join(self.root, "runs", kind),
            "model": {"kind": kind, "params": PARAMS[kind]}})

    def _synth(self):
        t0 = time.time()
        Pipeline(self.config("gmm")).synth()
        return time.time() - t0

    def pipe(self, kind):
        if kind not in self.pipes:
            p = Pipeline(self.config(kind))
            if self.pipes:  # share decoded audio and the audit between kinds
                other = next(iter(self.pipes.values()))
                p._signals, p._annotations = other._signals, other.annotations
                p._audit = other.audit_report
            p.ensure_baseline("eval")
            self.pipes[kind] = p
        return self.pipes[kind]

    def experiment(self, kind, name, **kw):
        """(result, seconds spent including any training it triggered)."""
        key = (kind, name)
        if key not in self.results:
            t0 = time.time()
            res = self.pipe(kind).experiment(name, **kw)
            self.results[key] = (res, time.time() - t0)
            return self.results[key]
        return self.results[key][0], 0.0


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return Runs(tmp_path_factory.mktemp("acceptance"))


def rows_by_name(result):
    return {r["name"]: r for r in result["reports"]}


# ---------------------------------------------------------------------------

def test_criterion_1_numerical_kernels():
    t0 = time.time()
    notes, ok = [], True

    violations = 0
    for seed in range(5):
        x = np.random.default_rng(seed).standard_normal((3000, 20))
        x[:1500] += 1.0
        m = train_gmm(x, 32, seed, EmConfig(max_iters=50, tol=-np.inf))
        h = np.asarray(m.history)
        violations += int(np.sum(np.diff(h) < -1e-12 * np.abs(h[1:])))
        ok &= len(h) == 50
    ok &= violations == 0
    notes.append(f"EM violations {violations}")

    worst = 0.0
    rng = np.random.default_rng(0)
    for spec in (dnn_spec(60), cnn2_spec((1, 60, 60), width=0.25),
                 cnn1_spec((1, 300, 450), width=0.25)):
        net = build_network(spec, seed=1)
        x = rng.standard_normal((2, *spec["input_shape"]))
        worst = max(worst, gradient_check(net, x, np.array([1, 0]), max_params=300))
    ok &= worst < 1e-4
    notes.append(f"max grad rel err {worst:.1e}")

    from test_metrics import brute_force_eer, make
    mismatches = 0
    for _ in range(1000):
        nb, ns = rng.integers(1, 20, size=2)
        bona = list(rng.integers(0, 10, nb) / 4.0)
        spoof = list(rng.integers(-3, 7, ns) / 4.0)
        theta, eer = brute_force_eer(bona, spoof)
        r = compute_eer(make(bona, spoof))
        mismatches += (r.theta, r.eer) != (theta, eer)
    ok &= mismatches == 0
    notes.append(f"EER mismatches {mismatches}/1000")

    err = 0.0
    for seed in range(200):
        r = np.random.default_rng(seed)
        x = AudioSignal(r.uniform(1e-3, 0.9) * r.standard_normal(8000), 16000)
        snr = r.uniform(0, 6)
        n = scale_noise_for_snr(make_white_noise(100, 16000, seed), x, snr)
        target = sample_variance(x) * 10.0 ** (-snr)
        err = max(err, abs(np.var(n.samples) - target))
    ok &= err <= 1e-9
    notes.append(f"noise identity max err {err:.1e}")
    assert report(1, ok, ", ".join(notes), time.time() - t0, 300)


def test_criterion_2_audit_fidelity(runs):
    t0 = time.time()
    p = Pipeline(runs.config("gmm"))
    rep = p.audit_report
    truth = load_ground_truth(os.path.join(runs.corpus, "ground_truth.json"))

    def gt(name, ft):
        return {"early_speech": ft.early_speech and not ft.corrupted, "bcs": ft.has("BCS"),
                "dtmf": ft.has("DTMF"), "silence_10ms": ft.leading_silence_ms > 10,
                "silence_70ms": ft.leading_silence_ms > 70,
                "silence_100ms": ft.leading_silence_ms > 100, "corrupted": ft.corrupted,
                "duration_anomaly": ft.long_phrase}[name]

    bad, worst_pct = [], 0.0
    for name in ARTEFACT_NAMES:
        found = set(rep.files_with(name))
        want = {f for f, ft in truth.items() if gt(name, ft)}
        if found != want:
            bad.append(f"{name}: FP {len(found - want)} FN {len(want - found)}")
    table = rep.table()
    for subset in SUBSETS:
        for label in (BONAFIDE, SPOOF):
            ids = [f for f, ft in truth.items() if ft.subset == subset and ft.label == label]
            for name in ARTEFACT_NAMES:
                pct = 100.0 * sum(gt(name, truth[f]) for f in ids) / len(ids)
                worst_pct = max(worst_pct, abs(table[subset][label][name]["percent"] - pct))
    ok = not bad and worst_pct <= 0.5
    text = (f"precision = recall = 1 for all {len(ARTEFACT_NAMES)} artefacts"
            if not bad else "; ".join(bad)) + f", max prevalence error {worst_pct:.2f} pts"
    assert report(2, ok, text, time.time() - t0, 120)


def test_criterion_3_horse(runs):
    spent, cells, passes = 0.0, [], 0
    for kind in ("gmm", "dnn", "cnn2"):
        res, s = runs.experiment(kind, "pattern-difference")
        spent += s
        r = rows_by_name(res)
        dfrr = r["Trim endpoints (TP)"]["delta_frr_pct"]
        dfar = r["Trim endpoints (FP)"]["delta_far_pct"]
        hit = pts(dfrr) >= 20.0 and pts(dfar) <= 0.0
        passes += hit
        cells.append(f"{kind} dFRR {dfrr:+.1f} dFAR {dfar:+.1f}{'' if hit else ' (miss)'}")
    assert report(3, passes >= 2, f"{passes}/3 kinds; " + ", ".join(cells), spent, 1200)


def test_criterion_4_signature_attack(runs):
    spent, cells, ok = 0.0, [], True
    for kind in ("gmm", "cnn2"):
        res, s = runs.experiment(kind, "bcs-attack")
        spent += s
        r = rows_by_name(res)
        dfar = r["BCS signature (TN)"]["delta_far_pct"]
        dfn = r["BCS signature (FN)"]["delta_fn"]
        n_fn = r["BCS signature (FN)"]["tfi"]
        hit = pts(dfar) >= 20.0 and (dfn < 0 if n_fn else True)
        ok &= hit
        cells.append(f"{kind} dFAR {dfar:+.1f} FN change {dfn:+d} of {n_fn}")
    assert report(4, ok, ", ".join(cells), spent, 600)


def test_criterion_5_noise_monotone(runs):
    spent, cells, ok = 0.0, [], True
    for kind in ("cnn2", "cosine"):
        res, s = runs.experiment(kind, "noise-attack", locations=("start", "random"))
        spent += s
        r = rows_by_name(res)
        for loc in ("start", "random"):
            d0 = r[f"noise snr=0 {loc} (TN)"]["delta_far_pct"]
            d6 = r[f"noise snr=6 {loc} (TN)"]["delta_far_pct"]
            ok &= pts(d0) >= pts(d6)
            cells.append(f"{kind}/{loc} dFAR {d0:+.1f} >= {d6:+.1f}")
    assert report(5, ok, ", ".join(cells), spent, 600)


def test_criterion_6_robustness(runs):
    spent, cells, ok = 0.0, [], True
    for kind in KINDS:
        res, s = runs.experiment(kind, "robustness")
        spent += s
        init, new = (r["eer_delta"] for r in res["rows"])
        hit = abs(pts(new, 100)) < abs(pts(init, 100))
        if kind == "dnn":
            hit &= abs(pts(new, 100)) <= 5.0
        ok &= hit
        cells.append(f"{kind} {100 * init:+.0f} -> {100 * new:+.0f}{'' if hit else ' (miss)'}")
    assert report(6, ok, "EER change initial -> endpoint model: " + ", ".join(cells),
                  spent, 1800)


def test_criterion_7_condition_parity(runs):
    t0 = time.time()
    cells, ok = [], True
    for kind in KINDS:
        res, _ = runs.experiment(kind, "robustness")
        c1, c2 = res["conditions"]["1"], res["conditions"]["2"]
        hit = abs(pts(c1 - c2, 100)) <= 5.0
        ok &= hit
        cells.append(f"{kind} {100 * c1:.0f}/{100 * c2:.0f}{'' if hit else ' (miss)'}")
    assert report(7, ok, "endpoint model EER cond 1/2: " + ", ".join(cells), time.time() - t0)


def test_criterion_8_determinism(runs, tmp_path):
    t0 = time.time()
    diffs = []
    # corpus: regenerate from the synth manifest's config and compare every file
    man = json.load(open(os.path.join(runs.root, "runs", "gmm", "manifests", "synth.json")))
    cfg = ExperimentConfig(**{**man["config"], "corpus_dir": str(tmp_path / "corpus"),
                              "out_dir": str(tmp_path / "synth")})
    Pipeline(cfg).synth()
    cmp = filecmp.dircmp(runs.corpus, str(tmp_path / "corpus"))
    stack = [cmp]
    while stack:
        c = stack.pop()
        for name in c.common_files:
            if not filecmp.cmp(os.path.join(c.left, name), os.path.join(c.right, name),
                               shallow=False):
                diffs.append(name)
        diffs += c.left_only + c.right_only
        stack += c.subdirs.values()
    # train/score/evaluate/intervene rerun from each stage manifest
    for kind in ("gmm", "svm", "dnn"):
        src = runs.pipe(kind)
        man = json.load(open(os.path.join(src.config.out_dir, "manifests", "train.json")))
        out = str(tmp_path / kind)
        p = Pipeline(ExperimentConfig(**{**man["config"], "out_dir": out}))
        p._signals, p._annotations, p._audit = src._signals, src._annotations, src._audit
        p.train()
        p.score("eval")
        p.evaluate("eval")
        spec = {"name": "trim-tp", "kind": "TrimEndpoints", "target": "TP", "class": BONAFIDE}
        for q in (src, p):
            q.config.intervention = spec
            q.intervene()
        for rel in ("scores/eval.txt", "eval/eval.json", "interventions/trim-tp.json"):
            a = os.path.join(src.config.out_dir, rel)
            b = os.path.join(out, rel)
            if open(a, "rb").read() != open(b, "rb").read():
                diffs.append(f"{kind}:{rel}")
    ok = not diffs
    text = "corpus, score, evaluation and intervention files identical on rerun" if ok \
        else f"differences: {diffs[:10]}"
    assert report(8, ok, text, time.time() - t0)
