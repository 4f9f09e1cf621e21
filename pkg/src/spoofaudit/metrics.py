"""EER, FAR/FRR and intervention delta tables.

Orientation: higher scores mean more bonafide; a file is accepted as bonafide
iff its score is >= the threshold.  Bonafide is the positive class.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

BONAFIDE = "bonafide"
SPOOF = "spoof"


class ScoreSet:
    """Per-file scores with class labels, keyed by file_id."""

    def __init__(self, records=()):
        self._records: dict[str, tuple[str, float]] = {}
        for file_id, label, score in records:
            self.add(file_id, label, score)

    def add(self, file_id: str, label: str, score: float) -> None:
        if label not in (BONAFIDE, SPOOF):
            raise ValueError(f"unknown label {label!r}")
        if file_id in self._records:
            raise ValueError(f"duplicate file_id {file_id}")
        self._records[file_id] = (label, float(score))

    def __len__(self):
        return len(self._records)

    def __contains__(self, file_id):
        return file_id in self._records

    def __iter__(self):
        for file_id in sorted(self._records):
            label, score = self._records[file_id]
            yield file_id, label, score

    def label(self, file_id):
        return self._records[file_id][0]

    def score(self, file_id):
        return self._records[file_id][1]

    def file_ids(self):
        return sorted(self._records)

    def arrays(self):
        """(bonafide scores, spoof scores) as float arrays."""
        bona = [s for _, lab, s in self if lab == BONAFIDE]
        spoof = [s for _, lab, s in self if lab == SPOOF]
        return np.array(bona, dtype=float), np.array(spoof, dtype=float)

    def replaced(self, new_scores: dict) -> "ScoreSet":
        out = ScoreSet()
        for file_id, label, score in self:
            out.add(file_id, label, new_scores.get(file_id, score))
        return out

    def subset(self, file_ids) -> "ScoreSet":
        keep = set(file_ids)
        return ScoreSet((f, l, s) for f, l, s in self if f in keep)

    def write(self, path, labels: bool = False) -> None:
        with open(path, "w") as fh:
            for file_id, label, score in self:
                if labels:
                    fh.write(f"{file_id} {label} {score!r}\n")
                else:
                    fh.write(f"{file_id} {score!r}\n")

    @classmethod
    def read(cls, path, labels: dict | None = None) -> "ScoreSet":
        """Read ``<file_id> <score>`` (labels from mapping) or ``<id> <label> <score>``."""
        out = cls()
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) == 3:
                    out.add(parts[0], parts[1], float(parts[2]))
                elif len(parts) == 2:
                    if labels is None or parts[0] not in labels:
                        raise ValueError(f"{path}:{lineno}: no label for {parts[0]}")
                    out.add(parts[0], labels[parts[0]], float(parts[1]))
                else:
                    raise ValueError(f"{path}:{lineno}: malformed score line")
        return out


@dataclass(frozen=True)
class Counts:
    tp: int
    fn: int
    fp: int
    tn: int


@dataclass(frozen=True)
class EvalResult:
    eer: float
    theta: float
    tp: int
    fn: int
    fp: int
    tn: int
    far: float
    frr: float

    def to_dict(self):
        return asdict(self)


def confusion_at_threshold(scores: ScoreSet, theta: float) -> Counts:
    bona, spoof = scores.arrays()
    tp = int(np.sum(bona >= theta))
    fp = int(np.sum(spoof >= theta))
    return Counts(tp=tp, fn=bona.size - tp, fp=fp, tn=spoof.size - fp)


def far_frr(counts: Counts) -> tuple[float, float]:
    if counts.fp + counts.tn == 0 or counts.tp + counts.fn == 0:
        raise ZeroDivisionError("FAR/FRR need at least one file per class")
    return counts.fp / (counts.fp + counts.tn), counts.fn / (counts.tp + counts.fn)


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    uniq = np.unique(scores)
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    return np.concatenate([[-np.inf], mids, [np.inf]])


def compute_eer(scores: ScoreSet) -> EvalResult:
    """EER by sweeping midpoints between adjacent unique scores.

    Picks the threshold minimising |FAR - FRR| (lowest threshold on ties) and
    reports the mean of FAR and FRR there.
    """
    bona, spoof = scores.arrays()
    if bona.size == 0 or spoof.size == 0:
        raise ValueError("EER needs both bonafide and spoof scores")
    thetas = candidate_thresholds(np.concatenate([bona, spoof]))
    bona_sorted, spoof_sorted = np.sort(bona), np.sort(spoof)
    # accept iff score >= theta  ->  count of scores below theta
    fn = np.searchsorted(bona_sorted, thetas, side="left")
    fp = spoof.size - np.searchsorted(spoof_sorted, thetas, side="left")
    frr = fn / bona.size
    far = fp / spoof.size
    best = int(np.argmin(np.abs(far - frr)))
    theta = float(thetas[best])
    counts = confusion_at_threshold(scores, theta)
    far_b, frr_b = far_frr(counts)
    return EvalResult(eer=(far_b + frr_b) / 2.0, theta=theta, tp=counts.tp,
                      fn=counts.fn, fp=counts.fp, tn=counts.tn, far=far_b, frr=frr_b)


def evaluate_at(scores: ScoreSet, theta: float) -> dict:
    counts = confusion_at_threshold(scores, theta)
    far, frr = far_frr(counts)
    return {"theta": theta, **asdict(counts), "far": far, "frr": frr}


def decisions(scores: ScoreSet, theta: float) -> dict[str, bool]:
    return {f: s >= theta for f, _, s in scores}


def diff_report(before: ScoreSet, after: ScoreSet, fixed_theta: float,
                intervened=None, name: str = "") -> dict:
    """Delta table at a frozen threshold.

    ``after`` may hold only the intervened files; the remaining files keep
    their ``before`` scores.  Prop is the share of intervened files whose
    accept/reject decision flipped.
    """
    if fixed_theta is None or (isinstance(fixed_theta, float) and math.isnan(fixed_theta)):
        raise ValueError("diff_report needs the frozen threshold")
    if intervened is None:
        intervened = [f for f, _, _ in after]
    intervened = sorted(set(intervened))
    missing = [f for f in intervened if f not in before]
    if missing:
        raise ValueError(f"intervened files not in the baseline set: {missing[:5]}")
    merged = before.replaced({f: after.score(f) for f in intervened})

    c0 = confusion_at_threshold(before, fixed_theta)
    c1 = confusion_at_threshold(merged, fixed_theta)
    far0, frr0 = far_frr(c0)
    far1, frr1 = far_frr(c1)
    changed = [f for f in intervened
               if (before.score(f) >= fixed_theta) != (merged.score(f) >= fixed_theta)]
    tfi = len(intervened)
    return {
        "name": name,
        "theta": fixed_theta,
        "tfi": tfi,
        "tfi_bonafide": sum(before.label(f) == BONAFIDE for f in intervened),
        "tfi_spoof": sum(before.label(f) == SPOOF for f in intervened),
        "before": asdict(c0),
        "after": asdict(c1),
        "delta_fn": c1.fn - c0.fn,
        "delta_fp": c1.fp - c0.fp,
        "delta_frr_pct": round(100.0 * (frr1 - frr0), 2),
        "delta_far_pct": round(100.0 * (far1 - far0), 2),
        "frr_pct_after": round(100.0 * frr1, 2),
        "far_pct_after": round(100.0 * far1, 2),
        "changed": len(changed),
        "prop_pct": round(100.0 * len(changed) / tfi, 2) if tfi else 0.0,
        "changed_files": changed,
    }


REPORT_COLUMNS = [("name", "Experiment"), ("tfi", "# TFI"), ("delta_fn", "FN"),
                  ("delta_frr_pct", "FRR %"), ("delta_fp", "FP"),
                  ("delta_far_pct", "FAR %"), ("prop_pct", "Prop (%)")]


def _signed(v):
    if isinstance(v, (int, np.integer)):
        return f"{v:+d}"
    if isinstance(v, float):
        return f"{v:+.2f}"
    return str(v)


def format_table(reports, columns=REPORT_COLUMNS) -> str:
    """Aligned text table, one row per delta report."""
    rows = [[title for _, title in columns]]
    for rep in reports:
        row = []
        for key, _ in columns:
            v = rep.get(key, "")
            row.append(str(v) if key in ("name", "tfi") else _signed(v))
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(columns))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
