"""Replay-spoofing countermeasures, dataset artefact audits and intervention experiments."""

__version__ = "0.1.0"

from .audio import AudioSignal, TimeSpan, concat, load_wav, save_wav, slice_signal, unify_duration
from .metrics import ScoreSet, compute_eer, diff_report

__all__ = ["AudioSignal", "TimeSpan", "concat", "load_wav", "save_wav", "slice_signal",
           "unify_duration", "ScoreSet", "compute_eer", "diff_report", "__version__"]
