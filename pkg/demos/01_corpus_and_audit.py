"""Synthesise the canonical corpus and audit it for dataset artefacts.

Run from the repository root:  python demos/01_corpus_and_audit.py [out_dir]
"""
import sys

from spoofaudit.harness import ExperimentConfig, Pipeline, audit_table_text

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"

# %% corpus: 200/200 train, 100/100 dev, 100/100 eval per class, fixed master seed
cfg = ExperimentConfig.from_dict({"corpus_dir": f"{out}/corpus", "out_dir": f"{out}/gmm",
                                  "model": {"kind": "gmm"}})
pipe = Pipeline(cfg)
pipe.synth()

# %% audit: per-subset, per-class prevalence of every artefact
pipe.audit()
print(audit_table_text(pipe.audit_report))

# %% a closer look at one bonafide file with a burst click
flagged = pipe.audit_report.files_with("bcs")
f = pipe.audit_report.flags[flagged[0]]
print(f"{f.file_id}: click at {f.bcs_onset_ms:.0f} ms (ratio {f.bcs_score:.0f}), "
      f"speech from {f.speech_start_ms:.0f} ms")
