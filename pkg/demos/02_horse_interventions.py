"""Train a GMM countermeasure and probe it with signal interventions.

Expects the corpus from 01_corpus_and_audit.py.  Trimming to the speech
endpoints should hurt bonafide acceptance, and a 100 ms click prefix taken
from a bonafide file should make spoofs pass.

    python demos/02_horse_interventions.py [out_dir]
"""
import sys

from spoofaudit.harness import ExperimentConfig, Pipeline

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
cfg = ExperimentConfig.from_dict({"corpus_dir": f"{out}/corpus", "out_dir": f"{out}/gmm",
                                  "model": {"kind": "gmm"}})
pipe = Pipeline(cfg)

# %% baseline: train, score eval, freeze the EER threshold
scores, theta = pipe.ensure_baseline("eval")
print(f"baseline threshold {theta:.3f}")

# %% horse check and copy-paste attack; each prints a delta table at frozen threshold
for name in ("pattern-difference", "bcs-attack", "silence-attack"):
    res = pipe.experiment(name)
    print(f"\n{name}\n{res['table']}")
