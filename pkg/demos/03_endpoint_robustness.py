"""Retrain with speech endpoint trimming and compare robustness to the click attack.

    python demos/03_endpoint_robustness.py [out_dir] [kind]

kind is gmm (default), cosine, svm, dnn or cnn2.  The neural kinds take
several minutes on one core.
"""
import sys

from spoofaudit.harness import ExperimentConfig, Pipeline

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
kind = sys.argv[2] if len(sys.argv) > 2 else "gmm"
params = {"train": {"max_epochs": 15}} if kind in ("dnn", "cnn2") else {}
cfg = ExperimentConfig.from_dict({"corpus_dir": f"{out}/corpus", "out_dir": f"{out}/{kind}",
                                  "model": {"kind": kind, "params": params}})

# %% initial model vs endpoint-trained model under trim-then-prepend
res = Pipeline(cfg).experiment("robustness")
print(res["table"])
