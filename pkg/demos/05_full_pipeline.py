#!/usr/bin/env python3
"""End-to-end run driven through the command-line stages.

Equivalent to the shell session:

    grasslang synth --spec task.spec --out-dir data
    grasslang construct --manifest data/train.manifest --out-dir tr ...
    grasslang train-svm ... / train-snn ...
    grasslang score ... / eval ...

and finishes with a small context-order sweep.
"""

import tempfile
from pathlib import Path

from grasslang import synthlab
from grasslang.cli import main

root = Path(tempfile.mkdtemp())
print("working under", root)

# --- write a task spec, then run every stage as a command -------------------
langs = tuple(
    synthlab.modular_language(name, 8, bigram_shift=shift,
                              trigram_coeffs=coeffs,
                              bigram_mass=0.45, trigram_mass=0.35)
    for name, shift, coeffs in (("ga", 1, (1, 1, 0)), ("na", 3, (3, 1, 1))))
task = synthlab.TaskSpec(
    languages=langs, train_per_language=15, test_per_language=10,
    k_range=(60, 90),
    recognizers=(synthlab.RecognizerSpec(8, 1), synthlab.RecognizerSpec(6, 2)),
    emission=synthlab.EmissionConfig(concentration=40.0, floor=0.05), seed=5)
synthlab.save_taskspec(task, root / "task.spec")

stage = lambda argv: main([str(a) for a in argv]) == 0 or exit(1)

stage(["synth", "--spec", root / "task.spec", "--out-dir", root / "data"])
for split in ("train", "test"):
    stage(["construct", "--manifest", root / f"data/{split}.manifest",
           "--out-dir", root / f"{split}_arch", "--method", "olr",
           "--context-order", "2", "--alpha", "0.6", "--seed", "5"])
stage(["gram", "--archive", root / "train_arch", "--out-dir", root / "grams"])
stage(["train-svm", "--archive", root / "train_arch",
       "--out-dir", root / "svm_model", "--seed", "5"])
stage(["train-snn", "--archive", root / "train_arch",
       "--out-dir", root / "snn_model", "--epochs", "20", "--num-maps", "8",
       "--seed", "5"])
stage(["score", "--backend", "svm", "--model", root / "svm_model",
       "--archive", root / "test_arch", "--train-archive", root / "train_arch",
       "--out", root / "svm.trials"])
stage(["score", "--backend", "snn", "--model", root / "snn_model",
       "--archive", root / "test_arch", "--out", root / "snn.trials"])
stage(["eval", "--trials", root / "svm.trials", "--out-dir", root / "svm_eval"])
stage(["eval", "--trials", root / "snn.trials", "--out-dir", root / "snn_eval"])
stage(["gradcheck", "--seed", "5"])

# --- sweep the context order and the subspace ratio -------------------------
stage(["sweep", "--train-manifest", root / "data/train.manifest",
       "--test-manifest", root / "data/test.manifest", "--backend", "svm",
       "--out", root / "sweep.txt", "--n-grid", "1,2,3",
       "--alpha-grid", "0.4,0.6", "--svm-c", "1.0", "--seed", "5"])
print()
print("sweep results:")
print((root / "sweep.txt").read_text())
