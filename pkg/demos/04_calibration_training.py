"""Calibration-aware training and ensembling, end to end.

Reproduces the package's headline behaviour in miniature: on noisy blobs a
plain cross-entropy model becomes overconfident, adding the kernel
calibration penalty (MMCE) or the accuracy-versus-uncertainty penalty (AvUC)
shrinks the calibration error, and averaging an ensemble of independently
seeded runs shrinks it further. Runs in about a minute.
"""

import dataclasses

from caliblab.config import LossWeights, ModelSpec, OptimizerSpec, TrainingConfig
from caliblab.datasets import DatasetSpec, make_dataset
from caliblab.harness import multi_seed

dataset = make_dataset(
    DatasetSpec(
        kind="blobs",
        samples=2000,
        classes=2,
        noise=1.0,
        label_noise=0.15,
        train_frac=0.05,
        val_frac=0.05,
        test_frac=0.9,
        seed=0,
    )
)
print(
    "data: 2 blobs, 15% of labels flipped, "
    f"{dataset.x_train.shape[0]} train / {dataset.x_test.shape[0]} test points"
)
print("the tiny train split invites memorization, so the baseline ends up")
print("confident far beyond its accuracy — the classic calibration failure\n")

base = TrainingConfig(
    model=ModelSpec(hidden=(64, 64)),
    loss=LossWeights(),
    optimizer=OptimizerSpec(lr=3e-3),
    epochs=600,
    batch_size=16,
    seed=0,
)

variants = {
    "baseline (cross-entropy)": base,
    "+ MMCE 0.4": dataclasses.replace(base, loss=LossWeights(mmce=0.4)),
    "+ AvUC 1.5": dataclasses.replace(base, loss=LossWeights(avuc=1.5)),
}

k = 5  # seeds per variant; bump to 10 for smoother means
print(f"{'variant':26s} {'mean ECE':>9s} {'mean BACC':>10s}")
ensemble_line = None
for name, config in variants.items():
    agg = multi_seed(config, dataset, k=k, with_ensemble=name.startswith("baseline"))
    print(f"{name:26s} {agg.mean['ece']:9.4f} {agg.mean['bacc']:10.4f}")
    if agg.ensemble_report is not None:
        ens = agg.ensemble_report
        ensemble_line = f"{'ensemble of ' + str(k) + ' baselines':26s} {ens.ece:9.4f} {ens.bacc:10.4f}"
print(ensemble_line)
print()
print("both penalties trade a little sharpness for calibration, and the")
print("ensemble improves calibration without touching the training loss.")
