"""Calibration and accuracy metrics over per-sample prediction records.

Binning conventions
-------------------
Fixed-width scheme: ``n_bins`` equal intervals of [0, 1]; bin k holds
confidences in [k/n, (k+1)/n) and the last bin is closed on the right, so a
confidence of exactly 1.0 lands in the top bin. Adaptive scheme: records are
stably sorted by confidence and split into ``n_bins`` contiguous groups whose
sizes differ by at most one (earlier groups take the extra element).

ECE is the support-weighted mean absolute gap between bin accuracy and bin
confidence, MCE the maximum gap over non-empty bins, and the overconfidence
error weights each bin's *positive* gap by its mean confidence. All of them
are computed from the same ``BinTable`` the reliability diagram uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Array = np.ndarray

_SIMPLEX_TOL = 1e-9


@dataclass
class PredictionRecord:
    """One scored test sample."""

    sample_id: int
    true_label: int
    pred_label: int
    confidence: float
    uncertainty: float
    probs: Array


def validate_records(records: list[PredictionRecord]) -> None:
    """Reject structurally broken records; cheap enough to run everywhere."""
    if not records:
        raise ValueError("need at least one prediction record")
    classes = records[0].probs.shape[0]
    for i, rec in enumerate(records):
        p = rec.probs
        if p.ndim != 1 or p.shape[0] != classes:
            raise ValueError(f"record {i}: inconsistent probability width")
        if abs(p.sum() - 1.0) > _SIMPLEX_TOL or p.min() < -_SIMPLEX_TOL:
            raise ValueError(f"record {i}: probabilities are off the simplex")
        if not 0 <= rec.pred_label < classes:
            raise ValueError(f"record {i}: predicted label out of range")
        if not 0 <= rec.true_label < classes:
            raise ValueError(f"record {i}: true label out of range")
        if not -_SIMPLEX_TOL <= rec.confidence <= 1.0 + _SIMPLEX_TOL:
            raise ValueError(f"record {i}: confidence outside [0, 1]")
        if abs(rec.confidence - p[rec.pred_label]) > _SIMPLEX_TOL:
            raise ValueError(
                f"record {i}: confidence does not match predicted-class probability"
            )
        if not -_SIMPLEX_TOL <= rec.uncertainty <= 1.0 + _SIMPLEX_TOL:
            raise ValueError(f"record {i}: uncertainty outside [0, 1]")


def _extract(records: list[PredictionRecord]) -> tuple[Array, Array, Array, Array]:
    conf = np.array([r.confidence for r in records])
    correct = np.array(
        [r.pred_label == r.true_label for r in records], dtype=np.float64
    )
    labels = np.array([r.true_label for r in records], dtype=np.int64)
    probs = np.stack([r.probs for r in records])
    return conf, correct, labels, probs


@dataclass
class BinTable:
    """Per-bin support for reliability diagrams and binned metrics."""

    scheme: str
    n_bins: int
    n_samples: int
    lower: Array
    upper: Array
    count: Array
    mean_confidence: Array
    accuracy: Array


def reliability_bins(
    records: list[PredictionRecord], n_bins: int = 10, scheme: str = "fixed"
) -> BinTable:
    validate_records(records)
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    conf, correct, _, _ = _extract(records)
    n = conf.shape[0]

    if scheme == "fixed":
        boundaries = np.arange(n_bins + 1) / n_bins
        # side="right" puts a confidence equal to a boundary into the upper
        # bin, matching [k/n, (k+1)/n); the clamp closes the last bin at 1.
        idx = np.minimum(
            np.searchsorted(boundaries, conf, side="right") - 1, n_bins - 1
        )
        lower = boundaries[:-1]
        upper = boundaries[1:]
        members = [idx == k for k in range(n_bins)]
    elif scheme == "adaptive":
        if n < n_bins:
            raise ValueError(
                f"adaptive binning needs at least {n_bins} records, got {n}"
            )
        order = np.argsort(conf, kind="stable")
        groups = np.array_split(order, n_bins)
        members = []
        lower = np.zeros(n_bins)
        upper = np.zeros(n_bins)
        for k, group in enumerate(groups):
            mask = np.zeros(n, dtype=bool)
            mask[group] = True
            members.append(mask)
            lower[k] = conf[group[0]]
            upper[k] = conf[group[-1]]
    else:
        raise ValueError(f"unknown binning scheme {scheme!r}")

    count = np.zeros(n_bins, dtype=np.int64)
    mean_conf = np.zeros(n_bins)
    accuracy = np.zeros(n_bins)
    for k, mask in enumerate(members):
        count[k] = int(np.sum(mask))
        if count[k] > 0:
            mean_conf[k] = conf[mask].mean()
            accuracy[k] = correct[mask].mean()
    return BinTable(
        scheme=scheme,
        n_bins=n_bins,
        n_samples=n,
        lower=lower,
        upper=upper,
        count=count,
        mean_confidence=mean_conf,
        accuracy=accuracy,
    )


def ece_from_table(table: BinTable) -> float:
    weights = table.count / table.n_samples
    gaps = np.abs(table.accuracy - table.mean_confidence)
    return float(np.sum(weights * gaps * (table.count > 0)))


def mce_from_table(table: BinTable) -> float:
    gaps = np.abs(table.accuracy - table.mean_confidence)
    occupied = table.count > 0
    return float(np.max(gaps[occupied]))


def overconfidence_from_table(table: BinTable) -> float:
    weights = table.count / table.n_samples
    gaps = np.maximum(table.mean_confidence - table.accuracy, 0.0)
    return float(np.sum(weights * table.mean_confidence * gaps * (table.count > 0)))


def expected_calibration_error(
    records: list[PredictionRecord], n_bins: int = 10
) -> float:
    return ece_from_table(reliability_bins(records, n_bins, "fixed"))


def adaptive_calibration_error(
    records: list[PredictionRecord], n_bins: int = 10
) -> float:
    return ece_from_table(reliability_bins(records, n_bins, "adaptive"))


def max_calibration_error(
    records: list[PredictionRecord], n_bins: int = 10
) -> float:
    return mce_from_table(reliability_bins(records, n_bins, "fixed"))


def overconfidence_error(
    records: list[PredictionRecord], n_bins: int = 10
) -> float:
    return overconfidence_from_table(reliability_bins(records, n_bins, "fixed"))


def balanced_accuracy(records: list[PredictionRecord]) -> float:
    """Mean per-class recall over the classes present among true labels."""
    validate_records(records)
    _, correct, labels, _ = _extract(records)
    recalls = []
    for cls in np.unique(labels):
        mask = labels == cls
        recalls.append(correct[mask].mean())
    return float(np.mean(recalls))


def brier_score(records: list[PredictionRecord]) -> float:
    """Multiclass Brier score: mean squared distance to the one-hot target."""
    validate_records(records)
    _, _, labels, probs = _extract(records)
    target = np.zeros_like(probs)
    target[np.arange(labels.shape[0]), labels] = 1.0
    return float(np.mean(np.sum((probs - target) ** 2, axis=1)))


@dataclass
class CalibrationReport:
    """Every summary metric plus the bin tables they were computed from."""

    bacc: float
    ece: float
    aece: float
    mce: float
    oe: float
    brier: float
    n_bins: int
    n_samples: int
    fixed_bins: BinTable
    adaptive_bins: BinTable

    def metric_dict(self) -> dict[str, float]:
        return {
            "bacc": self.bacc,
            "ece": self.ece,
            "aece": self.aece,
            "mce": self.mce,
            "oe": self.oe,
            "brier": self.brier,
        }


def calibration_report(
    records: list[PredictionRecord], n_bins: int = 10
) -> CalibrationReport:
    """Compute all metrics from one pair of bin tables, so the binned
    numbers agree bitwise with the reliability diagram export."""
    fixed = reliability_bins(records, n_bins, "fixed")
    adaptive = reliability_bins(records, n_bins, "adaptive")
    return CalibrationReport(
        bacc=balanced_accuracy(records),
        ece=ece_from_table(fixed),
        aece=ece_from_table(adaptive),
        mce=mce_from_table(fixed),
        oe=overconfidence_from_table(fixed),
        brier=brier_score(records),
        n_bins=n_bins,
        n_samples=fixed.n_samples,
        fixed_bins=fixed,
        adaptive_bins=adaptive,
    )
