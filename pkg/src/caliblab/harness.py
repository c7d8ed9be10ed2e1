"""Training, evaluation, grid search, multi-seed runs, and ensembling.

A run is fully determined by its ``TrainingConfig`` and ``Dataset``: the
master seed fans out into independent streams for initialization, batch
shuffling, and augmentation, and every optimizer and dataset operation is
numpy-deterministic, so repeated runs produce identical parameters and
prediction records.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, constant, gradients, parameter, softmax
from .config import ModelSpec, OptimizerSpec, TrainingConfig, apply_override
from .datasets import Dataset, augment
from .losses import total_loss
from .metrics import (
    CalibrationReport,
    PredictionRecord,
    balanced_accuracy,
    calibration_report,
    expected_calibration_error,
    validate_records,
)
from .nn import Adam, DenseLayer, SGDMomentum, init_dense
from .uncertainty import (
    ModelOutput,
    SpectralNorm,
    dm_logits,
    evidence_head,
    init_prototypes,
)

METRIC_NAMES = ("bacc", "ece", "aece", "mce", "oe", "brier")


class TrainingError(RuntimeError):
    """Raised when a run cannot proceed (for example a non-finite loss)."""


class Classifier:
    """Dense backbone plus one of the three uncertainty heads."""

    def __init__(
        self,
        spec: ModelSpec,
        n_features: int,
        n_classes: int,
        rng: np.random.Generator,
    ):
        spec.validate()
        self.spec = spec
        self.n_features = n_features
        self.n_classes = n_classes

        widths = [n_features, *spec.hidden]
        self.layers: list[DenseLayer] = []
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            self.layers.append(init_dense(n_in, n_out, rng, activation="relu"))
        if spec.head in ("softmax", "enn"):
            self.layers.append(
                init_dense(widths[-1], n_classes, rng, activation="identity")
            )
            self.prototypes = None
        else:  # dm: prototypes live in the latent space of the last layer
            self.prototypes = parameter(
                init_prototypes(n_classes, widths[-1], rng)
            )

        self.sn: list[SpectralNorm | None] = []
        for layer in self.layers:
            if spec.spectral_norm:
                self.sn.append(
                    SpectralNorm(
                        coeff=spec.sn_coeff,
                        shape=layer.weight.data.shape,
                        rng=rng,
                        power_iters=spec.sn_power_iters,
                    )
                )
            else:
                self.sn.append(None)

    def parameters(self) -> list[Tensor]:
        params: list[Tensor] = []
        for layer in self.layers:
            params.extend(layer.parameters())
        if self.prototypes is not None:
            params.append(self.prototypes)
        return params

    def forward(self, x: np.ndarray, refresh_sn: bool = False) -> ModelOutput:
        """Score a batch. `refresh_sn` advances the power iteration once and
        belongs in the training loop; evaluation must not mutate state."""
        out = constant(np.asarray(x, dtype=np.float64))
        if out.data.ndim != 2 or out.data.shape[1] != self.n_features:
            raise ValueError(
                f"expected batch of width {self.n_features}, got {out.data.shape}"
            )
        for layer, sn in zip(self.layers, self.sn):
            weight = None
            if sn is not None:
                if refresh_sn:
                    sn.refresh(layer.weight.data)
                weight = sn.normalized(layer.weight)
            out = layer(out, weight=weight)
        if not np.all(np.isfinite(out.data)):
            raise TrainingError(
                "non-finite activations in the forward pass: the run diverged"
            )

        head = self.spec.head
        if head == "softmax":
            probs = softmax(out)
            conf = probs.row_max()
            return ModelOutput(
                head=head,
                logits=out,
                probs=probs,
                confidence=conf,
                uncertainty=1.0 - conf,
            )
        if head == "enn":
            dirichlet = evidence_head(out)
            conf = dirichlet.prob.row_max()
            return ModelOutput(
                head=head,
                logits=out,
                probs=dirichlet.prob,
                confidence=conf,
                uncertainty=dirichlet.uncertainty,
                dirichlet=dirichlet,
            )
        logits = dm_logits(out, self.prototypes)
        if not np.all(np.isfinite(logits.data)):
            raise TrainingError(
                "non-finite distance logits in the forward pass: the run diverged"
            )
        probs = softmax(logits)
        conf = probs.row_max()
        return ModelOutput(
            head=head,
            logits=logits,
            probs=probs,
            confidence=conf,
            uncertainty=1.0 - conf,
            latent=out,
            prototypes=self.prototypes,
        )


def make_optimizer(spec: OptimizerSpec):
    spec.validate()
    if spec.kind == "adam":
        return Adam(
            lr=spec.lr, beta1=spec.beta1, beta2=spec.beta2, epsilon=spec.epsilon
        )
    return SGDMomentum(lr=spec.lr, momentum=spec.momentum)


def fit(config: TrainingConfig, dataset: Dataset) -> tuple[Classifier, int]:
    """Train a classifier on the dataset's train split; returns (model, steps)."""
    config.validate()
    seq = np.random.SeedSequence(config.seed)
    rng_init, rng_shuffle, rng_augment = (
        np.random.default_rng(s) for s in seq.spawn(3)
    )
    model = Classifier(config.model, dataset.n_features, dataset.n_classes, rng_init)
    params = model.parameters()
    opt = make_optimizer(config.optimizer)

    n = dataset.x_train.shape[0]
    steps = 0
    for epoch in range(config.epochs):
        perm = rng_shuffle.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            xb = dataset.x_train[idx]
            yb = dataset.y_train[idx]
            if config.augment:
                xb, yb = augment(xb, yb, rng_augment, dataset.spec)
            try:
                output = model.forward(xb, refresh_sn=True)
            except TrainingError as exc:
                raise TrainingError(
                    f"epoch {epoch}, batch {start // config.batch_size}: {exc}"
                ) from None
            loss = total_loss(output, yb, config.loss)
            if not np.all(np.isfinite(loss.data)):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            opt.step(params, gradients(loss, params))
            steps += 1
    return model, steps


def predict_records(
    model: Classifier,
    x: np.ndarray,
    y: np.ndarray,
    sample_ids: np.ndarray | None = None,
) -> list[PredictionRecord]:
    output = model.forward(x)
    probs = output.probs.data
    conf = output.confidence.data
    unc = output.uncertainty.data
    preds = output.predictions
    ids = np.arange(len(y)) if sample_ids is None else np.asarray(sample_ids)
    records = [
        PredictionRecord(
            sample_id=int(ids[i]),
            true_label=int(y[i]),
            pred_label=int(preds[i]),
            confidence=float(conf[i]),
            uncertainty=float(unc[i]),
            probs=probs[i].copy(),
        )
        for i in range(len(y))
    ]
    validate_records(records)
    return records


def params_digest(model: Classifier) -> str:
    blob = b"".join(np.ascontiguousarray(p.data).tobytes() for p in model.parameters())
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunResult:
    records: list[PredictionRecord]
    report: CalibrationReport
    seed: int
    steps: int
    wall_time_s: float
    params_digest: str


def train(
    config: TrainingConfig, dataset: Dataset, n_bins: int = 10
) -> RunResult:
    """Fit on train, score the test split, and report calibration metrics."""
    started = time.perf_counter()
    model, steps = fit(config, dataset)
    records = predict_records(model, dataset.x_test, dataset.y_test)
    report = calibration_report(records, n_bins=n_bins)
    return RunResult(
        records=records,
        report=report,
        seed=config.seed,
        steps=steps,
        wall_time_s=time.perf_counter() - started,
        params_digest=params_digest(model),
    )


# -- grid search ---------------------------------------------------------------


@dataclass
class GridCandidate:
    overrides: dict
    val_bacc: float
    val_ece: float


@dataclass
class GridResult:
    best: TrainingConfig
    best_overrides: dict
    trace: list[GridCandidate]


def grid_search(
    config: TrainingConfig,
    dataset: Dataset,
    space: dict[str, list],
    n_bins: int = 10,
) -> GridResult:
    """Exhaustive sweep over the Cartesian product of `space`.

    Candidates are ranked by validation balanced accuracy; exact ties fall
    back to the lower validation ECE and then to first-seen order. The trace
    records every candidate in evaluation order.
    """
    if not space:
        raise ValueError("grid search needs at least one swept key")
    keys = list(space.keys())
    for key, values in space.items():
        if not values:
            raise ValueError(f"grid key {key!r} lists no candidate values")

    trace: list[GridCandidate] = []
    best: TrainingConfig | None = None
    best_overrides: dict = {}
    best_bacc = -np.inf
    best_ece = np.inf
    for combo in itertools.product(*(space[k] for k in keys)):
        overrides = dict(zip(keys, combo))
        candidate = config
        for key, value in overrides.items():
            candidate = apply_override(candidate, key, value)
        candidate.validate()
        model, _ = fit(candidate, dataset)
        records = predict_records(model, dataset.x_val, dataset.y_val)
        bacc = balanced_accuracy(records)
        ece = expected_calibration_error(records, n_bins)
        trace.append(GridCandidate(overrides=overrides, val_bacc=bacc, val_ece=ece))
        if bacc > best_bacc or (bacc == best_bacc and ece < best_ece):
            best = candidate
            best_overrides = overrides
            best_bacc = bacc
            best_ece = ece
    return GridResult(best=best, best_overrides=best_overrides, trace=trace)


# -- multi-seed aggregation ------------------------------------------------------


@dataclass
class AggregateReport:
    seeds: list[int]
    runs: list[RunResult]
    mean: dict[str, float]
    std: dict[str, float]
    ensemble_report: CalibrationReport | None


def multi_seed(
    config: TrainingConfig,
    dataset: Dataset,
    k: int,
    n_bins: int = 10,
    with_ensemble: bool = True,
) -> AggregateReport:
    """Repeat the run with k consecutive seeds; aggregate mean and sample std."""
    if k < 2:
        raise ValueError("multi-seed aggregation needs k >= 2 runs")
    seeds = [config.seed + i for i in range(k)]
    runs = [
        train(dataclasses.replace(config, seed=s), dataset, n_bins=n_bins)
        for s in seeds
    ]
    values = {
        name: np.array([r.report.metric_dict()[name] for r in runs])
        for name in METRIC_NAMES
    }
    mean = {name: float(v.mean()) for name, v in values.items()}
    std = {name: float(v.std(ddof=1)) for name, v in values.items()}
    ensemble_report = None
    if with_ensemble:
        combined = ensemble([r.records for r in runs])
        ensemble_report = calibration_report(combined, n_bins=n_bins)
    return AggregateReport(
        seeds=seeds, runs=runs, mean=mean, std=std, ensemble_report=ensemble_report
    )


# -- ensembling ------------------------------------------------------------------


def ensemble(
    record_lists: list[list[PredictionRecord]],
) -> list[PredictionRecord]:
    """Average probability vectors across aligned prediction logs.

    Logs must cover the same sample ids in the same order with identical
    true labels. Averaged rows are renormalized only if their sum drifts
    from 1 by more than 1e-9; confidence is the winning averaged
    probability and uncertainty its complement.
    """
    if len(record_lists) < 2:
        raise ValueError("ensemble needs at least two prediction logs")
    base = record_lists[0]
    validate_records(base)
    ids = [r.sample_id for r in base]
    labels = [r.true_label for r in base]
    for j, records in enumerate(record_lists[1:], start=2):
        validate_records(records)
        if [r.sample_id for r in records] != ids:
            raise ValueError(f"log {j} is not aligned with log 1 (sample ids differ)")
        if [r.true_label for r in records] != labels:
            raise ValueError(f"log {j} disagrees with log 1 on true labels")
        if records[0].probs.shape != base[0].probs.shape:
            raise ValueError(f"log {j} has a different number of classes")

    stacked = np.stack(
        [np.stack([r.probs for r in records]) for records in record_lists]
    )
    mean_probs = stacked.mean(axis=0)
    sums = mean_probs.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > 1e-9:
        mean_probs = mean_probs / sums[:, None]
    preds = np.argmax(mean_probs, axis=1)
    out = [
        PredictionRecord(
            sample_id=ids[i],
            true_label=labels[i],
            pred_label=int(preds[i]),
            confidence=float(mean_probs[i, preds[i]]),
            uncertainty=1.0 - float(mean_probs[i, preds[i]]),
            probs=mean_probs[i],
        )
        for i in range(len(base))
    ]
    validate_records(out)
    return out
