"""Classification losses: cross-entropy, evidential, and calibration-aware.

All losses are scalar tape tensors, means over the batch where applicable,
and differentiable with respect to every model parameter on their path.
Correctness bits (is the argmax prediction right) are treated as constants:
they come from a locally constant argmax, so they carry no gradient.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _sp

from .autodiff import Array, Tensor, as_tensor, constant
from .config import LossWeights
from .uncertainty import DirichletOutput, ModelOutput

_LOG_FLOOR = 1e-12
_BCE_CLAMP = 1e-7
_COUNT_EPS = 1e-8


def one_hot(labels: Array, classes: int) -> Array:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("labels must be a 1-D integer array")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"label out of range [0, {classes})")
    out = np.zeros((labels.shape[0], classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _check_simplex(probs: Array) -> None:
    if probs.ndim != 2:
        raise ValueError("probabilities must be a 2-D array of rows")
    drift = np.abs(probs.sum(axis=1) - 1.0)
    if probs.min() < -1e-9 or drift.max() > 1e-9:
        raise ValueError("probability rows must lie on the simplex")


def cross_entropy(probs: Tensor, labels: Array) -> Tensor:
    """Mean negative log-probability of the true class, floor-clamped."""
    probs = as_tensor(probs)
    _check_simplex(probs.data)
    mask = one_hot(labels, probs.data.shape[1])
    p_true = (probs * constant(mask)).sum(axis=1)
    return -(p_true.clamp_min(_LOG_FLOOR).log().mean())


def dirichlet_kl_uniform(alpha: Tensor) -> Tensor:
    """Per-sample KL divergence from Dirichlet(alpha) to the flat Dirichlet.

    Closed form: ln G(S) - sum_c ln G(a_c) - ln G(M)
                 + sum_c (a_c - 1) (psi(a_c) - psi(S)),  S = sum_c a_c.
    Zero exactly when every concentration parameter is 1.
    """
    alpha = as_tensor(alpha)
    if alpha.data.ndim != 2:
        raise ValueError("alpha must be a 2-D array of Dirichlet rows")
    if alpha.data.min() <= 0:
        raise ValueError("Dirichlet parameters must be positive")
    m = alpha.data.shape[1]
    total = alpha.sum(axis=1, keepdims=True)
    log_norm = total.reshape((-1,)).gammaln() - alpha.gammaln().sum(axis=1)
    geometric = ((alpha - 1.0) * (alpha.digamma() - total.digamma())).sum(axis=1)
    return log_norm - float(_sp.gammaln(m)) + geometric


def evidential_loss(
    dirichlet: DirichletOutput, labels: Array, kl_weight: float = 0.0
) -> Tensor:
    """Dirichlet data term plus a weighted misleading-evidence KL penalty.

    Data term per sample: psi(S) - psi(alpha_true). The KL penalty removes
    the true-class evidence first (alpha_tilde = y + (1-y)*alpha), so only
    evidence assigned to wrong classes is pushed toward the flat prior.
    """
    if kl_weight < 0:
        raise ValueError("kl_weight must be non-negative")
    alpha = dirichlet.alpha
    mask = constant(one_hot(labels, alpha.data.shape[1]))
    alpha_true = (alpha * mask).sum(axis=1)
    strength = dirichlet.strength.reshape((-1,))
    data_term = (strength.digamma() - alpha_true.digamma()).mean()
    if kl_weight == 0.0:
        return data_term
    alpha_tilde = mask + (1.0 - mask) * alpha
    return data_term + kl_weight * dirichlet_kl_uniform(alpha_tilde).mean()


def avuc_loss(
    confidence: Tensor,
    uncertainty: Tensor,
    correct: Array,
    conf_threshold: float = 0.5,
    unc_threshold: float = 0.5,
    sharpness: float = 0.1,
) -> Tensor:
    """Soft accuracy-versus-uncertainty loss.

    Each sample gets a smooth certain-membership: the product of a rising
    sigmoid in confidence around `conf_threshold` and a falling sigmoid in
    uncertainty around `unc_threshold` (temperature `sharpness`). Combined
    with the hard correctness bit this yields soft counts of the four
    accurate/inaccurate x certain/uncertain cells, and the loss is
    log(1 + (n_au + n_ic) / (n_ac + n_iu + eps)): zero when mass sits only
    in the two aligned cells. As sharpness -> 0 the counts become the hard
    threshold counts.
    """
    if not (0.0 < conf_threshold < 1.0 and 0.0 < unc_threshold < 1.0):
        raise ValueError("avuc thresholds must lie strictly inside (0, 1)")
    if sharpness <= 0:
        raise ValueError("avuc sharpness must be positive")
    r = as_tensor(confidence)
    u = as_tensor(uncertainty)
    if r.data.shape != u.data.shape or r.data.ndim != 1:
        raise ValueError("confidence and uncertainty must be aligned 1-D arrays")
    acc = np.asarray(correct, dtype=np.float64)
    if acc.shape != r.data.shape:
        raise ValueError("correctness bits must align with confidence")
    inv = 1.0 / sharpness
    certain = ((r - conf_threshold) * inv).sigmoid() * (
        (unc_threshold - u) * inv
    ).sigmoid()
    acc_t = constant(acc)
    inacc_t = constant(1.0 - acc)
    n_ac = (acc_t * certain).sum()
    n_au = (acc_t * (1.0 - certain)).sum()
    n_ic = (inacc_t * certain).sum()
    n_iu = (inacc_t * (1.0 - certain)).sum()
    ratio = (n_au + n_ic) / (n_ac + n_iu + _COUNT_EPS)
    return (1.0 + ratio).log()


def mmce_loss(
    confidence: Tensor, correct: Array, kernel_width: float = 0.4
) -> Tensor:
    """Kernel maximum mean calibration error over a batch.

    With a Laplacian kernel k(a, b) = exp(-|a - b| / width), m correct
    samples out of n, and confidences r:

        sum_{i,j incorrect} r_i r_j k / (n-m)^2
      + sum_{i,j correct} (1-r_i)(1-r_j) k / m^2
      - 2 sum_{i correct, j incorrect} (1-r_i) r_j k / ((n-m) m)

    The value is the square root of that (clamped at zero) sum. Categories
    with no members contribute nothing, so single-sided batches are safe.
    """
    if kernel_width <= 0:
        raise ValueError("kernel width must be positive")
    r = as_tensor(confidence)
    if r.data.ndim != 1:
        raise ValueError("confidence must be a 1-D array")
    flags = np.asarray(correct, dtype=bool)
    if flags.shape != r.data.shape:
        raise ValueError("correctness bits must align with confidence")
    n = r.data.shape[0]
    if n < 1:
        raise ValueError("mmce needs a non-empty batch")
    m = int(flags.sum())
    col = r.reshape((n, 1))
    row = r.reshape((1, n))
    kernel = (-((col - row).abs() * (1.0 / kernel_width))).exp()
    cor = flags.astype(np.float64)
    inc = 1.0 - cor

    total: Tensor | None = None
    if n - m > 0:
        pair = constant(np.outer(inc, inc))
        term = (kernel * (col * row) * pair).sum() * (1.0 / (n - m) ** 2)
        total = term
    if m > 0:
        pair = constant(np.outer(cor, cor))
        term = (kernel * ((1.0 - col) * (1.0 - row)) * pair).sum() * (1.0 / m**2)
        total = term if total is None else total + term
    if m > 0 and n - m > 0:
        pair = constant(np.outer(cor, inc))
        term = (kernel * ((1.0 - col) * row) * pair).sum() * (2.0 / ((n - m) * m))
        total = total - term
    return total.clamp_min(0.0).sqrt()


def ldu_aux_losses(
    latent: Tensor,
    prototypes: Tensor,
    probs: Tensor,
    predicted_uncertainty: Tensor,
    labels: Array,
) -> tuple[Tensor, Tensor, Tensor]:
    """Auxiliary terms for the prototype head.

    Returns (entropy, dispersion, uncertainty_bce):
    * entropy: mean Shannon entropy of the prototype-softmax rows,
    * dispersion: mean over distinct prototype pairs of exp(-||p_a - p_b||^2),
      zero when fewer than two prototypes exist,
    * uncertainty_bce: binary cross-entropy between the predicted
      uncertainty and the error indicator (1 - correctness), with the
      probability clamped to [1e-7, 1 - 1e-7].
    """
    latent = as_tensor(latent)
    prototypes = as_tensor(prototypes)
    probs = as_tensor(probs)
    if latent.data.shape[1] != prototypes.data.shape[1]:
        raise ValueError("latent width must match prototype width")
    _check_simplex(probs.data)

    entropy = -((probs * probs.clamp_min(_LOG_FLOOR).log()).sum(axis=1)).mean()

    m, d = prototypes.data.shape
    if m < 2:
        dispersion = constant(0.0)
    else:
        diff = prototypes.reshape((m, 1, d)) - prototypes.reshape((1, m, d))
        sq_dist = (diff * diff).sum(axis=2)
        off_diagonal = constant(1.0 - np.eye(m))
        dispersion = ((-sq_dist).exp() * off_diagonal).sum() * (1.0 / (m * (m - 1)))

    labels = np.asarray(labels)
    errors = (np.argmax(probs.data, axis=1) != labels).astype(np.float64)
    u = predicted_uncertainty.clamp_min(_BCE_CLAMP).clamp_max(1.0 - _BCE_CLAMP)
    err_t = constant(errors)
    bce = -((err_t * u.log() + (1.0 - err_t) * (1.0 - u).log()).mean())
    return entropy, dispersion, bce


def total_loss(output: ModelOutput, labels: Array, weights: LossWeights) -> Tensor:
    """Compose the training loss for a head and a set of term weights.

    Terms with zero weight are skipped entirely, so the all-zero setting is
    bitwise the plain baseline loss for the head. Weights that do not apply
    to the given head are ignored.
    """
    labels = np.asarray(labels)
    if output.head == "enn":
        loss = evidential_loss(output.dirichlet, labels, weights.evidential_kl)
    else:
        loss = cross_entropy(output.probs, labels)

    if output.head == "dm" and (
        weights.dm_entropy > 0
        or weights.proto_dispersion > 0
        or weights.uncertainty_bce > 0
    ):
        entropy, dispersion, bce = ldu_aux_losses(
            output.latent,
            output.prototypes,
            output.probs,
            output.uncertainty,
            labels,
        )
        if weights.dm_entropy > 0:
            loss = loss + weights.dm_entropy * entropy
        if weights.proto_dispersion > 0:
            loss = loss + weights.proto_dispersion * dispersion
        if weights.uncertainty_bce > 0:
            loss = loss + weights.uncertainty_bce * bce

    if weights.avuc > 0 or weights.mmce > 0:
        correct = output.predictions == labels
        if weights.avuc > 0:
            loss = loss + weights.avuc * avuc_loss(
                output.confidence,
                output.uncertainty,
                correct,
                conf_threshold=weights.conf_threshold,
                unc_threshold=weights.unc_threshold,
                sharpness=weights.avuc_sharpness,
            )
        if weights.mmce > 0:
            loss = loss + weights.mmce * mmce_loss(
                output.confidence, correct, kernel_width=weights.kernel_width
            )
    return loss
