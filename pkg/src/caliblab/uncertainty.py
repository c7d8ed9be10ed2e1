"""Deterministic uncertainty heads: evidential, spectral-norm, prototype.

Three architectural pieces give a single-pass network a usable uncertainty
signal:

* an evidential head that maps logits to Dirichlet parameters,
* spectral normalization that caps the Lipschitz constant of dense layers,
* a distance-based prototype layer whose logits are negative euclidean
  distances to trainable class prototypes.

``uncertainty_of`` extracts a (confidence, uncertainty) pair per sample in a
head-appropriate way so downstream losses and metrics never special-case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Array, Tensor, as_tensor, constant, softmax


@dataclass
class DirichletOutput:
    """Evidential head outputs; all fields are tape tensors, rows align."""

    evidence: Tensor      # relu(logits), shape (n, M)
    alpha: Tensor         # evidence + 1
    strength: Tensor      # row sums of alpha, shape (n, 1)
    prob: Tensor          # expected probabilities alpha / strength
    belief: Tensor        # evidence / strength
    uncertainty: Tensor   # M / strength, shape (n,)

    @property
    def n_classes(self) -> int:
        return self.alpha.data.shape[1]


def evidence_head(logits: Tensor) -> DirichletOutput:
    """Interpret logits as evidence for a Dirichlet over class probabilities.

    Evidence is relu(logits), so it is non-negative; each class parameter is
    evidence + 1 and the per-sample uncertainty mass is M / sum(alpha). With
    zero evidence the head is maximally uncertain: uniform probabilities and
    uncertainty exactly 1.
    """
    logits = as_tensor(logits)
    if logits.data.ndim != 2:
        raise ValueError("evidence head expects 2-D logits")
    n_classes = logits.data.shape[1]
    evidence = logits.relu()
    alpha = evidence + 1.0
    strength = alpha.sum(axis=1, keepdims=True)
    prob = alpha / strength
    belief = evidence / strength
    uncertainty = (float(n_classes) / strength).reshape((-1,))
    return DirichletOutput(
        evidence=evidence,
        alpha=alpha,
        strength=strength,
        prob=prob,
        belief=belief,
        uncertainty=uncertainty,
    )


class SpectralNorm:
    """Spectral normalization state for one weight matrix.

    Keeps persistent singular-vector estimates that are refined by power
    iteration (`refresh`), and rescales the weight so its spectral norm does
    not exceed `coeff`. Already-compliant weights pass through unchanged
    because the divisor is max(1, sigma/coeff).
    """

    def __init__(
        self,
        coeff: float,
        shape: tuple[int, int],
        rng: np.random.Generator,
        power_iters: int = 1,
        init_iters: int = 30,
    ):
        if coeff <= 0:
            raise ValueError("spectral norm coefficient must be positive")
        if power_iters < 1 or init_iters < 1:
            raise ValueError("power-iteration counts must be positive")
        self.coeff = float(coeff)
        self.power_iters = int(power_iters)
        self.init_iters = int(init_iters)
        n_out, n_in = shape
        u = rng.standard_normal(n_out)
        self.u = u / np.linalg.norm(u)
        v = rng.standard_normal(n_in)
        self.v = v / np.linalg.norm(v)
        self._initialized = False

    def refresh(self, weight: Array, iters: int | None = None) -> float:
        """Run power-iteration steps on `weight`; returns the sigma estimate.

        The first call uses `init_iters` steps and then continues until the
        estimate stabilizes, so the initial estimate is trustworthy even for
        spectra with near-tied leading singular values.
        """
        if not self._initialized:
            sigma = self._iterate(weight, self.init_iters)
            for _ in range(1000):
                prev = sigma
                sigma = self._iterate(weight, 1)
                if abs(sigma - prev) <= 1e-10 * max(sigma, 1.0):
                    break
            self._initialized = True
            return sigma
        return self._iterate(weight, self.power_iters if iters is None else iters)

    def _iterate(self, weight: Array, steps: int) -> float:
        u, v = self.u, self.v
        for _ in range(steps):
            wu = weight.T @ u
            norm = np.linalg.norm(wu)
            if norm > 0.0:
                v = wu / norm
            wv = weight @ v
            norm = np.linalg.norm(wv)
            if norm > 0.0:
                u = wv / norm
        self.u, self.v = u, v
        return float(u @ weight @ v)

    def normalized(self, weight: Tensor) -> Tensor:
        """Weight divided by max(1, sigma/coeff), sigma on the tape.

        Sigma is the bilinear form u^T W v with the persistent vectors held
        constant, so the rescaling is differentiated through W.
        """
        if not self._initialized:
            self.refresh(weight.data)
        u_row = constant(self.u.reshape(1, -1))
        v_col = constant(self.v.reshape(-1, 1))
        sigma = (u_row @ weight @ v_col).reshape(())
        scale = (sigma * (1.0 / self.coeff)).clamp_min(1.0)
        return weight / scale


def spectral_normalize(weight: Tensor, state: SpectralNorm) -> Tensor:
    """Refresh the power-iteration state for `weight` and rescale it."""
    weight = as_tensor(weight)
    state.refresh(weight.data)
    return state.normalized(weight)


def init_prototypes(
    n_classes: int, dim: int, rng: np.random.Generator
) -> Array:
    """Standard-normal prototypes scaled by 1/sqrt(dim), one row per class."""
    return rng.standard_normal((n_classes, dim)) / np.sqrt(dim)


def dm_logits(latent: Tensor, prototypes: Tensor) -> Tensor:
    """Distance-based logits: minus the euclidean distance to each prototype.

    A sample sitting exactly on prototype k gets logit_k = 0; every other
    logit is negative, so the softmax over these logits peaks at the nearest
    prototype.
    """
    latent = as_tensor(latent)
    prototypes = as_tensor(prototypes)
    if latent.data.ndim != 2 or prototypes.data.ndim != 2:
        raise ValueError("dm_logits expects 2-D latent and prototype arrays")
    if latent.data.shape[1] != prototypes.data.shape[1]:
        raise ValueError(
            f"latent width {latent.data.shape[1]} != prototype width "
            f"{prototypes.data.shape[1]}"
        )
    n, d = latent.data.shape
    m = prototypes.data.shape[0]
    diff = latent.reshape((n, 1, d)) - prototypes.reshape((1, m, d))
    sq_dist = (diff * diff).sum(axis=2)
    return -(sq_dist.sqrt())


@dataclass
class ModelOutput:
    """Everything a classification head produces for one batch."""

    head: str
    logits: Tensor
    probs: Tensor
    confidence: Tensor
    uncertainty: Tensor
    dirichlet: DirichletOutput | None = None
    latent: Tensor | None = None
    prototypes: Tensor | None = None

    @property
    def predictions(self) -> Array:
        return np.argmax(self.probs.data, axis=1)


def uncertainty_of(head: str, output) -> tuple[Tensor, Tensor]:
    """Per-sample (confidence, uncertainty) tensors for a head's raw output.

    softmax: `output` is a row-stochastic probability tensor; confidence is
    the winning probability and uncertainty its complement. enn: `output` is
    a DirichletOutput; confidence is the top expected probability and
    uncertainty the Dirichlet mass M/S. dm: `output` is the distance-logit
    tensor; the softmax of those logits is scored like the softmax head.
    """
    if head == "softmax":
        probs = as_tensor(output)
        conf = probs.row_max()
        return conf, 1.0 - conf
    if head == "enn":
        if not isinstance(output, DirichletOutput):
            raise TypeError("enn head expects a DirichletOutput")
        conf = output.prob.row_max()
        return conf, output.uncertainty
    if head == "dm":
        probs = softmax(as_tensor(output))
        conf = probs.row_max()
        return conf, 1.0 - conf
    raise ValueError(f"unknown head kind {head!r}")
