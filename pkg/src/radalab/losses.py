"""Training objectives and sample-reweighting comparators.

Source classification is mean cross-entropy over the masked-in (labeled
source) samples. The domain adversarial loss is the discriminator's
binary cross-entropy:

    L_adv = - mean_src log p_source - mean_tgt log(1 - p_source)

optionally weighted per sample. The discriminator descends this loss
while the feature path, connected through the gradient-reversal op,
ascends it, which realizes the minmax game with a single optimizer step.

Reweighting modes are comparators for the relabeling strategy: weighting
by object-prediction entropy (easy-transfer priority), its inverse
(hard mining), or the discriminator's own output (down-weighting source
samples it finds easy to spot).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .datasets import SOURCE, TARGET
from .models import DomainPrediction

REWEIGHT_MODES = ("none", "entropy", "inverse_entropy", "discriminator")


@dataclass
class LossConfig:
    lambda_adv: float = 1.0
    reweight_mode: str = "none"
    clamp_eps: float = 1e-12

    def __post_init__(self):
        if self.lambda_adv < 0:
            raise ValueError(f"lambda_adv must be >= 0, got {self.lambda_adv}")
        if not 0.0 < self.clamp_eps <= 1e-6:
            raise ValueError(f"clamp_eps must be in (0, 1e-6], got {self.clamp_eps}")
        if self.reweight_mode not in REWEIGHT_MODES:
            raise ValueError(f"reweight_mode must be one of {REWEIGHT_MODES}, "
                             f"got {self.reweight_mode!r}")


@dataclass
class AdversarialLoss:
    value: Tensor
    target_empty: bool  # every target sample was relabeled away this batch


def classification_loss(log_probs: Tensor, labels, mask) -> Tensor:
    """Mean negative log-likelihood over masked-in samples.

    Masked-out samples (target domain, or relabeled) contribute nothing;
    an all-masked-out batch is the caller's bug and is rejected.
    """
    log_probs = ad.as_tensor(log_probs)
    n, k = log_probs.shape
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    if labels.shape != (n,) or mask.shape != (n,):
        raise ValueError(f"labels/mask must have shape ({n},)")
    count = int(mask.sum())
    if count == 0:
        raise ValueError("classification_loss: every sample is masked out")
    if labels[mask].min() < 0 or labels[mask].max() >= k:
        raise ValueError(f"labels must lie in [0, {k}) where masked in")
    picks = np.zeros((n, k))
    picks[mask, labels[mask]] = 1.0 / count
    return ad.neg(ad.total(ad.mul(log_probs, Tensor(picks))))


def adversarial_loss(preds, domain_labels, weights=None,
                     clamp_eps: float = 1e-12) -> AdversarialLoss:
    """Domain binary cross-entropy under the given (possibly relabeled)
    domain labels.

    Probabilities are clamped into [clamp_eps, 1 - clamp_eps] so saturated
    discriminator outputs cannot produce infinities. If no target-labeled
    samples remain, the target term is dropped and the result is flagged.
    """
    p = preds.p_source if isinstance(preds, DomainPrediction) else ad.as_tensor(preds)
    n = p.shape[0]
    if n == 0:
        raise ValueError("adversarial_loss: empty batch")
    domain_labels = np.asarray(domain_labels, dtype=np.int64)
    if domain_labels.shape != (n,):
        raise ValueError(f"domain_labels must have shape ({n},)")
    if weights is None:
        weights = np.ones(n)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (n,) or np.any(weights <= 0):
        raise ValueError("weights must be positive with one entry per sample")

    src = domain_labels == SOURCE
    tgt = domain_labels == TARGET
    n_src, n_tgt = int(src.sum()), int(tgt.sum())
    if n_src == 0:
        raise ValueError("adversarial_loss: batch has no source-labeled samples")

    pc = ad.clamp(p, clamp_eps, 1.0 - clamp_eps)
    coef_src = np.where(src, weights, 0.0) / n_src
    loss = ad.neg(ad.total(ad.mul(Tensor(coef_src), ad.log(pc))))
    if n_tgt:
        coef_tgt = np.where(tgt, weights, 0.0) / n_tgt
        tgt_term = ad.neg(ad.total(ad.mul(Tensor(coef_tgt), ad.log(ad.sub(1.0, pc)))))
        loss = ad.add(loss, tgt_term)
    return AdversarialLoss(value=loss, target_empty=n_tgt == 0)


def object_entropy(log_probs) -> np.ndarray:
    """Entropy of the predicted class distribution per row (detached)."""
    lp = log_probs.data if isinstance(log_probs, Tensor) else np.asarray(log_probs)
    probs = np.exp(lp)
    return -(probs * lp).sum(axis=1)


def raw_weight(mode: str, entropy: np.ndarray) -> np.ndarray:
    """Unnormalized entropy-based weight: 1 + e^-ent, or its inverse-focus
    counterpart 1 / (1 + e^-ent)."""
    entropy = np.asarray(entropy, dtype=np.float64)
    if mode == "entropy":
        return 1.0 + np.exp(-entropy)
    if mode == "inverse_entropy":
        return 1.0 / (1.0 + np.exp(-entropy))
    raise ValueError(f"raw_weight: no formula for mode {mode!r}")


def sample_weights(mode: str, entropies, domain_preds, domain_labels) -> np.ndarray:
    """Per-sample adversarial weights, mean-normalized to 1 within each
    domain subset so the loss scale is stable across modes.

    "discriminator" mode down-weights source samples the discriminator
    already separates confidently (raw weight = its target-domain
    probability, detached); target samples keep raw weight 1.
    """
    if mode not in REWEIGHT_MODES:
        raise ValueError(f"sample_weights: unknown mode {mode!r}")
    domain_labels = np.asarray(domain_labels, dtype=np.int64)
    n = domain_labels.shape[0]
    if mode == "none":
        return np.ones(n)

    entropies = np.asarray(entropies, dtype=np.float64)
    if entropies.shape != (n,):
        raise ValueError(f"entropies must have shape ({n},)")
    if np.any(entropies < 0):
        raise ValueError("entropies must be nonnegative")

    if mode == "discriminator":
        if domain_preds is None:
            raise ValueError("discriminator mode needs domain predictions")
        p0 = domain_preds.p0.data if isinstance(domain_preds, DomainPrediction) \
            else np.asarray(domain_preds, dtype=np.float64)
        raw = np.where(domain_labels == SOURCE, p0, 1.0)
    else:
        raw = raw_weight(mode, entropies)

    out = raw.astype(np.float64).copy()
    for domain in (SOURCE, TARGET):
        subset = domain_labels == domain
        if subset.any():
            out[subset] /= out[subset].mean()
    return out
