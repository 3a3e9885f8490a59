"""Dynamic domain relabeling to re-energize the domain discriminator.

As adversarial training aligns the two feature distributions, the
discriminator loses its ability to separate them: its predictions drift
toward chance and their binary entropy rises, draining the training
signal it feeds back to the feature extractor. The fix implemented here
relabels, within each mini-batch, target samples the discriminator is
most uncertain about (binary entropy above a threshold tau) as source
samples. The repartitioned distributions are separable again, so the
discriminator re-sharpens and keeps driving alignment.

Relabeling switches on only after the discriminator has plateaued:
when its mean entropy over the training set fails to improve for a
patience number of consecutive epochs. Feature-space mixup between
original source samples and newly relabeled ones fills the density gap
inside the updated source set.

Relabeling is transient: it applies to one mini-batch's working labels
and is recomputed from scratch the next time the sample is seen.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .datasets import SOURCE, TARGET, Batch

LN2 = math.log(2.0)


@dataclass
class RadaConfig:
    tau: float = 0.35
    patience_k: int = 5
    epsilon_improve: float = 1e-3
    mixup_enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.tau <= LN2:
            raise ValueError(f"tau must be in (0, ln 2], got {self.tau}")
        if self.patience_k < 1:
            raise ValueError(f"patience_k must be >= 1, got {self.patience_k}")
        if self.epsilon_improve <= 0:
            raise ValueError(f"epsilon_improve must be > 0, got {self.epsilon_improve}")


@dataclass
class RadaState:
    """Controller memory across epochs. `active` is monotone: once the
    plateau fires, relabeling stays on for the rest of the run."""

    active: bool = False
    best_entropy: float = math.inf
    plateau_counter: int = 0
    entropy_history: list[float] = field(default_factory=list)


@dataclass
class RelabelDecision:
    """Batch positions of target samples to relabel, with the entropies
    the decision was based on (one entry per inspected target sample)."""

    indices: np.ndarray
    entropies: np.ndarray


@dataclass
class MixupResult:
    """Mixed features, all carrying the source domain label and no class
    label; alphas and partner indices are logged for auditing."""

    features: Tensor
    alphas: np.ndarray
    partner_indices: np.ndarray

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def domain_labels(self) -> np.ndarray:
        return np.full(self.n, SOURCE, dtype=np.int64)


def domain_entropy(p0):
    """Binary entropy of a domain prediction, natural log, with the
    0*log(0) = 0 convention. Scalar in, scalar out; array in, array out."""
    arr = np.asarray(p0, dtype=np.float64)
    if np.any(arr < 0) or np.any(arr > 1):
        raise ValueError(f"domain_entropy: probabilities must lie in [0, 1], got {p0}")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(arr > 0, -arr * np.log(arr), 0.0) \
            + np.where(arr < 1, -(1.0 - arr) * np.log(1.0 - arr), 0.0)
    return float(terms) if np.ndim(p0) == 0 else terms


def select_relabels(entropies, tau: float, positions=None) -> RelabelDecision:
    """Pick the well-aligned target samples: entropy strictly above tau.

    `positions` maps each entropy entry to its batch position; defaults
    to 0..n-1 when the entropy vector is already batch-aligned.
    """
    entropies = np.asarray(entropies, dtype=np.float64)
    if positions is None:
        positions = np.arange(entropies.size)
    positions = np.asarray(positions, dtype=np.int64)
    if positions.shape != entropies.shape:
        raise ValueError("positions must align with entropies")
    return RelabelDecision(indices=positions[entropies > tau], entropies=entropies)


def relabel_batch(batch: Batch, decision: RelabelDecision) -> Batch:
    """Flip the decided samples' working domain labels to source.

    Class labels and the classification mask are untouched: a relabeled
    sample still has no usable class label. Only this batch's working
    labels change; the dataset is never written.
    """
    idx = np.asarray(decision.indices, dtype=np.int64)
    if idx.size == 0:
        return batch
    if idx.min() < 0 or idx.max() >= batch.n:
        raise IndexError(f"relabel_batch: position out of range for batch of {batch.n}")
    if np.any(batch.domain_working[idx] != TARGET):
        raise ValueError("relabel_batch: decision points at a non-target sample")
    batch.domain_working[idx] = SOURCE
    return batch


def mixup_features(source_feats: Tensor, relabeled_feats: Tensor,
                   rng: np.random.Generator) -> MixupResult:
    """Convex combinations bridging original source features and newly
    relabeled ones.

    For each relabeled sample, one source partner is drawn uniformly with
    replacement and alpha ~ U(0, 1); the mix is
    alpha * f_source + (1 - alpha) * f_relabeled, labeled source.
    Gradients flow into both parents. Either side empty yields an empty
    result (mixup skipped).
    """
    source_feats = ad.as_tensor(source_feats)
    relabeled_feats = ad.as_tensor(relabeled_feats)
    n_src, m = source_feats.shape[0], relabeled_feats.shape[0]
    if n_src == 0 or m == 0:
        empty = Tensor(np.zeros((0, source_feats.shape[1] if source_feats.data.ndim == 2 else 0)))
        return MixupResult(empty, np.zeros(0), np.zeros(0, dtype=np.int64))
    if source_feats.shape[1] != relabeled_feats.shape[1]:
        raise ValueError(f"mixup: feature dims differ "
                         f"({source_feats.shape} vs {relabeled_feats.shape})")
    partners = rng.integers(0, n_src, size=m)
    alphas = rng.uniform(0.0, 1.0, size=m)
    a = alphas[:, None]
    mixed = ad.add(ad.mul(ad.select_rows(source_feats, partners), Tensor(a)),
                   ad.mul(relabeled_feats, Tensor(1.0 - a)))
    return MixupResult(mixed, alphas, partners)


def controller_step(epoch_mean_entropy: float, state: RadaState,
                    config: RadaConfig) -> RadaState:
    """Patience rule, applied once per epoch on the mean domain entropy.

    An epoch improves when its entropy beats the best seen so far by more
    than epsilon_improve. After patience_k consecutive non-improving
    epochs the controller activates, permanently.
    """
    ent = float(epoch_mean_entropy)
    state.entropy_history.append(ent)
    if ent < state.best_entropy - config.epsilon_improve:
        state.best_entropy = ent
        state.plateau_counter = 0
    else:
        state.plateau_counter += 1
        if state.plateau_counter >= config.patience_k:
            state.active = True
    return state
