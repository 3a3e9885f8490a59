"""Epoch-level measurement instruments.

Three read-only gauges of a training run: the discriminator's mean
binary entropy over all training samples (its discrimination capability,
inverted), the maximum mean discrepancy between source and target
features (alignment), and classification accuracy on the target domain.
None of them build gradient graphs or mutate the model.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import no_grad
from .datasets import TARGET, Dataset
from .models import ModelBundle, cdan_condition, classify, discriminate, feature_extract
from .rada import domain_entropy


@dataclass
class MmdConfig:
    """Biased (V-statistic) MMD with a median-heuristic multi-scale RBF
    kernel; domains larger than max_samples_per_domain are subsampled
    deterministically (evenly strided)."""

    bandwidth_multipliers: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
    max_samples_per_domain: int = 1000

    def __post_init__(self):
        if not self.bandwidth_multipliers or any(c <= 0 for c in self.bandwidth_multipliers):
            raise ValueError("bandwidth_multipliers must be nonempty and positive")
        if self.max_samples_per_domain < 1:
            raise ValueError("max_samples_per_domain must be >= 1")


@dataclass
class MetricsRow:
    """One completed epoch of diagnostics."""

    epoch: int
    loss_cls: float
    loss_adv: float
    mean_domain_entropy: float
    mmd: float
    target_accuracy: float
    relabel_fraction: float
    rada_active: bool


METRICS_HEADER = ("epoch,loss_cls,loss_adv,mean_domain_entropy,mmd,"
                  "target_accuracy,relabel_fraction,rada_active")


def format_metrics_row(row: MetricsRow) -> str:
    """CSV line, floats at 9 significant digits, rada_active as 0/1."""
    floats = [row.loss_cls, row.loss_adv, row.mean_domain_entropy,
              row.mmd, row.target_accuracy, row.relabel_fraction]
    return ",".join([str(row.epoch)] + [format(v, ".9g") for v in floats]
                    + [str(int(row.rada_active))])


def extract_features(model: ModelBundle, x: np.ndarray) -> np.ndarray:
    """Feature matrix for raw inputs, gradients disabled."""
    with no_grad():
        return feature_extract(model, x).data


def _discriminator_inputs(model: ModelBundle, feats):
    if model.conditioning_mode == "plain":
        return feats
    probs = ad.exp(classify(model, feats))
    return cdan_condition(feats, probs)


def mean_domain_entropy(model: ModelBundle, dataset: Dataset) -> float:
    """Mean binary entropy of the discriminator over every training
    sample, both domains; domain labels play no role."""
    if dataset.n == 0:
        raise ValueError("mean_domain_entropy: empty dataset")
    with no_grad():
        feats = feature_extract(model, dataset.features)
        pred = discriminate(model, _discriminator_inputs(model, feats))
    return float(domain_entropy(pred.p0.data).mean())


def _strided_subsample(x: np.ndarray, k: int) -> np.ndarray:
    n = x.shape[0]
    if n <= k:
        return x
    return x[(np.arange(k) * n) // k]


def _offdiag_median(d2: np.ndarray) -> float:
    """Median of the off-diagonal entries of a squared-distance matrix.

    The diagonal entries are the minima (zeros), so the off-diagonal
    median is found by rank arithmetic on the flat array, skipping a
    full boolean-mask copy.
    """
    n = d2.shape[0]
    m_off = n * n - n
    if m_off == 0:
        return 0.0
    k1 = n + (m_off - 1) // 2
    k2 = n + m_off // 2
    part = np.partition(d2.ravel(), (k1, k2))
    return float(part[k1] + part[k2]) / 2.0


def _kernel_power(base: np.ndarray, inv: float) -> np.ndarray:
    # base ** inv with cheap paths for the power-of-two multipliers
    if inv == 1.0:
        return base
    if inv == 2.0:
        return base * base
    if inv == 4.0:
        b2 = base * base
        return b2 * b2
    if inv == 0.5:
        return np.sqrt(base)
    if inv == 0.25:
        return np.sqrt(np.sqrt(base))
    return base ** inv


def mmd(features_s: np.ndarray, features_t: np.ndarray,
        config: MmdConfig | None = None) -> float:
    """Kernel two-sample discrepancy between feature sets.

    Biased V-statistic over an RBF mixture: the base bandwidth is the
    median of pairwise squared distances over the pooled set (off-diagonal
    pairs; falls back to 1.0 when that median is zero), scaled by each
    multiplier. Returns sqrt(max(MMD^2, 0)). The statistic is symmetric;
    the two sets are ordered canonically before pooling so swapping the
    arguments returns a bitwise-identical value.
    """
    config = config or MmdConfig()
    xs = np.asarray(features_s, dtype=np.float64)
    xt = np.asarray(features_t, dtype=np.float64)
    if xs.ndim != 2 or xt.ndim != 2 or xs.shape[0] == 0 or xt.shape[0] == 0:
        raise ValueError("mmd: both feature sets must be nonempty 2-D arrays")
    if xs.shape[1] != xt.shape[1]:
        raise ValueError(f"mmd: feature dims differ ({xs.shape} vs {xt.shape})")
    xs = np.ascontiguousarray(_strided_subsample(xs, config.max_samples_per_domain))
    xt = np.ascontiguousarray(_strided_subsample(xt, config.max_samples_per_domain))
    if (xt.shape[0], xt.tobytes()) < (xs.shape[0], xs.tobytes()):
        xs, xt = xt, xs

    pooled = np.vstack([xs, xt])
    sq = (pooled ** 2).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (pooled @ pooled.T), 0.0)
    sigma2 = _offdiag_median(d2)
    if sigma2 == 0.0:
        sigma2 = 1.0

    base = np.exp(-d2 / (2.0 * sigma2))
    kernel = np.zeros_like(d2)
    for c in config.bandwidth_multipliers:
        kernel += _kernel_power(base, 1.0 / c)
    kernel /= len(config.bandwidth_multipliers)

    m = xs.shape[0]
    k_ss = kernel[:m, :m].mean()
    k_tt = kernel[m:, m:].mean()
    k_st = kernel[:m, m:].mean()
    return float(np.sqrt(max(k_ss + k_tt - 2.0 * k_st, 0.0)))


def target_accuracy(model: ModelBundle, dataset: Dataset) -> float:
    """Fraction of target samples whose predicted class (argmax; ties go
    to the lowest index) matches the held evaluation label."""
    idx = dataset.indices_of(TARGET)
    if idx.size == 0:
        raise ValueError("target_accuracy: dataset has no target samples")
    with no_grad():
        feats = feature_extract(model, dataset.features[idx])
        log_probs = classify(model, feats)
    pred = np.argmax(log_probs.data, axis=1)
    return float((pred == dataset.class_labels[idx]).mean())
