"""The three networks of the adversarial setup.

A feature extractor maps inputs to a feature space, an object classifier
predicts class log-probabilities from features, and a domain discriminator
predicts the probability that a feature vector came from the source
domain. The discriminator input is either the raw features ("plain") or
the flattened outer product of features and class probabilities ("cdan").

Desk-scale fully connected nets only; widths are configurable.
"""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

CONDITIONING_MODES = ("plain", "cdan")

# Discriminator probabilities are clamped into [EPS, 1 - EPS] so the
# adversarial log terms stay finite even when the sigmoid saturates.
PROB_EPS = 1e-12


class Mlp:
    """Fully connected stack of affine layers.

    Weights are initialized uniformly in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
    from the provided generator; biases start at zero. Activations are
    applied by the callers, which know which layers are hidden.
    """

    def __init__(self, widths: list[int], rng: np.random.Generator, name: str):
        if len(widths) < 2:
            raise ValueError(f"{name}: need at least input and output widths, got {widths}")
        if any(w <= 0 for w in widths):
            raise ValueError(f"{name}: widths must be positive, got {widths}")
        self.widths = tuple(int(w) for w in widths)
        self.name = name
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(np.zeros(fan_out), requires_grad=True))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def affine(self, x: Tensor, layer: int) -> Tensor:
        return ad.add(ad.matmul(x, self.weights[layer]), self.biases[layer])

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{self.name}/w{i}"] = w
            out[f"{self.name}/b{i}"] = b
        return out


class ModelBundle:
    """Feature extractor F, object classifier C, domain discriminator D.

    The discriminator input width is tied to the conditioning mode:
    d_f for "plain", d_f * num_classes for "cdan". Passing an explicit
    d_disc_in that disagrees is rejected.
    """

    def __init__(self, d_in: int, num_classes: int, rng: np.random.Generator,
                 feature_widths: tuple[int, ...] = (64, 32),
                 classifier_widths: tuple[int, ...] = (),
                 discriminator_widths: tuple[int, ...] = (64, 64),
                 conditioning_mode: str = "plain",
                 d_disc_in: int | None = None):
        if conditioning_mode not in CONDITIONING_MODES:
            raise ValueError(f"conditioning_mode must be one of {CONDITIONING_MODES}, "
                             f"got {conditioning_mode!r}")
        if num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {num_classes}")
        self.d_in = int(d_in)
        self.num_classes = int(num_classes)
        self.conditioning_mode = conditioning_mode
        self.d_f = int(feature_widths[-1])
        expected_d_disc = self.d_f if conditioning_mode == "plain" else self.d_f * num_classes
        if d_disc_in is not None and d_disc_in != expected_d_disc:
            raise ValueError(
                f"discriminator input width {d_disc_in} inconsistent with "
                f"conditioning_mode={conditioning_mode!r} (expected {expected_d_disc})")
        self.d_disc = expected_d_disc
        self.F = Mlp([d_in, *feature_widths], rng, "F")
        self.C = Mlp([self.d_f, *classifier_widths, num_classes], rng, "C")
        self.D = Mlp([self.d_disc, *discriminator_widths, 1], rng, "D")

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.F.parameters())
        out.update(self.C.parameters())
        out.update(self.D.parameters())
        return out


class DomainPrediction:
    """Discriminator output per row: p_source, and p0 = 1 - p_source
    (the probability of the target domain)."""

    def __init__(self, p_source: Tensor):
        self.p_source = p_source
        self.p0 = ad.sub(Tensor(1.0), p_source)

    @property
    def n(self) -> int:
        return self.p_source.shape[0]


def feature_extract(model: ModelBundle, x) -> Tensor:
    """Run the feature extractor; relu after every affine layer."""
    x = ad.as_tensor(x)
    if x.data.ndim != 2 or x.shape[1] != model.d_in:
        raise ShapeError(f"feature_extract: expected (n, {model.d_in}) input, got {x.shape}")
    h = x
    for layer in range(model.F.n_layers):
        h = ad.relu(model.F.affine(h, layer))
    return h


def classify(model: ModelBundle, feats) -> Tensor:
    """Class log-probabilities (n, num_classes); rows exponentiate to 1."""
    feats = ad.as_tensor(feats)
    if feats.data.ndim != 2 or feats.shape[1] != model.d_f:
        raise ShapeError(f"classify: expected (n, {model.d_f}) features, got {feats.shape}")
    h = feats
    for layer in range(model.C.n_layers - 1):
        h = ad.relu(model.C.affine(h, layer))
    return ad.log_softmax(model.C.affine(h, model.C.n_layers - 1))


def discriminate(model: ModelBundle, d_input) -> DomainPrediction:
    """Source-domain probability per row, clamped away from {0, 1}."""
    d_input = ad.as_tensor(d_input)
    if d_input.data.ndim != 2 or d_input.shape[1] != model.d_disc:
        raise ShapeError(f"discriminate: expected (n, {model.d_disc}) input, got {d_input.shape}")
    h = d_input
    for layer in range(model.D.n_layers - 1):
        h = ad.relu(model.D.affine(h, layer))
    logit = model.D.affine(h, model.D.n_layers - 1)
    p = ad.clamp(ad.sigmoid(logit), PROB_EPS, 1.0 - PROB_EPS)
    return DomainPrediction(ad.reshape(p, (d_input.shape[0],)))


def cdan_condition(feats, class_probs) -> Tensor:
    """Discriminator input conditioned on class predictions.

    Row i is the flattened outer product feats_i (x) probs_i, laid out
    feature-major / class-minor. Callers detach class_probs unless they
    deliberately want gradients flowing into the classifier through the
    conditioning path.
    """
    feats = ad.as_tensor(feats)
    class_probs = ad.as_tensor(class_probs)
    if feats.shape[0] != class_probs.shape[0]:
        raise ShapeError(f"cdan_condition: row counts differ "
                         f"({feats.shape} vs {class_probs.shape})")
    row_sums = class_probs.data.sum(axis=1)
    if class_probs.shape[0] and np.max(np.abs(row_sums - 1.0)) > 1e-6:
        raise ValueError("cdan_condition: class_probs rows must sum to 1")
    return ad.outer_flatten(feats, class_probs)
