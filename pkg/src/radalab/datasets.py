"""Synthetic domain-shift generators, CSV interchange, and batching.

Every sample carries features, a class label (target labels are kept for
evaluation only) and a domain label. Generators are pure functions of
their arguments and a seed. Batches hold a mutable working copy of the
domain labels so samples can be relabeled for one optimization step
without touching the dataset.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SOURCE = 0
TARGET = 1

_DOMAIN_CHAR = {SOURCE: "s", TARGET: "t"}
_CHAR_DOMAIN = {"s": SOURCE, "t": TARGET}


class DatasetFormatError(ValueError):
    """Malformed dataset file; message carries the offending line number."""


@dataclass
class Dataset:
    """Immutable-by-convention sample store.

    features: (n, d) float64; class_labels: (n,) ints in [0, num_classes);
    domain_labels: (n,) ints in {SOURCE, TARGET}.
    """

    features: np.ndarray
    class_labels: np.ndarray
    domain_labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.class_labels = np.asarray(self.class_labels, dtype=np.int64)
        self.domain_labels = np.asarray(self.domain_labels, dtype=np.int64)
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if self.class_labels.shape != (n,) or self.domain_labels.shape != (n,):
            raise ValueError("per-sample arrays must all have length n")
        if n and not np.isin(self.domain_labels, (SOURCE, TARGET)).all():
            raise ValueError("domain labels must be SOURCE or TARGET")
        if n and (self.class_labels.min() < 0 or self.class_labels.max() >= self.num_classes):
            raise ValueError(f"class labels must lie in [0, {self.num_classes})")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def indices_of(self, domain: int) -> np.ndarray:
        return np.flatnonzero(self.domain_labels == domain)

    def require_trainable(self) -> "Dataset":
        """Training needs at least one sample in each domain."""
        if self.indices_of(SOURCE).size == 0 or self.indices_of(TARGET).size == 0:
            raise ValueError("training dataset must contain both domains")
        return self


@dataclass
class Batch:
    """One mini-batch with a mutable working copy of the domain labels.

    clf_mask marks original-source samples: only those enter the
    classification loss, regardless of later relabeling.
    """

    features: np.ndarray
    class_labels: np.ndarray
    domain_original: np.ndarray
    domain_working: np.ndarray
    clf_mask: np.ndarray
    dataset_indices: np.ndarray

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def positions_of(self, domain: int, working: bool = True) -> np.ndarray:
        labels = self.domain_working if working else self.domain_original
        return np.flatnonzero(labels == domain)


def _rotation(deg: float) -> np.ndarray:
    rad = math.radians(deg)
    c, s = math.cos(rad), math.sin(rad)
    return np.array([[c, -s], [s, c]])


def _moons_draw(rng: np.random.Generator, n: int, noise_sigma: float):
    """Two interleaved half-circles, n/2 points per class."""
    half = n // 2
    angles = rng.uniform(0.0, math.pi, size=half)
    upper = np.column_stack([np.cos(angles), np.sin(angles)])
    angles2 = rng.uniform(0.0, math.pi, size=half)
    lower = np.column_stack([1.0 - np.cos(angles2), 0.5 - np.sin(angles2)])
    pts = np.vstack([upper, lower])
    pts += rng.normal(0.0, noise_sigma, size=pts.shape)
    labels = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
    return pts, labels


def generate_moons(n_per_domain: int, noise_sigma: float = 0.1,
                   rotation_deg: float = 45.0, shift=(0.5, 0.0),
                   seed: int = 0) -> Dataset:
    """Two-moons source plus a rotated-and-shifted independent target draw."""
    if n_per_domain < 2 or n_per_domain % 2:
        raise ValueError(f"n_per_domain must be even and >= 2, got {n_per_domain}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    src, src_labels = _moons_draw(rng, n_per_domain, noise_sigma)
    tgt, tgt_labels = _moons_draw(rng, n_per_domain, noise_sigma)
    tgt = tgt @ _rotation(rotation_deg).T + np.asarray(shift, dtype=np.float64)
    features = np.vstack([src, tgt])
    class_labels = np.concatenate([src_labels, tgt_labels])
    domains = np.concatenate([np.full(n_per_domain, SOURCE), np.full(n_per_domain, TARGET)])
    return Dataset(features, class_labels, domains, num_classes=2)


def generate_blobs(num_classes: int, n_per_class_per_domain: int,
                   class_mean_radius: float = 4.0, noise_sigma: float = 0.5,
                   rotation_deg: float = 0.0, scale: float = 1.0,
                   shift=(0.0, 0.0), seed: int = 0) -> Dataset:
    """Gaussian blobs on a circle; target means are an affine image of the
    source means (rotate about the origin, scale, then translate)."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if n_per_class_per_domain < 1:
        raise ValueError("n_per_class_per_domain must be >= 1")
    if noise_sigma < 0 or class_mean_radius < 0:
        raise ValueError("noise_sigma and class_mean_radius must be >= 0")
    rng = np.random.default_rng(seed)
    angles = 2.0 * math.pi * np.arange(num_classes) / num_classes
    src_means = class_mean_radius * np.column_stack([np.cos(angles), np.sin(angles)])
    tgt_means = scale * (src_means @ _rotation(rotation_deg).T) + np.asarray(shift, float)

    feats, labels, domains = [], [], []
    for domain, means in ((SOURCE, src_means), (TARGET, tgt_means)):
        for cls in range(num_classes):
            pts = means[cls] + rng.normal(0.0, noise_sigma, size=(n_per_class_per_domain, 2))
            feats.append(pts)
            labels.append(np.full(n_per_class_per_domain, cls, dtype=np.int64))
            domains.append(np.full(n_per_class_per_domain, domain, dtype=np.int64))
    return Dataset(np.vstack(feats), np.concatenate(labels), np.concatenate(domains),
                   num_classes=num_classes)


# ---------------------------------------------------------------------------
# CSV interchange
#
# Schema: header "domain,label,f0,...,f{d-1}"; domain is s or t; label a
# nonnegative integer; features as decimal floats (17 significant digits on
# write, so write-then-read roundtrips exactly); \n line endings, no quoting.


def write_dataset(dataset: Dataset, path) -> None:
    d = dataset.d
    header = "domain,label," + ",".join(f"f{j}" for j in range(d))
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for i in range(dataset.n):
            fields = [_DOMAIN_CHAR[int(dataset.domain_labels[i])],
                      str(int(dataset.class_labels[i]))]
            fields += [format(v, ".17g") for v in dataset.features[i]]
            fh.write(",".join(fields) + "\n")


def read_dataset(path) -> Dataset:
    """Parse a dataset CSV; num_classes is max(label) + 1 over the file."""
    with open(path, "r", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError(f"{path}: line 1: empty file")
    header = lines[0].split(",")
    if header[:2] != ["domain", "label"] or len(header) < 3:
        raise DatasetFormatError(f"{path}: line 1: bad header {lines[0]!r}")
    d = len(header) - 2
    if header[2:] != [f"f{j}" for j in range(d)]:
        raise DatasetFormatError(f"{path}: line 1: feature columns must be f0..f{d - 1}")

    feats = np.empty((len(lines) - 1, d))
    labels = np.empty(len(lines) - 1, dtype=np.int64)
    domains = np.empty(len(lines) - 1, dtype=np.int64)
    for i, line in enumerate(lines[1:]):
        lineno = i + 2
        fields = line.split(",")
        if len(fields) != d + 2:
            raise DatasetFormatError(
                f"{path}: line {lineno}: expected {d + 2} fields, got {len(fields)}")
        if fields[0] not in _CHAR_DOMAIN:
            raise DatasetFormatError(
                f"{path}: line {lineno}: unknown domain tag {fields[0]!r}")
        domains[i] = _CHAR_DOMAIN[fields[0]]
        try:
            label = int(fields[1])
        except ValueError:
            raise DatasetFormatError(f"{path}: line {lineno}: non-integer label {fields[1]!r}")
        if label < 0:
            raise DatasetFormatError(f"{path}: line {lineno}: negative label {label}")
        labels[i] = label
        try:
            feats[i] = [float(v) for v in fields[2:]]
        except ValueError:
            raise DatasetFormatError(f"{path}: line {lineno}: non-numeric feature field")
    num_classes = int(labels.max()) + 1 if labels.size else 2
    return Dataset(feats, labels, domains, num_classes=max(num_classes, 2))


def concat_datasets(parts: list[Dataset]) -> Dataset:
    """Pool datasets (e.g. several source CSVs plus a target CSV)."""
    if not parts:
        raise ValueError("concat_datasets: nothing to concatenate")
    dims = {p.d for p in parts}
    if len(dims) != 1:
        raise ValueError(f"concat_datasets: feature dims differ ({sorted(dims)})")
    return Dataset(
        np.vstack([p.features for p in parts]),
        np.concatenate([p.class_labels for p in parts]),
        np.concatenate([p.domain_labels for p in parts]),
        num_classes=max(p.num_classes for p in parts),
    )


# ---------------------------------------------------------------------------
# batching


def make_batches(dataset: Dataset, batch_size: int, rng: np.random.Generator,
                 working_domains: np.ndarray | None = None) -> list[Batch]:
    """Shuffled mini-batches with batch_size/2 samples from each domain.

    Source and target index lists are shuffled independently; the shorter
    list cycles so every batch holds both domains. When the longer domain's
    size is a multiple of batch_size/2, each of its indices appears exactly
    once per epoch.

    working_domains, when given, seeds each batch's working labels
    (persistent-relabel mode); batch composition still follows the
    original domain labels.
    """
    if batch_size < 4 or batch_size % 2:
        raise ValueError(f"batch_size must be even and >= 4, got {batch_size}")
    dataset.require_trainable()
    half = batch_size // 2
    src = rng.permutation(dataset.indices_of(SOURCE))
    tgt = rng.permutation(dataset.indices_of(TARGET))
    n_batches = max(1, math.ceil(max(src.size, tgt.size) / half))
    slots = n_batches * half
    src = np.resize(src, slots)  # np.resize cycles the array
    tgt = np.resize(tgt, slots)

    if working_domains is None:
        working_domains = dataset.domain_labels
    batches = []
    for b in range(n_batches):
        idx = np.concatenate([src[b * half:(b + 1) * half], tgt[b * half:(b + 1) * half]])
        original = dataset.domain_labels[idx]
        batches.append(Batch(
            features=dataset.features[idx],
            class_labels=dataset.class_labels[idx],
            domain_original=original,
            domain_working=working_domains[idx].copy(),
            clf_mask=original == SOURCE,
            dataset_indices=idx,
        ))
    return batches
