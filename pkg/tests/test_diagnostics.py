"""Tests for the measurement instruments: mean domain entropy, MMD,
target accuracy."""
import math

import numpy as np
import pytest

from radalab.datasets import SOURCE, TARGET, Dataset, generate_moons
from radalab.diagnostics import (
    MetricsRow, MmdConfig, extract_features, format_metrics_row,
    mean_domain_entropy, mmd, target_accuracy,
)
from radalab.models import ModelBundle

LN2 = math.log(2.0)


def make_dataset(features, labels=None, domains=None, num_classes=2):
    features = np.asarray(features, dtype=float)
    n = features.shape[0]
    labels = np.zeros(n, dtype=int) if labels is None else np.asarray(labels)
    if domains is None:
        domains = np.array([SOURCE, TARGET] * (n // 2 + 1))[:n]
    return Dataset(features, labels, np.asarray(domains), num_classes=num_classes)


def zeroed_model(**kw):
    model = ModelBundle(2, 2, np.random.default_rng(0), **kw)
    for p in model.parameters().values():
        p.data[...] = 0.0
    return model


# ---------------------------------------------------------------------------
# mean domain entropy


def test_zero_weight_discriminator_gives_ln2():
    model = zeroed_model()
    ds = make_dataset(np.random.default_rng(1).uniform(-1, 1, (10, 2)))
    assert abs(mean_domain_entropy(model, ds) - LN2) < 1e-12


def test_confident_discriminator_gives_near_zero():
    model = zeroed_model(feature_widths=(2,), discriminator_widths=())
    model.F.weights[0].data[...] = np.eye(2)
    model.D.weights[0].data[...] = np.array([[1e4], [0.0]])
    ds = make_dataset([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]], domains=[SOURCE, SOURCE, TARGET])
    assert mean_domain_entropy(model, ds) < 1e-9


def test_three_sample_closed_form_average():
    # identity features; single-layer discriminator with logits L*(x-2)
    # maps inputs 1,2,3 to p_source 0.2, 0.5, 0.8 (p0 = 0.8, 0.5, 0.2)
    big_l = math.log(0.8 / 0.2)
    model = ModelBundle(1, 2, np.random.default_rng(0), feature_widths=(1,),
                        discriminator_widths=())
    for p in model.parameters().values():
        p.data[...] = 0.0
    model.F.weights[0].data[...] = 1.0
    model.D.weights[0].data[...] = big_l
    model.D.biases[0].data[...] = -2.0 * big_l
    ds = Dataset(np.array([[1.0], [2.0], [3.0]]), np.zeros(3, dtype=int),
                 np.array([SOURCE, SOURCE, TARGET]), num_classes=2)
    value = mean_domain_entropy(model, ds)
    assert abs(value - 0.5646506758787737) < 1e-9
    assert abs(value - 0.564650) < 1e-6


def test_entropy_bounded_for_random_models():
    rng = np.random.default_rng(7)
    ds = make_dataset(rng.uniform(-2, 2, (20, 2)))
    for seed in range(5):
        model = ModelBundle(2, 2, np.random.default_rng(seed))
        value = mean_domain_entropy(model, ds)
        assert 0.0 <= value <= LN2


def test_entropy_rejects_empty_dataset():
    ds = Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), np.zeros(0, dtype=int),
                 num_classes=2)
    with pytest.raises(ValueError, match="empty"):
        mean_domain_entropy(zeroed_model(), ds)


def test_cdan_conditioning_path_used_in_entropy():
    plain = ModelBundle(2, 2, np.random.default_rng(3), conditioning_mode="plain")
    cdan = ModelBundle(2, 2, np.random.default_rng(3), conditioning_mode="cdan")
    ds = make_dataset(np.random.default_rng(5).uniform(-1, 1, (12, 2)))
    assert 0.0 <= mean_domain_entropy(cdan, ds) <= LN2
    assert cdan.d_disc == plain.d_disc * 2


# ---------------------------------------------------------------------------
# mmd


def test_mmd_zero_on_identical_sets():
    x = np.random.default_rng(2).uniform(-1, 1, (40, 3))
    assert mmd(x, x.copy()) <= 1e-9


def test_mmd_symmetric_bitwise():
    rng = np.random.default_rng(3)
    a = rng.uniform(-1, 1, (30, 4))
    b = rng.uniform(0, 2, (25, 4))
    assert mmd(a, b) == mmd(b, a)


def test_mmd_singleton_direct_formula_oracle():
    # S={0}, T={2} in 1-D with one multiplier: pooled off-diagonal squared
    # distances are {4, 4} so the base bandwidth is 4;
    # mmd^2 = k(0,0) + k(2,2) - 2 k(0,2) = 2 - 2 exp(-4 / (2 * 4))
    cfg = MmdConfig(bandwidth_multipliers=(1.0,))
    value = mmd(np.array([[0.0]]), np.array([[2.0]]), cfg)
    oracle = math.sqrt(2.0 - 2.0 * math.exp(-0.5))
    assert abs(value - oracle) < 1e-12
    assert abs(value - 0.887095643419994) < 1e-12


def test_mmd_matches_bruteforce_oracle_small():
    rng = np.random.default_rng(9)
    xs = rng.uniform(-1, 1, (7, 2))
    xt = rng.uniform(-0.5, 1.5, (5, 2))
    mults = (0.5, 1.0, 2.0)

    pooled = np.vstack([xs, xt])
    dists = [np.sum((pooled[i] - pooled[j]) ** 2)
             for i in range(12) for j in range(12) if i != j]
    sigma2 = float(np.median(dists))

    def k(x, y):
        d2 = np.sum((x - y) ** 2)
        return sum(math.exp(-d2 / (2.0 * c * sigma2)) for c in mults) / len(mults)

    k_ss = np.mean([k(a, b) for a in xs for b in xs])
    k_tt = np.mean([k(a, b) for a in xt for b in xt])
    k_st = np.mean([k(a, b) for a in xs for b in xt])
    oracle = math.sqrt(max(k_ss + k_tt - 2 * k_st, 0.0))

    assert abs(mmd(xs, xt, MmdConfig(bandwidth_multipliers=mults)) - oracle) < 1e-9


def test_mmd_monotone_under_translation_toward_source():
    rng = np.random.default_rng(10)
    xs = rng.normal(0.0, 1.0, (200, 2))
    xt = rng.normal(0.0, 1.0, (200, 2)) + [3.0, 0.0]
    gap = xt.mean(axis=0) - xs.mean(axis=0)
    values = [mmd(xs, xt - step * gap) for step in (0.0, 0.25, 0.5, 0.75, 1.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_mmd_permutation_invariant():
    rng = np.random.default_rng(11)
    xs = rng.uniform(-1, 1, (20, 3))
    xt = rng.uniform(-1, 1, (22, 3))
    perm_s, perm_t = rng.permutation(20), rng.permutation(22)
    assert abs(mmd(xs, xt) - mmd(xs[perm_s], xt[perm_t])) < 1e-12


def test_mmd_subsampling_deterministic():
    rng = np.random.default_rng(12)
    xs = rng.uniform(-1, 1, (50, 2))
    xt = rng.uniform(-1, 1, (60, 2))
    cfg = MmdConfig(max_samples_per_domain=20)
    assert mmd(xs, xt, cfg) == mmd(xs, xt, cfg)
    # evenly strided subsample, computed independently
    sub_s = xs[(np.arange(20) * 50) // 20]
    sub_t = xt[(np.arange(20) * 60) // 20]
    assert mmd(xs, xt, cfg) == mmd(sub_s, sub_t, cfg)


def test_mmd_identical_points_fall_back_to_unit_bandwidth():
    xs = np.zeros((3, 2))
    xt = np.zeros((4, 2))
    assert mmd(xs, xt) == 0.0


def test_mmd_rejects_bad_inputs():
    with pytest.raises(ValueError):
        mmd(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        mmd(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        MmdConfig(bandwidth_multipliers=())
    with pytest.raises(ValueError):
        MmdConfig(bandwidth_multipliers=(1.0, -2.0))


# ---------------------------------------------------------------------------
# target accuracy


def test_accuracy_one_when_labels_match_predictions():
    from radalab.autodiff import no_grad
    from radalab.models import classify, feature_extract

    model = ModelBundle(2, 2, np.random.default_rng(4))
    feats = np.random.default_rng(5).uniform(-1, 1, (12, 2))
    with no_grad():
        pred = classify(model, feature_extract(model, feats)).data.argmax(axis=1)
    ds = Dataset(feats, pred, np.full(12, TARGET), num_classes=2)
    assert target_accuracy(model, ds) == 1.0


def test_constant_predictor_on_balanced_set_is_half():
    model = zeroed_model()  # uniform log-probs; argmax ties -> class 0
    feats = np.random.default_rng(6).uniform(-1, 1, (10, 2))
    labels = np.array([0, 1] * 5)
    ds = Dataset(feats, labels, np.full(10, TARGET), num_classes=2)
    assert target_accuracy(model, ds) == 0.5


def test_tie_break_goes_to_lowest_class_index():
    model = zeroed_model()
    feats = np.random.default_rng(7).uniform(-1, 1, (8, 2))
    labels = np.array([0] * 6 + [1] * 2)  # class-0 frequency = 0.75
    ds = Dataset(feats, labels, np.full(8, TARGET), num_classes=2)
    assert target_accuracy(model, ds) == 0.75


def test_accuracy_requires_target_samples():
    model = zeroed_model()
    ds = make_dataset(np.zeros((4, 2)), domains=[SOURCE] * 4)
    with pytest.raises(ValueError, match="target"):
        target_accuracy(model, ds)


def test_diagnostics_do_not_mutate_model_or_dataset():
    model = ModelBundle(2, 2, np.random.default_rng(8))
    ds = generate_moons(40, seed=2)
    before_params = {k: p.data.copy() for k, p in model.parameters().items()}
    before_feats = ds.features.copy()
    before_domains = ds.domain_labels.copy()
    mean_domain_entropy(model, ds)
    feats = extract_features(model, ds.features)
    mmd(feats[ds.domain_labels == SOURCE], feats[ds.domain_labels == TARGET])
    target_accuracy(model, ds)
    for k, p in model.parameters().items():
        assert np.array_equal(p.data, before_params[k])
    assert np.array_equal(ds.features, before_feats)
    assert np.array_equal(ds.domain_labels, before_domains)


def test_metrics_row_formatting():
    row = MetricsRow(epoch=3, loss_cls=0.123456789123, loss_adv=1.5,
                     mean_domain_entropy=0.6931471805599453, mmd=0.25,
                     target_accuracy=0.875, relabel_fraction=0.0, rada_active=True)
    line = format_metrics_row(row)
    assert line == "3,0.123456789,1.5,0.693147181,0.25,0.875,0,1"
