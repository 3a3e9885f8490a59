"""Tests for generators, the CSV interchange format, and batching."""
import numpy as np
import pytest

from radalab.datasets import (
    SOURCE, TARGET, Dataset, DatasetFormatError, concat_datasets,
    generate_blobs, generate_moons, make_batches, read_dataset, write_dataset,
)
from radalab.diagnostics import mmd


# ---------------------------------------------------------------------------
# moons


def test_moons_counting_and_balance():
    ds = generate_moons(4, seed=1)
    assert ds.n == 8
    assert (ds.domain_labels == SOURCE).sum() == 4
    assert (ds.domain_labels == TARGET).sum() == 4
    for domain in (SOURCE, TARGET):
        labels = ds.class_labels[ds.domain_labels == domain]
        assert sorted(labels.tolist()) == [0, 0, 1, 1]


def test_moons_deterministic_bitwise():
    a = generate_moons(100, 0.1, 45.0, (0.5, 0.0), seed=7)
    b = generate_moons(100, 0.1, 45.0, (0.5, 0.0), seed=7)
    assert a.features.tobytes() == b.features.tobytes()
    assert np.array_equal(a.class_labels, b.class_labels)
    c = generate_moons(100, 0.1, 45.0, (0.5, 0.0), seed=8)
    assert a.features.tobytes() != c.features.tobytes()


def test_moons_identity_transform_matches_marginals():
    ds = generate_moons(1000, 0.1, rotation_deg=0.0, shift=(0.0, 0.0), seed=3)
    same = mmd(ds.features[ds.domain_labels == SOURCE],
               ds.features[ds.domain_labels == TARGET])
    shifted = generate_moons(1000, 0.1, rotation_deg=45.0, shift=(2.0, 0.0), seed=3)
    far = mmd(shifted.features[shifted.domain_labels == SOURCE],
              shifted.features[shifted.domain_labels == TARGET])
    assert same < 0.05
    assert far > 5 * same


def test_moons_rotation_and_shift_applied():
    base = generate_moons(200, 0.0, rotation_deg=0.0, shift=(0.0, 0.0), seed=9)
    moved = generate_moons(200, 0.0, rotation_deg=90.0, shift=(3.0, -1.0), seed=9)
    src_t = base.features[base.domain_labels == TARGET]
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    expect = src_t @ rot.T + [3.0, -1.0]
    assert np.allclose(moved.features[moved.domain_labels == TARGET], expect, atol=1e-12)


def test_moons_rejects_bad_arguments():
    with pytest.raises(ValueError):
        generate_moons(3)
    with pytest.raises(ValueError):
        generate_moons(0)
    with pytest.raises(ValueError):
        generate_moons(10, noise_sigma=-0.1)


# ---------------------------------------------------------------------------
# blobs


def test_blobs_counting():
    ds = generate_blobs(3, 10, seed=2)
    assert ds.n == 60
    assert (ds.domain_labels == SOURCE).sum() == 30
    assert ds.num_classes == 3
    for cls in range(3):
        assert ((ds.class_labels == cls) & (ds.domain_labels == TARGET)).sum() == 10


def test_blobs_identity_affine_equal_means():
    ds = generate_blobs(4, 50, class_mean_radius=3.0, noise_sigma=0.0, seed=5)
    for cls in range(4):
        src_mean = ds.features[(ds.class_labels == cls) & (ds.domain_labels == SOURCE)].mean(0)
        tgt_mean = ds.features[(ds.class_labels == cls) & (ds.domain_labels == TARGET)].mean(0)
        assert np.allclose(src_mean, tgt_mean, atol=1e-12)


def test_blobs_scale_doubles_mean_norms():
    ds = generate_blobs(3, 5, class_mean_radius=2.0, noise_sigma=0.0, scale=2.0, seed=6)
    for cls in range(3):
        src = ds.features[(ds.class_labels == cls) & (ds.domain_labels == SOURCE)][0]
        tgt = ds.features[(ds.class_labels == cls) & (ds.domain_labels == TARGET)][0]
        assert abs(np.linalg.norm(tgt) - 2.0 * np.linalg.norm(src)) < 1e-9


def test_blobs_rejects_bad_arguments():
    with pytest.raises(ValueError):
        generate_blobs(1, 10)
    with pytest.raises(ValueError):
        generate_blobs(3, 0)


# ---------------------------------------------------------------------------
# CSV interchange


def test_roundtrip_exact(tmp_path):
    ds = generate_moons(50, seed=11)
    path = tmp_path / "moons.csv"
    write_dataset(ds, path)
    back = read_dataset(path)
    assert back.features.tobytes() == ds.features.tobytes()
    assert np.array_equal(back.class_labels, ds.class_labels)
    assert np.array_equal(back.domain_labels, ds.domain_labels)
    assert back.num_classes == ds.num_classes


def test_csv_format_shape(tmp_path):
    ds = generate_moons(2, seed=1)
    path = tmp_path / "d.csv"
    write_dataset(ds, path)
    text = path.read_text()
    lines = text.split("\n")
    assert lines[0] == "domain,label,f0,f1"
    assert text.endswith("\n")
    assert len(lines) == ds.n + 2  # header + rows + trailing newline
    assert lines[1].split(",")[0] in ("s", "t")


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(DatasetFormatError, match="line 1"):
        read_dataset(path)


def test_header_only_reads_empty_but_untrainable(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("domain,label,f0,f1\n")
    ds = read_dataset(path)
    assert ds.n == 0
    with pytest.raises(ValueError, match="both domains"):
        ds.require_trainable()


@pytest.mark.parametrize("content,lineno", [
    ("bad,header,here\ns,0,1.0,2.0\n", 1),
    ("domain,label,f0,f1\nx,0,1.0,2.0\n", 2),
    ("domain,label,f0,f1\ns,0,1.0,2.0\nt,zero,0.5,0.5\n", 3),
    ("domain,label,f0,f1\ns,0,1.0\n", 2),
    ("domain,label,f0,f1\ns,0,oops,2.0\n", 2),
    ("domain,label,f0,f1\ns,-1,1.0,2.0\n", 2),
])
def test_malformed_files_rejected_with_line_number(tmp_path, content, lineno):
    path = tmp_path / "bad.csv"
    path.write_text(content)
    with pytest.raises(DatasetFormatError, match=f"line {lineno}"):
        read_dataset(path)


def test_concat_datasets_pools_sources(tmp_path):
    a = generate_moons(10, seed=1)
    b = generate_moons(20, seed=2)
    pooled = concat_datasets([a, b])
    assert pooled.n == a.n + b.n
    with pytest.raises(ValueError):
        concat_datasets([])


# ---------------------------------------------------------------------------
# batching


def test_batches_even_split_counting():
    ds = generate_moons(100, seed=4)  # 100 source + 100 target
    batches = make_batches(ds, 20, np.random.default_rng(0))
    assert len(batches) == 10
    for batch in batches:
        assert batch.n == 20
        assert (batch.domain_original == SOURCE).sum() == 10
        assert (batch.domain_original == TARGET).sum() == 10


def test_batches_cycle_shorter_domain():
    src = generate_moons(100, seed=4)
    half_target = Dataset(
        np.vstack([src.features[src.domain_labels == SOURCE],
                   src.features[src.domain_labels == TARGET][:50]]),
        np.concatenate([src.class_labels[src.domain_labels == SOURCE],
                        src.class_labels[src.domain_labels == TARGET][:50]]),
        np.concatenate([np.full(100, SOURCE), np.full(50, TARGET)]),
        num_classes=2)
    batches = make_batches(half_target, 20, np.random.default_rng(0))
    assert len(batches) == 10
    tgt_indices = np.concatenate([b.dataset_indices[b.domain_original == TARGET]
                                  for b in batches])
    counts = np.bincount(tgt_indices, minlength=150)[100:]
    assert np.all(counts == 2)  # each target index appears exactly twice


def test_batches_cover_longer_domain_exactly_once():
    ds = generate_moons(160, seed=6)
    batches = make_batches(ds, 16, np.random.default_rng(1))
    src_indices = np.concatenate([b.dataset_indices[b.domain_original == SOURCE]
                                  for b in batches])
    assert sorted(src_indices.tolist()) == sorted(np.flatnonzero(
        ds.domain_labels == SOURCE).tolist())


def test_batches_deterministic_given_rng():
    ds = generate_moons(60, seed=2)
    a = make_batches(ds, 12, np.random.default_rng(42))
    b = make_batches(ds, 12, np.random.default_rng(42))
    assert all(np.array_equal(x.dataset_indices, y.dataset_indices) for x, y in zip(a, b))


def test_batches_working_labels_start_as_original():
    ds = generate_moons(40, seed=3)
    for batch in make_batches(ds, 8, np.random.default_rng(5)):
        assert np.array_equal(batch.domain_working, batch.domain_original)
        assert np.array_equal(batch.clf_mask, batch.domain_original == SOURCE)
        assert batch.domain_working is not batch.domain_original


def test_batches_reject_bad_sizes_and_single_domain():
    ds = generate_moons(40, seed=3)
    with pytest.raises(ValueError):
        make_batches(ds, 7, np.random.default_rng(0))
    with pytest.raises(ValueError):
        make_batches(ds, 2, np.random.default_rng(0))
    source_only = Dataset(ds.features, ds.class_labels,
                          np.full(ds.n, SOURCE), num_classes=2)
    with pytest.raises(ValueError, match="both domains"):
        make_batches(source_only, 8, np.random.default_rng(0))


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.array([0, 1, 5]), np.zeros(3, dtype=int), num_classes=2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(3, dtype=int), np.array([0, 1, 2]), num_classes=2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2, dtype=int), np.zeros(3, dtype=int), num_classes=2)
