import numpy as np

import pytest

from optfusion.data import (
    EncodedDataset,
    SyntheticSpec,
    Vocabulary,
    batches,
    content_digest,
    generate_synthetic,
    generate_synthetic_with_oracle,
    load_encoded,
    save_encoded,
    split,
    split_assignment,
    splits_from_assignment,
)
from optfusion.errors import InputError
from optfusion.model import preset


def _dataset(num_rows=50, seed=0):
    rng = np.random.default_rng(seed)
    indices = rng.integers(0, 4, size=(num_rows, 2))
    labels = rng.integers(0, 2, num_rows)
    return EncodedDataset(indices, labels, (4, 4))


def test_encoded_dataset_is_read_only():
    dataset = _dataset()
    assert dataset.num_rows == len(dataset) == 50
    assert dataset.num_fields == 2
    with pytest.raises(ValueError):
        dataset.indices[0, 0] = 1
    schema = dataset.field_schema(3)
    assert schema.hidden_dim == 6


@pytest.mark.parametrize(
    "indices, labels, message",
    [
        (np.zeros((3, 3)), np.zeros(3), "do not match 2 fields"),
        (np.zeros((3, 2)), np.zeros(2), "labels for"),
        (np.zeros((3, 2)), np.full(3, 2), "0 or 1"),
        (np.full((3, 2), 4), np.zeros(3), "outside"),
    ],
)
def test_encoded_dataset_validation(indices, labels, message):
    with pytest.raises(InputError, match=message):
        EncodedDataset(indices, labels, (4, 4))


def test_split_sizes_and_disjointness():
    rows = np.arange(100)
    dataset = EncodedDataset(np.stack([rows % 7, rows % 5], 1), rows % 2, (7, 5))
    splits = split(dataset, seed=3)
    assert [part.num_rows for part in splits] == [80, 10, 10]
    assert [part.split for part in splits] == ["train", "val", "test"]
    again = split(dataset, seed=3)
    np.testing.assert_array_equal(splits.test.indices, again.test.indices)
    with pytest.raises(ValueError, match="sum to 1"):
        split(dataset, ratios=(0.5, 0.3, 0.3))
    with pytest.raises(ValueError, match="three"):
        split(dataset, ratios=(0.5, 0.5))


def test_split_assignment_round_trip():
    dataset = _dataset(40)
    assignment = split_assignment(40, seed=1)
    assert np.bincount(assignment).tolist() == [32, 4, 4]
    splits = splits_from_assignment(dataset, assignment)
    assert splits.train.num_rows == 32
    np.testing.assert_array_equal(
        splits.val.labels, dataset.labels[np.flatnonzero(assignment == 1)]
    )
    with pytest.raises(InputError):
        splits_from_assignment(dataset, assignment[:-1])


def test_batches_cover_every_row_once():
    dataset = _dataset(23)
    seen = []
    sizes = []
    for x, y in batches(dataset, 5, shuffle_seed=7):
        sizes.append(x.shape[0])
        seen.append(y)
    assert sizes == [5, 5, 5, 5, 3]
    assert np.concatenate(seen).sum() == dataset.labels.sum()
    first = [x for x, _ in batches(dataset, 5, shuffle_seed=7)]
    second = [x for x, _ in batches(dataset, 5, shuffle_seed=7)]
    np.testing.assert_array_equal(np.concatenate(first), np.concatenate(second))
    ordered = np.concatenate([x for x, _ in batches(dataset, 4)])
    np.testing.assert_array_equal(ordered, dataset.indices)
    with pytest.raises(ValueError):
        next(batches(dataset, 0))


def _spec(**kwargs):
    settings = dict(
        teacher=preset("stacked", n=2, with_s0=False),
        num_fields=4,
        vocab_size=20,
        num_samples=3000,
        emb_dim=2,
    )
    settings.update(kwargs)
    return SyntheticSpec(**settings)


def test_synthetic_is_deterministic():
    first = generate_synthetic(_spec())
    second = generate_synthetic(_spec())
    np.testing.assert_array_equal(first.indices, second.indices)
    np.testing.assert_array_equal(first.labels, second.labels)
    other = generate_synthetic(_spec(teacher_seed=1))
    assert not np.array_equal(first.labels, other.labels)


def test_synthetic_labels_follow_teacher_probabilities():
    dataset, probabilities, clean = generate_synthetic_with_oracle(_spec())
    assert probabilities.shape == (3000,)
    np.testing.assert_array_equal(dataset.labels, clean)
    # Bernoulli draws: empirical rate within a few standard errors
    assert abs(clean.mean() - probabilities.mean()) < 4 * np.sqrt(0.25 / 3000)


def test_synthetic_label_noise_flips_labels():
    _, _, clean = generate_synthetic_with_oracle(_spec(label_noise=0.2))
    noisy = generate_synthetic(_spec(label_noise=0.2))
    flipped = np.mean(noisy.labels != clean)
    assert 0.15 < flipped < 0.25
    with pytest.raises(ValueError, match="label_noise"):
        _spec(label_noise=1.5)


def test_encoded_cache_round_trip(tmp_path):
    dataset = _dataset(30)
    vocabulary = Vocabulary.fit([["a", "b"], ["a", "b"], ["c", "d"], ["c", "e"]] * 2)
    dataset = EncodedDataset(
        dataset.indices % 3, dataset.labels, vocabulary.vocab_sizes
    )
    assignment = split_assignment(30, seed=0)
    path = tmp_path / "encoded.h5"
    attributes = {"transform": "criteo"}
    digest = save_encoded(path, dataset, assignment, vocabulary, attributes)
    assert digest == content_digest(dataset, assignment, vocabulary)
    cache = load_encoded(path)
    np.testing.assert_array_equal(cache.dataset.indices, dataset.indices)
    np.testing.assert_array_equal(cache.assignment, assignment)
    assert cache.vocabulary == vocabulary
    assert cache.attributes["transform"] == "criteo"
    assert cache.attributes["digest"] == digest
    assert cache.splits.train.num_rows == 24
    reloaded = content_digest(cache.dataset, cache.assignment, cache.vocabulary)
    assert reloaded == digest


def test_encoded_cache_errors(tmp_path):
    with pytest.raises(InputError, match="does not exist"):
        load_encoded(tmp_path / "absent.h5")
    bogus = tmp_path / "bogus.h5"
    bogus.write_text("not hdf5")
    with pytest.raises(InputError):
        load_encoded(bogus)
