"""Synthetic attribute-combination dataset and the classifier harness."""
import numpy as np
import pytest

from gvlm import multiclass
from gvlm.errors import IndexRangeError, InputError


class TestLabelIndex:
    def test_all_zero_tuple(self):
        assert multiclass.label_index((0,) * 8) == 0

    def test_all_maxima_tuple(self):
        maxima = tuple(n - 1 for n in multiclass.RADICES)
        assert multiclass.label_index(maxima) == 184319
        assert multiclass.TOTAL_LABELS == 184320

    def test_first_attribute_most_significant(self):
        base = multiclass.label_index((1, 0, 0, 0, 0, 0, 0, 0))
        assert base == 184320 // 8

    def test_roundtrip_random_tuples(self, rng):
        for _ in range(10_000):
            attrs = tuple(int(rng.integers(0, n)) for n in multiclass.RADICES)
            idx = multiclass.label_index(attrs)
            assert multiclass.label_attributes(idx) == attrs

    def test_bijective_on_dense_prefix(self):
        seen = {multiclass.label_index(multiclass.label_attributes(i)) for i in range(5000)}
        assert seen == set(range(5000))

    def test_out_of_range(self):
        with pytest.raises(InputError):
            multiclass.label_index((8, 0, 0, 0, 0, 0, 0, 0))
        with pytest.raises(IndexRangeError):
            multiclass.label_attributes(multiclass.TOTAL_LABELS)


class TestDataset:
    def test_zero_noise_samples_identical(self):
        f, l = multiclass.generate_dataset(50, 3, 0.0, seed=1)
        for lab in range(50):
            block = f[l == lab]
            assert np.array_equal(block[0], block[1]) and np.array_equal(block[0], block[2])

    def test_zero_noise_attribute_readout_is_perfect(self):
        # each one-hot block directly encodes its attribute: a linear probe
        # (argmax within the block) recovers every attribute exactly
        f, l = multiclass.generate_dataset(400, 1, 0.0, seed=2)
        off = 0
        for k, radix in enumerate(multiclass.RADICES):
            got = f[:, off : off + radix].argmax(axis=1)
            want = np.array([multiclass.label_attributes(int(i))[k] for i in l])
            assert np.array_equal(got, want)
            off += radix

    def test_default_sigma_dataset_balanced(self):
        f, l = multiclass.generate_dataset(1000, 5, 0.3, seed=3)
        counts = np.bincount(l, minlength=1000)
        assert counts.min() >= 4 and counts.max() <= 6
        assert f.shape == (5000, multiclass.FEATURE_DIM)

    def test_seed_determinism(self):
        a = multiclass.generate_dataset(30, 2, 0.3, seed=9)[0]
        b = multiclass.generate_dataset(30, 2, 0.3, seed=9)[0]
        assert a.tobytes() == b.tobytes()

    def test_negative_sigma_rejected(self):
        with pytest.raises(InputError):
            multiclass.generate_dataset(10, 1, -0.1)

    def test_split_holds_out_last_sample_per_label(self):
        f, l = multiclass.generate_dataset(20, 4, 0.1, seed=0)
        (ft, lt), (fv, lv) = multiclass.split_last_per_label(f, l, 4)
        assert len(lv) == 20 and len(lt) == 60
        assert np.array_equal(np.bincount(lv), np.ones(20, dtype=int))

    def test_file_roundtrip(self, tmp_path):
        f, l = multiclass.generate_dataset(25, 2, 0.2, seed=4)
        path = tmp_path / "set.smc"
        multiclass.save_dataset(path, f, l, 0.2, 4)
        f2, l2 = multiclass.load_dataset(path)
        assert f2.tobytes() == f.tobytes()
        assert np.array_equal(l2, l)


@pytest.fixture(scope="module")
def small_run():
    f, l = multiclass.generate_dataset(400, 4, 0.3, seed=0)
    train_set, val_set = multiclass.split_last_per_label(f, l, 4)
    out = {}
    for head in ("grouped", "dense"):
        out[head] = multiclass.train_classifier(head, train_set, val_set, 400, epochs=3, seed=0)
    return out


class TestClassifier:
    def test_group_accuracy_bounds_token_accuracy(self, small_run):
        _, trace = small_run["grouped"]
        for row in trace:
            assert row.group_accuracy >= row.val_accuracy

    def test_both_heads_learn_above_chance(self, small_run):
        for head in ("grouped", "dense"):
            _, trace = small_run[head]
            assert trace[-1].val_accuracy > 10 * (1 / 400)

    def test_grouped_head_has_fewer_parameters(self):
        grouped = multiclass.MlpClassifier("grouped", 10_000, seed=0)
        dense = multiclass.MlpClassifier("dense", 10_000, seed=0)
        assert grouped.head.params.param_count < dense.head.params.param_count

    def test_two_step_decode_predictions_in_range(self, small_run):
        model, _ = small_run["grouped"]
        f, l = multiclass.generate_dataset(400, 1, 0.3, seed=5)
        preds, groups = model.predict(f)
        assert preds.min() >= 0 and preds.max() < 400
        assert groups.min() >= 0 and groups.max() < model.head.partition.num_groups
