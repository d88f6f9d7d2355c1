"""
Tests for dataset ingestion, splitting, forget sampling and standardisation.
"""

import numpy as np
import pytest

from ruler.core.config import BinarizationRule, SyntheticConfig, TrainConfig
from ruler.core.errors import (
    CsvParseError,
    DatasetError,
    DegenerateClassError,
    NonBinaryLabelError,
    PartitionError,
)
from ruler.data.dataset import TabularDataset, load_csv, make_synthetic
from ruler.data.partition import (
    MIN_FORGET,
    PartitionSpec,
    build_partition,
    forget_size,
    sample_forget_set,
    stratified_split,
)
from ruler.data.standardize import apply_standardizer, fit_standardizer
from ruler.embedding.matrix import l2_normalize
from ruler.metrics.lens2 import m4
from ruler.metrics.output import accuracy
from ruler.training.mlp import extract_embeddings, predict, train


@pytest.fixture
def blobs():
    return make_synthetic(SyntheticConfig(n=1000, d=6, seed=3), name="blobs")


def _write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestSyntheticData:
    """Tests for the two-blob generator."""

    def test_shape_and_balance(self, blobs):
        """Test size, dimension and class balance."""
        assert blobs.n == 1000
        assert blobs.d == 6
        assert blobs.class_counts() == {0: 500, 1: 500}
        assert blobs.planted_idx == []

    def test_deterministic(self):
        """Test the same spec reproduces the same data."""
        spec = SyntheticConfig(n=200, d=4, seed=1)

        a, b = make_synthetic(spec, "x"), make_synthetic(spec, "x")

        np.testing.assert_array_equal(a.features, b.features)
        assert a.fingerprint() == b.fingerprint()
        assert a.fingerprint() != make_synthetic(spec, "y").fingerprint()

    def test_classes_separated(self, blobs):
        """Test class means differ along the separation direction."""
        proj = blobs.features.sum(axis=1)

        assert proj[blobs.labels == 1].mean() > proj[blobs.labels == 0].mean()

    def test_planted_clusters(self):
        """Test memorisation strength plants about 5% near-duplicates."""
        ds = make_synthetic(SyntheticConfig(n=400, d=5, memorization_strength=1.0, seed=2))

        assert len(ds.planted_idx) == 20
        assert ds.planted_idx == sorted(ds.planted_idx)

    @pytest.mark.parametrize("class_sep,low,high", [(0.0, 0.45, 0.55), (4.0, 0.9, 1.0)])
    def test_class_separation_sets_test_accuracy(self, class_sep, low, high):
        """Test class_sep=0 leaves a trained model at chance on held-out records."""
        ds = make_synthetic(SyntheticConfig(n=6000, d=5, class_sep=class_sep, seed=4), "sep")
        part = build_partition(ds, 0.05, 0.2, 999, 999)
        x = apply_standardizer(fit_standardizer(ds, part.train), ds.features)

        model = train(x, ds.labels, part.train, TrainConfig(epochs=30, hidden=16, lr=1e-2), 0)
        acc = accuracy(predict(model, x[part.test]), ds.labels[part.test])

        assert low <= acc <= high

    def test_planted_records_rank_high(self):
        """Test planted near-duplicates raise pre-unlearning M4 over the same records unplanted."""
        config = TrainConfig(epochs=60, hidden=32, lr=1e-2)
        planted_ds = make_synthetic(
            SyntheticConfig(n=1000, d=5, memorization_strength=1.0, seed=0), "mem"
        )
        plain_ds = make_synthetic(SyntheticConfig(n=1000, d=5, seed=0), "mem")
        forget = planted_ds.planted_idx[::5]
        part = PartitionSpec(
            retain=[i for i in range(1000) if i not in set(forget)], forget=forget, ff=0.01
        )

        scores = {}
        for label, ds in (("planted", planted_ds), ("plain", plain_ds)):
            x = apply_standardizer(fit_standardizer(ds, part.train), ds.features)
            model = train(x, ds.labels, part.train, config, init_seed=0)
            scores[label] = m4(l2_normalize(extract_embeddings(model, x)), part).aggregate

        unplanted = sorted(set(range(1000)) - set(planted_ds.planted_idx))
        assert len(forget) == 10
        assert not plain_ds.planted_idx
        np.testing.assert_array_equal(planted_ds.features[unplanted], plain_ds.features[unplanted])
        assert scores["planted"] > scores["plain"] + 0.15

    def test_protocol_ready(self, blobs):
        """Test the protocol guard accepts normal data and rejects tiny data."""
        blobs.check_protocol_ready()
        tiny = TabularDataset(features=np.zeros((10, 2)), labels=[0, 1] * 5, name="tiny")

        with pytest.raises(DatasetError):
            tiny.check_protocol_ready()

    def test_single_class_not_ready(self):
        """Test a dataset with one class fails the protocol guard."""
        ds = TabularDataset(features=np.zeros((60, 2)), labels=np.zeros(60), name="one")

        with pytest.raises(DatasetError):
            ds.check_protocol_ready()

    def test_rejects_bad_labels(self):
        """Test labels outside {0, 1} are rejected."""
        with pytest.raises(ValueError):
            TabularDataset(features=np.zeros((3, 1)), labels=[0, 1, 2], name="bad")


class TestCsvLoading:
    """Tests for CSV ingestion."""

    def test_small_file_loads(self, tmp_path):
        """Test a 3-row file loads in on-disk order."""
        path = _write_csv(tmp_path, "a,b,label\n1.0,2.0,0\n3.0,4.0,1\n5.0,6.0,0\n")

        ds = load_csv(path, "label")

        assert ds.n == 3
        assert ds.d == 2
        np.testing.assert_array_equal(ds.features[:, 0], [1.0, 3.0, 5.0])
        np.testing.assert_array_equal(ds.labels, [0, 1, 0])
        assert ds.name == "data"

    def test_unparseable_cell(self, tmp_path):
        """Test a non-numeric feature cell reports row and column."""
        path = _write_csv(tmp_path, "a,b,label\n1,2,0\n3,x,1\n")

        with pytest.raises(CsvParseError) as exc:
            load_csv(path, "label")
        assert exc.value.row == 1
        assert exc.value.column == "b"

    def test_missing_cell(self, tmp_path):
        """Test an empty feature cell is a parse error."""
        path = _write_csv(tmp_path, "a,b,label\n1,,0\n3,4,1\n")

        with pytest.raises(CsvParseError):
            load_csv(path, "label")

    def test_missing_label_column(self, tmp_path):
        """Test a missing label column is rejected."""
        path = _write_csv(tmp_path, "a,b\n1,2\n")

        with pytest.raises(DatasetError):
            load_csv(path, "label")

    def test_string_binary_labels(self, tmp_path):
        """Test two string classes map sorted-unique to {0, 1}."""
        path = _write_csv(tmp_path, "a,y\n1,no\n2,yes\n3,no\n")

        ds = load_csv(path, "y", binarization=BinarizationRule.NONE)

        np.testing.assert_array_equal(ds.labels, [0, 1, 0])

    def test_majority_vs_rest(self, tmp_path):
        """Test the majority class becomes the positive class."""
        path = _write_csv(tmp_path, "a,y\n1,cat\n2,dog\n3,dog\n4,eel\n")

        ds = load_csv(path, "y")

        np.testing.assert_array_equal(ds.labels, [0, 1, 1, 0])

    def test_class_vs_rest(self, tmp_path):
        """Test the configured class becomes the positive class."""
        path = _write_csv(tmp_path, "a,y\n1,cat\n2,dog\n3,dog\n4,eel\n")

        ds = load_csv(path, "y", BinarizationRule.CLASS_VS_REST, positive_class="eel")

        np.testing.assert_array_equal(ds.labels, [0, 0, 0, 1])

    def test_multiclass_without_rule(self, tmp_path):
        """Test more than two classes with binarisation disabled."""
        path = _write_csv(tmp_path, "a,y\n1,cat\n2,dog\n3,eel\n")

        with pytest.raises(NonBinaryLabelError):
            load_csv(path, "y", BinarizationRule.NONE)


class TestSplitting:
    """Tests for the stratified train/test split."""

    def test_stratified_counts(self, blobs):
        """Test each class contributes round(frac * n_class) test records."""
        train, test = stratified_split(blobs, 0.2, 999)

        assert test.size == 200
        assert np.sum(blobs.labels[test] == 1) == 100
        assert np.intersect1d(train, test).size == 0
        assert np.union1d(train, test).size == blobs.n

    def test_deterministic(self, blobs):
        """Test the split depends only on dataset and seed."""
        a = stratified_split(blobs, 0.2, 999)
        b = stratified_split(blobs, 0.2, 999)
        c = stratified_split(blobs, 0.2, 1000)

        np.testing.assert_array_equal(a[1], b[1])
        assert not np.array_equal(a[1], c[1])

    def test_each_side_keeps_every_class(self):
        """Test clamping keeps at least one record of each class on both sides."""
        ds = TabularDataset(
            features=np.arange(20.0).reshape(10, 2), labels=[0] * 8 + [1] * 2, name="skew"
        )

        train, test = stratified_split(ds, 0.9, 0)

        assert set(ds.labels[train]) == {0, 1}
        assert set(ds.labels[test]) == {0, 1}

    def test_degenerate_class(self):
        """Test a class with one record cannot be split."""
        ds = TabularDataset(features=np.zeros((5, 1)), labels=[0, 0, 0, 0, 1], name="deg")

        with pytest.raises(DegenerateClassError) as exc:
            stratified_split(ds, 0.2, 0)
        assert exc.value.label == 1


class TestForgetSampling:
    """Tests for forget-set construction."""

    @pytest.mark.parametrize("ff,expected", [(0.01, 10), (0.05, 40), (0.10, 80)])
    def test_forget_size(self, ff, expected):
        """Test the max(10, floor(ff * n)) rule."""
        assert forget_size(800, ff) == expected

    def test_forget_set_is_subset(self, blobs):
        """Test retain and forget partition the training set."""
        train, _ = stratified_split(blobs, 0.2, 999)

        retain, forget = sample_forget_set(train, 0.05, 999, key="blobs")

        assert forget.size == 40
        assert np.intersect1d(retain, forget).size == 0
        np.testing.assert_array_equal(np.union1d(retain, forget), train)

    def test_forget_set_deterministic(self, blobs):
        """Test the forget set is a function of the forget seed."""
        train, _ = stratified_split(blobs, 0.2, 999)

        a = sample_forget_set(train, 0.05, 999, key="blobs")[1]
        b = sample_forget_set(train, 0.05, 999, key="blobs")[1]
        c = sample_forget_set(train, 0.05, 1000, key="blobs")[1]

        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_too_small(self):
        """Test training sets of at most MIN_FORGET records are rejected."""
        with pytest.raises(PartitionError):
            sample_forget_set(np.arange(MIN_FORGET), 0.5, 0)


class TestPartitionSpec:
    """Tests for the partition type and its JSON form."""

    def test_build_partition_covers(self, blobs):
        """Test the assembled partition covers every record once."""
        part = build_partition(blobs, 0.05, 0.2, 999, 999)

        assert len(part.retain) + len(part.forget) + len(part.test) == blobs.n
        assert part.train == sorted(part.retain + part.forget)
        assert part.n_records == blobs.n

    def test_overlap_rejected(self):
        """Test overlapping retain and forget sets are rejected."""
        with pytest.raises(ValueError):
            PartitionSpec(retain=[0, 1, 2], forget=[2, 3], ff=0.1)

    def test_indices_sorted(self):
        """Test indices are stored sorted."""
        part = PartitionSpec(retain=[5, 1, 3], forget=[4, 0], test=[2], ff=0.1)

        assert part.retain == [1, 3, 5]
        assert part.forget == [0, 4]

    def test_json_file(self, tmp_path, blobs):
        """Test partitions survive the JSON interchange format."""
        part = build_partition(blobs, 0.05, 0.2, 999, 999)
        path = tmp_path / "part.json"
        path.write_text(part.to_json())

        loaded = PartitionSpec.load(path)

        assert loaded.forget == part.forget
        assert loaded.retain == part.retain
        assert loaded.ff == part.ff

    def test_bad_json(self):
        """Test invalid JSON becomes a PartitionError."""
        with pytest.raises(PartitionError):
            PartitionSpec.from_json("{not json")
        with pytest.raises(PartitionError):
            PartitionSpec.from_json('{"retain": [0], "forget": [0], "ff": 0.1}')


class TestStandardizer:
    """Tests for train-only standardisation."""

    def test_train_rows_standardised(self, blobs):
        """Test training rows have zero mean and unit population std."""
        train, _ = stratified_split(blobs, 0.2, 999)
        std = fit_standardizer(blobs, train)

        x = apply_standardizer(std, blobs.features)[train]

        np.testing.assert_allclose(x.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(x.std(axis=0), 1.0, atol=1e-12)

    def test_ignores_test_rows(self, blobs):
        """Test the fit depends on training rows only."""
        train, test = stratified_split(blobs, 0.2, 999)
        shifted = np.array(blobs.features)
        shifted[test] += 100.0
        other = TabularDataset(features=shifted, labels=blobs.labels, name=blobs.name)

        a = fit_standardizer(blobs, train)
        b = fit_standardizer(other, train)

        np.testing.assert_array_equal(a.means, b.means)
        np.testing.assert_array_equal(a.stds, b.stds)

    def test_constant_feature(self):
        """Test a constant training feature maps to zero."""
        features = np.column_stack([np.full(6, 3.0), np.arange(6.0)])
        ds = TabularDataset(features=features, labels=[0, 1] * 3, name="c")

        std = fit_standardizer(ds, [0, 1, 2, 3])
        x = apply_standardizer(std, features)

        assert std.constant.tolist() == [True, False]
        assert np.all(x[:, 0] == 0.0)
        assert np.all(np.isfinite(x))

    def test_shape_mismatch(self, blobs):
        """Test applying to the wrong width raises."""
        std = fit_standardizer(blobs, range(100))

        with pytest.raises(DatasetError):
            apply_standardizer(std, np.zeros((3, 2)))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
