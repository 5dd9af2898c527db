import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flowvae.data import (
    ALL_FEATURES,
    BINARY_CLASSES,
    CLASSES,
    FEATURE_SETS,
    NO_IP_FEATURES,
    TOP40_FEATURES,
    ClassSpec,
    Dataset,
    FeatureSchema,
    ScalingSpec,
    SyntheticSpec,
    apply_scaling,
    balance_classes,
    batches,
    gen_synthetic,
    infer_schema,
    load_csv,
    read_csv,
    sample_bounds,
    sample_moments,
    save_csv,
    scale_log,
    scale_minmax,
    scale_standard,
    select_features,
    signed_log,
    split_train_val,
    two_cluster_spec,
)
from flowvae.data.schema import int_to_ip, ip_to_int
from flowvae.errors import DataError, DimensionError, SchemaError
from flowvae.rng import RngStream

SMALL = FeatureSchema(("a", "b", "c"), BINARY_CLASSES)
values = st.floats(-1e6, 1e6, allow_nan=False)


def column(vals, schema=None):
    schema = schema or FeatureSchema(("a",), BINARY_CLASSES)
    vals = np.asarray(vals, dtype=float).reshape(-1, schema.width)
    return Dataset(schema, vals, np.zeros(len(vals), np.int64))


def labelled(benign, malicious, seed=0):
    x = RngStream(seed).normal((benign + malicious, 3))
    return Dataset(SMALL, x, np.r_[np.zeros(benign, int), np.ones(malicious, int)])


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestSchema:
    def test_standard_widths(self):
        assert len(ALL_FEATURES) == 76 and len(set(ALL_FEATURES)) == 76
        assert len(TOP40_FEATURES) == 40 and set(TOP40_FEATURES) <= set(ALL_FEATURES)
        assert len(NO_IP_FEATURES) == 74
        assert set(FEATURE_SETS) == {"all76", "top40", "no_ip"}

    def test_top40_order_ends(self):
        assert TOP40_FEATURES[0] == "Bwd IAT Std"
        assert TOP40_FEATURES[-1] == "Pkt Len Min"

    def test_duplicate_names(self):
        with pytest.raises(SchemaError):
            FeatureSchema(("a", "a"))

    def test_label_aliases(self):
        s = FeatureSchema()
        assert s.classes[s.class_index("DDoS")] == "DDoS LOIC-HTTP"
        assert s.classes[s.class_index("DoS attacks-Hulk")] == "DoS Hulk"
        assert s.class_index(" BENIGN ") == 0
        assert s.class_index("Heartbleed") is None

    def test_ip_round_trip(self):
        assert ip_to_int("192.168.10.50") == (192 << 24) + (168 << 16) + (10 << 8) + 50
        assert int_to_ip(ip_to_int("10.0.1.255")) == "10.0.1.255"
        with pytest.raises(ValueError):
            ip_to_int("1.2.3.256")


class TestDataset:
    def test_counts_sum_to_total(self):
        ds = labelled(7, 3)
        assert ds.class_counts.sum() == len(ds) == 10
        assert ds.counts() == {"Benign": 7, "Malicious": 3}

    def test_column_major_and_frozen(self):
        ds = labelled(4, 4)
        assert ds.features.flags.f_contiguous
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0

    def test_width_checked(self):
        with pytest.raises(DimensionError):
            Dataset(SMALL, np.zeros((2, 4)), [0, 1])

    def test_label_range_checked(self):
        with pytest.raises(DimensionError):
            Dataset(SMALL, np.zeros((1, 3)), [2])

    def test_to_binary(self):
        schema = FeatureSchema(("a",), CLASSES)
        ds = Dataset(schema, np.zeros((4, 1)), [0, 3, 5, 0]).to_binary()
        assert ds.schema.classes == BINARY_CLASSES
        np.testing.assert_array_equal(ds.labels, [0, 1, 1, 0])

    def test_record_missing_ip(self):
        rec = labelled(1, 0).record(0)
        assert rec.src_ip is None and rec.features.shape == (3,)


class TestCsv:
    HEADER = "a,b,c,Label\n"

    def test_header_only(self, tmp_path):
        ds, summary = read_csv(write(tmp_path / "h.csv", self.HEADER), SMALL)
        assert len(ds) == 0 and summary.skip_count == 0

    def test_nan_row_skipped(self, tmp_path):
        p = write(tmp_path / "n.csv", self.HEADER + "1,2,3,Benign\n4,NaN,6,Malicious\n7,8,9,Malicious\n")
        ds, summary = read_csv(p, SMALL)
        assert len(ds) == 2 and summary.skip_count == 1
        assert summary.skipped["non_finite"] == 1
        np.testing.assert_array_equal(ds.features, [[1, 2, 3], [7, 8, 9]])

    def test_skip_reasons(self, tmp_path):
        p = write(tmp_path / "r.csv", self.HEADER + "1,x,3,Benign\n1,2,3,Martian\n1,2\n1,2,3,Benign\n")
        ds, summary = read_csv(p, SMALL)
        assert len(ds) == 1
        assert dict(summary.skipped) == {"unparseable": 1, "unknown_label": 1, "short_row": 1}
        assert summary.skipped_lines == [2, 3, 4]
        assert "rows skipped: 3" in summary.report()

    def test_column_order_irrelevant(self, tmp_path):
        a = load_csv(write(tmp_path / "a.csv", self.HEADER + "1,2,3,Benign\n4,5,6,Malicious\n"), SMALL)
        b = load_csv(write(tmp_path / "b.csv", "Label,c,a,b\nBenign,3,1,2\nMalicious,6,4,5\n"), SMALL)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_missing_column(self, tmp_path):
        with pytest.raises(SchemaError, match="c"):
            load_csv(write(tmp_path / "m.csv", "a,b,Label\n1,2,Benign\n"), SMALL)

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(write(tmp_path / "e.csv", ""), SMALL)

    def test_round_trip_is_lossless(self, tmp_path):
        ds = Dataset(SMALL, RngStream(1).normal((20, 3)) * 1e5, np.arange(20) % 2)
        save_csv(ds, tmp_path / "rt.csv")
        back = load_csv(tmp_path / "rt.csv", SMALL)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)
        save_csv(back, tmp_path / "rt2.csv")
        assert (tmp_path / "rt.csv").read_bytes() == (tmp_path / "rt2.csv").read_bytes()

    def test_ip_columns(self, tmp_path):
        schema = FeatureSchema(("Src IP", "x"), BINARY_CLASSES)
        p = write(tmp_path / "ip.csv", "Src IP,x,Label\n10.0.0.1,5,Benign\n,6,Malicious\n")
        ds, summary = read_csv(p, schema)
        assert len(ds) == 1 and summary.skipped["missing_ip"] == 1
        assert ds.features[0, 0] == ip_to_int("10.0.0.1") and ds.src_ip[0] == ip_to_int("10.0.0.1")
        filled, _ = read_csv(p, schema, ip_backfill={"Malicious": ("172.16.0.1", "192.168.10.50")})
        assert len(filled) == 2 and filled.src_ip[1] == ip_to_int("172.16.0.1")

    def test_infer_schema(self, tmp_path):
        s = infer_schema(write(tmp_path / "i.csv", "Src IP,p,q,Label\n1.2.3.4,1,2,Benign\n1.2.3.5,1,2,Malicious\n"))
        assert s.features == ("p", "q") and s.classes == BINARY_CLASSES
        s = infer_schema(write(tmp_path / "j.csv", "p,Label\n1,Benign\n1,DoS Hulk\n"))
        assert s.classes == CLASSES


class TestMinMax:
    def test_column(self):
        ds = column([0, 5, 10])
        np.testing.assert_array_equal(scale_minmax(ds, sample_bounds(ds)).features[:, 0], [0, 0.5, 1])

    def test_constant_column(self):
        ds = column([3, 3, 3])
        np.testing.assert_array_equal(scale_minmax(ds, sample_bounds(ds)).features, 0.0)

    def test_drift_clamped(self):
        spec = sample_bounds(column([0, 10]))
        np.testing.assert_array_equal(scale_minmax(column([-5, 20, 5]), spec).features[:, 0], [0, 1, 0.5])

    def test_bounds_over_several_sets(self):
        spec = sample_bounds(column([0, 1]), column([4]))
        assert spec.low[0] == 0 and spec.high[0] == 4

    def test_misaligned_spec(self):
        spec = sample_bounds(column([0, 1]))
        with pytest.raises(SchemaError):
            scale_minmax(column([1.0, 2.0], FeatureSchema(("z",), BINARY_CLASSES)), spec)

    def test_invalid_bounds(self):
        with pytest.raises(ValueError):
            ScalingSpec("minmax", ("a",), np.array([1.0]), np.array([0.0]))

    @settings(max_examples=1000, deadline=None)
    @given(arrays(np.float64, (6, 3), elements=values))
    def test_range_and_shape(self, x):
        ds = Dataset(SMALL, x, np.arange(6) % 2)
        out = scale_minmax(ds, sample_bounds(ds))
        assert out.features.shape == x.shape
        assert np.all((out.features >= 0) & (out.features <= 1))
        np.testing.assert_array_equal(out.labels, ds.labels)


class TestStandard:
    def test_unit_column(self):
        ds = column([-1.0, 1.0])
        np.testing.assert_array_equal(scale_standard(ds, sample_moments(ds)).features[:, 0], [-1, 1])

    def test_shifted_test_column(self):
        spec = sample_moments(column([-1.0, 1.0]))
        out = scale_standard(column([2.0, 4.0]), spec).features[:, 0]
        np.testing.assert_array_equal(out, [2.0, 4.0])
        assert out.mean() == 3.0

    def test_zero_std(self):
        ds = column([2.0, 2.0])
        with pytest.raises(DataError, match="a"):
            scale_standard(ds, sample_moments(ds))
        np.testing.assert_array_equal(scale_standard(ds, sample_moments(ds), allow_degenerate=True).features, 0)

    @settings(max_examples=1000, deadline=None)
    @given(arrays(np.float64, (8, 3), elements=st.floats(-1e3, 1e3, allow_nan=False)))
    def test_moments(self, x):
        ds = Dataset(SMALL, x, np.arange(8) % 2)
        spec = sample_moments(ds)
        if np.any(spec.std < 1e-3):
            return
        out = scale_standard(ds, spec).features
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-9)


class TestLog:
    def test_values(self):
        assert signed_log(0.0) == 0.0
        assert signed_log(math.e - 1) == pytest.approx(1.0, abs=1e-15)
        assert signed_log(-1.0) == -math.log(2)

    @settings(max_examples=1000)
    @given(values, values)
    def test_monotone_and_odd(self, a, b):
        assert signed_log(-a) == -signed_log(a)
        if a < b:
            assert signed_log(a) <= signed_log(b)
            if b - a > 1e-6 * max(1.0, abs(a)):
                assert signed_log(a) < signed_log(b)

    def test_apply_dispatch(self):
        ds = column([0.0, math.e - 1])
        np.testing.assert_allclose(apply_scaling(ds, ScalingSpec("log")).features[:, 0], [0, 1])
        assert apply_scaling(ds, ScalingSpec("none")) is ds
        np.testing.assert_allclose(scale_log(ds).features, apply_scaling(ds, ScalingSpec("log")).features)


class TestSelect:
    def full(self):
        return Dataset(FeatureSchema(), RngStream(0).normal((3, 76)), [0, 1, 2])

    def test_identity(self):
        ds = self.full()
        np.testing.assert_array_equal(select_features(ds, ALL_FEATURES).features, ds.features)

    def test_top40(self):
        out = select_features(self.full(), TOP40_FEATURES)
        assert out.width == 40 and out.schema.features == TOP40_FEATURES
        np.testing.assert_array_equal(out.features[:, 0], self.full().features[:, ALL_FEATURES.index("Bwd IAT Std")])

    def test_drop_ips(self):
        assert select_features(self.full(), NO_IP_FEATURES).width == 74

    def test_unknown(self):
        with pytest.raises(SchemaError):
            select_features(self.full(), ["Nope"])


class TestBalance:
    def test_downsamples_benign(self):
        out = balance_classes(labelled(1000, 100), RngStream(0))
        assert out.counts() == {"Benign": 100, "Malicious": 100}

    def test_already_balanced(self):
        ds = labelled(50, 50)
        out = balance_classes(ds, RngStream(0))
        np.testing.assert_array_equal(np.sort(out.features, axis=0), np.sort(ds.features, axis=0))

    def test_benign_short(self):
        with pytest.warns(UserWarning):
            out = balance_classes(labelled(10, 20), RngStream(0))
        assert len(out) == 30

    def test_one_side_empty(self):
        with pytest.raises(DataError):
            balance_classes(labelled(10, 0), RngStream(0))

    def test_multiclass_malicious_untouched(self):
        schema = FeatureSchema(("a",), CLASSES)
        labels = np.r_[np.zeros(500, int), np.full(30, 1), np.full(70, 3)]
        out = balance_classes(Dataset(schema, np.arange(600.0)[:, None], labels), RngStream(2))
        assert out.counts()["Benign"] == 100
        assert out.counts()["DoS Slowloris"] == 30 and out.counts()["DoS Hulk"] == 70

    @settings(max_examples=1000, deadline=None)
    @given(st.integers(1, 60), st.integers(1, 60), st.integers(0, 2**20))
    def test_equal_counts(self, b, m, seed):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = balance_classes(labelled(b, m), RngStream(seed))
        counts = out.class_counts
        if b >= m:
            assert counts[0] == counts[1] == m
        else:
            assert counts[0] == b and counts[1] == m


class TestSplit:
    def test_ten_records(self):
        train, val = split_train_val(labelled(5, 5), 0.6, RngStream(0))
        assert (len(train), len(val)) == (6, 4)

    def test_same_seed(self):
        a = split_train_val(labelled(30, 20), 0.6, RngStream(3))[0]
        b = split_train_val(labelled(30, 20), 0.6, RngStream(3))[0]
        np.testing.assert_array_equal(a.features, b.features)

    def test_singleton_class_to_train(self):
        schema = FeatureSchema(("a",), CLASSES)
        ds = Dataset(schema, np.arange(11.0)[:, None], [0] * 10 + [6])
        with pytest.warns(UserWarning):
            train, val = split_train_val(ds, 0.6, RngStream(0))
        assert 6 in train.labels and 6 not in val.labels

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            split_train_val(labelled(5, 5), 1.0)

    @settings(max_examples=1000, deadline=None)
    @given(st.integers(2, 80), st.integers(2, 80), st.floats(0.05, 0.95), st.integers(0, 2**20))
    def test_disjoint_exhaustive_stratified(self, b, m, fraction, seed):
        ds = Dataset(SMALL, np.arange((b + m) * 3.0).reshape(-1, 3), np.r_[np.zeros(b, int), np.ones(m, int)])
        train, val = split_train_val(ds, fraction, RngStream(seed))
        assert len(train) + len(val) == len(ds)
        keys_t, keys_v = set(train.features[:, 0]), set(val.features[:, 0])
        assert not keys_t & keys_v and len(keys_t | keys_v) == len(ds)
        for c, n in ((0, b), (1, m)):
            assert abs(int(np.sum(train.labels == c)) - fraction * n) <= 1


class TestBatches:
    def test_sizes(self):
        ds = column(np.arange(2500.0))
        assert [len(x) for x, _ in batches(ds, 1024, RngStream(0))] == [1024, 1024, 452]

    def test_single_record_stream(self):
        ds = column(np.arange(5.0))
        out = [x for x, _ in batches(ds, 1, RngStream(0))]
        assert all(x.shape == (1, 1) for x in out)
        assert sorted(float(x[0, 0]) for x in out) == [0, 1, 2, 3, 4]

    def test_epochs_differ_runs_repeat(self):
        ds = column(np.arange(50.0))

        def order(epoch):
            return np.concatenate([x[:, 0] for x, _ in batches(ds, 16, RngStream(9), epoch)])

        assert not np.array_equal(order(0), order(1))
        np.testing.assert_array_equal(order(1), order(1))

    def test_empty(self):
        with pytest.raises(DataError):
            batches(column(np.zeros(0)), 4)

    def test_bad_size(self):
        with pytest.raises(ValueError):
            batches(column([1.0]), 0)


class TestSynthetic:
    def test_counts_exact(self):
        ds = gen_synthetic(two_cluster_spec(5, count=37), RngStream(0))
        np.testing.assert_array_equal(ds.class_counts, [37, 37])

    def test_deterministic(self):
        spec = two_cluster_spec(5, count=20)
        a, b = gen_synthetic(spec, RngStream(3)), gen_synthetic(spec, RngStream(3))
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.src_ip, b.src_ip)

    def test_tiny_spread_hits_mean(self):
        spec = SyntheticSpec(["a", "b"], [ClassSpec("Benign", [1.5, -2.0], [1e-300, 1e-300], 10)])
        np.testing.assert_array_equal(gen_synthetic(spec).features, [[1.5, -2.0]] * 10)

    def test_separated_by_midpoint_hyperplane(self):
        spec = two_cluster_spec(10, count=2000, separation=10.0)
        ds = gen_synthetic(spec, RngStream(1))
        m0, m1 = np.array(spec.classes[0].mean), np.array(spec.classes[1].mean)
        side = (ds.features - (m0 + m1) / 2) @ (m1 - m0) > 0
        assert np.mean(side == (ds.labels == 1)) >= 0.999

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            ClassSpec("Benign", [0.0], [1.0], 0)
        with pytest.raises(ValueError):
            ClassSpec("Benign", [0.0], [0.0], 1)

    def test_json_round_trip(self):
        spec = two_cluster_spec(4, count=3, seed=5)
        again = SyntheticSpec.from_json(spec.to_json())
        assert again.to_json() == spec.to_json()
