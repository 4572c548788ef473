import os

import numpy as np
import pytest

from tnjet.data import (
    DEFAULT_FEATURES,
    RAW_FEATURE_COUNT,
    ConstantFeatureError,
    JetRecord,
    Jtn1Error,
    LabelRangeError,
    MalformedHeaderError,
    TruncatedPayloadError,
    fit_scaler,
    load_dataset,
    make_batch,
    write_dataset,
)


def jet(rows, label=0):
    return JetRecord(np.asarray(rows, dtype=np.float32), label)


def random_jet(rng, n_constituents, label=0):
    rows = rng.uniform(0.0, 2.0, size=(n_constituents, RAW_FEATURE_COUNT))
    order = np.argsort(-rows[:, DEFAULT_FEATURES.pt], kind="stable")
    return jet(rows[order], label)


class TestJtn1:
    def test_empty_file_round_trip(self, tmp_path):
        path = tmp_path / "empty.jtn1"
        write_dataset(path, [])
        assert load_dataset(path) == []

    def test_single_jet_round_trip_is_bit_exact(self, tmp_path, rng):
        rec = random_jet(rng, 2, label=3)
        path = tmp_path / "one.jtn1"
        write_dataset(path, [rec])
        (loaded,) = load_dataset(path)
        assert loaded.label == 3
        assert loaded.constituents.dtype == np.float32
        assert np.array_equal(
            loaded.constituents.view(np.uint32), rec.constituents.view(np.uint32)
        )

    def test_loader_sorts_by_descending_pt(self, tmp_path, rng):
        rows = rng.uniform(0.0, 1.0, size=(5, RAW_FEATURE_COUNT))
        path = tmp_path / "unsorted.jtn1"
        write_dataset(path, [jet(rows)])
        (loaded,) = load_dataset(path)
        pts = loaded.constituents[:, DEFAULT_FEATURES.pt]
        assert np.all(pts[:-1] >= pts[1:])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.jtn1"
        path.write_bytes(b"NOPE" + b"\x00" * 8)
        with pytest.raises(MalformedHeaderError) as err:
            load_dataset(path)
        assert err.value.offset == 0

    def test_short_header(self, tmp_path):
        path = tmp_path / "short.jtn1"
        path.write_bytes(b"JTN1\x01")
        with pytest.raises(MalformedHeaderError):
            load_dataset(path)

    def test_wrong_feature_count(self, tmp_path, rng):
        path = tmp_path / "feat.jtn1"
        write_dataset(path, [random_jet(rng, 1)])
        data = bytearray(path.read_bytes())
        data[10] = 7  # feature-count field
        path.write_bytes(bytes(data))
        with pytest.raises(MalformedHeaderError, match="feature count"):
            load_dataset(path)

    def test_truncated_payload_reports_offset(self, tmp_path, rng):
        path = tmp_path / "trunc.jtn1"
        write_dataset(path, [random_jet(rng, 3)])
        blob = path.read_bytes()
        path.write_bytes(blob[:-10])
        with pytest.raises(TruncatedPayloadError) as err:
            load_dataset(path)
        assert err.value.offset > 0

    def test_label_out_of_range(self, tmp_path, rng):
        path = tmp_path / "label.jtn1"
        write_dataset(path, [random_jet(rng, 1)])
        data = bytearray(path.read_bytes())
        data[12] = 9  # first jet's label byte
        path.write_bytes(bytes(data))
        with pytest.raises(LabelRangeError) as err:
            load_dataset(path)
        assert err.value.offset == 12

    def test_trailing_bytes_rejected(self, tmp_path, rng):
        path = tmp_path / "trail.jtn1"
        write_dataset(path, [random_jet(rng, 1)])
        path.write_bytes(path.read_bytes() + b"\x00\x00")
        with pytest.raises(Jtn1Error, match="trailing"):
            load_dataset(path)

    @pytest.mark.skipif(
        "TNJET_REAL_TEST_SPLIT" not in os.environ,
        reason="converted reference dataset not available",
    )
    def test_real_test_split_size(self):
        records = load_dataset(os.environ["TNJET_REAL_TEST_SPLIT"])
        assert len(records) == 260_000


class TestScaler:
    def test_uniform_grid(self):
        rows = np.zeros((101, RAW_FEATURE_COUNT), dtype=np.float32)
        for col in DEFAULT_FEATURES.as_tuple():
            rows[:, col] = np.arange(101.0)
        params = fit_scaler([jet(rows)])
        assert params.q5 == pytest.approx([5.0, 5.0, 5.0])
        assert params.q95 == pytest.approx([95.0, 95.0, 95.0])

    def test_constant_feature_errors_with_name(self):
        rows = np.ones((10, RAW_FEATURE_COUNT), dtype=np.float32)
        with pytest.raises(ConstantFeatureError, match="pt"):
            fit_scaler([jet(rows)])

    def test_empty_errors(self):
        with pytest.raises(ValueError, match="empty"):
            fit_scaler([])

    def test_matches_sort_oracle(self, rng):
        values = rng.normal(size=10_000)
        rows = np.zeros((10_000, RAW_FEATURE_COUNT), dtype=np.float32)
        for col in DEFAULT_FEATURES.as_tuple():
            rows[:, col] = values + col  # distinct per column
        params = fit_scaler([jet(rows)])

        def sort_percentile(x, q):
            x = np.sort(np.asarray(x, dtype=np.float64))
            pos = (len(x) - 1) * q / 100.0
            lo = int(np.floor(pos))
            hi = min(lo + 1, len(x) - 1)
            return x[lo] + (pos - lo) * (x[hi] - x[lo])

        for i, col in enumerate(DEFAULT_FEATURES.as_tuple()):
            vals = rows[:, col].astype(np.float64)
            assert params.q5[i] == pytest.approx(sort_percentile(vals, 5), abs=1e-12)
            assert params.q95[i] == pytest.approx(sort_percentile(vals, 95), abs=1e-12)


class TestMakeBatch:
    @pytest.fixture
    def scaler(self, rng):
        return fit_scaler([random_jet(rng, 30) for _ in range(50)])

    def test_empty_jet_pads_to_zero_rows(self, scaler):
        batch = make_batch([jet(np.zeros((0, RAW_FEATURE_COUNT)))], scaler, 8)
        assert batch.features.shape == (1, 8, 3)
        assert np.all(batch.features == 0.0)

    def test_keeps_highest_pt_rows(self, rng, scaler):
        rec = random_jet(rng, 10)
        batch = make_batch([rec], scaler, 8)
        pts = np.sort(rec.constituents[:, DEFAULT_FEATURES.pt])[::-1]
        span = scaler.q95[0] - scaler.q5[0]
        expected = (pts[:8].astype(np.float64) - scaler.q5[0]) / span
        assert np.allclose(batch.features[0, :, 0], expected, atol=1e-7)

    def test_quantile_endpoints_map_to_unit_interval(self, scaler):
        rows = np.zeros((2, RAW_FEATURE_COUNT), dtype=np.float32)
        for i, col in enumerate(DEFAULT_FEATURES.as_tuple()):
            rows[0, col] = scaler.q5[i]
            rows[1, col] = scaler.q95[i]
        order = np.argsort(-rows[:, DEFAULT_FEATURES.pt])
        batch = make_batch([jet(rows[order])], scaler, 2)
        values = np.sort(batch.features[0, :, 0])
        assert values[0] == pytest.approx(0.0, abs=1e-7)
        assert values[1] == pytest.approx(1.0, abs=1e-7)

    def test_no_clipping_outside_quantiles(self, scaler):
        rows = np.zeros((1, RAW_FEATURE_COUNT), dtype=np.float32)
        for col in DEFAULT_FEATURES.as_tuple():
            rows[0, col] = 1e6
        batch = make_batch([jet(rows)], scaler, 1)
        assert np.all(batch.features[0, 0] > 1.0)

    def test_padding_is_bitwise_zero(self, rng, scaler):
        batch = make_batch([random_jet(rng, 3)], scaler, 8)
        assert np.all(batch.features[0, 3:] == 0.0)
        assert np.all(np.signbit(batch.features[0, 3:]) == False)  # noqa: E712

    def test_power_of_two_required(self, scaler):
        with pytest.raises(ValueError, match="power of two"):
            make_batch([], scaler, 12)

    def test_scaling_is_monotone(self, rng, scaler):
        a, b = sorted(rng.uniform(0.0, 3.0, size=2))
        rows = np.zeros((2, RAW_FEATURE_COUNT), dtype=np.float32)
        rows[0, DEFAULT_FEATURES.pt] = b  # sorted descending by pt
        rows[1, DEFAULT_FEATURES.pt] = a
        batch = make_batch([jet(rows)], scaler, 2)
        assert batch.features[0, 0, 0] >= batch.features[0, 1, 0]
