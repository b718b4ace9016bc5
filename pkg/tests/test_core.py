"""Tests for core domain types, signal generation and CSV plumbing."""

import numpy as np
import pytest

from spatial_rc.core import (
    DriveConfig,
    ReadoutMatrix,
    SpatialLayout,
    TimeSeries,
    derive_seed,
    normalize_minmax,
    random_signal,
    split_train_test,
)


class TestDeriveSeed:
    def test_same_inputs_same_seed(self):
        assert derive_seed(7, "signal") == derive_seed(7, "signal")

    def test_streams_differ(self):
        assert derive_seed(7, "signal") != derive_seed(7, "reservoir")

    def test_run_seeds_differ(self):
        assert derive_seed(1, "signal") != derive_seed(2, "signal")


class TestTimeSeries:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            TimeSeries([0.0, np.nan])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            TimeSeries([])

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            TimeSeries([1.0, 2.0], dt=0.0)

    def test_values_are_read_only(self):
        ts = TimeSeries([1.0, 2.0])
        with pytest.raises(ValueError):
            ts.values[0] = 5.0

    def test_times(self):
        ts = TimeSeries([1.0, 2.0, 3.0], dt=0.5, t0=10.0)
        assert np.allclose(ts.times, [10.0, 10.5, 11.0])

    def test_csv_keeps_values_and_meta(self, tmp_path):
        ts = random_signal(50, seed=3)
        path = tmp_path / "u.csv"
        ts.to_csv(path)
        back = TimeSeries.from_csv(path)
        assert np.array_equal(back.values, ts.values)
        assert back.meta["seed"] == "3"
        assert path.read_text().splitlines()[0].startswith("# dt=")


class TestSpatialLayout:
    def test_grid_ids_are_row_major(self):
        layout = SpatialLayout.grid(2, 3)
        assert layout.n_nodes == 6
        assert tuple(layout.positions[4]) == (1.0, 1.0)
        assert tuple(layout.positions[2]) == (2.0, 0.0)
        assert layout.grid_shape == (2, 3)

    def test_distance_matrix(self):
        layout = SpatialLayout.grid(1, 3, pitch=2.0)
        d = layout.distance_matrix()
        assert d[0, 2] == pytest.approx(4.0)
        assert layout.diameter == pytest.approx(4.0)

    def test_chebyshev(self):
        layout = SpatialLayout.grid(2, 2, metric="chebyshev")
        assert layout.distance_matrix()[0, 3] == pytest.approx(1.0)

    def test_rejects_bad_metric(self):
        with pytest.raises(ValueError):
            SpatialLayout.grid(2, 2, metric="manhattan")

    def test_rejects_wrong_grid_shape(self):
        with pytest.raises(ValueError):
            SpatialLayout(np.zeros((5, 2)), grid_shape=(2, 3))

    def test_permuted_drops_grid(self):
        layout = SpatialLayout.grid(2, 2)
        moved = layout.permuted(np.array([3, 2, 1, 0]))
        assert moved.grid_shape is None
        assert tuple(moved.positions[0]) == (1.0, 1.0)

    def test_csv_round_trip(self, tmp_path):
        layout = SpatialLayout.grid(3, 4, pitch=0.5)
        layout.to_csv(tmp_path / "layout.csv")
        back = SpatialLayout.from_csv(tmp_path / "layout.csv")
        assert back.grid_shape == (3, 4)
        assert back.pitch == 0.5
        assert np.array_equal(back.positions, layout.positions)


class TestReadoutMatrix:
    def test_shape_must_match_layout(self):
        with pytest.raises(ValueError):
            ReadoutMatrix(np.zeros((10, 3)), SpatialLayout.grid(2, 2))

    def test_column_and_rows(self):
        data = np.arange(12, dtype=float).reshape(6, 2)
        readouts = ReadoutMatrix(data, SpatialLayout.grid(1, 2))
        assert np.array_equal(readouts.column(1).values, data[:, 1])
        assert readouts.rows(2, 4).n_steps == 2

    def test_permuted_moves_columns_with_positions(self):
        data = np.arange(12, dtype=float).reshape(3, 4)
        readouts = ReadoutMatrix(data, SpatialLayout.grid(2, 2))
        moved = readouts.permuted(np.array([2, 0, 3, 1]))
        assert np.array_equal(moved.data[:, 0], data[:, 2])
        assert np.array_equal(moved.layout.positions[0], readouts.layout.positions[2])

    def test_csv_round_trip(self, tmp_path):
        layout = SpatialLayout.grid(2, 2)
        readouts = ReadoutMatrix(np.random.default_rng(0).normal(size=(20, 4)), layout)
        readouts.to_csv(tmp_path / "r.csv")
        back = ReadoutMatrix.from_csv(tmp_path / "r.csv", layout)
        assert np.array_equal(back.data, readouts.data)


class TestDriveConfig:
    def test_defaults(self):
        drive = DriveConfig()
        assert drive.hold_time == 1.0
        assert drive.direction == (1.0, 0.0)

    def test_rejects_non_unit_direction(self):
        with pytest.raises(ValueError):
            DriveConfig(direction=(1.0, 1.0))

    def test_rejects_zero_time_scale(self):
        with pytest.raises(ValueError):
            DriveConfig(time_scale=0.0)

    def test_hold_time(self):
        assert DriveConfig(time_scale=0.25).hold_time == 4.0


class TestRandomSignal:
    def test_length_and_bounds(self):
        ts = random_signal(1500, -1.0, 1.0, seed=0)
        assert len(ts) == 1500
        assert ts.values.min() >= -1.0 and ts.values.max() <= 1.0

    def test_deterministic(self):
        assert np.array_equal(random_signal(100, seed=9).values, random_signal(100, seed=9).values)

    def test_seeds_differ(self):
        assert not np.array_equal(random_signal(100, seed=1).values, random_signal(100, seed=2).values)

    def test_metadata_records_generator(self):
        meta = random_signal(10, seed=4).meta
        assert meta["prng"] == "numpy.PCG64/SeedSequence"
        assert meta["seed"] == 4

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            random_signal(0)

    def test_bad_bounds_rejected(self):
        with pytest.raises(ValueError):
            random_signal(10, low=1.0, high=1.0)


class TestNormalize:
    def test_maps_onto_range(self):
        ts = normalize_minmax(TimeSeries([2.0, 4.0, 3.0]))
        assert np.allclose(ts.values, [-1.0, 1.0, 0.0])

    def test_constant_goes_to_midpoint(self):
        ts = normalize_minmax(TimeSeries([5.0, 5.0]), 0.0, 2.0)
        assert np.allclose(ts.values, [1.0, 1.0])


class TestSplit:
    def test_prefix_split(self):
        x = np.arange(8.0)[:, None]
        (xa, ya), (xb, yb) = split_train_test(x, np.arange(8.0))
        assert len(xa) == 6 and len(xb) == 2
        assert ya[-1] == 5.0 and yb[0] == 6.0

    def test_too_few_rows_rejected(self):
        with pytest.raises(ValueError, match="need >= 2"):
            split_train_test(np.zeros((4, 1)), np.zeros(4))

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            split_train_test(np.zeros((10, 1)), np.zeros(9))

    def test_fraction_must_be_open_interval(self):
        with pytest.raises(ValueError):
            split_train_test(np.zeros((10, 1)), np.zeros(10), train_fraction=1.0)
