"""Tests for the nonlinearity, memory capacity and stability maps."""

import math

import numpy as np
import pytest

from spatial_rc.core import ReadoutMatrix, SpatialLayout, random_signal
from spatial_rc.metrics import (
    MetricMap,
    build_neighborhoods,
    delay_embed,
    global_memory_capacity,
    memory_capacity_map,
    nonlinearity_map,
    stability_map,
    tradeoff,
)


def _delayed(u, lag):
    out = np.zeros_like(u)
    out[lag:] = u[: len(u) - lag]
    return out


@pytest.fixture
def u():
    return random_signal(1000, seed=5).values


@pytest.fixture
def delay_readouts():
    """Hand-built depth-8 delay line: node j = u(t-1-j)."""
    values = random_signal(1500, seed=11).values
    data = np.column_stack([_delayed(values, j + 1) for j in range(8)])
    return values, ReadoutMatrix(data, SpatialLayout.grid(1, 8))


class TestDelayEmbed:
    def test_shape_and_order(self):
        rows = delay_embed(np.arange(6.0), 2)
        assert rows.shape == (4, 3)
        assert list(rows[0]) == [2.0, 1.0, 0.0]
        assert list(rows[-1]) == [5.0, 4.0, 3.0]

    def test_k_zero_is_the_signal(self):
        assert np.array_equal(delay_embed(np.arange(4.0), 0)[:, 0], np.arange(4.0))

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            delay_embed(np.arange(3.0), 3)


class TestNonlinearity:
    def test_square_is_nonlinear(self, u):
        readouts = ReadoutMatrix((u ** 2)[:, None], SpatialLayout.grid(1, 1))
        nl = nonlinearity_map(u, readouts, k=10, washout=10)
        assert nl.values[0] > 0.95

    def test_linear_filter_is_linear(self, u):
        y = 0.3 * _delayed(u, 2) + 0.1 * _delayed(u, 5)
        readouts = ReadoutMatrix(y[:, None], SpatialLayout.grid(1, 1))
        nl = nonlinearity_map(u, readouts, k=10, washout=10)
        assert nl.values[0] < 0.01

    def test_constant_trace_scores_zero_with_diagnostic(self, u):
        data = np.column_stack([u ** 2, np.full_like(u, 0.3)])
        nl = nonlinearity_map(u, ReadoutMatrix(data, SpatialLayout.grid(1, 2)), k=5, washout=10)
        assert nl.values[1] == 0.0
        assert any("constant trace" in d for d in nl.diagnostics)

    def test_misaligned_input_rejected(self, u):
        readouts = ReadoutMatrix(u[:-1, None], SpatialLayout.grid(1, 1))
        with pytest.raises(ValueError):
            nonlinearity_map(u, readouts, k=5, washout=0)

    def test_washout_covering_run_rejected(self, u):
        readouts = ReadoutMatrix(u[:, None], SpatialLayout.grid(1, 1))
        with pytest.raises(ValueError):
            nonlinearity_map(u, readouts, k=5, washout=len(u))


class TestNeighborhoods:
    def test_zero_threshold_is_self_only(self):
        hoods = build_neighborhoods(SpatialLayout.grid(3, 3), 0.0)
        assert hoods[4] == (4,)

    def test_unit_threshold_is_four_neighbours(self):
        hoods = build_neighborhoods(SpatialLayout.grid(3, 3), 1.0)
        assert hoods[4] == (1, 3, 4, 5, 7)
        assert hoods[0] == (0, 1, 3)

    def test_infinite_threshold_is_global(self):
        hoods = build_neighborhoods(SpatialLayout.grid(2, 3), math.inf)
        assert all(len(m) == 6 for m in hoods.members)

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            build_neighborhoods(SpatialLayout.grid(2, 2), -1.0)


class TestMemoryCapacity:
    def test_delay_line_oracle(self, delay_readouts):
        values, readouts = delay_readouts
        hoods = build_neighborhoods(readouts.layout, math.inf)
        mc = memory_capacity_map(values, readouts, hoods, k=12, washout=500)
        assert np.all(np.abs(mc.values - 8.0) < 0.25)
        assert mc.terms.shape == (8, 12)
        assert np.allclose(mc.terms[:, :8], 1.0)

    def test_global_scalar_matches_map(self, delay_readouts):
        values, readouts = delay_readouts
        assert global_memory_capacity(values, readouts, k=12, washout=500) == pytest.approx(8.0, abs=0.25)

    def test_local_neighbourhood_sees_less(self, delay_readouts):
        values, readouts = delay_readouts
        hoods = build_neighborhoods(readouts.layout, 0.0)
        mc = memory_capacity_map(values, readouts, hoods, k=12, washout=500)
        # each node alone recalls exactly its own delay
        assert np.all(np.abs(mc.values - 1.0) < 0.1)

    def test_k_zero_rejected(self, delay_readouts):
        values, readouts = delay_readouts
        hoods = build_neighborhoods(readouts.layout, math.inf)
        with pytest.raises(ValueError, match="k >= 1"):
            memory_capacity_map(values, readouts, hoods, k=0)

    def test_oversized_neighbourhood_rejected(self):
        values = random_signal(40, seed=1).values
        readouts = ReadoutMatrix(np.random.default_rng(0).normal(size=(40, 36)), SpatialLayout.grid(6, 6))
        hoods = build_neighborhoods(readouts.layout, math.inf)
        with pytest.raises(ValueError, match="threshold_distance"):
            memory_capacity_map(values, readouts, hoods, k=2, washout=0)

    def test_long_memory_flagged(self, delay_readouts):
        values, readouts = delay_readouts
        hoods = build_neighborhoods(readouts.layout, math.inf)
        mc = memory_capacity_map(values, readouts, hoods, k=4, washout=500)
        assert any("memory extends past k" in d for d in mc.diagnostics)

    def test_parallel_matches_sequential(self, delay_readouts):
        values, readouts = delay_readouts
        noisy = ReadoutMatrix(np.tanh(readouts.data * 2.0), readouts.layout)
        hoods = build_neighborhoods(noisy.layout, 2.0)
        one = memory_capacity_map(values, noisy, hoods, k=10, threads=1)
        many = memory_capacity_map(values, noisy, hoods, k=10, threads=4)
        assert np.array_equal(one.values, many.values)


class TestStability:
    def test_identical_snapshots_are_zero(self):
        layout = SpatialLayout.grid(2, 2)
        st = stability_map(np.ones(4), np.ones(4), layout)
        assert np.all(st.values == 0.0)

    def test_absolute_difference(self):
        st = stability_map(np.array([0.0, 1.0]), np.array([0.5, 0.0]), SpatialLayout.grid(1, 2))
        assert np.allclose(st.values, [0.5, 1.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            stability_map(np.zeros(3), np.zeros(4), SpatialLayout.grid(2, 2))


class TestMetricMap:
    def test_nonlinearity_bounded(self):
        with pytest.raises(ValueError):
            MetricMap("nonlinearity", [1.5], SpatialLayout.grid(1, 1))

    def test_memory_bounded_by_k(self):
        with pytest.raises(ValueError):
            MetricMap("memory_capacity", [3.5], SpatialLayout.grid(1, 1), {"k": 3})

    def test_unknown_metric(self):
        with pytest.raises(ValueError):
            MetricMap("entropy", [0.0], SpatialLayout.grid(1, 1))

    def test_summary(self):
        m = MetricMap("stability", [0.0, 1.0, 2.0], SpatialLayout.grid(1, 3))
        assert m.summary() == {"mean": 1.0, "min": 0.0, "max": 2.0}

    def test_csv(self, tmp_path):
        m = MetricMap("stability", [0.0, 0.25], SpatialLayout.grid(1, 2))
        m.to_csv(tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "# metric=stability"
        assert lines[1] == "node_id,x,y,value"
        assert lines[3] == "1,1,0,0.25"

    def test_pgm(self, tmp_path):
        m = MetricMap("stability", [0.0, 1.0, 2.0, 4.0], SpatialLayout.grid(2, 2))
        lo, hi = m.to_pgm(tmp_path / "s.pgm")
        lines = (tmp_path / "s.pgm").read_text().splitlines()
        assert (lo, hi) == (0.0, 4.0)
        assert lines[0] == "P2"
        assert lines[2] == "2 2"
        assert lines[4] == "0 64"
        assert lines[5] == "128 255"

    def test_pgm_constant_map(self, tmp_path):
        m = MetricMap("stability", [0.0, 0.0], SpatialLayout.grid(1, 2))
        m.to_pgm(tmp_path / "z.pgm")
        assert (tmp_path / "z.pgm").read_text().splitlines()[-1] == "0 0"


def test_tradeoff_detects_anticorrelation():
    layout = SpatialLayout.grid(1, 10)
    nl = MetricMap("nonlinearity", np.linspace(0.0, 0.9, 10), layout)
    mc = MetricMap("memory_capacity", np.linspace(5.0, 1.0, 10), layout, {"k": 10})
    rho, p = tradeoff(nl, mc)
    assert rho == pytest.approx(-1.0)
    assert p < 0.01
