"""Tests for the worker-count resolution and ordered parallel map."""

import os

import pytest

from spatial_rc.engine import THREADS_ENV, parallel_map, resolve_threads


class TestResolveThreads:
    def test_explicit_value(self):
        assert resolve_threads(3) == 3

    def test_zero_means_cpu_count(self):
        assert resolve_threads(0) == (os.cpu_count() or 1)

    def test_env_used_when_unset(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "5")
        assert resolve_threads(None) == 5

    def test_default_is_one(self, monkeypatch):
        monkeypatch.delenv(THREADS_ENV, raising=False)
        assert resolve_threads(None) == 1

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            resolve_threads(-1)


class TestParallelMap:
    def test_keeps_input_order(self):
        assert parallel_map(lambda x: x * x, range(50), threads=4) == [x * x for x in range(50)]

    def test_empty(self):
        assert parallel_map(lambda x: x, [], threads=4) == []

    def test_errors_propagate(self):
        def boom(x):
            raise RuntimeError("bad unit")

        with pytest.raises(RuntimeError, match="bad unit"):
            parallel_map(boom, [1, 2], threads=2)
