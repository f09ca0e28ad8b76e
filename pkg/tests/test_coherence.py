import json

import numpy as np
import pytest

from psynth.coherence import (
    ConstantBackend,
    MonotoneOracleBackend,
    SweepLevels,
    evaluate,
    fit_backend_normalizer,
    score,
    sweep_one,
)
from psynth.errors import SilentOutputError
from psynth.features import FEATURE_NAMES, FeatureNormalizer


def synthetic_pairs(n, seed=0):
    """(envelope, features) evaluation records with random feature vectors."""
    rng = np.random.default_rng(seed)
    env = np.exp(-np.arange(16000) / 3000.0)
    return [(env, rng.uniform(0.1, 0.9, 7)) for _ in range(n)]


class TestScore:
    def test_ordered(self):
        assert score(0.1, 0.5, 0.9) == (True, True, True)

    def test_ties_fail(self):
        assert score(0.5, 0.5, 0.5) == (False, False, False)

    def test_inverted(self):
        assert score(0.9, 0.5, 0.1) == (False, False, False)


class TestSweepLevels:
    def test_defaults(self):
        levels = SweepLevels()
        assert levels.as_tuple() == (0.2, 0.5, 0.8)

    def test_validation(self):
        with pytest.raises(ValueError):
            SweepLevels(0.5, 0.5, 0.8)
        with pytest.raises(ValueError):
            SweepLevels(0.2, 0.5, 1.2)


class TestMonotoneBackend:
    def test_sweep_orders_for_each_feature(self):
        backend = MonotoneOracleBackend()
        records = synthetic_pairs(3, seed=1)
        normalizer = fit_backend_normalizer(backend, records)
        env, fs = records[0]
        for idx in range(len(FEATURE_NAMES)):
            m_low, m_mid, m_high = sweep_one(backend, env, fs, idx, SweepLevels(),
                                             normalizer)
            assert m_low < m_mid < m_high, FEATURE_NAMES[idx]

    def test_evaluate_all_ones(self):
        backend = MonotoneOracleBackend()
        records = synthetic_pairs(5, seed=2)
        normalizer = fit_backend_normalizer(backend, records)
        report = evaluate(backend, records, normalizer)
        assert report.aggregate == {"e1": 1.0, "e2": 1.0, "e3": 1.0}
        assert report.total_pairs == 5 * 7
        assert report.silent_failures == 0

    def test_pure_function_of_features(self):
        backend = MonotoneOracleBackend()
        fs = np.full(7, 0.5)
        env = np.zeros(16000)
        assert np.array_equal(backend(env, fs), backend(env, fs))


class TestConstantBackend:
    def test_all_zero_accuracies(self):
        backend = ConstantBackend()
        records = synthetic_pairs(3, seed=3)
        normalizer = fit_backend_normalizer(backend, records)
        report = evaluate(backend, records, normalizer)
        assert report.aggregate == {"e1": 0.0, "e2": 0.0, "e3": 0.0}


class TestSilentBackend:
    def test_counted_and_failed(self, caplog):
        def silent_backend(env, fs):
            return np.zeros(16000)

        records = synthetic_pairs(2, seed=4)
        normalizer = FeatureNormalizer(np.zeros(7), np.ones(7))
        report = evaluate(silent_backend, records, normalizer)
        assert report.silent_failures == report.total_pairs == 14
        assert report.aggregate == {"e1": 0.0, "e2": 0.0, "e3": 0.0}

    def test_sweep_one_raises(self):
        records = synthetic_pairs(1, seed=5)
        env, fs = records[0]
        with pytest.raises(SilentOutputError):
            sweep_one(lambda e, f: np.zeros(16000), env, fs, 0, SweepLevels(),
                      FeatureNormalizer(np.zeros(7), np.ones(7)))


class TestReport:
    def _report(self):
        backend = MonotoneOracleBackend()
        records = synthetic_pairs(2, seed=6)
        normalizer = fit_backend_normalizer(backend, records)
        return evaluate(backend, records, normalizer)

    def test_json_schema(self):
        doc = json.loads(self._report().to_json())
        assert doc["levels"] == {"low": 0.2, "mid": 0.5, "high": 0.8}
        assert set(doc["features"].keys()) == set(FEATURE_NAMES)
        for stats in doc["features"].values():
            assert set(stats) == {"e1", "e2", "e3", "n"}
        assert doc["total_pairs"] == 14

    def test_table_layout(self):
        table = self._report().to_table()
        lines = table.splitlines()
        assert lines[0].split() == ["Feature", "E1", "E2", "E3"]
        assert len(lines) == 1 + len(FEATURE_NAMES) + 1  # header + rows + aggregate

    def test_accuracies_are_exact_counts(self):
        report = self._report()
        for stats in report.per_feature.values():
            for key in ("e1", "e2", "e3"):
                assert stats[key] * stats["n"] == int(stats[key] * stats["n"])

    def test_rerun_identical(self):
        a, b = self._report(), self._report()
        assert a.to_json() == b.to_json()
