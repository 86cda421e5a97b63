import math

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings, strategies as st
from scipy import stats

from fdpv_hurst.detector import (
    MIN_STEP2_PAIRS,
    Candidate,
    DetectorConfig,
    FilteredDerivativeTrace,
    calibrate_threshold,
    detect,
    filtered_derivative,
    select_potential,
    step2_pvalues,
    windowed_ibs,
)
from fdpv_hurst.ibs import ibs, psi_sequence
from fdpv_hurst.synthesis import PiecewiseModel, simulate_fbm, simulate_piecewise_fbm

from .conftest import integrate_second_differences


def naive_windowed(x, k, a):
    d = [x[i + 2] - 2 * x[i + 1] + x[i] for i in range(len(x) - 2)]
    return sum((d[i] >= 0) == (d[i + 1] >= 0) for i in range(k, k + a)) / a


def naive_derivative(x, a):
    p = len(x) - 3
    return [naive_windowed(x, k, a) - naive_windowed(x, k - a, a) for k in range(a, p - a + 1)]


class TestWindowedIbs:
    def test_against_naive(self, rng):
        x = simulate_fbm(0.4, 1.0, 600, seed=2)
        for _ in range(100):
            a = int(rng.integers(2, 200))
            k = int(rng.integers(0, len(x) - 3 - a + 1))
            assert windowed_ibs(x, k, a) == naive_windowed(x.tolist(), k, a)

    def test_full_window_is_ibs(self):
        x = simulate_fbm(0.8, 1.0, 999, seed=3)
        assert windowed_ibs(x, 0, len(x) - 3) == ibs(x).value

    @pytest.mark.parametrize("k, a", [(-1, 10), (590, 10), (0, 598)])
    def test_out_of_range(self, k, a):
        with pytest.raises(IndexError):
            windowed_ibs(simulate_fbm(0.4, 1.0, 600, seed=2), k, a)


class TestFilteredDerivative:
    def test_against_naive_loop(self, rng):
        for trial in range(20):
            n = int(rng.integers(40, 400))
            a = int(rng.integers(2, (n - 4) // 2))
            x = simulate_fbm(float(rng.uniform(0.1, 0.9)), 1.0, n, seed=trial)
            trace = filtered_derivative(x, a)
            assert trace.values.tolist() == pytest.approx(naive_derivative(x.tolist(), a), abs=1e-15)
            assert trace.indices[0] == a and trace.indices[-1] == n - 3 - a

    def test_against_incremental_update(self):
        x = simulate_fbm(0.3, 1.0, 5000, seed=8)
        a = 300
        psi = psi_sequence(x).astype(int).tolist()
        p = len(psi)
        right, left = sum(psi[a : 2 * a]), sum(psi[0:a])
        expected = [right - left]
        for k in range(a + 1, p - a + 1):
            right += psi[k + a - 1] - psi[k - 1]
            left += psi[k - 1] - psi[k - a - 1]
            expected.append(right - left)
        assert filtered_derivative(x, a).counts.tolist() == expected

    def test_perfect_junction(self):
        # Second differences alternate on the left (psi = 0) and are constant on
        # the right (psi = 1): the derivative reaches +1 at the junction.
        a = 50
        d = [(-1) ** i for i in range(a + 1)] + [1.0] * (a + 1)
        x = integrate_second_differences(d)
        psi = psi_sequence(x)
        assert psi[:a].sum() == 0 and psi[a + 1 :].all()
        trace = filtered_derivative(x, a)
        peak = int(np.argmax(trace.values))
        assert trace.values[peak] == pytest.approx(1.0, abs=1 / a) and trace.indices[peak] in (a, a + 1)
        reverse = filtered_derivative(integrate_second_differences(d[::-1]), a)
        assert reverse.values.min() == pytest.approx(-1.0, abs=1 / a)

    def test_too_short(self):
        with pytest.raises(ValueError, match="more than"):
            filtered_derivative(np.zeros(23), 10)


class TestThreshold:
    def test_p1_one_gives_zero(self):
        assert calibrate_threshold(5000, 100, 0.5, 1.0) == 0.0

    def test_mc_threshold_size(self):
        n, a, h = 2**16, 2000, 0.5
        c1 = calibrate_threshold(n, a, h, 0.05, "mc", replicates=500, seed=0)
        # Fresh replicates, independent of the calibration streams.
        exceed = 0
        for r in range(500):
            x = simulate_fbm(h, 1.0, n, seed=10_000 + r)
            exceed += np.abs(filtered_derivative(x, a).values).max() > c1
        assert abs(exceed / 500 - 0.05) <= 0.03

    def test_gaussian_against_mc(self, variance_table, capsys):
        n, a = 2**15, 1000
        mc = calibrate_threshold(n, a, 0.5, 0.05, "mc", replicates=200)
        gauss = calibrate_threshold(n, a, 0.5, 0.05, "gaussian", variance_table=variance_table)
        with capsys.disabled():
            print(f"\n  C1 at n={n}, A={a}: mc={mc:.4f} gaussian={gauss:.4f}")
        assert 0.5 * mc < gauss < 2.0 * mc

    def test_gaussian_formula(self, variance_table):
        n, a = 10_000, 500
        s2, _ = variance_table.sigma_squared(0.7)
        expected = math.sqrt(2 * s2 / a) * stats.norm.isf(0.01 / (2 * 18))
        got = calibrate_threshold(n, a, 0.7, 0.01, "gaussian", variance_table=variance_table)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_p1(self):
        args = (8000, 500, 0.6)
        t = [calibrate_threshold(*args, p, replicates=200, seed=1) for p in (0.01, 0.05, 0.2)]
        assert t[0] >= t[1] >= t[2] > 0

    def test_errors(self):
        with pytest.raises(ValueError):
            calibrate_threshold(1000, 100, 0.5, 0.05, "gaussian")
        with pytest.raises(ValueError):
            calibrate_threshold(1000, 100, 0.5, 0.05, "mc", replicates=10)
        with pytest.raises(ValueError):
            calibrate_threshold(1000, 100, 0.5, 0.05, "bogus")
        with pytest.raises(ValueError):
            calibrate_threshold(100, 100, 0.5, 0.05)


def trace_of(values, window):
    return FilteredDerivativeTrace(np.asarray(values, dtype=np.int64), window)


class TestSelectPotential:
    def test_nothing_above_threshold(self):
        assert select_potential(trace_of([1, 2, 3, 2, 1], 10), 0.5) == []

    def test_triangular_apex(self):
        (c,) = select_potential(trace_of([0, 1, 2, 3, 4, 3, 2, 1, 0], 10), 0.05, 1)
        assert c == Candidate(10 + 4, 0.4)

    def test_close_peaks_keep_highest(self):
        counts = [0, 5, 0, 0, 8, 0, 0, 0, 0, 0, 6, 0]
        got = select_potential(trace_of(counts, 4), 0.1, 4)
        assert [c.index for c in got] == [4 + 4, 4 + 10]

    def test_tie_goes_to_smaller_index(self):
        got = select_potential(trace_of([0, 7, 0, 7, 0], 2), 0.1, 5)
        assert [c.index for c in got] == [2 + 1]

    def test_plateau_first_index_and_negative_peaks(self):
        got = select_potential(trace_of([0, -3, -3, -3, 0, 0, 0, 0, 2, 2], 1), 1.0, 2)
        assert [(c.index, c.height) for c in got] == [(2, 3.0), (9, 2.0)]

    def test_strict_threshold(self):
        assert select_potential(trace_of([0, 5, 0], 10), 0.5) == []

    def test_empty_trace(self):
        assert select_potential(trace_of([], 10), 0.1) == []

    @settings(max_examples=100)
    @given(st.lists(st.integers(-50, 50), min_size=1, max_size=300), st.integers(1, 40), st.floats(0, 5))
    def test_invariants(self, counts, sep, thr):
        trace = trace_of(counts, 10)
        got = select_potential(trace, thr, sep)
        idx = [c.index for c in got]
        assert idx == sorted(idx)
        assert all(b - a >= sep for a, b in zip(idx, idx[1:]))
        assert all(c.height > thr for c in got)
        assert all(c.height == abs(counts[c.index - 10]) / 10 for c in got)


class TestStep2:
    def test_null_uniformity(self, variance_table):
        n, reps = 20_001, 200
        pvals = []
        for r in range(reps):
            x = simulate_fbm(0.6, 1.0, n, seed=500 + r)
            (res,) = step2_pvalues(x, [n // 2], variance_table)
            pvals.append(res.p_value)
        pvals = np.array(pvals)
        assert abs(np.mean(pvals <= 0.05) - 0.05) <= 0.03
        assert stats.kstest(pvals, "uniform").pvalue > 0.001

    def test_power(self, variance_table):
        model = PiecewiseModel.from_segments([0.4, 0.8], 10_000)
        path, (tau,) = simulate_piecewise_fbm(model, seed=17)
        (res,) = step2_pvalues(path, [tau], variance_table)
        assert res.p_value < 1e-4 and not res.too_short

    def test_identical_flanks(self, variance_table):
        a = 100
        d = [(-1) ** (i // 2) for i in range(2 * a + 1)]
        x = integrate_second_differences(d)
        psi = psi_sequence(x)
        k = a
        assert psi[:k].mean() == psi[k:].mean()
        (res,) = step2_pvalues(x, [k], variance_table)
        assert res.statistic == 0.0 and res.p_value == 1.0

    def test_too_short_flank(self, variance_table):
        x = simulate_fbm(0.5, 1.0, 2000, seed=0)
        res = step2_pvalues(x, [100, 100 + MIN_STEP2_PAIRS - 1, 1500], variance_table)
        assert [r.too_short for r in res] == [True, True, False]
        assert res[0].p_value == 1.0

    def test_validation(self, variance_table):
        x = simulate_fbm(0.5, 1.0, 200, seed=0)
        with pytest.raises(ValueError):
            step2_pvalues(x, [120, 50], variance_table)
        with pytest.raises(IndexError):
            step2_pvalues(x, [197], variance_table)


@pytest.fixture(scope="module")
def two_change_path():
    model = PiecewiseModel.from_segments([0.3, 0.8, 0.4], 8000)
    return simulate_piecewise_fbm(model, seed=3)


class TestDetect:
    def test_finds_changes(self, two_change_path, variance_table):
        path, truth = two_change_path
        cfg = DetectorConfig(window=1000, threshold_mode="mc", mc_replicates=200)
        report = detect(path, cfg, variance_table)
        assert report.n_changes == 2
        assert all(abs(a - b) <= 1000 for a, b in zip(report.change_points, truth))
        hursts = [s.estimate.hurst for s in report.segments]
        assert hursts == pytest.approx([0.3, 0.8, 0.4], abs=0.06)
        assert report.segments[0].start == 0 and report.segments[-1].end == len(path) - 1
        assert report.hurst_null == round(report.hurst_null, 2)
        assert report.timing["detection_ms"] >= 0 and report.timing["calibration_ms"] > 0

    def test_tiny_p1_returns_empty_report(self, variance_table):
        model = PiecewiseModel.from_segments([0.5, 0.6], 10_000)
        path, _ = simulate_piecewise_fbm(model, seed=1)
        cfg = DetectorConfig(window=2000, p1=1e-12, threshold_mode="gaussian")
        report = detect(path, cfg, variance_table)
        assert report.potential == [] and report.retained == []
        assert len(report.segments) == 1

    @pytest.mark.parametrize("c", [1e-6, 1e6])
    def test_scale_invariance(self, two_change_path, variance_table, c):
        path, _ = two_change_path
        cfg = DetectorConfig(window=1000, threshold_mode="gaussian")
        a = detect(path, cfg, variance_table).to_dict(timing=False)
        b = detect(c * path, cfg, variance_table).to_dict(timing=False)
        assert a == b

    def test_screening_is_monotone(self, two_change_path, variance_table):
        path, _ = two_change_path
        cfg = DetectorConfig(window=1000, threshold_mode="gaussian")
        loose = detect(path, DetectorConfig(window=1000, p2=0.5, threshold_mode="gaussian"), variance_table)
        strict = detect(path, DetectorConfig(window=1000, p2=1e-6, threshold_mode="gaussian"), variance_table)
        assert set(strict.change_points) <= set(loose.change_points)
        # Raising C1 truncates the height-ordered greedy pass, so the accepted set shrinks.
        low = detect(path, cfg, variance_table, threshold=0.02)
        high = detect(path, cfg, variance_table, threshold=0.2)
        assert {c.index for c in high.potential} < {c.index for c in low.potential}

    def test_precomputed_threshold(self, two_change_path, variance_table):
        path, _ = two_change_path
        report = detect(path, DetectorConfig(window=1000), variance_table, threshold=0.1)
        assert report.threshold_used == 0.1 and report.hurst_null is None
        assert report.timing["calibration_ms"] == 0.0

    def test_null_path(self, variance_table):
        x = simulate_fbm(0.7, 1.0, 30_000, seed=44)
        report = detect(x, DetectorConfig(window=1000, mc_replicates=200), variance_table)
        assert report.n_changes == 0
        assert report.segments[0].estimate.hurst == pytest.approx(0.7, abs=0.05)

    def test_constant_path(self, variance_table):
        report = detect(np.full(10_000, 2.5), DetectorConfig(window=500, threshold_mode="gaussian"), variance_table)
        assert report.n_changes == 0
        assert report.segments[0].to_dict()["clamped"]

    def test_report_serialises(self, two_change_path, variance_table, tmp_path):
        import json

        path, _ = two_change_path
        report = detect(path, DetectorConfig(window=1000, threshold_mode="gaussian"), variance_table)
        report.save(tmp_path / "r.json")
        doc = json.loads((tmp_path / "r.json").read_text())
        assert doc["threshold_mode"] == "gaussian" and doc["n_samples"] == len(path)
        assert [r[0] for r in doc["retained"]] == report.change_points
        assert set(doc["timing"]) == {"calibration_ms", "detection_ms"}

    @pytest.mark.parametrize(
        "cfg",
        [
            DetectorConfig(window=1),
            DetectorConfig(p1=0.0),
            DetectorConfig(p2=1.5),
            DetectorConfig(threshold_mode="exact"),
            DetectorConfig(mc_replicates=10),
            DetectorConfig(min_separation=0),
        ],
    )
    def test_invalid_config(self, cfg, variance_table):
        with pytest.raises(ValueError):
            detect(np.zeros(10_000), cfg, variance_table)

    def test_rejects_short_and_missing_table(self, variance_table):
        with pytest.raises(ValueError, match="too short"):
            detect(np.zeros(4003), DetectorConfig(window=2000), variance_table)
        with pytest.raises(ValueError, match="variance table"):
            detect(np.zeros(10_000))

    @settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        hursts=st.lists(st.floats(0.1, 0.9), min_size=1, max_size=4),
        length=st.integers(300, 2000),
        window=st.integers(20, 200),
        p2=st.floats(0.001, 1.0),
        seed=st.integers(0, 1000),
    )
    def test_report_invariants(self, variance_table, hursts, length, window, p2, seed):
        assume(1 + length * len(hursts) > 2 * window + 3)
        path, _ = simulate_piecewise_fbm(PiecewiseModel.from_segments(hursts, length), seed=seed)
        cfg = DetectorConfig(window=window, p2=p2, threshold_mode="gaussian")
        report = detect(path, cfg, variance_table)
        report.check()
        idx = [c.index for c in report.potential]
        assert all(b - a >= window for a, b in zip(idx, idx[1:]))
        assert all(window <= k <= len(path) - 3 - window for k in idx)
        assert [r.index for r in report.pvalues] == idx
        assert report.retained == [(r.index, r.p_value) for r in report.pvalues if r.p_value <= p2]
        assert all(0.0 <= r.p_value <= 1.0 for r in report.pvalues)
