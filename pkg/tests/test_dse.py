import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kurasim import dse
from kurasim.dse import ModelCoefficients as MC
from kurasim.selftest import continuous_min_width
from kurasim.systolic import ArrayConfig

pos = st.floats(1e-4, 1.0)
nonneg = st.one_of(st.just(0.0), st.floats(1e-4, 1.0))


class TestCycleModel:
    def test_ctile(self):
        assert dse.cycles_per_tile(5, 5) == 31
        assert dse.cycles_per_tile(25, 5) == 51
        assert dse.cycles_per_tile(1, 3) == 11
        for bad in [(0, 5), (5, 4), (5, 1)]:
            with pytest.raises(ValueError):
                dse.cycles_per_tile(*bad)

    def test_cpx_tpx(self):
        cfg = ArrayConfig(20, 5)
        assert dse.cycles_per_px(cfg) == pytest.approx(0.31)
        assert dse.throughput_px(cfg) == pytest.approx(3.2258e8, rel=1e-4)
        assert dse.cycles_per_px(ArrayConfig(5, 5)) == pytest.approx(1.24)

    def test_cpx_vanishes_with_height(self):
        vals = [dse.cycles_per_px(ArrayConfig(h, 5)) for h in (1, 10, 100, 1000, 10000)]
        assert all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-3


class TestEnergy:
    def test_power_examples(self):
        c = MC(p_fixed=0.3)
        assert all(dse.power_total(c, h, w) == 0.3 for h in (1, 5, 20) for w in (1, 7))
        assert dse.power_total(MC(1.0), 20, 5) == 100

    def test_fixed_only_energy(self):
        c = MC(p_fixed=0.02)
        cfg = ArrayConfig(10, 15)
        assert dse.energy_px(c, cfg) == pytest.approx((15 + 26) * 0.02 / (1e8 * 150), rel=1e-14)

    @settings(max_examples=1000)
    @given(pos, pos, pos, pos, st.integers(1, 64), st.integers(1, 64), st.sampled_from([3, 5, 7]))
    def test_expanded_equals_direct(self, a, b, c, d, nh, nw, M):
        co = MC(a, b, c, d)
        cfg = ArrayConfig(nh, nw, M)
        assert dse.energy_px(co, cfg) == pytest.approx(dse.energy_px_direct(co, cfg), rel=1e-12)

    @given(nonneg, nonneg, nonneg, nonneg, st.integers(1, 60))
    def test_monotone_in_height(self, a, b, c, d, nw):
        co = MC(a, b, c, d)
        e = [dse.energy_px(co, ArrayConfig(h, nw)) for h in range(1, 30)]
        if b + d / nw > 0:
            assert all(x > y for x, y in zip(e, e[1:]))
        else:
            assert all(x >= y for x, y in zip(e, e[1:]))


class TestOptimalWidth:
    def test_balanced(self):
        assert dse.optimal_width(MC(1.0, 0, 1.0, 0), 7) == pytest.approx(math.sqrt(26))
        assert dse.optimal_width(MC(1.0, 0, 0, 0), 7) == 0.0

    def test_unbounded(self):
        with pytest.raises(dse.UnboundedWidthError):
            dse.optimal_width(MC(0, 0, 1.0, 1.0), 5)

    @settings(max_examples=200, deadline=None)
    @given(pos, pos, pos, pos, st.integers(1, 40))
    def test_numeric_minimizer(self, a, b, c, d, nh):
        co = MC(a, b, c, d)
        star = dse.optimal_width(co, nh)
        assert continuous_min_width(co, nh, hi=max(400.0, 4 * star)) == pytest.approx(star, abs=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(pos, pos, pos, pos, st.integers(1, 40))
    def test_integer_minimizer_near_star(self, a, b, c, d, nh):
        co = MC(a, b, c, d)
        star = min(max(dse.optimal_width(co, nh), 1.0), 200.0)
        e = [dse.energy_px(co, ArrayConfig(nh, w)) for w in range(1, 201)]
        best = 1 + int(np.argmin(e))
        assert math.floor(star) - 1 <= best <= math.ceil(star) + 1
        # unimodal over the scan
        d_sign = np.sign(np.diff(e))
        d_sign = d_sign[d_sign != 0]
        assert not np.any(np.diff(d_sign) < 0)


TRUTH = MC(2e-4, 1.5e-3, 1.2e-3, 1.4e-2, 5e3, 2.4e4, 4.9e4, 1.6e6)


class TestFit:
    def test_noise_free_recovery(self):
        fit, r2p, r2a = dse.fit_coefficients(dse.synthesize_measurements(TRUTH))
        for f in vars(TRUTH):
            assert getattr(fit, f) == pytest.approx(getattr(TRUTH, f), rel=1e-9)
        assert r2p == pytest.approx(1.0, abs=1e-12) and r2a == pytest.approx(1.0, abs=1e-12)

    def test_noisy_r2(self):
        _, r2p, r2a = dse.fit_coefficients(dse.synthesize_measurements(TRUTH, noise=1e-3, seed=5))
        assert r2p > 0.999 and r2a > 0.999

    @pytest.mark.parametrize("seed", range(5))
    def test_against_pinv_oracle(self, seed):
        s = dse.synthesize_measurements(TRUTH, noise=0.05, seed=seed)
        X = np.array([[x.N_h * x.N_w, x.N_w, x.N_h, 1.0] for x in s])
        for target, attr in (("power", "power_w"), ("area", "area_um2")):
            y = np.array([getattr(x, attr) for x in s])
            got = dse.fit_bilinear(s, target).coefficients
            assert np.allclose(got, np.linalg.pinv(X) @ y, rtol=1e-8, atol=0)

    def test_too_few_samples(self):
        with pytest.raises(dse.RankDeficientError):
            dse.fit_bilinear(dse.synthesize_measurements(TRUTH)[:3], "power")

    def test_rank_deficient_grid(self):
        s = [x for x in dse.synthesize_measurements(TRUTH) if x.N_h == 5]
        with pytest.raises(dse.RankDeficientError):
            dse.fit_bilinear(s, "area")

    def test_negative_coefficients_reported(self):
        s = [dse.MeasurementSample(x.N_h, x.N_w, x.power_w, 1e7 + 1e3 * x.N_h * x.N_w + 1e2 * x.N_w - 1e4 * x.N_h)
             for x in dse.synthesize_measurements(TRUTH)]
        assert dse.fit_bilinear(s, "area").negative == ["h"]
        assert dse.fit_bilinear(s, "power").negative == []

    def test_sample_validation(self):
        with pytest.raises(ValueError):
            dse.MeasurementSample(0, 5, 1.0, 1.0)
        with pytest.raises(ValueError):
            dse.MeasurementSample(5, 5, -1.0, 1.0)


class TestPareto:
    def _rec(self, nh, nw, area, e):
        return dse.SweepRecord(nh, nw, nw + 26, 0.0, 0.0, 0.0, area, e)

    def test_single(self):
        fr, best = dse.pareto_frontier([self._rec(1, 1, 5.0, 1.0)], [4.0, 6.0])
        assert len(fr) == 1 and fr[0].frontier
        assert best[4.0] is None and best[6.0].N_h == 1

    def test_dominated(self):
        recs = [self._rec(1, 1, 5.0, 1.0), self._rec(2, 2, 6.0, 2.0)]
        fr, _ = dse.pareto_frontier(recs)
        assert len(fr) == 1 and not recs[1].frontier

    def test_tie_break(self):
        recs = [self._rec(3, 4, 5.0, 1.0), self._rec(2, 4, 5.0, 1.0), self._rec(9, 1, 5.0, 1.0)]
        _, best = dse.pareto_frontier(recs, [10.0])
        assert (best[10.0].N_h, best[10.0].N_w) == (9, 1)

    def test_empty(self):
        with pytest.raises(ValueError):
            dse.pareto_frontier([])

    def test_brute_force_frontier(self):
        rng = np.random.default_rng(0)
        recs = [self._rec(i, 1, float(a), float(e)) for i, (a, e) in enumerate(rng.uniform(0, 1, (60, 2)))]
        dse.pareto_frontier(recs)
        for r in recs:
            dom = any(o.area_um2 <= r.area_um2 and o.epx_j <= r.epx_j and o is not r for o in recs)
            assert r.frontier == (not dom)


class TestSyntheticCoefficients:
    def test_budget_progression(self):
        recs = dse.sweep(dse.synthetic_coefficients())
        _, best = dse.pareto_frontier(recs, [3e6, 4e6, 5e6, 6e6])
        picks = [(best[b].N_h, best[b].N_w) for b in (3e6, 4e6, 5e6, 6e6)]
        assert picks == [(10, 10), (15, 15), (20, 15), (25, 20)]

    def test_compute_minimum_at_largest_height(self):
        c = dse.synthetic_coefficients()
        recs = dse.sweep(c)
        best = min(recs, key=lambda r: r.epx_j)
        assert best.N_h == 25
        star = dse.optimal_width(c, 25)
        assert abs(best.N_w - star) <= 5

    def test_h20w5_power_near_anchor(self):
        p = dse.power_total(dse.synthetic_coefficients(), 20, 5)
        assert 0.04 < p < 0.08

    def test_bundled_measurements_fit_exactly(self):
        s = dse.read_measurements(dse.DATA_DIR / "synthetic_measurements.csv")
        fit, r2p, r2a = dse.fit_coefficients(s)
        assert f"{r2p:.6f}" == "1.000000" and f"{r2a:.6f}" == "1.000000"
        c = dse.synthetic_coefficients()
        for f in vars(c):
            assert getattr(fit, f) == pytest.approx(getattr(c, f), rel=1e-6)

    def test_jobs_preserve_order(self):
        c = dse.synthetic_coefficients()
        a = dse.sweep(c, jobs=1)
        b = dse.sweep(c, jobs=4)
        assert [(r.N_h, r.N_w, r.epx_j) for r in a] == [(r.N_h, r.N_w, r.epx_j) for r in b]
        with pytest.raises(ValueError):
            dse.sweep(c, jobs=0)


class TestBaselines:
    def test_published_ratios(self):
        sp, er, pr = dse.baseline_ratios(123.8e-3, 30.38e-3, 641.3e-6, 84.5e-3)
        assert sp == pytest.approx(192.99, rel=5e-3)
        assert er == pytest.approx(69.39, rel=5e-3)
        assert pr == pytest.approx(2.78, rel=5e-3)
        assert dse.system_epx(641.3e-6, 84.5e-3, 9216) == pytest.approx(5.88e-9, rel=5e-3)
        assert 270.57 / 5.88 == pytest.approx(46.02, rel=5e-3)

    def test_identity(self):
        assert dse.baseline_ratios(1.0, 2.0, 1.0, 2.0) == (1.0, 1.0, 1.0)

    def test_guards(self):
        with pytest.raises(ValueError):
            dse.system_epx(1.0, 1.0, 0)
        with pytest.raises(ValueError):
            dse.baseline_ratios(0.0, 1.0, 1.0, 1.0)

    def test_overlay(self):
        s = dse.synthesize_measurements(TRUTH)
        s[17] = dse.MeasurementSample(20, 5, s[17].power_w, s[17].area_um2, 641.3e-6, 84.5e-3)
        recs = dse.sweep(TRUTH, measurements=s)
        h20w5 = next(r for r in recs if (r.N_h, r.N_w) == (20, 5))
        assert h20w5.sys_epx_j == pytest.approx(5.88e-9, rel=5e-3)
        assert sum(r.sys_epx_j is not None for r in recs) == 1


def test_io_round_trips(tmp_path):
    s = dse.synthesize_measurements(TRUTH, noise=0.01, seed=1)
    dse.write_measurements(s, tmp_path / "m.csv")
    back = dse.read_measurements(tmp_path / "m.csv")
    assert [(x.N_h, x.N_w, x.power_w, x.area_um2) for x in back] == [(x.N_h, x.N_w, x.power_w, x.area_um2) for x in s]
    (tmp_path / "c.txt").write_text(TRUTH.to_text())
    assert MC.from_file(tmp_path / "c.txt") == TRUTH
    recs = dse.sweep(TRUTH, [5], [5, 10])
    dse.pareto_frontier(recs)
    dse.write_sweep_csv(recs, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].split(",") == dse.SWEEP_COLUMNS + ["frontier"] and len(lines) == 3
