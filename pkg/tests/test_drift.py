import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kurasim import fixedpoint as fx
from kurasim.drift import (Boundary, DriftParams, QuantizedParams, drift_direct, drift_fixed,
                           drift_reformulated, fixed_error_bound, neighbor_sums, nbr_core, ref_term,
                           sweep_offsets)
from kurasim.fixedpoint import PhaseMap, random_phase_map
from kurasim.trig import sincos_q15

MODES = ["replicate", "reflect", "wrap", "zero"]


def src_index(i: int, n: int, mode: str):
    """Independent boundary lookup; None means 'phase 0'."""
    if 0 <= i < n:
        return i
    if mode == "replicate":
        return min(max(i, 0), n - 1)
    if mode == "wrap":
        return i % n
    if mode == "zero":
        return None
    if n == 1:
        return 0
    while not 0 <= i < n:  # mirror about the edge pixels
        i = -i if i < 0 else 2 * (n - 1) - i
    return i


def phase_at(theta, y, x, mode):
    H, W = len(theta), len(theta[0])
    yy, xx = src_index(y, H, mode), src_index(x, W, mode)
    if yy is None or xx is None:
        return 0.0
    return theta[yy][xx]


def triple_loop(pmap, K, K_ref, psi, M, mode):
    theta = pmap.radians().tolist()
    H, W = len(theta), len(theta[0])
    h = M // 2
    out = np.zeros((H, W))
    for y in range(H):
        for x in range(W):
            t = theta[y][x]
            acc = 0.0
            for dy in range(-h, h + 1):
                for dx in range(-h, h + 1):
                    acc += math.sin(phase_at(theta, y + dy, x + dx, mode) - t)
            out[y, x] = K / (M * M) * acc + K_ref * math.sin(psi - t)
    return out


def uniform(h, w, code):
    return PhaseMap(np.full((h, w), code, dtype=np.int16))


class TestDirect:
    def test_uniform_zero_ref_is_zero(self):
        for mode in MODES[:3]:
            assert np.all(drift_direct(uniform(9, 7, 1234), DriftParams(K=3.0), mode).data == 0)

    def test_ref_locks_at_psi(self):
        m = random_phase_map(6, 6, 4)
        th = m.radians()
        u = drift_direct(m, DriftParams(K=0.0, K_ref=1.0, psi_ref=float(th[2, 3])), "replicate").data
        assert abs(u[2, 3]) < 1e-15

    @pytest.mark.parametrize("mode", MODES)
    def test_matches_triple_loop_96(self, mode):
        m = random_phase_map(96, 96, 11)
        p = DriftParams(K=2.5, K_ref=0.8, psi_ref=-1.1)
        ref = triple_loop(m, p.K, p.K_ref, p.psi_ref, 5, mode)
        assert np.abs(drift_direct(m, p, mode).data - ref).max() < 1e-12

    @pytest.mark.parametrize("M", [3, 7])
    def test_other_neighborhoods(self, M):
        m = random_phase_map(13, 11, M)
        p = DriftParams(K=1.0, K_ref=0.0, M=M)
        assert np.abs(drift_direct(m, p, "reflect").data - triple_loop(m, 1.0, 0.0, 0.0, M, "reflect")).max() < 1e-12

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31), st.floats(-10, 10),
           st.sampled_from(["replicate", "reflect"]))
    def test_global_phase_equivariance(self, h, w, seed, c, mode):
        m = random_phase_map(h, w, seed)
        p = DriftParams(K=4.0)
        # shift by a whole number of codes so the shifted map is exact
        k = int(np.round(c / fx.PHASE_ULP))
        exact = PhaseMap(fx.wrap_q15(m.data.astype(np.int64) + k))
        assert np.abs(drift_direct(exact, p, mode).data - drift_direct(m, p, mode).data).max() < 1e-12

    def test_pairwise_antisymmetry_wrap(self):
        th = np.where(np.arange(16)[None, :] < 8, 0.3, 2.1) * np.ones((12, 16))
        m = PhaseMap.from_radians(th)
        assert abs(drift_direct(m, DriftParams(K=3.0), "wrap").data.sum()) <= 1e-9
        m = random_phase_map(20, 20, 9)
        assert abs(drift_direct(m, DriftParams(K=3.0), "wrap").data.sum()) <= 1e-9

    def test_self_term_cancels(self):
        m = random_phase_map(10, 10, 2)
        p = DriftParams(K=1.5)
        with_self = triple_loop(m, 1.5, 0, 0, 5, "replicate")  # oracle includes j == i
        assert np.abs(drift_direct(m, p).data - with_self).max() < 1e-12


class TestReformulated:
    @pytest.mark.parametrize("mode", MODES)
    def test_equals_direct_on_random_maps(self, mode):
        rng = np.random.default_rng(7)
        for k in range(25):
            m = random_phase_map(32, 32, 100 + k)
            p = DriftParams(K=float(rng.uniform(0, 10)), K_ref=float(rng.uniform(0, 3)),
                            psi_ref=float(rng.uniform(-4, 4)))
            assert np.abs(drift_reformulated(m, p, mode).data - drift_direct(m, p, mode).data).max() <= 1e-12

    def test_single_pixel_replicate(self):
        m = random_phase_map(1, 1, 0)
        assert abs(drift_reformulated(m, DriftParams(K=5.0)).data[0, 0]) < 1e-12

    def test_uniform_zero(self):
        assert np.all(np.abs(drift_reformulated(uniform(5, 5, -9000), DriftParams(K=2.0)).data) < 1e-14)


class TestNeighborSums:
    def test_all_zero(self):
        assert neighbor_sums(uniform(6, 6, 0), 14) == (0.0, 24.0)

    def test_uniform(self):
        c = fx.decode_phase(5000)
        S, C = neighbor_sums(uniform(6, 6, 5000), (3, 3))
        assert S == pytest.approx(24 * math.sin(c), abs=1e-12)
        assert C == pytest.approx(24 * math.cos(c), abs=1e-12)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            neighbor_sums(uniform(3, 3, 0), 9)
        with pytest.raises(IndexError):
            neighbor_sums(uniform(3, 3, 0), (0, 3))

    @pytest.mark.parametrize("mode", MODES)
    def test_random_vs_oracle(self, mode):
        m = random_phase_map(7, 9, 3)
        th = m.radians().tolist()
        for y, x in [(0, 0), (3, 4), (6, 8), (1, 7)]:
            pts = [phase_at(th, y + dy, x + dx, mode) for dy in range(-2, 3) for dx in range(-2, 3)
                   if (dy, dx) != (0, 0)]
            S, C = neighbor_sums(m, (y, x), 5, mode)
            assert S == pytest.approx(sum(map(math.sin, pts)), abs=1e-12)
            assert C == pytest.approx(sum(map(math.cos, pts)), abs=1e-12)

    def test_core_examples(self):
        assert nbr_core(0.0, 0.0, 0.3, 0.9) == 0.0
        assert nbr_core(1.7, -2.0, 0.0, 1.0) == 1.7

    @given(st.lists(st.floats(-math.pi, math.pi), min_size=25, max_size=25))
    def test_core_equals_pairwise(self, phases):
        t = phases[12]
        nb = phases[:12] + phases[13:]
        S = sum(map(math.sin, nb))
        C = sum(map(math.cos, nb))
        assert nbr_core(S, C, math.sin(t), math.cos(t)) == pytest.approx(
            sum(math.sin(p - t) for p in nb), abs=1e-12)

    def test_ref_term(self):
        assert ref_term(math.sin(0.4), math.cos(0.4), 2.0, 0.4) == pytest.approx(0.0, abs=1e-15)
        psi = 0.9
        t = psi - math.pi / 2
        assert ref_term(math.sin(t), math.cos(t), 1.0, psi) == pytest.approx(1.0)

    @given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi), st.floats(0, 5))
    def test_ref_term_identity(self, t, psi, k):
        assert ref_term(math.sin(t), math.cos(t), k, psi) == pytest.approx(k * math.sin(psi - t), abs=1e-12)


class TestSweepOrder:
    def test_center_at_index_12(self):
        offs = sweep_offsets(5)
        assert len(offs) == 25 and offs[12] == (0, 0)
        assert offs[0] == (2, 2) and offs[-1] == (-2, -2)
        assert len(set(offs)) == 25


def fixed_oracle(pmap, qp, mode):
    """Scalar integer re-evaluation of the fixed-point pipeline."""
    H, W = pmap.height, pmap.width
    codes = pmap.data.tolist()
    lo, hi = fx.ACC_MIN, fx.ACC_MAX
    sat = lambda v: max(lo, min(hi, v))  # noqa: E731

    def rne(num, n):
        q, r = divmod(num, 1 << n)
        half = 1 << (n - 1)
        return q + (1 if r > half or (r == half and q & 1) else 0)

    def sc(code):
        s, c = sincos_q15(code)
        return int(s), int(c)

    out = np.zeros((H, W), dtype=np.int64)
    h = qp.M // 2
    for y in range(H):
        for x in range(W):
            S = C = 0
            si, ci = sc(codes[y][x])
            for dx in range(h, -h - 1, -1):
                for dy in range(h, -h - 1, -1):
                    if dx == 0 and dy == 0:
                        continue
                    yy, xx = src_index(y + dy, H, mode), src_index(x + dx, W, mode)
                    s, c = sc(0 if yy is None or xx is None else codes[yy][xx])
                    S = sat(S + (s << 9))
                    C = sat(C + (c << 9))
            core = sat(sat(rne(ci * S, 15)) - sat(rne(si * C, 15)))
            nbr = sat(rne(qp.k_scale * core, 15))
            ref = sat(sat(rne(ci * qp.ref_sin, 15)) - sat(rne(si * qp.ref_cos, 15)))
            out[y, x] = sat(nbr + ref)
    return out


class TestFixed:
    @pytest.mark.parametrize("mode", MODES)
    def test_matches_scalar_oracle(self, mode):
        m = random_phase_map(9, 8, 21)
        qp = QuantizedParams.from_params(DriftParams(K=3.0, K_ref=1.3, psi_ref=2.0))
        assert np.array_equal(drift_fixed(m, qp, mode).drift.data, fixed_oracle(m, qp, mode))

    def test_all_zero_core(self):
        r = drift_fixed(uniform(6, 6, 0), QuantizedParams.from_params(DriftParams(K=1.0)))
        assert np.all(r.core == 0) and np.all(r.sin_c == 0) and np.all(r.cos_c == 0x7FFF)

    def test_uniform_core_exact_zero(self):
        for code in (0, 777, -20000, 16384, -32768):
            r = drift_fixed(uniform(7, 5, code), QuantizedParams.from_params(DriftParams(K=1.0)))
            assert np.all(r.core == 0)

    def test_error_within_bound_100_maps(self):
        p = DriftParams(K=2.0, K_ref=0.7, psi_ref=0.3)
        qp = QuantizedParams.from_params(p)
        worst = 0.0
        for s in range(100):
            m = random_phase_map(32, 32, s)
            worst = max(worst, np.abs(drift_fixed(m, qp).drift.to_float() - drift_reformulated(m, p).data).max())
        assert worst <= fixed_error_bound(qp, p)
        # frozen regression value of the empirical maximum
        assert worst <= 2.7e-4

    def test_no_saturation_at_extreme_params(self):
        p = DriftParams(K=24.9, K_ref=3.0, psi_ref=-2.0)
        qp = QuantizedParams.from_params(p)
        r = drift_fixed(random_phase_map(32, 32, 5), qp, "zero")
        assert r.saturations == 0

    def test_param_range_checks(self):
        with pytest.raises(ValueError):
            QuantizedParams.from_params(DriftParams(K=25.0))
        with pytest.raises(ValueError):
            QuantizedParams.from_params(DriftParams(K_ref=200.0))
        with pytest.raises(ValueError):
            DriftParams(M=4)
        with pytest.raises(ValueError):
            DriftParams(K=-1.0)
        with pytest.raises(ValueError):
            DriftParams(K_ref=math.inf)

    def test_boundary_parse(self):
        assert Boundary.parse("zero-phase") is Boundary.ZERO
        with pytest.raises(ValueError):
            Boundary.parse("mirror")
