import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from htssim.errors import DimensionMismatch, DomainError
from htssim.multibeam import (GatewayState, GatewayTopology, IlluminationMatrix, ReuseMode,
                              beamhop_capacity, load_illumination_csv, offered_capacity_frequency,
                              offered_capacity_time, round_robin_schedule, save_illumination_csv,
                              sinr_from_channel, slots_per_beam, switch_gateways, system_throughput)

import oracles
from conftest import SCENARIOS, crandn

sinrs = arrays(float, st.integers(1, 8), elements=st.floats(0, 1e4))


class TestThroughput:
    def test_unit(self):
        assert system_throughput(1.0, 1, [1.0]) == 1.0

    def test_zero_sinr(self):
        assert system_throughput(500e6, 4, np.zeros(6)) == 0.0

    def test_hand_value(self):
        assert system_throughput(500e6, 4, [3, 3, 3, 3]) == pytest.approx(1.0e9, rel=1e-15)

    def test_negative_sinr_rejected(self):
        with pytest.raises(DomainError):
            system_throughput(1.0, 1, [1.0, -0.1])

    @given(sinrs, st.randoms())
    def test_permutation_invariant(self, g, r):
        perm = list(g)
        r.shuffle(perm)
        assert system_throughput(1e6, 2, perm) == pytest.approx(system_throughput(1e6, 2, g), rel=1e-12)

    @given(sinrs, st.integers(0, 7), st.floats(0, 100))
    def test_monotone(self, g, i, bump):
        h = g.copy()
        h[i % len(h)] += bump
        assert system_throughput(1e6, 1, h) >= system_throughput(1e6, 1, g)


class TestSinrFromChannel:
    def test_identity(self):
        np.testing.assert_array_equal(sinr_from_channel(np.eye(1), [1.0], 1.0), [1.0])

    def test_no_interference(self, rng):
        h = crandn(rng, 3)
        p = np.array([1.0, 2.0, 0.5])
        np.testing.assert_allclose(sinr_from_channel(np.diag(h), p, 0.3), np.abs(h) ** 2 * p / 0.3, rtol=1e-14)

    def test_loop_oracle(self, rng):
        H, p, s2 = crandn(rng, 3, 3), rng.uniform(0.1, 2, 3), 0.2
        ref = []
        for k in range(3):
            interf = sum(abs(H[k, j]) ** 2 * p[j] for j in range(3) if j != k)
            ref.append(abs(H[k, k]) ** 2 * p[k] / (interf + s2))
        np.testing.assert_allclose(sinr_from_channel(H, p, s2), ref, rtol=1e-12)

    def test_rejects_zero_noise(self):
        with pytest.raises(DomainError):
            sinr_from_channel(np.eye(2), [1, 1], 0.0)


class TestIllumination:
    def test_all_ones(self):
        np.testing.assert_array_equal(slots_per_beam(np.ones((4, 3))), [4, 4, 4])

    def test_diagonal(self):
        np.testing.assert_array_equal(slots_per_beam(np.eye(3)), [1, 1, 1])

    def test_counting_oracle(self, rng):
        T = rng.integers(0, 2, (8, 5))
        assert list(slots_per_beam(T)) == oracles.slot_counts(T.tolist())

    def test_k_active_enforced(self):
        with pytest.raises(DomainError):
            IlluminationMatrix(np.ones((2, 3)), k_active=2)

    def test_non_binary_rejected(self):
        with pytest.raises(DomainError):
            IlluminationMatrix([[0, 2]])

    @given(st.integers(1, 12), st.integers(1, 6), st.integers(1, 6))
    def test_round_robin_bounds(self, n_t, n_b, k):
        T = round_robin_schedule(n_t, n_b, k)
        n = slots_per_beam(T)
        assert np.all(n <= n_t)
        assert n.sum() <= n_t * k

    def test_csv_round_trip(self, tmp_path):
        T = load_illumination_csv(SCENARIOS / "illumination.csv")
        save_illumination_csv(T, tmp_path / "t.csv")
        assert load_illumination_csv(tmp_path / "t.csv") == T


class TestBeamhop:
    def test_always_on_is_shannon(self):
        cap = beamhop_capacity(np.ones((5, 1)), [7.0], 2e6)
        assert cap[0] == pytest.approx(2e6 * 3.0)

    def test_never_on(self):
        cap = beamhop_capacity(np.array([[1, 0], [1, 0]]), [3.0, 3.0], 1e6)
        assert cap[1] == 0.0

    def test_half_duty(self):
        full = beamhop_capacity(np.ones((4, 1)), [3.0], 1e6)[0]
        half = beamhop_capacity(np.array([[1], [0], [1], [0]]), [3.0], 1e6)[0]
        assert half == pytest.approx(full / 2)

    def test_partial_reuse(self):
        cap = beamhop_capacity(np.ones((2, 2)), [1.0, 1.0], 4e6, ReuseMode.PartialReuse, 4)
        np.testing.assert_allclose(cap, [1e6, 1e6])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            beamhop_capacity(np.ones((2, 3)), [1.0, 1.0], 1e6)

    @given(sinrs)
    def test_all_ones_matches_throughput(self, g):
        per_beam = beamhop_capacity(np.ones((3, len(g))), g, 1e7)
        for i, gi in enumerate(g):
            assert per_beam[i] == pytest.approx(system_throughput(1e7, 1, [gi]), rel=1e-12, abs=1e-9)


def _topology(rng, n=3, p=1, m=4, feeder=None):
    cf = np.vstack([rng.uniform(0, 1e8, (n, m)), np.zeros((p, m))])
    ct = np.vstack([rng.uniform(0, 1e8, (n, m)), np.zeros((p, m))])
    x = np.vstack([rng.integers(0, 20, (n, m)), np.zeros((p, m), dtype=int)])
    return GatewayTopology(n, p, cf, ct, x, 1e-3, 100, feeder_capacity=feeder)


class TestGateways:
    def test_single_gateway(self):
        g = GatewayTopology(1, 0, [[5e8]], [[1e8]], [[0]], 1e-3, 10)
        assert offered_capacity_frequency(g, 0) == 5e8

    def test_all_faded(self, rng):
        g = _topology(rng, p=0)
        faded = g.with_states([GatewayState.Faded] * 3)
        assert all(offered_capacity_frequency(faded, j) == 0 for j in range(4))
        assert all(offered_capacity_time(faded, j).bits_per_window == 0 for j in range(4))

    def test_freq_oracle(self, rng):
        g = _topology(rng).with_states(["Clear", "Faded", "Clear", "Clear"])
        clear = [s is GatewayState.Clear for s in g.states]
        for j in range(4):
            assert offered_capacity_frequency(g, j) == pytest.approx(
                oracles.offered_freq(g.capacity_freq.tolist(), clear, j), rel=1e-12)

    def test_time_zero_slots(self, rng):
        g = GatewayTopology(1, 0, [[1e8]], [[1e8]], [[0]], 1e-3, 10)
        assert offered_capacity_time(g, 0).bits_per_window == 0.0

    def test_time_full_window(self):
        g = GatewayTopology(1, 0, [[1e8]], [[2e8]], [[50]], 1e-3, 50)
        tc = offered_capacity_time(g, 0)
        assert tc.bits_per_window == pytest.approx(2e8 * 50e-3)
        assert tc.bits_per_second == pytest.approx(2e8)

    def test_time_oracle(self, rng):
        g = _topology(rng)
        clear = [True] * 4
        for j in range(4):
            assert offered_capacity_time(g, j).bits_per_window == pytest.approx(
                oracles.offered_time(g.capacity_time.tolist(), g.slots.tolist(), clear, 1e-3, j), rel=1e-12)

    def test_index_error(self, rng):
        with pytest.raises(IndexError):
            offered_capacity_frequency(_topology(rng), 4)

    def test_window_overflow_rejected(self):
        with pytest.raises(DomainError):
            GatewayTopology(1, 0, [[1.0]], [[1.0]], [[11]], 1.0, 10)

    def test_no_fades_unchanged(self, rng):
        g = _topology(rng)
        h = switch_gateways(g, [False] * 4)
        np.testing.assert_array_equal(h.capacity_freq, g.capacity_freq)
        np.testing.assert_array_equal(h.slots, g.slots)
        assert not h.outage.any()

    def test_single_fade_perfect_diversity(self, rng):
        g = _topology(rng)
        h = switch_gateways(g, [False, True, False, False])
        assert np.all(h.capacity_freq[1] == 0)
        for j in range(4):
            assert offered_capacity_frequency(h, j) == pytest.approx(offered_capacity_frequency(g, j))
            assert offered_capacity_time(h, j).bits_per_window == pytest.approx(
                offered_capacity_time(g, j).bits_per_window)
        assert not h.outage.any()

    def test_exhaustive_fade_patterns(self, rng):
        g = _topology(rng, n=3, p=1)
        total = sum(offered_capacity_frequency(g, j) for j in range(4))
        for pattern in itertools.product([False, True], repeat=4):
            h = switch_gateways(g, pattern)
            n_faded = sum(pattern[:3])
            spare_ok = not pattern[3]
            after = sum(offered_capacity_frequency(h, j) for j in range(4))
            if n_faded <= (1 if spare_ok else 0):
                assert after == pytest.approx(total, rel=1e-12)
                assert not h.outage.any()
            else:
                assert h.outage.any()

    def test_picks_largest_residual(self, rng):
        g = _topology(rng, n=1, p=2, feeder=[np.inf, 5e8, 1e9])
        h = switch_gateways(g, [True, False, False])
        assert h.capacity_freq[2].sum() > 0 and h.capacity_freq[1].sum() == 0

    def test_insufficient_feeder_capacity(self, rng):
        g = _topology(rng, n=1, p=1, feeder=[np.inf, 1.0])
        assert switch_gateways(g, [True, False]).outage.any()

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32), st.integers(1, 4), st.integers(0, 3))
    def test_diversity_preserves_total(self, seed, n, p):
        r = np.random.default_rng(seed)
        g = _topology(r, n=n, p=p)
        faded = np.zeros(n + p, dtype=bool)
        faded[r.choice(n, size=min(p, n), replace=False)] = True
        h = switch_gateways(g, faded)
        for j in range(g.n_beams):
            assert offered_capacity_frequency(h, j) == pytest.approx(offered_capacity_frequency(g, j), rel=1e-12)
