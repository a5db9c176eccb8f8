import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from htssim.channel import (McStructure, RicianParams, ar1_coefficient, beam_gain,
                            build_multibeam_channel, build_multicarrier_channel, clarke_rho,
                            draw_rician, estimate_csi, export_matrix_csv, import_matrix_csv,
                            mjp_transmit, multicarrier_mask, satellite_position,
                            simulate_channel_process)
from htssim.errors import DimensionMismatch, DomainError, GeometryError
from htssim.geometry import C, ecef
from htssim.scenario import BeamDef, OrbitKind, PayloadKind, SatelliteDef, UserDef

import oracles
from conftest import crandn

GEO = SatelliteDef("s", OrbitKind.GSO, 42_164_169.0, 7.2921159e-5, PayloadKind.BentPipe, 2, 0.0, 10.0)


def _beam(bid, lat, lon, hpbw=0.4, gdbi=50.0):
    return BeamDef(bid, "s", lat, lon, hpbw, gdbi, 100.0, 1)


def _user(uid, lat, lon, gt=0.0):
    return UserDef(uid, "b1", lat, lon, 1e6, gt)


class TestRician:
    def test_los_limit(self, rng):
        h = draw_rician(RicianParams(1e15, np.exp(0.3j)), rng, 1000)
        np.testing.assert_allclose(h, np.exp(0.3j), atol=1e-5)

    def test_k_capped(self):
        assert RicianParams(np.inf).k_factor == 1e12

    @pytest.mark.parametrize("k", [0.0, 1.0, 10.0])
    def test_unit_power(self, k):
        h = draw_rician(RicianParams(k), np.random.default_rng(1), 100_000)
        assert np.mean(np.abs(h) ** 2) == pytest.approx(1.0, rel=0.02)

    def test_rice_goodness_of_fit(self):
        k = 5.0
        h = draw_rician(RicianParams(k), np.random.default_rng(2), 20_000)
        # |h| ~ Rice(nu, sigma) with nu^2 = K/(K+1), 2 sigma^2 = 1/(K+1)
        sigma = np.sqrt(0.5 / (k + 1))
        nu = np.sqrt(k / (k + 1))
        res = stats.kstest(np.abs(h), stats.rice(nu / sigma, scale=sigma).cdf)
        assert res.pvalue > 0.01

    def test_rejects_bad_los(self):
        with pytest.raises(DomainError):
            RicianParams(1.0, 0.5)


class TestBeamGain:
    def test_boresight(self):
        assert beam_gain(0.0, 0.01, 1e5) == 1e5

    def test_half_power(self):
        assert beam_gain(0.01, 0.01, 1.0) == pytest.approx(0.5, rel=0.01)

    def test_high_precision_three_beamwidths(self):
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 40
        th3 = 0.006
        u = mp.mpf("2.07123") * mp.sin(mp.mpf(3 * th3)) / mp.sin(mp.mpf(th3))
        ref = (mp.besselj(1, u) / (2 * u) + 36 * mp.besselj(3, u) / u**3) ** 2
        assert beam_gain(3 * th3, th3, 1.0) == pytest.approx(float(ref), rel=1e-9)

    def test_series_continuity(self):
        th3 = 0.01
        eps = np.sin(th3) / 2.07123 * 1e-3
        a = beam_gain(np.arcsin(eps * 0.999999), th3, 1.0)
        b = beam_gain(np.arcsin(eps * 1.000001), th3, 1.0)
        assert a == pytest.approx(b, rel=1e-9)

    @pytest.mark.parametrize("theta", [-0.1, np.pi / 2])
    def test_domain(self, theta):
        with pytest.raises(DomainError):
            beam_gain(theta, 0.01, 1.0)

    @given(st.floats(0, 1.5))
    def test_bounded(self, theta):
        g = beam_gain(theta, 0.02, 10.0)
        assert 0 <= g <= 10.0 * (1 + 1e-12)


class TestMultibeamChannel:
    def test_link_budget(self, rng):
        ch = build_multibeam_channel(GEO, [_beam("b1", 45, 10)], [_user("u", 45, 10)], 20e9, rng,
                                     phases=[0.0])
        d = np.linalg.norm(ecef(45, 10) - satellite_position(GEO))
        assert ch.H[0, 0] == pytest.approx(np.sqrt(10**5) * C / (4 * np.pi * d * 20e9), rel=1e-12)

    def test_h_equals_phi_b(self, rng):
        beams = [_beam("b1", 45, 10), _beam("b2", 45, 11)]
        users = [_user("u1", 45, 10.1), _user("u2", 45.2, 11)]
        ch = build_multibeam_channel(GEO, beams, users, 20e9, rng)
        np.testing.assert_allclose(ch.H, ch.Phi @ ch.B_gain, rtol=1e-15)
        np.testing.assert_allclose(np.abs(np.diag(ch.Phi)), 1.0, rtol=1e-15)

    def test_inverse_distance(self, rng):
        import dataclasses
        far = dataclasses.replace(GEO, orbit_radius_m=GEO.orbit_radius_m * 2)
        u = [_user("u", 0, 10)]
        b = [_beam("b1", 0, 10)]
        h1 = build_multibeam_channel(GEO, b, u, 20e9, rng, phases=[0.0]).H
        h2 = build_multibeam_channel(far, b, u, 20e9, rng, phases=[0.0]).H
        d1 = GEO.orbit_radius_m - 6_371_000
        d2 = 2 * GEO.orbit_radius_m - 6_371_000
        assert abs(h2[0, 0]) == pytest.approx(abs(h1[0, 0]) * d1 / d2, rel=1e-12)

    def test_symmetric_geometry(self, rng):
        beams = [_beam("b1", 0, 9.5), _beam("b2", 0, 10.5)]
        users = [_user("u1", 0, 9.6), _user("u2", 0, 10.4)]
        B = np.abs(build_multibeam_channel(GEO, beams, users, 20e9, rng).H)
        np.testing.assert_allclose(B, B[::-1, ::-1], rtol=1e-9)

    def test_below_horizon(self, rng):
        with pytest.raises(GeometryError):
            build_multibeam_channel(GEO, [_beam("b1", 0, 10)], [_user("u", 0, -170)], 20e9, rng)

    def test_fading_enabled_changes_amplitudes(self, rng):
        b, u = [_beam("b1", 45, 10)], [_user("u", 45, 10)]
        ch = build_multibeam_channel(GEO, b, u, 20e9, rng, rician_factor=1.0, shadowing_std_db=2.0)
        np.testing.assert_allclose(ch.H, ch.Phi @ np.diag(ch.fading) @ ch.B_gain)


class TestMjp:
    def test_noiseless_identity(self, rng):
        x = crandn(rng, 4)
        np.testing.assert_array_equal(mjp_transmit(np.eye(4), x, 0.0, rng), x)

    def test_noise_variance(self):
        y = mjp_transmit(np.eye(1), np.zeros((1, 100_000)), 0.7, np.random.default_rng(3))
        assert np.var(y) == pytest.approx(0.7, rel=0.03)

    def test_loop_oracle(self, rng):
        H, x = crandn(rng, 4, 4), crandn(rng, 4)
        ref = oracles.matvec(H.tolist(), x.tolist())
        np.testing.assert_allclose(mjp_transmit(H, x, 0.0, rng), ref, rtol=1e-12)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            mjp_transmit(np.eye(3), np.ones(2), 0.0, rng)


class TestMulticarrier:
    def test_mu_zero_diagonal(self, rng):
        mc = build_multicarrier_channel(5, 0.0, RicianParams(3.0), "Tridiagonal", rng)
        np.testing.assert_array_equal(mc.H_mc, np.diag(np.diag(mc.H_mc)))

    def test_two_carrier_display(self, rng):
        mc = build_multicarrier_channel(2, 0.3, RicianParams(3.0), McStructure.Tridiagonal, rng)
        h1, h2 = mc.h
        np.testing.assert_array_equal(mc.H_mc, [[h1, 0.3 * h2], [0.3 * h1, h2]])

    @pytest.mark.parametrize("structure, count", [("PairedBlocks", 12), ("Tridiagonal", 16)])
    def test_nonzero_count(self, rng, structure, count):
        mc = build_multicarrier_channel(6, 0.2, RicianParams(3.0), structure, rng)
        assert np.count_nonzero(mc.H_mc) == count

    @given(st.integers(1, 64), st.sampled_from(list(McStructure)))
    def test_sparsity_pattern(self, M, structure):
        mc = build_multicarrier_channel(M, 0.5, RicianParams(2.0), structure, np.random.default_rng(M))
        mask = multicarrier_mask(M, structure) | np.eye(M, dtype=bool)
        assert np.all(mc.H_mc[~mask] == 0)
        assert np.all(mc.H_mc[mask] != 0)
        r, c = np.nonzero(multicarrier_mask(M, structure))
        np.testing.assert_array_equal(mc.H_mc[r, c], 0.5 * mc.h[c])

    @pytest.mark.parametrize("mu", [-0.1, 1.0])
    def test_mu_range(self, rng, mu):
        with pytest.raises(DomainError):
            build_multicarrier_channel(3, mu, RicianParams(1.0), "Tridiagonal", rng)


class TestClarke:
    def test_zero_argument(self):
        assert clarke_rho(100.0, 0, 1e-3) == 1.0

    def test_first_zero(self):
        # root of the J0 power series by bisection
        lo, hi = 2.0, 3.0
        for _ in range(200):
            mid = (lo + hi) / 2
            if oracles.bessel_j0(lo) * oracles.bessel_j0(mid) <= 0:
                hi = mid
            else:
                lo = mid
        fd = lo / (2 * np.pi * 1e-3)
        assert abs(clarke_rho(fd, 1, 1e-3)) < 1e-9

    def test_j0_of_one(self):
        assert clarke_rho(1 / (2 * np.pi), 1, 1.0) == pytest.approx(oracles.bessel_j0(1.0), abs=1e-10)
        assert clarke_rho(1 / (2 * np.pi), 1, 1.0) == pytest.approx(0.7651976866, abs=1e-10)

    @given(st.floats(0, 200), st.integers(0, 10), st.floats(1e-5, 1e-3))
    def test_series_agreement(self, fd, d, ts):
        x = 2 * np.pi * fd * d * ts
        assert clarke_rho(fd, d, ts) == pytest.approx(oracles.bessel_j0(x), abs=1e-10)

    def test_rejects_fractional_delay(self):
        with pytest.raises(DomainError):
            clarke_rho(1.0, 1.5, 1.0)


class TestCsi:
    def test_zero_delay_exact(self, rng):
        proc = simulate_channel_process((2, 2), 5, 0.9, rng)
        est = estimate_csi(proc, 3, 0, 123.0, 1e-3, rng)
        assert est.rho == 1.0 and est.sigma2_e == 0.0
        np.testing.assert_array_equal(est.H_hat, proc[3])

    @given(st.floats(0, 300), st.integers(0, 10))
    def test_variance_identity(self, fd, d):
        proc = simulate_channel_process((1,), d + 1, 0.5, np.random.default_rng(0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = estimate_csi(proc, d, d, fd, 1e-3, np.random.default_rng(1))
        assert est.sigma2_e == 1 - est.rho**2

    @pytest.mark.parametrize("rho", [0.9, 0.3, -0.3])
    def test_ar1_lag_correlation(self, rho):
        a = ar1_coefficient(rho, 4)
        assert (a**4).real == pytest.approx(rho, rel=1e-12)
        assert abs((a**4).imag) < 1e-12

    def test_process_autocorrelation(self):
        fd, ts, d = 40.0, 1e-3, 5
        rho = clarke_rho(fd, d, ts)
        proc = simulate_channel_process((20_000,), d + 1, ar1_coefficient(rho, d), np.random.default_rng(5))
        emp = np.vdot(proc[0], proc[d]).real / proc.samples.shape[1]
        assert emp == pytest.approx(rho, abs=0.03)

    def test_empirical_correlation(self):
        fd, ts, d = 40.0, 1e-3, 6
        rho = clarke_rho(fd, d, ts)
        proc = simulate_channel_process((100_000,), d + 1, ar1_coefficient(rho, d), np.random.default_rng(7))
        est = estimate_csi(proc, d, d, fd, ts, np.random.default_rng(8))
        past = proc[0]
        corr = abs(np.vdot(past, est.H_hat)) / np.sqrt(np.vdot(past, past).real * np.vdot(est.H_hat, est.H_hat).real)
        assert corr == pytest.approx(1 / np.sqrt(1 + 2 * est.sigma2_e), rel=0.02)

    def test_rho_zero_independence(self):
        ts, d = 1e-3, 1
        fd = 2.404825557695773 / (2 * np.pi * d * ts)
        rho = clarke_rho(fd, d, ts)
        proc = simulate_channel_process((100_000,), 3, ar1_coefficient(rho, d), np.random.default_rng(9))
        est = estimate_csi(proc, 2, d, fd, ts, np.random.default_rng(10))
        h = proc[2]
        corr = abs(np.vdot(h, est.H_hat)) / np.sqrt(np.vdot(h, h).real * np.vdot(est.H_hat, est.H_hat).real)
        assert corr < 0.02


def test_matrix_csv_round_trip(tmp_path, rng):
    H = crandn(rng, 3, 4)
    export_matrix_csv(H, tmp_path / "h.csv")
    np.testing.assert_array_equal(import_matrix_csv(tmp_path / "h.csv"), H)
