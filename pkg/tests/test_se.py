import math

import numpy as np
import pytest

from mwr_sim.channel import FadingProfile, InvalidConfig, SystemConfig, estimation_stats
from mwr_sim.linalg import RngStream
from mwr_sim.se import (SeReport, interference_matrix, next_user, noise_decomposition_mc, prev_user,
                        se_closed_form, se_monte_carlo, sum_se)


def reference_se(M, K, T, tau, Pu, Pp, Pr, betas):
    """Scalar transcription of the large-M ZF formula with 1-based indices."""
    s2 = {}
    e2 = {}
    for k in range(1, K + 1):
        b = betas[k - 1]
        s2[k] = tau * Pp * b * b / (tau * Pp * b + 1)
        e2[k] = b - s2[k]

    def nxt(k):
        return 1 if k == K else k + 1

    def prv(k):
        return K if k == 1 else k - 1

    rho = sum(1 / (s2[k] * s2[nxt(k)]) for k in range(1, K + 1))
    alpha = M * (M - K) * Pr / (M * Pu * sum(1 / s2[k] for k in s2) + Pu * sum(e2.values()) * rho + rho)
    out = []
    for k in range(1, K + 1):
        total_i = 0.0
        for i in range(1, K + 1):
            total_i += ((M * s2[prv(i)] * e2[i] + M * s2[nxt(k)] * e2[k]
                         + s2[nxt(k)] * s2[prv(i)] * e2[k] * e2[i] * rho)
                        / (M * (M - K) * s2[prv(i)] * s2[nxt(k)]))
        J = (M + s2[nxt(k)] * e2[k] * rho) / (M * (M - K) * s2[nxt(k)])
        sinr = alpha * Pu / (alpha * Pu * total_i + alpha * J + 1)
        out.append((T - tau) / T * (K - 1) / K * math.log2(1 + sinr))
    return out


FIG1 = SystemConfig(100, 20, 200, 20, 1.0, 1.0, 10.0)
UNIT = estimation_stats(np.ones(20), 20, 1.0)


class TestCyclicIndex:
    def test_wraparound(self):
        assert next_user(4, 5) == 0
        assert prev_user(0, 5) == 4
        assert list(next_user(np.arange(3), 3)) == [1, 2, 0]


class TestClosedForm:
    def test_fig1_point(self):
        r = se_closed_form(FIG1, UNIT)
        ref = reference_se(100, 20, 200, 20, 1.0, 1.0, 10.0, [1.0] * 20)
        assert np.allclose(r.per_user_se, ref, rtol=1e-12)
        assert r.alpha == pytest.approx(37.330, abs=5e-4)
        assert r.extra["I"].sum(axis=1)[0] == pytest.approx(0.025125, rel=1e-12)
        assert r.extra["J"][0] == pytest.approx(0.01325625, rel=1e-12)
        assert r.extra["sinr"][0] == pytest.approx(15.344, abs=1e-3)
        assert r.per_user_se[0] == pytest.approx(3.4463, abs=1e-4)
        assert r.sum_se == pytest.approx(68.93, abs=5e-3)

    def test_heterogeneous_matches_reference(self):
        rng = np.random.default_rng(3)
        betas = 10 ** rng.uniform(-2, 1, 7)
        cfg = SystemConfig(40, 7, 100, 9, 2.0, 0.5, 5.0)
        r = se_closed_form(cfg, estimation_stats(betas, 9, 0.5))
        assert np.allclose(r.per_user_se, reference_se(40, 7, 100, 9, 2.0, 0.5, 5.0, betas), rtol=1e-12)

    def test_interference_diagonal_and_desired_terms(self):
        p = estimation_stats([0.3, 1.0, 2.5, 0.7], 4, 1.0)
        cfg = SystemConfig(30, 4, 50, 4, 1.0, 1.0, 1.0)
        I = interference_matrix(cfg, p)
        M, K = 30, 4
        s2, e2, rho = p.sigma2, p.sigma2e, p.rho
        for k in range(K):
            kn, kp = (k + 1) % K, (k - 1) % K
            # variance of the desired gain: V1 + V2 + V3
            v = (e2[kn] / ((M - K) * s2[kn]) + e2[k] / ((M - K) * s2[k])
                 + e2[k] * e2[kn] * rho / (M * (M - K)))
            assert I[k, kn] == pytest.approx(v, rel=1e-12)
            # self term: |I1|^2 + |I2|^2 + |I3|^2
            s = (e2[k] / ((M - K) * s2[kn]) + e2[k] / ((M - K) * s2[kp])
                 + e2[k] ** 2 * rho / (M * (M - K)))
            assert I[k, k] == pytest.approx(s, rel=1e-12)

    def test_no_data_phase(self):
        cfg = SystemConfig(100, 20, 20, 20, 1.0, 1.0, 10.0)
        r = se_closed_form(cfg, UNIT)
        assert np.all(r.per_user_se == 0.0)
        assert sum_se(r) == 0.0

    def test_vanishing_user_power(self):
        sums = [se_closed_form(SystemConfig(100, 20, 200, 20, pu, 1.0, 10.0), UNIT).sum_se
                for pu in (1e-6, 1e-9, 1e-12)]
        # SE ~ Pu for small Pu, so it vanishes in the limit
        assert sums[1] == pytest.approx(sums[0] * 1e-3, rel=1e-3)
        assert sums[2] < 1e-8

    def test_invalid_training_length(self):
        cfg = SystemConfig(100, 20, 200, 20, 1.0, 1.0, 10.0)
        bad = SystemConfig.__new__(SystemConfig)
        object.__setattr__(bad, "__dict__", {**cfg.__dict__, "tau": 10})
        with pytest.raises(InvalidConfig):
            se_closed_form(bad, UNIT)

    def test_symmetric_users_equal(self):
        r = se_closed_form(FIG1, UNIT)
        assert np.all(r.per_user_se == r.per_user_se[0])
        assert r.sum_se == pytest.approx(20 * r.per_user_se[0], rel=1e-14)

    def test_monotone_in_antennas(self):
        sums = [se_closed_form(SystemConfig(M, 20, 200, 20, 1.0, 1.0, 10.0), UNIT).sum_se
                for M in (25, 50, 100, 200, 400)]
        assert all(b >= a for a, b in zip(sums, sums[1:]))

    def test_prefactor_is_linear(self):
        base = se_closed_form(SystemConfig(100, 20, 200, 20, 1.0, 1.0, 10.0), UNIT)
        for T in (20, 40, 80, 400, 1000):
            r = se_closed_form(SystemConfig(100, 20, T, 20, 1.0, 1.0, 10.0), UNIT)
            scale = ((T - 20) / T) / (180 / 200)
            assert r.sum_se == pytest.approx(scale * base.sum_se, rel=1e-13, abs=1e-13)

    def test_sum_invariant(self):
        r = se_closed_form(FIG1, estimation_stats(np.linspace(0.1, 2, 20), 20, 1.0))
        assert r.sum_se == pytest.approx(float(np.sum(r.per_user_se)), rel=1e-15)
        assert np.all(r.per_user_se >= 0)


@pytest.fixture(scope="module")
def zf_mc():
    return se_monte_carlo(FIG1, UNIT, 2000, RngStream(40))


class TestMonteCarlo:
    def test_agrees_with_closed_form(self, zf_mc):
        cf = se_closed_form(FIG1, UNIT).sum_se
        assert abs(zf_mc.sum_se - cf) / cf <= 0.03

    def test_unit_mean_gain(self, zf_mc):
        assert np.allclose(zf_mc.mean_gain, 1.0, rtol=0.02, atol=0.02)

    def test_report_fields(self, zf_mc):
        assert zf_mc.method == "monte_carlo"
        assert zf_mc.trials == 2000
        assert zf_mc.ci_halfwidth.shape == (20,)
        assert np.all(zf_mc.ci_halfwidth > 0)
        assert 0 < zf_mc.sum_ci_halfwidth < 1.0
        assert zf_mc.sum_se == pytest.approx(float(np.sum(zf_mc.per_user_se)))

    def test_ci_covers_spread_between_seeds(self):
        cfg = SystemConfig(40, 8, 100, 8, 1.0, 1.0, 10.0)
        p = estimation_stats(np.ones(8), 8, 1.0)
        runs = [se_monte_carlo(cfg, p, 300, RngStream(41, s)) for s in range(12)]
        sums = np.array([r.sum_se for r in runs])
        mean_half = np.mean([r.sum_ci_halfwidth for r in runs])
        # half-width is 1.96 standard errors
        assert sums.std(ddof=1) == pytest.approx(mean_half / 1.96, rel=0.5)

    def test_deterministic_across_threads(self):
        a = se_monte_carlo(FIG1, UNIT, 150, RngStream(42), threads=1)
        b = se_monte_carlo(FIG1, UNIT, 150, RngStream(42), threads=4)
        assert np.array_equal(a.per_user_se, b.per_user_se)

    def test_requires_trials(self):
        with pytest.raises(ValueError):
            se_monte_carlo(FIG1, UNIT, 50, RngStream(0))

    def test_mr_below_zf(self):
        cfg = SystemConfig(500, 100, 200, 100, 1.0, 1.0, 10.0)
        p = estimation_stats(np.ones(100), 100, 1.0)
        mr = se_monte_carlo(cfg, p, 100, RngStream(43), mode="mr")
        zf = se_monte_carlo(cfg, p, 100, RngStream(43), mode="zf")
        assert mr.sum_se < zf.sum_se


@pytest.fixture(scope="module")
def dec():
    alpha = se_closed_form(FIG1, UNIT).alpha
    return noise_decomposition_mc(FIG1, UNIT, alpha, 2000, RngStream(44))


class TestNoiseDecomposition:
    def test_desired_variance(self, dec):
        I = interference_matrix(FIG1, UNIT)
        assert dec.var_desired.mean() == pytest.approx(I[0, 1], rel=0.05)

    def test_self_interference(self, dec):
        I = interference_matrix(FIG1, UNIT)
        assert dec.self_interf.mean() == pytest.approx(I[0, 0], rel=0.05)

    def test_cross_layout(self, dec):
        K = 20
        for k in range(K):
            assert dec.cross_interf[k, k] == 0.0
            assert dec.cross_interf[k, (k + 1) % K] == 0.0
        assert np.all(dec.cross_interf >= 0)
        assert np.all(dec.var_desired >= 0) and np.all(dec.amplified_noise > 0)

    def test_perfect_csi_nulls_interference(self):
        p = FadingProfile.perfect(np.ones(20))
        dec = noise_decomposition_mc(FIG1, p, 1.0, 200, RngStream(45))
        # unit desired gain, so what remains is rounding
        assert np.max(np.abs(dec.var_desired)) < 1e-12
        assert np.max(dec.self_interf) < 1e-20
        assert np.max(dec.cross_interf) < 1e-20
        # E||g_k^T C||^2 = E[(Ghat^H Ghat)^{-1}]_{k+1,k+1} = 1/((M-K) beta)
        assert dec.amplified_noise.mean() == pytest.approx(1 / 80, rel=0.03)

    def test_effective_noise_reassembles_mc_sinr(self):
        cfg = SystemConfig(40, 8, 100, 8, 1.0, 1.0, 10.0)
        p = estimation_stats(np.linspace(0.5, 2, 8), 8, 1.0)
        mc = se_monte_carlo(cfg, p, 200, RngStream(46))
        dec = noise_decomposition_mc(cfg, p, mc.alpha, 200, RngStream(46))
        sinr = mc.alpha * cfg.Pu * np.abs(dec.mean_gain) ** 2 / dec.effective_noise_var(cfg.Pu)
        se = cfg.prefactor * np.log2(1 + sinr)
        assert np.allclose(se, mc.per_user_se, rtol=1e-10)


def test_sum_se_helper():
    r = SeReport(np.array([1.0, 2.0, 3.5]), "closed_form")
    assert sum_se(r) == 6.5
