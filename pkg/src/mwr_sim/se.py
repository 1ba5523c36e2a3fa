"""
Spectral efficiency of the first broadcast slot.

Two routes are provided: the large-``M`` closed form for ZF and a Monte
Carlo estimator of the use-and-then-forget bound. The Monte Carlo route
averages each moment over realizations first and only then forms the SINR,

    SINR_k = a Pu |E{F[k,k+1]}|^2 / (a Pu (sum_i E|F[k,i]|^2 - |E{F[k,k+1]}|^2)
                                      + a E||g_k^T C||^2 + 1),

with ``F[k, i] = g_k^T A Pi W^T g_i`` and ``C = A Pi W^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _mc
from .channel import FadingProfile, InvalidConfig, SystemConfig
from .linalg import RngStream
from .processing import QTriple, _fast_sampler, alpha_analytic

__all__ = [
    "SeReport",
    "NoiseDecomposition",
    "next_user",
    "prev_user",
    "interference_matrix",
    "noise_terms",
    "se_closed_form",
    "se_from_sinr",
    "noise_decomposition_mc",
    "se_monte_carlo",
    "sum_se",
]

Z95 = 1.959963984540054


def next_user(k, K):
    """Index of user ``k+1`` with ``K -> 0`` wraparound (0-based)."""
    return (np.asarray(k) + 1) % K


def prev_user(k, K):
    return (np.asarray(k) - 1) % K


@dataclass
class SeReport:
    per_user_se: np.ndarray
    method: str
    trials: int = 0
    ci_halfwidth: np.ndarray | None = None
    sum_ci_halfwidth: float = 0.0
    alpha: float = float("nan")
    mean_gain: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def sum_se(self) -> float:
        return float(np.sum(self.per_user_se))

    @property
    def K(self) -> int:
        return len(self.per_user_se)


def sum_se(report: SeReport) -> float:
    return report.sum_se


def interference_matrix(cfg: SystemConfig, profile: FadingProfile) -> np.ndarray:
    """
    Large-``M`` interference terms ``I[k, i]`` of the ZF closed form.

    Row ``k`` collects everything user ``k`` receives apart from the mean
    desired gain: ``I[k, k+1]`` is the variance of the desired gain and the
    other entries are the powers leaked from user ``i``.
    """
    M, K = cfg.M, cfg.K
    s2, s2e, rho = profile.sigma2, profile.sigma2e, profile.rho
    s2_next = np.roll(s2, -1)[:, None]   # sigma2_{k+1}, varies with row k
    s2_prev_i = np.roll(s2, 1)[None, :]  # sigma2_{i-1}, varies with column i
    e_k = s2e[:, None]
    e_i = s2e[None, :]
    num = M * s2_prev_i * e_i + M * s2_next * e_k + s2_next * s2_prev_i * e_k * e_i * rho
    return num / (M * (M - K) * s2_prev_i * s2_next)


def noise_terms(cfg: SystemConfig, profile: FadingProfile) -> np.ndarray:
    """Large-``M`` amplified relay-noise gain ``J[k]``."""
    M, K = cfg.M, cfg.K
    s2_next = np.roll(profile.sigma2, -1)
    return (M + s2_next * profile.sigma2e * profile.rho) / (M * (M - K) * s2_next)


def se_from_sinr(cfg: SystemConfig, sinr) -> np.ndarray:
    return cfg.prefactor * np.log2(1.0 + np.asarray(sinr, dtype=float))


def se_closed_form(cfg: SystemConfig, profile: FadingProfile) -> SeReport:
    """
    Per-user ZF spectral efficiency from the large-``M`` approximation.

    Raises
    ------
    InvalidConfig
        If ``tau > T`` or ``tau < K``.
    """
    if cfg.tau > cfg.T or cfg.tau < cfg.K:
        raise InvalidConfig(f"need K <= tau <= T, got K={cfg.K}, tau={cfg.tau}, T={cfg.T}")
    if profile.K != cfg.K:
        raise ValueError(f"profile has {profile.K} users, config has K={cfg.K}")
    alpha = alpha_analytic(cfg, profile)
    I = interference_matrix(cfg, profile)
    J = noise_terms(cfg, profile)
    ap = alpha * cfg.Pu
    sinr = ap / (ap * I.sum(axis=1) + alpha * J + 1.0)
    return SeReport(se_from_sinr(cfg, sinr), "closed_form", alpha=alpha,
                    mean_gain=np.ones(cfg.K), extra={"sinr": sinr, "I": I, "J": J})


@dataclass
class NoiseDecomposition:
    """
    Moments of the effective noise at every user, one entry per user ``k``.

    ``cross_interf[k, i]`` holds ``E|g_k^T b_i|^2`` for ``i`` not in
    ``{k, k+1}`` and zero on those two positions.
    """

    var_desired: np.ndarray
    self_interf: np.ndarray
    cross_interf: np.ndarray
    amplified_noise: np.ndarray
    mean_gain: np.ndarray
    alpha: float
    trials: int

    @property
    def cross_total(self):
        return self.cross_interf.sum(axis=1)

    def effective_noise_var(self, Pu):
        ap = self.alpha * Pu
        return (ap * (self.var_desired + self.self_interf + self.cross_total)
                + self.alpha * self.amplified_noise + 1.0)


@dataclass
class _Collected:
    gain: np.ndarray       # (n, K) complex, F[k, k+1] per trial
    power: np.ndarray      # (n, K), sum_i |F[k, i]|^2 per trial
    noise: np.ndarray      # (n, K)
    q: np.ndarray          # (n, 3)
    F_abs2_sum: np.ndarray  # (K, K)

    @property
    def n(self):
        return self.gain.shape[0]


def _collect(cfg, profile, n_trials, rng, mode, threads=1) -> _Collected:
    draw, terms = _fast_sampler(cfg, profile, mode)
    K = cfg.K
    ks = np.arange(K)
    kn = next_user(ks, K)

    def chunk(start, stop):
        n = stop - start
        gain = np.empty((n, K), complex)
        power = np.empty((n, K))
        noise = np.empty((n, K))
        q = np.empty((n, 3))
        f2 = np.zeros((K, K))
        for j, i in enumerate(range(start, stop)):
            _, r = _mc.with_redraw(draw, terms, rng.spawn(i))
            a2 = r.F.real ** 2 + r.F.imag ** 2
            gain[j] = r.F[ks, kn]
            power[j] = a2.sum(axis=1)
            noise[j] = r.noise
            q[j] = (r.q1, r.q2, r.q3)
            f2 += a2
        return gain, power, noise, q, f2

    parts = _mc.run_chunks(chunk, n_trials, threads)
    f2 = np.zeros((K, K))
    for p in parts:
        f2 += p[4]
    return _Collected(*(np.concatenate([p[j] for p in parts]) for j in range(4)), f2)


def noise_decomposition_mc(cfg: SystemConfig, profile: FadingProfile, alpha: float,
                           n_trials: int, rng: RngStream, mode="zf", threads=1) -> NoiseDecomposition:
    if n_trials < 100:
        raise ValueError("n_trials must be >= 100")
    c = _collect(cfg, profile, n_trials, rng, mode, threads)
    K = cfg.K
    ks = np.arange(K)
    kn = next_user(ks, K)
    mean_abs2 = c.F_abs2_sum / c.n
    mean_gain = c.gain.mean(axis=0)
    # clip rounding-level negatives when the gain is deterministic
    var_desired = np.maximum(mean_abs2[ks, kn] - np.abs(mean_gain) ** 2, 0.0)
    cross = mean_abs2.copy()
    cross[ks, ks] = 0.0
    cross[ks, kn] = 0.0
    return NoiseDecomposition(var_desired, mean_abs2[ks, ks].copy(), cross,
                              c.noise.mean(axis=0), mean_gain, float(alpha), n_trials)


def _se_from_moments(cfg, gain_re, gain_im, power, noise, q1, q2, q3):
    alpha = cfg.Pr / (cfg.Pu * (q1 + q2) + q3)
    ap = alpha * cfg.Pu
    desired = gain_re ** 2 + gain_im ** 2
    sinr = ap * desired / (ap * (power - desired) + alpha * noise + 1.0)
    return se_from_sinr(cfg, sinr)


def se_monte_carlo(cfg: SystemConfig, profile: FadingProfile, n_trials: int, rng: RngStream,
                   mode="zf", threads=1) -> SeReport:
    """
    Monte Carlo evaluation of the achievable per-user spectral efficiency.

    ``alpha`` is set from the Monte Carlo trace terms of the same
    realizations. Confidence half-widths (95%) come from a first-order
    expansion of the SE in the estimated moments, with the per-trial
    covariance of those moments.
    """
    if n_trials < 100:
        raise ValueError("n_trials must be >= 100")
    c = _collect(cfg, profile, n_trials, rng, mode, threads)
    # per-user moment columns: gain_re, gain_im, power, noise; shared: q1, q2, q3
    user_vars = [c.gain.real, c.gain.imag, c.power, c.noise]
    shared_vars = [c.q[:, 0], c.q[:, 1], c.q[:, 2]]
    user_means = [v.mean(axis=0) for v in user_vars]
    shared_means = [float(v.mean()) for v in shared_vars]
    se = _se_from_moments(cfg, *user_means, *shared_means)

    # central differences; user k only depends on its own per-user moments
    # steps scale with each user's own gain magnitude; channel gains of
    # dropped users can be many orders of magnitude below one
    grads_user, grads_shared = [], []
    amp = np.sqrt(user_means[2])
    scales = [amp, amp, user_means[2], np.maximum(user_means[3], 1e-300)]
    for j in range(4):
        h = 1e-6 * np.maximum(np.abs(user_means[j]), 1e-6 * scales[j])
        up = list(user_means)
        dn = list(user_means)
        up[j] = user_means[j] + h
        dn[j] = user_means[j] - h
        grads_user.append((_se_from_moments(cfg, *up, *shared_means)
                           - _se_from_moments(cfg, *dn, *shared_means)) / (2 * h))
    for j in range(3):
        h = 1e-6 * max(abs(shared_means[j]), 1e-300)
        up = list(shared_means)
        dn = list(shared_means)
        up[j] += h
        dn[j] -= h
        grads_shared.append((_se_from_moments(cfg, *user_means, *up)
                             - _se_from_moments(cfg, *user_means, *dn)) / (2 * h))
    lin = sum(g[None, :] * (v - m[None, :]) for g, v, m in zip(grads_user, user_vars, user_means))
    lin = lin + sum(g[None, :] * (v - m)[:, None] for g, v, m in zip(grads_shared, shared_vars, shared_means))
    n = c.n
    ci = Z95 * np.sqrt(lin.var(axis=0, ddof=1) / n)
    sum_ci = Z95 * np.sqrt(lin.sum(axis=1).var(ddof=1) / n)

    q = QTriple(*shared_means, trials=n)
    alpha = cfg.Pr / (cfg.Pu * (q.q1 + q.q2) + q.q3)
    return SeReport(se, "monte_carlo", trials=n, ci_halfwidth=ci, sum_ci_halfwidth=float(sum_ci),
                    alpha=float(alpha), mean_gain=c.gain.mean(axis=0),
                    extra={"q": q, "mode": mode})
