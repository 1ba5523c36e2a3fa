"""
Large-scale fading, MMSE estimation statistics and channel sampling.

The relay sees ``G = H D^{1/2}`` with ``H`` i.i.d. CN(0, 1). With orthogonal
pilots of length ``tau`` and pilot SNR ``Pp``, the MMSE estimate ``Ghat`` and
its error ``E = G - Ghat`` are independent with column variances
``sigma2[k]`` and ``sigma2e[k] = beta[k] - sigma2[k]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import RngStream, sample_circular_gaussian

__all__ = [
    "InvalidConfig",
    "NonPositiveBeta",
    "SystemConfig",
    "FadingProfile",
    "ChannelRealization",
    "estimation_stats",
    "sample_realization",
    "drop_users",
    "large_scale_gain",
    "db_to_linear",
    "linear_to_db",
    "cyclic_rho",
]


class InvalidConfig(ValueError):
    """System parameters violate a model precondition."""


class NonPositiveBeta(ValueError):
    """A large-scale fading coefficient is zero or negative."""


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class SystemConfig:
    """
    Scalar parameters of the multi-way relay system.

    All SNRs are linear and already normalized by the noise power.
    ``tau == T`` is accepted and describes a frame with no data phase.
    """

    M: int
    K: int
    T: int
    tau: int
    Pu: float
    Pp: float
    Pr: float

    def __post_init__(self):
        if self.K < 2:
            raise InvalidConfig(f"need at least 2 users, got K={self.K}")
        if self.M <= self.K:
            raise InvalidConfig(f"need M > K, got M={self.M}, K={self.K}")
        if self.tau < self.K:
            raise InvalidConfig(f"orthogonal pilots need tau >= K, got tau={self.tau}, K={self.K}")
        if self.tau > self.T:
            raise InvalidConfig(f"training longer than the coherence interval: tau={self.tau}, T={self.T}")
        for name in ("Pu", "Pp", "Pr"):
            v = getattr(self, name)
            if not (v > 0 and np.isfinite(v)):
                raise InvalidConfig(f"{name} must be a positive finite SNR, got {v}")

    @property
    def prefactor(self) -> float:
        """Fraction of the frame carrying data times the broadcast share."""
        return (self.T - self.tau) / self.T * (self.K - 1) / self.K


def cyclic_rho(sigma2) -> float:
    """Sum of ``1 / (sigma2[k] * sigma2[k+1])`` with index ``K+1 -> 1``."""
    s = np.asarray(sigma2, dtype=float)
    return float(np.sum(1.0 / (s * np.roll(s, -1))))


@dataclass(frozen=True)
class FadingProfile:
    betas: np.ndarray
    sigma2: np.ndarray
    sigma2e: np.ndarray
    rho: float

    @property
    def K(self) -> int:
        return len(self.betas)

    @classmethod
    def from_sigma2(cls, betas, sigma2):
        """Build a profile from explicit estimate variances."""
        betas = np.asarray(betas, dtype=float)
        sigma2 = np.asarray(sigma2, dtype=float)
        if betas.shape != sigma2.shape:
            raise ValueError("betas and sigma2 must have the same length")
        return cls(betas, sigma2, betas - sigma2, cyclic_rho(sigma2))

    @classmethod
    def perfect(cls, betas):
        """Perfect CSI: the estimate equals the channel."""
        betas = np.asarray(betas, dtype=float)
        return cls.from_sigma2(betas, betas.copy())


def estimation_stats(betas, tau, Pp) -> FadingProfile:
    """
    MMSE estimation statistics for per-user large-scale gains ``betas``.

    ``sigma2 = tau*Pp*beta**2 / (tau*Pp*beta + 1)``; the error variance is
    ``beta - sigma2 = beta / (tau*Pp*beta + 1)``.
    """
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    if np.any(~(betas > 0)):
        raise NonPositiveBeta(f"large-scale gains must be > 0, got {betas}")
    if tau < 1 or not Pp > 0:
        raise InvalidConfig(f"need tau >= 1 and Pp > 0, got tau={tau}, Pp={Pp}")
    snr = tau * Pp * betas
    # both parts in closed form so neither can round below zero
    sigma2 = np.minimum(betas * snr / (snr + 1.0), betas)
    sigma2e = betas / (snr + 1.0)
    return FadingProfile(betas, sigma2, sigma2e, cyclic_rho(sigma2))


@dataclass(frozen=True)
class ChannelRealization:
    G: np.ndarray
    Ghat: np.ndarray
    E: np.ndarray


def sample_realization(cfg: SystemConfig, profile: FadingProfile, rng: RngStream) -> ChannelRealization:
    """Draw ``Ghat`` then ``E`` independently and assemble ``G = Ghat + E``."""
    if profile.K != cfg.K:
        raise ValueError(f"profile has {profile.K} users, config has K={cfg.K}")
    ghat = sample_circular_gaussian(cfg.M, cfg.K, rng) * np.sqrt(profile.sigma2)
    err = sample_circular_gaussian(cfg.M, cfg.K, rng) * np.sqrt(profile.sigma2e)
    return ChannelRealization(ghat + err, ghat, err)


def large_scale_gain(distance_m, shadow_db, pathloss_exp):
    """``z / (1 + d**nu)`` with log-normal shadowing ``z = 10**(shadow_db/10)``."""
    d = np.asarray(distance_m, dtype=float)
    return 10.0 ** (np.asarray(shadow_db, dtype=float) / 10.0) / (1.0 + d ** pathloss_exp)


def drop_users(count, disk_diameter_m, shadow_std_db, pathloss_exp, rng: RngStream,
               return_distances=False):
    """
    Place ``count`` users uniformly (by area) on a disk centred on the relay.

    Returns ``beta = z / (1 + d**pathloss_exp)`` with ``d`` in meters and
    ``z = 10**(x/10)``, ``x ~ N(0, shadow_std_db**2)``. A zero diameter
    puts every user at the centre.
    """
    if count < 1 or not disk_diameter_m >= 0 or not shadow_std_db >= 0:
        raise ValueError("need count >= 1 and nonnegative diameter and shadowing spread")
    gen = rng.generator
    radius = disk_diameter_m / 2.0
    d = radius * np.sqrt(gen.random(count))
    betas = large_scale_gain(d, shadow_std_db * gen.standard_normal(count), pathloss_exp)
    if return_distances:
        return betas, d
    return betas
