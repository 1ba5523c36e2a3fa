"""
Relay processing: receive combiner, precoder, broadcast permutation and the
power normalization ``alpha``.

Conventions
-----------
``Wt`` is the receive combiner as applied, i.e. the ``K x M`` matrix ``W^T``.
The precoder ``A`` is ``M x K``. In broadcast slot ``t`` the relay forwards
the combined vector through ``Pi^(t)`` with ``Pi[k, k+t] = 1`` (cyclic), so
that user ``k`` is served the symbol of user ``k+t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _mc
from .channel import ChannelRealization, FadingProfile, SystemConfig, sample_realization
from .linalg import RngStream, frobenius_norm_sq, hermitian_solve

__all__ = [
    "InvalidSlot",
    "ProcessingSet",
    "QTriple",
    "zf_receiver",
    "zf_precoder",
    "mr_receiver",
    "mr_precoder",
    "permutation",
    "relay_matrices",
    "build_processing",
    "RelayTerms",
    "relay_terms",
    "gram_terms",
    "q_terms_mc",
    "alpha_mc",
    "alpha_analytic",
    "relay_transmit",
]

MODES = ("zf", "mr")


class InvalidSlot(ValueError):
    """Broadcast slot index outside ``1..K-1``."""


@dataclass(frozen=True)
class ProcessingSet:
    W_t: np.ndarray
    A: np.ndarray
    Pi: np.ndarray
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True)
class QTriple:
    """Expected traces of the signal, estimation-error and noise parts of
    the relay output, per unit of transmit SNR."""

    q1: float
    q2: float
    q3: float
    trials: int = 0


def zf_receiver(Ghat):
    """ZF combiner ``(Ghat^H Ghat)^{-1} Ghat^H``; raises ``SingularGram``."""
    gh = np.asarray(Ghat).conj().T
    return hermitian_solve(gh @ Ghat, gh)


def zf_precoder(Ghat):
    """ZF precoder ``Ghat^* (Ghat^T Ghat^*)^{-1}``; raises ``SingularGram``."""
    gc = np.conj(Ghat)
    K = gc.shape[1]
    return gc @ hermitian_solve(np.asarray(Ghat).T @ gc, np.eye(K))


def mr_receiver(Ghat):
    return np.asarray(Ghat).conj().T


def mr_precoder(Ghat):
    return np.conj(Ghat)


def permutation(K: int, t: int = 1) -> np.ndarray:
    """
    Permutation matrix of broadcast slot ``t`` with ``Pi[k, (k+t) % K] = 1``.

    Examples
    --------
    >>> permutation(3, 1).astype(int)
    array([[0, 1, 0],
           [0, 0, 1],
           [1, 0, 0]])
    """
    if not 1 <= t <= K - 1:
        raise InvalidSlot(f"slot t={t} outside 1..{K - 1}")
    return _cyclic_shift(K, t)


def _cyclic_shift(K, t):
    return np.roll(np.eye(K), t, axis=1)


def relay_matrices(Ghat, mode="zf"):
    """Return ``(Wt, A)`` for the given processing mode.

    For ZF the precoder is the plain transpose of the combiner, which is an
    exact identity of the two closed forms and saves a second solve.
    """
    if mode == "zf":
        Wt = zf_receiver(Ghat)
        return Wt, Wt.T
    if mode == "mr":
        return mr_receiver(Ghat), mr_precoder(Ghat)
    raise ValueError(f"unknown processing mode {mode!r}")


def build_processing(Ghat, alpha, t=1, mode="zf") -> ProcessingSet:
    Wt, A = relay_matrices(Ghat, mode)
    return ProcessingSet(Wt, A, permutation(Ghat.shape[1], t), float(alpha))


@dataclass
class RelayTerms:
    """
    Per-realization quantities that every estimator is assembled from.

    ``F[k, i] = g_k^T A Pi W^T g_i`` is the end-to-end gain from user ``i``
    to user ``k``; ``noise[k] = ||g_k^T A Pi W^T||^2`` is the amplified
    relay-noise gain seen by user ``k``.
    """

    F: np.ndarray
    noise: np.ndarray
    q1: float
    q2: float
    q3: float
    b_norm_sq: float
    parts: dict


def _assemble(W_gh, W_e, WW, AA, left, Pi, parts=None) -> RelayTerms:
    W_g = W_gh + W_e
    F = left @ W_g
    noise = np.real(np.sum((left @ WW) * left.conj(), axis=1))

    def trace_sq(X):
        # ||A Pi X||_F^2 for a K x K block X
        PX = Pi @ X
        return float(np.real(np.sum(PX.conj() * (AA @ PX))))

    q3 = float(np.real(np.sum(AA * (Pi @ WW @ Pi.T).T)))
    return RelayTerms(F, noise, trace_sq(W_gh), trace_sq(W_e), q3, trace_sq(W_g), parts or {})


def relay_terms(real: ChannelRealization, Wt, A, Pi, keep_parts=False) -> RelayTerms:
    """Evaluate the end-to-end gains of one realization using exact matrices.

    Traces are reduced to ``K x K`` products; nothing of size ``M x M`` is
    formed.
    """
    W_gh = Wt @ real.Ghat
    W_e = Wt @ real.E
    WW = Wt @ Wt.conj().T
    # both ZF and MR use A = W (A^H A = conj(W^T W^*)); skip the product then
    AA = WW.conj() if np.array_equal(A, Wt.T) else A.conj().T @ A
    left = (real.G.T @ A) @ Pi
    parts = None
    if keep_parts:
        parts = {"gh_a": real.Ghat.T @ A, "e_a": real.E.T @ A, "W_gh": W_gh, "W_e": W_e}
    return _assemble(W_gh, W_e, WW, AA, left, Pi, parts)


def gram_terms(real: ChannelRealization, Pi, mode="zf") -> RelayTerms:
    """
    Same quantities as :func:`relay_terms` for ``A = W`` processing, from the
    ``K x K`` blocks ``X = Ghat^H Ghat`` and ``Y = Ghat^H E`` only.

    With ``W^T = P Ghat^H`` (``P = X^{-1}`` for ZF, ``I`` for MR):
    ``W^T Ghat = P X``, ``W^T E = P Y``, ``W^T W^* = P X P^H`` and
    ``G^T A = (W^T G)^T``. The identities are exact; only the cost changes.
    Raises ``SingularGram`` for ZF on an ill-conditioned ``X``.
    """
    gh = real.Ghat.conj().T
    X = gh @ real.Ghat
    Y = gh @ real.E
    if mode == "zf":
        P = hermitian_solve(X, np.eye(X.shape[0]))
        W_gh = P @ X
        WW = P @ W_gh.conj().T
    elif mode == "mr":
        W_gh = X
        WW = X
        P = None
    else:
        raise ValueError(f"unknown processing mode {mode!r}")
    W_e = Y if P is None else P @ Y
    left = (W_gh + W_e).T @ Pi
    return _assemble(W_gh, W_e, WW, WW.conj(), left, Pi)


def _terms_sampler(cfg, profile, mode, t=1):
    Pi = permutation(cfg.K, t)

    def draw(stream):
        return sample_realization(cfg, profile, stream)

    def build(real):
        return relay_matrices(real.Ghat, mode)

    return Pi, draw, build


def _fast_sampler(cfg, profile, mode, t=1):
    """``(draw, terms)`` pair for Monte Carlo loops; ``terms`` may raise ``SingularGram``."""
    Pi = permutation(cfg.K, t)

    def draw(stream):
        return sample_realization(cfg, profile, stream)

    def terms(real):
        return gram_terms(real, Pi, mode)

    return draw, terms


def q_terms_mc(cfg: SystemConfig, profile: FadingProfile, n_trials: int, rng: RngStream,
               mode="zf", threads=1) -> QTriple:
    """
    Monte Carlo estimate of the three trace expectations that set ``alpha``.

    ``q1 = E||A Pi W^T Ghat||^2``, ``q2 = E||A Pi W^T E||^2`` and
    ``q3 = E||A Pi W^T||^2``, each averaged over ``n_trials`` independent
    realizations.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    draw, terms = _fast_sampler(cfg, profile, mode)

    def chunk(start, stop):
        acc = _mc.Moments()
        for i in range(start, stop):
            _, r = _mc.with_redraw(draw, terms, rng.spawn(i))
            acc.add(np.array([r.q1, r.q2, r.q3]))
        return acc

    m = _mc.merge_all(_mc.run_chunks(chunk, n_trials, threads)).mean
    return QTriple(float(m[0]), float(m[1]), float(m[2]), n_trials)


def alpha_mc(cfg: SystemConfig, q: QTriple) -> float:
    return cfg.Pr / (cfg.Pu * q.q1 + cfg.Pu * q.q2 + q.q3)


def alpha_analytic(cfg: SystemConfig, profile: FadingProfile) -> float:
    """Large-``M`` ZF normalization built from the closed-form trace terms."""
    M, K = cfg.M, cfg.K
    rho = profile.rho
    den = (M * cfg.Pu * np.sum(1.0 / profile.sigma2)
           + cfg.Pu * np.sum(profile.sigma2e) * rho + rho)
    return float(M * (M - K) * cfg.Pr / den)


def relay_transmit(real: ChannelRealization, proc: ProcessingSet, x, noise, Pu) -> np.ndarray:
    """
    Relay output of one broadcast slot,
    ``sqrt(alpha*Pu) * B x + sqrt(alpha) * C n`` with ``C = A Pi W^T`` and
    ``B = C G``.
    """
    x = np.asarray(x, dtype=complex)
    noise = np.asarray(noise, dtype=complex)
    y_r = np.sqrt(Pu) * (real.G @ x) + noise
    return np.sqrt(proc.alpha) * (proc.A @ (proc.Pi @ (proc.W_t @ y_r)))


def relay_power(real, proc, x, noise, Pu) -> float:
    return frobenius_norm_sq(relay_transmit(real, proc, x, noise, Pu))
