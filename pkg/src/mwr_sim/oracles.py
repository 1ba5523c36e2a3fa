"""
Statistical oracles for the random-matrix identities behind the closed form.

Each check draws independent realizations, evaluates the exact matrix
expression, and compares its sample mean with the analytic value. Two
classes of oracle exist:

* ``exact``: the analytic value is an exact expectation (inverse-Wishart
  means, the quadratic-form fourth moment). Pass band is four standard
  errors, optionally widened by a relative tolerance.
* ``asymptotic``: the analytic value only holds as ``M`` grows; a relative
  model-error allowance (5% by default) is added.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _mc
from .channel import FadingProfile, SystemConfig
from .linalg import RngStream
from .processing import _terms_sampler, relay_terms
from .se import interference_matrix, next_user, noise_terms, prev_user

__all__ = [
    "OracleResult",
    "OracleFailure",
    "lemma1_check",
    "lemma2_check",
    "q_asymptotic_check",
    "variance_terms_check",
    "ASYMPTOTIC_TOL",
]

ASYMPTOTIC_TOL = 0.05
N_SIGMA = 4.0


class OracleFailure(AssertionError):
    """An exact-identity oracle rejected the implementation."""


@dataclass(frozen=True)
class OracleResult:
    name: str
    empirical: float
    analytic: float
    mc_std_error: float
    trials: int
    tolerance: float = 0.0
    kind: str = "exact"

    @property
    def abs_error(self) -> float:
        return abs(self.empirical - self.analytic)

    @property
    def rel_error(self) -> float:
        if self.analytic == 0:
            return 0.0 if self.empirical == 0 else float("inf")
        return self.abs_error / abs(self.analytic)

    @property
    def passed(self) -> bool:
        band = max(self.tolerance * abs(self.analytic), N_SIGMA * self.mc_std_error)
        return bool(self.abs_error <= band)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: empirical={self.empirical:.6g} analytic={self.analytic:.6g} "
                f"rel_err={self.rel_error:.3%} se={self.mc_std_error:.3g} ({self.kind}, n={self.trials})")


def _from_samples(name, samples, analytic, tolerance=0.0, kind="exact"):
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    se = samples.std(ddof=1) / np.sqrt(n) if n > 1 else float("inf")
    return OracleResult(name, float(samples.mean()), float(analytic), float(se), n, tolerance, kind)


def _chunked(rng, n_trials, draw_chunk, threads=1):
    """Batched sampling: chunk ``c`` draws its trials from ``rng.spawn(c)``."""
    def chunk(start, stop):
        return draw_chunk(rng.spawn(start // _mc.CHUNK).generator, stop - start)
    return np.concatenate(_mc.run_chunks(chunk, n_trials, threads))


def lemma1_check(M, K, D, Dhat, n_trials, rng: RngStream, tolerance=0.0, threads=1) -> OracleResult:
    """
    Inverse-Wishart mean: ``E Tr[Dhat (X^H X)^{-1}]`` for ``X`` with i.i.d.
    rows ``CN(0, D)`` against ``sum_k Dhat_kk / D_kk / (M - K)``.
    """
    if M <= K:
        raise ValueError("need M > K")
    d = np.diag(D).astype(float) if np.ndim(D) == 2 else np.asarray(D, dtype=float)
    dh = np.diag(Dhat).astype(float) if np.ndim(Dhat) == 2 else np.asarray(Dhat, dtype=float)
    if d.shape != (K,) or dh.shape != (K,) or np.any(d <= 0) or np.any(dh <= 0):
        raise ValueError("D and Dhat must be positive diagonal K x K")

    def draw(gen, n):
        g = gen.standard_normal((2, n, M, K))
        X = (g[0] + 1j * g[1]) * np.sqrt(0.5 * d)
        gram = np.conj(np.swapaxes(X, 1, 2)) @ X
        inv_diag = np.linalg.solve(gram, np.broadcast_to(np.eye(K), gram.shape)).diagonal(axis1=1, axis2=2)
        return inv_diag.real @ dh

    samples = _chunked(rng, n_trials, draw, threads)
    analytic = np.sum(dh / d) / (M - K)
    return _from_samples(f"lemma1[M={M},K={K}]", samples, analytic, tolerance)


def lemma2_check(A, n_trials, rng: RngStream, tolerance=0.0, threads=1) -> OracleResult:
    """``E|x^T A x|^2`` for ``x ~ CN(0, I)`` against ``Tr(A A^H) + Tr(A A^*)``."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    M = A.shape[0]

    def draw(gen, n):
        g = gen.standard_normal((2, n, M))
        x = (g[0] + 1j * g[1]) * np.sqrt(0.5)
        q = np.einsum("nm,mj,nj->n", x, A, x)
        return q.real ** 2 + q.imag ** 2

    samples = _chunked(rng, n_trials, draw, threads)
    analytic = np.real(np.trace(A @ A.conj().T) + np.trace(A @ A.conj()))
    return _from_samples(f"lemma2[M={M}]", samples, analytic, tolerance)


# column layout of the per-trial term samples
_COLS = ("q1", "q2", "q3", "V1", "V2", "V3", "I1", "I2", "I3", "J",
         "gain_re", "gain_im", "gain_abs2", "self", "cross")


def _term_samples(cfg, profile, n_trials, rng, user, threads=1):
    Pi, draw, build = _terms_sampler(cfg, profile, "zf")
    K = cfg.K
    k, kn = user, int(next_user(user, K))
    others = np.ones(K, bool)
    others[[k, kn]] = False

    def chunk(start, stop):
        out = np.empty((stop - start, len(_COLS)))
        for j, i in enumerate(range(start, stop)):
            real, (Wt, A) = _mc.with_redraw(draw, build, rng.spawn(i))
            r = relay_terms(real, Wt, A, Pi, keep_parts=True)
            p = r.parts
            gh_row = p["gh_a"][k] @ Pi
            e_row = p["e_a"][k] @ Pi
            he = gh_row @ p["W_e"]
            eh = e_row @ p["W_gh"]
            ee = e_row @ p["W_e"]
            f = r.F[k]
            out[j] = (r.q1, r.q2, r.q3,
                      abs(he[kn]) ** 2, abs(eh[kn]) ** 2, abs(ee[kn]) ** 2,
                      abs(he[k]) ** 2, abs(eh[k]) ** 2, abs(ee[k]) ** 2,
                      r.noise[k], f[kn].real, f[kn].imag, abs(f[kn]) ** 2,
                      abs(f[k]) ** 2, np.sum(np.abs(f[others]) ** 2))
        return out

    return dict(zip(_COLS, np.concatenate(_mc.run_chunks(chunk, n_trials, threads)).T))


def q_asymptotic_check(cfg: SystemConfig, profile: FadingProfile, n_trials: int, rng: RngStream,
                       analytic_profile: FadingProfile | None = None, q1_tolerance=0.03,
                       tolerance=ASYMPTOTIC_TOL, threads=1):
    """
    Trace terms of the relay power normalization.

    ``q1`` is compared with its exact inverse-Wishart value; ``q2`` and
    ``q3`` with their large-``M`` forms. ``analytic_profile`` lets the
    claimed statistics differ from the sampled ones (negative controls).
    """
    ap = analytic_profile or profile
    s = _term_samples(cfg, profile, n_trials, rng, 0, threads)
    M, K = cfg.M, cfg.K
    q3 = ap.rho / (M * (M - K))
    return [
        _from_samples("Q1", s["q1"], np.sum(1.0 / ap.sigma2) / (M - K), q1_tolerance),
        _from_samples("Q2", s["q2"], np.sum(ap.sigma2e) * q3, tolerance, "asymptotic"),
        _from_samples("Q3", s["q3"], q3, tolerance, "asymptotic"),
    ]


def variance_terms_check(cfg: SystemConfig, profile: FadingProfile, n_trials: int, rng: RngStream,
                         user=0, analytic_profile: FadingProfile | None = None,
                         tolerance=ASYMPTOTIC_TOL, threads=1):
    """Effective-noise terms seen by ``user`` against their closed forms."""
    ap = analytic_profile or profile
    s = _term_samples(cfg, profile, n_trials, rng, user, threads)
    M, K = cfg.M, cfg.K
    k, kn, kp = user, int(next_user(user, K)), int(prev_user(user, K))
    s2, s2e, rho = ap.sigma2, ap.sigma2e, ap.rho
    I = interference_matrix(cfg, ap)
    J = noise_terms(cfg, ap)
    others = np.ones(K, bool)
    others[[k, kn]] = False

    # desired-gain variance from the same samples; its standard error
    # comes from the per-trial squared deviations
    mean_re, mean_im = s["gain_re"].mean(), s["gain_im"].mean()
    dev = (s["gain_re"] - mean_re) ** 2 + (s["gain_im"] - mean_im) ** 2

    asym = dict(tolerance=tolerance, kind="asymptotic")
    return [
        _from_samples("V1", s["V1"], s2e[kn] / ((M - K) * s2[kn])),
        _from_samples("V2", s["V2"], s2e[k] / ((M - K) * s2[k])),
        _from_samples("V3", s["V3"], s2e[k] * s2e[kn] * rho / (M * (M - K)), **asym),
        _from_samples("I1", s["I1"], s2e[k] / ((M - K) * s2[kn])),
        _from_samples("I2", s["I2"], s2e[k] / ((M - K) * s2[kp])),
        _from_samples("I3", s["I3"], s2e[k] ** 2 * rho / (M * (M - K)), **asym),
        _from_samples("J", s["J"], J[k], **asym),
        _from_samples("var_desired", dev * len(dev) / max(len(dev) - 1, 1), I[k, kn], **asym),
        _from_samples("self_interf", s["self"], I[k, k], **asym),
        _from_samples("cross_interf", s["cross"], I[k, others].sum(), **asym),
        _from_samples("mean_gain", s["gain_re"], 1.0),
    ]
