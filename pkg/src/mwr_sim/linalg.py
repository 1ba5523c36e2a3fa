"""
Dense complex linear algebra kernels and seeded random streams.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128``. The
helpers here only add shape checking on top of numpy so that a wrong
orientation (``G`` vs ``G^T``) fails loudly instead of broadcasting.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as spalg
from scipy.linalg import lapack

__all__ = [
    "DimensionMismatch",
    "SingularGram",
    "RngStream",
    "COND_LIMIT",
    "sample_circular_gaussian",
    "hermitian_solve",
    "trace",
    "frobenius_norm_sq",
    "matmul",
    "conj",
    "transpose",
    "hermitian",
]

COND_LIMIT = 1e12


class DimensionMismatch(ValueError):
    """Raised when matrix shapes are not conformable."""


class SingularGram(np.linalg.LinAlgError):
    """Raised when a Gram matrix is numerically singular.

    Monte Carlo loops catch this and redraw the realization.
    """


class RngStream:
    """
    Counter-based random stream identified by ``(seed, stream_id)``.

    Two streams with the same seed and id produce the same draws; streams
    that differ in any key component are statistically independent (they
    map to distinct ``SeedSequence`` spawn keys).

    Parameters
    ----------
    seed : int
        Root seed (64-bit).
    stream_id : int or tuple of int
        Stream index, usually the trial number. Tuples address nested
        streams, see :meth:`spawn`.
    """

    def __init__(self, seed: int, stream_id=0):
        if isinstance(stream_id, (int, np.integer)):
            key = (int(stream_id),)
        else:
            key = tuple(int(s) for s in stream_id)
        if any(k < 0 for k in key) or int(seed) < 0:
            raise ValueError("seed and stream ids must be non-negative")
        self.seed = int(seed)
        self.key = key
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    @property
    def stream_id(self):
        return self.key[0] if len(self.key) == 1 else self.key

    def spawn(self, index: int) -> "RngStream":
        """Return the independent child stream ``index`` of this stream."""
        return RngStream(self.seed, self.key + (int(index),))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id!r})"


def sample_circular_gaussian(rows: int, cols: int, rng: RngStream) -> np.ndarray:
    """
    Draw a ``rows x cols`` matrix with i.i.d. CN(0, 1) entries.

    Real and imaginary parts are independent N(0, 1/2), so that
    ``E{|h|^2} = 1`` and ``E{h^2} = 0``.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    # adjacent (re, im) pairs viewed as complex128, scaled in place
    h = rng.generator.standard_normal((rows, 2 * cols)).view(np.complex128)
    h *= np.sqrt(0.5)
    return h


def hermitian_solve(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Solve ``gram @ X = rhs`` for Hermitian positive definite ``gram``.

    The system is equilibrated by the diagonal of ``gram`` before a
    Cholesky factorization, and the reciprocal condition number of the
    equilibrated matrix is estimated with LAPACK ``?pocon``. Column scaling
    does not make a Gram matrix degenerate, so the check is made on the
    scaled problem.

    Parameters
    ----------
    gram : np.ndarray
        Square ``K x K`` Hermitian positive definite matrix.
    rhs : np.ndarray
        ``K x N`` (or length-``K``) right-hand side.

    Returns
    -------
    np.ndarray
        Solution with the shape of ``rhs``.

    Raises
    ------
    SingularGram
        If the factorization fails or the condition estimate exceeds
        ``COND_LIMIT``.
    """
    gram = np.asarray(gram, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise DimensionMismatch(f"Gram must be square, got {gram.shape}")
    if rhs.shape[0] != gram.shape[0]:
        raise DimensionMismatch(
            f"rhs has {rhs.shape[0]} rows, Gram is {gram.shape[0]}x{gram.shape[0]}")

    diag = gram.diagonal().real
    if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
        raise SingularGram("Gram matrix has a non-positive diagonal")
    s = 1.0 / np.sqrt(diag)
    scaled = gram * s[:, None] * s[None, :]
    try:
        factor = spalg.cho_factor(scaled, lower=False, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularGram(str(exc)) from None

    anorm = np.abs(scaled).sum(axis=0).max()
    rcond, info = lapack.zpocon(factor[0], anorm, uplo="U")
    if info != 0 or rcond * COND_LIMIT < 1.0:
        raise SingularGram(f"condition estimate {1.0 / max(rcond, 1e-300):.3g} exceeds {COND_LIMIT:.0e}")

    sr = s[:, None] if rhs.ndim == 2 else s
    x = spalg.cho_solve(factor, sr * rhs, check_finite=False)
    return sr * x


def _as2d(a):
    a = np.asarray(a)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {a.shape}")
    return a


def matmul(a, b):
    a, b = _as2d(a), _as2d(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def trace(a):
    a = _as2d(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"trace of non-square matrix {a.shape}")
    return np.trace(a)


def frobenius_norm_sq(a) -> float:
    a = np.asarray(a)
    return float(np.sum(a.real ** 2 + a.imag ** 2))


def conj(a):
    return np.conj(_as2d(a))


def transpose(a):
    return _as2d(a).T


def hermitian(a):
    return _as2d(a).conj().T
