"""Noncoherent Gaussian signaling (NGS) transmitter.

A frame opens with a Gaussian reference block ``G`` (M x KM) and then
carries W data blocks ``S(i) = S~(i) E(i)``, where ``S~(i)`` is the
running product of DUC codewords and ``E(i)`` (M x T) is a Gaussian
projection regenerated by both ends from a shared secret stream.
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .codebook import bits_to_index
from .numerics import ParameterError, hermitian, sample_complex_gaussian

__all__ = [
    "NgsFrame",
    "RateReport",
    "gen_reference_matrix",
    "gen_projection_matrix",
    "gen_projection_matrices",
    "differential_encode",
    "build_frame",
    "effective_rate",
    "frame_length_for_overhead",
    "unitarity_error",
    "RENORMALIZE_EVERY",
]

RENORMALIZE_EVERY = 1000


@dataclass(frozen=True, eq=False)
class NgsFrame:
    G: np.ndarray
    E: np.ndarray  # (W, M, T)
    X: np.ndarray  # (W, M, M)
    S: list  # W + 1 blocks, S[0] is G
    S_tilde: np.ndarray  # (W + 1, M, M), S_tilde[0] is I
    indices: np.ndarray  # (W,)

    @property
    def W(self):
        return len(self.indices)


@dataclass(frozen=True)
class RateReport:
    R: float
    R_eff: float
    eta: float
    overhead_ratio: float


def gen_reference_matrix(secret, M, K):
    """Shared ``M x KM`` reference block with CN(0, 1/M) entries."""
    if M < 1 or K < 1:
        raise ParameterError("M and K must be positive")
    return sample_complex_gaussian(secret.child("ref", 0), M, K * M, 1.0 / M)


def gen_projection_matrix(secret, M, T, i):
    """Shared ``M x T`` projection for data block ``i >= 1``."""
    if i < 1:
        raise ParameterError("projection index starts at 1")
    return sample_complex_gaussian(secret.child("proj", i), M, T, 1.0 / M)


def gen_projection_matrices(secret, M, T, W):
    """``E(1) .. E(W)`` stacked as a (W, M, T) array."""
    E = np.empty((W, M, T), dtype=complex)
    for i in range(1, W + 1):
        E[i - 1] = gen_projection_matrix(secret, M, T, i)
    return E


def _nearest_unitary(A):
    U, _ = scipy.linalg.polar(A)
    return U


def differential_encode(S_tilde_prev, X):
    """One differential step ``S~(i) = S~(i-1) X``."""
    S_tilde_prev = np.asarray(S_tilde_prev)
    X = np.asarray(X)
    if S_tilde_prev.shape[-1] != S_tilde_prev.shape[-2] or X.shape[-1] != X.shape[-2]:
        raise ParameterError("differential encoding needs square matrices")
    if S_tilde_prev.shape[-1] != X.shape[-1]:
        raise ParameterError("S~ and X sizes differ")
    return S_tilde_prev @ X


def build_frame(bits, codebook, secret, K, T=1):
    """Assemble one NGS frame.

    Parameters
    ----------
    bits : array_like, shape (W, B)
        One row of bits per data block.
    codebook : Codebook
        DUC codebook; ``codebook.codewords`` are the ``X_b``.
    secret : RandomStream
        Shared-secret stream; ``G`` and ``E(i)`` derive from it.
    K : int
        Reference repetition number.
    T : int
        Time slots per data block.
    """
    if codebook.scheme != "DUC":
        raise ParameterError("NGS frames need a DUC codebook")
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.shape[1] != codebook.B:
        raise ParameterError(f"bits must have shape (W, {codebook.B}), got {bits.shape}")
    M = codebook.M
    W = len(bits)
    indices = bits_to_index(bits)
    G = gen_reference_matrix(secret, M, K)
    E = gen_projection_matrices(secret, M, T, W)
    X = codebook.codewords[indices]
    S_tilde = np.empty((W + 1, M, M), dtype=complex)
    S_tilde[0] = np.eye(M)
    for i in range(1, W + 1):
        St = differential_encode(S_tilde[i - 1], X[i - 1])
        if i % RENORMALIZE_EVERY == 0:
            St = _nearest_unitary(St)
        S_tilde[i] = St
    S = [G] + [S_tilde[i] @ E[i - 1] for i in range(1, W + 1)]
    return NgsFrame(G, E, X, S, S_tilde, indices)


def unitarity_error(A):
    A = np.asarray(A)
    eye = np.eye(A.shape[-1])
    return np.linalg.norm(hermitian(A) @ A - eye, axis=(-2, -1))


def effective_rate(B, W, M, K, T):
    """Rate bookkeeping for a frame of W data blocks after a KM-slot reference."""
    for name, v in (("B", B), ("W", W), ("M", M), ("K", K), ("T", T)):
        if v < 1:
            raise ParameterError(f"{name} must be positive")
    R = B / T
    eta = 1.0 / (1.0 + M * K / (W * T))
    return RateReport(R=R, R_eff=eta * R, eta=eta, overhead_ratio=1.0 - eta)


def frame_length_for_overhead(M, K, T, overhead):
    """Smallest W whose reference overhead ``1 - eta`` is at most ``overhead``."""
    if not 0 < overhead < 1:
        raise ParameterError("overhead must be in (0, 1)")
    # W >= MK(1 - rho) / (rho T); round away float noise before ceil
    w = M * K * (1 - overhead) / (overhead * T)
    return max(1, math.ceil(round(w, 9)))
