"""Receivers: coherent ML, iterative semi-blind detection, and the
noncoherent detector for NGS frames.

Every function accepts leading batch axes (independent frames) in front
of the matrix axes, so a whole chunk of Monte Carlo frames can be decoded
with one call. Ties in any argmin go to the lowest codeword index.
"""
from dataclasses import dataclass, field

import numpy as np

from .cmimo import cmimo_chain_step
from .codebook import Codebook, index_to_bits
from .ngs import gen_projection_matrices, gen_reference_matrix
from .numerics import MAX_CONDITION, ParameterError, hermitian, pseudo_inverse

__all__ = [
    "DetectorState",
    "DetectionResult",
    "count_bit_errors",
    "ml_objectives",
    "coherent_ml",
    "semi_blind_detect",
    "semi_blind_detect_chained",
    "init_reference_estimate",
    "noncoherent_detect_step",
    "noncoherent_detect_sequence",
    "decode_frame_noncoherent",
    "perfect_csi_detect",
]


def _codewords(codebook):
    cw = codebook.codewords if isinstance(codebook, Codebook) else np.asarray(codebook)
    if cw.shape[-3] == 0:
        raise ParameterError("empty codebook")
    return cw


@dataclass(frozen=True)
class DetectorState:
    """Running reference estimate for the noncoherent detector."""

    Y_hat: np.ndarray
    alpha: float = 0.8

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ParameterError("forgetting factor must be in (0, 1)")

    @property
    def beta(self):
        return 1.0 - self.alpha


@dataclass(eq=False)
class DetectionResult:
    indices: np.ndarray
    bit_errors: int = 0
    objective: float = 0.0
    degenerate: np.ndarray = None
    estimates: dict = field(default_factory=dict)

    @property
    def W(self):
        return self.indices.shape[-1]


def count_bit_errors(detected, transmitted, B):
    """Hamming distance between two index arrays under the MSB-first mapping."""
    diff = np.bitwise_xor(np.asarray(detected, dtype=np.int64), np.asarray(transmitted, dtype=np.int64))
    return int(index_to_bits(diff, B).sum())


def ml_objectives(Y, H_hat, codebook):
    """``||Y - H_hat S_c||_F^2`` for every codeword c.

    Shapes: ``Y`` (..., N, T), ``H_hat`` (..., N, M), codewords
    (..., C, M, T). Returns (..., C).
    """
    cw = _codewords(codebook)
    HS = np.asarray(H_hat)[..., None, :, :] @ cw
    R = np.asarray(Y)[..., None, :, :] - HS
    return np.sum(R.real**2 + R.imag**2, axis=(-2, -1))


def coherent_ml(Y, H_hat, codebook, return_objective=False):
    """ML codeword index ``argmin_c ||Y - H_hat S_c||_F^2``."""
    obj = ml_objectives(Y, H_hat, codebook)
    idx = np.argmin(obj, axis=-1)
    best = np.take_along_axis(obj, idx[..., None], axis=-1)[..., 0]
    if idx.ndim == 0:
        idx, best = int(idx), float(best)
    return (idx, best) if return_objective else idx


def _right_pinv_masked(A):
    """Batched right pseudo-inverse plus a mask of usable batch entries."""
    gram = A @ hermitian(A)
    cond = np.linalg.cond(gram)
    ok = np.isfinite(cond) & (cond <= MAX_CONDITION)
    eye = np.broadcast_to(np.eye(gram.shape[-1]), gram.shape)
    gram = np.where(ok[..., None, None], gram, eye)
    return hermitian(np.linalg.solve(gram, A)), ok


def semi_blind_detect(Y_bar, H0, codebook, I_max=5, T=None):
    """Alternate per-block ML detection and least-squares channel refits.

    Parameters
    ----------
    Y_bar : ndarray, shape (..., N, W*T)
        Data blocks concatenated along time.
    H0 : ndarray, shape (..., N, M)
        Initial channel estimate.
    codebook : Codebook or ndarray
        Codewords (C, M, T), or per-block codewords (..., W, C, M, T).
    I_max : int
        Number of detection passes. A channel refit follows every pass
        but the last, which cannot affect the returned decisions.
    T : int, optional
        Block length; taken from the codebook when omitted.

    Returns
    -------
    DetectionResult
        ``degenerate`` flags frames where some refit was skipped because
        the decided codeword stack was rank deficient.
    """
    if I_max < 1:
        raise ParameterError("I_max must be at least 1")
    cw = _codewords(codebook)
    M = cw.shape[-2]
    T = cw.shape[-1] if T is None else T
    Y_bar = np.asarray(Y_bar)
    N, WT = Y_bar.shape[-2:]
    if WT % T:
        raise ParameterError("Y_bar width is not a multiple of T")
    W = WT // T
    if W * T < M:
        raise ParameterError("need W*T >= M for channel re-estimation")
    lead = Y_bar.shape[:-2]
    blocks = np.swapaxes(Y_bar.reshape(lead + (N, W, T)), -3, -2)  # (..., W, N, T)
    H = np.asarray(H0, dtype=complex)
    degenerate = np.zeros(np.broadcast_shapes(lead, H.shape[:-2]), dtype=bool)
    per_block = cw.ndim > 3
    for it in range(I_max):
        idx, obj = coherent_ml(blocks, H[..., None, :, :], cw, return_objective=True)
        if it == I_max - 1:
            break
        if per_block:
            S_hat = np.take_along_axis(cw, idx[..., None, None, None], axis=-3)[..., 0, :, :]
        else:
            S_hat = cw[idx]
        S_bar = np.swapaxes(S_hat, -3, -2).reshape(S_hat.shape[:-3] + (M, W * T))
        pinv, ok = _right_pinv_masked(S_bar)
        H = np.where(ok[..., None, None], Y_bar @ pinv, H)
        degenerate |= ~ok
    return DetectionResult(
        indices=np.asarray(idx),
        objective=np.sum(obj, axis=-1),
        degenerate=degenerate,
        estimates={"H_hat": H},
    )


def semi_blind_detect_chained(Y_bar, H0, c0, M, T, I_max=5, Ns=100):
    """Semi-blind detection of a C-MIMO frame whose chaos key runs on.

    Each pass decodes the blocks in order. The codebook of block ``i``
    is regenerated from the key left by the decision on block ``i - 1``,
    so a wrong decision also corrupts the codebooks that follow it.
    Refits are as in :func:`semi_blind_detect`.

    Parameters
    ----------
    Y_bar : ndarray, shape (..., N, W*T)
    H0 : ndarray, shape (..., N, M)
    c0 : complex or ndarray, shape (...)
        Key of the first data block.
    """
    if I_max < 1:
        raise ParameterError("I_max must be at least 1")
    Y_bar = np.asarray(Y_bar)
    N, WT = Y_bar.shape[-2:]
    if WT % T:
        raise ParameterError("Y_bar width is not a multiple of T")
    W = WT // T
    if W * T < M:
        raise ParameterError("need W*T >= M for channel re-estimation")
    H = np.asarray(H0, dtype=complex)
    lead = np.broadcast_shapes(Y_bar.shape[:-2], H.shape[:-2], np.shape(c0))
    blocks = np.swapaxes(Y_bar.reshape(Y_bar.shape[:-2] + (N, W, T)), -3, -2)
    degenerate = np.zeros(lead, dtype=bool)
    idx = np.zeros(lead + (W,), dtype=np.int64)
    S_hat = np.zeros(lead + (W, M, T), dtype=complex)
    total = np.zeros(lead)
    for it in range(I_max):
        c = np.broadcast_to(np.asarray(c0, dtype=complex), lead)
        total = np.zeros(lead)
        for i in range(W):
            cw, nxt = cmimo_chain_step(c, M, T, Ns)
            d, obj = coherent_ml(blocks[..., i, :, :], H, cw, return_objective=True)
            d = np.asarray(d)
            idx[..., i] = d
            S_hat[..., i, :, :] = np.take_along_axis(cw, d[..., None, None, None], axis=-3)[..., 0, :, :]
            c = np.take_along_axis(nxt, d[..., None], axis=-1)[..., 0]
            total = total + obj
        if it == I_max - 1:
            break
        S_bar = np.swapaxes(S_hat, -3, -2).reshape(lead + (M, W * T))
        pinv, ok = _right_pinv_masked(S_bar)
        H = np.where(ok[..., None, None], Y_bar @ pinv, H)
        degenerate |= ~ok
    return DetectionResult(indices=idx, objective=total, degenerate=degenerate, estimates={"H_hat": H})


def init_reference_estimate(Y0, G):
    """``Y(0) G^+``: the channel seen through the reference block."""
    return np.asarray(Y0) @ pseudo_inverse(G)


def noncoherent_detect_step(Y_i, state, E_i, codebook):
    """Decide one data block and advance the reference estimate.

    The decision minimises ``||Y(i) - Y_hat(i-1) X E(i)||_F^2`` over the
    unitary codewords X, then the estimate becomes
    ``beta Y(i) E^H + Y_hat(i-1) X_hat (I - beta E E^H)``.

    Returns ``(index, objective, new_state)``.
    """
    X = _codewords(codebook)
    E_i = np.asarray(E_i)
    Y_hat = state.Y_hat
    beta = state.beta
    XE = X @ E_i[..., None, :, :]
    idx, obj = coherent_ml(Y_i, Y_hat, XE, return_objective=True)
    X_hat = X[idx]
    Eh = hermitian(E_i)
    M = E_i.shape[-2]
    new = beta * (np.asarray(Y_i) @ Eh) + Y_hat @ X_hat @ (np.eye(M) - beta * (E_i @ Eh))
    return idx, obj, DetectorState(new, state.alpha)


def noncoherent_detect_sequence(Y0, Y_data, G, E, codebook, alpha=0.8, Y_hat0=None):
    """Run the noncoherent detector over ``W`` data blocks.

    Shapes: ``Y0`` (..., N, KM), ``Y_data`` (..., W, N, T), ``G``
    (..., M, KM), ``E`` (..., W, M, T). ``Y_hat0`` (..., N, M) replaces
    the reference-block estimate when given; passing the true channel
    gives the perfect-CSI variant of the detector.
    """
    Y_data = np.asarray(Y_data)
    E = np.asarray(E)
    W = Y_data.shape[-3]
    if Y_hat0 is None:
        Y_hat0 = init_reference_estimate(Y0, G)
    state = DetectorState(np.asarray(Y_hat0, dtype=complex), alpha)
    lead = np.broadcast_shapes(Y_data.shape[:-3], state.Y_hat.shape[:-2])
    indices = np.zeros(lead + (W,), dtype=np.int64)
    total = np.zeros(lead)
    for i in range(W):
        idx, obj, state = noncoherent_detect_step(Y_data[..., i, :, :], state, E[..., i, :, :], codebook)
        indices[..., i] = idx
        total = total + obj
    return DetectionResult(indices=indices, objective=total, estimates={"Y_hat": state.Y_hat})


def decode_frame_noncoherent(Y0, Y_data, secret, codebook, K, alpha=0.8, tx_indices=None):
    """Decode one NGS frame, regenerating ``G`` and ``E(i)`` from ``secret``."""
    Y_data = np.asarray(Y_data)
    M, T = codebook.M, Y_data.shape[-1]
    W = Y_data.shape[-3]
    if W == 0:
        return DetectionResult(indices=np.zeros(0, dtype=np.int64))
    G = gen_reference_matrix(secret, M, K)
    E = gen_projection_matrices(secret, M, T, W)
    res = noncoherent_detect_sequence(Y0, Y_data, G, E, codebook, alpha)
    if tx_indices is not None:
        res.bit_errors = count_bit_errors(res.indices, tx_indices, codebook.B)
    return res


def perfect_csi_detect(Y_data, H, S_tilde_prev, E, codebook):
    """Genie-aided coherent bound for NGS.

    Stronger than the perfect-CSI noncoherent detector: the reference is
    never re-estimated, so no estimation noise accumulates.

    Detects ``X(i)`` by coherent ML on the effective channel
    ``H S~(i-1)`` with the transmitted ``S~(i-1)``, over the candidates
    ``X_b E(i)``. Shapes: ``Y_data`` (..., W, N, T), ``H`` (..., N, M),
    ``S_tilde_prev`` (..., W, M, M), ``E`` (..., W, M, T).
    """
    X = _codewords(codebook)
    H_eff = np.asarray(H)[..., None, :, :] @ S_tilde_prev
    XE = X @ np.asarray(E)[..., None, :, :]
    idx, obj = coherent_ml(Y_data, H_eff, XE, return_objective=True)
    return DetectionResult(indices=np.asarray(idx), objective=np.sum(obj, axis=-1))
