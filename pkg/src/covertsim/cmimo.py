"""Chaos MIMO (C-MIMO) Gaussian encoder.

Each of the ``B = M*T`` symbols of a codeword is produced by running a
Bernoulli shift map from a state that mixes the previous symbol's chaos
value with the input bits, folding the result through two triangle maps
to a pair of uniforms and applying the Box-Muller transform. Keyed by a
pre-shared complex seed ``c0``.

Over a frame the chaos state runs on: the key of block ``i + 1`` is the
final chaos value of block ``i``, which depends on the bits sent in it.

Bits are indexed from 0. A 1-based bit subscript ``s`` (taken mod B) maps
to position ``(s - 1) % B``, so subscript 0 refers to the last bit.
"""
from dataclasses import dataclass

import numpy as np

from .codebook import Codebook, index_to_bits
from .numerics import CapacityError, ParameterError

__all__ = [
    "ChaosKey",
    "gamma_map",
    "bernoulli_shift",
    "box_muller",
    "cmimo_encode",
    "cmimo_codebook",
    "cmimo_codewords",
    "cmimo_chain_step",
    "cmimo_encode_frame",
    "random_key",
    "SHIFT_MODULUS",
    "MAX_CODEBOOK_BITS",
]

SHIFT_MODULUS = 1.0 - 1e-16
MAX_CODEBOOK_BITS = 16
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class ChaosKey:
    c0: complex
    Ns: int = 100

    def __post_init__(self):
        c0 = complex(self.c0)
        if not (0 < c0.real < 1 and 0 < c0.imag < 1):
            raise ParameterError(f"key c0 must lie in the open unit square, got {c0}")
        if int(self.Ns) < 1:
            raise ParameterError("Ns must be at least 1")
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "Ns", int(self.Ns))


def random_key(generator, Ns=100):
    """Draw a key with both parts uniform on the open unit interval."""
    while True:
        re, im = generator.random(2)
        if re > 0 and im > 0:
            return ChaosKey(complex(re, im), Ns)


def gamma_map(a, b):
    """Bit-dependent fold of a chaos value.

    Returns ``a`` for ``b == 0``; for ``b == 1`` returns ``1 - a`` above
    one half and ``a + 1/2`` otherwise. Works elementwise on arrays.
    """
    a = np.asarray(a, dtype=float)
    if np.any((a < 0) | (a > 1)):
        raise ParameterError("gamma_map expects a in [0, 1]")
    b = np.asarray(b)
    out = np.where(b == 0, a, np.where(a > 0.5, 1.0 - a, a + 0.5))
    return out if out.ndim else float(out)


def _shift(x):
    return np.remainder(2.0 * x, SHIFT_MODULUS)


def bernoulli_shift(z_prev, steps=1):
    """Apply the doubling map ``steps`` times to Re and Im independently."""
    z = np.asarray(z_prev, dtype=complex)
    re, im = z.real.copy(), z.imag.copy()
    if np.any((re < 0) | (re >= 1) | (im < 0) | (im >= 1)):
        raise ParameterError("bernoulli_shift expects both parts in [0, 1)")
    for _ in range(int(steps)):
        re = _shift(re)
        im = _shift(im)
    out = re + 1j * im
    return out if out.ndim else complex(out)


def box_muller(cx, cy):
    """Map two uniforms to ``sqrt(-log cx) * exp(2j*pi*cy)``."""
    cx = np.asarray(cx, dtype=float)
    cy = np.asarray(cy, dtype=float)
    if np.any(cx <= 0) or np.any(cx > 1):
        raise ParameterError("box_muller needs cx in (0, 1]")
    if np.any(cy < 0) or np.any(cy > 1):
        raise ParameterError("box_muller needs cy in [0, 1]")
    out = np.sqrt(-np.log(cx)) * (np.cos(2 * np.pi * cy) + 1j * np.sin(2 * np.pi * cy))
    return out if out.ndim else complex(out)


def _symbols(bits, c0, Ns):
    return _chaos(bits, c0, Ns)[0]


def _chaos(bits, c0, Ns):
    """Chaos symbols for bit patterns ``bits`` (..., B) under keys ``c0`` (...).

    ``bits`` and ``c0`` broadcast against each other over the leading axes.
    Returns the complex symbols (..., B) and the final chaos value (...).
    """
    bits = np.asarray(bits, dtype=np.int8)
    B = bits.shape[-1]
    half = B // 2
    c_prev = np.asarray(c0, dtype=complex)
    lead = np.broadcast_shapes(bits.shape[:-1], c_prev.shape)
    bits = np.broadcast_to(bits, lead + (B,))
    c_prev = np.broadcast_to(c_prev, lead)
    out = np.empty(lead + (B,), dtype=complex)
    for k in range(1, B + 1):
        re = np.remainder(gamma_map(c_prev.real, bits[..., (k - 2) % B]), 1.0)
        im = np.remainder(gamma_map(c_prev.imag, bits[..., (k - 1) % B]), 1.0)
        for _ in range(Ns):
            re = _shift(re)
            im = _shift(im)
        re_next, im_next = _shift(re), _shift(im)
        c_re = np.where(bits[..., (k - 1 + half) % B] == 1, re_next, re)
        c_im = np.where(bits[..., (k + half) % B] == 1, im_next, im)
        cx = np.arccos(np.cos(37 * np.pi * (c_re + c_im))) / np.pi
        cy = np.arcsin(np.sin(43 * np.pi * (c_re - c_im))) / np.pi + 0.5
        # cx == 0 has probability zero but would give an infinite symbol
        out[..., k - 1] = box_muller(np.maximum(cx, _TINY), cy)
        c_prev = c_re + 1j * c_im
    return out, c_prev


def _place(symbols, M, T):
    # column-major: s_1..s_M fill the first column
    sym = np.asarray(symbols)
    stacked = sym.reshape(sym.shape[:-1] + (T, M))
    return np.swapaxes(stacked, -1, -2) / np.sqrt(M)


def cmimo_encode(bits, key, M, T):
    """Encode ``M*T`` bits into an ``M x T`` C-MIMO codeword."""
    bits = np.asarray(bits, dtype=np.int8).ravel()
    if bits.size != M * T:
        raise ParameterError(f"need B = M*T = {M * T} bits, got {bits.size}")
    if np.any((bits != 0) & (bits != 1)):
        raise ParameterError("bits must be 0 or 1")
    return _place(_symbols(bits, key.c0, key.Ns), M, T)


def cmimo_codewords(c0, M, T, Ns=100):
    """All ``2**(M*T)`` codewords for each key in the array ``c0``.

    Returns an array of shape ``c0.shape + (2**B, M, T)``. This is the
    batched path used by the simulator; keys are not validated.
    """
    return cmimo_chain_step(c0, M, T, Ns)[0]


def cmimo_chain_step(c_prev, M, T, Ns=100):
    """Codebook and successor key of every bit pattern for keys ``c_prev``.

    Returns ``(codewords, next_keys)`` with shapes
    ``c_prev.shape + (2**B, M, T)`` and ``c_prev.shape + (2**B,)``.
    """
    B = M * T
    if B > MAX_CODEBOOK_BITS:
        raise CapacityError(f"B = {B} exceeds the enumeration guard of {MAX_CODEBOOK_BITS}")
    c_prev = np.asarray(c_prev, dtype=complex)
    patterns = index_to_bits(np.arange(2**B), B)
    sym, nxt = _chaos(patterns, c_prev[..., None], Ns)
    return _place(sym, M, T), nxt


def cmimo_encode_frame(indices, c0, M, T, Ns=100):
    """Encode a sequence of codeword indices with a running chaos key.

    Parameters
    ----------
    indices : array_like of int, shape (..., W)
    c0 : complex or array_like, shape (...)
        Key of the first block.

    Returns
    -------
    S : ndarray, shape (..., W, M, T)
    keys : ndarray, shape (..., W)
        Key used for each block.
    """
    idx = np.asarray(indices, dtype=np.int64)
    W = idx.shape[-1]
    c = np.broadcast_to(np.asarray(c0, dtype=complex), idx.shape[:-1]).copy()
    S = np.empty(idx.shape + (M, T), dtype=complex)
    keys = np.empty(idx.shape, dtype=complex)
    for i in range(W):
        cw, nxt = cmimo_chain_step(c, M, T, Ns)
        b = idx[..., i, None]
        keys[..., i] = c
        S[..., i, :, :] = np.take_along_axis(cw, b[..., None, None], axis=-3)[..., 0, :, :]
        c = np.take_along_axis(nxt, b, axis=-1)[..., 0]
    return S, keys


def cmimo_codebook(key, M, T):
    """Enumerate the codebook for ``key``; index ``b`` encodes ``index_to_bits(b)``."""
    cw = cmimo_codewords(key.c0, M, T, key.Ns)
    return Codebook("CMIMO", cw, M * T, M, T, {"c0": [key.c0.real, key.c0.imag], "Ns": key.Ns})
