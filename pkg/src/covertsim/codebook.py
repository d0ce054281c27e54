"""Codebook container and its JSON form."""
import json
from dataclasses import dataclass

import numpy as np

from .numerics import ParameterError

__all__ = ["Codebook", "bits_to_index", "index_to_bits", "SCHEMES"]

SCHEMES = ("DUC", "CMIMO", "SM")


def index_to_bits(index, B):
    """Big-endian bit vector(s) of ``index``; the first bit is the MSB."""
    index = np.asarray(index, dtype=np.int64)
    shifts = np.arange(B - 1, -1, -1, dtype=np.int64)
    return ((index[..., None] >> shifts) & 1).astype(np.int8)


def bits_to_index(bits):
    """Inverse of :func:`index_to_bits` over the last axis."""
    bits = np.asarray(bits, dtype=np.int64)
    B = bits.shape[-1]
    weights = 1 << np.arange(B - 1, -1, -1, dtype=np.int64)
    return bits @ weights


@dataclass(frozen=True, eq=False)
class Codebook:
    """An ordered set of ``2**B`` space-time codewords of shape ``M x T``.

    ``codewords[b]`` carries the bit pattern ``index_to_bits(b, B)``.
    ``meta`` holds scheme-specific extras (DUC factors, C-MIMO key).
    """

    scheme: str
    codewords: np.ndarray
    B: int
    M: int
    T: int
    meta: dict = None

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=complex)
        if self.scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        if cw.shape != (2**self.B, self.M, self.T):
            raise ParameterError(
                f"expected {2**self.B} codewords of shape {self.M}x{self.T}, got array {cw.shape}"
            )
        cw.setflags(write=False)
        object.__setattr__(self, "codewords", cw)
        object.__setattr__(self, "meta", dict(self.meta or {}))

    def __len__(self):
        return len(self.codewords)

    def __getitem__(self, b):
        return self.codewords[b]

    def to_dict(self):
        return {
            "scheme": self.scheme,
            "B": self.B,
            "M": self.M,
            "T": self.T,
            "meta": self.meta,
            "codewords": [
                [[[float(z.real), float(z.imag)] for z in row] for row in cw]
                for cw in self.codewords
            ],
        }

    @classmethod
    def from_dict(cls, d):
        arr = np.asarray(d["codewords"], dtype=float)
        cw = arr[..., 0] + 1j * arr[..., 1]
        return cls(d["scheme"], cw, int(d["B"]), int(d["M"]), int(d["T"]), d.get("meta"))

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
