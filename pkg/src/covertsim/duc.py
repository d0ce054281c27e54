"""Diagonal unitary coding (DUC) constellations.

Codeword ``b`` is ``diag(exp(2j*pi*b*u_m / 2**B))`` for integer factors
``0 < u_1 <= ... <= u_M <= 2**B / 2``. The factors are chosen to maximise
the diversity product, the worst-case geometric mean of
``|sin(pi*b*u_m / 2**B)|`` over nonzero ``b``.
"""
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .codebook import Codebook
from .numerics import CapacityError, ParameterError

__all__ = [
    "DucFactors",
    "duc_matrix",
    "root_of_unity",
    "duc_codebook",
    "diversity_product",
    "diversity_products",
    "optimize_factors",
    "count_feasible",
    "MAX_DUC_BITS",
]

MAX_DUC_BITS = 16
EXHAUSTIVE_BUDGET = 10**6
_TIE_TOL = 1e-12
_CHUNK = 1 << 15


@dataclass(frozen=True)
class DucFactors:
    u: tuple
    B: int

    def __post_init__(self):
        u = tuple(int(x) for x in self.u)
        B = int(self.B)
        if B < 1:
            raise ParameterError("B must be positive")
        if not u:
            raise ParameterError("need at least one factor")
        if u[0] <= 0 or any(a > b for a, b in zip(u, u[1:])) or u[-1] > 2**B // 2:
            raise ParameterError(f"factors {u} must satisfy 0 < u_1 <= ... <= u_M <= {2**B // 2}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "B", B)

    @property
    def M(self):
        return len(self.u)

    def to_dict(self):
        return {"B": self.B, "M": self.M, "u": list(self.u), "diversity_product": diversity_product(self)}

    @classmethod
    def from_dict(cls, d):
        f = cls(tuple(d["u"]), d["B"])
        if "M" in d and int(d["M"]) != f.M:
            raise ParameterError(f"M = {d['M']} does not match {f.M} factors")
        return f

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _check_M(factors, M):
    if M is not None and M != factors.M:
        raise ParameterError(f"M = {M} but factors have length {factors.M}")


def root_of_unity(k, L):
    """``exp(2j*pi*k/L)`` for integer ``k``, exact at multiples of a quarter turn.

    The integer phase is split into a quadrant, applied as an exact
    multiplication by a power of ``1j``, and a residual angle below pi/2.
    """
    k = np.asarray(k) % L
    q, r = np.divmod(4 * k, L)
    z = np.exp(0.5j * np.pi * r / L)
    return np.select([q == 0, q == 1, q == 2], [z, 1j * z, -z], -1j * z)


def duc_matrix(b, factors, M=None):
    """The ``M x M`` diagonal unitary codeword for integer ``b``."""
    _check_M(factors, M)
    L = 2**factors.B
    if not 0 <= int(b) < L:
        raise ParameterError(f"b = {b} outside [0, {L})")
    return np.diag(root_of_unity(int(b) * np.asarray(factors.u), L))


def duc_codebook(factors):
    """All ``2**B`` DUC codewords as a :class:`Codebook` (``T == M``)."""
    if factors.B > MAX_DUC_BITS:
        raise CapacityError(f"B = {factors.B} exceeds {MAX_DUC_BITS}")
    L = 2**factors.B
    b = np.arange(L)[:, None]
    # exact integer phase index keeps the group structure free of drift
    diag = root_of_unity(b * np.asarray(factors.u), L)
    M = factors.M
    cw = np.zeros((L, M, M), dtype=complex)
    cw[:, np.arange(M), np.arange(M)] = diag
    return Codebook("DUC", cw, factors.B, M, M, {"u": list(factors.u)})


def diversity_products(U, B):
    """Diversity product of each row of the integer array ``U`` (C, M)."""
    U = np.atleast_2d(np.asarray(U, dtype=np.int64))
    L = 2**B
    M = U.shape[1]
    b = np.arange(1, L, dtype=np.int64)
    out = np.empty(len(U))
    for start in range(0, len(U), _CHUNK):
        chunk = U[start:start + _CHUNK]
        # reduce b*u mod L first so large products stay exact
        s = np.abs(np.sin(np.pi * ((b[None, :, None] * chunk[:, None, :]) % L) / L))
        out[start:start + _CHUNK] = np.min(np.prod(s, axis=2), axis=1) ** (1.0 / M)
    return out


def diversity_product(factors, M=None):
    """Worst-case geometric-mean sine product over nonzero indices."""
    _check_M(factors, M)
    return float(diversity_products([factors.u], factors.B)[0])


def count_feasible(B, M, first_is_one=False):
    """Number of non-decreasing factor vectors (optionally with ``u_1 == 1``)."""
    n = 2**B // 2
    if first_is_one:
        return math.comb(n + M - 2, M - 1) if M > 1 else 1
    return math.comb(n + M - 1, M)


def _best_of(U, products, best):
    # enumeration is in lexicographic order, so the first near-max wins ties
    top = products.max()
    if best is not None and top <= best[0] + _TIE_TOL:
        return best
    i = int(np.argmax(products >= top - _TIE_TOL))
    return float(products[i]), tuple(int(x) for x in U[i])


def _exhaustive(B, M):
    n = 2**B // 2
    best = None
    # Multiplying every factor by an odd unit mod 2**B permutes the nonzero
    # indices, and every useful vector has an odd factor, so u_1 = 1 loses
    # nothing, including the lexicographic tie-break.
    gen = (
        (1,) + rest for rest in itertools.combinations_with_replacement(range(1, n + 1), M - 1)
    )
    while True:
        rows = list(itertools.islice(gen, _CHUNK))
        if not rows:
            break
        U = np.array(rows, dtype=np.int64)
        best = _best_of(U, diversity_products(U, B), best)
    return best


def _coordinate_ascent(u, B, n):
    u = list(u)
    current = diversity_products([sorted(u)], B)[0]
    improved = True
    while improved:
        improved = False
        for m in range(len(u)):
            trial = np.tile(u, (n, 1))
            trial[:, m] = np.arange(1, n + 1)
            trial.sort(axis=1)
            p = diversity_products(trial, B)
            j = int(np.argmax(p))
            if p[j] > current + _TIE_TOL:
                current = p[j]
                u = list(trial[j])
                improved = True
    return float(current), tuple(sorted(int(x) for x in u))


def _randomized(B, M, restarts, seed):
    rng = np.random.default_rng(seed)
    n = 2**B // 2
    best = (diversity_products([[1] * M], B)[0], (1,) * M)
    for _ in range(restarts):
        start = np.sort(rng.integers(1, n + 1, size=M))
        start[0] = 1
        p, u = _coordinate_ascent(start, B, n)
        if p > best[0] + _TIE_TOL or (abs(p - best[0]) <= _TIE_TOL and u < best[1]):
            best = (p, u)
    return best


def optimize_factors(B, M, budget=EXHAUSTIVE_BUDGET, restarts=200, seed=0):
    """Factors maximising the diversity product.

    Exhaustive over the feasible set when it has at most ``budget``
    candidates (after fixing ``u_1 = 1``), otherwise ``restarts`` random
    starts refined by coordinate ascent with a fixed ``seed``. Ties go to
    the lexicographically smallest vector.
    """
    if B < 1 or M < 1:
        raise ParameterError("B and M must be positive")
    if B > MAX_DUC_BITS:
        raise CapacityError(f"B = {B} exceeds {MAX_DUC_BITS}")
    if count_feasible(B, M, first_is_one=True) <= budget:
        _, u = _exhaustive(B, M)
    else:
        _, u = _randomized(B, M, restarts, seed)
    return DucFactors(u, B)
