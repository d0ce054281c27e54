"""Shared numerical plumbing: addressable random streams, complex Gaussian
sampling and the small-matrix pseudo-inverse used by every receiver.

Matrices are plain complex128 numpy arrays. Functions that operate on a
single matrix also accept stacks with leading batch dimensions.
"""
import zlib

import numpy as np

__all__ = [
    "ParameterError",
    "CapacityError",
    "SingularMatrixError",
    "RandomStream",
    "derive_stream",
    "sample_complex_gaussian",
    "pseudo_inverse",
    "hermitian",
    "db_to_noise_variance",
    "noise_variance_to_db",
]

# Condition-number ceiling for A A^H before we call it singular.
MAX_CONDITION = 1e12


class ParameterError(ValueError):
    """Raised when an argument violates an operation's precondition."""


class CapacityError(ParameterError):
    """Raised when an enumeration would exceed its size guard."""


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a Gram matrix is too ill-conditioned to invert."""


def _label_word(label):
    return zlib.crc32(label.encode("utf-8"))


class RandomStream:
    """A reproducible random stream addressed by ``(master_seed, path)``.

    The path is a sequence of ``(label, index)`` pairs. Streams are backed
    by the counter-based Philox generator seeded through ``SeedSequence``,
    so the same address yields the same draws on every platform and no
    two addresses share state.

    Drawing from :attr:`generator` advances this stream only; deriving a
    child with :meth:`child` never consumes draws from the parent.
    """

    def __init__(self, master_seed, path=()):
        master_seed = int(master_seed)
        if master_seed < 0 or master_seed >= 2**64:
            raise ParameterError("master_seed must be an unsigned 64-bit integer")
        for _, index in path:
            if int(index) < 0:
                raise ParameterError("stream index must be non-negative")
        self.master_seed = master_seed
        self.path = tuple((str(label), int(index)) for label, index in path)
        key = []
        for label, index in self.path:
            key.extend((_label_word(label), index))
        seq = np.random.SeedSequence(master_seed, spawn_key=tuple(key))
        self.generator = np.random.Generator(np.random.Philox(seq))

    def child(self, label, index=0):
        """Return the independent sub-stream at ``path + (label, index)``."""
        return RandomStream(self.master_seed, self.path + ((label, index),))

    def fresh(self):
        """Return a new stream at the same address, rewound to its start."""
        return RandomStream(self.master_seed, self.path)

    @property
    def label(self):
        return self.path[-1][0] if self.path else ""

    @property
    def index(self):
        return self.path[-1][1] if self.path else 0

    def __repr__(self):
        return f"RandomStream(master_seed={self.master_seed}, path={self.path!r})"


def derive_stream(master_seed, label, index=0):
    """Return the stream addressed by ``(master_seed, label, index)``."""
    return RandomStream(master_seed, ((label, index),))


def sample_complex_gaussian(stream, rows, cols, variance=1.0, batch=()):
    """Draw a ``rows x cols`` matrix of i.i.d. CN(0, variance) entries.

    Real and imaginary parts are independent zero-mean normals with
    variance ``variance / 2`` each. ``batch`` prepends leading dimensions.
    """
    if not variance > 0:
        raise ParameterError(f"variance must be positive, got {variance}")
    shape = tuple(batch) + (int(rows), int(cols))
    parts = stream.generator.standard_normal(shape + (2,))
    scale = np.sqrt(variance / 2.0)
    return scale * (parts[..., 0] + 1j * parts[..., 1])


def hermitian(A):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(A, -1, -2))


def pseudo_inverse(A, max_condition=MAX_CONDITION):
    """Right pseudo-inverse ``A^H (A A^H)^{-1}`` of a full-row-rank matrix.

    Parameters
    ----------
    A : ndarray, shape (..., r, c) with r <= c
    max_condition : float
        Largest acceptable 2-norm condition number of ``A A^H``.

    Returns
    -------
    ndarray, shape (..., c, r)

    Raises
    ------
    SingularMatrixError
        If any ``A A^H`` in the stack is rank deficient.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim < 2:
        raise ParameterError("pseudo_inverse expects a matrix")
    rows, cols = A.shape[-2:]
    if rows > cols:
        raise ParameterError(f"need rows <= cols for a right inverse, got {rows}x{cols}")
    gram = A @ hermitian(A)
    cond = np.linalg.cond(gram)
    if not np.all(np.isfinite(cond)) or np.any(cond > max_condition):
        raise SingularMatrixError("A A^H is singular to working precision")
    # gram is Hermitian, so (gram^{-1} A)^H == A^H gram^{-1}
    return hermitian(np.linalg.solve(gram, A))


def db_to_noise_variance(snr_db):
    """Noise variance for a unit-power signal at ``snr_db`` (10 log10 scale)."""
    return 10.0 ** (-np.asarray(snr_db, dtype=float) / 10.0)


def noise_variance_to_db(noise_variance):
    return -10.0 * np.log10(noise_variance)
