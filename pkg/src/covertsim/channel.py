"""Quasi-static Rayleigh block fading with additive white Gaussian noise."""
from dataclasses import dataclass

import numpy as np

from .numerics import ParameterError, db_to_noise_variance, sample_complex_gaussian

__all__ = ["ChannelRealization", "sample_channel", "transmit"]


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    H: np.ndarray
    noise_variance: float = 1.0
    quasi_static: bool = True

    @property
    def snr_db(self):
        return float(-10.0 * np.log10(self.noise_variance))

    @classmethod
    def at_snr(cls, H, snr_db):
        return cls(H, float(db_to_noise_variance(snr_db)))


def sample_channel(stream, N, M, noise_variance=1.0):
    """Draw one N x M channel with i.i.d. CN(0, 1) taps, held for a frame."""
    if N < 1 or M < 1:
        raise ParameterError("N and M must be positive")
    return ChannelRealization(sample_complex_gaussian(stream, N, M, 1.0), noise_variance)


def transmit(H, S, stream, noise_variance):
    """Return ``Y = H S + V`` with V i.i.d. CN(0, noise_variance).

    The noise is drawn as unit-variance samples scaled by the standard
    deviation, so one stream used at several noise levels produces the
    same noise shape at every level. ``noise_variance == 0`` skips the
    draw and returns ``H S`` exactly.
    """
    H = np.asarray(H)
    S = np.asarray(S)
    if H.shape[-1] != S.shape[-2]:
        raise ParameterError(f"cannot apply a {H.shape} channel to a {S.shape} block")
    if noise_variance < 0:
        raise ParameterError("noise variance must be non-negative")
    Y = H @ S
    if noise_variance == 0:
        return Y
    V = sample_complex_gaussian(stream, Y.shape[-2], Y.shape[-1], 1.0, batch=Y.shape[:-2])
    return Y + np.sqrt(noise_variance) * V
