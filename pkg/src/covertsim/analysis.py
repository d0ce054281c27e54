"""Figures of merit: coding gain, Willie's detection-error bound,
decoder multiplication counts and Gaussianity diagnostics."""
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .cmimo import cmimo_codewords
from .codebook import Codebook, index_to_bits
from .numerics import ParameterError, db_to_noise_variance, hermitian, sample_complex_gaussian

__all__ = [
    "SecurityPoint",
    "ComplexityReport",
    "GaussianityReport",
    "coding_gain",
    "coding_gains",
    "ngs_effective_coding_gain",
    "cmimo_coding_gain",
    "spatial_multiplexing_codebook",
    "willie_error_lower_bound",
    "gaussian_kl",
    "complexity_counts",
    "gaussianity_diagnostics",
]


def coding_gains(codewords, N=1):
    """Coding gain of each codebook in a stack (..., C, M, T).

    For ``T == 1`` this is ``min_{p != q} ||S_p - S_q||^2 ** (1/N)``; for
    ``T > 1`` the squared norm is replaced by ``det((S_p-S_q)^H (S_p-S_q))``.
    """
    cw = np.asarray(codewords)
    C = cw.shape[-3]
    if C < 2:
        raise ParameterError("coding gain needs at least two codewords")
    p, q = np.triu_indices(C, 1)
    D = cw[..., p, :, :] - cw[..., q, :, :]
    if cw.shape[-1] == 1:
        d = np.sum(D.real**2 + D.imag**2, axis=(-2, -1))
    else:
        d = np.abs(np.linalg.det(hermitian(D) @ D))
    return np.min(d, axis=-1) ** (1.0 / N)


def coding_gain(codebook, N=1):
    cw = codebook.codewords if isinstance(codebook, Codebook) else codebook
    return float(coding_gains(cw, N))


def _duc_effective_gains(codewords, E, N):
    # DUC codewords form a cyclic group, so ||X_p E - X_q E||^2 depends only
    # on p - q: it is sum_m |x_{p-q,m} - 1|^2 |E_m|^2
    diag = np.diagonal(codewords[1:], axis1=-2, axis2=-1)  # (C-1, M)
    w = np.abs(diag - 1.0) ** 2
    power = np.abs(E[..., 0]) ** 2  # (trials, M)
    return np.min(power @ w.T, axis=-1) ** (1.0 / N)


def ngs_effective_coding_gain(duc_codebook, M=None, trials=10_000, stream=None, N=1, E=None):
    """Median coding gain of ``{X_b E}`` over random projections ``E``.

    ``E`` may be given explicitly as a (trials, M, 1) array; otherwise
    ``trials`` projections with CN(0, 1/M) entries are drawn from ``stream``.
    DUC codebooks take an exact shortcut that avoids forming all pairs.
    """
    M = duc_codebook.M if M is None else M
    if E is None:
        if stream is None:
            raise ParameterError("need a stream to draw projections")
        E = sample_complex_gaussian(stream, M, 1, 1.0 / M, batch=(trials,))
    E = np.asarray(E)
    if E.shape[-1] != 1:
        raise ParameterError("effective coding gain is defined for T = 1")
    X = duc_codebook.codewords
    if duc_codebook.scheme == "DUC":
        return float(np.median(_duc_effective_gains(X, E, N)))
    gains = [coding_gains(X[None] @ E[s:s + 256, None], N) for s in range(0, len(E), 256)]
    return float(np.median(np.concatenate(gains)))


def cmimo_coding_gain(M, keys=100, stream=None, N=1, Ns=100):
    """Median C-MIMO coding gain over random keys, with ``B = M`` and ``T = 1``."""
    u = stream.generator.random((keys, 2))
    u = np.clip(u, np.finfo(float).tiny, None)
    cw = cmimo_codewords(u[:, 0] + 1j * u[:, 1], M, 1, Ns)
    return float(np.median(coding_gains(cw, N)))


def spatial_multiplexing_codebook(M):
    """Uncoded BPSK on each of M antennas (``B = M``, ``T = 1``), unit total power."""
    bits = index_to_bits(np.arange(2**M), M)
    cw = (1.0 - 2.0 * bits)[..., None] / np.sqrt(M)
    return Codebook("SM", cw.astype(complex), M, M, 1)


@dataclass(frozen=True)
class SecurityPoint:
    snr_db: float
    M: int
    kl: float
    xi_min: float

    @property
    def xi_min_clamped(self):
        return max(0.0, self.xi_min)

    def as_row(self):
        row = asdict(self)
        row["xi_min_clamped"] = self.xi_min_clamped
        return row


def gaussian_kl(var1, var0):
    """``D(CN(0, var1) || CN(0, var0))``."""
    r = np.asarray(var1, dtype=float) / np.asarray(var0, dtype=float)
    return r - np.log(r) - 1.0


def willie_error_lower_bound(snr_db, M, signal_power=None):
    """Lower bound ``1 - sqrt(D/2)`` on Willie's detection error.

    Willie sees one complex sample per channel use: noise alone under H0,
    noise plus one antenna's Gaussian emission under H1. The emission
    power defaults to ``1/M`` (unit total power split over M antennas).
    """
    if M < 1:
        raise ParameterError("M must be positive")
    noise = float(db_to_noise_variance(snr_db))
    power = 1.0 / M if signal_power is None else float(signal_power)
    kl = float(gaussian_kl(power + noise, noise))
    return SecurityPoint(float(snr_db), int(M), kl, 1.0 - float(np.sqrt(kl / 2.0)))


@dataclass(frozen=True)
class ComplexityReport:
    C_c: float
    C_p: float
    ratio: float
    C_c_leading: float
    C_p_leading: float
    ratio_leading: float
    params: dict


def complexity_counts(M, N, T, B, W, I_max):
    """Real multiplications of the semi-blind and noncoherent decoders per frame.

    ``C_c``/``C_p`` include every printed term; the ``*_leading`` values
    keep only the dominant ML-search term, whose ratio is the
    ``~1/I_max`` scaling.
    """
    for name, v in (("M", M), ("N", N), ("T", T), ("B", B), ("W", W), ("I_max", I_max)):
        if v <= 0:
            raise ParameterError(f"{name} must be positive")
    L = 2.0**B
    c_lead = L * W * I_max * (4 * M * N * T + 4 * N * T)
    c_refit = M * W * (I_max - 1) * (8 * M * T + 4 * N / W + M**2 / W)
    p_lead = L * W * (4 * M * N * T + 4 * N * T + 4 * M * T)
    p_update = M * W * (8 * M * N + 4 * N * T + 4 * M * T)
    C_c = c_lead + c_refit
    C_p = p_lead + p_update
    return ComplexityReport(
        C_c=C_c,
        C_p=C_p,
        ratio=C_p / C_c,
        C_c_leading=c_lead,
        C_p_leading=p_lead,
        ratio_leading=p_lead / c_lead,
        params=dict(M=M, N=N, T=T, B=B, W=W, I_max=I_max),
    )


@dataclass(frozen=True)
class GaussianityReport:
    n: int
    mean: complex
    var_re: float
    var_im: float
    ks_re: float
    p_re: float
    ks_im: float
    p_im: float
    kurtosis_re: float
    kurtosis_im: float

    def passes(self, significance=0.01):
        return self.p_re > significance and self.p_im > significance


def gaussianity_diagnostics(samples, min_samples=1000):
    """KS and kurtosis checks of each part against a fitted zero-mean normal."""
    z = np.asarray(samples, dtype=complex).ravel()
    if z.size < min_samples:
        raise ParameterError(f"need at least {min_samples} samples, got {z.size}")
    out = {}
    for part, x in (("re", z.real), ("im", z.imag)):
        var = float(np.mean(x**2))
        res = stats.kstest(x, "norm", args=(0.0, np.sqrt(var)))
        out[part] = (var, float(res.statistic), float(res.pvalue), float(stats.kurtosis(x)))
    return GaussianityReport(
        n=int(z.size),
        mean=complex(np.mean(z)),
        var_re=out["re"][0],
        var_im=out["im"][0],
        ks_re=out["re"][1],
        p_re=out["re"][2],
        ks_im=out["im"][1],
        p_im=out["im"][2],
        kurtosis_re=out["re"][3],
        kurtosis_im=out["im"][3],
    )
