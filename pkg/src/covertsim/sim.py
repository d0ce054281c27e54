"""Experiment orchestration: BER sweeps, security and coding-gain sweeps,
and CSV output.

Monte Carlo frames are addressed by ``(master_seed, "frame", f)``. Every
random quantity of a frame (bits, channel, noise, shared secret) hangs
off that address, so results do not depend on how frames are grouped or
scheduled. Noise is drawn at unit variance and scaled per SNR point, so
all points of a sweep see the same frames (common random numbers), and
schemes with equal frame length see the same channels and bits.
"""
import csv
import dataclasses
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import __version__
from .analysis import (
    cmimo_coding_gain,
    coding_gain,
    ngs_effective_coding_gain,
    spatial_multiplexing_codebook,
    willie_error_lower_bound,
)
from .channel import sample_channel
from .cmimo import MAX_CODEBOOK_BITS, cmimo_encode_frame
from .codebook import bits_to_index, index_to_bits
from .detectors import (
    init_reference_estimate,
    noncoherent_detect_sequence,
    semi_blind_detect_chained,
)
from .duc import MAX_DUC_BITS, DucFactors, duc_codebook, optimize_factors
from .ngs import build_frame, frame_length_for_overhead, gen_reference_matrix
from .numerics import ParameterError, derive_stream, sample_complex_gaussian

__all__ = [
    "ConfigError",
    "SystemParams",
    "BerRecord",
    "SCHEMES",
    "run_ber_experiment",
    "run_security_sweep",
    "run_coding_gain_sweep",
    "emit_csv",
    "write_sidecar",
    "load_params",
    "resolve_seed",
    "BER_FIELDS",
    "SECURITY_FIELDS",
    "CODING_GAIN_FIELDS",
]

log = logging.getLogger(__name__)

SCHEMES = ("NGS", "CMIMO_SEMIBLIND", "NGS_PERFECT_CSI")
CHUNK_FRAMES = 50
SEED_ENV = "COVERTSIM_SEED"

BER_FIELDS = ("scheme", "snr_db", "frames", "bits_total", "bit_errors", "ber", "ci_low", "ci_high")
SECURITY_FIELDS = ("snr_db", "M", "kl", "xi_min", "xi_min_clamped")
CODING_GAIN_FIELDS = ("scheme", "M", "gain", "trials")


class ConfigError(ParameterError):
    """An experiment definition violates a parameter constraint."""


@dataclass
class SystemParams:
    scheme: str = "NGS"
    M: int = 2
    N: int = 64
    T: int = 1
    B: int = 2
    K: int = 1
    W: int = None
    overhead_target: float = None
    snr_db_grid: list = field(default_factory=lambda: [-20.0, -15.0, -10.0, -5.0, 0.0])
    alpha: float = 0.8
    I_max: int = 5
    frames: int = 1000
    master_seed: int = None
    Ns: int = 100
    duc_u: list = None

    def __post_init__(self):
        self.snr_db_grid = [float(s) for s in self.snr_db_grid]
        if self.duc_u is not None:
            self.duc_u = [int(x) for x in self.duc_u]
        self.validate()

    def validate(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        for name in ("M", "N", "T", "B", "K", "I_max", "frames", "Ns"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not self.snr_db_grid:
            raise ConfigError("snr_db_grid must not be empty")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.W is None and self.overhead_target is None:
            raise ConfigError("set W or overhead_target")
        if self.W is not None and (not isinstance(self.W, int) or self.W < 1):
            raise ConfigError(f"W must be a positive integer, got {self.W!r}")
        if self.overhead_target is not None:
            if not 0 < self.overhead_target < 1:
                raise ConfigError("overhead_target must lie in (0, 1)")
            derived = frame_length_for_overhead(self.M, self.K, self.T, self.overhead_target)
            if self.W is not None and self.W != derived:
                raise ConfigError(
                    f"W = {self.W} disagrees with overhead_target {self.overhead_target} (needs W = {derived})"
                )
        if self.scheme == "CMIMO_SEMIBLIND":
            if self.B != self.M * self.T:
                raise ConfigError(f"C-MIMO needs B == M*T, got B={self.B}, M*T={self.M * self.T}")
            if self.B > MAX_CODEBOOK_BITS:
                raise ConfigError(f"B = {self.B} exceeds the C-MIMO enumeration guard")
            if self.frame_length * self.T < self.M:
                raise ConfigError("semi-blind detection needs W*T >= M")
        elif self.B > MAX_DUC_BITS:
            raise ConfigError(f"B = {self.B} exceeds the DUC enumeration guard")
        if self.duc_u is not None:
            try:
                DucFactors(tuple(self.duc_u), self.B)
            except ParameterError as exc:
                raise ConfigError(str(exc)) from None
            if len(self.duc_u) != self.M:
                raise ConfigError("duc_u needs M entries")
        if self.master_seed is not None and not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")

    @property
    def frame_length(self):
        if self.W is not None:
            return self.W
        return frame_length_for_overhead(self.M, self.K, self.T, self.overhead_target)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad config value: {exc}") from None

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def load_params(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return SystemParams.from_dict(d)


def resolve_seed(seed=None):
    """Explicit seed, else ``$COVERTSIM_SEED``, else 0."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
    return 0


@dataclass
class BerRecord:
    scheme: str
    snr_db: float
    frames: int
    bits_total: int
    bit_errors: int
    ber: float
    ci_low: float
    ci_high: float
    seconds: float = 0.0

    @classmethod
    def from_counts(cls, scheme, snr_db, frames, bits_total, bit_errors, seconds=0.0):
        ci = stats.binomtest(int(bit_errors), int(bits_total)).proportion_ci(0.95, method="wilson")
        return cls(scheme, float(snr_db), int(frames), int(bits_total), int(bit_errors),
                   bit_errors / bits_total, float(ci.low), float(ci.high), float(seconds))


def _codebook_for(params):
    if params.scheme == "CMIMO_SEMIBLIND":
        return None
    u = params.duc_u if params.duc_u is not None else optimize_factors(params.B, params.M).u
    return duc_codebook(DucFactors(tuple(u), params.B))


def frame_material(params, f, codebook=None):
    """Everything random about frame ``f``, before noise scaling."""
    M, N, T, B, K = params.M, params.N, params.T, params.B, params.K
    W = params.frame_length
    root = derive_stream(params.master_seed, "frame", f)
    bits = root.child("bits").generator.integers(0, 2, size=(W, B), dtype=np.int8)
    tx = bits_to_index(bits)
    H = sample_channel(root.child("channel"), N, M).H
    noise = root.child("noise")
    V0 = sample_complex_gaussian(noise.child("ref"), N, K * M)
    Vd = sample_complex_gaussian(noise.child("data"), N, T, batch=(W,))
    secret = root.child("secret")
    mat = {"tx": tx, "H": H, "V0": V0, "Vd": Vd}
    if params.scheme == "CMIMO_SEMIBLIND":
        G = gen_reference_matrix(secret, M, K)
        u = np.clip(secret.child("key").generator.random(2), np.finfo(float).tiny, None)
        c0 = complex(u[0], u[1])
        S = cmimo_encode_frame(tx, c0, M, T, params.Ns)[0]
        mat["c0"] = np.asarray(c0)
    else:
        codebook = codebook or _codebook_for(params)
        frame = build_frame(bits, codebook, secret, K, T)
        G = frame.G
        S = np.stack(frame.S[1:]) if W else np.zeros((0, M, T), dtype=complex)
        mat["E"] = frame.E
    mat["G"] = G
    mat["HS0"] = H @ G
    mat["HSd"] = H @ S
    return mat


def _stack(mats):
    return {k: np.stack([m[k] for m in mats]) for k in mats[0]}


def _decode_ngs(params, batch, Y0, Yd, codebook):
    return noncoherent_detect_sequence(Y0, Yd, batch["G"], batch["E"], codebook, params.alpha).indices


def _decode_perfect(params, batch, Y0, Yd, codebook):
    # the noncoherent detector started from the true channel instead of Y(0) G^+
    return noncoherent_detect_sequence(Y0, Yd, batch["G"], batch["E"], codebook, params.alpha,
                                       Y_hat0=batch["H"]).indices


def _decode_cmimo(params, batch, Y0, Yd, codebook):
    H0 = init_reference_estimate(Y0, batch["G"])
    F, W, N, T = Yd.shape
    Y_bar = np.swapaxes(Yd, 1, 2).reshape(F, N, W * T)
    M = params.M
    return semi_blind_detect_chained(Y_bar, H0, batch["c0"], M, T, params.I_max, params.Ns).indices


DECODERS = {
    "NGS": _decode_ngs,
    "NGS_PERFECT_CSI": _decode_perfect,
    "CMIMO_SEMIBLIND": _decode_cmimo,
}


def _simulate_chunk(params, frame_ids):
    """Bit-error counts per SNR point and decode seconds for the given frames."""
    codebook = _codebook_for(params)
    t0 = time.perf_counter()
    batch = _stack([frame_material(params, f, codebook) for f in frame_ids])
    setup = time.perf_counter() - t0
    n_snr = len(params.snr_db_grid)
    errors = np.zeros(n_snr, dtype=np.int64)
    seconds = np.full(n_snr, setup / n_snr)
    decode = DECODERS[params.scheme]
    for j, snr in enumerate(params.snr_db_grid):
        t0 = time.perf_counter()
        sigma = math.sqrt(10.0 ** (-snr / 10.0))
        Y0 = batch["HS0"] + sigma * batch["V0"]
        Yd = batch["HSd"] + sigma * batch["Vd"]
        if params.frame_length:
            est = decode(params, batch, Y0, Yd, codebook)
            diff = np.bitwise_xor(est, batch["tx"])
            errors[j] = int(index_to_bits(diff, params.B).sum())
        seconds[j] += time.perf_counter() - t0
    return errors, seconds


def _chunks(frames, size=CHUNK_FRAMES):
    return [range(s, min(s + size, frames)) for s in range(0, frames, size)]


def run_ber_experiment(params, workers=1, progress=None):
    """Monte Carlo BER for every SNR point of ``params``.

    Parameters
    ----------
    params : SystemParams
    workers : int
        Worker processes; 1 runs in-process. Output does not depend on it.
    progress : callable, optional
        Called as ``progress(done_frames, total_frames)`` after each chunk.

    Returns
    -------
    list of BerRecord, one per SNR point, in grid order.
    """
    if params.master_seed is None:
        params = params.replace(master_seed=resolve_seed())
    params.validate()
    chunks = _chunks(params.frames)
    n_snr = len(params.snr_db_grid)
    errors = np.zeros(n_snr, dtype=np.int64)
    seconds = np.zeros(n_snr)
    done = 0
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_simulate_chunk, [params] * len(chunks), chunks)
            for chunk, (e, s) in zip(chunks, results):
                errors += e
                seconds += s
                done += len(chunk)
                if progress:
                    progress(done, params.frames)
    else:
        for chunk in chunks:
            e, s = _simulate_chunk(params, chunk)
            errors += e
            seconds += s
            done += len(chunk)
            if progress:
                progress(done, params.frames)
    bits_total = params.frames * params.frame_length * params.B
    records = []
    for j, snr in enumerate(params.snr_db_grid):
        rec = BerRecord.from_counts(params.scheme, snr, params.frames, bits_total, errors[j], seconds[j])
        log.info("%s K=%d SNR %+.1f dB: BER %.3e (%d/%d)", params.scheme, params.K, snr,
                 rec.ber, rec.bit_errors, rec.bits_total)
        records.append(rec)
    return records


def run_security_sweep(M_list, snr_grid):
    """Willie's error bound for every ``(M, SNR)`` pair, M-major."""
    if not len(M_list) or not len(snr_grid):
        raise ParameterError("M_list and snr_grid must be non-empty")
    return [willie_error_lower_bound(s, M) for M in M_list for s in snr_grid]


def run_coding_gain_sweep(M_range, trials=10_000, keys=100, seed=0, budget=None):
    """Coding gains with ``B = M``, ``N = 1``, ``T = 1``.

    For each M this yields three rows: the NGS effective gain (median over
    ``trials`` projections), C-MIMO (median over ``keys`` chaos keys) and
    uncoded BPSK spatial multiplexing as the reference.
    """
    rows = []
    for M in M_range:
        kwargs = {} if budget is None else {"budget": budget}
        factors = optimize_factors(M, M, **kwargs)
        cb = duc_codebook(factors)
        ngs = ngs_effective_coding_gain(cb, M, trials, derive_stream(seed, "cg-proj", M))
        cm = cmimo_coding_gain(M, keys, derive_stream(seed, "cg-keys", M))
        sm = coding_gain(spatial_multiplexing_codebook(M))
        rows.append({"scheme": "NGS", "M": M, "gain": ngs, "trials": trials})
        rows.append({"scheme": "CMIMO", "M": M, "gain": cm, "trials": keys})
        rows.append({"scheme": "SM", "M": M, "gain": sm, "trials": 1})
        log.info("M=%d u=%s: NGS %.4f, C-MIMO %.4f, SM %.4f", M, factors.u, ngs, cm, sm)
    return rows


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def emit_csv(records, path, fields=None):
    """Write records (dataclasses or dicts) as UTF-8 CSV with a header row.

    Floats use 17 significant digits. ``fields`` selects and orders the
    columns; it is required when ``records`` is empty.
    """
    rows = []
    for r in records:
        if hasattr(r, "as_row"):
            r = r.as_row()
        elif dataclasses.is_dataclass(r):
            r = dataclasses.asdict(r)
        rows.append(r)
    if fields is None:
        if not rows:
            raise ParameterError("fields are required to write an empty CSV")
        fields = list(rows[0])
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for r in rows:
                w.writerow([_fmt(r[k]) for k in fields])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def write_sidecar(path, params, **extra):
    """JSON sidecar with the experiment parameters and tool version."""
    payload = {"tool": "covertsim", "version": __version__, "params": params}
    payload.update(extra)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
