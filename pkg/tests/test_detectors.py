import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covertsim.cmimo import cmimo_codewords, cmimo_encode_frame
from covertsim.codebook import Codebook
from covertsim.detectors import (
    DetectorState,
    coherent_ml,
    count_bit_errors,
    decode_frame_noncoherent,
    init_reference_estimate,
    ml_objectives,
    noncoherent_detect_sequence,
    noncoherent_detect_step,
    perfect_csi_detect,
    semi_blind_detect,
    semi_blind_detect_chained,
)
from covertsim.duc import DucFactors, duc_codebook
from covertsim.ngs import build_frame, gen_reference_matrix
from covertsim.numerics import ParameterError, derive_stream, sample_complex_gaussian

QPSK2 = duc_codebook(DucFactors((1, 1), 2))


def cn(seed, *shape, var=1.0):
    return sample_complex_gaussian(derive_stream(seed, "t"), shape[-2], shape[-1], var, batch=shape[:-2])


def random_keys(seed, n):
    u = derive_stream(seed, "keys").generator.random((n, 2))
    return u[:, 0] + 1j * u[:, 1]


def ngs_frames(seed, F, W, K, sigma2, codebook=QPSK2, N=8):
    """Simulated NGS frames: (indices, Y0, Yd, H, secrets)."""
    M = codebook.M
    rng = np.random.default_rng(seed)
    out = []
    for f in range(F):
        sec = derive_stream(seed, "secret", f)
        bits = rng.integers(0, 2, (W, codebook.B))
        fr = build_frame(bits, codebook, sec, K)
        H = cn(seed * 1000 + f, N, M)
        Y0 = H @ fr.G + np.sqrt(sigma2) * cn(seed * 1000 + f + 500_000, N, K * M)
        S = np.stack(fr.S[1:])
        Yd = H @ S + np.sqrt(sigma2) * cn(seed * 1000 + f + 900_000, W, N, 1)
        out.append((fr, Y0, Yd, H, sec))
    return out


class TestCoherentML:
    def test_noiseless(self):
        cb = cmimo_codewords(0.3 + 0.4j, 2, 2)
        H = cn(1, 8, 2)
        for k in range(16):
            idx, obj = coherent_ml(H @ cb[k], H, cb, return_objective=True)
            assert idx == k and obj == pytest.approx(0.0, abs=1e-20)

    def test_single_codeword(self):
        cb = np.ones((1, 2, 1), complex)
        assert coherent_ml(cn(2, 4, 1), cn(3, 4, 2), cb) == 0

    def test_empty(self):
        with pytest.raises(ParameterError):
            coherent_ml(np.ones((4, 1)), np.ones((4, 2)), np.zeros((0, 2, 1)))

    def test_tie_lowest_index(self):
        cb = np.array([[[1.0]], [[1.0]], [[-1.0]]], dtype=complex)
        assert coherent_ml(np.array([[1.0]]), np.array([[1.0]]), cb) == 0

    def test_batched_matches_loop(self):
        cb = cmimo_codewords(random_keys(4, 6), 2, 1)
        Y, H = cn(5, 6, 8, 1), cn(6, 6, 8, 2)
        idx = coherent_ml(Y, H, cb)
        for f in range(6):
            assert idx[f] == coherent_ml(Y[f], H[f], cb[f])

    def test_cmimo_perfect_csi_20db(self):
        F, sigma2 = 1000, 0.01
        cw = cmimo_codewords(random_keys(7, F), 2, 1)
        tx = np.random.default_rng(7).integers(0, 4, F)
        H = cn(8, F, 8, 2)
        Y = H @ cw[np.arange(F), tx] + np.sqrt(sigma2) * cn(9, F, 8, 1)
        ber = count_bit_errors(coherent_ml(Y, H, cw), tx, 2) / (2 * F)
        assert ber < 1e-2

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), scale=st.floats(1e-3, 1e3))
    def test_scale_invariance(self, seed, scale):
        cb = cmimo_codewords(0.3 + 0.4j, 2, 1)
        Y, H = cn(seed, 8, 1), cn(seed + 1, 8, 2)
        a = ml_objectives(Y, H, cb)
        b = ml_objectives(scale * Y, scale * H, cb)
        assert np.allclose(b, scale**2 * a)
        assert coherent_ml(Y, H, cb) == coherent_ml(scale * Y, scale * H, cb)

    def test_bit_errors(self):
        assert count_bit_errors([0, 3], [3, 3], 2) == 2
        assert count_bit_errors([5], [2], 3) == 3


class TestSemiBlind:
    def setup_frame(self, seed, W=20, sigma2=0.0, N=8):
        cw = cmimo_codewords(random_keys(seed, W), 2, 1)  # independent codebook per block
        tx = np.random.default_rng(seed).integers(0, 4, W)
        S = cw[np.arange(W), tx]
        H = cn(seed, N, 2)
        Y_bar = np.concatenate(list(H @ S), axis=1) + np.sqrt(sigma2) * cn(seed + 1, N, W)
        return cw, tx, H, Y_bar

    def test_reduces_to_coherent(self):
        cw, tx, H, Y_bar = self.setup_frame(1, sigma2=0.5)
        res = semi_blind_detect(Y_bar, H, cw, I_max=1)
        blocks = Y_bar.T[:, :, None]
        assert np.array_equal(res.indices, coherent_ml(blocks, H, cw))

    def test_noiseless(self):
        cw, tx, H, Y_bar = self.setup_frame(2)
        res = semi_blind_detect(Y_bar, H, cw, I_max=5)
        assert np.array_equal(res.indices, tx)
        assert np.linalg.norm(res.estimates["H_hat"] - H) < 1e-9
        assert not res.degenerate

    def test_shared_codebook(self):
        cb = cmimo_codewords(0.3 + 0.4j, 2, 1)
        tx = np.arange(12) % 4
        H = cn(3, 8, 2)
        Y_bar = np.concatenate(list(H @ cb[tx]), axis=1)
        assert np.array_equal(semi_blind_detect(Y_bar, H, cb, 3).indices, tx)

    def test_degenerate_fallback(self):
        # every block sends the same codeword, so the decided stack has rank one
        cb = np.array([[[1.0], [0.0]], [[0.0], [1.0]]], dtype=complex)
        H = cn(4, 4, 2)
        Y_bar = np.concatenate([H @ cb[0]] * 5, axis=1)
        res = semi_blind_detect(Y_bar, H, cb, I_max=3)
        assert res.degenerate
        assert np.array_equal(res.estimates["H_hat"], H)
        assert np.all(res.indices == 0)

    def test_needs_enough_columns(self):
        with pytest.raises(ParameterError):
            semi_blind_detect(np.ones((4, 1)), np.ones((4, 2)), np.ones((2, 2, 1)), 2)
        with pytest.raises(ParameterError):
            semi_blind_detect(np.ones((4, 4)), np.ones((4, 2)), np.ones((2, 2, 1)), 0)

    def test_iterations_help(self):
        # M=2, N=64, W=38, K=1 at -5 dB over 200 frames
        F, W, N, sigma2 = 200, 38, 64, 10 ** 0.5
        cw = cmimo_codewords(random_keys(10, F * W).reshape(F, W), 2, 1)
        tx = np.random.default_rng(10).integers(0, 4, (F, W))
        S = np.take_along_axis(cw, tx[..., None, None, None], axis=2)[:, :, 0]
        H = cn(11, F, N, 2)
        G = cn(12, F, 2, 2, var=0.5)
        Y0 = H @ G + np.sqrt(sigma2) * cn(13, F, N, 2)
        Yd = H[:, None] @ S + np.sqrt(sigma2) * cn(14, F, W, N, 1)
        Y_bar = np.swapaxes(Yd, 1, 2).reshape(F, N, W)
        H0 = init_reference_estimate(Y0, G)
        errs = [count_bit_errors(semi_blind_detect(Y_bar, H0, cw, I).indices, tx, 2) for I in (1, 5)]
        assert errs[1] <= errs[0]


class TestSemiBlindChained:
    def test_noiseless(self):
        F, W = 10, 30
        tx = np.random.default_rng(0).integers(0, 4, (F, W))
        keys = random_keys(1, F)
        S, _ = cmimo_encode_frame(tx, keys, 2, 1)
        H = cn(2, F, 8, 2)
        Y_bar = np.swapaxes(H[:, None] @ S, 1, 2).reshape(F, 8, W)
        res = semi_blind_detect_chained(Y_bar, H, keys, 2, 1, I_max=3)
        assert np.array_equal(res.indices, tx)
        assert np.allclose(res.estimates["H_hat"], H, atol=1e-9)

    def test_wrong_key_fails(self):
        tx = np.random.default_rng(3).integers(0, 4, 40)
        S, _ = cmimo_encode_frame(tx, 0.3 + 0.4j, 2, 1)
        H = cn(4, 8, 2)
        Y_bar = np.concatenate(list(H @ S), axis=1)
        res = semi_blind_detect_chained(Y_bar, H, 0.31 + 0.4j, 2, 1, I_max=1)
        assert count_bit_errors(res.indices, tx, 2) > 20

    def test_first_error_propagates(self):
        # a wrong decision on block 0 hands every later block the wrong codebook
        W = 30
        tx = np.zeros(W, dtype=int)
        S, _ = cmimo_encode_frame(tx, 0.3 + 0.4j, 2, 1)
        H = cn(5, 8, 2)
        Y_bar = np.concatenate(list(H @ S), axis=1)
        alt = cmimo_encode_frame([1], 0.3 + 0.4j, 2, 1)[0][0]
        Y_bar[:, :1] = H @ alt
        res = semi_blind_detect_chained(Y_bar, H, 0.3 + 0.4j, 2, 1, I_max=1)
        assert res.indices[0] == 1
        assert np.count_nonzero(res.indices[1:]) > 10


class TestReferenceEstimate:
    def test_noiseless(self):
        H, G = cn(1, 8, 2), cn(2, 2, 6, var=0.5)
        assert np.linalg.norm(init_reference_estimate(H @ G, G) - H) < 1e-10

    def test_identity_reference(self):
        Y0 = cn(3, 8, 2)
        assert np.allclose(init_reference_estimate(Y0, np.eye(2)), Y0)

    def test_more_repetitions_less_noise(self):
        err = {}
        for K in (1, 3):
            G = cn(4 + K, 1000, 2, 2 * K, var=0.5)
            H = cn(6, 1000, 8, 2)
            Y0 = H @ G + cn(7 + K, 1000, 8, 2 * K)
            err[K] = np.mean(np.sum(np.abs(init_reference_estimate(Y0, G) - H) ** 2, axis=(1, 2)))
        assert err[3] < err[1]


class TestNoncoherentStep:
    def test_noiseless_exact(self):
        H, St = cn(1, 8, 2), QPSK2[1] @ QPSK2[3]
        E = cn(2, 2, 1, var=0.5)
        Y = H @ St @ QPSK2[2] @ E
        idx, obj, state = noncoherent_detect_step(Y, DetectorState(H @ St), E, QPSK2)
        assert idx == 2 and obj == pytest.approx(0.0, abs=1e-20)
        assert np.linalg.norm(state.Y_hat - H @ St @ QPSK2[2]) < 1e-10

    def test_beta_from_alpha(self):
        assert DetectorState(np.zeros((2, 2)), 0.8).beta == pytest.approx(0.2)

    @pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
    def test_alpha_range(self, alpha):
        with pytest.raises(ParameterError):
            DetectorState(np.zeros((2, 2)), alpha)

    def test_update_formula(self):
        Y_hat, Y, E = cn(3, 8, 2), cn(4, 8, 1), cn(5, 2, 1, var=0.5)
        idx, _, state = noncoherent_detect_step(Y, DetectorState(Y_hat, 0.8), E, QPSK2)
        X = QPSK2[idx]
        want = 0.2 * Y @ E.conj().T + Y_hat @ X @ (np.eye(2) - 0.2 * E @ E.conj().T)
        assert np.allclose(state.Y_hat, want)

    def test_full_weight_with_identity_projection(self):
        # X = I, E = I and beta -> 1: the estimate collapses to Y(i)
        cb = Codebook("DUC", QPSK2.codewords, 2, 2, 2)
        Y = cn(6, 8, 2)
        _, _, state = noncoherent_detect_step(Y, DetectorState(Y, 1e-15), np.eye(2), cb)
        assert np.allclose(state.Y_hat, Y)

    def test_pure_prediction_limit(self):
        Y_hat, Y, E = cn(7, 8, 2), cn(8, 8, 1), cn(9, 2, 1, var=0.5)
        idx, _, state = noncoherent_detect_step(Y, DetectorState(Y_hat, 1 - 1e-15), E, QPSK2)
        assert np.allclose(state.Y_hat, Y_hat @ QPSK2[idx])


class TestNoncoherentFrames:
    def test_near_noiseless_decode(self):
        errors = 0
        for fr, Y0, Yd, H, sec in ngs_frames(1, 100, 20, 3, 1e-8):
            res = decode_frame_noncoherent(Y0, Yd, sec, QPSK2, K=3, tx_indices=fr.indices)
            errors += res.bit_errors
        assert errors == 0

    def test_empty_frame(self):
        res = decode_frame_noncoherent(np.ones((8, 2)), np.zeros((0, 8, 1)), derive_stream(0, "s"), QPSK2, 1)
        assert res.W == 0

    def test_long_noiseless_frame(self):
        cb = duc_codebook(DucFactors((1, 3), 4))
        (fr, Y0, Yd, H, sec), = ngs_frames(2, 1, 1000, 1, 0.0, codebook=cb)
        res = decode_frame_noncoherent(Y0, Yd, sec, cb, K=1, tx_indices=fr.indices)
        assert res.bit_errors == 0

    def test_batched_matches_single(self):
        frames = ngs_frames(3, 4, 15, 1, 0.3)
        Y0 = np.stack([f[1] for f in frames])
        Yd = np.stack([f[2] for f in frames])
        G = np.stack([f[0].G for f in frames])
        E = np.stack([f[0].E for f in frames])
        batch = noncoherent_detect_sequence(Y0, Yd, G, E, QPSK2).indices
        for k, (fr, y0, yd, H, sec) in enumerate(frames):
            assert np.array_equal(batch[k], decode_frame_noncoherent(y0, yd, sec, QPSK2, 1).indices)

    def test_wrong_seed_is_random(self):
        bits = errors = 0
        for fr, Y0, Yd, H, sec in ngs_frames(4, 100, 50, 1, 1e-4):
            wrong = derive_stream(999, "secret", int(bits))
            res = decode_frame_noncoherent(Y0, Yd, wrong, QPSK2, K=1, tx_indices=fr.indices)
            errors += res.bit_errors
            bits += 2 * fr.W
        assert bits == 10_000
        assert abs(errors / bits - 0.5) < 3 * np.sqrt(0.25 / bits)

    def test_perfect_reference_variant(self):
        # started from the true channel, the detector is exact without noise
        frames = ngs_frames(5, 20, 30, 1, 0.0)
        for fr, Y0, Yd, H, sec in frames:
            res = noncoherent_detect_sequence(Y0, Yd, fr.G, fr.E, QPSK2, Y_hat0=H)
            assert np.array_equal(res.indices, fr.indices)

    def test_coherent_bound_noiseless(self):
        for fr, Y0, Yd, H, sec in ngs_frames(6, 20, 30, 1, 0.0):
            res = perfect_csi_detect(Yd, H, fr.S_tilde[:-1], fr.E, QPSK2)
            assert np.array_equal(res.indices, fr.indices)

    def test_coherent_bound_is_lower(self):
        # the genie coherent detector never re-estimates, so it beats every noncoherent variant
        frames = ngs_frames(7, 100, 38, 1, 10.0, N=64)
        err = np.zeros(3)
        for fr, Y0, Yd, H, sec in frames:
            tx = fr.indices
            err[0] += count_bit_errors(perfect_csi_detect(Yd, H, fr.S_tilde[:-1], fr.E, QPSK2).indices, tx, 2)
            err[1] += count_bit_errors(
                noncoherent_detect_sequence(Y0, Yd, fr.G, fr.E, QPSK2, Y_hat0=H).indices, tx, 2)
            err[2] += count_bit_errors(noncoherent_detect_sequence(Y0, Yd, fr.G, fr.E, QPSK2).indices, tx, 2)
        assert err[0] < err[1] <= err[2]

    def test_reference_uses_shared_secret(self):
        sec = derive_stream(8, "secret")
        fr = build_frame(np.zeros((3, 2), int), QPSK2, sec, 2)
        assert np.array_equal(gen_reference_matrix(sec, 2, 2), fr.G)

