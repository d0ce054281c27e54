import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import diversity_product as scalar_product
from oracles import duc_brute_force
from covertsim.duc import (
    DucFactors,
    count_feasible,
    diversity_product,
    diversity_products,
    duc_codebook,
    duc_matrix,
    optimize_factors,
    root_of_unity,
)
from covertsim.numerics import CapacityError, ParameterError

S45 = math.sin(math.pi / 4)


@st.composite
def factors(draw, max_B=6, max_M=4):
    B = draw(st.integers(1, max_B))
    M = draw(st.integers(1, max_M))
    u = sorted(draw(st.lists(st.integers(1, 2**B // 2), min_size=M, max_size=M)))
    return DucFactors(tuple(u), B)


class TestFactors:
    @pytest.mark.parametrize("u,B", [((0,), 2), ((2, 1), 2), ((3,), 2), ((), 2), ((1,), 0)])
    def test_infeasible(self, u, B):
        with pytest.raises(ParameterError):
            DucFactors(u, B)

    def test_json_round_trip(self, tmp_path):
        f = DucFactors((1, 3, 5, 7), 4)
        f.to_json(tmp_path / "f.json")
        back = DucFactors.from_json(tmp_path / "f.json")
        assert back == f
        d = f.to_dict()
        assert set(d) == {"B", "M", "u", "diversity_product"}
        assert d["diversity_product"] == pytest.approx(diversity_product(f))

    def test_from_dict_checks_M(self):
        with pytest.raises(ParameterError):
            DucFactors.from_dict({"B": 2, "M": 3, "u": [1, 1]})


class TestRootOfUnity:
    def test_quarter_turns_exact(self):
        assert root_of_unity(np.arange(8), 4).tolist() == [1, 1j, -1, -1j] * 2

    @given(B=st.integers(1, 12), k=st.integers(-5000, 5000))
    def test_matches_exp(self, B, k):
        L = 2**B
        assert abs(root_of_unity(k, L) - np.exp(2j * np.pi * (k % L) / L)) < 1e-15


class TestMatrix:
    def test_zero_is_identity(self):
        assert np.allclose(duc_matrix(0, DucFactors((1, 3, 5), 4)), np.eye(3))

    def test_qpsk_step(self):
        assert duc_matrix(1, DucFactors((1,), 2)) == pytest.approx(np.array([[1j]]))

    def test_half_turn(self):
        assert np.allclose(duc_matrix(2, DucFactors((1, 1), 2)), -np.eye(2))

    @pytest.mark.parametrize("b", [-1, 4])
    def test_range(self, b):
        with pytest.raises(ParameterError):
            duc_matrix(b, DucFactors((1,), 2))

    def test_M_mismatch(self):
        with pytest.raises(ParameterError):
            duc_matrix(1, DucFactors((1,), 2), M=2)

    @given(f=factors(), data=st.data())
    def test_unitary_diagonal(self, f, data):
        X = duc_matrix(data.draw(st.integers(0, 2**f.B - 1)), f)
        assert np.linalg.norm(X.conj().T @ X - np.eye(f.M)) < 1e-12
        assert np.count_nonzero(X - np.diag(np.diag(X))) == 0

    @given(f=factors(), data=st.data())
    def test_group_closure(self, f, data):
        L = 2**f.B
        b1, b2 = data.draw(st.integers(0, L - 1)), data.draw(st.integers(0, L - 1))
        lhs = duc_matrix(b1, f) @ duc_matrix(b2, f)
        assert np.linalg.norm(lhs - duc_matrix((b1 + b2) % L, f)) < 1e-12

    @given(B=st.integers(1, 8), data=st.data())
    def test_psk_reduction(self, B, data):
        b = data.draw(st.integers(0, 2**B - 1))
        assert duc_matrix(b, DucFactors((1,), B))[0, 0] == pytest.approx(np.exp(2j * np.pi * b / 2**B))

    def test_codebook_matches_matrices(self):
        f = DucFactors((1, 3, 7), 4)
        cb = duc_codebook(f)
        assert cb.scheme == "DUC" and cb.T == 3 and len(cb) == 16
        for b in range(16):
            assert np.allclose(cb[b], duc_matrix(b, f), atol=1e-13)

    def test_codebook_guard(self):
        with pytest.raises(CapacityError):
            duc_codebook(DucFactors((1,), 17))


class TestDiversity:
    def test_qpsk(self):
        assert diversity_product(DucFactors((1,), 2)) == pytest.approx(S45, abs=1e-12)

    def test_zero_factor(self):
        assert diversity_product(DucFactors((1, 2), 2)) == pytest.approx(0.0, abs=1e-15)

    def test_pair(self):
        assert diversity_product(DucFactors((1, 1), 2)) == pytest.approx(S45, abs=1e-12)

    @given(factors())
    def test_range_and_scalar_formula(self, f):
        want = scalar_product(f.u, f.B)
        got = diversity_product(f)
        assert 0 <= got <= 1
        assert got == pytest.approx(want, abs=1e-12)

    def test_batched(self):
        U = [[1, 1], [1, 2], [1, 3], [2, 3]]
        got = diversity_products(U, 3)
        for row, p in zip(U, got):
            assert p == pytest.approx(diversity_product(DucFactors(tuple(row), 3)))


class TestOptimize:
    def test_singleton(self):
        f = optimize_factors(1, 1)
        assert f.u == (1,) and diversity_product(f) == pytest.approx(1.0)

    def test_two_by_two(self):
        f = optimize_factors(2, 2)
        assert f.u == (1, 1) and diversity_product(f) == pytest.approx(S45)

    @pytest.mark.parametrize("BM", [1, 2, 3, 4])
    def test_matches_duc_brute_force(self, BM):
        p, u = duc_brute_force(BM, BM)
        f = optimize_factors(BM, BM)
        assert f.u == u
        assert diversity_product(f) == pytest.approx(p, abs=1e-12)

    @pytest.mark.parametrize("B,M", [(3, 2), (5, 2), (4, 3)])
    def test_matches_brute_force_off_diagonal(self, B, M):
        assert optimize_factors(B, M).u == duc_brute_force(B, M)[1]

    def test_dominates_random(self):
        best = diversity_product(optimize_factors(4, 4))
        rng = np.random.default_rng(0)
        U = np.sort(rng.integers(1, 9, size=(100, 4)), axis=1)
        assert np.all(best >= diversity_products(U, 4) - 1e-12)

    def test_randomised_fallback(self):
        f = optimize_factors(6, 3, budget=10)
        assert diversity_product(f) >= diversity_product(DucFactors((1, 1, 1), 6))
        assert f == optimize_factors(6, 3, budget=10)
        # coordinate ascent reaches the optimum on this small instance
        assert diversity_product(f) == pytest.approx(diversity_product(optimize_factors(6, 3)), abs=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(B=st.integers(1, 6), M=st.integers(1, 4))
    def test_feasible_and_not_worse_than_ones(self, B, M):
        f = optimize_factors(B, M)
        assert f.M == M and f.B == B
        assert diversity_product(f) >= diversity_product(DucFactors((1,) * M, B)) - 1e-12

    def test_count_feasible(self):
        assert count_feasible(2, 2) == 3
        assert count_feasible(4, 4, first_is_one=True) == math.comb(10, 3)
        n = sum(1 for _ in itertools.combinations_with_replacement(range(1, 5), 3))
        assert count_feasible(3, 3) == n

    @pytest.mark.parametrize("B,M", [(0, 1), (1, 0)])
    def test_bad_args(self, B, M):
        with pytest.raises(ParameterError):
            optimize_factors(B, M)
