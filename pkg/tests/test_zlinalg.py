"""Tests for integer Hermite and Smith normal forms and lattice operations."""

from __future__ import annotations

import functools
import itertools
import math
import random

import pytest
from sympy import Matrix

from engelnq.zlinalg import (
    IntMatrix,
    _Echelon,
    _gcdex,
    hermite_rows,
    hnf,
    left_kernel,
    reduce_mod_lattice,
    right_kernel,
    saturation,
    snf,
    solve_in_lattice,
    vec_mul,
)


def _random_matrix(rng: random.Random, rows: int, cols: int, spread: int = 9) -> IntMatrix:
    return IntMatrix.from_rows(
        [[rng.randint(-spread, spread) for _ in range(cols)] for _ in range(rows)], cols
    )


def _is_hnf(h: IntMatrix, rank: int) -> bool:
    last = -1
    for i in range(h.rows):
        row = h.row(i)
        if i >= rank:
            if any(row):
                return False
            continue
        col = next(j for j, x in enumerate(row) if x)
        if col <= last or row[col] <= 0:
            return False
        for k in range(i):
            if not 0 <= h[k, col] < row[col]:
                return False
        last = col
    return True


class TestIntMatrix:
    def test_shape_checks(self) -> None:
        with pytest.raises(ValueError):
            IntMatrix(2, 2, (1, 2, 3))
        with pytest.raises(ValueError):
            IntMatrix.from_rows([[1, 2], [3]])

    def test_matmul_and_transpose(self) -> None:
        a = IntMatrix.from_rows([[1, 2], [3, 4]])
        assert (a @ IntMatrix.identity(2)) == a
        assert (a @ a).to_rows() == [[7, 10], [15, 22]]
        assert a.transpose().to_rows() == [[1, 3], [2, 4]]

    def test_vec_mul(self) -> None:
        a = IntMatrix.from_rows([[1, 2], [3, 4]])
        assert vec_mul([1, -1], a) == (-2, -2)

    def test_zero_helpers(self) -> None:
        z = IntMatrix.zeros(2, 3)
        assert z.is_zero()
        assert z.nonzero_rows() == []


class TestGcdex:
    @pytest.mark.parametrize("a,b", [(12, 18), (-4, 6), (7, 0), (0, -5), (35, 64)])
    def test_bezout(self, a: int, b: int) -> None:
        g, s, t = _gcdex(a, b)
        assert g >= 0
        assert s * a + t * b == g
        assert a % g == 0 and b % g == 0


class TestHnf:
    def test_known_example(self) -> None:
        res = hnf(IntMatrix.from_rows([[2, 4], [3, 5]]))
        assert res.H.to_rows() == [[1, 1], [0, 2]]
        assert res.rank == 2
        assert res.pivots() == [0, 1]

    @pytest.mark.parametrize("seed", range(8))
    def test_transform_and_shape(self, seed: int) -> None:
        rng = random.Random(seed)
        a = _random_matrix(rng, rng.randint(1, 5), rng.randint(1, 5))
        res = hnf(a)
        assert res.U @ a == res.H
        assert _is_hnf(res.H, res.rank)
        assert abs(Matrix(res.U.to_rows()).det()) == 1
        assert res.rank == Matrix(a.to_rows()).rank()

    def test_small_example(self) -> None:
        res = hnf(IntMatrix.from_rows([[2, 4], [6, 8]]))
        assert res.H.to_rows() == [[2, 0], [0, 4]]
        assert res.U @ IntMatrix.from_rows([[2, 4], [6, 8]]) == res.H

    @pytest.mark.parametrize("seed", range(6))
    def test_idempotent(self, seed: int) -> None:
        rng = random.Random(50 + seed)
        res = hnf(_random_matrix(rng, 4, 3))
        again = hnf(res.H)
        assert again.H == res.H
        assert again.rank == res.rank

    @pytest.mark.parametrize("seed", range(6))
    def test_row_order_irrelevant(self, seed: int) -> None:
        rng = random.Random(70 + seed)
        rows = _random_matrix(rng, 5, 4, spread=30).to_rows()
        shuffled = rows[:]
        rng.shuffle(shuffled)
        assert hnf(IntMatrix.from_rows(shuffled, 4)).H == hnf(IntMatrix.from_rows(rows, 4)).H

    def test_smallest_leading_entry_kept_as_pivot(self) -> None:
        ech = _Echelon(2)
        ech.insert([6, 1])
        ech.insert([4, 0])
        assert ech.basis[0][0] == [2, 1]
        assert ech.basis[1][0] == [0, -2]

    def test_zero_rows_recorded_in_transform(self) -> None:
        a = IntMatrix.from_rows([[1, 2], [2, 4], [0, 0]])
        res = hnf(a)
        assert res.rank == 1
        assert res.U @ a == res.H

    def test_hermite_rows_drops_zeros(self) -> None:
        assert hermite_rows([[4, 0], [6, 0], [0, 0]], 2) == [[2, 0]]

    def test_reduce_mod_lattice(self) -> None:
        basis = hermite_rows([[2, 1], [0, 3]], 2)
        assert reduce_mod_lattice((5, 7), basis) == reduce_mod_lattice((1, 2), basis)
        assert reduce_mod_lattice((2, 1), basis) == (0, 0)


class TestSnf:
    def test_diagonal(self) -> None:
        res = snf(IntMatrix.from_rows([[2, 0], [0, 3]]))
        assert res.divisors == (1, 6)
        assert res.torsion == (6,)
        assert res.free_rank == 0
        assert res.exponent == 6

    def test_free_part(self) -> None:
        res = snf(IntMatrix.from_rows([[2, 0], [0, 0]]))
        assert res.free_rank == 1
        assert res.torsion == (2,)
        assert res.exponent == 2

    def test_empty(self) -> None:
        res = snf(IntMatrix.zeros(0, 3))
        assert res.divisors == ()
        assert res.exponent == 1

    @pytest.mark.parametrize("seed", range(6))
    def test_transforms(self, seed: int) -> None:
        rng = random.Random(100 + seed)
        a = _random_matrix(rng, 3, 4)
        res = snf(a)
        d = res.left @ a @ res.right
        for i in range(d.rows):
            for j in range(d.cols):
                expected = res.divisors[i] if i == j else 0
                assert d[i, j] == expected
        nonzero = [abs(x) for x in res.divisors if x]
        for x, y in zip(nonzero, nonzero[1:]):
            assert y % x == 0

    def test_zero(self) -> None:
        res = snf(IntMatrix.from_rows([[0]]))
        assert res.divisors == (0,)
        assert res.free_rank == 1
        assert res.torsion == ()

    @pytest.mark.parametrize("seed", range(6))
    def test_permutation_invariant(self, seed: int) -> None:
        rng = random.Random(200 + seed)
        original = _random_matrix(rng, 3, 4)
        rows = original.to_rows()
        rng.shuffle(rows)
        cols = list(range(4))
        rng.shuffle(cols)
        permuted = IntMatrix.from_rows([[r[j] for j in cols] for r in rows], 4)
        assert [abs(d) for d in snf(permuted).divisors] == [
            abs(d) for d in snf(original).divisors
        ]

    @pytest.mark.parametrize("seed", range(6))
    def test_gcd_of_minors(self, seed: int) -> None:
        rng = random.Random(300 + seed)
        a = _random_matrix(rng, 3, 3)
        m = Matrix(a.to_rows())
        divisors = [abs(d) for d in snf(a).divisors]
        for k in range(1, 4):
            minors = [
                int(m.extract(list(r), list(c)).det())
                for r in itertools.combinations(range(3), k)
                for c in itertools.combinations(range(3), k)
            ]
            assert math.prod(divisors[:k]) == abs(functools.reduce(math.gcd, minors, 0))

    def test_matches_determinant(self) -> None:
        a = IntMatrix.from_rows([[4, 6, 2], [2, 8, 0], [0, 2, 6]])
        res = snf(a)
        product = 1
        for x in res.divisors:
            product *= x
        assert abs(product) == abs(Matrix(a.to_rows()).det())


class TestLattices:
    def test_solve_member(self) -> None:
        a = IntMatrix.from_rows([[2, 0], [1, 3]])
        x = solve_in_lattice(a, [5, 3])
        assert x is not None
        assert vec_mul(x, a) == (5, 3)

    def test_solve_non_member(self) -> None:
        a = IntMatrix.from_rows([[2, 0], [0, 2]])
        assert solve_in_lattice(a, [1, 0]) is None

    def test_solve_length_mismatch(self) -> None:
        with pytest.raises(ValueError):
            solve_in_lattice(IntMatrix.identity(2), [1, 2, 3])

    @pytest.mark.parametrize("seed", range(5))
    def test_solve_random_members(self, seed: int) -> None:
        rng = random.Random(200 + seed)
        a = _random_matrix(rng, 3, 3)
        coeffs = [rng.randint(-4, 4) for _ in range(3)]
        b = vec_mul(coeffs, a)
        x = solve_in_lattice(a, b)
        assert x is not None
        assert vec_mul(x, a) == b

    def test_left_kernel(self) -> None:
        a = IntMatrix.from_rows([[1, 2], [2, 4], [1, 0]])
        k = left_kernel(a)
        assert k.rows == 1
        assert vec_mul(k.row(0), a) == (0, 0)

    def test_right_kernel(self) -> None:
        a = IntMatrix.from_rows([[1, 1, 0], [0, 1, 1]])
        k = right_kernel(a)
        assert k.rows == 1
        v = k.row(0)
        assert vec_mul(v, a.transpose()) == (0, 0)
        assert abs(v[0]) == 1

    def test_saturation(self) -> None:
        assert saturation(IntMatrix.from_rows([[2, 4]])).to_rows() == [[1, 2]]
        assert saturation(IntMatrix.from_rows([[3, 0], [0, 5]])) == IntMatrix.identity(2)
