"""Exact integer linear algebra: row Hermite normal form with transform, Smith normal form,
lattice membership and kernels.

Conventions: matrices act on row vectors, ``x·A``. A row HNF has its nonzero rows on top, pivot
columns strictly increasing from row to row, positive pivots, and every entry above a pivot
reduced into ``[0, pivot)``.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from sympy import ZZ, Matrix
from sympy.matrices.normalforms import smith_normal_decomp

logger = logging.getLogger(__name__)

Vector = tuple[int, ...]


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntMatrix:
    rows: int
    cols: int
    entries: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.rows < 0 or self.cols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        if not self.entries and self.rows * self.cols:
            object.__setattr__(self, "entries", (0,) * (self.rows * self.cols))
        if len(self.entries) != self.rows * self.cols:
            raise ValueError(
                f"{self.rows}x{self.cols} matrix needs {self.rows * self.cols} entries, "
                f"got {len(self.entries)}"
            )

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], cols: int | None = None) -> IntMatrix:
        if cols is None:
            cols = len(rows[0]) if rows else 0
        entries: list[int] = []
        for row in rows:
            if len(row) != cols:
                raise ValueError(f"ragged row of length {len(row)}, expected {cols}")
            entries.extend(int(x) for x in row)
        return cls(len(rows), cols, tuple(entries))

    @classmethod
    def identity(cls, n: int) -> IntMatrix:
        return cls.from_rows([[int(i == j) for j in range(n)] for i in range(n)], n)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> IntMatrix:
        return cls(rows, cols)

    def row(self, i: int) -> Vector:
        return self.entries[i * self.cols : (i + 1) * self.cols]

    def to_rows(self) -> list[list[int]]:
        return [list(self.row(i)) for i in range(self.rows)]

    def __getitem__(self, ij: tuple[int, int]) -> int:
        i, j = ij
        return self.entries[i * self.cols + j]

    def __matmul__(self, other: IntMatrix) -> IntMatrix:
        if self.cols != other.rows:
            raise ValueError(f"shape mismatch {self.rows}x{self.cols} @ {other.rows}x{other.cols}")
        cols = [other.column(j) for j in range(other.cols)]
        return IntMatrix.from_rows(
            [[sum(a * b for a, b in zip(self.row(i), col)) for col in cols] for i in range(self.rows)],
            other.cols,
        )

    def column(self, j: int) -> Vector:
        return tuple(self.entries[i * self.cols + j] for i in range(self.rows))

    def transpose(self) -> IntMatrix:
        return IntMatrix.from_rows([list(self.column(j)) for j in range(self.cols)], self.rows)

    def is_zero(self) -> bool:
        return not any(self.entries)

    def nonzero_rows(self) -> list[Vector]:
        return [r for r in (self.row(i) for i in range(self.rows)) if any(r)]


def vec_mul(x: Sequence[int], a: IntMatrix) -> Vector:
    """Row vector times matrix."""
    if len(x) != a.rows:
        raise ValueError(f"vector of length {len(x)} against {a.rows} rows")
    out = [0] * a.cols
    for i, xi in enumerate(x):
        if xi:
            for j, aij in enumerate(a.row(i)):
                if aij:
                    out[j] += xi * aij
    return tuple(out)


# ---------------------------------------------------------------------------
# Hermite normal form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HnfResult:
    H: IntMatrix
    U: IntMatrix
    rank: int

    def pivots(self) -> list[int]:
        out = []
        for i in range(self.rank):
            row = self.H.row(i)
            out.append(next(j for j, x in enumerate(row) if x))
        return out


def _axpy(y: list[int], a: int, x: list[int]) -> None:
    """``y += a*x`` in place."""
    if a:
        for k, xk in enumerate(x):
            if xk:
                y[k] += a * xk


class _Echelon:
    """Echelon basis built by inserting rows one at a time.

    Each stored row keeps its pivot column. A conflicting pivot is resolved by Euclid on the two
    leading entries: the row with the smaller leading entry stays as the pivot row and the other
    is reduced by it until one vanishes in that column. With ``track`` the combination of input
    rows producing every stored row (and every row that reduced to zero) is recorded.
    """

    def __init__(self, ncols: int, track: bool = False) -> None:
        self.ncols = ncols
        self.track = track
        self.basis: dict[int, tuple[list[int], list[int]]] = {}
        self.zero_transforms: list[list[int]] = []
        self.count = 0

    def _grow(self) -> None:
        if not self.track:
            return
        for _, tr in self.basis.values():
            tr.append(0)
        for tr in self.zero_transforms:
            tr.append(0)

    def insert(self, vec: Sequence[int]) -> None:
        v = [int(x) for x in vec]
        tr: list[int] = []
        if self.track:
            self._grow()
            tr = [0] * (self.count + 1)
            tr[self.count] = 1
        self.count += 1
        col = 0
        while True:
            while col < self.ncols and v[col] == 0:
                col += 1
            if col == self.ncols:
                if self.track:
                    self.zero_transforms.append(tr)
                return
            if col not in self.basis:
                self.basis[col] = (v, tr)
                return
            b, btr = self.basis[col]
            q = v[col] // b[col]
            _axpy(v, -q, b)
            if self.track:
                _axpy(tr, -q, btr)
            if v[col] != 0:
                # v now has the smaller leading entry
                self.basis[col] = (v, tr)
                v, tr = b, btr

    def reduced_rows(self) -> list[tuple[int, list[int], list[int]]]:
        """Rows in HNF order as ``(pivot, row, transform)``, pivots positive, reduced above."""
        order = sorted(self.basis)
        rows = []
        for col in order:
            row, tr = self.basis[col]
            if row[col] < 0:
                row = [-x for x in row]
                tr = [-x for x in tr]
            rows.append((col, row, tr))
        for i in range(len(rows)):
            _, row_i, tr_i = rows[i]
            for j in range(i + 1, len(rows)):
                col_j, row_j, tr_j = rows[j]
                q = row_i[col_j] // row_j[col_j]
                if q:
                    _axpy(row_i, -q, row_j)
                    if self.track:
                        _axpy(tr_i, -q, tr_j)
        return rows


def _gcdex(a: int, b: int) -> tuple[int, int, int]:
    """``(g, s, t)`` with ``g = s*a + t*b = gcd(a, b) > 0``."""
    s0, s1, t0, t1 = 1, 0, 0, 1
    x, y = a, b
    while y:
        q, r = divmod(x, y)
        x, y = y, r
        s0, s1 = s1, s0 - q * s1
        t0, t1 = t1, t0 - q * t1
    if x < 0:
        x, s0, t0 = -x, -s0, -t0
    return x, s0, t0


def hnf(a: IntMatrix) -> HnfResult:
    """Row Hermite normal form ``H`` and a unimodular ``U`` with ``U·A = H``."""
    ech = _Echelon(a.cols, track=True)
    for i in range(a.rows):
        ech.insert(a.row(i))
    rows = ech.reduced_rows()
    h_rows = [r for _, r, _ in rows]
    u_rows = [tr for _, _, tr in rows] + ech.zero_transforms
    rank = len(h_rows)
    h_rows.extend([0] * a.cols for _ in range(a.rows - rank))
    return HnfResult(
        H=IntMatrix.from_rows(h_rows, a.cols),
        U=IntMatrix.from_rows(u_rows, a.rows),
        rank=rank,
    )


def hermite_rows(rows: Iterable[Sequence[int]], ncols: int) -> list[list[int]]:
    """Nonzero rows of the row HNF of ``rows``, without a transform."""
    ech = _Echelon(ncols)
    n = 0
    for r in rows:
        ech.insert(r)
        n += 1
    out = [row for _, row, _ in ech.reduced_rows()]
    logger.debug("hnf: %d input rows, %d columns, rank %d", n, ncols, len(out))
    return out


def reduce_mod_lattice(v: Sequence[int], basis: Sequence[Sequence[int]]) -> Vector:
    """Canonical representative of ``v`` modulo the lattice of a row HNF ``basis``."""
    out = list(v)
    for row in basis:
        col = next(j for j, x in enumerate(row) if x)
        q = out[col] // row[col]
        if q:
            _axpy(out, -q, list(row))
    return tuple(out)


# ---------------------------------------------------------------------------
# Smith normal form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SnfResult:
    divisors: tuple[int, ...]
    left: IntMatrix
    right: IntMatrix

    @property
    def free_rank(self) -> int:
        return sum(1 for d in self.divisors if d == 0)

    @property
    def torsion(self) -> tuple[int, ...]:
        """Nontrivial finite invariants."""
        return tuple(d for d in self.divisors if d > 1)

    @property
    def exponent(self) -> int | None:
        """Largest finite divisor, 1 for a trivial torsion part, ``None`` when no divisors."""
        finite = [d for d in self.divisors if d]
        return max(finite) if finite else (None if self.divisors else 1)


def snf(a: IntMatrix) -> SnfResult:
    """Smith normal form: ``left·A·right = diag(divisors)`` with ``d1 | d2 | ...``."""
    if a.rows == 0 or a.cols == 0:
        return SnfResult((), IntMatrix.identity(a.rows), IntMatrix.identity(a.cols))
    d, s, t = smith_normal_decomp(Matrix(a.to_rows()), domain=ZZ)
    divisors = tuple(int(d[i, i]) for i in range(min(a.rows, a.cols)))
    return SnfResult(
        divisors=divisors,
        left=IntMatrix.from_rows([[int(x) for x in s.row(i)] for i in range(a.rows)], a.rows),
        right=IntMatrix.from_rows([[int(x) for x in t.row(i)] for i in range(a.cols)], a.cols),
    )


# ---------------------------------------------------------------------------
# Lattices
# ---------------------------------------------------------------------------


def solve_in_lattice(a: IntMatrix, b: Sequence[int]) -> Vector | None:
    """``x`` with ``x·A = b``, or ``None`` when ``b`` is not in the row lattice of ``A``."""
    if len(b) != a.cols:
        raise ValueError(f"target of length {len(b)} against {a.cols} columns")
    res = hnf(a)
    residual = list(b)
    y = [0] * a.rows
    for i, col in enumerate(res.pivots()):
        if any(residual[:col]):
            return None
        p = res.H[i, col]
        q, r = divmod(residual[col], p)
        if r:
            return None
        y[i] = q
        _axpy(residual, -q, list(res.H.row(i)))
    if any(residual):
        return None
    return vec_mul(y, res.U)


def left_kernel(a: IntMatrix) -> IntMatrix:
    """Lattice basis (row HNF) of ``{x : x·A = 0}``."""
    ech = _Echelon(a.cols, track=True)
    for i in range(a.rows):
        ech.insert(a.row(i))
    return IntMatrix.from_rows(hermite_rows(ech.zero_transforms, a.rows), a.rows)


def right_kernel(a: IntMatrix) -> IntMatrix:
    """Lattice basis of ``{y : A·y = 0}``, one vector per row."""
    return left_kernel(a.transpose())


def saturation(a: IntMatrix) -> IntMatrix:
    """Row HNF of ``{x in Z^n : m·x in rowspace(A) for some m > 0}``."""
    kernel = right_kernel(a)
    if kernel.rows == 0:
        return IntMatrix.identity(a.cols)
    return left_kernel(kernel.transpose())
