"""Weighted polycyclic presentations of nilpotent groups and element arithmetic.

Generators ``g_0 .. g_{n-1}`` carry a weight (nondecreasing) and a relative order (``None`` for
infinite). The relations are

    g_i^{o_i}    = power_tails[i]           (supported on generators > i)
    g_j^{g_i}    = g_j * conj_tails[(i, j)]  (i < j, supported on generators > j)

Missing entries are trivial. Elements are exponent vectors in normal form ``g_0^{e_0} ...
g_{n-1}^{e_{n-1}}`` with ``0 <= e_i < o_i`` for finite ``o_i``. Products are computed by
collection from the left: a syllable ``g_i^k`` is moved into place by conjugating the part of the
current element to its right. Conjugation by ``g_i^{-1}`` and by powers of ``g_i`` is derived from
the stored tails on demand and cached per presentation.
"""

from __future__ import annotations

import itertools
import logging
import math
import random
import sys
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from engelnq.schemas import (
    DefinitionDoc,
    DefinitionKind,
    EpimorphismDoc,
    PcpDocument,
)
from engelnq.words import EngelNqError, MissingAssignmentError, Word

logger = logging.getLogger(__name__)

Vector = tuple[int, ...]
Sparse = tuple[tuple[int, int], ...]


class PcPresentationError(EngelNqError):
    """Malformed pc presentation data or a reference to an unknown generator."""


# ---------------------------------------------------------------------------
# Definitions and violations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Definition:
    """How a generator was introduced: the image of a free generator, the commutator
    ``[g_j, g_i]`` or the power ``g_i^{o_i}``."""

    kind: DefinitionKind
    args: tuple[int, ...]

    @classmethod
    def image(cls, k: int) -> Definition:
        return cls(DefinitionKind.IMAGE, (k,))

    @classmethod
    def commutator(cls, j: int, i: int) -> Definition:
        return cls(DefinitionKind.COMMUTATOR, (j, i))

    @classmethod
    def power(cls, i: int) -> Definition:
        return cls(DefinitionKind.POWER, (i,))

    def __str__(self) -> str:
        if self.kind == DefinitionKind.IMAGE:
            return f"image({self.args[0]})"
        if self.kind == DefinitionKind.COMMUTATOR:
            return f"[g{self.args[0] + 1}, g{self.args[1] + 1}]"
        return f"g{self.args[0] + 1}^o"


@dataclass(frozen=True)
class ConsistencyViolation:
    test: str
    left: Vector
    right: Vector

    def __str__(self) -> str:
        return f"{self.test}: {list(self.left)} != {list(self.right)}"


def to_sparse(v: Sequence[int]) -> Sparse:
    return tuple((i, x) for i, x in enumerate(v) if x)


def to_dense(s: Sparse, n: int) -> list[int]:
    out = [0] * n
    for i, x in s:
        out[i] = x
    return out


# ---------------------------------------------------------------------------
# Presentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PcPresentation:
    weights: tuple[int, ...]
    orders: tuple[int | None, ...]
    power_tails: Mapping[int, Sparse] = field(default_factory=dict)
    conj_tails: Mapping[tuple[int, int], Sparse] = field(default_factory=dict)
    definitions: tuple[Definition | None, ...] = ()
    generator_names: tuple[str, ...] = ()
    images: tuple[Vector, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.weights)
        if len(self.orders) != n:
            raise PcPresentationError(f"{len(self.orders)} relative orders for {n} generators")
        if not self.definitions:
            object.__setattr__(self, "definitions", (None,) * n)
        if len(self.definitions) != n:
            raise PcPresentationError(f"{len(self.definitions)} definitions for {n} generators")
        if len(self.images) != len(self.generator_names):
            raise PcPresentationError("epimorphism names and images differ in length")
        for a, b in itertools.pairwise(self.weights):
            if b < a:
                raise PcPresentationError("weights must be nondecreasing")
        if any(w < 1 for w in self.weights):
            raise PcPresentationError("weights must be positive")
        for o in self.orders:
            if o is not None and o < 2:
                raise PcPresentationError(f"relative order {o} must be at least 2")
        power = {i: s for i, s in self.power_tails.items() if s}
        conj = {ij: s for ij, s in self.conj_tails.items() if s}
        for i, tail in power.items():
            if not 0 <= i < n or self.orders[i] is None:
                raise PcPresentationError(f"power tail for generator {i} without finite order")
            self._check_tail(tail, i, f"power tail of g{i + 1}")
        for (i, j), tail in conj.items():
            if not 0 <= i < j < n:
                raise PcPresentationError(f"conjugation tail index ({i}, {j}) out of range")
            self._check_tail(tail, j, f"conjugation tail of g{j + 1}^g{i + 1}")
        for img in self.images:
            if len(img) != n:
                raise PcPresentationError("epimorphism image of the wrong length")
        object.__setattr__(self, "power_tails", power)
        object.__setattr__(self, "conj_tails", conj)
        self._init_caches()

    def _check_tail(self, tail: Sparse, after: int, what: str) -> None:
        for g, x in tail:
            if g <= after or g >= self.n:
                raise PcPresentationError(f"{what} uses generator {g + 1} out of order")
            o = self.orders[g]
            if x == 0 or (o is not None and not 0 <= x < o):
                raise PcPresentationError(f"{what} is not in normal form")

    def _init_caches(self) -> None:
        n = self.n
        moves: list[set[int]] = [set() for _ in range(n)]
        for i, j in self.conj_tails:
            moves[i].add(j)
        object.__setattr__(self, "_moves", [frozenset(m) for m in moves])
        object.__setattr__(self, "_tables", {})
        object.__setattr__(self, "_power_dense", {})
        # collection recurses roughly once per generator index
        limit = 64 * n + 2000
        if sys.getrecursionlimit() < limit:
            sys.setrecursionlimit(limit)

    def __getstate__(self) -> dict[str, Any]:
        state = dict(self.__dict__)
        for key in ("_moves", "_tables", "_power_dense"):
            state.pop(key, None)
        return state

    def __setstate__(self, state: dict[str, Any]) -> None:
        self.__dict__.update(state)
        self._init_caches()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PcPresentation):
            return NotImplemented
        return self.to_json() == other.to_json()

    def __hash__(self) -> int:
        return hash(self.to_json())

    # ------------------------------------------------------------------
    # Basic data
    # ------------------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def nilpotency_class(self) -> int:
        return max(self.weights, default=0)

    def layer(self, k: int) -> tuple[int, ...]:
        return tuple(i for i, w in enumerate(self.weights) if w == k)

    def zero(self) -> Vector:
        return (0,) * self.n

    def unit(self, i: int, x: int = 1) -> Vector:
        if not 0 <= i < self.n:
            raise PcPresentationError(f"no generator g{i + 1}")
        return self.element([x if k == i else 0 for k in range(self.n)])

    def is_finite(self) -> bool:
        return all(o is not None for o in self.orders)

    def size(self) -> int | None:
        if not self.is_finite():
            return None
        return math.prod(o for o in self.orders if o is not None)

    def depth(self, a: Sequence[int]) -> int | None:
        """Index of the leading nonzero exponent."""
        return next((i for i, x in enumerate(a) if x), None)

    def weight_of(self, a: Sequence[int]) -> int | None:
        """Minimal weight of the support, ``None`` for the identity."""
        d = self.depth(a)
        return None if d is None else self.weights[d]

    def power_tail(self, i: int) -> Vector:
        dense = self._power_dense.get(i)  # type: ignore[attr-defined]
        if dense is None:
            dense = tuple(to_dense(self.power_tails.get(i, ()), self.n))
            self._power_dense[i] = dense  # type: ignore[attr-defined]
        return dense

    def conj_tail(self, i: int, j: int) -> Vector:
        return tuple(to_dense(self.conj_tails.get((i, j), ()), self.n))

    def image(self, name: str) -> Vector:
        try:
            return self.images[self.generator_names.index(name)]
        except ValueError:
            raise PcPresentationError(f"no epimorphism image for {name!r}") from None

    # ------------------------------------------------------------------
    # Collection
    # ------------------------------------------------------------------

    def _mul_gen(self, e: list[int], i: int, k: int) -> None:
        """``e <- e * g_i^k`` in place."""
        if k == 0:
            return
        n = self.n
        suffix: list[int] | None = None
        for m in range(i + 1, n):
            if e[m]:
                suffix = [0] * (i + 1) + e[i + 1 :]
                for t in range(m, n):
                    e[t] = 0
                break
        total = e[i] + k
        o = self.orders[i]
        q = 0
        if o is None:
            e[i] = total
        else:
            q, e[i] = divmod(total, o)
        tailed = False
        if q and i in self.power_tails:
            tv = self._power_vec(self.power_tail(i), q)
            for t in range(i + 1, n):
                e[t] = tv[t]
            tailed = True
        if suffix is None:
            return
        if any(suffix[m] for m in self._moves[i]):  # type: ignore[attr-defined]
            suffix = list(self._conj_power(suffix, i, k))
        if tailed:
            self._mul_vec(e, suffix)
        else:
            for t in range(i + 1, n):
                e[t] = suffix[t]

    def _mul_vec(self, e: list[int], v: Sequence[int]) -> None:
        first = self.depth(v)
        if first is None:
            return
        if not any(e[first:]):
            for t in range(first, self.n):
                e[t] += v[t]
            return
        for m in range(first, self.n):
            if v[m]:
                self._mul_gen(e, m, v[m])

    def _multiply(self, a: Sequence[int], b: Sequence[int]) -> Vector:
        e = list(a)
        self._mul_vec(e, b)
        return tuple(e)

    def _power_vec(self, v: Sequence[int], q: int) -> Vector:
        if q < 0:
            v, q = self.inverse(v), -q
        d = self.depth(v)
        if d is None or q == 0:
            return self.zero()
        if q == 1:
            return tuple(v)
        if all(x == 0 for x in v[d + 1 :]) and self.orders[d] is None:
            out = [0] * self.n
            out[d] = v[d] * q
            return tuple(out)
        result = self.zero()
        base = tuple(v)
        while q:
            if q & 1:
                result = self._multiply(result, base)
            q >>= 1
            if q:
                base = self._multiply(base, base)
        return result

    def _table(self, i: int, sign: int, bit: int) -> dict[int, Vector]:
        """Images of the generators moved by ``g_i`` under conjugation by ``g_i^(sign*2^bit)``."""
        key = (i, sign, bit)
        tables: dict[tuple[int, int, int], dict[int, Vector]] = self._tables  # type: ignore[attr-defined]
        cached = tables.get(key)
        if cached is not None:
            return cached
        moves = sorted(self._moves[i])  # type: ignore[attr-defined]
        table: dict[int, Vector] = {}
        if bit == 0 and sign > 0:
            for m in moves:
                img = to_dense(self.conj_tails[(i, m)], self.n)
                img[m] = 1
                table[m] = tuple(img)
        elif bit == 0:
            # g_m^(g_i^-1) = g_m * (phi^-1(t))^-1 where g_m^(g_i) = g_m * t
            for m in reversed(moves):
                t = self.conj_tail(i, m)
                pulled = self._apply_table(table, t)
                table[m] = self._multiply(self.unit(m), self.inverse(pulled))
        else:
            half = self._table(i, sign, bit - 1)
            for m in moves:
                table[m] = self._apply_table(half, half[m])
        tables[key] = table
        return table

    def _apply_table(self, table: Mapping[int, Vector], v: Sequence[int]) -> Vector:
        out = [0] * self.n
        for m, x in enumerate(v):
            if not x:
                continue
            img = table.get(m)
            if img is None:
                self._mul_gen(out, m, x)
            else:
                self._mul_vec(out, img if x == 1 else self._power_vec(img, x))
        return tuple(out)

    def _conj_power(self, v: Sequence[int], i: int, k: int) -> Vector:
        """``v`` conjugated by ``g_i^k``."""
        sign = 1 if k > 0 else -1
        k = abs(k)
        bit = 0
        out: Sequence[int] = v
        while k:
            if k & 1:
                out = self._apply_table(self._table(i, sign, bit), out)
            k >>= 1
            bit += 1
        return tuple(out)

    # ------------------------------------------------------------------
    # Element arithmetic
    # ------------------------------------------------------------------

    def element(self, exponents: Sequence[int]) -> Vector:
        """Normal form of ``g_0^{x_0} ... g_{n-1}^{x_{n-1}}`` for arbitrary integers."""
        if len(exponents) != self.n:
            raise PcPresentationError(f"exponent vector of length {len(exponents)}, expected {self.n}")
        e = [0] * self.n
        for i, x in enumerate(exponents):
            if x:
                self._mul_gen(e, i, x)
        return tuple(e)

    def collect(self, w: Word) -> Vector:
        """Normal form of a word in the pc generators."""
        e = [0] * self.n
        for g, x in w.syllables:
            if not 0 <= g < self.n:
                raise PcPresentationError(f"no generator g{g + 1}")
            self._mul_gen(e, g, x)
        return tuple(e)

    def multiply(self, a: Sequence[int], b: Sequence[int]) -> Vector:
        return self._multiply(a, b)

    def inverse(self, a: Sequence[int]) -> Vector:
        e = [0] * self.n
        for i in range(self.n - 1, -1, -1):
            if a[i]:
                self._mul_gen(e, i, -a[i])
        return tuple(e)

    def power(self, a: Sequence[int], k: int) -> Vector:
        return self._power_vec(a, k)

    def conjugate(self, a: Sequence[int], b: Sequence[int]) -> Vector:
        """``a^b = b^-1 a b``."""
        return self._multiply(self._multiply(self.inverse(b), a), b)

    def commutator(self, a: Sequence[int], b: Sequence[int]) -> Vector:
        """``[a, b] = a^-1 b^-1 a b``."""
        return self._multiply(self.inverse(self._multiply(b, a)), self._multiply(a, b))

    def left_normed_commutator(self, args: Sequence[Sequence[int]]) -> Vector:
        if not args:
            raise ValueError("left-normed commutator needs at least one entry")
        out = tuple(args[0])
        for b in args[1:]:
            out = self.commutator(out, b)
        return out

    def order(self, a: Sequence[int]) -> int | None:
        """Element order, ``None`` when infinite. Follows the leading exponents down the series."""
        result = 1
        cur = tuple(a)
        while True:
            d = self.depth(cur)
            if d is None:
                return result
            o = self.orders[d]
            if o is None:
                return None
            m = o // math.gcd(cur[d], o)
            result *= m
            cur = self._power_vec(cur, m)

    def evaluate_word(self, images: Mapping[int, Sequence[int]] | Sequence[Sequence[int]], w: Word) -> Vector:
        """Image of ``w`` under ``word generator -> element``, collected."""
        e = [0] * self.n
        powers: dict[tuple[int, int], Vector] = {}
        for g, x in w.syllables:
            try:
                img = images[g]
            except (KeyError, IndexError):
                raise MissingAssignmentError(f"no image for word generator {g}") from None
            if x == 1:
                self._mul_vec(e, img)
                continue
            p = powers.get((g, x))
            if p is None:
                p = self._power_vec(img, x)
                powers[(g, x)] = p
            self._mul_vec(e, p)
        return tuple(e)

    def evaluate_epimorphism(self, w: Word, names: Sequence[str]) -> Vector:
        """Evaluate ``w`` over ``names`` through the stored epimorphism images."""
        return self.evaluate_word([self.image(name) for name in names], w)

    # ------------------------------------------------------------------
    # Enumeration and sampling
    # ------------------------------------------------------------------

    def elements(self) -> Iterator[Vector]:
        """All normal forms of a finite presentation, lexicographically."""
        if not self.is_finite():
            raise PcPresentationError("cannot enumerate an infinite group")
        yield from itertools.product(*(range(o) for o in self.orders if o is not None))

    def random_element(self, rng: random.Random, spread: int = 3) -> Vector:
        return tuple(
            rng.randrange(o) if o is not None else rng.randint(-spread, spread)
            for o in self.orders
        )

    # ------------------------------------------------------------------
    # Consistency
    # ------------------------------------------------------------------

    def test_words(self, weighted: bool = False) -> Iterator[tuple[str, Vector, Vector]]:
        """Yield ``(label, left, right)`` for every overlap test word, both bracketings collected.

        With ``weighted`` only associativity triples whose weights sum to at most the class are
        produced.
        """
        n = self.n
        c = self.nilpotency_class
        units = [self.unit(i) for i in range(n)]
        moves: list[frozenset[int]] = self._moves  # type: ignore[attr-defined]

        for i in range(n):
            for j in range(i + 1, n):
                ji = self._multiply(units[j], units[i])
                for k in range(j + 1, n):
                    if weighted and self.weights[i] + self.weights[j] + self.weights[k] > c:
                        break
                    yield (
                        f"(g{k + 1}*g{j + 1})*g{i + 1}",
                        self._multiply(self._multiply(units[k], units[j]), units[i]),
                        self._multiply(units[k], ji),
                    )
        for j in range(n):
            oj = self.orders[j]
            if oj is None:
                continue
            almost = tuple(oj - 1 if t == j else 0 for t in range(n))
            tail = self.power_tail(j)
            yield (
                f"g{j + 1}*g{j + 1}^{oj}",
                self._multiply(units[j], tail),
                self._multiply(tail, units[j]),
            )
            for i in range(j):
                yield (
                    f"g{j + 1}^{oj}*g{i + 1}",
                    self._multiply(tail, units[i]),
                    self._multiply(almost, self._multiply(units[j], units[i])),
                )
            for k in range(j + 1, n):
                yield (
                    f"g{k + 1}*g{j + 1}^{oj}",
                    self._multiply(units[k], tail),
                    self._multiply(self._multiply(units[k], units[j]), almost),
                )
        for i in range(n):
            if self.orders[i] is not None:
                continue
            inv = self.inverse(units[i])
            for j in sorted(moves[i]):
                yield (
                    f"(g{j + 1}*g{i + 1}^-1)*g{i + 1}",
                    units[j],
                    self._multiply(self._multiply(units[j], inv), units[i]),
                )

    def consistency_check(self, weighted: bool = False) -> list[ConsistencyViolation]:
        """Collect every overlap test word both ways; an empty list means consistent."""
        out = [
            ConsistencyViolation(label, left, right)
            for label, left, right in self.test_words(weighted)
            if left != right
        ]
        if out:
            logger.debug("consistency check: %d violations", len(out))
        return out

    # ------------------------------------------------------------------
    # Serialization
    # ------------------------------------------------------------------

    def to_document(self) -> PcpDocument:
        return PcpDocument(
            gen_count=self.n,
            weights=list(self.weights),
            relative_orders=list(self.orders),
            power_tails=[(i, [tuple(s) for s in self.power_tails[i]]) for i in sorted(self.power_tails)],
            conj_tails=[
                (i, j, [tuple(s) for s in self.conj_tails[(i, j)]]) for i, j in sorted(self.conj_tails)
            ],
            definitions=[
                None if d is None else DefinitionDoc(kind=d.kind, args=list(d.args))
                for d in self.definitions
            ],
            epimorphism=EpimorphismDoc(
                generators=list(self.generator_names), images=[list(v) for v in self.images]
            ),
        )

    def to_json(self) -> str:
        """Canonical JSON; identical presentations give identical bytes."""
        return self.to_document().model_dump_json(by_alias=True)

    @classmethod
    def from_document(cls, doc: PcpDocument) -> PcPresentation:
        if len(doc.weights) != doc.gen_count:
            raise PcPresentationError("genCount does not match the weights")
        return cls(
            weights=tuple(doc.weights),
            orders=tuple(doc.relative_orders),
            power_tails={i: tuple((g, x) for g, x in tail) for i, tail in doc.power_tails},
            conj_tails={(i, j): tuple((g, x) for g, x in tail) for i, j, tail in doc.conj_tails},
            definitions=tuple(
                None if d is None else Definition(d.kind, tuple(d.args)) for d in doc.definitions
            ),
            generator_names=tuple(doc.epimorphism.generators),
            images=tuple(tuple(v) for v in doc.epimorphism.images),
        )

    @classmethod
    def from_json(cls, text: str) -> PcPresentation:
        from pydantic import ValidationError

        try:
            doc = PcpDocument.model_validate_json(text)
        except ValidationError as e:
            raise PcPresentationError(f"invalid pc presentation document: {e}") from e
        return cls.from_document(doc)

    def with_epimorphism(self, names: Sequence[str], images: Sequence[Vector]) -> PcPresentation:
        return PcPresentation(
            self.weights, self.orders, self.power_tails, self.conj_tails, self.definitions,
            tuple(names), tuple(tuple(v) for v in images),
        )

    def describe(self) -> str:
        """Human-readable relation list, one relation per line."""

        def fmt(s: Sparse) -> str:
            return Word(s).format([f"g{k + 1}" for k in range(self.n)]) if s else "1"

        lines = []
        for i in range(self.n):
            o = self.orders[i]
            if o is not None:
                lines.append(f"g{i + 1}^{o} = {fmt(self.power_tails.get(i, ()))}")
        for (i, j), tail in sorted(self.conj_tails.items()):
            lines.append(f"g{j + 1}^g{i + 1} = g{j + 1}*{fmt(tail)}")
        return "\n".join(lines)
