"""Subgroups, quotients and torsion of groups given by consistent weighted pc presentations.

Subgroups are stored as induced pc sequences: at most one basis element per leading index
(depth), each normalized, and the set closed under the powers and commutators that make
sifting through the basis an exact membership test.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from engelnq.pcp import Definition, PcPresentation, Vector, to_sparse
from engelnq.schemas import DefinitionKind
from engelnq.words import EngelNqError
from engelnq.zlinalg import IntMatrix, SnfResult, _gcdex, left_kernel, saturation, snf

logger = logging.getLogger(__name__)


class StructureError(EngelNqError):
    """Invalid request on a pc presentation or subgroup."""


class AmbientMismatchError(StructureError):
    """Elements or subgroups from different presentations were combined."""


class NotNormalError(StructureError):
    """A quotient was requested by a subgroup that is not normal."""


class ClassIndexError(StructureError):
    """A lower central index outside the valid range."""


# ---------------------------------------------------------------------------
# Induced subgroups
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InducedSubgroup:
    ambient: PcPresentation
    basis: tuple[Vector, ...] = ()

    def __post_init__(self) -> None:
        depths = [self.ambient.depth(b) for b in self.basis]
        if any(d is None for d in depths):
            raise StructureError("basis contains the identity")
        if any(b <= a for a, b in zip(depths, depths[1:])):  # type: ignore[operator]
            raise StructureError("basis leading indices must be strictly increasing")

    @property
    def depths(self) -> tuple[int, ...]:
        return tuple(self.ambient.depth(b) for b in self.basis)  # type: ignore[misc]

    def by_depth(self) -> dict[int, Vector]:
        return {d: b for d, b in zip(self.depths, self.basis)}

    def is_trivial(self) -> bool:
        return not self.basis

    def order(self) -> int | None:
        """Subgroup order, ``None`` when infinite."""
        total = 1
        for d, b in zip(self.depths, self.basis):
            o = self.ambient.orders[d]
            if o is None:
                return None
            total *= o // b[d]
        return total

    def __contains__(self, a: Sequence[int]) -> bool:
        return bool(membership(self, a))

    def __len__(self) -> int:
        return len(self.basis)


@dataclass(frozen=True)
class Membership:
    member: bool
    witness: tuple[tuple[int, int], ...] = ()  # (depth, exponent): a = prod basis[depth]^exponent
    residue: Vector | None = None

    def __bool__(self) -> bool:
        return self.member


class _Sifter:
    """Mutable induced basis under construction."""

    def __init__(self, ambient: PcPresentation, basis: Iterable[Vector] = ()) -> None:
        self.P = ambient
        self.basis: dict[int, Vector] = {}
        for b in basis:
            d = ambient.depth(b)
            if d is not None:
                self.basis[d] = tuple(b)

    def sift(self, a: Sequence[int]) -> tuple[Vector, list[tuple[int, int]]]:
        P = self.P
        cur = tuple(a)
        witness: list[tuple[int, int]] = []
        while True:
            d = P.depth(cur)
            if d is None or d not in self.basis:
                return cur, witness
            b = self.basis[d]
            if cur[d] % b[d]:
                return cur, witness
            x = cur[d] // b[d]
            cur = P.multiply(P.power(b, -x), cur)
            witness.append((d, x))

    def add(self, a: Sequence[int]) -> bool:
        P = self.P
        pending = [tuple(a)]
        changed = False
        while pending:
            r, _ = self.sift(pending.pop())
            d = P.depth(r)
            if d is None:
                continue
            changed = True
            o = P.orders[d]
            cur = self.basis.get(d)
            if cur is None:
                if o is None:
                    self.basis[d] = r if r[d] > 0 else P.inverse(r)
                else:
                    _, s, _ = _gcdex(r[d], o)
                    self.basis[d] = P.power(r, s)
                    pending.append(r)
            else:
                _, s, t = _gcdex(cur[d], r[d])
                self.basis[d] = P.multiply(P.power(cur, s), P.power(r, t))
                pending.extend([cur, r])
        return changed

    def close(self, normal: bool, conjugators: Sequence[Vector] = ()) -> None:
        """Close under commutators of the basis, and under conjugation by ``conjugators`` or,
        with ``normal``, by every generator of the ambient group."""
        P = self.P
        conjugators = list(conjugators)
        if normal:
            for k in range(P.n):
                conjugators.append(P.unit(k))
                if P.orders[k] is None:
                    conjugators.append(P.unit(k, -1))
        seen: set[tuple[object, ...]] = set()
        rounds = 0
        while True:
            rounds += 1
            todo: list[Vector] = []
            items = sorted(self.basis.items())
            for pos, (d, b) in enumerate(items):
                o = P.orders[d]
                if o is not None and ("p", b) not in seen:
                    seen.add(("p", b))
                    todo.append(P.power(b, o // b[d]))
                inverse_too = o is None
                for _, c in items[pos + 1 :]:
                    if ("c", b, c) in seen:
                        continue
                    seen.add(("c", b, c))
                    todo.append(P.commutator(c, b))
                    if inverse_too:
                        todo.append(P.commutator(c, P.inverse(b)))
                for k, g in enumerate(conjugators):
                    if ("n", b, k) not in seen:
                        seen.add(("n", b, k))
                        todo.append(P.commutator(b, g))
            changed = False
            for t in todo:
                if self.add(t):
                    changed = True
            if not changed:
                break
        logger.debug("closure: %d basis elements after %d rounds", len(self.basis), rounds)

    def freeze(self) -> InducedSubgroup:
        return InducedSubgroup(self.P, tuple(self.basis[d] for d in sorted(self.basis)))


def _check_ambient(P: PcPresentation, vectors: Iterable[Sequence[int]]) -> None:
    for v in vectors:
        if len(v) != P.n:
            raise AmbientMismatchError(f"element of length {len(v)} in a group with {P.n} generators")


def _same_ambient(a: PcPresentation, b: PcPresentation) -> bool:
    return a is b or a == b


def subgroup_closure(P: PcPresentation, gens: Sequence[Sequence[int]]) -> InducedSubgroup:
    """Induced basis of the subgroup generated by ``gens``."""
    _check_ambient(P, gens)
    sifter = _Sifter(P)
    for g in gens:
        sifter.add(g)
    sifter.close(normal=False)
    return sifter.freeze()


def normal_closure(P: PcPresentation, gens: Sequence[Sequence[int]]) -> InducedSubgroup:
    """Induced basis of the smallest normal subgroup containing ``gens``."""
    _check_ambient(P, gens)
    sifter = _Sifter(P)
    for g in gens:
        sifter.add(g)
    sifter.close(normal=True)
    return sifter.freeze()


def membership(S: InducedSubgroup, a: Sequence[int]) -> Membership:
    """Decide ``a in S`` by stripping leading terms through the basis."""
    if len(a) != S.ambient.n:
        raise AmbientMismatchError(f"element of length {len(a)} against {S.ambient.n} generators")
    residue, witness = _Sifter(S.ambient, S.basis).sift(a)
    member = S.ambient.depth(residue) is None
    return Membership(member, tuple(witness) if member else (), None if member else residue)


def is_normal(S: InducedSubgroup) -> bool:
    P = S.ambient
    sifter = _Sifter(P, S.basis)
    for b in S.basis:
        for k in range(P.n):
            conj = [P.unit(k)] + ([P.unit(k, -1)] if P.orders[k] is None else [])
            for g in conj:
                r, _ = sifter.sift(P.conjugate(b, g))
                if P.depth(r) is not None:
                    return False
    return True


# ---------------------------------------------------------------------------
# Lower central series
# ---------------------------------------------------------------------------


def lower_central_layers(P: PcPresentation) -> list[tuple[int, tuple[int, ...]]]:
    """``(k, generators of weight k)`` for ``k = 1 .. class``."""
    if len(P.weights) != P.n:
        raise StructureError("presentation lacks weight data")
    return [(k, P.layer(k)) for k in range(1, P.nilpotency_class + 1)]


def lower_central_term(P: PcPresentation, k: int) -> InducedSubgroup:
    """``gamma_k`` as the span of the generators of weight at least ``k``."""
    if k < 1:
        raise ClassIndexError(f"lower central index {k} must be positive")
    return InducedSubgroup(P, tuple(P.unit(i) for i in range(P.n) if P.weights[i] >= k))


def subgroup_commutator(P: PcPresentation, S1: InducedSubgroup, S2: InducedSubgroup) -> InducedSubgroup:
    """Normal closure of the commutators of the two bases."""
    if not (_same_ambient(P, S1.ambient) and _same_ambient(P, S2.ambient)):
        raise AmbientMismatchError("subgroups live in different presentations")
    comms = [P.commutator(x, y) for x in S1.basis for y in S2.basis]
    return normal_closure(P, [c for c in comms if any(c)])


def subgroup_lower_central_term(
    P: PcPresentation, gens: Sequence[Sequence[int]], k: int
) -> InducedSubgroup:
    """``gamma_k`` of the subgroup generated by ``gens``, not of ``P``."""
    if k < 1:
        raise ClassIndexError(f"lower central index {k} must be positive")
    _check_ambient(P, gens)
    elems: list[Vector] = [tuple(g) for g in gens if any(g)]
    conjugators = elems + [P.inverse(g) for g in elems]
    term = subgroup_closure(P, elems)
    for _ in range(k - 1):
        if term.is_trivial():
            break
        sifter = _Sifter(P)
        for b in term.basis:
            for g in elems:
                sifter.add(P.commutator(b, g))
        sifter.close(normal=False, conjugators=conjugators)
        term = sifter.freeze()
    return term


def section_invariants(P: PcPresentation, k: int) -> SnfResult:
    """Smith invariants of the abelian section ``gamma_k / gamma_{k+1}``."""
    if k < 1:
        raise ClassIndexError(f"lower central index {k} must be positive")
    layer = P.layer(k)
    pos = {g: i for i, g in enumerate(layer)}
    rows = []
    for g in layer:
        row = [0] * len(layer)
        o = P.orders[g]
        if o is not None:
            row[pos[g]] = o
            for t, x in P.power_tails.get(g, ()):
                if t in pos:
                    row[pos[t]] -= x
        rows.append(row)
    return snf(IntMatrix.from_rows(rows, len(layer)))


def truncate(P: PcPresentation, k: int) -> PcPresentation:
    """Presentation of ``P / gamma_{k+1}``: the generators of weight at most ``k``."""
    keep = sum(1 for w in P.weights if w <= k)

    def cut(tail: Sequence[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
        return tuple((g, x) for g, x in tail if g < keep)

    defs = tuple(
        d if d is None or all(a < keep for a in d.args) or d.kind == DefinitionKind.IMAGE else None
        for d in P.definitions[:keep]
    )
    return PcPresentation(
        weights=P.weights[:keep],
        orders=P.orders[:keep],
        power_tails={i: cut(t) for i, t in P.power_tails.items() if i < keep},
        conj_tails={ij: cut(t) for ij, t in P.conj_tails.items() if ij[1] < keep},
        definitions=defs,
        generator_names=P.generator_names,
        images=tuple(v[:keep] for v in P.images),
    )


# ---------------------------------------------------------------------------
# Quotients
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _QuotientStep:
    source: PcPresentation
    kernel: InducedSubgroup
    survivors: tuple[int, ...]
    target: PcPresentation

    def representative(self, a: Sequence[int]) -> Vector:
        """Canonical coset representative of ``a * kernel``."""
        P = self.source
        cur = tuple(a)
        for d, b in self.kernel.by_depth().items():
            q = cur[d] // b[d]
            if q:
                cur = P.multiply(cur, P.power(b, -q))
        return cur

    def image(self, a: Sequence[int]) -> Vector:
        rep = self.representative(a)
        return tuple(rep[d] for d in self.survivors)

    def lift(self, q: Sequence[int]) -> Vector:
        x = [0] * self.source.n
        for pos, d in enumerate(self.survivors):
            x[d] = q[pos]
        return self.source.element(x)


@dataclass(frozen=True, eq=False)
class QuotientMap:
    """Natural map from ``source`` onto ``target``; composable."""

    steps: tuple[_QuotientStep, ...] = field(default_factory=tuple)

    @property
    def source(self) -> PcPresentation:
        return self.steps[0].source

    @property
    def target(self) -> PcPresentation:
        return self.steps[-1].target

    def image(self, a: Sequence[int]) -> Vector:
        out = tuple(a)
        for step in self.steps:
            out = step.image(out)
        return out

    def lift(self, q: Sequence[int]) -> Vector:
        out = tuple(q)
        for step in reversed(self.steps):
            out = step.lift(out)
        return out

    def then(self, other: QuotientMap) -> QuotientMap:
        if not _same_ambient(self.target, other.source):
            raise AmbientMismatchError("quotient maps do not compose")
        return QuotientMap(self.steps + other.steps)

    def kernel(self) -> InducedSubgroup:
        gens: list[Vector] = []
        for pos, step in enumerate(self.steps):
            prefix = QuotientMap(self.steps[:pos])
            gens.extend(prefix.lift(b) if pos else b for b in step.kernel.basis)
        return normal_closure(self.source, gens)


def quotient_by_normal(P: PcPresentation, S: InducedSubgroup, verify: bool = True) -> tuple[PcPresentation, QuotientMap]:
    """Pc presentation of ``P / S`` with the same weights, and the natural map."""
    if not _same_ambient(P, S.ambient):
        raise AmbientMismatchError("subgroup lives in a different presentation")
    if verify and not is_normal(S):
        raise NotNormalError("subgroup is not normal")
    leads = S.by_depth()
    survivors: list[int] = []
    new_orders: list[int | None] = []
    for d in range(P.n):
        b = leads.get(d)
        if b is None:
            survivors.append(d)
            new_orders.append(P.orders[d])
        elif b[d] > 1:
            survivors.append(d)
            new_orders.append(b[d])
    index = {d: pos for pos, d in enumerate(survivors)}
    provisional = PcPresentation(tuple(P.weights[d] for d in survivors), tuple(new_orders))
    step = _QuotientStep(P, S, tuple(survivors), provisional)

    power_tails = {}
    conj_tails = {}
    for pos, d in enumerate(survivors):
        o = new_orders[pos]
        if o is not None:
            tail = step.image(P.power(P.unit(d), o))
            power_tails[pos] = to_sparse(tail)
        for pos_i, i in enumerate(survivors[:pos]):
            img = list(step.image(P.conjugate(P.unit(d), P.unit(i))))
            img[pos] = 0
            conj_tails[(pos_i, pos)] = to_sparse(img)

    images = tuple(step.image(v) for v in P.images)
    definitions: list[Definition | None] = []
    for pos, d in enumerate(survivors):
        definitions.append(_surviving_definition(P.definitions[d], pos, index, power_tails,
                                                 conj_tails, images, new_orders, P))
    Q = PcPresentation(
        weights=provisional.weights,
        orders=provisional.orders,
        power_tails=power_tails,
        conj_tails=conj_tails,
        definitions=tuple(definitions),
        generator_names=P.generator_names,
        images=images,
    )
    logger.debug("quotient: %d -> %d generators", P.n, Q.n)
    return Q, QuotientMap((_QuotientStep(P, S, tuple(survivors), Q),))


def _surviving_definition(
    d: Definition | None,
    pos: int,
    index: dict[int, int],
    power_tails: dict[int, tuple[tuple[int, int], ...]],
    conj_tails: dict[tuple[int, int], tuple[tuple[int, int], ...]],
    images: tuple[Vector, ...],
    new_orders: list[int | None],
    P: PcPresentation,
) -> Definition | None:
    """Keep a definition only when it still holds literally in the quotient."""
    if d is None:
        return None
    unit = ((pos, 1),)
    if d.kind == DefinitionKind.IMAGE:
        k = d.args[0]
        if k < len(images) and to_sparse(images[k]) == unit:
            return d
        return None
    if d.kind == DefinitionKind.COMMUTATOR:
        j, i = d.args
        if i in index and j in index and conj_tails.get((index[i], index[j])) == unit:
            return Definition.commutator(index[j], index[i])
        return None
    (i,) = d.args
    if i in index and new_orders[index[i]] == P.orders[i] and power_tails.get(index[i]) == unit:
        return Definition.power(index[i])
    return None


def identity_map(P: PcPresentation) -> QuotientMap:
    return QuotientMap((_QuotientStep(P, InducedSubgroup(P), tuple(range(P.n)), P),))


# ---------------------------------------------------------------------------
# Torsion
# ---------------------------------------------------------------------------


def _layer_lattice(P: PcPresentation, k: int) -> tuple[tuple[int, ...], list[list[int]]]:
    """Generators of layer ``k`` and the relation rows of the abelian group they span."""
    layer = P.layer(k)
    pos = {g: i for i, g in enumerate(layer)}
    rows = []
    for g in layer:
        o = P.orders[g]
        if o is None:
            continue
        row = [0] * len(layer)
        row[pos[g]] = o
        for t, x in P.power_tails.get(g, ()):
            row[pos[t]] -= x
        rows.append(row)
    return layer, rows


def _layer_element(P: PcPresentation, layer: Sequence[int], coords: Sequence[int]) -> Vector:
    x = [0] * P.n
    for g, c in zip(layer, coords):
        x[g] = c
    return P.element(x)


def _layer_coords(layer: Sequence[int], a: Sequence[int]) -> list[int]:
    return [a[g] for g in layer]


def torsion_subgroup(P: PcPresentation) -> InducedSubgroup:
    """The torsion subgroup of a finitely generated nilpotent group, as an induced subgroup."""
    c = P.nilpotency_class
    if c == 0:
        return InducedSubgroup(P)
    layer, rows = _layer_lattice(P, c)
    m = len(layer)
    deep_torsion: list[Vector] = []
    if rows:
        # saturation rows outside the relation lattice are the torsion of the last layer
        for s in saturation(IntMatrix.from_rows(rows, m)).to_rows():
            x = _layer_element(P, layer, s)
            if any(x):
                deep_torsion.append(x)
    if deep_torsion:
        Tc = subgroup_closure(P, deep_torsion)
        Q, qmap = quotient_by_normal(P, Tc, verify=False)
        TQ = torsion_subgroup(Q)
        return normal_closure(P, list(Tc.basis) + [qmap.lift(b) for b in TQ.basis])

    upper = truncate(P, c - 1)
    T_upper = torsion_subgroup(upper)
    if T_upper.is_trivial():
        return InducedSubgroup(P)
    index = T_upper.order()
    assert index is not None
    lifts = [tuple(b) + (0,) * (P.n - upper.n) for b in T_upper.basis]
    lifts = [P.element(v) for v in lifts]
    # x -> x^index is a homomorphism from the preimage of T_upper into the central layer
    transfer_rows = [_layer_coords(layer, P.power(t, index)) for t in lifts]
    block = transfer_rows + [[index * int(i == j) for j in range(m)] for i in range(m)] + rows
    kernel = left_kernel(IntMatrix.from_rows(block, m)) if m else IntMatrix.identity(len(lifts))
    witnesses: list[Vector] = []
    for kv in kernel.to_rows():
        x = P.zero()
        for t, e in zip(lifts, kv):
            if e:
                x = P.multiply(x, P.power(t, e))
        z = kv[len(lifts) : len(lifts) + m]
        if any(z):
            x = P.multiply(x, _layer_element(P, layer, z))
        if any(x):
            witnesses.append(x)
    for i, s in enumerate(lifts):
        for t in lifts[i + 1 :]:
            comm = P.commutator(s, t)
            if any(comm):
                witnesses.append(comm)
    return normal_closure(P, witnesses)


def torsion_quotient(P: PcPresentation) -> tuple[PcPresentation, QuotientMap]:
    """``P / T`` with ``T`` the torsion subgroup, and the natural map."""
    qmap = identity_map(P)
    Q = P
    while True:
        T = torsion_subgroup(Q)
        if T.is_trivial():
            return Q, qmap
        logger.info("torsion subgroup of order %s", T.order())
        Q, step = quotient_by_normal(Q, T, verify=False)
        qmap = qmap.then(step)


def torsion_primes(T: InducedSubgroup) -> list[int]:
    from sympy import factorint

    order = T.order()
    if order is None:
        raise StructureError("torsion subgroup must be finite")
    return sorted(int(p) for p in factorint(order))


def presentation_equal(P1: PcPresentation, P2: PcPresentation) -> bool:
    """Identity of canonical serializations. ``True`` implies isomorphism, ``False`` does not
    rule it out."""
    return P1.to_json() == P2.to_json()


def exponent_of(divisors: Sequence[int]) -> int | None:
    finite = [d for d in divisors if d]
    return math.lcm(*finite) if finite else (None if divisors else 1)
