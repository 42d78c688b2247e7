"""Nilpotent quotient algorithm with identical (law) variables.

The class-``c+1`` quotient is obtained from the class-``c`` quotient ``P`` by the tails method:

1. every relation of ``P`` that does not define a generator gets a fresh central generator of
   weight ``c+1`` (its tail), giving a covering presentation ``P*``;
2. the overlap test words of ``P*`` and the relator instances evaluated in ``P*`` yield integer
   relations among the tails;
3. the row HNF of those relations decides which tails are eliminated, which become generators of
   finite relative order and which stay free. The survivors form layer ``c+1``.

Tails are ordered so that commutators ``[g_j, g_i]`` with ``weight(g_j) = c`` and
``weight(g_i) = 1`` come last; the HNF pivots eliminate earlier columns first, so the surviving
generators are defined by those commutators wherever possible.
"""

from __future__ import annotations

import itertools
import logging
import random
import time
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from multiprocessing import Pool
from typing import TYPE_CHECKING

from engelnq.pcp import Definition, PcPresentation, Sparse, Vector
from engelnq.schemas import (
    DefinitionKind,
    InstantiationMode,
    InstantiationStrategy,
    NqStateDocument,
)
from engelnq.words import EngelNqError, FpPresentation, Word, format_presentation
from engelnq.zlinalg import IntMatrix, hermite_rows, left_kernel, reduce_mod_lattice

if TYPE_CHECKING:
    from engelnq.store import CheckpointStore

logger = logging.getLogger(__name__)


class NqError(EngelNqError):
    """Nilpotent quotient computation failed."""


class EngineInconsistencyError(NqError):
    """An internal invariant of the class extension broke. Never repaired silently."""


class BudgetExceededError(NqError):
    def __init__(self, message: str, last_class: int = 0, checkpoint_key: str | None = None) -> None:
        super().__init__(message)
        self.last_class = last_class
        self.checkpoint_key = checkpoint_key


class InstantiationError(NqError):
    """The instantiation strategy cannot be applied to the current quotient."""


Assignment = dict[int, Vector]


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NqState:
    current_class: int
    pcp: PcPresentation
    strategy: InstantiationStrategy = field(default_factory=InstantiationStrategy)
    instance_counts: tuple[int, ...] = ()  # relator instances evaluated per class
    stable: bool = False
    law_check_failures: tuple[int, ...] = ()

    @property
    def epimorphism(self) -> dict[str, Vector]:
        return dict(zip(self.pcp.generator_names, self.pcp.images))

    def layer_ranks(self) -> list[int]:
        return [len(self.pcp.layer(k)) for k in range(1, self.pcp.nilpotency_class + 1)]

    def to_document(self) -> NqStateDocument:
        return NqStateDocument(
            current_class=self.current_class,
            strategy=self.strategy,
            instance_counts=list(self.instance_counts),
            stable=self.stable,
            law_check_failures=list(self.law_check_failures),
            pcp=self.pcp.to_document(),
        )

    def to_json(self) -> str:
        return self.to_document().model_dump_json(by_alias=True)

    @classmethod
    def from_json(cls, text: str) -> NqState:
        doc = NqStateDocument.model_validate_json(text)
        return cls(
            current_class=doc.current_class,
            pcp=PcPresentation.from_document(doc.pcp),
            strategy=doc.strategy,
            instance_counts=tuple(doc.instance_counts),
            stable=doc.stable,
            law_check_failures=tuple(doc.law_check_failures),
        )


# ---------------------------------------------------------------------------
# Tails
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Tail:
    kind: DefinitionKind
    args: tuple[int, ...]  # image: (k,), power: (i,), commutator: (j, i)

    def definition(self) -> Definition:
        return Definition(self.kind, self.args)

    def old_part(self, P: PcPresentation) -> Sparse:
        """The right-hand side of the relation before the tail is appended."""
        if self.kind == DefinitionKind.IMAGE:
            return tuple((g, x) for g, x in enumerate(P.images[self.args[0]]) if x)
        if self.kind == DefinitionKind.POWER:
            return tuple(P.power_tails.get(self.args[0], ()))
        j, i = self.args
        return tuple(P.conj_tails.get((i, j), ()))


def _tails(P: PcPresentation, c: int) -> list[_Tail]:
    defined = {d for d in P.definitions if d is not None}
    image = [
        _Tail(DefinitionKind.IMAGE, (k,))
        for k in range(len(P.images))
        if Definition.image(k) not in defined
    ]
    power = [
        _Tail(DefinitionKind.POWER, (i,))
        for i in range(P.n)
        if P.orders[i] is not None and Definition.power(i) not in defined
    ]
    conj: list[_Tail] = []
    candidates: list[_Tail] = []
    for i in range(P.n):
        for j in range(i + 1, P.n):
            if P.weights[i] + P.weights[j] > c + 1:
                break
            if Definition.commutator(j, i) in defined:
                continue
            tail = _Tail(DefinitionKind.COMMUTATOR, (j, i))
            if P.weights[j] == c and P.weights[i] == 1:
                candidates.append(tail)
            else:
                conj.append(tail)
    candidates.sort(key=lambda t: t.args)
    return image + power + conj + candidates


def _cover(P: PcPresentation, tails: Sequence[_Tail], c: int) -> PcPresentation:
    """``P`` with one new central generator of weight ``c+1`` appended to each tailed relation."""
    n, m = P.n, len(tails)
    power: dict[int, Sparse] = dict(P.power_tails)
    conj: dict[tuple[int, int], Sparse] = dict(P.conj_tails)
    images = [list(v) + [0] * m for v in P.images]
    for t, tail in enumerate(tails):
        g = n + t
        if tail.kind == DefinitionKind.IMAGE:
            images[tail.args[0]][g] = 1
        elif tail.kind == DefinitionKind.POWER:
            (i,) = tail.args
            power[i] = power.get(i, ()) + ((g, 1),)
        else:
            j, i = tail.args
            conj[(i, j)] = conj.get((i, j), ()) + ((g, 1),)
    return PcPresentation(
        weights=P.weights + (c + 1,) * m,
        orders=P.orders + (None,) * m,
        power_tails=power,
        conj_tails=conj,
        definitions=P.definitions + (None,) * m,
        generator_names=P.generator_names,
        images=tuple(tuple(v) for v in images),
    )


def _pivot_rows(basis: Sequence[Sequence[int]]) -> dict[int, Sequence[int]]:
    return {next(j for j, x in enumerate(row) if x): row for row in basis}


def _assemble(
    P: PcPresentation, tails: Sequence[_Tail], relations: Iterable[Sequence[int]], c: int
) -> tuple[PcPresentation | None, list[int]]:
    """Eliminate tails by the HNF of ``relations`` and append the survivors as layer ``c+1``.
    Also returns the indices of the surviving tails."""
    n, m = P.n, len(tails)
    basis = hermite_rows(relations, m)
    pivots = _pivot_rows(basis)
    survivors = [t for t in range(m) if t not in pivots or pivots[t][t] > 1]
    logger.debug("layer %d: %d tails, rank %d, %d survivors", c + 1, m, len(basis), len(survivors))
    if not survivors:
        return None, []
    pos = {t: n + k for k, t in enumerate(survivors)}

    def layer(vec: Sequence[int]) -> Sparse:
        red = reduce_mod_lattice(vec, basis)
        return tuple((pos[t], x) for t, x in enumerate(red) if x)

    def unit(t: int) -> Sparse:
        return layer([int(k == t) for k in range(m)])

    power: dict[int, Sparse] = dict(P.power_tails)
    conj: dict[tuple[int, int], Sparse] = dict(P.conj_tails)
    images = [list(v) for v in P.images]
    for t, tail in enumerate(tails):
        value = unit(t)
        if tail.kind == DefinitionKind.IMAGE:
            images[tail.args[0]].extend([0] * len(survivors))
            for g, x in value:
                images[tail.args[0]][g] = x
        elif tail.kind == DefinitionKind.POWER:
            (i,) = tail.args
            power[i] = power.get(i, ()) + value
        else:
            j, i = tail.args
            conj[(i, j)] = conj.get((i, j), ()) + value
    images = [v + [0] * (n + len(survivors) - len(v)) for v in images]

    orders: list[int | None] = []
    definitions: list[Definition | None] = []
    for k, t in enumerate(survivors):
        row = pivots.get(t)
        if row is None:
            orders.append(None)
        else:
            orders.append(row[t])
            rest = [-x for x in row]
            rest[t] = 0
            power[n + k] = layer(rest)
        tail = tails[t]
        definitions.append(tail.definition() if not tail.old_part(P) else None)

    return PcPresentation(
        weights=P.weights + (c + 1,) * len(survivors),
        orders=P.orders + tuple(orders),
        power_tails=power,
        conj_tails=conj,
        definitions=P.definitions + tuple(definitions),
        generator_names=P.generator_names,
        images=tuple(tuple(v) for v in images),
    ), survivors


# ---------------------------------------------------------------------------
# Instantiation
# ---------------------------------------------------------------------------


def weighted_points(weights: Sequence[int], degree: int) -> list[Vector]:
    """Nonnegative exponent vectors ``e`` with ``sum(e_i * weights[i]) <= degree``, in
    lexicographic order, the zero vector first."""
    out: list[Vector] = []
    prefix: list[int] = []

    def walk(i: int, left: int) -> None:
        if i == len(weights):
            out.append(tuple(prefix))
            return
        for x in range(left // weights[i] + 1):
            prefix.append(x)
            walk(i + 1, left - x * weights[i])
            prefix.pop()

    walk(0, degree)
    return out


def _point_elements(P: PcPresentation, degree: int) -> list[tuple[int, Vector]]:
    """``(weighted degree, element)`` for every point of ``weighted_points``."""
    return [
        (sum(x * w for x, w in zip(e, P.weights)), P.element(e))
        for e in weighted_points(P.weights, degree)
    ]


def instance_values(
    P: PcPresentation, strategy: InstantiationStrategy, degree: int | None = None
) -> list[Vector]:
    """Nontrivial elements a variable ranges over under ``strategy``, in a fixed order.

    ``degree`` bounds the ``poly`` points and defaults to the class of ``P``.
    """
    if strategy.mode == InstantiationMode.EXHAUSTIVE:
        if not P.is_finite():
            raise InstantiationError("exhaustive instantiation needs a finite quotient")
        return [v for v in P.elements() if any(v)]
    if strategy.mode == InstantiationMode.POLY:
        bound = P.nilpotency_class if degree is None else degree
        return list(dict.fromkeys(v for _, v in _point_elements(P, bound) if any(v)))
    base = [P.unit(i) for i in range(P.n)]
    if strategy.mode == InstantiationMode.PAIRS:
        for size in range(2, strategy.depth + 1):
            for combo in itertools.combinations(range(P.n), size):
                v = P.zero()
                for i in combo:
                    v = P.multiply(v, base[i])
                base.append(v)
    out = list(base)
    if strategy.include_inverses:
        out.extend(P.inverse(v) for v in base)
    return list(dict.fromkeys(out))


def _joint_points(P: PcPresentation, count: int, degree: int) -> list[tuple[Vector, ...]]:
    """Tuples of ``count`` points whose weighted degrees sum to at most ``degree``, except the
    all-trivial tuple."""
    points = _point_elements(P, degree)
    out: list[tuple[Vector, ...]] = []

    def walk(prefix: tuple[Vector, ...], left: int) -> None:
        if len(prefix) == count:
            if any(any(v) for v in prefix):
                out.append(prefix)
            return
        for d, v in points:
            if d <= left:
                walk(prefix + (v,), left - d)

    walk((), degree)
    return list(dict.fromkeys(out))


def instantiation_tuples(
    state: NqState,
    relator: Word,
    fp: FpPresentation,
    strategy: InstantiationStrategy | None = None,
    degree: int | None = None,
) -> list[Assignment]:
    """Assignments of the relator's identical variables, in a fixed lexicographic order.

    ``degree`` bounds the ``poly`` points and defaults to ``current_class + 1``.
    """
    strategy = strategy or state.strategy
    variables = fp.identical_in(relator)
    if not variables:
        return [{}]
    if strategy.mode == InstantiationMode.POLY:
        bound = state.current_class + 1 if degree is None else degree
        joint = _joint_points(state.pcp, len(variables), bound)
        return [dict(zip(variables, combo)) for combo in joint]
    values = instance_values(state.pcp, strategy)
    if len(variables) > 1:
        # mixed assignments with some variables trivial
        values = [state.pcp.zero(), *values]
    return [dict(zip(variables, combo)) for combo in itertools.product(values, repeat=len(variables))]


def _lift(v: Vector, m: int) -> Vector:
    return v + (0,) * m


def _check_deadline(deadline: float | None, c: int) -> None:
    if deadline is not None and time.monotonic() > deadline:
        raise BudgetExceededError(f"timeout reached while extending class {c}", c)


_Chunk = tuple[PcPresentation, Word, list[Vector | None], list[Assignment], float | None, int]


def _evaluate_chunk(args: _Chunk) -> list[Vector]:
    cover, relator, images, assignments, deadline, c = args
    out = []
    for assignment in assignments:
        _check_deadline(deadline, c)
        full = [assignment.get(g) if img is None else img for g, img in enumerate(images)]
        out.append(cover.evaluate_word(full, relator))  # type: ignore[arg-type]
    return out


def _relator_values(
    cover: PcPresentation,
    fp: FpPresentation,
    jobs: list[tuple[Word, list[Assignment]]],
    threads: int,
    deadline: float | None = None,
    c: int = 0,
) -> list[Vector]:
    """Relator values in ``cover``, in job order regardless of ``threads``."""
    images: list[Vector | None] = [None] * len(fp.generators)
    for pos, g in enumerate(fp.free_generators):
        images[g] = cover.images[pos]
    chunks: list[_Chunk] = []
    for relator, assignments in jobs:
        size = max(1, -(-len(assignments) // max(threads, 1)))
        for start in range(0, len(assignments), size):
            chunks.append((cover, relator, images, assignments[start : start + size], deadline, c))
    if threads > 1 and len(chunks) > 1:
        with Pool(processes=threads) as pool:
            results = pool.map(_evaluate_chunk, chunks)
    else:
        results = [_evaluate_chunk(chunk) for chunk in chunks]
    return [v for chunk in results for v in chunk]


# ---------------------------------------------------------------------------
# Class one
# ---------------------------------------------------------------------------


def _abelian_rows(fp: FpPresentation) -> list[list[int]]:
    """Exact abelianization of the relators: each identical variable ranges over the whole
    (abelian) group, so it contributes its exponent sum times every generator."""
    free = fp.free_generators
    rows = []
    for relator in fp.relators:
        rows.append([relator.exponent_sum(g) for g in free])
        for x in fp.identical_in(relator):
            sigma = relator.exponent_sum(x)
            if sigma:
                rows.extend([sigma * int(k == col) for k in range(len(free))] for col in range(len(free)))
    return rows


def _class_one(names: Sequence[str], basis: Sequence[Sequence[int]]) -> PcPresentation:
    r = len(names)
    pivots = _pivot_rows(basis)
    survivors = [k for k in range(r) if k not in pivots or pivots[k][k] > 1]
    pos = {k: i for i, k in enumerate(survivors)}

    def image(vec: Sequence[int]) -> Vector:
        red = reduce_mod_lattice(vec, basis)
        out = [0] * len(survivors)
        for k, x in enumerate(red):
            if x:
                out[pos[k]] = x
        return tuple(out)

    orders: list[int | None] = []
    power: dict[int, Sparse] = {}
    for i, k in enumerate(survivors):
        row = pivots.get(k)
        if row is None:
            orders.append(None)
            continue
        orders.append(row[k])
        rest = [-x for x in row]
        rest[k] = 0
        power[i] = tuple((g, x) for g, x in enumerate(image(rest)) if x)
    return PcPresentation(
        weights=(1,) * len(survivors),
        orders=tuple(orders),
        power_tails=power,
        definitions=tuple(Definition.image(k) for k in survivors),
        generator_names=tuple(names),
        images=tuple(image([int(j == k) for j in range(r)]) for k in range(r)),
    )


def init_class_one(fp: FpPresentation, strategy: InstantiationStrategy | None = None) -> NqState:
    """Abelianization of ``fp`` with one pc generator per surviving free generator."""
    strategy = strategy or InstantiationStrategy()
    free = fp.free_generators
    if not free:
        raise NqError("all generators are identical variables")
    names = [fp.generators[g].name for g in free]
    basis = hermite_rows(_abelian_rows(fp), len(free))
    P = _class_one(names, basis)
    logger.info("class 1: %d generators, relative orders %s", P.n, list(P.orders))
    return NqState(1, P, strategy, (0,))


# ---------------------------------------------------------------------------
# Class extension
# ---------------------------------------------------------------------------


def _consistency_rows(
    cover: PcPresentation, n: int, c: int, deadline: float | None = None
) -> list[list[int]]:
    rows = []
    for label, left, right in cover.test_words(weighted=True):
        _check_deadline(deadline, c)
        if left[:n] != right[:n]:
            raise EngineInconsistencyError(f"class-c part of test word {label} differs")
        row = [a - b for a, b in zip(left[n:], right[n:])]
        if any(row):
            rows.append(row)
    return rows


def extend_one_class(
    state: NqState,
    fp: FpPresentation,
    strategy: InstantiationStrategy | None = None,
    threads: int = 1,
    verify: bool = True,
    deadline: float | None = None,
) -> NqState | None:
    """Class ``c+1`` quotient, or ``None`` when layer ``c+1`` is trivial (the quotient is the
    largest nilpotent quotient).

    ``deadline`` is a ``time.monotonic()`` value; passing it raises ``BudgetExceededError``
    from inside the consistency and relator loops.
    """
    strategy = strategy or state.strategy
    P, c = state.pcp, state.current_class
    tails = _tails(P, c)
    if not tails:
        return None
    n, m = P.n, len(tails)
    cover = _cover(P, tails, c)
    rows = _consistency_rows(cover, n, c, deadline)
    logger.debug("class %d: %d tails, %d consistency relations", c + 1, m, len(rows))

    jobs: list[tuple[Word, list[Assignment]]] = []
    for relator in fp.relators:
        _check_deadline(deadline, c)
        variables = fp.identical_in(relator)
        assignments: list[Assignment] = [{x: cover.zero() for x in variables}]
        if variables:
            assignments.extend(
                {x: _lift(v, m) for x, v in a.items()}
                for a in instantiation_tuples(state, relator, fp, strategy, c + 1)
            )
        jobs.append((relator, assignments))
        # a central value z of x contributes z^sigma
        for x in variables:
            sigma = relator.exponent_sum(x)
            if sigma:
                rows.extend([sigma * int(k == t) for k in range(m)] for t in range(m))
    instances = sum(len(a) for _, a in jobs)
    for value in _relator_values(cover, fp, jobs, threads, deadline, c):
        if any(value[:n]):
            raise EngineInconsistencyError("relator instance is nontrivial below the new layer")
        if any(value[n:]):
            rows.append(list(value[n:]))
    logger.debug("class %d: %d relator instances, %d relation rows", c + 1, instances, len(rows))

    Q, _ = _assemble(P, tails, rows, c)
    if Q is None:
        return None
    if verify:
        violations = Q.consistency_check(weighted=True)
        if violations:
            raise EngineInconsistencyError(
                f"class {c + 1} presentation inconsistent: {violations[0]}"
            )
    return NqState(c + 1, Q, strategy, state.instance_counts + (instances,), False,
                   state.law_check_failures)


# ---------------------------------------------------------------------------
# Law check
# ---------------------------------------------------------------------------


def law_violations(
    P: PcPresentation, fp: FpPresentation, samples: int, rng: random.Random
) -> list[tuple[Word, Assignment]]:
    """Relator instances over random elements that do not vanish in ``P``."""
    images: list[Vector | None] = [None] * len(fp.generators)
    for pos, g in enumerate(fp.free_generators):
        images[g] = P.images[pos]
    bad = []
    for relator in fp.relators:
        variables = fp.identical_in(relator)
        if not variables:
            continue
        for _ in range(samples):
            assignment = {x: P.random_element(rng) for x in variables}
            full = [assignment.get(g) if img is None else img for g, img in enumerate(images)]
            if any(P.evaluate_word(full, relator)):  # type: ignore[arg-type]
                bad.append((relator, assignment))
    return bad


def _stronger(strategy: InstantiationStrategy) -> InstantiationStrategy | None:
    """Next strategy of the escalation ``gens -> pairs -> poly``; ``None`` after ``poly`` and
    for ``exhaustive``, which already cover the whole quotient."""
    if strategy.mode == InstantiationMode.GENS:
        return strategy.model_copy(update={"mode": InstantiationMode.PAIRS})
    if strategy.mode == InstantiationMode.PAIRS:
        return strategy.model_copy(update={"mode": InstantiationMode.POLY})
    return None


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def nilpotent_quotient(
    fp: FpPresentation,
    max_class: int | None = None,
    strategy: InstantiationStrategy | None = None,
    *,
    store: CheckpointStore | None = None,
    label: str = "",
    threads: int = 1,
    seed: int = 0,
    law_samples: int = 200,
    step_budget: int = 16,
    timeout: float | None = None,
    verify: bool = True,
) -> NqState:
    """Largest nilpotent quotient of ``fp`` of class at most ``max_class``.

    With ``max_class=None`` the quotient must stabilize within ``step_budget`` extensions.
    Checkpoints are read from and written to ``store`` when given. ``timeout`` is also checked
    inside a class extension, so a long class is interrupted and the previous class stays the
    last checkpoint.
    """
    if max_class is not None and max_class < 1:
        raise NqError(f"maximal class {max_class} must be positive")
    strategy = strategy or InstantiationStrategy()
    started = time.monotonic()
    deadline = None if timeout is None else started + timeout
    key: str | None = None
    state: NqState | None = None
    if store is not None:
        text = format_presentation(fp)
        key = store.key_for(text, strategy)
        store.register(key, label or (fp.name or ""), text, strategy)
        state = store.latest_state(key, max_class, verify=verify)
        if state is not None:
            logger.info("resuming %s from class %d", key, state.current_class)
    if state is None:
        state = init_class_one(fp, strategy)
        if store is not None and key is not None:
            store.save_state(key, state)
    rng = random.Random(seed)
    steps = 0
    while not state.stable and (max_class is None or state.current_class < max_class):
        if max_class is None and steps >= step_budget:
            raise BudgetExceededError(
                f"no stabilization after {step_budget} class extensions", state.current_class, key
            )
        if deadline is not None and time.monotonic() > deadline:
            raise BudgetExceededError(
                f"timeout of {timeout}s reached at class {state.current_class}",
                state.current_class,
                key,
            )
        t0 = time.monotonic()
        logger.info("extending class %d (%d generators)", state.current_class, state.pcp.n)
        try:
            nxt = extend_one_class(state, fp, state.strategy, threads, verify, deadline)
            if nxt is not None and law_samples:
                nxt = _checked(state, nxt, fp, law_samples, rng, threads, verify, deadline)
        except BudgetExceededError:
            raise BudgetExceededError(
                f"timeout of {timeout}s reached while extending class {state.current_class}",
                state.current_class,
                key,
            ) from None
        steps += 1
        if nxt is None:
            state = replace(state, stable=True)
            logger.info("stable at class %d", state.current_class)
        else:
            state = nxt
            logger.info(
                "class %d: %d generators (%.1fs)",
                state.current_class,
                state.pcp.n,
                time.monotonic() - t0,
            )
        if store is not None and key is not None:
            store.save_state(key, state)
    if store is not None and key is not None and not state.stable:
        store.set_status(key, "capped")
    return state


def _checked(
    state: NqState,
    nxt: NqState,
    fp: FpPresentation,
    samples: int,
    rng: random.Random,
    threads: int,
    verify: bool,
    deadline: float | None = None,
) -> NqState | None:
    """Random law check on an extension. A failure recomputes the class with the next stronger
    strategy until the check passes; a failure of the strongest strategy raises ``NqError``.
    Without ``escalate`` the failing class is only recorded in ``law_check_failures``."""
    while law_violations(nxt.pcp, fp, samples, rng):
        strategy = nxt.strategy
        if not strategy.escalate:
            logger.warning("law check fails at class %d", nxt.current_class)
            return replace(nxt, law_check_failures=nxt.law_check_failures + (nxt.current_class,))
        stronger = _stronger(strategy)
        if stronger is None:
            raise NqError(
                f"law check fails at class {nxt.current_class} with {strategy.label()} instantiation"
            )
        logger.warning(
            "law check failed at class %d, escalating to %s", nxt.current_class, stronger.label()
        )
        redo = extend_one_class(
            replace(state, strategy=stronger), fp, stronger, threads, verify, deadline
        )
        if redo is None:
            return None
        nxt = redo
    return nxt


# ---------------------------------------------------------------------------
# Canonical re-derivation
# ---------------------------------------------------------------------------


def _layer_coords(G: PcPresentation, a: Sequence[int], k: int) -> list[int]:
    if any(x for g, x in enumerate(a) if G.weights[g] < k):
        raise EngineInconsistencyError(f"tail value lies outside gamma_{k}")
    return [a[g] for g in G.layer(k)]


def _layer_relations(G: PcPresentation, k: int) -> list[list[int]]:
    layer = G.layer(k)
    pos = {g: i for i, g in enumerate(layer)}
    rows = []
    for g in layer:
        o = G.orders[g]
        if o is None:
            continue
        row = [0] * len(layer)
        row[pos[g]] = o
        for t, x in G.power_tails.get(g, ()):
            if t in pos:
                row[pos[t]] -= x
        rows.append(row)
    return rows


def _kernel_rows(values: Sequence[Sequence[int]], G: PcPresentation, k: int) -> list[list[int]]:
    """Integer relations among ``values`` in the section ``gamma_k / gamma_{k+1}`` of ``G``."""
    width = len(G.layer(k))
    m = len(values)
    block = [list(v) for v in values] + _layer_relations(G, k)
    if width == 0:
        return [[int(i == j) for j in range(m)] for i in range(m)]
    kernel = left_kernel(IntMatrix.from_rows(block, width))
    return [row[:m] for row in kernel.to_rows() if any(row[:m])]


def canonical_form(G: PcPresentation) -> PcPresentation:
    """Re-derive the presentation of ``G`` through the class extension, with every relation
    among tails read off ``G`` itself. ``G`` must have lower central weights and epimorphism
    images generating it. Equal groups with equal generator images give identical output."""
    if not G.generator_names:
        raise NqError("canonical form needs epimorphism images")
    names = G.generator_names
    basis = hermite_rows(_kernel_rows([_layer_coords(G, v, 1) for v in G.images], G, 1), len(names))
    P = _class_one(names, basis)
    lifts: list[Vector] = [G.images[d.args[0]] for d in P.definitions if d is not None]
    c = 1
    while True:
        tails = _tails(P, c)
        values = [_tail_value(G, P, lifts, t) for t in tails]
        rows = _kernel_rows([_layer_coords(G, v, c + 1) for v in values], G, c + 1)
        Q, survivors = _assemble(P, tails, rows, c)
        if Q is None:
            return P
        lifts.extend(values[t] for t in survivors)
        P, c = Q, c + 1


def _lift_element(G: PcPresentation, lifts: Sequence[Vector], a: Sequence[int]) -> Vector:
    out = G.zero()
    for g, x in enumerate(a):
        if x:
            out = G.multiply(out, G.power(lifts[g], x))
    return out


def _tail_value(G: PcPresentation, P: PcPresentation, lifts: Sequence[Vector], tail: _Tail) -> Vector:
    """The element of ``G`` a tail stands for: (old right-hand side)^-1 * (left-hand side)."""
    dense = [0] * P.n
    for g, x in tail.old_part(P):
        dense[g] = x
    rhs = _lift_element(G, lifts, dense)
    if tail.kind == DefinitionKind.IMAGE:
        lhs = G.images[tail.args[0]]
        return G.multiply(G.inverse(rhs), lhs)
    if tail.kind == DefinitionKind.POWER:
        (i,) = tail.args
        o = P.orders[i]
        assert o is not None
        return G.multiply(G.inverse(rhs), G.power(lifts[i], o))
    j, i = tail.args
    # g_j^{g_i} = g_j * rhs * t
    lhs = G.conjugate(lifts[j], lifts[i])
    return G.multiply(G.inverse(G.multiply(lifts[j], rhs)), lhs)
