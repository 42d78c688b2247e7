"""Engel laws, Engel-element verdicts and the Newman-Nickel family of groups."""

from __future__ import annotations

import enum
import itertools
import logging
import math
import random
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from engelnq.nq import instance_values, nilpotent_quotient
from engelnq.pcp import PcPresentation, Vector
from engelnq.schemas import DefinitionKind, ExperimentReport, InstantiationStrategy
from engelnq.structure import (
    InducedSubgroup,
    is_normal,
    lower_central_term,
    membership,
    normal_closure,
    quotient_by_normal,
    subgroup_closure,
    subgroup_commutator,
    subgroup_lower_central_term,
)
from engelnq.words import EngelNqError, FpPresentation, Word, left_normed_comm_word, parse_presentation

logger = logging.getLogger(__name__)


class EngelLabError(EngelNqError):
    """Invalid input to an Engel construction."""


# ---------------------------------------------------------------------------
# Laws
# ---------------------------------------------------------------------------


class EngelKind(str, enum.Enum):
    RIGHT = "right"
    LEFT = "left"


@dataclass(frozen=True)
class EngelLaw:
    """``[subject, x, ..., x] = 1`` (right) or ``[x, subject, ..., subject] = 1`` (left) with
    ``n`` repeated entries and ``x`` identical."""

    kind: EngelKind
    n: int
    subject: str
    variable: str

    def __post_init__(self) -> None:
        if self.n < 1:
            raise EngelLabError(f"Engel degree {self.n} must be positive")
        if self.subject == self.variable:
            raise EngelLabError("subject and variable must differ")


def engel_relator(law: EngelLaw, names: Sequence[str]) -> Word:
    try:
        s = Word.generator(list(names).index(law.subject))
        x = Word.generator(list(names).index(law.variable))
    except ValueError:
        raise EngelLabError(f"law uses a name outside {list(names)}") from None
    if law.kind == EngelKind.RIGHT:
        return left_normed_comm_word([s] + [x] * law.n)
    return left_normed_comm_word([x] + [s] * law.n)


def engel_presentation(
    generators: Sequence[str], subjects: Sequence[str], n: int, variable: str = "x", name: str | None = None
) -> FpPresentation:
    """Group on ``generators`` in which every subject is right ``n``-Engel."""
    names = [*generators, variable]
    relators = [engel_relator(EngelLaw(EngelKind.RIGHT, n, s, variable), names) for s in subjects]
    return FpPresentation.build(names, relators, [variable], name)


def order_label(order: int | None) -> int | str:
    return "infinite" if order is None else order


def engel_comm(P: PcPresentation, x: Sequence[int], h: Sequence[int], n: int) -> Vector:
    """``[x,_n h]``."""
    out = tuple(x)
    for _ in range(n):
        out = P.commutator(out, h)
    return out


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------


class VerdictStatus(str, enum.Enum):
    PROVED_ON_INSTANCES = "proved-on-instances"
    HOLDS_ON_RANDOM_SAMPLE = "holds-on-random-sample"
    COUNTEREXAMPLE = "counterexample"


@dataclass(frozen=True)
class EngelVerdict:
    status: VerdictStatus
    checked: int = 0
    witness: Vector | None = None
    value: Vector | None = None  # [g,_n witness]
    value_order: int | None = None

    @property
    def holds(self) -> bool:
        return self.status != VerdictStatus.COUNTEREXAMPLE


def is_right_n_engel(
    P: PcPresentation,
    g: Sequence[int],
    n: int,
    strategy: InstantiationStrategy | None = None,
    samples: int = 200,
    rng: random.Random | None = None,
) -> EngelVerdict:
    """Search the strategy's test set, then ``samples`` random elements, for ``h`` with
    ``[g,_n h] != 1``."""
    strategy = strategy or InstantiationStrategy()
    if all(not any(P.commutator(g, P.unit(i))) for i in range(P.n)):
        return EngelVerdict(VerdictStatus.PROVED_ON_INSTANCES)
    tests = instance_values(P, strategy)
    for h in tests:
        value = engel_comm(P, g, h, n)
        if any(value):
            return EngelVerdict(VerdictStatus.COUNTEREXAMPLE, len(tests), h, value, P.order(value))
    if not samples:
        return EngelVerdict(VerdictStatus.PROVED_ON_INSTANCES, len(tests))
    rng = rng or random.Random(0)
    for _ in range(samples):
        h = P.random_element(rng)
        value = engel_comm(P, g, h, n)
        if any(value):
            return EngelVerdict(
                VerdictStatus.COUNTEREXAMPLE, len(tests) + samples, h, value, P.order(value)
            )
    return EngelVerdict(VerdictStatus.HOLDS_ON_RANDOM_SAMPLE, len(tests) + samples)


@dataclass(frozen=True)
class ClosureEntry:
    element: str
    verdict: EngelVerdict
    partner_order: int | None = None  # order of [element,_n partner] when a partner is given


def closure_report(
    P: PcPresentation,
    candidates: Mapping[str, Sequence[int]],
    n: int,
    partner: Sequence[int] | None = None,
    strategy: InstantiationStrategy | None = None,
    samples: int = 200,
    seed: int = 0,
) -> list[ClosureEntry]:
    """Verdicts for the inverse of each candidate and the product of each ordered pair."""
    rng = random.Random(seed)
    items: list[tuple[str, Vector]] = []
    for name, x in candidates.items():
        items.append((f"{name}^-1", P.inverse(x)))
    for (n1, x), (n2, y) in itertools.permutations(candidates.items(), 2):
        items.append((f"{n1}*{n2}", P.multiply(x, y)))
    out = []
    for label, g in items:
        verdict = is_right_n_engel(P, g, n, strategy, samples, rng)
        order = None
        if partner is not None:
            order = P.order(engel_comm(P, g, partner, n))
        out.append(ClosureEntry(label, verdict, order))
        logger.debug("closure %s: %s", label, verdict.status.value)
    return out


# ---------------------------------------------------------------------------
# Newman-Nickel groups
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NnGroup:
    n: int
    pcp: PcPresentation
    a: Vector
    b: Vector
    t: Vector
    u_parts: tuple[Vector, ...]
    u: Vector
    v: Vector
    w: Vector
    n0: InducedSubgroup
    big_n: InducedSubgroup
    n0_normal: bool
    big_n_normal: bool
    b_closure_class_two: bool


def _b_degrees(P: PcPresentation) -> list[int]:
    """Number of ``b`` entries in the commutator defining each generator."""
    out: list[int] = []
    for d in P.definitions:
        if d is None:
            raise EngelLabError("free nilpotent quotient has an undefined generator")
        if d.kind == DefinitionKind.IMAGE:
            out.append(int(P.generator_names[d.args[0]] == "b"))
        elif d.kind == DefinitionKind.COMMUTATOR:
            j, i = d.args
            out.append(out[j] + out[i])
        else:
            out.append(out[d.args[0]])
    return out


def _product(P: PcPresentation, elems: Sequence[Sequence[int]]) -> Vector:
    out = P.zero()
    for e in elems:
        out = P.multiply(out, e)
    return out


def newman_nickel_group(n: int, threads: int = 1) -> NnGroup:
    """The class-``n+2`` quotient of the free group on ``a, b`` with ``gamma_4`` abelian and every
    commutator with at least three entries ``b`` trivial, together with ``[b,_{n+1} a]`` and
    ``[b,_n a, b]``."""
    if n < 3:
        raise EngelLabError(f"Newman-Nickel groups need n >= 3, got {n}")
    free = parse_presentation("group F2\ngenerators a, b\nrelators\n")
    F = nilpotent_quotient(free, n + 2, threads=threads, law_samples=0).pcp
    a, b = F.image("a"), F.image("b")
    degrees = _b_degrees(F)
    gamma4 = lower_central_term(F, 4)
    killers = [F.unit(g) for g, deg in enumerate(degrees) if deg >= 3]
    killers.append(engel_comm(F, b, a, n + 1))
    killers.append(F.commutator(engel_comm(F, b, a, n), b))
    killers.extend(subgroup_commutator(F, gamma4, gamma4).basis)
    M = normal_closure(F, [k for k in killers if any(k)])
    H, _ = quotient_by_normal(F, M, verify=False)
    logger.info("Newman-Nickel group n=%d: %d -> %d generators", n, F.n, H.n)

    a, b = H.image("a"), H.image("b")
    t = engel_comm(H, b, a, n)
    u_parts = tuple(
        engel_comm(H, H.commutator(engel_comm(H, b, a, n - 1 - j), b), a, j) for j in range(n - 1)
    )
    u = _product(H, u_parts)
    v = H.commutator(u_parts[n - 2], a)
    w = _product(H, [H.commutator(u_parts[j], a) for j in range(n - 2)])

    n0 = subgroup_closure(H, [u, H.multiply(v, w), H.multiply(v, H.inverse(t))])
    n0_normal = is_normal(n0)
    if not n0_normal:
        logger.warning("<u, vw, vt^-1> is not normal; using its normal closure")
        n0 = normal_closure(H, list(n0.basis))
    tu = H.multiply(t, u)
    big_n = subgroup_closure(
        H, [H.multiply(tu, w), H.multiply(H.power(t, 2), w), H.multiply(u, w)]
    )
    big_n_normal = is_normal(big_n)
    if not big_n_normal:
        logger.info("<tuw, t^2w, uw> is not normal; using its normal closure")
        big_n = normal_closure(H, list(big_n.basis))

    closure_b = normal_closure(H, [b]).basis
    class_two = all(
        not any(H.commutator(H.commutator(x, y), z))
        for x in closure_b
        for y in closure_b
        for z in closure_b
    )
    return NnGroup(n, H, a, b, t, u_parts, u, v, w, n0, big_n, n0_normal, big_n_normal, class_two)


def _power_of(P: PcPresentation, x: Sequence[int], base: Sequence[int]) -> int | None:
    """``e`` with ``x = base^e``, for ``base`` of infinite order in an abelian-enough position."""
    if not any(x):
        return 0
    d = P.depth(base)
    if d is None or P.depth(x) != d or x[d] % base[d]:
        return None
    e = x[d] // base[d]
    return e if P.power(base, e) == tuple(x) else None


def _test_set(g: NnGroup, size: int, rng: random.Random) -> list[Vector]:
    """``a^alpha b^beta [b,a]^gamma`` for exponents in ``-2..2`` and ``size`` random elements."""
    H = g.pcp
    ba = H.commutator(g.b, g.a)
    out = [
        H.multiply(H.multiply(H.power(g.a, al), H.power(g.b, be)), H.power(ba, ga))
        for al, be, ga in itertools.product(range(-2, 3), repeat=3)
    ]
    out.extend(H.random_element(rng) for _ in range(size))
    return out


def verify_theorem_nn(
    g: NnGroup, kmax: int = 6, test_set_size: int = 50, seed: int = 0
) -> ExperimentReport:
    """Check the theorem on ``N_0`` for a Newman-Nickel group and report every value."""
    if kmax < 2:
        raise EngelLabError("kmax must be at least 2")
    H, n = g.pcp, g.n
    report = ExperimentReport(id=f"nn-theorem-n{n}", inputs={"n": n, "kmax": kmax}, seed=seed)
    rng = random.Random(seed)
    report.check("N0 is normal", True, g.n0_normal, "N0 is a normal subgroup of H")
    report.check("normal closure of b has class 2", True, g.b_closure_class_two,
                 "the normal closure of b in H is nilpotent of class 2")
    report.check("class of H", n + 2, H.nilpotency_class, "nilpotency class n+2")

    Q, qmap = quotient_by_normal(H, g.n0)
    t_img = qmap.image(g.t)
    b2 = engel_comm(H, H.power(g.b, -2), g.a, n)
    report.check("(i) [b,_n a] = [b^-2,_n a] mod N0", True, t_img == qmap.image(b2))
    report.check("(ii) order of [b,_n a] mod N0", "infinite", order_label(Q.order(t_img)))

    tests = _test_set(g, test_set_size, rng)
    b_inv = H.inverse(g.b)
    failures = [h for h in tests if not membership(g.n0, engel_comm(H, b_inv, h, n))]
    report.check("(iii) [b^-1,_n h] in N0 failures", 0, len(failures),
                 f"{len(tests)} test elements a^alpha b^beta [b,a]^gamma and random words")

    v_img = qmap.image(g.v)
    exponents = []
    for k in range(2, kmax + 1):
        x = qmap.image(engel_comm(H, H.power(g.b, -k), g.a, n))
        exponents.append(_power_of(Q, x, v_img))
    report.check("(iv) exponents of v in [b^-k,_n a] mod N0", [math.comb(k, 2) for k in range(2, kmax + 1)],
                 exponents)

    QN, nmap = quotient_by_normal(H, g.big_n)
    report.record(
        "(v) order of [b,_n a] mod N",
        order_label(QN.order(nmap.image(g.t))),
        "N is the normal closure of <tuw, t^2w, uw>; not compared",
    )

    span = subgroup_closure(H, [g.t, g.u, g.v, g.w])
    abelian = all(not any(H.commutator(x, y)) for x in span.basis for y in span.basis)
    free_rank = sum(1 for d in span.depths if H.orders[d] is None) if abelian else None
    report.check("(vi) <t, u, v, w> free abelian rank", 4,
                 free_rank if free_rank == len(span.basis) else None)

    a_failures = [h for h in tests if not membership(g.big_n, engel_comm(H, g.a, h, n))]
    report.check("(vii) [a,_n h] in N failures", 0, len(a_failures))
    return report


# ---------------------------------------------------------------------------
# Nickel's example
# ---------------------------------------------------------------------------


def nickel_presentation(n: int) -> FpPresentation:
    return engel_presentation(["a", "b"], ["a"], n, name=f"Nickel{n}")


def nickel_order_experiment(n: int, threads: int = 1, **nq_options: object) -> ExperimentReport:
    """Order of ``[a^-1,_n b]`` in the class-``n+2`` quotient with ``a`` right ``n``-Engel."""
    state = nilpotent_quotient(nickel_presentation(n), n + 2, threads=threads, **nq_options)  # type: ignore[arg-type]
    return nickel_report(state.pcp, n)


def nickel_report(P: PcPresentation, n: int) -> ExperimentReport:
    a, b = P.image("a"), P.image("b")
    inv = engel_comm(P, P.inverse(a), b, n)
    square = engel_comm(P, P.power(a, 2), b, n)
    report = ExperimentReport(id=f"nickel-orders-n{n}", inputs={"n": n, "class": n + 2})
    report.record("order of [a^-1,_n b]", order_label(P.order(inv)))
    report.record("[a^-1,_n b] = [a^2,_n b]", inv == square)
    report.record("class", P.nilpotency_class)
    return report


# ---------------------------------------------------------------------------
# Commutator identities
# ---------------------------------------------------------------------------


# samples for identity (6), which computes gamma_4 of <g, c, d> each time
SUBGROUP_SERIES_SAMPLES = 25


def _random_in(P: PcPresentation, S: InducedSubgroup, rng: random.Random) -> Vector:
    out = P.zero()
    for b in S.basis:
        out = P.multiply(out, P.power(b, rng.randint(-2, 2)))
    return out


def identity_suite(
    P: PcPresentation,
    samples: int,
    seed: int = 0,
    nn: NnGroup | None = None,
    h3: bool = False,
) -> ExperimentReport:
    """Count failures of the basic commutator identities on random elements.

    Identities (1)-(4) hold in every group. With ``nn`` the identities specific to a
    Newman-Nickel group are checked too; (6) compares both sides modulo ``gamma_4`` of
    ``<g, c, d>`` on the first ``SUBGROUP_SERIES_SAMPLES`` samples. ``h3`` adds the two
    expansions used for right 3-Engel elements (``P`` must then be the quotient with generators
    ``a, b, c``).
    """
    rng = random.Random(seed)
    report = ExperimentReport(id="identities", inputs={"samples": samples}, seed=seed)
    C, M, I = P.commutator, P.multiply, P.inverse
    fails = [0, 0, 0, 0]
    for _ in range(samples):
        g, c, d = (P.random_element(rng) for _ in range(3))
        if C(g, M(c, d)) != M(M(C(g, d), C(g, c)), C(C(g, c), d)):
            fails[0] += 1
        if C(M(c, d), g) != M(M(C(c, g), C(C(c, g), d)), C(d, g)):
            fails[1] += 1
        if C(I(c), d) != M(I(C(C(c, d), I(c))), I(C(c, d))):
            fails[2] += 1
        if C(c, I(d)) != M(I(C(C(c, d), I(d))), I(C(c, d))):
            fails[3] += 1
    for k, f in enumerate(fails, start=1):
        report.check(f"identity ({k}) failures", 0, f)

    if nn is not None:
        H, n = nn.pcp, nn.n
        gamma3, gamma4 = lower_central_term(H, 3), lower_central_term(H, 4)
        fails = [0, 0, 0, 0]
        for i in range(samples):
            h, c, d, g = (H.random_element(rng) for _ in range(4))
            s = rng.randint(1, n + 2)
            k = _random_in(H, lower_central_term(H, n + 3 - s), rng)
            entries = [H.random_element(rng) for _ in range(s)]
            if H.left_normed_commutator([H.multiply(h, k), *entries]) != H.left_normed_commutator(
                [h, *entries]
            ):
                fails[0] += 1
            if i < SUBGROUP_SERIES_SAMPLES:
                lhs = H.left_normed_commutator([g, d, c])
                rhs = H.multiply(
                    H.left_normed_commutator([g, c, d]), H.commutator(g, H.commutator(d, c))
                )
                k4 = H.multiply(H.inverse(rhs), lhs)
                if not membership(subgroup_lower_central_term(H, [g, c, d], 4), k4):
                    fails[1] += 1
            k3 = _random_in(H, gamma3, rng)
            if engel_comm(H, nn.a, H.multiply(h, k3), n) != engel_comm(H, nn.a, h, n):
                fails[2] += 1
            delta = rng.randint(1, 4)
            lhs = H.commutator(g, H.power(d, delta))
            rhs = H.multiply(
                H.power(H.commutator(g, d), delta),
                H.power(engel_comm(H, g, d, 2), math.comb(delta, 2)),
            )
            if not membership(gamma4, H.multiply(H.inverse(rhs), lhs)):
                fails[3] += 1
        for k, f in enumerate(fails, start=5):
            report.check(f"identity ({k}) failures", 0, f)

    if h3:
        a, b, c = P.image("a"), P.image("b"), P.image("c")
        L = P.left_normed_commutator
        report.check(
            "[a^-1,c,c,c] = [a,c,a,c,c]", True, L([I(a), c, c, c]) == L([a, c, a, c, c])
        )
        report.check(
            "[ab,c,c,c] = [a,c,c,[b,c],c][a,c,b,c,c]",
            True,
            L([M(a, b), c, c, c]) == M(L([a, c, c, C(b, c), c]), L([a, c, b, c, c])),
        )
    return report
