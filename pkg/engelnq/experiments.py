"""Registry of reproducible Engel-group computations.

Each experiment carries its expected values as data. A runner only computes: it records values
on an ``ExperimentReport`` and ``run_experiment`` reconciles them against the registry, so a
mismatch shows up as a failed value in the report rather than as an edited expectation.
"""

from __future__ import annotations

import logging
import math
import random
import time
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any

from sympy import divisors, factorint

from engelnq import library
from engelnq.config import Config
from engelnq.engel import (
    closure_report,
    engel_comm,
    identity_suite,
    is_right_n_engel,
    newman_nickel_group,
    nickel_presentation,
    nickel_report,
    order_label,
    verify_theorem_nn,
)
from engelnq.nq import NqState, canonical_form, nilpotent_quotient
from engelnq.pcp import PcPresentation
from engelnq.schemas import ExperimentReport, InstantiationStrategy, ValueCheck
from engelnq.store import CheckpointStore
from engelnq.structure import (
    InducedSubgroup,
    lower_central_term,
    membership,
    presentation_equal,
    quotient_by_normal,
    section_invariants,
    subgroup_closure,
    torsion_primes,
    torsion_quotient,
    torsion_subgroup,
)
from engelnq.words import EngelNqError, FpPresentation, format_presentation

logger = logging.getLogger(__name__)


class ExperimentError(EngelNqError):
    """Experiment registry errors."""


class UnknownExperimentError(ExperimentError):
    pass


class LongExperimentRefusedError(ExperimentError):
    """A long-running experiment was requested without ``--long`` and a cache directory."""


# ---------------------------------------------------------------------------
# Registry types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Expected:
    value: Any
    source: str = ""


@dataclass
class ExperimentContext:
    config: Config
    store: CheckpointStore | None = None
    params: dict[str, Any] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    checkpoints_used: list[int] = field(default_factory=list)
    law_failures: dict[str, list[int]] = field(default_factory=dict)

    @property
    def strategy(self) -> InstantiationStrategy:
        return self.config.strategy

    @contextmanager
    def timed(self, phase: str) -> Iterator[None]:
        t0 = time.monotonic()
        try:
            yield
        finally:
            self.timings[phase] = round(self.timings.get(phase, 0.0) + time.monotonic() - t0, 3)

    def quotient(
        self,
        fp: FpPresentation,
        max_class: int | None = None,
        strategy: InstantiationStrategy | None = None,
        label: str = "",
    ) -> NqState:
        """Nilpotent quotient with the context's config, store and timings."""
        strategy = strategy or self.strategy
        cap = max_class if max_class is not None else self.config.max_class
        if self.store is not None:
            key = self.store.key_for(format_presentation(fp), strategy)
            resumable = [k for k in self.store.classes(key) if cap is None or k <= cap]
            if resumable:
                self.checkpoints_used.append(resumable[-1])
        name = label or fp.name or ""
        with self.timed(f"quotient {name}".strip()):
            state = nilpotent_quotient(
                fp,
                cap,
                strategy,
                store=self.store,
                label=label,
                threads=self.config.threads,
                seed=self.config.seed,
                law_samples=self.config.random_law_samples,
                step_budget=self.config.step_budget,
                timeout=self.config.timeout_seconds,
                verify=self.config.verify_consistency,
            )
        if state.law_check_failures:
            self.law_failures[name or "quotient"] = list(state.law_check_failures)
        return state


Runner = Callable[[ExperimentContext, ExperimentReport], None]


@dataclass(frozen=True)
class Experiment:
    id: str
    title: str
    runner: Runner
    expected: dict[str, Expected] = field(default_factory=dict)
    long: bool = False


REGISTRY: dict[str, Experiment] = {}


def register(
    id: str, title: str, expected: dict[str, Expected] | None = None, long: bool = False
) -> Callable[[Runner], Runner]:
    def deco(fn: Runner) -> Runner:
        REGISTRY[id] = Experiment(id, title, fn, expected or {}, long)
        return fn

    return deco


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _abelian_exponent(S: InducedSubgroup) -> int | None:
    """Exponent of an abelian induced subgroup: the lcm of its basis orders."""
    orders = [S.ambient.order(b) for b in S.basis]
    if any(o is None for o in orders):
        return None
    return math.lcm(*orders) if orders else 1  # type: ignore[arg-type]


def _divides(e: int | None, m: int) -> bool:
    return e is not None and m % e == 0


def _mobius(d: int) -> int:
    exps = factorint(d).values()
    return 0 if any(e > 1 for e in exps) else (-1) ** len(exps)


def witt_rank(r: int, k: int) -> int:
    """Rank of the degree-``k`` layer of the free nilpotent group on ``r`` generators."""
    return sum(_mobius(int(d)) * r ** (k // int(d)) for d in divisors(k)) // k


def _record_all(report: ExperimentReport, sub: ExperimentReport, prefix: str = "") -> None:
    for v in sub.values:
        report.values.append(v.model_copy(update={"name": prefix + v.name}))


def _h3(ctx: ExperimentContext) -> PcPresentation:
    return ctx.quotient(library.get("L"), label="H3").pcp


def _m(ctx: ExperimentContext) -> PcPresentation:
    return ctx.quotient(library.get("U"), label="M").pcp


# ---------------------------------------------------------------------------
# Right 3-Engel elements
# ---------------------------------------------------------------------------


@register(
    "r3-orders",
    "Orders of [a^-1,c,c,c] and [ab,c,c,c] for right 3-Engel a, b",
    {
        "class": Expected(6, "largest nilpotent quotient has class 6"),
        "d_order": Expected(2, "[a^-1,c,c,c] has order 2"),
        "e_order": Expected(4, "[ab,c,c,c] has order 4"),
        "d_in_gamma5": Expected(True, "d lies in the fifth lower central term"),
        "e_in_gamma5": Expected(True, "e lies in the fifth lower central term"),
        "a_right_3_engel": Expected(True, "a is right 3-Engel by construction"),
        "a^-1_right_3_engel": Expected(False, "a^-1 is not right 3-Engel"),
        "a*b_right_3_engel": Expected(False, "ab is not right 3-Engel"),
    },
)
def _r3_orders(ctx: ExperimentContext, report: ExperimentReport) -> None:
    P = _h3(ctx)
    a, b, c = P.image("a"), P.image("b"), P.image("c")
    d = P.left_normed_commutator([P.inverse(a), c, c, c])
    e = P.left_normed_commutator([P.multiply(a, b), c, c, c])
    gamma5 = lower_central_term(P, 5)
    report.record("class", P.nilpotency_class)
    report.record("d_order", order_label(P.order(d)))
    report.record("e_order", order_label(P.order(e)))
    report.record("d_in_gamma5", bool(membership(gamma5, d)))
    report.record("e_in_gamma5", bool(membership(gamma5, e)))
    rng = random.Random(ctx.config.seed)
    samples = ctx.config.random_law_samples
    with ctx.timed("verdicts"):
        verdict = is_right_n_engel(P, a, 3, ctx.strategy, samples, rng)
        report.record("a_right_3_engel", verdict.holds, verdict.status.value)
        entries = closure_report(P, {"a": a, "b": b}, 3, c, ctx.strategy, samples, ctx.config.seed)
        for entry in entries:
            if entry.element in ("a^-1", "a*b"):
                report.record(
                    f"{entry.element}_right_3_engel",
                    entry.verdict.holds,
                    f"order of [{entry.element},_3 c] = {order_label(entry.partner_order)}",
                )
    with ctx.timed("identities"):
        _record_all(report, identity_suite(P, ctx.config.identity_samples, ctx.config.seed, h3=True))


@register(
    "r3-newell-invariants",
    "Lower central exponents of the group generated by two right 3-Engel elements",
    {
        "class_at_most_6": Expected(True, "nilpotent of class at most 6"),
        "gamma6_exponent_divides_2": Expected(True, "gamma_6 has exponent 2"),
        "gamma5/gamma6_exponent_divides_10": Expected(True, "gamma_5/gamma_6 has exponent 10"),
        "[a,c,b,c,c]^2_in_gamma6": Expected(True, "[a,c,b,c,c]^2 lies in gamma_6"),
    },
)
def _r3_newell(ctx: ExperimentContext, report: ExperimentReport) -> None:
    P = _h3(ctx)
    a, b, c = P.image("a"), P.image("b"), P.image("c")
    gamma6 = lower_central_term(P, 6)
    e6 = _abelian_exponent(gamma6)
    e5 = section_invariants(P, 5).exponent
    report.record("class_at_most_6", P.nilpotency_class <= 6, f"class {P.nilpotency_class}")
    report.record("gamma6_exponent", order_label(e6))
    report.record("gamma6_exponent_divides_2", _divides(e6, 2))
    report.record("gamma5/gamma6_exponent", order_label(e5))
    report.record("gamma5/gamma6_exponent_divides_10", _divides(e5, 10))
    x = P.power(P.left_normed_commutator([a, c, b, c, c]), 2)
    report.record("[a,c,b,c,c]^2_in_gamma6", bool(membership(gamma6, x)))


@register(
    "r3-two-gen",
    "Two-generator group with one right 3-Engel generator",
    {
        "class_at_most_5": Expected(True, "nilpotent of class at most 5"),
        "gamma5_exponent_divides_2": Expected(True, "gamma_5 has exponent 2"),
    },
)
def _r3_two_gen(ctx: ExperimentContext, report: ExperimentReport) -> None:
    P = ctx.quotient(library.get("L2"), label="L2").pcp
    gamma5 = lower_central_term(P, 5)
    e5 = _abelian_exponent(gamma5)
    report.record("class", P.nilpotency_class)
    report.record("class_at_most_5", P.nilpotency_class <= 5)
    report.record("gamma5_exponent", order_label(e5))
    report.record("gamma5_exponent_divides_2", _divides(e5, 2))


# ---------------------------------------------------------------------------
# Right 4-Engel elements
# ---------------------------------------------------------------------------


@register(
    "r4-inverse-order",
    "Order of [a^-1,c,c,c,c] for a right 4-Engel",
    {
        "class": Expected(8, "largest nilpotent quotient M has class 8"),
        "stable": Expected(True, "M is the largest nilpotent quotient"),
        "order": Expected(375, "[a^-1,c,c,c,c] has order 375 = 3 * 5^3"),
    },
)
def _r4_inverse(ctx: ExperimentContext, report: ExperimentReport) -> None:
    state = ctx.quotient(library.get("U"), label="M")
    P = state.pcp
    a, c = P.image("a"), P.image("c")
    x = P.left_normed_commutator([P.inverse(a), c, c, c, c])
    report.record("class", P.nilpotency_class)
    report.record("stable", state.stable)
    report.record("order", order_label(P.order(x)))
    report.record("order_factors", {int(p): int(e) for p, e in factorint(P.order(x) or 1).items()})


@register(
    "r4-conjugates",
    "Conjugates of a right 4-Engel element under a free generator",
    {
        "a^(c^4)_in_span": Expected(True, "<a>^<c> = <a, a^c, a^c^2, a^c^3>"),
        "a^(c^-1)_in_span": Expected(True, "<a>^<c> = <a, a^c, a^c^2, a^c^3>"),
    },
)
def _r4_conjugates(ctx: ExperimentContext, report: ExperimentReport) -> None:
    P = _m(ctx)
    a, c = P.image("a"), P.image("c")
    span = subgroup_closure(P, [P.conjugate(a, P.power(c, k)) for k in range(4)])
    report.record("span_generators", len(span))
    report.record("a^(c^4)_in_span", bool(membership(span, P.conjugate(a, P.power(c, 4)))))
    report.record("a^(c^-1)_in_span", bool(membership(span, P.conjugate(a, P.inverse(c)))))


@register(
    "r4-class8-exponent",
    "Exponent of gamma_8 for two right 4-Engel elements and a free generator",
    {"gamma8_exponent": Expected(60, "gamma_8(K) has exponent 60")},
    long=True,
)
def _r4_class8(ctx: ExperimentContext, report: ExperimentReport) -> None:
    P = ctx.quotient(library.get("W"), 8, label="K").pcp
    report.record("class", P.nilpotency_class)
    report.record("gamma8_exponent", order_label(_abelian_exponent(lower_central_term(P, 8))))


@register(
    "r4-product-order",
    "Order of [ab,c,c,c,c] for right 4-Engel a, b in the class-7 quotient",
    {"order": Expected(300, "order of [ab,c,c,c,c] is 300")},
    long=True,
)
def _r4_product(ctx: ExperimentContext, report: ExperimentReport) -> None:
    P = ctx.quotient(library.get("W"), 7, label="S").pcp
    a, b, c = P.image("a"), P.image("b"), P.image("c")
    x = P.left_normed_commutator([P.multiply(a, b), c, c, c, c])
    report.record("class", P.nilpotency_class)
    report.record("order", order_label(P.order(x)))


@register(
    "e24-compare",
    "M modulo torsion against the largest nilpotent 2-generator 4-Engel group",
    {
        "torsion_primes_within_2_3_5": Expected(True, "the torsion subgroup of M is a {2,3,5}-group"),
        "M/T_equals_E(2,4)": Expected(True, "M/T and E(2,4) have the same presentation"),
        "E(2,4)_class": Expected(6, "E(2,4) has class 6"),
    },
)
def _e24(ctx: ExperimentContext, report: ExperimentReport) -> None:
    M = _m(ctx)
    with ctx.timed("torsion"):
        T = torsion_subgroup(M)
        primes = torsion_primes(T)
        MT, _ = torsion_quotient(M)
    E = ctx.quotient(library.get("E24"), label="E24").pcp
    report.record("torsion_order", T.order())
    report.record("torsion_primes", primes)
    report.record("torsion_primes_within_2_3_5", set(primes) <= {2, 3, 5})
    with ctx.timed("canonical forms"):
        left, right = canonical_form(MT), canonical_form(E)
    report.record("M/T_generators", left.n)
    report.record("E(2,4)_generators", right.n)
    report.record("M/T_equals_E(2,4)", presentation_equal(left, right))
    report.record("E(2,4)_class", E.nilpotency_class)


# ---------------------------------------------------------------------------
# Nickel's example and Newman-Nickel groups
# ---------------------------------------------------------------------------

_NICKEL_ORDERS = {5: 3, 6: 7, 7: 4, 8: 9}


def _nickel_runner(n: int) -> Runner:
    def run(ctx: ExperimentContext, report: ExperimentReport) -> None:
        P = ctx.quotient(nickel_presentation(n), n + 2, label=f"Nickel{n}").pcp
        _record_all(report, nickel_report(P, n))

    return run


for _n, _order in _NICKEL_ORDERS.items():
    register(
        f"nickel-orders-n{_n}",
        f"Order of [a^-1,_{_n} b] with a right {_n}-Engel, class {_n + 2}",
        {"order of [a^-1,_n b]": Expected(_order, f"o([x^-1,_{_n} y]) = {_order}")},
        long=_n >= 7,
    )(_nickel_runner(_n))


def _theorem(ctx: ExperimentContext, report: ExperimentReport, n: int) -> None:
    with ctx.timed("construction"):
        g = newman_nickel_group(n, threads=ctx.config.threads)
    with ctx.timed("checks"):
        _record_all(report, verify_theorem_nn(g, kmax=6, seed=ctx.config.seed))
    if not g.big_n_normal:
        report.notes.append("<tuw, t^2w, uw> is not normal; N is its normal closure")
    H = g.pcp
    report.record(
        "u^a = u v w", H.conjugate(g.u, g.a) == H.multiply(g.u, H.multiply(g.v, g.w))
    )
    fixed = all(
        H.conjugate(z, y) == z for z in (g.t, g.v, g.w) for y in (g.a, g.b)
    )
    report.record("t, v, w fixed by a and b", fixed)
    with ctx.timed("identities"):
        _record_all(
            report, identity_suite(H, ctx.config.identity_samples, ctx.config.seed, nn=g)
        )


@register(
    "nn-theorem-n5",
    "N_0 quotient of the Newman-Nickel group for n = 5",
    {
        "u^a = u v w": Expected(True, "u^a = u v w"),
        "t, v, w fixed by a and b": Expected(True, "t, v and w are central"),
    },
)
def _nn5(ctx: ExperimentContext, report: ExperimentReport) -> None:
    _theorem(ctx, report, 5)


@register("nn-theorem-nN", "N_0 quotient of the Newman-Nickel group for a chosen n (default 6)")
def _nn_any(ctx: ExperimentContext, report: ExperimentReport) -> None:
    n = int(ctx.params.get("n", 6))
    report.inputs["n"] = n
    _theorem(ctx, report, n)


@register(
    "q1-answer",
    "A right 5-Engel element whose inverse and powers are not right 5-Engel",
    {
        "order of [x^-1,_5 y]": Expected("infinite", "[x^-1,_n y] has infinite order"),
        "orders of [x^k,_5 y], k = 2..5": Expected(
            ["infinite"] * 4, "[x^k,_n y] has infinite order for k >= 2"
        ),
        "torsion free": Expected(True, "H/N_0T is torsion free"),
        "class": Expected(7, "nilpotent of class n+2"),
        "x right 5-Engel failures": Expected(0, "x is right n-Engel"),
    },
)
def _q1(ctx: ExperimentContext, report: ExperimentReport) -> None:
    n = 5
    with ctx.timed("construction"):
        g = newman_nickel_group(n, threads=ctx.config.threads)
        H = g.pcp
        Q, qmap = quotient_by_normal(H, g.n0)
        R, tmap = torsion_quotient(Q)
        to_r = qmap.then(tmap)
    x, y = to_r.image(H.inverse(g.b)), to_r.image(g.a)
    report.record("order of [x^-1,_5 y]", order_label(R.order(engel_comm(R, R.inverse(x), y, n))))
    report.record(
        "orders of [x^k,_5 y], k = 2..5",
        [order_label(R.order(engel_comm(R, R.power(x, k), y, n))) for k in range(2, 6)],
    )
    report.record("torsion free", torsion_subgroup(R).is_trivial())
    report.record("class", R.nilpotency_class)
    rng = random.Random(ctx.config.seed)
    tests = [to_r.image(H.random_element(rng)) for _ in range(ctx.config.random_law_samples)]
    tests += [R.unit(i) for i in range(R.n)]
    report.record(
        "x right 5-Engel failures",
        sum(1 for h in tests if any(engel_comm(R, x, h, n))),
        f"{len(tests)} test elements",
    )


# ---------------------------------------------------------------------------
# Free nilpotent groups
# ---------------------------------------------------------------------------

WITT_RANKS_2_8 = [2, 1, 2, 3, 6, 9, 18, 30]


@register(
    "witt-free-nilpotent",
    "Layer ranks of the free nilpotent group of rank 2 and class 8",
    {
        "layer ranks": Expected(WITT_RANKS_2_8, "Witt formula"),
        "Witt formula": Expected(WITT_RANKS_2_8, "Witt formula"),
    },
)
def _witt(ctx: ExperimentContext, report: ExperimentReport) -> None:
    state = ctx.quotient(library.get("F2"), 8, label="F2")
    report.record("layer ranks", state.layer_ranks())
    report.record("Witt formula", [witt_rank(2, k) for k in range(1, 9)])


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def get_experiment(experiment_id: str) -> Experiment:
    try:
        return REGISTRY[experiment_id]
    except KeyError:
        raise UnknownExperimentError(
            f"unknown experiment {experiment_id!r}; known: {', '.join(sorted(REGISTRY))}"
        ) from None


def list_experiments() -> list[Experiment]:
    return [REGISTRY[k] for k in sorted(REGISTRY)]


def reconcile(report: ExperimentReport, expected: dict[str, Expected]) -> None:
    """Attach registry expectations to recorded values; a missing value fails."""
    seen = set()
    for i, v in enumerate(report.values):
        if v.name in expected:
            exp = expected[v.name]
            report.values[i] = ValueCheck(
                name=v.name,
                expected=exp.value,
                computed=v.computed,
                passed=exp.value == v.computed,
                provenance=exp.source,
            )
            seen.add(v.name)
    for name in expected.keys() - seen:
        exp = expected[name]
        report.values.append(
            ValueCheck(name=name, expected=exp.value, computed=None, passed=False,
                       provenance=exp.source)
        )


def run_experiment(
    experiment_id: str,
    config: Config,
    store: CheckpointStore | None = None,
    allow_long: bool = False,
    params: dict[str, Any] | None = None,
) -> ExperimentReport:
    exp = get_experiment(experiment_id)
    if exp.long and not (allow_long and store is not None):
        raise LongExperimentRefusedError(
            f"{experiment_id} is long-running; pass --long together with a cache directory"
        )
    ctx = ExperimentContext(config, store, dict(params or {}))
    report = ExperimentReport(
        id=exp.id,
        title=exp.title,
        strategy=config.strategy.label(),
        seed=config.seed,
        inputs=dict(ctx.params),
    )
    logger.info("running %s", exp.id)
    with ctx.timed("total"):
        exp.runner(ctx, report)
    reconcile(report, exp.expected)
    for name, classes in sorted(ctx.law_failures.items()):
        report.check(f"law check on {name}", [], classes, "the law holds on random elements")
    report.timings = dict(ctx.timings)
    report.checkpoints_used = list(ctx.checkpoints_used)
    logger.info("%s %s", exp.id, "passed" if report.passed else "FAILED")
    return report


def expected_summary(exp: Experiment) -> str:
    return ", ".join(f"{k}={v.value}" for k, v in exp.expected.items()) or "-"
