"""Data models for engelnq documents: pc presentations, NQ checkpoints and reports.

Every JSON document written by the package carries ``"schema": 1``.
"""

from __future__ import annotations

import enum
from datetime import datetime, timezone
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, computed_field

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Pc presentations
# ---------------------------------------------------------------------------

class DefinitionKind(str, enum.Enum):
    IMAGE = "image"
    COMMUTATOR = "commutator"
    POWER = "power"


class DefinitionDoc(BaseModel):
    kind: DefinitionKind
    args: list[int]


class EpimorphismDoc(BaseModel):
    generators: list[str] = Field(default_factory=list)
    images: list[list[int]] = Field(default_factory=list)


class PcpDocument(BaseModel):
    """Canonical JSON form of a ``PcPresentation``. Field order is fixed."""

    model_config = ConfigDict(populate_by_name=True)

    schema_: int = Field(default=SCHEMA_VERSION, alias="schema")
    gen_count: int = Field(alias="genCount")
    weights: list[int]
    relative_orders: list[int | None] = Field(alias="relativeOrders")
    # [i, [[gen, exp], ...]]: g_i^{o_i} = tail
    power_tails: list[tuple[int, list[tuple[int, int]]]] = Field(alias="powerTails")
    # [i, j, [[gen, exp], ...]]: g_j^{g_i} = g_j * tail
    conj_tails: list[tuple[int, int, list[tuple[int, int]]]] = Field(alias="conjTails")
    definitions: list[DefinitionDoc | None]
    epimorphism: EpimorphismDoc = Field(default_factory=EpimorphismDoc)


# ---------------------------------------------------------------------------
# NQ state
# ---------------------------------------------------------------------------

class InstantiationMode(str, enum.Enum):
    GENS = "gens"
    PAIRS = "pairs"
    POLY = "poly"
    EXHAUSTIVE = "exhaustive"


class InstantiationStrategy(BaseModel):
    """How identical variables are instantiated while extending a quotient.

    ``gens`` ranges each variable over the pc generators, ``pairs`` also over products of up to
    ``depth`` distinct generators, ``exhaustive`` over all elements of a finite quotient.
    ``poly`` ranges the variables jointly over every ``g_1^{e_1} ... g_m^{e_m}`` with
    ``e_i >= 0`` and ``sum(e_i * weight(g_i))`` at most the new class. A relator value in the
    new layer is a polynomial in the exponents of that weighted degree, so these points
    determine it and the law holds on the whole quotient.
    """

    model_config = ConfigDict(frozen=True)

    mode: InstantiationMode = InstantiationMode.GENS
    depth: int = Field(default=2, ge=2)
    include_inverses: bool = True
    escalate: bool = True

    def label(self) -> str:
        if self.mode in (InstantiationMode.POLY, InstantiationMode.EXHAUSTIVE):
            return self.mode.value
        base = self.mode.value if self.mode != InstantiationMode.PAIRS else f"pairs({self.depth})"
        return base + ("+inverses" if self.include_inverses else "")


class NqStateDocument(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_: int = Field(default=SCHEMA_VERSION, alias="schema")
    current_class: int = Field(alias="currentClass")
    strategy: InstantiationStrategy
    instance_counts: list[int] = Field(default_factory=list, alias="instanceCounts")
    stable: bool = False
    # classes at which the random law check failed even after escalation
    law_check_failures: list[int] = Field(default_factory=list, alias="lawCheckFailures")
    pcp: PcpDocument


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

class ValueCheck(BaseModel):
    name: str
    expected: Any = None
    computed: Any = None
    passed: bool = True
    provenance: str = ""  # where the expected value comes from


class ExperimentReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_: int = Field(default=SCHEMA_VERSION, alias="schema")
    id: str
    title: str = ""
    inputs: dict[str, Any] = Field(default_factory=dict)
    strategy: str = ""
    seed: int = 0
    values: list[ValueCheck] = Field(default_factory=list)
    timings: dict[str, float] = Field(default_factory=dict)
    checkpoints_used: list[int] = Field(default_factory=list, alias="checkpointsUsed")
    notes: list[str] = Field(default_factory=list)
    generated_at: datetime = Field(default_factory=lambda: datetime.now(tz=timezone.utc))

    @computed_field  # type: ignore[prop-decorator]
    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.values)

    def check(self, name: str, expected: Any, computed: Any, provenance: str = "") -> bool:
        ok = expected == computed
        self.values.append(
            ValueCheck(name=name, expected=expected, computed=computed, passed=ok,
                       provenance=provenance)
        )
        return ok

    def record(self, name: str, computed: Any, provenance: str = "") -> None:
        """A computed value with nothing to compare against."""
        self.values.append(ValueCheck(name=name, computed=computed, provenance=provenance))


class QuotientSummary(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_: int = Field(default=SCHEMA_VERSION, alias="schema")
    class_: int = Field(alias="class")
    generators: int
    layer_ranks: list[int] = Field(alias="layerRanks")
    section_exponents: list[int | None] = Field(alias="sectionExponents")
    section_invariants: list[list[int]] = Field(default_factory=list, alias="sectionInvariants")
    relative_orders: list[int | None] = Field(alias="relativeOrders")
    stable: bool = False
    consistency_ok: bool = Field(default=True, alias="consistencyOk")
    cache_key: str = Field(default="", alias="cacheKey")


class EvalResult(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_: int = Field(default=SCHEMA_VERSION, alias="schema")
    normal_form: list[int] = Field(alias="normalForm")
    order: int | None
    weight: int | None


class CheckResult(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_: int = Field(default=SCHEMA_VERSION, alias="schema")
    consistent: bool
    violations: list[str] = Field(default_factory=list)
