"""Group words, finitely presented groups with identical variables, and the input grammar.

A ``Word`` is a freely reduced run-length list of syllables ``(generator_index, exponent)``.
Relator expansions such as ``[a, x, x, x, x, x, x, x, x]`` are exponentially long as letter
sequences but stay small as syllable lists, so this is the only representation used.

Input grammar (one statement per line, ``#`` starts a comment)::

    group NAME
    generators NAME ("," NAME)*
    identical NAME ("," NAME)*
    relators relator ("," relator)*

    relator := word
    word    := term ("*" term)*
    term    := ("1" | NAME | "(" word ")" | "[" word (";"|",") word (("," | ";") word)* "]") ("^" INT)?

The bracket form ``[w1; w2, ..., wk]`` is the left-normed commutator of its entries.
"""

from __future__ import annotations

import functools
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class EngelNqError(Exception):
    """Base class for all errors raised by engelnq."""


class PresentationError(EngelNqError):
    """Invalid finitely presented group input."""


class PresentationSyntaxError(PresentationError):
    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UndeclaredGeneratorError(PresentationError):
    def __init__(self, name: str, line: int = 0, column: int = 0) -> None:
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(f"{where}undeclared generator {name!r}")
        self.name = name
        self.line = line
        self.column = column


class IdenticalVariableError(PresentationError):
    """An identical variable that is not a declared generator."""


class MissingAssignmentError(PresentationError):
    """A substitution or evaluation without a value for an occurring generator."""


# ---------------------------------------------------------------------------
# Words
# ---------------------------------------------------------------------------

Syllable = tuple[int, int]


def _reduce(syllables: Iterable[Syllable]) -> tuple[Syllable, ...]:
    out: list[list[int]] = []
    for gen, exp in syllables:
        if exp == 0:
            continue
        if out and out[-1][0] == gen:
            out[-1][1] += exp
            if out[-1][1] == 0:
                out.pop()
        else:
            out.append([gen, exp])
    return tuple((g, e) for g, e in out)


@dataclass(frozen=True)
class Word:
    """Freely reduced group word. Equality is syntactic on the reduced form."""

    syllables: tuple[Syllable, ...] = ()

    def __post_init__(self) -> None:
        reduced = _reduce(self.syllables)
        if reduced != self.syllables:
            object.__setattr__(self, "syllables", reduced)

    @classmethod
    def identity(cls) -> Word:
        return cls(())

    @classmethod
    def generator(cls, index: int, exponent: int = 1) -> Word:
        return cls(((index, exponent),))

    def is_identity(self) -> bool:
        return not self.syllables

    def __len__(self) -> int:
        return len(self.syllables)

    def __mul__(self, other: Word) -> Word:
        return Word(self.syllables + other.syllables)

    def __invert__(self) -> Word:
        return Word(tuple((g, -e) for g, e in reversed(self.syllables)))

    def inverse(self) -> Word:
        return ~self

    def __pow__(self, n: int) -> Word:
        if n < 0:
            return (~self) ** (-n)
        if len(self.syllables) == 1:
            gen, exp = self.syllables[0]
            return Word(((gen, exp * n),))
        result = Word()
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def generators(self) -> frozenset[int]:
        return frozenset(g for g, _ in self.syllables)

    def exponent_sum(self, gen: int) -> int:
        return sum(e for g, e in self.syllables if g == gen)

    def letter_length(self) -> int:
        return sum(abs(e) for _, e in self.syllables)

    def format(self, names: Sequence[str]) -> str:
        if not self.syllables:
            return "1"
        parts = []
        for gen, exp in self.syllables:
            parts.append(names[gen] if exp == 1 else f"{names[gen]}^{exp}")
        return "*".join(parts)


def commutator_word(a: Word, b: Word) -> Word:
    """``[a, b] = a^-1 b^-1 a b``."""
    return ~a * ~b * a * b


def left_normed_comm_word(args: Sequence[Word]) -> Word:
    """Left-normed commutator ``[w1, w2, ..., wk] = [[w1, ..., w(k-1)], wk]``."""
    if not args:
        raise ValueError("left-normed commutator needs at least one entry")
    return functools.reduce(commutator_word, args[1:], args[0])


def substitute_word(w: Word, assignment: Mapping[int, Word]) -> Word:
    """Homomorphic image of ``w`` under ``generator index -> Word``."""
    syllables: list[Syllable] = []
    for gen, exp in w.syllables:
        try:
            image = assignment[gen]
        except KeyError:
            raise MissingAssignmentError(f"no assignment for generator {gen}") from None
        syllables.extend((image ** exp).syllables)
    return Word(tuple(syllables))


# ---------------------------------------------------------------------------
# Presentations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorSymbol:
    name: str
    index: int


@dataclass(frozen=True)
class FpPresentation:
    """Finitely presented group whose relators may contain identical (universally quantified)
    variables. Identical variables are ordinary generators carrying a flag."""

    generators: tuple[GeneratorSymbol, ...]
    identical: frozenset[int] = frozenset()
    relators: tuple[Word, ...] = ()
    name: str | None = None

    def __post_init__(self) -> None:
        names = [g.name for g in self.generators]
        if len(set(names)) != len(names):
            raise PresentationError("generator names must be unique")
        for pos, gen in enumerate(self.generators):
            if gen.index != pos:
                raise PresentationError(f"generator {gen.name!r} has index {gen.index}, expected {pos}")
        n = len(self.generators)
        for idx in self.identical:
            if not 0 <= idx < n:
                raise IdenticalVariableError(f"identical variable index {idx} is not a generator")
        if n == 0:
            raise PresentationError("a presentation needs at least one generator")
        for rel in self.relators:
            for gen in rel.generators():
                if not 0 <= gen < n:
                    raise UndeclaredGeneratorError(str(gen))

    @classmethod
    def build(
        cls,
        names: Sequence[str],
        relators: Sequence[Word] = (),
        identical: Iterable[str] = (),
        name: str | None = None,
    ) -> FpPresentation:
        gens = tuple(GeneratorSymbol(n, i) for i, n in enumerate(names))
        lookup = {n: i for i, n in enumerate(names)}
        ident = set()
        for var in identical:
            if var not in lookup:
                raise IdenticalVariableError(f"identical variable {var!r} is not a declared generator")
            ident.add(lookup[var])
        return cls(gens, frozenset(ident), tuple(relators), name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(g.name for g in self.generators)

    def index(self, name: str) -> int:
        for gen in self.generators:
            if gen.name == name:
                return gen.index
        raise UndeclaredGeneratorError(name)

    @property
    def free_generators(self) -> tuple[int, ...]:
        """Indices of the generators that are not identical variables, in declaration order."""
        return tuple(g.index for g in self.generators if g.index not in self.identical)

    def identical_in(self, relator: Word) -> tuple[int, ...]:
        return tuple(sorted(relator.generators() & self.identical))


def format_presentation(p: FpPresentation) -> str:
    """Print ``p`` in the input grammar; ``parse_presentation`` reads it back unchanged."""
    names = p.names
    lines = []
    if p.name:
        lines.append(f"group {p.name}")
    lines.append("generators " + ", ".join(names))
    if p.identical:
        lines.append("identical " + ", ".join(names[i] for i in sorted(p.identical)))
    if p.relators:
        lines.append("relators " + ", ".join(r.format(names) for r in p.relators))
    else:
        lines.append("relators")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<int>-?\d+)|(?P<sym>[\^*()\[\];,]))"
)


@dataclass
class _Token:
    kind: str
    text: str
    column: int


@dataclass
class _Cursor:
    tokens: list[_Token]
    line: int
    width: int
    pos: int = 0
    lookup: dict[str, int] = field(default_factory=dict)

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _Token:
        tok = self.peek()
        if tok is None:
            raise PresentationSyntaxError("unexpected end of line", self.line, self.width + 1)
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            raise PresentationSyntaxError(f"expected {text!r}, found {tok.text!r}", self.line, tok.column)
        return tok

    def at(self, *texts: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text in texts


def _tokenize(text: str, line: int) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    stripped = text.rstrip()
    while pos < len(stripped):
        m = _TOKEN_RE.match(stripped, pos)
        if m is None or m.end() == pos:
            col = pos + 1 + (len(stripped[pos:]) - len(stripped[pos:].lstrip()))
            raise PresentationSyntaxError(f"unexpected character {stripped[col - 1]!r}", line, col)
        kind = m.lastgroup or "sym"
        tokens.append(_Token(kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    return tokens


def _parse_exponent(cur: _Cursor) -> int:
    if not cur.at("^"):
        return 1
    cur.next()
    tok = cur.next()
    if tok.kind != "int":
        raise PresentationSyntaxError(f"expected integer exponent, found {tok.text!r}", cur.line, tok.column)
    return int(tok.text)


def _parse_term(cur: _Cursor) -> Word:
    tok = cur.next()
    if tok.kind == "name":
        if tok.text not in cur.lookup:
            raise UndeclaredGeneratorError(tok.text, cur.line, tok.column)
        base = Word.generator(cur.lookup[tok.text])
    elif tok.kind == "int" and tok.text == "1":
        base = Word.identity()
    elif tok.text == "(":
        base = _parse_word(cur)
        cur.expect(")")
    elif tok.text == "[":
        entries = [_parse_word(cur)]
        if not cur.at(";", ","):
            nxt = cur.peek()
            col = nxt.column if nxt else cur.width + 1
            raise PresentationSyntaxError("commutator needs at least two entries", cur.line, col)
        while cur.at(";", ","):
            cur.next()
            entries.append(_parse_word(cur))
        cur.expect("]")
        base = left_normed_comm_word(entries)
    else:
        raise PresentationSyntaxError(f"unexpected token {tok.text!r}", cur.line, tok.column)
    return base ** _parse_exponent(cur)


def _parse_word(cur: _Cursor) -> Word:
    result = _parse_term(cur)
    while cur.at("*"):
        cur.next()
        result = result * _parse_term(cur)
    return result


def parse_word(text: str, names: Sequence[str], line: int = 1) -> Word:
    """Parse a single word or bracket commutator over ``names``."""
    tokens = _tokenize(text, line)
    cur = _Cursor(tokens, line, len(text.rstrip()), lookup={n: i for i, n in enumerate(names)})
    if not tokens:
        raise PresentationSyntaxError("empty expression", line, 1)
    word = _parse_word(cur)
    if cur.peek() is not None:
        tok = cur.next()
        raise PresentationSyntaxError(f"unexpected token {tok.text!r}", line, tok.column)
    return word


def parse_presentation(text: str) -> FpPresentation:
    """Parse the line-oriented input grammar into an ``FpPresentation``."""
    name: str | None = None
    names: list[str] = []
    identical: list[tuple[str, int, int]] = []
    relators: list[Word] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        tokens = _tokenize(body, lineno)
        if not tokens:
            continue
        head = tokens[0]
        cur = _Cursor(tokens, lineno, len(body.rstrip()), pos=1, lookup={n: i for i, n in enumerate(names)})
        if head.text == "group":
            tok = cur.next()
            if tok.kind != "name":
                raise PresentationSyntaxError("expected group name", lineno, tok.column)
            name = tok.text
        elif head.text == "generators":
            for tok in _name_list(cur):
                if tok.text in names:
                    raise PresentationSyntaxError(f"duplicate generator {tok.text!r}", lineno, tok.column)
                names.append(tok.text)
            continue
        elif head.text == "identical":
            for tok in _name_list(cur):
                identical.append((tok.text, lineno, tok.column))
            continue
        elif head.text == "relators":
            if cur.peek() is not None:
                relators.append(_parse_word(cur))
                while cur.at(","):
                    cur.next()
                    relators.append(_parse_word(cur))
        else:
            raise PresentationSyntaxError(f"unknown statement {head.text!r}", lineno, head.column)
        if cur.peek() is not None:
            tok = cur.next()
            raise PresentationSyntaxError(f"unexpected token {tok.text!r}", lineno, tok.column)

    if not names:
        raise PresentationError("no generators declared")
    for var, lineno, col in identical:
        if var not in names:
            raise IdenticalVariableError(
                f"line {lineno}, column {col}: identical variable {var!r} is not a declared generator"
            )
    return FpPresentation.build(names, relators, [v for v, _, _ in identical], name)


def _name_list(cur: _Cursor) -> list[_Token]:
    out = []
    tok = cur.next()
    while True:
        if tok.kind != "name":
            raise PresentationSyntaxError(f"expected a name, found {tok.text!r}", cur.line, tok.column)
        out.append(tok)
        if not cur.at(","):
            return out
        cur.next()
        tok = cur.next()
