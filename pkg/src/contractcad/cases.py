"""Finite case-universe completeness and consistency checks.

A provision rule set is checked by enumerating the full Cartesian product
of its factor domains: a case no rule matches is an incompleteness; a
case matched by rules with different outcomes is an inconsistency.
Enumeration order is fixed (factor declaration order, then domain order)
so reports are diffable.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

MAX_UNIVERSE = 10**6
DEFAULT_EXAMPLE_LIMIT = 100


class CaseError(ValueError):
    pass


class UniverseTooLargeError(CaseError):
    pass


@dataclass(frozen=True)
class Factor:
    name: str
    domain: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.name:
            raise CaseError("factor name must be nonempty")
        if len(self.domain) < 2:
            raise CaseError(f"factor {self.name!r} needs a domain of >= 2 values")
        if len(set(self.domain)) != len(self.domain):
            raise CaseError(f"factor {self.name!r} has duplicate domain values")


Case = tuple[str, ...]  # values aligned with factor declaration order


@dataclass(frozen=True)
class CaseRule:
    id: str
    condition: tuple[tuple[str, frozenset[str]], ...]  # (factor, allowed values)
    outcome: str


@dataclass(frozen=True)
class CompletenessResult:
    universe: int
    total_uncovered: int
    examples: tuple[Case, ...]  # at most the requested limit

    @property
    def complete(self) -> bool:
        return self.total_uncovered == 0


@dataclass(frozen=True)
class ConsistencyResult:
    universe: int
    total_conflicts: int
    examples: tuple[tuple[Case, tuple[str, ...]], ...]  # (case, conflicting rule ids)

    @property
    def consistent(self) -> bool:
        return self.total_conflicts == 0


def _validate(factors: list[Factor], rules: Iterable[CaseRule]) -> None:
    names = [f.name for f in factors]
    if len(set(names)) != len(names):
        raise CaseError("factor names must be unique")
    by_name = {f.name: f for f in factors}
    for rule in rules:
        seen: set[str] = set()
        for fname, allowed in rule.condition:
            if fname not in by_name:
                raise CaseError(f"rule {rule.id!r} references unknown factor {fname!r}")
            if fname in seen:
                raise CaseError(f"rule {rule.id!r} mentions factor {fname!r} twice")
            seen.add(fname)
            if not allowed:
                raise CaseError(f"rule {rule.id!r}: empty allowed set for {fname!r}")
            extra = allowed - set(by_name[fname].domain)
            if extra:
                raise CaseError(
                    f"rule {rule.id!r}: values {sorted(extra)} outside the domain of {fname!r}"
                )


def universe_size(factors: list[Factor]) -> int:
    """Product of domain sizes; declines universes beyond the guard."""
    _validate(factors, ())
    size = math.prod(len(f.domain) for f in factors)
    if size > MAX_UNIVERSE:
        raise UniverseTooLargeError(
            f"universe has {size} cases, beyond the guard of {MAX_UNIVERSE}"
        )
    return size


def enumerate_cases(factors: list[Factor]) -> Iterator[Case]:
    yield from itertools.product(*(f.domain for f in factors))


def rule_matches(rule: CaseRule, factors: list[Factor], case: Case) -> bool:
    index = {f.name: i for i, f in enumerate(factors)}
    return all(case[index[fname]] in allowed for fname, allowed in rule.condition)


def check_completeness(
    factors: list[Factor],
    rules: list[CaseRule],
    example_limit: Optional[int] = DEFAULT_EXAMPLE_LIMIT,
) -> CompletenessResult:
    """Cases matched by no rule, in enumeration order; exact total, at
    most ``example_limit`` example cases (None keeps them all)."""
    size = universe_size(factors)
    _validate(factors, rules)
    index = {f.name: i for i, f in enumerate(factors)}
    compiled = [
        [(index[fname], allowed) for fname, allowed in rule.condition] for rule in rules
    ]
    total = 0
    examples: list[Case] = []
    for case in enumerate_cases(factors):
        if not any(all(case[i] in allowed for i, allowed in cond) for cond in compiled):
            total += 1
            if example_limit is None or len(examples) < example_limit:
                examples.append(case)
    return CompletenessResult(universe=size, total_uncovered=total, examples=tuple(examples))


def check_consistency(
    factors: list[Factor],
    rules: list[CaseRule],
    example_limit: Optional[int] = DEFAULT_EXAMPLE_LIMIT,
) -> ConsistencyResult:
    """Cases matched by two or more rules with distinct outcomes. Rules
    that agree on the outcome do not conflict."""
    size = universe_size(factors)
    _validate(factors, rules)
    index = {f.name: i for i, f in enumerate(factors)}
    compiled = [
        (rule.id, rule.outcome, [(index[fname], allowed) for fname, allowed in rule.condition])
        for rule in rules
    ]
    total = 0
    examples: list[tuple[Case, tuple[str, ...]]] = []
    for case in enumerate_cases(factors):
        matched = [
            (rid, outcome)
            for rid, outcome, cond in compiled
            if all(case[i] in allowed for i, allowed in cond)
        ]
        if len({outcome for _, outcome in matched}) >= 2:
            total += 1
            if example_limit is None or len(examples) < example_limit:
                examples.append((case, tuple(sorted(rid for rid, _ in matched))))
    return ConsistencyResult(universe=size, total_conflicts=total, examples=tuple(examples))


# -- rule-set file format ------------------------------------------------
#
#   factor <name> = v1 | v2 | ...
#   rule <id>: <factor> in {v, ...} & <factor> in * -> <outcome>
#
# ``*`` denotes the factor's full domain; blank lines and ``#`` comments
# are ignored.

_FACTOR_RE = re.compile(r"^factor\s+([A-Za-z0-9_-]+)\s*=\s*(.+)$")
_RULE_RE = re.compile(r"^rule\s+([A-Za-z0-9_-]+)\s*:\s*(.*?)\s*->\s*(\S.*)$")
_LITERAL_RE = re.compile(r"^([A-Za-z0-9_-]+)\s+in\s+(\{.*\}|\*)$")


def parse_rule_file(text: str) -> tuple[list[Factor], list[CaseRule]]:
    factors: list[Factor] = []
    rules: list[CaseRule] = []
    by_name: dict[str, Factor] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _FACTOR_RE.match(line)
        if m:
            name = m.group(1)
            domain = tuple(v.strip() for v in m.group(2).split("|"))
            if any(not v for v in domain):
                raise CaseError(f"line {lineno}: empty domain value")
            factor = Factor(name, domain)
            if name in by_name:
                raise CaseError(f"line {lineno}: factor {name!r} declared twice")
            by_name[name] = factor
            factors.append(factor)
            continue
        m = _RULE_RE.match(line)
        if m:
            rule_id, condition_text, outcome = m.group(1), m.group(2), m.group(3)
            literals: list[tuple[str, frozenset[str]]] = []
            if condition_text:
                for part in condition_text.split("&"):
                    part = part.strip()
                    lm = _LITERAL_RE.match(part)
                    if not lm:
                        raise CaseError(f"line {lineno}: cannot parse condition {part!r}")
                    fname, values_text = lm.group(1), lm.group(2)
                    if fname not in by_name:
                        raise CaseError(f"line {lineno}: unknown factor {fname!r}")
                    if values_text == "*":
                        allowed = frozenset(by_name[fname].domain)
                    else:
                        values = [v.strip() for v in values_text[1:-1].split(",") if v.strip()]
                        allowed = frozenset(values)
                    literals.append((fname, allowed))
            rules.append(CaseRule(id=rule_id, condition=tuple(literals), outcome=outcome.strip()))
            continue
        raise CaseError(f"line {lineno}: cannot parse {line!r}")
    _validate(factors, rules)
    return factors, rules
