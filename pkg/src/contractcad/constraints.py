"""Constraint representation, checking, enforcement, and witness search.

Three constraint families govern assembly: requirement/exclusion/
exactly-one rules over inclusion and selection atoms, and predicate rules
over parameter bindings. Checking is available in full and incremental
form; the incremental path re-evaluates only constraints indexed by the
atoms a delta touched and is observationally identical to a full check.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field, replace
from datetime import date
from decimal import Decimal
from enum import Enum
from typing import Iterable, Mapping, Optional, Union

from .model import (
    DocumentInstance,
    GenericDocument,
    ModelError,
    ParameterDecl,
    empty_instance,
)
from .templates import derive_textual_constraints, extract_params, parse_template
from .values import BoundValue, Money, ParamType, check_value


class EngineError(ValueError):
    """Ill-typed delta, unknown id, or other constraint-engine misuse."""


class TooLargeError(EngineError):
    """The requested exhaustive computation exceeds the size guard."""


class Origin(Enum):
    AUTHORED = "authored"
    DERIVED_TEXTUAL = "derived-textual"


# -- atoms ---------------------------------------------------------------


@dataclass(frozen=True)
class UnitIncluded:
    unit_id: str

    def __str__(self) -> str:
        return f"unit({self.unit_id})"


@dataclass(frozen=True)
class VersionSelected:
    version_id: str

    def __str__(self) -> str:
        return f"version({self.version_id})"


Atom = Union[UnitIncluded, VersionSelected]


# -- constraints ---------------------------------------------------------


@dataclass(frozen=True)
class Requires:
    id: str
    antecedent: Atom
    consequent_unit: str
    origin: Origin = Origin.AUTHORED
    message: str = ""

    kind = "requires"


@dataclass(frozen=True)
class Excludes:
    """Symmetric mutual exclusion between two atoms."""

    id: str
    a: Atom
    b: Atom
    origin: Origin = Origin.AUTHORED
    message: str = ""

    kind = "excludes"

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise EngineError(f"excludes constraint {self.id!r}: arguments must differ")


@dataclass(frozen=True)
class ExactlyOne:
    id: str
    group: frozenset[str]
    origin: Origin = Origin.AUTHORED
    message: str = ""

    kind = "exactly-one"

    def __post_init__(self) -> None:
        if len(self.group) < 2:
            raise EngineError(f"exactly-one constraint {self.id!r}: group needs >= 2 members")


# parameter-rule expressions ---------------------------------------------


@dataclass(frozen=True)
class ParamRef:
    name: str


@dataclass(frozen=True)
class Lit:
    value: BoundValue


Operand = Union[ParamRef, Lit]


@dataclass(frozen=True)
class Comparison:
    lhs: Operand
    op: str  # < <= = !=
    rhs: Operand


@dataclass(frozen=True)
class Distinct:
    a: str
    b: str


@dataclass(frozen=True)
class Defined:
    name: str


Clause = Union[Comparison, Distinct, Defined]


@dataclass(frozen=True)
class ParamRule:
    id: str
    clauses: tuple[Clause, ...]
    source: str  # surface syntax the rule was authored in
    origin: Origin = Origin.AUTHORED
    message: str = ""

    kind = "param-rule"


Constraint = Union[Requires, Excludes, ExactlyOne, ParamRule]

_DATE_LIT_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_INT_LIT_RE = re.compile(r"^-?\d+$")
_DEC_LIT_RE = re.compile(r"^-?\d+\.\d+$")
_NAME_LIT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")

_TEXT_LIKE = {ParamType.TEXT, ParamType.PARTY, ParamType.ENUM}


def _parse_operand(text: str, decls: Mapping[str, ParameterDecl]) -> tuple[Operand, str]:
    """Parse one operand; returns (operand, type-class tag)."""
    text = text.strip()
    if not text:
        raise EngineError("empty operand in parameter rule")
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return Lit(text[1:-1]), "text"
    if _DATE_LIT_RE.match(text):
        return Lit(date.fromisoformat(text)), "date"
    if _DEC_LIT_RE.match(text):
        return Lit(Decimal(text)), "decimal"
    if _INT_LIT_RE.match(text):
        return Lit(int(text)), "integer"
    if _NAME_LIT_RE.match(text):
        if text not in decls:
            raise EngineError(f"parameter rule references undeclared parameter {text!r}")
        return ParamRef(text), _type_class(decls[text].ptype)
    raise EngineError(f"bad operand in parameter rule: {text!r}")


def _type_class(ptype: ParamType) -> str:
    if ptype in _TEXT_LIKE:
        return "text"
    return ptype.value


def _compatible(a: str, b: str) -> bool:
    if a == b:
        return True
    # integer literals may stand in for decimal values
    return {a, b} == {"integer", "decimal"}


def parse_param_rule(
    rule_id: str,
    source: str,
    decls: Iterable[ParameterDecl],
    message: str = "",
) -> ParamRule:
    """Parse the surface syntax: ``distinct(a,b)``, ``defined(a)``,
    comparisons with ``< <= = !=``, joined by ``&&``."""
    by_name = {d.name: d for d in decls}
    clauses: list[Clause] = []
    for raw in source.split("&&"):
        part = raw.strip()
        if not part:
            raise EngineError(f"empty clause in parameter rule {source!r}")
        m = re.match(r"^distinct\(\s*([A-Za-z0-9_-]+)\s*,\s*([A-Za-z0-9_-]+)\s*\)$", part)
        if m:
            a, b = m.group(1), m.group(2)
            for name in (a, b):
                if name not in by_name:
                    raise EngineError(f"parameter rule references undeclared parameter {name!r}")
            if not _compatible(_type_class(by_name[a].ptype), _type_class(by_name[b].ptype)):
                raise EngineError(f"distinct({a},{b}): parameters have different types")
            clauses.append(Distinct(a, b))
            continue
        m = re.match(r"^defined\(\s*([A-Za-z0-9_-]+)\s*\)$", part)
        if m:
            name = m.group(1)
            if name not in by_name:
                raise EngineError(f"parameter rule references undeclared parameter {name!r}")
            clauses.append(Defined(name))
            continue
        m = re.match(r"^(.+?)\s*(<=|!=|<|=)\s*(.+)$", part)
        if m:
            lhs, lcls = _parse_operand(m.group(1), by_name)
            rhs, rcls = _parse_operand(m.group(3), by_name)
            if not _compatible(lcls, rcls):
                raise EngineError(
                    f"comparison {part!r}: operand types {lcls} and {rcls} differ"
                )
            clauses.append(Comparison(lhs, m.group(2), rhs))
            continue
        raise EngineError(f"cannot parse parameter-rule clause: {part!r}")
    return ParamRule(id=rule_id, clauses=tuple(clauses), source=source, message=message)


def rule_value_params(rule: ParamRule) -> frozenset[str]:
    """Parameters whose *values* the rule reads. ``defined(p)`` tests
    presence only, so its argument does not gate evaluation."""
    names: set[str] = set()
    for clause in rule.clauses:
        if isinstance(clause, Comparison):
            for op in (clause.lhs, clause.rhs):
                if isinstance(op, ParamRef):
                    names.add(op.name)
        elif isinstance(clause, Distinct):
            names.update((clause.a, clause.b))
    return frozenset(names)


def rule_all_params(rule: ParamRule) -> frozenset[str]:
    names = set(rule_value_params(rule))
    for clause in rule.clauses:
        if isinstance(clause, Defined):
            names.add(clause.name)
    return frozenset(names)


def _cmp(a: BoundValue, b: BoundValue) -> Optional[int]:
    """Three-way compare; None when the values are incomparable."""
    if isinstance(a, Money) or isinstance(b, Money):
        if not (isinstance(a, Money) and isinstance(b, Money)):
            return None
        if a.currency != b.currency:
            return None
        a, b = a.amount, b.amount
    if isinstance(a, Decimal) and isinstance(b, int):
        b = Decimal(b)
    if isinstance(a, int) and isinstance(b, Decimal):
        a = Decimal(a)
    if type(a) is not type(b) and not (
        isinstance(a, (int, Decimal)) and isinstance(b, (int, Decimal))
    ):
        if isinstance(a, str) and isinstance(b, str):
            pass
        else:
            return None
    try:
        if a < b:  # type: ignore[operator]
            return -1
        if a == b:
            return 0
        return 1
    except TypeError:
        return None


def eval_param_rule(
    rule: ParamRule, bindings: Mapping[str, BoundValue]
) -> tuple[bool, str]:
    """Evaluate a rule whose value-parameters are all bound.

    Returns (holds, note); incomparable operands (for example money in two
    currencies) make the rule fail with an explanatory note.
    """
    for clause in rule.clauses:
        if isinstance(clause, Defined):
            if clause.name not in bindings:
                return False, f"parameter {clause.name} is not bound"
        elif isinstance(clause, Distinct):
            if bindings[clause.a] == bindings[clause.b]:
                return False, f"{clause.a} and {clause.b} are equal"
        else:
            lhs = bindings[clause.lhs.name] if isinstance(clause.lhs, ParamRef) else clause.lhs.value
            rhs = bindings[clause.rhs.name] if isinstance(clause.rhs, ParamRef) else clause.rhs.value
            c = _cmp(lhs, rhs)
            if c is None:
                return False, "operands are incomparable (type or currency mismatch)"
            holds = {
                "<": c < 0,
                "<=": c <= 0,
                "=": c == 0,
                "!=": c != 0,
            }[clause.op]
            if not holds:
                return False, f"{clause.lhs} {clause.op} {clause.rhs} does not hold"
    return True, ""


# -- validation hook used by model.validate_structure --------------------


def constraint_fault(
    constraint: Constraint,
    unit_ids: Iterable[str],
    version_ids: set[str],
    param_names: set[str],
) -> Optional[str]:
    units = set(unit_ids)

    def atom_fault(atom: Atom) -> Optional[str]:
        if isinstance(atom, UnitIncluded):
            return None if atom.unit_id in units else f"unknown unit {atom.unit_id!r}"
        return None if atom.version_id in version_ids else f"unknown version {atom.version_id!r}"

    if isinstance(constraint, Requires):
        return atom_fault(constraint.antecedent) or (
            None if constraint.consequent_unit in units else f"unknown unit {constraint.consequent_unit!r}"
        )
    if isinstance(constraint, Excludes):
        return atom_fault(constraint.a) or atom_fault(constraint.b)
    if isinstance(constraint, ExactlyOne):
        missing = sorted(constraint.group - units)
        return f"unknown units {missing}" if missing else None
    if isinstance(constraint, ParamRule):
        missing = sorted(rule_all_params(constraint) - param_names)
        return f"undeclared parameters {missing}" if missing else None
    return f"unknown constraint type {type(constraint).__name__}"


# -- deltas --------------------------------------------------------------


@dataclass(frozen=True)
class Include:
    unit_id: str


@dataclass(frozen=True)
class Exclude:
    unit_id: str


@dataclass(frozen=True)
class Select:
    unit_id: str
    version_id: str


@dataclass(frozen=True)
class Deselect:
    unit_id: str


@dataclass(frozen=True)
class Bind:
    name: str
    value: BoundValue


@dataclass(frozen=True)
class Unbind:
    name: str


Delta = Union[Include, Exclude, Select, Deselect, Bind, Unbind]


@dataclass
class Touched:
    units: set[str] = field(default_factory=set)
    versions: set[str] = field(default_factory=set)
    params: set[str] = field(default_factory=set)
    selection_changed_units: set[str] = field(default_factory=set)


# -- reports -------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    constraint_id: str
    kind: str
    involved: tuple[str, ...]
    message: str


GAP_NO_SELECTION = "no-selection"
GAP_GROUP_EMPTY = "exactly-one-empty"
GAP_UNBOUND = "unbound-parameter"
GAP_EMPTY_LEAF = "empty-leaf"

#: gap kinds that concern structural completeness (as opposed to bindings)
STRUCTURAL_GAPS = (GAP_NO_SELECTION, GAP_GROUP_EMPTY, GAP_EMPTY_LEAF)


@dataclass(frozen=True)
class Gap:
    kind: str
    subject: str
    message: str


@dataclass(frozen=True)
class CheckReport:
    violations: tuple[Violation, ...]
    gaps: tuple[Gap, ...]
    revision: int = 0
    full_recheck: bool = False

    @property
    def clean(self) -> bool:
        return not self.violations and not self.gaps

    def findings(self) -> tuple:
        """Everything except bookkeeping metadata, for equality checks."""
        return (self.violations, self.gaps)


# -- enforce outcome -----------------------------------------------------


@dataclass(frozen=True)
class ChainStep:
    constraint_id: Optional[str]  # None for the trigger / ancestor closure
    atom: Atom


@dataclass(frozen=True)
class Contradiction:
    constraint_id: str
    chain: tuple[ChainStep, ...]
    attempted: frozenset[str]  # units the closure would have added
    message: str


@dataclass(frozen=True)
class EnforceResult:
    instance: DocumentInstance
    added: frozenset[str]
    chain: tuple[ChainStep, ...]


class Checker:
    """Compiled constraint view of one generic document.

    Built once per document snapshot; immutable and shareable. Holds the
    authored constraints plus the textual constraints derived from
    cross-references, an atom-to-constraint index, and parsed templates.
    """

    def __init__(self, doc: GenericDocument):
        self.doc = doc
        derived, faults = derive_textual_constraints(doc)
        self.derivation_faults = faults
        merged: dict[str, Constraint] = {}
        for constraint in list(doc.constraints) + derived:
            if constraint.id in merged:
                raise EngineError(f"duplicate constraint id: {constraint.id!r}")
            merged[constraint.id] = constraint
        self.constraints: dict[str, Constraint] = dict(sorted(merged.items()))

        self.parents = doc.parent_map()
        self._ancestors: dict[str, tuple[str, ...]] = {
            uid: tuple(doc.ancestors(uid, self.parents)) for uid in doc.units
        }
        self._descendants: dict[str, tuple[str, ...]] = {}
        order = doc.preorder()
        for uid in reversed(order):
            acc: list[str] = []
            for child in doc.units[uid].children:
                acc.append(child)
                acc.extend(self._descendants.get(child, ()))
            self._descendants[uid] = tuple(acc)

        self.version_owner: dict[str, str] = {}
        self.version_params: dict[str, frozenset[str]] = {}
        for version in doc.all_versions():
            self.version_owner[version.id] = version.unit_id
            try:
                self.version_params[version.id] = extract_params(parse_template(version.template))
            except ValueError:
                self.version_params[version.id] = frozenset()
        self.versioned_units = frozenset(u for u, vs in doc.versions.items() if vs)
        self.leaf_units = frozenset(u for u, unit in doc.units.items() if not unit.children)

        self.unit_index: dict[str, set[str]] = {}
        self.version_index: dict[str, set[str]] = {}
        self.param_index: dict[str, set[str]] = {}

        def idx_atom(atom: Atom, cid: str) -> None:
            if isinstance(atom, UnitIncluded):
                self.unit_index.setdefault(atom.unit_id, set()).add(cid)
            else:
                self.version_index.setdefault(atom.version_id, set()).add(cid)

        for cid, constraint in self.constraints.items():
            if isinstance(constraint, Requires):
                idx_atom(constraint.antecedent, cid)
                self.unit_index.setdefault(constraint.consequent_unit, set()).add(cid)
            elif isinstance(constraint, Excludes):
                idx_atom(constraint.a, cid)
                idx_atom(constraint.b, cid)
            elif isinstance(constraint, ExactlyOne):
                for uid in constraint.group:
                    self.unit_index.setdefault(uid, set()).add(cid)
            else:
                for name in rule_all_params(constraint):
                    self.param_index.setdefault(name, set()).add(cid)

    # -- helpers ---------------------------------------------------------

    def ancestors(self, unit_id: str) -> tuple[str, ...]:
        return self._ancestors[unit_id]

    def descendants(self, unit_id: str) -> tuple[str, ...]:
        return self._descendants[unit_id]

    def _atom_true(self, atom: Atom, included: frozenset[str], selected: frozenset[str]) -> bool:
        if isinstance(atom, UnitIncluded):
            return atom.unit_id in included
        return atom.version_id in selected

    def _atom_ids(self, atom: Atom) -> str:
        return atom.unit_id if isinstance(atom, UnitIncluded) else atom.version_id

    # -- single-constraint evaluation ------------------------------------

    def _eval(self, cid: str, instance: DocumentInstance, selected: frozenset[str]) -> Optional[Violation]:
        constraint = self.constraints[cid]
        included = instance.included
        if isinstance(constraint, Requires):
            if (
                self._atom_true(constraint.antecedent, included, selected)
                and constraint.consequent_unit not in included
            ):
                msg = constraint.message or (
                    f"{constraint.antecedent} requires unit {constraint.consequent_unit} to be included"
                )
                return Violation(
                    cid, "requires",
                    (self._atom_ids(constraint.antecedent), constraint.consequent_unit),
                    msg,
                )
        elif isinstance(constraint, Excludes):
            if self._atom_true(constraint.a, included, selected) and self._atom_true(
                constraint.b, included, selected
            ):
                msg = constraint.message or f"{constraint.a} and {constraint.b} exclude each other"
                return Violation(
                    cid, "excludes",
                    (self._atom_ids(constraint.a), self._atom_ids(constraint.b)),
                    msg,
                )
        elif isinstance(constraint, ExactlyOne):
            members = tuple(sorted(u for u in constraint.group if u in included))
            if len(members) >= 2:
                msg = constraint.message or (
                    f"exactly one of {sorted(constraint.group)} may be included; "
                    f"found {list(members)}"
                )
                return Violation(cid, "exactly-one", members, msg)
        else:
            needed = rule_value_params(constraint)
            if needed <= set(instance.bindings):
                holds, note = eval_param_rule(constraint, instance.bindings)
                if not holds:
                    msg = constraint.message or f"rule '{constraint.source}' is violated ({note})"
                    return Violation(
                        cid, "param-rule", tuple(sorted(rule_all_params(constraint))), msg
                    )
        return None

    # -- gap evaluation --------------------------------------------------

    def _shadowed(self, unit_id: str, selections: Mapping[str, str]) -> bool:
        return any(a in selections for a in self._ancestors[unit_id])

    def _selection_gap(self, unit_id: str, instance: DocumentInstance) -> Optional[Gap]:
        if (
            unit_id in instance.included
            and unit_id in self.versioned_units
            and unit_id not in instance.selections
            and not self._shadowed(unit_id, instance.selections)
        ):
            return Gap(GAP_NO_SELECTION, unit_id, f"unit {unit_id} has versions but none is selected")
        return None

    def _empty_leaf_gap(self, unit_id: str, instance: DocumentInstance) -> Optional[Gap]:
        # an included leaf with no versions has no text and no way to get
        # any, which blocks finalization (unless an ancestor's fragment
        # covers the subtree)
        if (
            unit_id in instance.included
            and unit_id in self.leaf_units
            and unit_id not in self.versioned_units
            and not self._shadowed(unit_id, instance.selections)
        ):
            return Gap(GAP_EMPTY_LEAF, unit_id, f"included leaf unit {unit_id} has no versions")
        return None

    def _group_gap(self, cid: str, instance: DocumentInstance) -> Optional[Gap]:
        constraint = self.constraints[cid]
        assert isinstance(constraint, ExactlyOne)
        if not any(u in instance.included for u in constraint.group):
            return Gap(
                GAP_GROUP_EMPTY, cid,
                f"no member of the exactly-one group {sorted(constraint.group)} is included",
            )
        return None

    def referenced_params(self, instance: DocumentInstance) -> frozenset[str]:
        out: set[str] = set()
        for vid in instance.selections.values():
            out |= self.version_params.get(vid, frozenset())
        return frozenset(out)

    def _unbound_gap(self, name: str, instance: DocumentInstance) -> Optional[Gap]:
        referenced = any(
            name in self.version_params.get(vid, frozenset())
            for vid in instance.selections.values()
        )
        if referenced and name not in instance.bindings:
            return Gap(GAP_UNBOUND, name, f"parameter {name} is used by a selected fragment but unbound")
        return None

    # -- full check ------------------------------------------------------

    def check_full(self, instance: DocumentInstance, full_recheck: bool = False) -> CheckReport:
        selected = frozenset(instance.selections.values())
        violations = []
        gaps = []
        for cid in self.constraints:
            violation = self._eval(cid, instance, selected)
            if violation:
                violations.append(violation)
            if isinstance(self.constraints[cid], ExactlyOne):
                gap = self._group_gap(cid, instance)
                if gap:
                    gaps.append(gap)
        for unit_id in instance.included:
            for gap in (
                self._selection_gap(unit_id, instance),
                self._empty_leaf_gap(unit_id, instance),
            ):
                if gap:
                    gaps.append(gap)
        for name in self.referenced_params(instance):
            gap = self._unbound_gap(name, instance)
            if gap:
                gaps.append(gap)
        return CheckReport(
            violations=tuple(sorted(violations, key=lambda v: v.constraint_id)),
            gaps=tuple(sorted(gaps, key=lambda g: (g.kind, g.subject))),
            revision=instance.revision,
            full_recheck=full_recheck,
        )

    # -- delta application -----------------------------------------------

    def apply_delta(self, instance: DocumentInstance, delta: Delta) -> tuple[DocumentInstance, Touched]:
        """Apply one edit, maintaining ancestor closure and the cascade
        rule for exclusion. Returns the new instance and the touched atoms."""
        doc = self.doc
        touched = Touched()
        included = set(instance.included)
        selections = dict(instance.selections)
        bindings = dict(instance.bindings)

        if isinstance(delta, Include):
            doc.unit(delta.unit_id)
            for uid in (delta.unit_id, *self._ancestors[delta.unit_id]):
                if uid not in included:
                    included.add(uid)
                    touched.units.add(uid)
        elif isinstance(delta, Exclude):
            doc.unit(delta.unit_id)
            if delta.unit_id == doc.root_id:
                raise EngineError("the root unit cannot be excluded")
            for uid in (delta.unit_id, *self._descendants[delta.unit_id]):
                if uid in included:
                    included.discard(uid)
                    touched.units.add(uid)
                    if uid in selections:
                        touched.versions.add(selections.pop(uid))
                        touched.selection_changed_units.add(uid)
        elif isinstance(delta, Select):
            doc.unit(delta.unit_id)
            if delta.unit_id not in included:
                raise EngineError(f"cannot select for unit {delta.unit_id!r}: not included")
            if delta.version_id not in {v.id for v in doc.versions_of(delta.unit_id)}:
                raise EngineError(
                    f"version {delta.version_id!r} does not belong to unit {delta.unit_id!r}"
                )
            old = selections.get(delta.unit_id)
            if old != delta.version_id:
                if old is not None:
                    touched.versions.add(old)
                selections[delta.unit_id] = delta.version_id
                touched.versions.add(delta.version_id)
                touched.units.add(delta.unit_id)
                touched.selection_changed_units.add(delta.unit_id)
        elif isinstance(delta, Deselect):
            doc.unit(delta.unit_id)
            old = selections.pop(delta.unit_id, None)
            if old is not None:
                touched.versions.add(old)
                touched.units.add(delta.unit_id)
                touched.selection_changed_units.add(delta.unit_id)
        elif isinstance(delta, Bind):
            decl = doc.parameter(delta.name)
            check_value(delta.value, decl.ptype, decl.enum_values)
            if bindings.get(delta.name) != delta.value:
                bindings[delta.name] = delta.value
                touched.params.add(delta.name)
        elif isinstance(delta, Unbind):
            doc.parameter(delta.name)
            if delta.name in bindings:
                del bindings[delta.name]
                touched.params.add(delta.name)
        else:
            raise EngineError(f"unknown delta type: {type(delta).__name__}")

        new_instance = replace(
            instance,
            included=frozenset(included),
            selections=selections,
            bindings=bindings,
            revision=instance.revision + 1,
        )
        return new_instance, touched

    # -- incremental check -----------------------------------------------

    def check_incremental(
        self, instance: DocumentInstance, delta: Delta, prev: CheckReport
    ) -> tuple[DocumentInstance, CheckReport]:
        """Apply ``delta`` and update ``prev`` by re-evaluating only the
        constraints and gaps the delta's touched atoms index. A stale
        ``prev`` (wrong revision) triggers a flagged full recheck."""
        if prev.revision != instance.revision:
            new_instance, _ = self.apply_delta(instance, delta)
            return new_instance, self.check_full(new_instance, full_recheck=True)

        new_instance, touched = self.apply_delta(instance, delta)
        affected: set[str] = set()
        for uid in touched.units:
            affected |= self.unit_index.get(uid, set())
        for vid in touched.versions:
            affected |= self.version_index.get(vid, set())
        for name in touched.params:
            affected |= self.param_index.get(name, set())

        selected = frozenset(new_instance.selections.values())
        violations = {v.constraint_id: v for v in prev.violations}
        gaps = {(g.kind, g.subject): g for g in prev.gaps}

        for cid in affected:
            violations.pop(cid, None)
            violation = self._eval(cid, new_instance, selected)
            if violation:
                violations[cid] = violation
            if isinstance(self.constraints[cid], ExactlyOne):
                gaps.pop((GAP_GROUP_EMPTY, cid), None)
                gap = self._group_gap(cid, new_instance)
                if gap:
                    gaps[(GAP_GROUP_EMPTY, cid)] = gap

        sel_units = set(touched.units)
        for uid in touched.selection_changed_units:
            sel_units.update(self._descendants[uid])
        for uid in sel_units:
            gaps.pop((GAP_NO_SELECTION, uid), None)
            gaps.pop((GAP_EMPTY_LEAF, uid), None)
            for gap in (
                self._selection_gap(uid, new_instance),
                self._empty_leaf_gap(uid, new_instance),
            ):
                if gap:
                    gaps[(gap.kind, uid)] = gap

        affected_params = set(touched.params)
        for vid in touched.versions:
            affected_params |= self.version_params.get(vid, frozenset())
        for name in affected_params:
            gaps.pop((GAP_UNBOUND, name), None)
            gap = self._unbound_gap(name, new_instance)
            if gap:
                gaps[(GAP_UNBOUND, name)] = gap

        return new_instance, CheckReport(
            violations=tuple(sorted(violations.values(), key=lambda v: v.constraint_id)),
            gaps=tuple(sorted(gaps.values(), key=lambda g: (g.kind, g.subject))),
            revision=new_instance.revision,
        )

    # -- enforce closure -------------------------------------------------

    def enforce_include(
        self, instance: DocumentInstance, unit_id: str
    ) -> Union[EnforceResult, Contradiction]:
        """Least fixpoint of requirement consequents reachable from
        including ``unit_id`` (with ancestor closure). Atomic: on a
        contradiction the instance is returned untouched inside the
        Contradiction value and nothing is applied."""
        self.doc.unit(unit_id)
        included = set(instance.included)
        selected = frozenset(instance.selections.values())
        derivation: dict[str, ChainStep] = {}
        order: list[str] = []

        def admit(uid: str, cid: Optional[str]) -> None:
            for x in (uid, *self._ancestors[uid]):
                if x not in included:
                    included.add(x)
                    derivation[x] = ChainStep(cid, UnitIncluded(x))
                    order.append(x)

        admit(unit_id, None)
        requires = [
            c for c in self.constraints.values() if isinstance(c, Requires)
        ]
        changed = True
        while changed:
            changed = False
            for constraint in requires:
                if constraint.consequent_unit in included:
                    continue
                if self._atom_true(constraint.antecedent, frozenset(included), selected):
                    admit(constraint.consequent_unit, constraint.id)
                    changed = True

        frozen = frozenset(included)
        conflicts: list[tuple[str, Atom]] = []
        for cid, constraint in self.constraints.items():
            if isinstance(constraint, Excludes):
                if self._atom_true(constraint.a, frozen, selected) and self._atom_true(
                    constraint.b, frozen, selected
                ):
                    conflicts.append((cid, constraint.b))
            elif isinstance(constraint, ExactlyOne):
                members = sorted(u for u in constraint.group if u in frozen)
                if len(members) >= 2:
                    conflicts.append((cid, UnitIncluded(members[1])))

        added = frozenset(included - instance.included)
        chain = tuple(derivation[uid] for uid in order)
        if conflicts:
            conflicts.sort(key=lambda pair: pair[0])
            cid, atom = conflicts[0]
            constraint = self.constraints[cid]
            return Contradiction(
                constraint_id=cid,
                chain=chain + (ChainStep(cid, atom),),
                attempted=added,
                message=constraint.message
                or f"enforcing inclusion of {unit_id} contradicts constraint {cid}",
            )
        new_instance = replace(
            instance,
            included=frozen,
            revision=instance.revision + 1,
        )
        return EnforceResult(instance=new_instance, added=added, chain=chain)

    # -- satisfiability search -------------------------------------------

    MAX_SEARCH_UNITS = 25

    def satisfiable(self, instance_id: str = "witness") -> Optional[DocumentInstance]:
        """Backtracking search for a complete, violation-free instance.

        Considers inclusion of every unit and a version choice for every
        unshadowed versioned included unit. Parameter rules and parameter
        completeness are outside the search (value domains are unbounded).
        Returns a witness instance or None; raises TooLargeError beyond
        the size guard.
        """
        if len(self.versioned_units) > self.MAX_SEARCH_UNITS:
            raise TooLargeError(
                f"document has {len(self.versioned_units)} versioned units; "
                f"search is limited to {self.MAX_SEARCH_UNITS}"
            )
        doc = self.doc
        order = doc.preorder()
        pos = {uid: i for i, uid in enumerate(order)}
        inclusion: dict[str, bool] = {}

        hard = [
            c
            for c in self.constraints.values()
            if isinstance(c, (Requires, Excludes, ExactlyOne))
        ]

        def unit_state(uid: str) -> Optional[bool]:
            return inclusion.get(uid)

        def pruned_by_units() -> bool:
            # definite violations given the partial inclusion assignment
            for c in hard:
                if isinstance(c, Requires) and isinstance(c.antecedent, UnitIncluded):
                    if (
                        unit_state(c.antecedent.unit_id) is True
                        and unit_state(c.consequent_unit) is False
                    ):
                        return True
                elif isinstance(c, Excludes):
                    atoms = (c.a, c.b)
                    if all(
                        isinstance(a, UnitIncluded) and unit_state(a.unit_id) is True
                        for a in atoms
                    ):
                        return True
                elif isinstance(c, ExactlyOne):
                    if sum(1 for u in c.group if unit_state(u) is True) >= 2:
                        return True
            return False

        def candidate(selections: dict[str, str]) -> Optional[DocumentInstance]:
            included = frozenset(u for u, inc in inclusion.items() if inc)
            candidate_instance = DocumentInstance(
                id=instance_id,
                generic_id=doc.id,
                generic_schema_version=doc.schema_version,
                included=included,
                selections=dict(selections),
                bindings={},
            )
            report = self.check_full(candidate_instance)
            if report.violations:
                return None
            if any(g.kind in STRUCTURAL_GAPS for g in report.gaps):
                return None
            return candidate_instance

        def select_stage() -> Optional[DocumentInstance]:
            eligible = [
                uid
                for uid in order
                if inclusion.get(uid)
                and uid in self.versioned_units
                and not any(
                    inclusion.get(a) and a in self.versioned_units
                    for a in self._ancestors[uid]
                )
            ]
            choices = [
                [v.id for v in doc.versions_of(uid)] for uid in eligible
            ]
            for combo in itertools.product(*choices):
                selections = dict(zip(eligible, combo))
                witness = candidate(selections)
                if witness is not None:
                    return witness
            return None

        def assign(index: int) -> Optional[DocumentInstance]:
            if index == len(order):
                return select_stage()
            uid = order[index]
            if uid in inclusion:  # forced excluded by an ancestor decision
                return assign(index + 1)
            for value in (True, False):
                if uid == doc.root_id and not value:
                    continue
                inclusion[uid] = value
                forced: list[str] = []
                if not value:
                    for d in self._descendants[uid]:
                        if d not in inclusion:
                            inclusion[d] = False
                            forced.append(d)
                if not pruned_by_units():
                    witness = assign(index + 1)
                    if witness is not None:
                        return witness
                del inclusion[uid]
                for d in forced:
                    del inclusion[d]
            return None

        return assign(0)

    # -- explanations ----------------------------------------------------

    def explain(self, report: CheckReport, violation_index: int) -> str:
        """One-paragraph human explanation of one report violation."""
        if not 0 <= violation_index < len(report.violations):
            raise EngineError(
                f"violation index {violation_index} out of range 0..{len(report.violations) - 1}"
            )
        violation = report.violations[violation_index]
        constraint = self.constraints[violation.constraint_id]
        doc = self.doc

        def describe_unit(uid: str) -> str:
            if uid in doc.units:
                from .model import unit_label

                label = unit_label(doc, uid)
                heading = doc.units[uid].heading
                return f"'{label} {heading}'" if label else f"'{heading}'"
            return uid

        def describe_atom(atom: Atom) -> str:
            if isinstance(atom, UnitIncluded):
                return f"including unit {describe_unit(atom.unit_id)}"
            owner = self.version_owner.get(atom.version_id, "?")
            return (
                f"selecting version {atom.version_id} of unit {describe_unit(owner)}"
            )

        if constraint.origin == Origin.DERIVED_TEXTUAL and isinstance(constraint, Requires):
            assert isinstance(constraint.antecedent, VersionSelected)
            vid = constraint.antecedent.version_id
            owner = self.version_owner.get(vid, "?")
            lead = (
                f"This requirement was derived from the document text: version {vid} "
                f"of {describe_unit(owner)} cross-references {describe_unit(constraint.consequent_unit)}, "
                f"so that unit must be included whenever the version is selected."
            )
        elif isinstance(constraint, Requires):
            lead = (
                f"Authored rule {constraint.id}: {describe_atom(constraint.antecedent)} "
                f"requires unit {describe_unit(constraint.consequent_unit)} to be included."
            )
        elif isinstance(constraint, Excludes):
            lead = (
                f"Authored rule {constraint.id}: {describe_atom(constraint.a)} and "
                f"{describe_atom(constraint.b)} are mutually exclusive."
            )
        elif isinstance(constraint, ExactlyOne):
            names = ", ".join(describe_unit(u) for u in sorted(constraint.group))
            lead = f"Authored rule {constraint.id}: exactly one of {names} may be included."
        else:
            names = ", ".join(sorted(rule_all_params(constraint)))
            lead = (
                f"Authored rule {constraint.id} over parameters {names}: "
                f"the predicate '{constraint.source}' must hold."
            )
        return f"{lead} {violation.message}."


# -- module-level conveniences ------------------------------------------


def check_full(doc: GenericDocument, instance: DocumentInstance) -> CheckReport:
    return Checker(doc).check_full(instance)


def check_incremental(
    doc: GenericDocument, instance: DocumentInstance, delta: Delta, prev: CheckReport
) -> tuple[DocumentInstance, CheckReport]:
    return Checker(doc).check_incremental(instance, delta, prev)


def enforce_include(
    doc: GenericDocument, instance: DocumentInstance, unit_id: str
) -> Union[EnforceResult, Contradiction]:
    return Checker(doc).enforce_include(instance, unit_id)


def satisfiable(doc: GenericDocument) -> Optional[DocumentInstance]:
    return Checker(doc).satisfiable()
