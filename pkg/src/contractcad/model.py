"""Generic contract documents, versioned units, and document instances.

A generic document describes a class of contracts: a tree of units
(document / part / section / provision / sentence), each optionally
carrying an ordered, append-only list of versioned text fragments, plus
parameter declarations and constraints. A document instance is a partial
selection from one generic document: an inclusion set, version
selections, and parameter bindings.

All values are treated as immutable snapshots: every mutating operation
returns a new document value and never touches its input.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Mapping, Optional

from . import templates
from .values import BoundValue, ParamType, check_value

SCHEMA_VERSION = 1

ROLE_TAGS = frozenset(
    {"definition", "prescription", "procedure", "formula", "secondary-condition"}
)


class ModelError(ValueError):
    """A structural or typing rule of the document model was broken."""


class UnitKind(Enum):
    DOCUMENT = "document"
    PART = "part"
    SECTION = "section"
    PROVISION = "provision"
    SENTENCE = "sentence"

    @property
    def rank(self) -> int:
        return _RANKS[self]


_RANKS = {
    UnitKind.DOCUMENT: 0,
    UnitKind.PART: 1,
    UnitKind.SECTION: 2,
    UnitKind.PROVISION: 3,
    UnitKind.SENTENCE: 4,
}


class Mode(Enum):
    NOTIFY = "notify"
    ENFORCE = "enforce"


@dataclass(frozen=True)
class Unit:
    id: str
    kind: UnitKind
    heading: str
    children: tuple[str, ...] = ()
    role_tags: frozenset[str] = frozenset()


@dataclass(frozen=True)
class ParameterDecl:
    name: str
    ptype: ParamType
    enum_values: tuple[str, ...] = ()
    description: str = ""


@dataclass(frozen=True)
class Version:
    id: str
    unit_id: str
    template: str
    rationale: str
    provenance: str = ""
    derived_from: Optional[str] = None
    created_at: str = ""


@dataclass(frozen=True)
class Fault:
    kind: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind} [{self.subject}]: {self.message}"


@dataclass
class GenericDocument:
    id: str
    title: str
    root_id: str
    units: dict[str, Unit]
    versions: dict[str, tuple[Version, ...]] = field(default_factory=dict)
    parameters: tuple[ParameterDecl, ...] = ()
    constraints: tuple = ()
    schema_version: int = SCHEMA_VERSION

    # -- lookups ---------------------------------------------------------

    def unit(self, unit_id: str) -> Unit:
        try:
            return self.units[unit_id]
        except KeyError:
            raise ModelError(f"unknown unit: {unit_id!r}") from None

    def versions_of(self, unit_id: str) -> tuple[Version, ...]:
        return self.versions.get(unit_id, ())

    def find_version(self, version_id: str) -> Version:
        for versions in self.versions.values():
            for v in versions:
                if v.id == version_id:
                    return v
        raise ModelError(f"unknown version: {version_id!r}")

    def all_versions(self) -> Iterator[Version]:
        for unit_id in self.versions:
            yield from self.versions[unit_id]

    def parameter(self, name: str) -> ParameterDecl:
        for decl in self.parameters:
            if decl.name == name:
                return decl
        raise ModelError(f"unknown parameter: {name!r}")

    def parent_map(self) -> dict[str, str]:
        parents: dict[str, str] = {}
        for unit in self.units.values():
            for child in unit.children:
                parents[child] = unit.id
        return parents

    def ancestors(self, unit_id: str, parents: Optional[dict[str, str]] = None) -> list[str]:
        """Strict ancestors of a unit, nearest first."""
        if parents is None:
            parents = self.parent_map()
        out = []
        cur = unit_id
        seen = {unit_id}
        while cur in parents:
            cur = parents[cur]
            if cur in seen:
                break  # cycle; validate_structure reports it
            seen.add(cur)
            out.append(cur)
        return out

    def preorder(self) -> list[str]:
        """Unit ids in depth-first tree order starting at the root."""
        out: list[str] = []
        seen: set[str] = set()

        def walk(uid: str) -> None:
            if uid in seen or uid not in self.units:
                return
            seen.add(uid)
            out.append(uid)
            for child in self.units[uid].children:
                walk(child)

        walk(self.root_id)
        return out


@dataclass(frozen=True)
class DocumentInstance:
    id: str
    generic_id: str
    generic_schema_version: int
    included: frozenset[str]
    selections: Mapping[str, str]  # unit id -> version id
    bindings: Mapping[str, BoundValue]
    mode: Mode = Mode.NOTIFY
    revision: int = 0  # in-memory edit counter, not persisted


def new_document(doc_id: str, title: str, root_heading: str = "") -> GenericDocument:
    """A fresh generic document containing only its root Document unit."""
    root = Unit(id="root", kind=UnitKind.DOCUMENT, heading=root_heading or title)
    return GenericDocument(id=doc_id, title=title, root_id="root", units={"root": root})


def empty_instance(doc: GenericDocument, instance_id: str, mode: Mode = Mode.NOTIFY) -> DocumentInstance:
    return DocumentInstance(
        id=instance_id,
        generic_id=doc.id,
        generic_schema_version=doc.schema_version,
        included=frozenset({doc.root_id}),
        selections={},
        bindings={},
        mode=mode,
    )


# -- generic-document operations ----------------------------------------


def _fresh_id(prefix: str, taken) -> str:
    n = 1
    while f"{prefix}{n}" in taken:
        n += 1
    return f"{prefix}{n}"


def add_unit(
    doc: GenericDocument,
    parent_id: str,
    kind: UnitKind,
    heading: str,
    position: Optional[int] = None,
    unit_id: Optional[str] = None,
    role_tags: frozenset[str] = frozenset(),
) -> tuple[GenericDocument, str]:
    """Insert a new unit under ``parent_id`` at ``position`` (default: end)."""
    parent = doc.unit(parent_id)
    if kind.rank <= parent.kind.rank:
        raise ModelError(
            f"rank violation: {kind.value} cannot sit under {parent.kind.value}"
        )
    if unit_id is None:
        unit_id = _fresh_id("u", doc.units)
    elif unit_id in doc.units:
        raise ModelError(f"duplicate unit id: {unit_id!r}")
    elif not unit_id:
        raise ModelError("unit id must be nonempty")
    bad_tags = set(role_tags) - ROLE_TAGS
    if bad_tags:
        raise ModelError(f"unknown role tags: {sorted(bad_tags)}")
    children = list(parent.children)
    if position is None:
        position = len(children)
    if not 0 <= position <= len(children):
        raise ModelError(f"position {position} out of range 0..{len(children)}")
    children.insert(position, unit_id)
    units = dict(doc.units)
    units[parent_id] = replace(parent, children=tuple(children))
    units[unit_id] = Unit(id=unit_id, kind=kind, heading=heading, role_tags=frozenset(role_tags))
    return replace(doc, units=units), unit_id


def add_version(
    doc: GenericDocument,
    unit_id: str,
    template: str,
    rationale: str,
    provenance: str = "",
    derived_from: Optional[str] = None,
    version_id: Optional[str] = None,
    created_at: str = "",
) -> tuple[GenericDocument, str]:
    """Append a version to a unit. Versions are append-only, never deleted."""
    doc.unit(unit_id)
    templates.parse_template(template)  # raises on fault
    existing = doc.versions_of(unit_id)
    if derived_from is not None:
        if derived_from not in {v.id for v in existing}:
            raise ModelError(
                f"derived_from {derived_from!r} is not a version of unit {unit_id!r}"
            )
        if not rationale:
            raise ModelError("a derived version must record a rationale")
    all_ids = {v.id for v in doc.all_versions()}
    if version_id is None:
        version_id = _fresh_id(f"{unit_id}:v", all_ids)
    elif version_id in all_ids:
        raise ModelError(f"duplicate version id: {version_id!r}")
    version = Version(
        id=version_id,
        unit_id=unit_id,
        template=template,
        rationale=rationale,
        provenance=provenance,
        derived_from=derived_from,
        created_at=created_at,
    )
    versions = dict(doc.versions)
    versions[unit_id] = existing + (version,)
    return replace(doc, versions=versions), version_id


def declare_parameter(doc: GenericDocument, decl: ParameterDecl) -> GenericDocument:
    if any(d.name == decl.name for d in doc.parameters):
        raise ModelError(f"parameter already declared: {decl.name!r}")
    if not decl.name:
        raise ModelError("parameter name must be nonempty")
    if decl.ptype == ParamType.ENUM and not decl.enum_values:
        raise ModelError(f"enum parameter {decl.name!r} has an empty value list")
    return replace(doc, parameters=doc.parameters + (decl,))


def unit_label(
    doc: GenericDocument,
    unit_id: str,
    instance: Optional[DocumentInstance] = None,
    separator: str = "-",
) -> str:
    """Positional label of a unit: 1-based ordinals along the root path.

    With an instance, ordinals count only included siblings, so labels
    renumber as units are excluded. The root's label is empty.
    """
    doc.unit(unit_id)
    if instance is not None and unit_id not in instance.included:
        raise ModelError(f"unit {unit_id!r} is not included in instance {instance.id!r}")
    parents = doc.parent_map()
    path = [unit_id] + doc.ancestors(unit_id, parents)
    path.reverse()  # root .. unit
    ordinals: list[str] = []
    for parent_id, child_id in zip(path, path[1:]):
        siblings = doc.units[parent_id].children
        if instance is not None:
            siblings = tuple(s for s in siblings if s in instance.included)
        ordinals.append(str(siblings.index(child_id) + 1))
    return separator.join(ordinals)


def validate_structure(doc: GenericDocument) -> list[Fault]:
    """All violations of the structural invariants; empty iff valid."""
    faults: list[Fault] = []
    if doc.root_id not in doc.units:
        faults.append(Fault("missing-root", doc.root_id, "root unit does not exist"))
        return faults
    root = doc.units[doc.root_id]
    if root.kind != UnitKind.DOCUMENT:
        faults.append(Fault("bad-root", doc.root_id, "root unit must have Document kind"))

    parent_count: dict[str, int] = {}
    for unit in doc.units.values():
        if not unit.id:
            faults.append(Fault("empty-id", unit.id, "unit id must be nonempty"))
        if len(set(unit.children)) != len(unit.children):
            faults.append(Fault("duplicate-child", unit.id, "children list has duplicates"))
        bad_tags = set(unit.role_tags) - ROLE_TAGS
        if bad_tags:
            faults.append(Fault("bad-role-tag", unit.id, f"unknown role tags {sorted(bad_tags)}"))
        for child_id in unit.children:
            child = doc.units.get(child_id)
            if child is None:
                faults.append(Fault("dangling-child", unit.id, f"child {child_id!r} does not exist"))
                continue
            parent_count[child_id] = parent_count.get(child_id, 0) + 1
            if child.kind.rank <= unit.kind.rank:
                faults.append(
                    Fault(
                        "rank-inversion",
                        child_id,
                        f"{child.kind.value} under {unit.kind.value}",
                    )
                )
    for unit_id, count in parent_count.items():
        if count > 1:
            faults.append(Fault("multi-parent", unit_id, "unit has more than one parent"))
    if doc.root_id in parent_count:
        faults.append(Fault("rooted-root", doc.root_id, "root unit appears as a child"))
    reachable = set(doc.preorder())
    for unit_id in doc.units:
        if unit_id not in reachable:
            faults.append(Fault("unreachable", unit_id, "unit is not reachable from the root"))

    for unit_id, versions in doc.versions.items():
        if unit_id not in doc.units:
            faults.append(Fault("dangling-versions", unit_id, "versions for unknown unit"))
            continue
        ids = {v.id for v in versions}
        if len(ids) != len(versions):
            faults.append(Fault("duplicate-version", unit_id, "duplicate version ids"))
        by_id = {v.id: v for v in versions}
        for v in versions:
            if v.unit_id != unit_id:
                faults.append(Fault("misfiled-version", v.id, "version filed under the wrong unit"))
            if v.derived_from is not None:
                if v.derived_from not in by_id:
                    faults.append(
                        Fault("foreign-lineage", v.id, "derived_from is not a version of the same unit")
                    )
                elif not v.rationale:
                    faults.append(Fault("missing-rationale", v.id, "derived version with empty rationale"))
        # lineage must be acyclic within the unit
        for v in versions:
            seen = set()
            cur: Optional[str] = v.id
            while cur is not None and cur in by_id:
                if cur in seen:
                    faults.append(Fault("lineage-cycle", v.id, "version lineage contains a cycle"))
                    break
                seen.add(cur)
                cur = by_id[cur].derived_from

    names = [d.name for d in doc.parameters]
    for name in sorted({n for n in names if names.count(n) > 1}):
        faults.append(Fault("duplicate-parameter", name, "parameter declared twice"))
    for decl in doc.parameters:
        if decl.ptype == ParamType.ENUM and not decl.enum_values:
            faults.append(Fault("empty-enum", decl.name, "enum parameter with empty value list"))

    version_ids = {v.id for v in doc.all_versions()}
    from .constraints import constraint_fault  # deferred: constraints imports model

    for constraint in doc.constraints:
        msg = constraint_fault(constraint, doc.units.keys(), version_ids, set(names))
        if msg:
            faults.append(Fault("bad-constraint", getattr(constraint, "id", "?"), msg))
    return faults


def validate_instance(doc: GenericDocument, instance: DocumentInstance) -> list[Fault]:
    """Violations of the instance invariants against its generic document."""
    faults: list[Fault] = []
    parents = doc.parent_map()
    for unit_id in instance.included:
        if unit_id not in doc.units:
            faults.append(Fault("unknown-unit", unit_id, "included unit does not exist"))
            continue
        for anc in doc.ancestors(unit_id, parents):
            if anc not in instance.included:
                faults.append(
                    Fault("ancestor-gap", unit_id, f"ancestor {anc!r} is not included")
                )
    if doc.root_id not in instance.included:
        faults.append(Fault("missing-root", doc.root_id, "root unit is not included"))
    for unit_id, version_id in instance.selections.items():
        if unit_id not in instance.included:
            faults.append(Fault("orphan-selection", unit_id, "selection for a unit not included"))
        if version_id not in {v.id for v in doc.versions_of(unit_id)}:
            faults.append(
                Fault("foreign-selection", unit_id, f"{version_id!r} is not a version of this unit")
            )
    for name, value in instance.bindings.items():
        try:
            decl = doc.parameter(name)
        except ModelError:
            faults.append(Fault("unknown-parameter", name, "binding for undeclared parameter"))
            continue
        try:
            check_value(value, decl.ptype, decl.enum_values)
        except ValueError as exc:
            faults.append(Fault("ill-typed-binding", name, str(exc)))
    return faults
