"""Shared fixtures, random generators, and independent oracles.

The oracles here deliberately re-derive results by the dumbest possible
means (scan-until-fixpoint, exhaustive enumeration, per-case matching)
so the engine's cleverer algorithms are checked against a second,
independent route.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import replace
from datetime import date
from decimal import Decimal
from typing import Optional

from contractcad.cases import CaseRule, Factor
from contractcad.constraints import (
    Atom,
    Bind,
    Checker,
    Delta,
    Deselect,
    ExactlyOne,
    Exclude,
    Excludes,
    Include,
    ParamRule,
    Requires,
    Select,
    Unbind,
    UnitIncluded,
    VersionSelected,
    parse_param_rule,
)
from contractcad.model import (
    DocumentInstance,
    GenericDocument,
    ParameterDecl,
    UnitKind,
    add_unit,
    add_version,
    declare_parameter,
    empty_instance,
    new_document,
)
from contractcad.values import Money, ParamType

# ---------------------------------------------------------------------------
# MF/1 fixture: a generic document modeled on the IEE Model Form MF/1
# (1988) general conditions, with the two historically contested clauses
# carried in two versions each.
# ---------------------------------------------------------------------------

TEXT_4_1_MODEL = (
    "Unless otherwise provided in the Contract the Conditions as amended by the "
    "Letter of Acceptance shall prevail over any other document forming part of "
    "the Contract and in the case of conflict between the General Conditions the "
    "Special Conditions shall prevail. Subject thereto the Specification shall "
    "prevail over any other document forming part of the Contract."
)

TEXT_4_1_NEGOTIATED = (
    "The documents forming the Contract are to be taken as mutually explanatory "
    "of one another and in the case of ambiguities or discrepancies the same "
    "shall be explained and adjusted by the Engineer who shall thereupon issue "
    "to the Contractor appropriate instructions in writing."
)

TEMPLATE_14_6_ORIGINAL = (
    "The Engineer shall notify the Contractor if the Engineer decides that the "
    "rate of progress of the Works or of any Section is too slow to meet the "
    "Time for Completion and that this is not due to a circumstance for which "
    "the Contractor is entitled to an extension of time under Sub-Clause "
    "{{ref cl-33-1}}."
)

TEMPLATE_14_6_SOFTENED = (
    "The Engineer may notify the Contractor if the Engineer considers that the "
    "rate of progress of the Works or of any Section is too slow to meet the "
    "Time for Completion and that this is not due to a circumstance for which "
    "the Contractor is entitled to an extension of time under Sub-Clause "
    "{{ref cl-33-1}}."
)

TEXT_33_1 = (
    "The Contractor shall be entitled to such extension of the Time for "
    "Completion as is fair and reasonable in the circumstances set out in this "
    "Sub-Clause, provided notice is given to the Engineer without delay."
)

MF1_PART_HEADINGS = {
    4: "Contract Documents",
    14: "Programme and Progress",
    33: "Claims and Extensions",
}


def mf1_doc() -> GenericDocument:
    """General conditions with 33 Parts so clause labels land on 4-1,
    14-6, and 33-1; the cross-reference in 14-6 targets ``cl-33-1``."""
    doc = new_document("mf1", "Model Form MF/1 General Conditions")
    for i in range(1, 34):
        heading = MF1_PART_HEADINGS.get(i, f"General Conditions Part {i}")
        doc, _ = add_unit(doc, "root", UnitKind.PART, heading, unit_id=f"part{i}")
    doc, _ = add_unit(doc, "part4", UnitKind.SECTION, "Precedence of Documents", unit_id="s4-1")
    for i in range(1, 6):
        doc, _ = add_unit(
            doc, "part14", UnitKind.SECTION, f"Programme Clause {i}", unit_id=f"s14-{i}"
        )
    doc, _ = add_unit(doc, "part14", UnitKind.SECTION, "Rate of Progress", unit_id="s14-6")
    doc, _ = add_unit(
        doc, "part33", UnitKind.SECTION, "Extension of Time for Completion", unit_id="cl-33-1"
    )

    doc, _ = add_version(
        doc,
        "s4-1",
        TEXT_4_1_MODEL,
        rationale="Model-form wording.",
        provenance="IEE MF/1 (1988)",
        version_id="s4-1:model",
    )
    doc, _ = add_version(
        doc,
        "s4-1",
        TEXT_4_1_NEGOTIATED,
        rationale=(
            "Treat the contract documents as mutually explanatory and leave "
            "discrepancies to the Engineer's written instructions."
        ),
        provenance="negotiated contract",
        derived_from="s4-1:model",
        version_id="s4-1:negotiated",
    )
    doc, _ = add_version(
        doc,
        "s14-6",
        TEMPLATE_14_6_ORIGINAL,
        rationale="Model-form wording.",
        provenance="IEE MF/1 (1988)",
        version_id="s14-6:original",
    )
    doc, _ = add_version(
        doc,
        "s14-6",
        TEMPLATE_14_6_SOFTENED,
        rationale="Soften the Engineer's duty to notify into a discretion.",
        provenance="negotiated contract",
        derived_from="s14-6:original",
        version_id="s14-6:softened",
    )
    doc, _ = add_version(
        doc,
        "cl-33-1",
        TEXT_33_1,
        rationale="Base wording.",
        provenance="IEE MF/1 (1988)",
        version_id="cl-33-1:base",
    )
    return doc


def mf1_instance(
    doc: GenericDocument,
    *,
    s4_1: str = "s4-1:negotiated",
    s14_6: str = "s14-6:original",
    excluded: frozenset[str] = frozenset(),
) -> DocumentInstance:
    """Everything included (minus ``excluded``), the contested clauses
    selected as requested."""
    included = set(doc.units) - set(excluded)
    base = empty_instance(doc, "mf1-draft")
    return replace(
        base,
        included=frozenset(included),
        selections={"s4-1": s4_1, "s14-6": s14_6, "cl-33-1": "cl-33-1:base"},
    )


# ---------------------------------------------------------------------------
# Sale-agreement fixture: party and date parameters with domain rules.
# ---------------------------------------------------------------------------


def sale_doc() -> GenericDocument:
    doc = new_document("sale", "Agreement for Sale")
    doc, _ = add_unit(doc, "root", UnitKind.PART, "General", unit_id="p1")
    doc, _ = add_unit(doc, "p1", UnitKind.SECTION, "Parties", unit_id="s-parties")
    doc, _ = add_unit(doc, "p1", UnitKind.SECTION, "Commencement", unit_id="s-dates")
    doc, _ = add_version(
        doc,
        "s-parties",
        "This Agreement is made between {{param buyer}} (the Buyer) and "
        "{{param seller}} (the Seller).",
        rationale="Base wording.",
        version_id="s-parties:v1",
    )
    doc, _ = add_version(
        doc,
        "s-dates",
        "This Agreement is drafted on {{param draftDate}} and takes effect on "
        "{{param effectiveDate}}.",
        rationale="Base wording.",
        version_id="s-dates:v1",
    )
    for decl in (
        ParameterDecl("buyer", ParamType.PARTY),
        ParameterDecl("seller", ParamType.PARTY),
        ParameterDecl("draftDate", ParamType.DATE),
        ParameterDecl("effectiveDate", ParamType.DATE),
    ):
        doc = declare_parameter(doc, decl)
    rules = (
        parse_param_rule(
            "c-distinct-parties",
            "distinct(buyer, seller)",
            doc.parameters,
            message="the buyer and the seller must be different parties",
        ),
        parse_param_rule(
            "c-dates-ordered",
            "draftDate < effectiveDate",
            doc.parameters,
            message="the agreement must be drafted before it takes effect",
        ),
    )
    return replace(doc, constraints=doc.constraints + rules)


# ---------------------------------------------------------------------------
# Random generators.
# ---------------------------------------------------------------------------

_CHILD_KINDS = {
    UnitKind.DOCUMENT: (UnitKind.PART, UnitKind.SECTION, UnitKind.PROVISION),
    UnitKind.PART: (UnitKind.SECTION, UnitKind.PROVISION, UnitKind.SENTENCE),
    UnitKind.SECTION: (UnitKind.PROVISION, UnitKind.SENTENCE),
    UnitKind.PROVISION: (UnitKind.SENTENCE,),
    UnitKind.SENTENCE: (),
}

_PARAM_DECLS = (
    ParameterDecl("pn", ParamType.INTEGER),
    ParameterDecl("pd1", ParamType.DATE),
    ParameterDecl("pd2", ParamType.DATE),
    ParameterDecl("pt", ParamType.TEXT),
    ParameterDecl("pb", ParamType.PARTY),
    ParameterDecl("ps", ParamType.PARTY),
    ParameterDecl("pe", ParamType.ENUM, enum_values=("red", "blue")),
    ParameterDecl("pm", ParamType.MONEY),
    ParameterDecl("pm2", ParamType.MONEY),
)

_PARAM_RULES = (
    "distinct(pb, ps)",
    "pd1 < pd2",
    "pn <= 10",
    "defined(pt)",
    "pe = 'red' && pn != 3",
    "pm < pm2",
)


def random_doc(
    rng: random.Random,
    *,
    max_units: int = 30,
    max_versions: int = 3,
    max_constraints: int = 40,
    with_params: bool = True,
    version_probability: float = 0.5,
    doc_id: str = "gen",
) -> GenericDocument:
    doc = new_document(doc_id, "Generated Agreement")
    unit_ids = ["root"]
    for _ in range(rng.randint(1, max_units - 1)):
        parent = rng.choice(
            [u for u in unit_ids if _CHILD_KINDS[doc.units[u].kind]]
        )
        kind = rng.choice(_CHILD_KINDS[doc.units[parent].kind])
        doc, uid = add_unit(doc, parent, kind, f"Heading {len(unit_ids)}")
        unit_ids.append(uid)

    if with_params:
        for decl in _PARAM_DECLS:
            doc = declare_parameter(doc, decl)

    version_ids: list[str] = []
    for uid in unit_ids:
        if uid == "root" or rng.random() >= version_probability:
            continue
        for _ in range(rng.randint(1, max_versions)):
            parts = [f"Text of {uid}."]
            if with_params and rng.random() < 0.3:
                parts.append(f" Amount due by {{{{param {rng.choice(_PARAM_DECLS).name}}}}}.")
            if rng.random() < 0.3:
                target = rng.choice(unit_ids)
                if target != uid:
                    parts.append(f" See {{{{ref {target}}}}}.")
            doc, vid = add_version(doc, uid, "".join(parts), rationale="generated")
            version_ids.append(vid)

    def random_atom() -> Atom:
        if version_ids and rng.random() < 0.3:
            return VersionSelected(rng.choice(version_ids))
        return UnitIncluded(rng.choice(unit_ids))

    constraints = list(doc.constraints)
    non_root = [u for u in unit_ids if u != "root"]
    for i in range(rng.randint(0, max_constraints)):
        cid = f"c{i + 1}"
        kind = rng.choice(["requires", "requires", "excludes", "exactly-one", "param"])
        if kind == "requires":
            constraints.append(
                Requires(id=cid, antecedent=random_atom(), consequent_unit=rng.choice(unit_ids))
            )
        elif kind == "excludes":
            a, b = random_atom(), random_atom()
            if a == b:
                continue
            constraints.append(Excludes(id=cid, a=a, b=b))
        elif kind == "exactly-one" and len(non_root) >= 2:
            group = rng.sample(non_root, rng.randint(2, min(4, len(non_root))))
            constraints.append(ExactlyOne(id=cid, group=frozenset(group)))
        elif kind == "param" and with_params:
            constraints.append(
                parse_param_rule(cid, rng.choice(_PARAM_RULES), doc.parameters)
            )
    return replace(doc, constraints=tuple(constraints))


def random_value(rng: random.Random, decl: ParameterDecl):
    if decl.ptype == ParamType.INTEGER:
        return rng.randint(0, 12)
    if decl.ptype == ParamType.DECIMAL:
        return Decimal(rng.randint(0, 400)) / 4
    if decl.ptype == ParamType.DATE:
        return date(2026, rng.randint(1, 12), rng.randint(1, 28))
    if decl.ptype == ParamType.TEXT:
        return rng.choice(["alpha", "beta", "gamma"])
    if decl.ptype == ParamType.PARTY:
        return rng.choice(["Acme Ltd", "Bolt plc", "Crown SA"])
    if decl.ptype == ParamType.ENUM:
        return rng.choice(list(decl.enum_values))
    if decl.ptype == ParamType.MONEY:
        return Money(Decimal(rng.randint(0, 2000)), rng.choice(["GBP", "USD"]))
    raise AssertionError(decl.ptype)


def random_delta(
    rng: random.Random, doc: GenericDocument, instance: DocumentInstance
) -> Delta:
    unit_ids = list(doc.units)
    non_root = [u for u in unit_ids if u != doc.root_id]
    ops = ["include", "include", "exclude", "select", "deselect"]
    if doc.parameters:
        ops += ["bind", "unbind"]
    op = rng.choice(ops)
    if op == "select":
        candidates = [
            u for u in instance.included if doc.versions_of(u)
        ]
        if not candidates:
            op = "include"
        else:
            unit = rng.choice(sorted(candidates))
            return Select(unit, rng.choice(doc.versions_of(unit)).id)
    if op == "include":
        return Include(rng.choice(unit_ids))
    if op == "exclude" and non_root:
        return Exclude(rng.choice(non_root))
    if op == "deselect":
        return Deselect(rng.choice(unit_ids))
    if op == "bind":
        decl = rng.choice(doc.parameters)
        return Bind(decl.name, random_value(rng, decl))
    if op == "unbind":
        return Unbind(rng.choice(doc.parameters).name)
    return Include(rng.choice(unit_ids))


def random_instance(
    rng: random.Random,
    doc: GenericDocument,
    *,
    steps: int = 10,
    instance_id: str = "rand",
) -> DocumentInstance:
    checker = Checker(doc)
    instance = empty_instance(doc, instance_id)
    for _ in range(steps):
        delta = random_delta(rng, doc, instance)
        try:
            instance, _ = checker.apply_delta(instance, delta)
        except Exception:
            continue
    return instance


# ---------------------------------------------------------------------------
# Independent oracles.
# ---------------------------------------------------------------------------


def naive_enforce(
    doc: GenericDocument, instance: DocumentInstance, unit_id: str
) -> tuple[frozenset[str], Optional[str]]:
    """Scan-until-fixpoint closure of inclusion requirements.

    Returns (units that would be added, id of the first breached
    exclusion/group constraint or None). Mirrors only the *contract* of
    enforcement, not its implementation.
    """
    constraints = sorted(Checker(doc).constraints.values(), key=lambda c: c.id)
    parents = doc.parent_map()
    owners = {v.id: v.unit_id for v in doc.all_versions()}
    included = set(instance.included)

    def with_ancestors(uid: str) -> set[str]:
        return {uid, *doc.ancestors(uid, parents)}

    def atom_true(atom: Atom) -> bool:
        if isinstance(atom, UnitIncluded):
            return atom.unit_id in included
        assert isinstance(atom, VersionSelected)
        owner = owners[atom.version_id]
        return instance.selections.get(owner) == atom.version_id and owner in included

    included |= with_ancestors(unit_id)
    while True:
        before = len(included)
        for c in constraints:
            if isinstance(c, Requires) and atom_true(c.antecedent):
                included |= with_ancestors(c.consequent_unit)
        if len(included) == before:
            break

    breached = None
    for c in constraints:
        if isinstance(c, Excludes) and atom_true(c.a) and atom_true(c.b):
            breached = c.id
            break
        if isinstance(c, ExactlyOne) and sum(1 for u in c.group if u in included) >= 2:
            breached = c.id
            break
    return frozenset(included - instance.included), breached


def exhaustive_witness(doc: GenericDocument) -> Optional[DocumentInstance]:
    """Enumerate every ancestor-closed inclusion subset and every version
    assignment for its unshadowed versioned units; return the first
    complete, violation-free instance found."""
    checker = Checker(doc)
    parents = doc.parent_map()
    non_root = [u for u in doc.preorder() if u != doc.root_id]
    versioned = sorted(checker.versioned_units)

    for bits in itertools.product((False, True), repeat=len(non_root)):
        included = {doc.root_id} | {u for u, bit in zip(non_root, bits) if bit}
        if any(parents[u] not in included for u in included if u != doc.root_id):
            continue
        topmost = [
            u
            for u in versioned
            if u in included
            and not any(a in included and a in versioned for a in doc.ancestors(u, parents))
        ]
        for combo in itertools.product(
            *([v.id for v in doc.versions_of(u)] for u in topmost)
        ):
            candidate = DocumentInstance(
                id="oracle-witness",
                generic_id=doc.id,
                generic_schema_version=doc.schema_version,
                included=frozenset(included),
                selections=dict(zip(topmost, combo)),
                bindings={},
            )
            report = checker.check_full(candidate)
            if report.violations:
                continue
            if any(
                g.kind in ("no-selection", "exactly-one-empty", "empty-leaf")
                for g in report.gaps
            ):
                continue
            return candidate
    return None


def brute_force_cases(
    factors: list[Factor], rules: list[CaseRule]
) -> tuple[list[tuple[str, ...]], list[tuple[tuple[str, ...], tuple[str, ...]]]]:
    """Per-case matcher: (uncovered cases, (case, conflicting rule ids))
    in enumeration order."""
    index = {f.name: i for i, f in enumerate(factors)}
    uncovered: list[tuple[str, ...]] = []
    conflicts: list[tuple[tuple[str, ...], tuple[str, ...]]] = []
    for case in itertools.product(*(f.domain for f in factors)):
        matched = [
            r
            for r in rules
            if all(case[index[fname]] in allowed for fname, allowed in r.condition)
        ]
        if not matched:
            uncovered.append(case)
        if len({r.outcome for r in matched}) >= 2:
            conflicts.append((case, tuple(sorted(r.id for r in matched))))
    return uncovered, conflicts


def random_factors_and_rules(
    rng: random.Random,
    *,
    max_factors: int = 4,
    max_domain: int = 5,
    max_rules: int = 8,
) -> tuple[list[Factor], list[CaseRule]]:
    n_factors = rng.randint(1, max_factors)
    factors = [
        Factor(
            f"f{i}",
            tuple(f"v{j}" for j in range(rng.randint(2, max_domain))),
        )
        for i in range(n_factors)
    ]
    rules = []
    for r in range(rng.randint(0, max_rules)):
        condition = []
        for f in factors:
            if rng.random() < 0.6:
                k = rng.randint(1, len(f.domain))
                condition.append((f.name, frozenset(rng.sample(list(f.domain), k))))
        rules.append(
            CaseRule(
                id=f"r{r}",
                condition=tuple(condition),
                outcome=rng.choice(["grant", "deny", "refer"]),
            )
        )
    return factors, rules
