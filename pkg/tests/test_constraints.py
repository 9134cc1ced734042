"""Constraint engine: evaluation semantics, deltas, incremental checks,
enforcement closure, satisfiability search, explanations."""

import random
from dataclasses import replace
from datetime import date
from decimal import Decimal

import pytest

import support
from contractcad.constraints import (
    Bind,
    Checker,
    Contradiction,
    EngineError,
    ExactlyOne,
    Exclude,
    Excludes,
    Include,
    Origin,
    Requires,
    Select,
    TooLargeError,
    Unbind,
    UnitIncluded,
    VersionSelected,
    eval_param_rule,
    parse_param_rule,
)
from contractcad.model import (
    ParameterDecl,
    UnitKind,
    add_unit,
    add_version,
    declare_parameter,
    empty_instance,
    new_document,
)
from contractcad.values import Money, ParamType


def base_doc():
    """root -> p1 -> (s1 with 2 versions, s2), p2 (leaf, no versions)."""
    doc = new_document("d", "Doc")
    doc, _ = add_unit(doc, "root", UnitKind.PART, "One", unit_id="p1")
    doc, _ = add_unit(doc, "root", UnitKind.PART, "Two", unit_id="p2")
    doc, _ = add_unit(doc, "p1", UnitKind.SECTION, "S1", unit_id="s1")
    doc, _ = add_unit(doc, "p1", UnitKind.SECTION, "S2", unit_id="s2")
    doc, _ = add_version(doc, "s1", "first", rationale="r", version_id="s1:v1")
    doc, _ = add_version(doc, "s1", "second", rationale="r", version_id="s1:v2")
    doc, _ = add_version(doc, "s2", "only", rationale="r", version_id="s2:v1")
    return doc


def with_constraints(doc, *constraints):
    return replace(doc, constraints=doc.constraints + tuple(constraints))


class TestParamRuleParsing:
    DECLS = (
        ParameterDecl("a", ParamType.INTEGER),
        ParameterDecl("b", ParamType.INTEGER),
        ParameterDecl("d1", ParamType.DATE),
        ParameterDecl("m1", ParamType.MONEY),
        ParameterDecl("m2", ParamType.MONEY),
        ParameterDecl("t", ParamType.TEXT),
    )

    def test_comparison_and_conjunction(self):
        rule = parse_param_rule("r", "a < b && a != 3", self.DECLS)
        assert len(rule.clauses) == 2 and rule.source == "a < b && a != 3"

    def test_distinct_and_defined(self):
        rule = parse_param_rule("r", "distinct(a, b) && defined(t)", self.DECLS)
        assert len(rule.clauses) == 2

    def test_date_literal(self):
        parse_param_rule("r", "d1 < 2026-06-01", self.DECLS)

    def test_type_mismatch_rejected(self):
        for bad in ("a < d1", "t < 3", "m1 < 5", "distinct(a, t)"):
            with pytest.raises(EngineError):
                parse_param_rule("r", bad, self.DECLS)

    def test_undeclared_parameter(self):
        with pytest.raises(EngineError):
            parse_param_rule("r", "ghost < 3", self.DECLS)

    def test_garbage_clause(self):
        with pytest.raises(EngineError):
            parse_param_rule("r", "a <> b", self.DECLS)

    def test_cross_currency_violates_with_note(self):
        rule = parse_param_rule("r", "m1 < m2", self.DECLS)
        holds, note = eval_param_rule(
            rule,
            {"m1": Money(Decimal(1), "GBP"), "m2": Money(Decimal(2), "USD")},
        )
        assert not holds and "currency" in note

    def test_defined_does_not_gate_evaluation(self):
        doc = declare_parameter(new_document("d", "D"), ParameterDecl("t", ParamType.TEXT))
        doc, _ = add_unit(doc, "root", UnitKind.PART, "P", unit_id="p")
        doc = with_constraints(doc, parse_param_rule("r", "defined(t)", doc.parameters))
        report = Checker(doc).check_full(empty_instance(doc, "i"))
        assert [v.constraint_id for v in report.violations] == ["r"]


class TestCheckFull:
    def test_empty_instance_no_constraints_is_clean(self):
        doc = base_doc()
        report = Checker(doc).check_full(empty_instance(doc, "i"))
        assert report.clean and report.findings() == ((), ())

    def test_requires_violation_and_recovery(self):
        doc = with_constraints(
            base_doc(), Requires(id="c", antecedent=UnitIncluded("s2"), consequent_unit="p2")
        )
        ck = Checker(doc)
        inst, _ = ck.apply_delta(empty_instance(doc, "i"), Include("s2"))
        report = ck.check_full(inst)
        assert [v.constraint_id for v in report.violations] == ["c"]
        assert report.violations[0].kind == "requires"
        inst, _ = ck.apply_delta(inst, Include("p2"))
        assert not ck.check_full(inst).violations

    def test_version_antecedent(self):
        doc = with_constraints(
            base_doc(),
            Requires(id="c", antecedent=VersionSelected("s1:v2"), consequent_unit="p2"),
        )
        ck = Checker(doc)
        inst, _ = ck.apply_delta(empty_instance(doc, "i"), Include("s1"))
        inst, _ = ck.apply_delta(inst, Select("s1", "s1:v1"))
        assert not ck.check_full(inst).violations
        inst, _ = ck.apply_delta(inst, Select("s1", "s1:v2"))
        assert [v.constraint_id for v in ck.check_full(inst).violations] == ["c"]

    def test_excludes_symmetric(self):
        doc = with_constraints(
            base_doc(), Excludes(id="x", a=UnitIncluded("s2"), b=UnitIncluded("p2"))
        )
        ck = Checker(doc)
        inst = empty_instance(doc, "i")
        for uid in ("s2", "p2"):
            one, _ = ck.apply_delta(inst, Include(uid))
            assert not ck.check_full(one).violations  # one side alone is fine
        both, _ = ck.apply_delta(ck.apply_delta(inst, Include("s2"))[0], Include("p2"))
        (violation,) = ck.check_full(both).violations
        assert violation.kind == "excludes" and set(violation.involved) == {"s2", "p2"}

    def test_exactly_one_drafting_vs_gap(self):
        doc = with_constraints(base_doc(), ExactlyOne(id="g", group=frozenset({"s1", "s2"})))
        ck = Checker(doc)
        inst = empty_instance(doc, "i")
        # zero included members: a gap, not a violation
        report = ck.check_full(inst)
        assert not report.violations
        assert [(g.kind, g.subject) for g in report.gaps] == [("exactly-one-empty", "g")]
        # exactly one: clean on this constraint
        one, _ = ck.apply_delta(inst, Include("s1"))
        report = ck.check_full(one)
        assert not report.violations
        assert all(g.subject != "g" for g in report.gaps)
        # two: at-most-one is violated already while drafting
        two, _ = ck.apply_delta(one, Include("s2"))
        (violation,) = ck.check_full(two).violations
        assert violation.kind == "exactly-one" and violation.involved == ("s1", "s2")

    def test_no_selection_gap_and_shadowing(self):
        doc = base_doc()
        doc, _ = add_version(doc, "p1", "whole part text", rationale="r", version_id="p1:v1")
        ck = Checker(doc)
        inst, _ = ck.apply_delta(empty_instance(doc, "i"), Include("s1"))
        gaps = ck.check_full(inst).gaps
        assert {(g.kind, g.subject) for g in gaps} == {
            ("no-selection", "p1"),
            ("no-selection", "s1"),
        }
        # selecting the ancestor's version shadows the descendant
        inst, _ = ck.apply_delta(inst, Select("p1", "p1:v1"))
        assert ck.check_full(inst).gaps == ()

    def test_empty_leaf_gap(self):
        doc = base_doc()
        ck = Checker(doc)
        inst, _ = ck.apply_delta(empty_instance(doc, "i"), Include("p2"))
        assert [(g.kind, g.subject) for g in ck.check_full(inst).gaps] == [
            ("empty-leaf", "p2")
        ]

    def test_unbound_gap_only_for_selected_templates(self):
        doc = new_document("d", "Doc")
        doc, _ = add_unit(doc, "root", UnitKind.SECTION, "S", unit_id="s")
        doc = declare_parameter(doc, ParameterDecl("amount", ParamType.INTEGER))
        doc, _ = add_version(doc, "s", "pay {{param amount}}", rationale="r", version_id="s:v1")
        doc, _ = add_version(doc, "s", "pay nothing", rationale="r", version_id="s:v2")
        ck = Checker(doc)
        inst, _ = ck.apply_delta(empty_instance(doc, "i"), Include("s"))
        inst, _ = ck.apply_delta(inst, Select("s", "s:v2"))
        assert ck.check_full(inst).gaps == ()  # v2 does not use the parameter
        inst, _ = ck.apply_delta(inst, Select("s", "s:v1"))
        assert [(g.kind, g.subject) for g in ck.check_full(inst).gaps] == [
            ("unbound-parameter", "amount")
        ]
        inst, _ = ck.apply_delta(inst, Bind("amount", 5))
        assert ck.check_full(inst).gaps == ()

    def test_report_ordering(self):
        doc = with_constraints(
            base_doc(),
            Requires(id="c2", antecedent=UnitIncluded("s2"), consequent_unit="p2"),
            Excludes(id="c1", a=UnitIncluded("s1"), b=UnitIncluded("s2")),
        )
        ck = Checker(doc)
        inst, _ = ck.apply_delta(empty_instance(doc, "i"), Include("s1"))
        inst, _ = ck.apply_delta(inst, Include("s2"))
        report = ck.check_full(inst)
        assert [v.constraint_id for v in report.violations] == ["c1", "c2"]
        assert [g.subject for g in report.gaps] == sorted(g.subject for g in report.gaps)

    def test_duplicate_constraint_id_rejected(self):
        doc = with_constraints(
            base_doc(),
            Requires(id="c", antecedent=UnitIncluded("s1"), consequent_unit="p2"),
            Requires(id="c", antecedent=UnitIncluded("s2"), consequent_unit="p2"),
        )
        with pytest.raises(EngineError):
            Checker(doc)


class TestApplyDelta:
    def test_include_closes_ancestors(self):
        doc = base_doc()
        ck = Checker(doc)
        inst, touched = ck.apply_delta(empty_instance(doc, "i"), Include("s1"))
        assert inst.included == {"root", "p1", "s1"}
        assert touched.units == {"p1", "s1"}

    def test_exclude_cascades_and_drops_selections(self):
        doc = base_doc()
        ck = Checker(doc)
        inst, _ = ck.apply_delta(empty_instance(doc, "i"), Include("s1"))
        inst, _ = ck.apply_delta(inst, Select("s1", "s1:v1"))
        inst, _ = ck.apply_delta(inst, Exclude("p1"))
        assert inst.included == {"root"} and inst.selections == {}

    def test_root_not_excludable(self):
        doc = base_doc()
        with pytest.raises(EngineError):
            Checker(doc).apply_delta(empty_instance(doc, "i"), Exclude("root"))

    def test_select_requires_inclusion_and_ownership(self):
        doc = base_doc()
        ck = Checker(doc)
        inst = empty_instance(doc, "i")
        with pytest.raises(EngineError):
            ck.apply_delta(inst, Select("s1", "s1:v1"))  # not included
        inst, _ = ck.apply_delta(inst, Include("s1"))
        with pytest.raises(EngineError):
            ck.apply_delta(inst, Select("s1", "s2:v1"))  # wrong unit

    def test_revision_always_increments(self):
        doc = base_doc()
        ck = Checker(doc)
        inst = empty_instance(doc, "i")
        inst2, _ = ck.apply_delta(inst, Include("root"))  # a no-op inclusion
        assert inst2.revision == inst.revision + 1


class TestIncremental:
    def test_equals_full_over_random_walks(self):
        for seed in range(60):
            rng = random.Random(seed)
            doc = support.random_doc(rng, max_units=14, max_versions=3, max_constraints=12)
            ck = Checker(doc)
            inst = empty_instance(doc, "i")
            report = ck.check_full(inst)
            for _ in range(30):
                delta = support.random_delta(rng, doc, inst)
                try:
                    inst, report = ck.check_incremental(inst, delta, report)
                except EngineError:
                    continue
                assert report.findings() == ck.check_full(inst).findings(), (seed, delta)
                assert not report.full_recheck

    def test_stale_report_triggers_flagged_full_recheck(self):
        doc = base_doc()
        ck = Checker(doc)
        inst = empty_instance(doc, "i")
        stale = replace(ck.check_full(inst), revision=inst.revision + 7)
        inst2, report = ck.check_incremental(inst, Include("s1"), stale)
        assert report.full_recheck
        assert report.findings() == ck.check_full(inst2).findings()


class TestEnforce:
    def test_closure_includes_chain(self):
        doc = with_constraints(
            base_doc(),
            Requires(id="c1", antecedent=UnitIncluded("s1"), consequent_unit="s2"),
            Requires(id="c2", antecedent=UnitIncluded("s2"), consequent_unit="p2"),
        )
        ck = Checker(doc)
        outcome = ck.enforce_include(empty_instance(doc, "i"), "s1")
        assert outcome.added == {"p1", "s1", "s2", "p2"}
        by_unit = {step.atom.unit_id: step.constraint_id for step in outcome.chain}
        assert by_unit["s2"] == "c1" and by_unit["p2"] == "c2"
        assert by_unit["s1"] is None  # the trigger itself

    def test_contradiction_is_atomic(self):
        doc = with_constraints(
            base_doc(),
            Requires(id="c1", antecedent=UnitIncluded("s1"), consequent_unit="p2"),
            Excludes(id="x", a=UnitIncluded("s1"), b=UnitIncluded("p2")),
        )
        ck = Checker(doc)
        inst = empty_instance(doc, "i")
        outcome = ck.enforce_include(inst, "s1")
        assert isinstance(outcome, Contradiction)
        assert outcome.constraint_id == "x"
        assert outcome.attempted == {"p1", "s1", "p2"}
        assert inst.included == {"root"}  # untouched

    def test_matches_naive_oracle(self):
        for seed in range(120):
            rng = random.Random(seed)
            doc = support.random_doc(rng, max_units=10, max_versions=2, max_constraints=8)
            ck = Checker(doc)
            inst = support.random_instance(rng, doc, steps=6)
            unit = rng.choice(list(doc.units))
            outcome = ck.enforce_include(inst, unit)
            added, breached = support.naive_enforce(doc, inst, unit)
            if isinstance(outcome, Contradiction):
                assert breached == outcome.constraint_id, seed
                assert outcome.attempted == added, seed
            else:
                assert breached is None and outcome.added == added, seed


class TestSatisfiable:
    def test_witness_is_complete_and_clean(self):
        doc = base_doc()
        ck = Checker(doc)
        witness = ck.satisfiable()
        assert witness is not None
        report = ck.check_full(witness)
        assert not report.violations
        assert all(g.kind == "unbound-parameter" for g in report.gaps)

    def test_unsatisfiable_document(self):
        # the only leaf has no versions and an authored rule forces it in
        doc = new_document("d", "Doc")
        doc, _ = add_unit(doc, "root", UnitKind.PART, "P", unit_id="p")
        doc = with_constraints(
            doc, Requires(id="c", antecedent=UnitIncluded("root"), consequent_unit="p")
        )
        assert Checker(doc).satisfiable() is None

    def test_matches_exhaustive_enumeration(self):
        for seed in range(50):
            rng = random.Random(seed)
            doc = support.random_doc(
                rng, max_units=8, max_versions=2, max_constraints=6, with_params=False
            )
            ck = Checker(doc)
            witness = ck.satisfiable()
            oracle = support.exhaustive_witness(doc)
            assert (witness is None) == (oracle is None), seed
            if witness is not None:
                assert not ck.check_full(witness).violations

    def test_size_guard(self):
        doc = new_document("d", "Doc")
        for i in range(26):
            doc, uid = add_unit(doc, "root", UnitKind.SECTION, f"S{i}")
            doc, _ = add_version(doc, uid, "text", rationale="r")
        with pytest.raises(TooLargeError):
            Checker(doc).satisfiable()


class TestExplain:
    def test_derived_constraint_explanation(self):
        doc = base_doc()
        doc, vid = add_version(
            doc, "s2", "see {{ref p2}}", rationale="r", version_id="s2:vref"
        )
        ck = Checker(doc)
        inst, _ = ck.apply_delta(empty_instance(doc, "i"), Include("s2"))
        inst, _ = ck.apply_delta(inst, Select("s2", vid))
        report = ck.check_full(inst)
        text = ck.explain(report, 0)
        assert "derived from the document text" in text
        assert "'2 Two'" in text  # target described by label and heading

    def test_authored_explanation_names_units(self):
        doc = with_constraints(
            base_doc(),
            Excludes(id="x", a=UnitIncluded("s1"), b=UnitIncluded("p2"), message="pick one"),
        )
        ck = Checker(doc)
        inst, _ = ck.apply_delta(empty_instance(doc, "i"), Include("s1"))
        inst, _ = ck.apply_delta(inst, Include("p2"))
        text = ck.explain(ck.check_full(inst), 0)
        assert "Authored rule x" in text and "pick one" in text

    def test_index_out_of_range(self):
        doc = base_doc()
        ck = Checker(doc)
        report = ck.check_full(empty_instance(doc, "i"))
        with pytest.raises(EngineError):
            ck.explain(report, 0)

    def test_derived_origin_marked(self):
        doc = base_doc()
        doc, vid = add_version(doc, "s2", "see {{ref p2}}", rationale="r")
        ck = Checker(doc)
        derived = ck.constraints[f"ref:{vid}:p2"]
        assert derived.origin == Origin.DERIVED_TEXTUAL
