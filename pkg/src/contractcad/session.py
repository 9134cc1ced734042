"""Drafting sessions: edits under notify/enforce modes, previews,
finalization, rendering, diffing, undo, and version promotion.

A session owns an immutable generic-document snapshot (via its compiled
Checker) and a current instance whose check report is maintained
incrementally; after every operation the report equals a full check.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

from .constraints import (
    Bind,
    CheckReport,
    Checker,
    Contradiction,
    Delta,
    Deselect,
    EnforceResult,
    EngineError,
    Exclude,
    Include,
    Select,
    Unbind,
    Violation,
)
from .model import (
    DocumentInstance,
    GenericDocument,
    Mode,
    ModelError,
    add_version,
    empty_instance,
    unit_label,
    validate_structure,
)
from .templates import (
    CrossRef,
    Literal,
    ParamSlot,
    RenderFault,
    parse_template,
)
from .values import format_value

DRAFT_WATERMARK = "# DRAFT — not finalized"
UNBOUND_MARK = "⟨unbound:{name}⟩"
NO_VERSION_MARK = "⟨no-version⟩"


class SessionError(ValueError):
    """Misuse of a drafting session (bad ids, empty undo log, ...)."""


class RenderError(ValueError):
    """Rendering failed, e.g. a cross-reference to an excluded unit."""


@dataclass(frozen=True)
class Blocked:
    """An edit the session refused to apply; the instance is unchanged."""

    reason: str
    chain: tuple = ()


@dataclass(frozen=True)
class EditResult:
    report: CheckReport
    side_effects: frozenset[str]  # units auto-included by enforcement


@dataclass(frozen=True)
class Blocker:
    kind: str
    subject: str
    message: str


@dataclass(frozen=True)
class FinalizedInstance:
    instance: DocumentInstance
    generic_sha256: str


@dataclass(frozen=True)
class RenderedDocument:
    text: str
    spans: tuple[tuple[str, int, int], ...]  # (unit id, byte start, byte end)
    separator: str


@dataclass(frozen=True)
class DiffEntry:
    kind: str  # inclusion | selection | binding
    subject: str
    before: Optional[str]
    after: Optional[str]


class AssemblySession:
    """Single-writer drafting session over one generic-document snapshot."""

    def __init__(self, doc: GenericDocument, mode: Mode, instance_id: str = "draft"):
        faults = validate_structure(doc)
        if faults:
            raise ModelError(
                "generic document is structurally invalid: "
                + "; ".join(str(f) for f in faults)
            )
        self.checker = Checker(doc)
        self.mode = mode
        self.instance = empty_instance(doc, instance_id, mode)
        self.report = self.checker.check_full(self.instance)
        self._undo: list[tuple[DocumentInstance, CheckReport]] = []

    @property
    def doc(self) -> GenericDocument:
        return self.checker.doc

    @property
    def revision(self) -> int:
        return self.instance.revision

    # -- edits -----------------------------------------------------------

    def apply_edit(self, delta: Delta) -> Union[EditResult, Blocked]:
        """Apply one edit. Notify mode applies verbatim; enforce mode
        closes requirement chains on Include and blocks any edit whose
        immediate result breaks an exclusion or puts two members of an
        exactly-one group in."""
        if isinstance(delta, Select):
            block = self._mixed_granularity(delta)
            if block is not None:
                return block

        prior = (self.instance, self.report)
        side_effects: frozenset[str] = frozenset()

        if self.mode == Mode.ENFORCE and isinstance(delta, Include):
            outcome = self.checker.enforce_include(self.instance, delta.unit_id)
            if isinstance(outcome, Contradiction):
                return Blocked(reason=outcome.message, chain=outcome.chain)
            trial_instance = outcome.instance
            trial_report = self.checker.check_full(trial_instance)
            ancestors = {delta.unit_id, *self.checker.ancestors(delta.unit_id)}
            side_effects = frozenset(outcome.added - ancestors)
        else:
            trial_instance, trial_report = self.checker.check_incremental(
                self.instance, delta, self.report
            )

        if self.mode == Mode.ENFORCE:
            breach = self._exclusion_breach(trial_report)
            if breach is not None:
                return Blocked(
                    reason=f"edit would break constraint {breach.constraint_id}: {breach.message}"
                )

        self._undo.append(prior)
        self.instance, self.report = trial_instance, trial_report
        return EditResult(report=self.report, side_effects=side_effects)

    def _mixed_granularity(self, delta: Select) -> Optional[Blocked]:
        selections = self.instance.selections
        for anc in self.checker.ancestors(delta.unit_id):
            if anc in selections:
                return Blocked(
                    reason=(
                        f"cannot select a version for {delta.unit_id}: ancestor {anc} "
                        f"already has a selected version"
                    )
                )
        for desc in self.checker.descendants(delta.unit_id):
            if desc in selections:
                return Blocked(
                    reason=(
                        f"cannot select a version for {delta.unit_id}: descendant {desc} "
                        f"already has a selected version"
                    )
                )
        return None

    @staticmethod
    def _exclusion_breach(report: CheckReport) -> Optional[Violation]:
        for violation in report.violations:
            if violation.kind in ("excludes", "exactly-one"):
                return violation
        return None

    def preview_edit(self, delta: Delta) -> Union[EditResult, Blocked]:
        """What-if: identical result to apply_edit on a copy; the session
        itself (including its revision counter) is untouched."""
        shadow = object.__new__(AssemblySession)
        shadow.checker = self.checker
        shadow.mode = self.mode
        shadow.instance = self.instance
        shadow.report = self.report
        shadow._undo = []
        return shadow.apply_edit(delta)

    def undo(self) -> None:
        if not self._undo:
            raise SessionError("nothing to undo")
        self.instance, self.report = self._undo.pop()

    # -- finalization ----------------------------------------------------

    def blockers(self) -> list[Blocker]:
        out = [
            Blocker("violation", v.constraint_id, v.message) for v in self.report.violations
        ]
        out += [Blocker("gap", g.subject, g.message) for g in self.report.gaps]
        return out

    def finalize(self) -> Union[FinalizedInstance, list[Blocker]]:
        """Succeeds iff the report is empty of violations and gaps; the
        result pins the generic snapshot by content hash."""
        blocking = self.blockers()
        if blocking:
            return blocking
        from .store import generic_sha256

        return FinalizedInstance(
            instance=self.instance, generic_sha256=generic_sha256(self.doc)
        )

    # -- rendering -------------------------------------------------------

    def render(self, finalized: Optional[FinalizedInstance] = None) -> RenderedDocument:
        instance = finalized.instance if finalized else self.instance
        return render_document(self.doc, instance, draft=finalized is None)

    # -- promotion -------------------------------------------------------

    def promote_version(
        self,
        unit_id: str,
        new_template: str,
        rationale: str,
        provenance: str = "",
        created_at: str = "",
    ) -> str:
        """Store an edited fragment as a new version of the unit (derived
        from the currently selected version, if any), re-derive textual
        constraints, and select the new version. Clears the undo log,
        since earlier reports were computed against the old snapshot."""
        if not rationale:
            raise SessionError("a promoted version must record a rationale")
        current = self.instance.selections.get(unit_id)
        doc, version_id = add_version(
            self.doc,
            unit_id,
            new_template,
            rationale,
            provenance=provenance,
            derived_from=current,
            created_at=created_at,
        )
        self.checker = Checker(doc)
        selections = dict(self.instance.selections)
        selections[unit_id] = version_id
        included = self.instance.included
        if unit_id not in included:
            included = included | {unit_id, *self.checker.ancestors(unit_id)}
        self.instance = replace(
            self.instance,
            included=included,
            selections=selections,
            revision=self.instance.revision + 1,
        )
        self.report = self.checker.check_full(self.instance)
        self._undo.clear()
        return version_id


def new_session(doc: GenericDocument, mode: Mode, instance_id: str = "draft") -> AssemblySession:
    return AssemblySession(doc, mode, instance_id)


def attach_session(doc: GenericDocument, instance: DocumentInstance) -> AssemblySession:
    """Resume a session around an existing instance (e.g. one loaded from
    a repository)."""
    session = AssemblySession(doc, instance.mode, instance.id)
    session.instance = instance
    session.report = session.checker.check_full(instance)
    return session


# -- rendering -----------------------------------------------------------


def render_document(
    doc: GenericDocument,
    instance: DocumentInstance,
    draft: bool,
    separator: str = "-",
) -> RenderedDocument:
    """Collate the selected fragments into the full contract text.

    Layout: a ``# <title>`` header (preceded by a watermark line for
    drafts), then per included unit a ``<label> <heading>`` line, a blank
    line, and the rendered fragment followed by a blank line. Exactly one
    trailing newline. Byte-deterministic for a given instance.
    """
    checker = Checker(doc)
    labels = {
        uid: unit_label(doc, uid, instance, separator)
        for uid in instance.included
        if uid in doc.units
    }

    def labeler(target: str) -> str:
        if target not in instance.included:
            raise KeyError(target)
        return labels[target]

    header = ""
    if draft:
        header += DRAFT_WATERMARK + "\n"
    header += f"# {doc.title}\n\n"

    chunks: list[tuple[str, str]] = []  # (unit id, text)
    for uid in doc.preorder():
        if uid not in instance.included or uid == doc.root_id:
            continue
        unit = doc.units[uid]
        part = f"{labels[uid]} {unit.heading}\n\n"
        fragment = _fragment_text(checker, doc, instance, uid, labeler, draft)
        if fragment is not None:
            part += fragment + "\n\n"
        chunks.append((uid, part))

    body = "".join(text for _, text in chunks)
    text = header + body
    # normalize the tail to exactly one newline
    trimmed = text.rstrip("\n") + "\n"
    removed = len(text) - len(trimmed)

    spans: list[tuple[str, int, int]] = []
    offset = len(header.encode("utf-8"))
    for uid, part in chunks:
        size = len(part.encode("utf-8"))
        spans.append((uid, offset, offset + size))
        offset += size
    if spans and removed:
        uid, start, end = spans[-1]
        spans[-1] = (uid, start, end - removed)
    return RenderedDocument(text=trimmed, spans=tuple(spans), separator=separator)


def _fragment_text(checker, doc, instance, uid, labeler, draft) -> Optional[str]:
    selection = instance.selections.get(uid)
    if selection is None:
        if (
            draft
            and uid in checker.versioned_units
            and not any(a in instance.selections for a in checker.ancestors(uid))
        ):
            return NO_VERSION_MARK
        return None
    version = doc.find_version(selection)
    template = parse_template(version.template)
    out: list[str] = []
    for node in template.nodes:
        if isinstance(node, Literal):
            out.append(node.text)
        elif isinstance(node, ParamSlot):
            if node.name in instance.bindings:
                out.append(format_value(instance.bindings[node.name]))
            elif draft:
                out.append(UNBOUND_MARK.format(name=node.name))
            else:
                raise RenderError(f"parameter {node.name} is unbound")
        elif isinstance(node, CrossRef):
            try:
                out.append(labeler(node.target_unit_id))
            except KeyError:
                raise RenderError(
                    f"version {version.id} cross-references unit "
                    f"{node.target_unit_id}, which is not included"
                ) from None
    return "".join(out)


# -- diffing -------------------------------------------------------------

_DIFF_KIND_ORDER = {"inclusion": 0, "selection": 1, "binding": 2}


def diff(a: DocumentInstance, b: DocumentInstance) -> list[DiffEntry]:
    """Minimal entry set transforming instance ``a`` into ``b``."""
    if a.generic_id != b.generic_id:
        raise SessionError(
            f"cannot diff instances of different generic documents "
            f"({a.generic_id!r} vs {b.generic_id!r})"
        )
    entries: list[DiffEntry] = []
    for uid in a.included - b.included:
        entries.append(DiffEntry("inclusion", uid, "included", "excluded"))
    for uid in b.included - a.included:
        entries.append(DiffEntry("inclusion", uid, "excluded", "included"))
    for uid in set(a.selections) | set(b.selections):
        before, after = a.selections.get(uid), b.selections.get(uid)
        if before != after:
            entries.append(DiffEntry("selection", uid, before, after))
    for name in set(a.bindings) | set(b.bindings):
        before_v, after_v = a.bindings.get(name), b.bindings.get(name)
        if before_v != after_v:
            entries.append(
                DiffEntry(
                    "binding",
                    name,
                    None if before_v is None else format_value(before_v),
                    None if after_v is None else format_value(after_v),
                )
            )
    entries.sort(key=lambda e: (_DIFF_KIND_ORDER[e.kind], e.subject))
    return entries


def apply_diff(doc: GenericDocument, a: DocumentInstance, entries: list[DiffEntry]) -> DocumentInstance:
    """Replay a diff onto ``a``; applying diff(a, b) yields b."""
    from .values import parse_value

    included = set(a.included)
    selections = dict(a.selections)
    bindings = dict(a.bindings)
    for entry in entries:
        if entry.kind == "inclusion":
            if entry.after == "included":
                included.add(entry.subject)
            else:
                included.discard(entry.subject)
        elif entry.kind == "selection":
            if entry.after is None:
                selections.pop(entry.subject, None)
            else:
                selections[entry.subject] = entry.after
        else:
            if entry.after is None:
                bindings.pop(entry.subject, None)
            else:
                decl = doc.parameter(entry.subject)
                bindings[entry.subject] = parse_value(entry.after, decl.ptype, decl.enum_values)
    return replace(
        a,
        included=frozenset(included),
        selections=selections,
        bindings=bindings,
        revision=a.revision + 1,
    )
