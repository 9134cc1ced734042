"""Fragment template parsing, serialization, and rendering.

Grammar: a template is a sequence of literal text and markers.
``{{param NAME}}`` is a parameter slot, ``{{ref UNIT-ID}}`` a
cross-reference to another document unit. A literal ``{{`` is written
``\\{{`` and a literal backslash ``\\\\``. Names match ``[A-Za-z0-9_-]+``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

from .values import BoundValue, format_value

_NAME_RE = re.compile(r"[A-Za-z0-9_-]+")


@dataclass(frozen=True)
class Literal:
    text: str


@dataclass(frozen=True)
class ParamSlot:
    name: str


@dataclass(frozen=True)
class CrossRef:
    target_unit_id: str


Node = Union[Literal, ParamSlot, CrossRef]


@dataclass(frozen=True)
class Template:
    nodes: tuple[Node, ...]


@dataclass(frozen=True)
class ParseFault:
    offset: int  # byte offset into the UTF-8 encoding of the source
    kind: str  # unterminated-marker | unknown-escape | empty-name

    def __str__(self) -> str:
        return f"{self.kind} at byte {self.offset}"


class TemplateParseError(ValueError):
    def __init__(self, faults: list[ParseFault]):
        super().__init__("; ".join(str(f) for f in faults))
        self.faults = list(faults)


class RenderFault(ValueError):
    """An unbound parameter or dangling cross-reference during rendering."""

    def __init__(self, kind: str, name: str):
        super().__init__(f"{kind}: {name}")
        self.kind = kind
        self.name = name


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf-8"))


def parse_template(source: str) -> Template:
    """Parse template source; raises TemplateParseError listing all faults."""
    nodes: list[Node] = []
    faults: list[ParseFault] = []
    literal: list[str] = []
    i = 0
    n = len(source)

    def flush() -> None:
        if literal:
            nodes.append(Literal("".join(literal)))
            literal.clear()

    while i < n:
        ch = source[i]
        if ch == "\\":
            if source.startswith("\\{{", i):
                literal.append("{{")
                i += 3
            elif source.startswith("\\\\", i):
                literal.append("\\")
                i += 2
            else:
                faults.append(ParseFault(_byte_offset(source, i), "unknown-escape"))
                i += 1
        elif source.startswith("{{", i):
            start = i
            i += 2
            kw = None
            if source.startswith("param ", i):
                kw = "param"
                i += 6
            elif source.startswith("ref ", i):
                kw = "ref"
                i += 4
            if kw is None:
                faults.append(ParseFault(_byte_offset(source, start), "unterminated-marker"))
                continue
            m = _NAME_RE.match(source, i)
            if m is None:
                faults.append(ParseFault(_byte_offset(source, start), "empty-name"))
                if source.startswith("}}", i):
                    i += 2
                continue
            name = m.group(0)
            i = m.end()
            if not source.startswith("}}", i):
                faults.append(ParseFault(_byte_offset(source, start), "unterminated-marker"))
                continue
            i += 2
            flush()
            nodes.append(ParamSlot(name) if kw == "param" else CrossRef(name))
        else:
            literal.append(ch)
            i += 1
    flush()
    if faults:
        raise TemplateParseError(faults)
    return Template(tuple(nodes))


def serialize_template(template: Template) -> str:
    """Inverse of parse_template: re-escapes literals, reprints markers."""
    parts: list[str] = []
    for node in template.nodes:
        if isinstance(node, Literal):
            parts.append(node.text.replace("\\", "\\\\").replace("{{", "\\{{"))
        elif isinstance(node, ParamSlot):
            parts.append("{{param " + node.name + "}}")
        else:
            parts.append("{{ref " + node.target_unit_id + "}}")
    return "".join(parts)


def extract_crossrefs(template: Template) -> frozenset[str]:
    """The set of unit ids the template cross-references (deduplicated)."""
    return frozenset(
        node.target_unit_id for node in template.nodes if isinstance(node, CrossRef)
    )


def extract_params(template: Template) -> frozenset[str]:
    """The set of parameter names the template mentions."""
    return frozenset(node.name for node in template.nodes if isinstance(node, ParamSlot))


def render_fragment(
    template: Template,
    bindings: Mapping[str, BoundValue],
    labeler: Callable[[str], str],
) -> str:
    """Instantiate parameters and resolve cross-references to unit labels.

    ``labeler`` maps a target unit id to its label and should raise KeyError
    for units that are not part of the instance being rendered.
    """
    out: list[str] = []
    for node in template.nodes:
        if isinstance(node, Literal):
            out.append(node.text)
        elif isinstance(node, ParamSlot):
            if node.name not in bindings:
                raise RenderFault("unbound-parameter", node.name)
            out.append(format_value(bindings[node.name]))
        else:
            try:
                out.append(labeler(node.target_unit_id))
            except KeyError:
                raise RenderFault("dangling-crossref", node.target_unit_id) from None
    return "".join(out)


def derive_textual_constraints(doc):
    """Requires-constraints forced by cross-references in version templates.

    For every version v of unit A whose template references a distinct,
    existing unit B: selecting v requires B to be included. Returns
    ``(constraints, faults)`` where faults describe references to unit ids
    that do not exist in the document (those constraints are omitted).
    Output order is fixed: by owning unit id, version id, target id.
    """
    from .constraints import Origin, Requires, VersionSelected

    constraints = []
    faults: list[str] = []
    for unit_id in sorted(doc.versions):
        for version in sorted(doc.versions[unit_id], key=lambda v: v.id):
            try:
                template = parse_template(version.template)
            except TemplateParseError as exc:
                faults.append(f"version {version.id}: {exc}")
                continue
            for target in sorted(extract_crossrefs(template)):
                if target == unit_id:
                    continue
                if target not in doc.units:
                    faults.append(
                        f"version {version.id} references unknown unit {target!r}"
                    )
                    continue
                constraints.append(
                    Requires(
                        id=f"ref:{version.id}:{target}",
                        antecedent=VersionSelected(version.id),
                        consequent_unit=target,
                        origin=Origin.DERIVED_TEXTUAL,
                        message=(
                            f"version {version.id} of unit {unit_id} "
                            f"cross-references unit {target}"
                        ),
                    )
                )
    return constraints, faults
