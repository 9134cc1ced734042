"""On-disk repository for generic documents and instances.

Layout: ``generic/<docId>/manifest.json`` holds the structural assertions
(units, parameters, constraints, version metadata) while the fragment
text of each version lives in ``generic/<docId>/fragments/<versionId>.txt``
with its SHA-256 recorded in the manifest. Instances live in
``instances/<instanceId>.json`` and pin the generic snapshot by hash.

Manifests are written atomically (temp file + rename) with canonical
sorted-key JSON, so saving an unchanged document is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Union

from .constraints import (
    Atom,
    Constraint,
    Excludes,
    ExactlyOne,
    Origin,
    ParamRule,
    Requires,
    UnitIncluded,
    VersionSelected,
    parse_param_rule,
)
from .model import (
    DocumentInstance,
    GenericDocument,
    Mode,
    ParameterDecl,
    Unit,
    UnitKind,
    Version,
    validate_structure,
)
from .session import FinalizedInstance
from .values import ParamType, format_value, parse_value

SUPPORTED_SCHEMA_VERSIONS = {1}


class StoreError(ValueError):
    pass


class NotFoundError(StoreError):
    pass


class HashMismatchError(StoreError):
    pass


class SchemaError(StoreError):
    pass


class RepositoryLockedError(StoreError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _atom_to_json(atom: Atom) -> dict:
    if isinstance(atom, UnitIncluded):
        return {"type": "unit", "id": atom.unit_id}
    return {"type": "version", "id": atom.version_id}


def _atom_from_json(obj: dict) -> Atom:
    if obj.get("type") == "unit":
        return UnitIncluded(obj["id"])
    if obj.get("type") == "version":
        return VersionSelected(obj["id"])
    raise StoreError(f"bad atom in manifest: {obj!r}")


def constraint_to_json(constraint: Constraint) -> dict:
    base = {
        "id": constraint.id,
        "kind": constraint.kind,
        "origin": constraint.origin.value,
        "message": constraint.message,
    }
    if isinstance(constraint, Requires):
        base["antecedent"] = _atom_to_json(constraint.antecedent)
        base["consequent"] = constraint.consequent_unit
    elif isinstance(constraint, Excludes):
        base["a"] = _atom_to_json(constraint.a)
        base["b"] = _atom_to_json(constraint.b)
    elif isinstance(constraint, ExactlyOne):
        base["group"] = sorted(constraint.group)
    elif isinstance(constraint, ParamRule):
        base["expr"] = constraint.source
    else:
        raise StoreError(f"cannot serialize constraint {constraint!r}")
    return base


def constraint_from_json(obj: dict, parameters: tuple[ParameterDecl, ...]) -> Constraint:
    kind = obj.get("kind")
    origin = Origin(obj.get("origin", "authored"))
    message = obj.get("message", "")
    cid = obj["id"]
    if kind == "requires":
        return Requires(
            id=cid,
            antecedent=_atom_from_json(obj["antecedent"]),
            consequent_unit=obj["consequent"],
            origin=origin,
            message=message,
        )
    if kind == "excludes":
        return Excludes(
            id=cid, a=_atom_from_json(obj["a"]), b=_atom_from_json(obj["b"]),
            origin=origin, message=message,
        )
    if kind == "exactly-one":
        return ExactlyOne(id=cid, group=frozenset(obj["group"]), origin=origin, message=message)
    if kind == "param-rule":
        rule = parse_param_rule(cid, obj["expr"], parameters, message=message)
        return ParamRule(
            id=cid, clauses=rule.clauses, source=rule.source, origin=origin, message=message
        )
    raise StoreError(f"unknown constraint kind in manifest: {kind!r}")


def manifest_dict(doc: GenericDocument) -> dict:
    units = [
        {
            "id": unit.id,
            "kind": unit.kind.value,
            "heading": unit.heading,
            "children": list(unit.children),
            "roleTags": sorted(unit.role_tags),
        }
        for unit in (doc.units[uid] for uid in doc.preorder())
    ]
    parameters = []
    for decl in doc.parameters:
        entry = {
            "name": decl.name,
            "ptype": decl.ptype.value,
            "description": decl.description,
        }
        if decl.ptype == ParamType.ENUM:
            entry["enumValues"] = list(decl.enum_values)
        parameters.append(entry)
    versions = []
    for uid in sorted(doc.versions):
        for version in doc.versions[uid]:
            entry = {
                "id": version.id,
                "unitId": version.unit_id,
                "fragmentSha256": _sha256_text(version.template),
                "rationale": version.rationale,
                "provenance": version.provenance,
                "createdAt": version.created_at,
            }
            if version.derived_from is not None:
                entry["derivedFrom"] = version.derived_from
            versions.append(entry)
    # authored constraints only; textual ones are re-derived from fragments
    constraints = [constraint_to_json(c) for c in doc.constraints]
    return {
        "id": doc.id,
        "title": doc.title,
        "schemaVersion": doc.schema_version,
        "rootId": doc.root_id,
        "units": units,
        "parameters": parameters,
        "versions": versions,
        "constraints": constraints,
    }


def report_to_json(report) -> dict:
    """Report wire/file schema shared by the CLI and the HTTP service."""
    return {
        "violations": [
            {
                "constraintId": v.constraint_id,
                "kind": v.kind,
                "involved": list(v.involved),
                "message": v.message,
            }
            for v in report.violations
        ],
        "gaps": [
            {"kind": g.kind, "subject": g.subject, "message": g.message}
            for g in report.gaps
        ],
        "fullRecheck": report.full_recheck,
    }


def generic_sha256(doc: GenericDocument) -> str:
    """Content hash pinning a generic-document snapshot."""
    return _sha256_text(canonical_json(manifest_dict(doc)))


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


class Repository:
    """Single-writer file repository (advisory lock; concurrent readers)."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    # -- paths -----------------------------------------------------------

    def generic_dir(self, doc_id: str) -> Path:
        return self.root / "generic" / doc_id

    def manifest_path(self, doc_id: str) -> Path:
        return self.generic_dir(doc_id) / "manifest.json"

    def fragment_path(self, doc_id: str, version_id: str) -> Path:
        return self.generic_dir(doc_id) / "fragments" / f"{version_id}.txt"

    def instance_path(self, instance_id: str) -> Path:
        return self.root / "instances" / f"{instance_id}.json"

    # -- locking ---------------------------------------------------------

    @contextmanager
    def lock(self) -> Iterator[None]:
        self.root.mkdir(parents=True, exist_ok=True)
        lock_path = self.root / ".lock"
        try:
            fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RepositoryLockedError(
                f"repository {self.root} is locked by another writer ({lock_path})"
            ) from None
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield
        finally:
            try:
                os.unlink(lock_path)
            except OSError:
                pass

    # -- generics --------------------------------------------------------

    def list_generics(self) -> list[str]:
        base = self.root / "generic"
        if not base.is_dir():
            return []
        return sorted(p.name for p in base.iterdir() if (p / "manifest.json").is_file())

    def save_generic(self, doc: GenericDocument) -> None:
        faults = validate_structure(doc)
        if faults:
            raise StoreError(
                "refusing to save structurally invalid document: "
                + "; ".join(str(f) for f in faults)
            )
        with self.lock():
            for version in doc.all_versions():
                _atomic_write(self.fragment_path(doc.id, version.id), version.template)
            _atomic_write(self.manifest_path(doc.id), canonical_json(manifest_dict(doc)))

    def load_generic(self, doc_id: str) -> GenericDocument:
        path = self.manifest_path(doc_id)
        if not path.is_file():
            raise NotFoundError(f"no generic document {doc_id!r} in {self.root}")
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise StoreError(f"manifest parse fault in {path}: {exc}") from exc
        schema = manifest.get("schemaVersion")
        if schema not in SUPPORTED_SCHEMA_VERSIONS:
            raise SchemaError(f"unsupported schemaVersion {schema!r} in {path}")

        units: dict[str, Unit] = {}
        for entry in manifest["units"]:
            units[entry["id"]] = Unit(
                id=entry["id"],
                kind=UnitKind(entry["kind"]),
                heading=entry["heading"],
                children=tuple(entry["children"]),
                role_tags=frozenset(entry.get("roleTags", ())),
            )
        parameters = tuple(
            ParameterDecl(
                name=entry["name"],
                ptype=ParamType(entry["ptype"]),
                enum_values=tuple(entry.get("enumValues", ())),
                description=entry.get("description", ""),
            )
            for entry in manifest["parameters"]
        )
        versions: dict[str, tuple[Version, ...]] = {}
        for entry in manifest["versions"]:
            fragment = self.fragment_path(doc_id, entry["id"])
            if not fragment.is_file():
                raise NotFoundError(f"missing fragment file for version {entry['id']!r}")
            try:
                template = fragment.read_text(encoding="utf-8")
            except UnicodeDecodeError as exc:
                raise HashMismatchError(
                    f"fragment of version {entry['id']!r} is corrupt (not UTF-8): {exc}"
                ) from exc
            digest = _sha256_text(template)
            if digest != entry["fragmentSha256"]:
                raise HashMismatchError(
                    f"fragment of version {entry['id']!r} does not match its recorded hash"
                )
            version = Version(
                id=entry["id"],
                unit_id=entry["unitId"],
                template=template,
                rationale=entry["rationale"],
                provenance=entry.get("provenance", ""),
                derived_from=entry.get("derivedFrom"),
                created_at=entry.get("createdAt", ""),
            )
            versions.setdefault(version.unit_id, ())
            versions[version.unit_id] = versions[version.unit_id] + (version,)
        constraints = tuple(
            constraint_from_json(entry, parameters) for entry in manifest["constraints"]
        )
        doc = GenericDocument(
            id=manifest["id"],
            title=manifest["title"],
            root_id=manifest["rootId"],
            units=units,
            versions=versions,
            parameters=parameters,
            constraints=constraints,
            schema_version=schema,
        )
        faults = validate_structure(doc)
        if faults:
            raise StoreError(
                f"loaded document {doc_id!r} is invalid: " + "; ".join(str(f) for f in faults)
            )
        return doc

    # -- instances -------------------------------------------------------

    def list_instances(self) -> list[str]:
        base = self.root / "instances"
        if not base.is_dir():
            return []
        return sorted(p.stem for p in base.glob("*.json"))

    def save_instance(self, item: Union[DocumentInstance, FinalizedInstance]) -> None:
        if isinstance(item, FinalizedInstance):
            instance, finalized, snapshot = item.instance, True, item.generic_sha256
        else:
            instance, finalized = item, False
            try:
                snapshot = generic_sha256(self.load_generic(instance.generic_id))
            except NotFoundError:
                raise StoreError(
                    f"instance {instance.id!r} references generic "
                    f"{instance.generic_id!r}, which is not in the repository"
                ) from None
        payload = {
            "id": instance.id,
            "genericId": instance.generic_id,
            "genericSha256": snapshot,
            "mode": instance.mode.value,
            "included": sorted(instance.included),
            "selections": dict(sorted(instance.selections.items())),
            "bindings": {
                name: format_value(value)
                for name, value in sorted(instance.bindings.items())
            },
            "finalized": finalized,
        }
        with self.lock():
            _atomic_write(self.instance_path(instance.id), canonical_json(payload))

    def load_instance(
        self, instance_id: str
    ) -> tuple[DocumentInstance, bool, list[str]]:
        """Returns (instance, finalized flag, warnings).

        A finalized instance whose generic snapshot hash no longer matches
        the stored generic raises; for drafts the mismatch is a warning.
        """
        path = self.instance_path(instance_id)
        if not path.is_file():
            raise NotFoundError(f"no instance {instance_id!r} in {self.root}")
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise StoreError(f"instance parse fault in {path}: {exc}") from exc
        doc = self.load_generic(payload["genericId"])
        warnings: list[str] = []
        current = generic_sha256(doc)
        finalized = bool(payload.get("finalized"))
        if payload.get("genericSha256") != current:
            if finalized:
                raise HashMismatchError(
                    f"finalized instance {instance_id!r} pins a different snapshot of "
                    f"generic {doc.id!r} (the generic has changed since finalization)"
                )
            warnings.append(
                f"generic {doc.id!r} has changed since instance {instance_id!r} was saved"
            )
        bindings = {}
        for name, text in payload.get("bindings", {}).items():
            decl = doc.parameter(name)
            bindings[name] = parse_value(text, decl.ptype, decl.enum_values)
        instance = DocumentInstance(
            id=payload["id"],
            generic_id=payload["genericId"],
            generic_schema_version=doc.schema_version,
            included=frozenset(payload.get("included", ())),
            selections=dict(payload.get("selections", {})),
            bindings=bindings,
            mode=Mode(payload.get("mode", "notify")),
        )
        return instance, finalized, warnings
