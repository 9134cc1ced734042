"""Constraint-driven contract assembly: generic documents, versioned
fragments, live constraint checking, and case-universe analysis."""

from .cases import (
    CaseRule,
    Factor,
    check_completeness,
    check_consistency,
    universe_size,
)
from .constraints import (
    Bind,
    CheckReport,
    Checker,
    Contradiction,
    Deselect,
    Exclude,
    ExactlyOne,
    Excludes,
    Include,
    ParamRule,
    Requires,
    Select,
    Unbind,
    UnitIncluded,
    VersionSelected,
    check_full,
    check_incremental,
    enforce_include,
    parse_param_rule,
    satisfiable,
)
from .model import (
    DocumentInstance,
    GenericDocument,
    Mode,
    ParameterDecl,
    Unit,
    UnitKind,
    Version,
    add_unit,
    add_version,
    declare_parameter,
    new_document,
    unit_label,
    validate_structure,
)
from .session import (
    AssemblySession,
    Blocked,
    FinalizedInstance,
    diff,
    new_session,
    render_document,
)
from .store import Repository, generic_sha256
from .templates import (
    Template,
    derive_textual_constraints,
    extract_crossrefs,
    parse_template,
    render_fragment,
    serialize_template,
)
from .values import Money, ParamType, format_value, parse_value

__version__ = "0.1.0"
