"""Typed parameter values and their canonical text forms.

Every value a drafter can bind to a parameter has exactly one canonical
textual rendering, used both in rendered contract text and in the on-disk
instance format. Parsing the canonical form back yields an equal value.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import Union


class BindingTypeError(ValueError):
    """A value does not fit its declared parameter type."""


class ParamType(Enum):
    TEXT = "text"
    INTEGER = "integer"
    DECIMAL = "decimal"
    DATE = "date"
    MONEY = "money"
    PARTY = "party"
    ENUM = "enum"


_CURRENCY_RE = re.compile(r"^[A-Z]{3}$")
_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


@dataclass(frozen=True)
class Money:
    amount: Decimal
    currency: str

    def __post_init__(self) -> None:
        if not _CURRENCY_RE.match(self.currency):
            raise BindingTypeError(f"bad currency code: {self.currency!r}")


BoundValue = Union[str, int, Decimal, date, Money]


def format_value(value: BoundValue) -> str:
    """Canonical text for a bound value (ISO dates, exact decimals)."""
    if isinstance(value, Money):
        return f"{format(value.amount, 'f')} {value.currency}"
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, Decimal):
        return format(value, "f")
    if isinstance(value, bool):
        raise BindingTypeError("boolean values are not bindable")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    raise BindingTypeError(f"unsupported value type: {type(value).__name__}")


def parse_value(text: str, ptype: ParamType, enum_values: tuple[str, ...] = ()) -> BoundValue:
    """Parse canonical text into a typed value for the given parameter type."""
    if ptype in (ParamType.TEXT, ParamType.PARTY):
        return text
    if ptype == ParamType.ENUM:
        if text not in enum_values:
            raise BindingTypeError(f"{text!r} is not one of {list(enum_values)}")
        return text
    if ptype == ParamType.INTEGER:
        try:
            return int(text, 10)
        except ValueError as exc:
            raise BindingTypeError(f"bad integer: {text!r}") from exc
    if ptype == ParamType.DECIMAL:
        try:
            return Decimal(text)
        except InvalidOperation as exc:
            raise BindingTypeError(f"bad decimal: {text!r}") from exc
    if ptype == ParamType.DATE:
        if not _DATE_RE.match(text):
            raise BindingTypeError(f"bad date (want YYYY-MM-DD): {text!r}")
        try:
            return date.fromisoformat(text)
        except ValueError as exc:
            raise BindingTypeError(f"bad date: {text!r}") from exc
    if ptype == ParamType.MONEY:
        parts = text.rsplit(" ", 1)
        if len(parts) != 2:
            raise BindingTypeError(f"bad money (want '<amount> <CUR>'): {text!r}")
        try:
            amount = Decimal(parts[0])
        except InvalidOperation as exc:
            raise BindingTypeError(f"bad money amount: {parts[0]!r}") from exc
        return Money(amount, parts[1])
    raise BindingTypeError(f"unknown parameter type: {ptype}")


def check_value(value: BoundValue, ptype: ParamType, enum_values: tuple[str, ...] = ()) -> None:
    """Raise unless ``value`` matches the declared parameter type."""
    ok: bool
    if ptype in (ParamType.TEXT, ParamType.PARTY):
        ok = isinstance(value, str)
    elif ptype == ParamType.ENUM:
        ok = isinstance(value, str) and value in enum_values
    elif ptype == ParamType.INTEGER:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif ptype == ParamType.DECIMAL:
        ok = isinstance(value, Decimal)
    elif ptype == ParamType.DATE:
        ok = isinstance(value, date)
    elif ptype == ParamType.MONEY:
        ok = isinstance(value, Money)
    else:
        ok = False
    if not ok:
        raise BindingTypeError(
            f"value {value!r} does not match parameter type {ptype.value}"
        )
