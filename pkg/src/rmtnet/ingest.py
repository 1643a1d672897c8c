"""Readers and writers for trade logs, play logs and external market records.

All three formats come in two flavours: CSV with a header row, and JSONL with
one object per line. Column names are fixed:

* trade log:  ``ts,src,dst,kind,item,qty,money``
* play log:   ``user,week,f1..f16,banned``
* market log: ``price,volume,server,ts``

Malformed rows never abort a parse unless ``strict=True``; they are collected
in :attr:`ParseResult.errors` together with their line numbers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Callable, Iterable, Iterator, NamedTuple, Sequence

from .errors import (
    EventBeforeEpoch,
    InvariantViolation,
    MissingField,
    NegativeQuantity,
    NonPositivePrice,
    NonPositiveVolume,
    ParseError,
    UnknownKind,
)

WEEK_SECONDS = 7 * 86400

TRADE_COLUMNS = ("ts", "src", "dst", "kind", "item", "qty", "money")
PLAY_FEATURES = tuple(f"f{i}" for i in range(1, 17))
PLAY_COLUMNS = ("user", "week") + PLAY_FEATURES + ("banned",)
MARKET_COLUMNS = ("price", "volume", "server", "ts")

# Human-readable names for f1..f16, used as CSV headers in feature exports.
PLAY_FEATURE_NAMES = (
    "play_time",
    "days_played",
    "experience",
    "deaths",
    "pvp_combats",
    "pve_combats",
    "dungeons",
    "parties",
    "enchants",
    "item_trades",
    "money_received",
    "money_given",
    "money_obtained",
    "money_spent",
    "fishing_time",
    "shopping_time",
)


class TradeKind(str, Enum):
    DIRECT = "Direct"
    WAREHOUSE_DEPOSIT = "WarehouseDeposit"
    WAREHOUSE_WITHDRAW = "WarehouseWithdraw"


@dataclass(frozen=True)
class TradeEvent:
    timestamp: int
    source_id: str
    target_id: str
    kind: TradeKind = TradeKind.DIRECT
    item_id: str = ""
    quantity: int = 1
    money_value: int = 0

    def sort_key(self) -> tuple:
        return (
            self.timestamp,
            self.source_id,
            self.target_id,
            self.kind.value,
            self.item_id,
            self.quantity,
            self.money_value,
        )


@dataclass(frozen=True)
class PlayActivityRecord:
    user_id: str
    week_index: int
    features: tuple[float, ...]
    banned: bool = False


@dataclass(frozen=True)
class MarketRecord:
    unit_price: float
    trade_volume: float
    server_id: str
    completion_time: int

    @property
    def cash_value(self) -> float:
        return self.unit_price * self.trade_volume


@dataclass
class WeeklyBatch:
    week_index: int
    events: list[TradeEvent] = field(default_factory=list)


class ParseResult(NamedTuple):
    records: list
    errors: list[ParseError]


# --------------------------------------------------------------------------- #
# generic row readers
# --------------------------------------------------------------------------- #


def _as_text(stream) -> IO[str]:
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(stream.decode("utf-8"))
    if isinstance(stream, str):
        return io.StringIO(stream)
    if isinstance(stream, io.RawIOBase) or isinstance(stream, io.BufferedIOBase):
        return io.TextIOWrapper(stream, encoding="utf-8", newline="")
    return stream


def _iter_rows(stream, fmt: str) -> Iterator[tuple[int, dict | ParseError]]:
    """Yield ``(line_number, row_dict)``; undecodable lines yield a ParseError."""
    text = _as_text(stream)
    fmt = fmt.lower()
    if fmt == "csv":
        reader = csv.DictReader(text)
        for row in reader:
            line = reader.line_num
            if None in row:
                yield line, ParseError("too many fields", line)
                continue
            yield line, row
    elif fmt in ("jsonl", "json"):
        for line, raw in enumerate(text, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                yield line, ParseError(f"invalid JSON: {exc.msg}", line)
                continue
            if not isinstance(obj, dict):
                yield line, ParseError("expected a JSON object", line)
                continue
            yield line, obj
    else:
        raise ValueError(f"unknown format {fmt!r}; expected 'csv' or 'jsonl'")


def _field(row: dict, name: str, line: int):
    value = row.get(name)
    if value is None or (isinstance(value, str) and value.strip() == ""):
        raise MissingField(f"missing field {name!r}", line)
    return value.strip() if isinstance(value, str) else value


def _int(value, name: str, line: int) -> int:
    try:
        if isinstance(value, str):
            number = float(value) if any(c in value for c in ".eE") else int(value)
        else:
            number = value
        if isinstance(number, float):
            if not number.is_integer():
                raise ValueError
            number = int(number)
        return int(number)
    except (TypeError, ValueError):
        raise InvariantViolation(f"field {name!r} is not an integer: {value!r}", line) from None


def _float(value, name: str, line: int) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise InvariantViolation(f"field {name!r} is not a number: {value!r}", line) from None
    if not math.isfinite(number):
        raise InvariantViolation(f"field {name!r} is not finite", line)
    return number


def _bool(value, line: int) -> bool:
    if value is None:
        return False
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return bool(value)
    token = str(value).strip().lower()
    if token in ("", "0", "false", "f", "no", "n"):
        return False
    if token in ("1", "true", "t", "yes", "y"):
        return True
    raise InvariantViolation(f"field 'banned' is not a boolean: {value!r}", line)


def _parse(stream, fmt: str, convert: Callable[[dict, int], object], strict: bool) -> ParseResult:
    records: list = []
    errors: list[ParseError] = []
    for line, row in _iter_rows(stream, fmt):
        try:
            if isinstance(row, ParseError):
                raise row
            records.append(convert(row, line))
        except ParseError as exc:
            if strict:
                raise
            errors.append(exc)
    return ParseResult(records, errors)


# --------------------------------------------------------------------------- #
# trade log
# --------------------------------------------------------------------------- #

_KINDS = {k.value.lower(): k for k in TradeKind}


def _trade_from_row(row: dict, line: int, observation: tuple[int, int] | None = None) -> TradeEvent:
    ts = _int(_field(row, "ts", line), "ts", line)
    src = str(_field(row, "src", line))
    dst = str(_field(row, "dst", line))
    kind_token = str(_field(row, "kind", line))
    kind = _KINDS.get(kind_token.lower())
    if kind is None:
        raise UnknownKind(f"unknown trade kind {kind_token!r}", line)
    item = row.get("item")
    item = "" if item is None else str(item)  # opaque: kept verbatim, unlike ids
    qty = _int(_field(row, "qty", line), "qty", line)
    if qty < 0:
        raise NegativeQuantity(f"negative quantity {qty}", line)
    money = _int(_field(row, "money", line), "money", line)
    if money < 0:
        raise InvariantViolation(f"negative money value {money}", line)
    if src == dst:
        raise InvariantViolation("source and target are the same node", line)
    if observation is not None and not (observation[0] <= ts < observation[1]):
        raise InvariantViolation(f"timestamp {ts} outside the observation range", line)
    return TradeEvent(ts, src, dst, kind, item, qty, money)


def parse_trade_log(
    stream,
    format: str = "csv",
    *,
    strict: bool = False,
    observation: tuple[int, int] | None = None,
) -> ParseResult:
    """Parse a trade log into :class:`TradeEvent` objects in file order."""
    return _parse(stream, format, lambda row, line: _trade_from_row(row, line, observation), strict)


def _trade_row(event: TradeEvent) -> dict:
    return {
        "ts": event.timestamp,
        "src": event.source_id,
        "dst": event.target_id,
        "kind": event.kind.value,
        "item": event.item_id,
        "qty": event.quantity,
        "money": event.money_value,
    }


def write_trade_log(events: Iterable[TradeEvent], stream: IO[str], format: str = "csv") -> None:
    _write(stream, format, TRADE_COLUMNS, (_trade_row(e) for e in events))


# --------------------------------------------------------------------------- #
# play log
# --------------------------------------------------------------------------- #


def _play_from_row(row: dict, line: int) -> PlayActivityRecord:
    user = str(_field(row, "user", line))
    week = _int(_field(row, "week", line), "week", line)
    if week < 0:
        raise InvariantViolation(f"negative week index {week}", line)
    values = []
    for name in PLAY_FEATURES:
        value = _float(_field(row, name, line), name, line)
        if value < 0:
            raise InvariantViolation(f"feature {name} is negative", line)
        values.append(value)
    if values[0] > WEEK_SECONDS:
        raise InvariantViolation(f"play time {values[0]:g}s exceeds one week", line)
    return PlayActivityRecord(user, week, tuple(values), _bool(row.get("banned"), line))


def parse_play_log(stream, format: str = "csv", *, strict: bool = False) -> ParseResult:
    """Parse weekly play-activity records; a missing ``banned`` column means False."""
    return _parse(stream, format, _play_from_row, strict)


def _play_row(record: PlayActivityRecord) -> dict:
    row = {"user": record.user_id, "week": record.week_index}
    for name, value in zip(PLAY_FEATURES, record.features):
        row[name] = _format_number(value)
    row["banned"] = "true" if record.banned else "false"
    return row


def write_play_log(records: Iterable[PlayActivityRecord], stream: IO[str], format: str = "csv") -> None:
    _write(stream, format, PLAY_COLUMNS, (_play_row(r) for r in records))


# --------------------------------------------------------------------------- #
# market records
# --------------------------------------------------------------------------- #


def _market_from_row(row: dict, line: int) -> MarketRecord:
    price = _float(_field(row, "price", line), "price", line)
    if price <= 0:
        raise NonPositivePrice(f"unit price {price:g} is not positive", line)
    volume = _float(_field(row, "volume", line), "volume", line)
    if volume <= 0:
        raise NonPositiveVolume(f"trade volume {volume:g} is not positive", line)
    server = str(_field(row, "server", line))
    ts = _int(_field(row, "ts", line), "ts", line)
    return MarketRecord(price, volume, server, ts)


def parse_market_records(stream, format: str = "csv", *, strict: bool = False) -> ParseResult:
    """Parse market records; the result is sorted by completion time."""
    result = _parse(stream, format, _market_from_row, strict)
    result.records.sort(key=lambda r: r.completion_time)
    return result


def _market_row(record: MarketRecord) -> dict:
    return {
        "price": _format_number(record.unit_price),
        "volume": _format_number(record.trade_volume),
        "server": record.server_id,
        "ts": record.completion_time,
    }


def write_market_records(records: Iterable[MarketRecord], stream: IO[str], format: str = "csv") -> None:
    _write(stream, format, MARKET_COLUMNS, (_market_row(r) for r in records))


# --------------------------------------------------------------------------- #
# writing helpers
# --------------------------------------------------------------------------- #


def _format_number(value: float):
    if float(value).is_integer() and abs(value) < 2**53:
        return int(value)
    return repr(float(value))


def _write(stream: IO[str], fmt: str, columns: Sequence[str], rows: Iterable[dict]) -> None:
    fmt = fmt.lower()
    if fmt == "csv":
        writer = csv.DictWriter(stream, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    elif fmt in ("jsonl", "json"):
        for row in rows:
            stream.write(json.dumps(row, separators=(",", ":")) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}; expected 'csv' or 'jsonl'")


# --------------------------------------------------------------------------- #
# windowing and account merging
# --------------------------------------------------------------------------- #


def week_of(timestamp: int, epoch: int) -> int:
    if timestamp < epoch:
        raise EventBeforeEpoch(f"event at {timestamp} precedes epoch {epoch}")
    return (timestamp - epoch) // WEEK_SECONDS


def window_indices(events: Sequence[TradeEvent], epoch: int, n_weeks: int | None = None) -> list[list[int]]:
    """Positions of ``events`` per week, each week ordered by sort key then position."""
    buckets: dict[int, list[int]] = {}
    for i, event in enumerate(events):
        buckets.setdefault(week_of(event.timestamp, epoch), []).append(i)
    last = max(buckets) + 1 if buckets else 0
    if n_weeks is not None:
        last = max(last, n_weeks)
    return [
        sorted(buckets.get(w, ()), key=lambda i: (events[i].sort_key(), i))
        for w in range(last)
    ]


def window_weekly(events: Iterable[TradeEvent], epoch: int, n_weeks: int | None = None) -> list[WeeklyBatch]:
    """Split events into half-open weekly windows ``[epoch + 7k days, epoch + 7(k+1) days)``.

    The returned list is gap-free: weeks without events appear as empty
    batches. Within a batch events are ordered by :meth:`TradeEvent.sort_key`
    so the output does not depend on the input order.
    """
    events = list(events)
    return [
        WeeklyBatch(w, [events[i] for i in idx])
        for w, idx in enumerate(window_indices(events, epoch, n_weeks))
    ]


def load_account_map(stream) -> dict[str, str]:
    """Read a ``id,account`` CSV that maps character ids onto merged account ids."""
    reader = csv.DictReader(_as_text(stream))
    mapping = {}
    for row in reader:
        node = (row.get("id") or "").strip()
        account = (row.get("account") or "").strip()
        if not node or not account:
            raise MissingField("account map rows need 'id' and 'account'", reader.line_num)
        mapping[node] = account
    return mapping


def apply_account_map(events: Iterable[TradeEvent], mapping: dict[str, str]) -> list[TradeEvent]:
    """Rename endpoints through ``mapping``; trades that become self-trades are dropped."""
    merged = []
    for e in events:
        src = mapping.get(e.source_id, e.source_id)
        dst = mapping.get(e.target_id, e.target_id)
        if src == dst:
            continue
        merged.append(TradeEvent(e.timestamp, src, dst, e.kind, e.item_id, e.quantity, e.money_value))
    return merged


def check_warehouse_roles(events: Iterable[TradeEvent]) -> list[InvariantViolation]:
    """Flag ids used both as a warehouse and as a trading character.

    A deposit's target and a withdrawal's source are warehouses; any id that
    also shows up as a Direct endpoint, a depositor or a withdrawer is
    inconsistent. Violations are returned, one per offending id, in id order.
    """
    warehouses: set[str] = set()
    characters: set[str] = set()
    for e in events:
        if e.kind is TradeKind.WAREHOUSE_DEPOSIT:
            warehouses.add(e.target_id)
            characters.add(e.source_id)
        elif e.kind is TradeKind.WAREHOUSE_WITHDRAW:
            warehouses.add(e.source_id)
            characters.add(e.target_id)
        else:
            characters.add(e.source_id)
            characters.add(e.target_id)
    return [
        InvariantViolation(f"id {node!r} is used both as a warehouse and as a character")
        for node in sorted(warehouses & characters)
    ]
