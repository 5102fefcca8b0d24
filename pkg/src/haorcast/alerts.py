"""Alert decisions, season-aware message templates and pluggable dispatch.

Only mock transports ship with the package. A transport is any object with
``send(recipient_group, message)``; raising from ``send`` marks that channel
as failed without stopping the others.
"""

from __future__ import annotations

import datetime as dt
import json
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol

from .errors import MissingPlaceholderError, TransportUnregisteredError
from .layers import EXTREME, HIGH, LOW, MEDIUM, PredictionBreakdown

SMS, EMAIL, WHATSAPP = "sms", "email", "whatsapp"
ALL_CHANNELS = (SMS, EMAIL, WHATSAPP)
DISPATCH_GATE = 0.75
SMS_LIMIT = 160
ELLIPSIS = "…"
PRE_HARVEST, OFF_SEASON = "pre_harvest", "off_season"
PRE_HARVEST_MONTHS = (3, 4)

TIER_CHANNELS = {
    LOW: (),
    MEDIUM: (SMS,),
    HIGH: ALL_CHANNELS,
    EXTREME: ALL_CHANNELS,
}


@dataclass(frozen=True)
class AlertDecision:
    tier: str
    channels: tuple
    escalate_ddmc: bool
    dispatch_gate_passed: bool

    @property
    def outbound_channels(self) -> tuple:
        """Channels that actually send.

        SMS at MEDIUM is ungated; the full three-channel fan-out needs the
        gate, so HIGH below it falls back to SMS only.
        """
        if set(self.channels) == set(ALL_CHANNELS) and not self.dispatch_gate_passed:
            return (SMS,)
        return self.channels


def decide(breakdown: PredictionBreakdown, gate: float = DISPATCH_GATE) -> AlertDecision:
    tier = breakdown.tier
    return AlertDecision(
        tier=tier,
        channels=TIER_CHANNELS[tier],
        escalate_ddmc=tier == EXTREME,
        dispatch_gate_passed=breakdown.p_final >= gate,
    )


# --- templates -------------------------------------------------------------


@dataclass(frozen=True)
class MessageTemplate:
    template_id: str
    season: str
    channel: str
    body: str

    @property
    def placeholders(self) -> set:
        return {name for _, name, _, _ in string.Formatter().parse(self.body) if name}


def season_for(month: int) -> str:
    return PRE_HARVEST if month in PRE_HARVEST_MONTHS else OFF_SEASON


def load_templates(directory=None) -> dict[tuple[str, str], MessageTemplate]:
    """Templates keyed by (season, channel) from ``<season>.<channel>.txt`` files."""
    if directory is None:
        root = resources.files("haorcast") / "data" / "templates"
        files = [(p.name, p.read_text(encoding="utf-8")) for p in root.iterdir()]
    else:
        files = [(p.name, p.read_text(encoding="utf-8")) for p in Path(directory).iterdir()]
    out = {}
    for name, text in sorted(files):
        if not name.endswith(".txt"):
            continue
        season, channel = name[:-4].split(".", 1)
        out[(season, channel)] = MessageTemplate(name[:-4], season, channel, text.strip())
    return out


def truncate(text: str, limit: int = SMS_LIMIT) -> str:
    """Cut at a word boundary so the result plus ellipsis fits ``limit`` code points."""
    if len(text) <= limit:
        return text
    room = limit - len(ELLIPSIS)
    cut = text[:room]
    if " " in cut and not text[room].isspace():
        cut = cut.rsplit(" ", 1)[0]
    return cut.rstrip() + ELLIPSIS


def render(template: MessageTemplate, context: dict, sms_limit: int = SMS_LIMIT) -> str:
    missing = template.placeholders - set(context)
    if missing:
        raise MissingPlaceholderError(
            f"template {template.template_id} needs {sorted(missing)}")
    text = template.body.format_map(context)
    if template.channel == SMS:
        text = truncate(text, sms_limit)
    return text


def build_context(breakdown: PredictionBreakdown, date: dt.date, area_name: str,
                  crop_stage: str = "") -> dict:
    return {
        "p_final": f"{100 * breakdown.p_final:.0f}%",
        "tier": breakdown.tier,
        "date": date.isoformat(),
        "area_name": area_name,
        "crop_stage": crop_stage,
    }


def render_messages(decision: AlertDecision, templates, context: dict,
                    date: dt.date) -> dict[str, str]:
    season = season_for(date.month)
    out = {}
    for ch in decision.outbound_channels:
        tpl = templates.get((season, ch)) or templates.get((OFF_SEASON, ch))
        if tpl is None:
            raise MissingPlaceholderError(f"no template for {season}/{ch}")
        out[ch] = render(tpl, context)
    return out


# --- dispatch --------------------------------------------------------------


class Transport(Protocol):
    def send(self, recipient_group: str, message: str) -> None: ...


@dataclass
class MockTransport:
    """Records every send in memory; optionally fails on purpose."""

    channel: str
    fail: bool = False
    sent: list = field(default_factory=list)

    def send(self, recipient_group: str, message: str) -> None:
        if self.fail:
            raise ConnectionError(f"{self.channel}: simulated provider failure")
        self.sent.append((recipient_group, message))


@dataclass
class FileTransport:
    """Appends one JSON line per message to ``path``."""

    channel: str
    path: Path

    def send(self, recipient_group: str, message: str) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"channel": self.channel, "recipient_group": recipient_group,
                                 "message": message}, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class LogEntry:
    timestamp: str
    event_id: str
    channel: str
    recipient_group: str
    status: str
    detail: str = ""

    def to_line(self) -> str:
        return json.dumps(self.__dict__, ensure_ascii=False, sort_keys=True)


def read_roster(path) -> dict[str, list[str]]:
    """``channel: group, group`` per line."""
    roster: dict[str, list[str]] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        channel, groups = line.split(":", 1)
        roster.setdefault(channel.strip(), []).extend(
            g.strip() for g in groups.split(",") if g.strip())
    return roster


def _utc_now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class Dispatcher:
    transports: dict
    clock: Callable[[], str] = _utc_now
    log: list = field(default_factory=list)
    _seen: set = field(default_factory=set)

    def dispatch(self, event_id: str, decision: AlertDecision, messages: dict[str, str],
                 roster: dict[str, list[str]] | None = None) -> list[LogEntry]:
        """Send each outbound channel once per recipient group.

        A repeated (event, channel, group) within this dispatcher is skipped.
        """
        channels = decision.outbound_channels
        for ch in channels:
            if ch not in self.transports:
                raise TransportUnregisteredError(f"no transport registered for {ch!r}")
        new = []
        for ch in channels:
            for group in (roster or {}).get(ch, ["default"]):
                key = (event_id, ch, group)
                if key in self._seen:
                    continue
                self._seen.add(key)
                try:
                    self.transports[ch].send(group, messages[ch])
                    entry = LogEntry(self.clock(), event_id, ch, group, "sent")
                except Exception as exc:  # noqa: BLE001 - per-channel isolation
                    entry = LogEntry(self.clock(), event_id, ch, group, "failed", str(exc))
                new.append(entry)
        self.log.extend(new)
        return new


def dispatch(decision: AlertDecision, messages: dict[str, str], transports: dict,
             event_id: str = "event", roster=None) -> list[LogEntry]:
    return Dispatcher(transports).dispatch(event_id, decision, messages, roster)
