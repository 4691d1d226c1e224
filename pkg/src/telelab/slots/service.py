"""Slot booking: operator-managed lifecycle, team bookings, CSV export.

State is rebuilt from an append-only JSONL event log on startup, so the
service needs no database and every booking decision stays auditable.
All mutations are serialized through one lock; the booking race is
therefore linearizable.
"""

from __future__ import annotations

import csv
import io
import json
import re
import threading
import time
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

TEAM_ID_RE = re.compile(r"t[0-9]+")

STATUSES = ("DRAFT", "ACTIVATED", "BOOKED", "COMPLETED", "DEACTIVATED")

# The full lifecycle graph; anything not listed here is an IllegalTransition.
TRANSITIONS: dict[str, frozenset[str]] = {
    "DRAFT": frozenset({"ACTIVATED"}),
    "ACTIVATED": frozenset({"BOOKED", "DEACTIVATED"}),
    "BOOKED": frozenset({"COMPLETED", "DEACTIVATED"}),
    "COMPLETED": frozenset(),
    "DEACTIVATED": frozenset(),
}

CSV_HEADER = ("time", "team_id", "status", "join_link")


class SlotError(Exception):
    pass


class NotFound(SlotError):
    pass


class IllegalTransition(SlotError):
    pass


class NotActivated(SlotError):
    pass


class OverlapConflict(SlotError):
    pass


class AlreadyBooked(SlotError):
    pass


@dataclass
class Slot:
    id: str
    start: float                 # epoch seconds, UTC
    duration: float = 3600.0     # seconds
    status: str = "DRAFT"
    team_id: str | None = None
    join_link: str | None = None

    @property
    def end(self) -> float:
        return self.start + self.duration

    def as_dict(self) -> dict:
        return {
            "id": self.id, "start": self.start, "duration": self.duration,
            "status": self.status, "team_id": self.team_id, "join_link": self.join_link,
        }


def _iso(epoch: float) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class SlotService:
    def __init__(self, log_path: str | Path | None = None, now=time.time) -> None:
        self._lock = threading.RLock()
        self._slots: dict[str, Slot] = {}
        self._teams: dict[str, str] = {}
        self._notifications: list[dict] = []
        self._now = now
        self._next = 0
        self._log_path = Path(log_path) if log_path else None
        if self._log_path and self._log_path.exists():
            self._replay_log()

    # --- event log --------------------------------------------------------------

    def _append_event(self, event: str, slot: Slot | None = None, **extra) -> None:
        if self._log_path is None:
            return
        record = {"ts": self._now(), "event": event, **extra}
        if slot is not None:
            record["slot"] = slot.as_dict()
        with self._log_path.open("a") as f:
            f.write(json.dumps(record, separators=(",", ":")) + "\n")

    def _replay_log(self) -> None:
        for line in self._log_path.read_text().splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            slot_doc = record.get("slot")
            if slot_doc:
                slot = Slot(**slot_doc)
                self._slots[slot.id] = slot
                n = int(slot.id.removeprefix("slot-") or 0)
                self._next = max(self._next, n)
            if record["event"] == "team_registered":
                self._teams[record["team_id"]] = record.get("display_name", "")
            if record["event"] == "team_notified":
                self._notifications.append(record)

    # --- lifecycle ----------------------------------------------------------------

    def create_slot(self, start: float, duration: float = 3600.0) -> Slot:
        if duration <= 0:
            raise SlotError("duration must be > 0")
        with self._lock:
            self._next += 1
            slot = Slot(id=f"slot-{self._next:04d}", start=float(start), duration=float(duration))
            self._slots[slot.id] = slot
            self._append_event("created", slot)
            return slot

    def _transition(self, slot_id: str, new_status: str, event: str) -> Slot:
        with self._lock:
            slot = self.get(slot_id)
            if new_status not in TRANSITIONS[slot.status]:
                raise IllegalTransition(f"{slot.status} -> {new_status} on {slot_id}")
            old = slot.status
            slot.status = new_status
            self._append_event(event, slot, previous=old)
            return slot

    def activate_slot(self, slot_id: str) -> Slot:
        return self._transition(slot_id, "ACTIVATED", "activated")

    def deactivate_slot(self, slot_id: str) -> Slot:
        with self._lock:
            slot = self.get(slot_id)
            had_team = slot.status == "BOOKED" and slot.team_id
            slot = self._transition(slot_id, "DEACTIVATED", "deactivated")
            if had_team:
                note = {"ts": self._now(), "event": "team_notified",
                        "team_id": slot.team_id, "slot_id": slot.id,
                        "detail": "booked slot deactivated"}
                self._notifications.append(note)
                self._append_event("team_notified", None,
                                   team_id=slot.team_id, slot_id=slot.id,
                                   detail="booked slot deactivated")
            return slot

    def complete_slot(self, slot_id: str) -> Slot:
        return self._transition(slot_id, "COMPLETED", "completed")

    def book_slot(self, slot_id: str, team_id: str, display_name: str = "") -> Slot:
        if not TEAM_ID_RE.fullmatch(team_id):
            raise SlotError(f"team id {team_id!r} must match t[0-9]+")
        with self._lock:
            slot = self.get(slot_id)
            if slot.status == "BOOKED":
                raise AlreadyBooked(f"{slot_id} already booked by {slot.team_id}")
            if slot.status != "ACTIVATED":
                raise NotActivated(f"{slot_id} is {slot.status}")
            for other in self._slots.values():
                if (other.status == "BOOKED" and other.team_id == team_id
                        and other.start < slot.end and slot.start < other.end):
                    raise OverlapConflict(
                        f"team {team_id} already holds overlapping slot {other.id}")
            if team_id not in self._teams:
                self._teams[team_id] = display_name
                self._append_event("team_registered", None,
                                   team_id=team_id, display_name=display_name)
            slot.status = "BOOKED"
            slot.team_id = team_id
            slot.join_link = f"https://meet.telelab.example/{slot_id}/{uuid.uuid4().hex[:12]}"
            self._append_event("booked", slot)
            return slot

    # --- queries ----------------------------------------------------------------------

    def get(self, slot_id: str) -> Slot:
        slot = self._slots.get(slot_id)
        if slot is None:
            raise NotFound(f"no slot {slot_id}")
        return slot

    def list_slots(self) -> list[Slot]:
        with self._lock:
            return sorted(self._slots.values(), key=lambda s: (s.start, s.id))

    def notifications(self) -> list[dict]:
        with self._lock:
            return list(self._notifications)

    def export_spreadsheet(self) -> str:
        """CSV of every non-DRAFT slot, RFC-4180 quoted, sorted by start time."""
        with self._lock:
            rows = [s for s in self.list_slots() if s.status != "DRAFT"]
        buf = io.StringIO()
        writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(CSV_HEADER)
        for s in rows:
            writer.writerow([_iso(s.start), s.team_id or "", s.status, s.join_link or ""])
        return buf.getvalue()
