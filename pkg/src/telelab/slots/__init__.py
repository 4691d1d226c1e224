from telelab.slots.service import (
    AlreadyBooked,
    IllegalTransition,
    NotActivated,
    NotFound,
    OverlapConflict,
    Slot,
    SlotService,
    SlotError,
    STATUSES,
    TRANSITIONS,
)

__all__ = [
    "AlreadyBooked",
    "IllegalTransition",
    "NotActivated",
    "NotFound",
    "OverlapConflict",
    "Slot",
    "SlotError",
    "SlotService",
    "STATUSES",
    "TRANSITIONS",
]
