"""Trading-session minute grid shared by the whole pipeline.

The session runs 09:31:00 through 16:15:00 inclusive, one observation per
minute, 405 observations per trading day.  Minute indices are 0-based:
index 0 is 09:31, index 404 is 16:15.
"""

from __future__ import annotations

import datetime as dt

SESSION_START = dt.time(9, 31)
SESSION_END = dt.time(16, 15)
MINUTES_PER_DAY = 405

# Last minute index of the morning study window 09:31-10:30.  Jumps with a
# detection timestamp at index >= MORNING_END + 1 (10:31 onward) are the
# "late" jumps that disqualify a day from both comparison groups.
MORNING_END = 59
FIRST_HOUR_INDICES = range(0, MORNING_END + 1)

_START_MINUTES = SESSION_START.hour * 60 + SESSION_START.minute


def minute_index(t: dt.time) -> int:
    """0-based session index of a wall-clock time; raises if outside the grid."""
    idx = t.hour * 60 + t.minute - _START_MINUTES
    if not 0 <= idx < MINUTES_PER_DAY:
        raise ValueError(f"{t} is outside the {SESSION_START}-{SESSION_END} session")
    return idx


def in_session(t: dt.time) -> bool:
    idx = t.hour * 60 + t.minute - _START_MINUTES
    return 0 <= idx < MINUTES_PER_DAY


def index_to_time(idx: int) -> dt.time:
    if not 0 <= idx < MINUTES_PER_DAY:
        raise ValueError(f"minute index {idx} outside [0, {MINUTES_PER_DAY})")
    total = _START_MINUTES + idx
    return dt.time(total // 60, total % 60)


def combine(day: dt.date, idx: int) -> dt.datetime:
    return dt.datetime.combine(day, index_to_time(idx))
