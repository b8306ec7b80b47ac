"""Plan text format: one line per happening, waiting implicit between them.

    ; makespan: 12.600000000000001
    0.0: (starboard)
    4.0: (ahead) (log position)
    7.5:

A line holds a happening time, a colon, and zero or more parenthesized ground
action names (possibly with arguments, space-separated).  A bare time line is
a happening with no actions: it marks a mode re-evaluation point, e.g. after a
truncated interval.  The ``; makespan:`` comment is required when the plan is
meant to end with a waiting interval after the last happening; without it the
plan ends at the last happening.  Times are written with ``repr`` so they
round-trip exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import PlanFormatError
from .search import Happening, Plan

_LINE_RE = re.compile(r"^\s*([0-9eE+.\-]+)\s*:\s*(.*?)\s*$")
_NAME_RE = re.compile(r"\(([^()]*)\)")


@dataclass(frozen=True)
class PlanText:
    """The validator-facing view of a plan: happenings plus the end time."""

    happenings: tuple[Happening, ...]
    makespan: float


def write_plan_text(plan: Plan) -> str:
    lines = [f"; makespan: {plan.makespan!r}"]
    for h in plan.happenings:
        actions = " ".join(f"({name})" for name in h.actions)
        lines.append(f"{h.time!r}: {actions}".rstrip())
    return "\n".join(lines) + "\n"


def parse_plan_text(text: str) -> PlanText:
    happenings: list[Happening] = []
    makespan: float | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(";"):
            body = line[1:].strip()
            if body.lower().startswith("makespan:"):
                try:
                    makespan = float(body.split(":", 1)[1])
                except ValueError:
                    raise PlanFormatError(f"line {lineno}: bad makespan value") from None
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise PlanFormatError(f"line {lineno}: expected 'TIME: (action) ...'")
        try:
            t = float(m.group(1))
        except ValueError:
            raise PlanFormatError(f"line {lineno}: bad time {m.group(1)!r}") from None
        rest = m.group(2)
        names = tuple(n.strip() for n in _NAME_RE.findall(rest))
        leftover = _NAME_RE.sub("", rest).strip()
        if leftover:
            raise PlanFormatError(f"line {lineno}: junk outside parentheses: {leftover!r}")
        if any(not n for n in names):
            raise PlanFormatError(f"line {lineno}: empty action name")
        happenings.append(Happening(t, names))
    times = [h.time for h in happenings]
    if any(b < a for a, b in zip(times, times[1:])):
        raise PlanFormatError("happening times must be non-decreasing")
    if makespan is None:
        makespan = times[-1] if times else 0.0
    if times and makespan < times[-1]:
        raise PlanFormatError("makespan precedes the last happening")
    if makespan < 0.0:
        raise PlanFormatError("negative makespan")
    return PlanText(tuple(happenings), makespan)


def as_plan_text(plan) -> PlanText:
    """Accept a search Plan or an already-parsed PlanText."""
    if isinstance(plan, PlanText):
        return plan
    if isinstance(plan, Plan):
        return PlanText(plan.happenings, plan.makespan)
    raise PlanFormatError(f"not a plan: {plan!r}")
