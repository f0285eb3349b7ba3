"""Fault injection for fleets.

Two families of faults exist. Device-level events change which collector
installs a device has: a *reinstall* splits an install into two with a gap,
keeping participant and Android ID; a *shared device* split hands the second
part to another participant; *android_id suppression* blanks the Android ID of
an install. Transport faults (drops, corruptions, replays) live in
``FaultRates`` and are applied by the protocol's ``FaultyTransport``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..protocol import FaultRates
from .distributions import DAY
from .fleet import CollectorInstall, DevicePlan, unique_digits

REINSTALL = "reinstall"
SHARED_DEVICE = "shared_device"
SUPPRESS_ANDROID_ID = "suppress_android_id"


class InvalidScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class SplitEvent:
    """Collector uninstalled at ``at`` and installed again at ``at + gap``."""

    device_id: str
    kind: str  # reinstall | shared_device
    at: int
    gap: int


@dataclass(frozen=True)
class FaultSchedule:
    reinstall_rate: float = 0.0
    shared_device_rate: float = 0.0
    android_id_suppression: float = 0.0
    transport: FaultRates = field(default_factory=FaultRates)
    splits: tuple[SplitEvent, ...] = ()
    suppressed_installs: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("reinstall_rate", "shared_device_rate", "android_id_suppression"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidScheduleError(f"{name} must be in [0, 1], got {v}")


def _draw_splits(plans: list[DevicePlan], schedule: FaultSchedule, rng: np.random.Generator) -> list[SplitEvent]:
    events = []
    for plan in plans:
        u = rng.random()
        if u < schedule.reinstall_rate:
            kind = REINSTALL
        elif u < schedule.reinstall_rate + schedule.shared_device_rate:
            kind = SHARED_DEVICE
        else:
            continue
        span = plan.t_end - plan.t_start
        at = plan.t_start + int(rng.uniform(0.3, 0.6) * span)
        gap = int(rng.uniform(0.01, 0.1) * DAY)
        events.append(SplitEvent(plan.device_id, kind, at, gap))
    return events


def inject_faults(plans: list[DevicePlan], schedule: FaultSchedule, seed: int) -> list[DevicePlan]:
    """Apply device-level faults; returns new plans, the inputs are left untouched.

    Raises ``InvalidScheduleError`` when two splits of one device would give
    it overlapping collector installs.
    """
    rng = np.random.default_rng([seed, 0xFA17])
    splits = list(schedule.splits) + _draw_splits(plans, schedule, rng)
    by_device: dict[str, list[SplitEvent]] = {}
    known = {p.device_id for p in plans}
    for ev in splits:
        if ev.device_id not in known:
            raise InvalidScheduleError(f"split for unknown device {ev.device_id}")
        if ev.kind not in (REINSTALL, SHARED_DEVICE):
            raise InvalidScheduleError(f"unknown split kind {ev.kind!r}")
        if ev.gap <= 0:
            raise InvalidScheduleError("split gap must be positive")
        by_device.setdefault(ev.device_id, []).append(ev)

    taken_installs = {i.install_id for p in plans for i in p.installs}
    taken_participants = {i.participant_id for p in plans for i in p.installs}
    out = []
    for plan in plans:
        installs = [replace(i) for i in plan.installs]
        for ev in sorted(by_device.get(plan.device_id, ()), key=lambda e: e.at):
            host = next((i for i in installs if i.start < ev.at < i.end), None)
            if host is None or ev.at + ev.gap >= host.end:
                raise InvalidScheduleError(
                    f"{plan.device_id}: split at {ev.at} (gap {ev.gap}) overlaps another install interval")
            new_id = unique_digits(rng, 1, 10, taken_installs)[0]
            taken_installs.add(new_id)
            participant = host.participant_id
            if ev.kind == SHARED_DEVICE:
                participant = unique_digits(rng, 1, 6, taken_participants)[0]
                taken_participants.add(participant)
            tail = CollectorInstall(new_id, participant, host.android_id, ev.at + ev.gap, host.end)
            host.end = ev.at
            installs.append(tail)
        installs.sort(key=lambda i: i.start)
        out.append(replace(plan, installs=installs))

    # suppression is drawn per install after splitting so reinstalls can lose the ID independently
    suppressed = set(schedule.suppressed_installs)
    for plan in out:
        for inst in plan.installs:
            if inst.install_id in suppressed or rng.random() < schedule.android_id_suppression:
                inst.android_id = None
    return out
