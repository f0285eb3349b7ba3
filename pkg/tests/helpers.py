"""Builders shared by several test modules."""

from __future__ import annotations

from asotrace.records import (
    INSTALLED,
    UNINSTALLED,
    FastSnapshot,
    InstallDelta,
    Permission,
    SlowSnapshot,
)

DAY = 86400


def render_all(fleet, plans=None) -> list:
    """Every snapshot record of ``plans`` (default: the whole fleet), device by device."""
    out = []
    for plan in plans if plans is not None else fleet.plans:
        for recs in fleet.render(plan).values():
            out.extend(recs)
    return out


def slow(ts, install_id="1000000001", participant_id="100001", android_id="aid-1",
         accounts=(("a@gmail.com", "com.google"),), stopped=()):
    return SlowSnapshot(install_id, participant_id, android_id, ts, tuple(accounts), False, tuple(stopped))


def fast(ts, install_id="1000000001", participant_id="100001", foreground=None, events=(),
         screen_on=True, battery=80):
    return FastSnapshot(install_id, participant_id, ts, foreground, screen_on, battery, tuple(events))


def installed(app_id, install_time, perms=(), apk_hash=None):
    return InstallDelta(app_id, INSTALLED, install_time, install_time,
                        tuple(Permission(n, lvl, g) for n, lvl, g in perms), apk_hash)


def uninstalled(app_id):
    return InstallDelta(app_id, UNINSTALLED)


def faulted_candidates(fleet, schedule, seed):
    """Candidates of a fleet after device faults, plus the true partition of install IDs."""
    from asotrace.fingerprint import _candidate
    from asotrace.simulator.faults import inject_faults

    candidates, truth = [], set()
    for plan in inject_faults(fleet.plans, schedule, seed):
        streams = fleet.render(plan)
        candidates.extend(_candidate(i, recs) for i, recs in streams.items())
        truth.add(frozenset(streams))
    return candidates, truth


def partition_errors(devices, truth) -> int:
    """Resolved devices that are not exactly one true device."""
    return sum(frozenset(d.member_installs) not in truth for d in devices)


# PASS/FAIL lines of the acceptance criteria, printed in the terminal summary
ACCEPTANCE: list[str] = []
