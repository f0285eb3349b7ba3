"""Population statistics of planned fleets, for checking the simulator against its targets.

These are computed from plans (the ground-truth behaviour) rather than from
rendered snapshots, which makes fleets of thousands of devices cheap to check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..records import INSTALLED, UNINSTALLED
from .catalog import PREINSTALLED
from .distributions import DAY
from .fleet import DevicePlan


@dataclass(frozen=True)
class Target:
    name: str
    group: str  # "worker" or "regular"
    stat: str  # mean, median, max, share_le_1d
    value: float
    tolerance: float | None = 0.15  # relative; None = upper bound only

    def check(self, observed: float) -> bool:
        if self.tolerance is None:
            return observed <= self.value
        return abs(observed - self.value) <= self.tolerance * abs(self.value)


# published population statistics for worker and regular-user devices
TARGETS = (
    Target("gmail_accounts", "worker", "mean", 28.87),
    Target("gmail_accounts", "regular", "max", 10, None),
    Target("gmail_accounts", "regular", "median", 2),
    Target("daily_installs", "worker", "mean", 15.94),
    Target("daily_uninstalls", "worker", "mean", 7.02),
    Target("daily_installs", "regular", "mean", 3.88),
    Target("daily_uninstalls", "regular", "mean", 3.29),
    Target("install_to_review_days", "worker", "median", 5.00),
    Target("install_to_review_days", "regular", "median", 21.92),
    Target("total_reviews", "worker", "mean", 208.91),
    Target("total_reviews", "regular", "mean", 1.91),
)
# at least this share of worker install-to-review times is at most one day
WORKER_QUICK_REVIEW_SHARE = 0.30


def window_days(plan: DevicePlan) -> float:
    return (plan.t_end - plan.t_start) / DAY


def plan_features(plan: DevicePlan) -> dict[str, float]:
    installs = sum(1 for _, k, _ in plan.events if k == INSTALLED)
    uninstalls = sum(1 for _, k, _ in plan.events if k == UNINSTALLED)
    days = window_days(plan)
    initial = [a for a, inst in plan.apps.items() if inst.spans[0][0] < plan.t_start]
    return {
        "gmail_accounts": len(plan.gmail),
        "daily_installs": installs / days,
        "daily_uninstalls": uninstalls / days,
        "total_reviews": len(plan.reviews),
        "installed_apps": len(initial),
        "preinstalled_apps": sum(1 for a in initial if plan.apps[a].pool == PREINSTALLED),
    }


def plan_review_delays(plan: DevicePlan) -> list[float]:
    """Install-to-review delays in days, measured against each app's last install."""
    accounts = set(plan.gmail)
    out = []
    for r in plan.reviews:
        inst = plan.apps.get(r.app_id)
        if inst is None or r.account_name not in accounts:
            continue
        last_install = max(s for s, _ in inst.spans)
        if r.review_time >= last_install:
            out.append((r.review_time - last_install) / DAY)
    return out


def measure(plans: list[DevicePlan]) -> dict[tuple[str, str, str], float]:
    groups = {"worker": [p for p in plans if p.is_worker], "regular": [p for p in plans if not p.is_worker]}
    out: dict[tuple[str, str, str], float] = {}
    for group, members in groups.items():
        if not members:
            continue
        feats = [plan_features(p) for p in members]
        for name in feats[0]:
            v = np.array([f[name] for f in feats], dtype=float)
            out[(name, group, "mean")] = float(v.mean())
            out[(name, group, "median")] = float(np.median(v))
            out[(name, group, "max")] = float(v.max())
        delays = np.array([d for p in members for d in plan_review_delays(p)])
        if len(delays):
            out[("install_to_review_days", group, "mean")] = float(delays.mean())
            out[("install_to_review_days", group, "median")] = float(np.median(delays))
            out[("install_to_review_days", group, "share_le_1d")] = float((delays <= 1.0).mean())
    return out


def fidelity_report(plans: list[DevicePlan]) -> list[tuple[Target, float, bool]]:
    stats = measure(plans)
    rows = []
    for t in TARGETS:
        observed = stats.get((t.name, t.group, t.stat), float("nan"))
        rows.append((t, observed, t.check(observed)))
    quick = stats.get(("install_to_review_days", "worker", "share_le_1d"), float("nan"))
    rows.append((Target("install_to_review_share_le_1d", "worker", "min", WORKER_QUICK_REVIEW_SHARE, None),
                 quick, quick >= WORKER_QUICK_REVIEW_SHARE))
    return rows
