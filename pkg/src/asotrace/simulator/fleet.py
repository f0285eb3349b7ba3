"""Fleet generation.

Generation happens in two steps. ``plan_device`` draws everything a device
*does* (accounts, app inventory, install/uninstall events, foreground
sessions, reviews); ``render_device`` turns a plan into the slow and fast
snapshot streams the collector would have produced for each of its installs.
Both use a random stream derived from ``(seed, device index)`` only, so any
subset of devices can be generated in any order with identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping

import numpy as np

from ..records import (
    GMAIL_ACCOUNT_TYPE,
    INSTALLED,
    UNINSTALLED,
    AppMetadata,
    FastSnapshot,
    InstallDelta,
    Permission,
    ReviewRecord,
    SlowSnapshot,
)
from .catalog import LAUNCHER, PERSONAL, PLAY_STORE, PREINSTALLED, PROMOTED, SETTINGS, Catalog, build_catalog
from .distributions import DAY, LogNormal
from .profiles import REGULAR, WORKER_DEDICATED, WORKER_ORGANIC, BehaviorProfile, build_profiles

DEFAULT_START = 1_767_225_600  # 2026-01-01T00:00:00Z
SLOW_PERIOD = 120
FAST_PERIOD = 5
IDLE_SLOW_EVERY = 30  # screen off: only every 30th slow alarm fires (doze maintenance window)
SCREEN_MERGE_GAP = 30
WAKING_SECONDS = 17 * 3600

PROMOTION = "promotion"
INTENT_PERSONAL = "personal"

_BRIEF_OPEN = LogNormal.fit(20.0, 15.0, 120.0)


@dataclass(frozen=True)
class FleetConfig:
    seed: int
    workers: int = 200
    regulars: int = 100
    organic_share: float = 0.691
    duration_days: float = 7.0
    dropout: float = 0.05
    start_time: int = DEFAULT_START
    crawl_horizon_days: float = 730.0
    profile_overrides: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ValueError("seed is mandatory and must be an integer")
        if self.duration_days < 2:
            raise ValueError("duration_days must be at least 2")
        if self.workers < 0 or self.regulars < 0:
            raise ValueError("device counts must be non-negative")
        if not 0.0 <= self.organic_share <= 1.0:
            raise ValueError("organic_share must be in [0, 1]")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.crawl_horizon_days < 0:
            raise ValueError("crawl_horizon_days must be non-negative")

    @property
    def organic_count(self) -> int:
        return int(round(self.workers * self.organic_share))

    @property
    def device_count(self) -> int:
        return self.workers + self.regulars

    @property
    def end_time(self) -> int:
        return self.start_time + int(round(self.duration_days * DAY))

    @property
    def crawl_time(self) -> int:
        return self.end_time + int(round(self.crawl_horizon_days * DAY))


@dataclass
class CollectorInstall:
    install_id: str
    participant_id: str
    android_id: str | None
    start: int
    end: int


@dataclass
class AppInstance:
    app_id: str
    pool: str
    intent: str
    permissions: tuple[Permission, ...]
    spans: list[list]  # [install_time, uninstall_time or None]
    last_update_time: int
    initially_stopped: bool = False


@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    app_id: str


@dataclass
class DevicePlan:
    index: int
    device_id: str
    cls: str
    participant_id: str
    android_id: str
    t_start: int
    t_end: int
    accounts: tuple[tuple[str, str], ...]
    gmail: tuple[str, ...]
    apps: dict[str, AppInstance]
    events: list[tuple[int, str, str]]  # (time, installed|uninstalled, app_id), in-window
    sessions: list[Segment]
    actions: list[Segment]
    reviews: list[ReviewRecord]
    installs: list[CollectorInstall]
    battery_period: int
    battery_phase: int
    fast_phase: int

    @property
    def is_worker(self) -> bool:
        return self.cls != REGULAR

    def intents(self) -> dict[str, str]:
        return {a: inst.intent for a, inst in sorted(self.apps.items())}

    def ground_truth(self) -> dict:
        return {
            "device_id": self.device_id,
            "class": self.cls,
            "label": "worker" if self.is_worker else "regular",
            "installs": [
                {
                    "install_id": i.install_id,
                    "participant_id": i.participant_id,
                    "android_id": i.android_id,
                    "start": i.start,
                    "end": i.end,
                }
                for i in self.installs
            ],
            "app_intents": self.intents(),
        }


@dataclass
class Fleet:
    config: FleetConfig
    catalog: Catalog
    profiles: dict[str, BehaviorProfile]
    plans: list[DevicePlan]

    def metadata(self) -> list[AppMetadata]:
        return self.catalog.metadata()

    def reviews(self) -> list[ReviewRecord]:
        out = [r for p in self.plans for r in p.reviews]
        out.sort(key=lambda r: (r.review_time, r.account_name, r.app_id))
        return out

    def ground_truth(self) -> list[dict]:
        return [p.ground_truth() for p in self.plans]

    def render(self, plan: DevicePlan) -> dict[str, list]:
        return render_device(plan, self.catalog, self.config)

    def snapshots(self) -> Iterator:
        for plan in self.plans:
            for recs in render_device(plan, self.catalog, self.config).values():
                yield from recs


# ---------------------------------------------------------------------------
# planning


def _device_classes(config: FleetConfig) -> list[str]:
    classes = (
        [WORKER_DEDICATED] * (config.workers - config.organic_count)
        + [WORKER_ORGANIC] * config.organic_count
        + [REGULAR] * config.regulars
    )
    rng = np.random.default_rng([config.seed, 0xC1A5])
    return [classes[i] for i in rng.permutation(len(classes))]


def unique_digits(rng: np.random.Generator, n: int, width: int, taken: set[str] | None = None) -> list[str]:
    """``n`` distinct zero-padded decimal identifiers not already in ``taken``."""
    taken = set(taken or ())
    out = []
    while len(out) < n:
        s = str(int(rng.integers(10 ** (width - 1), 10**width)))
        if s not in taken:
            taken.add(s)
            out.append(s)
    return out


def _waking_time(rng: np.random.Generator, t0: int, t1: int, wake_offset: int) -> int:
    """Uniform time within the device's waking hours in [t0, t1)."""
    days = max(1, math.ceil((t1 - t0) / DAY) + 1)
    for _ in range(100):
        d = int(rng.integers(-1, days))
        t = t0 - (t0 % int(DAY)) + d * int(DAY) + wake_offset + int(rng.integers(0, WAKING_SECONDS))
        if t0 <= t < t1:
            return t
    return int(rng.integers(t0, t1))


def _waking_intervals(t0: int, t1: int, wake_offset: int) -> list[tuple[int, int]]:
    out = []
    day0 = t0 - (t0 % int(DAY)) - int(DAY)
    d = day0
    while d < t1:
        a, b = max(t0, d + wake_offset), min(t1, d + wake_offset + WAKING_SECONDS)
        if a < b:
            out.append((a, b))
        d += int(DAY)
    return out


def _accounts(rng: np.random.Generator, profile: BehaviorProfile, index: int) -> tuple[tuple, tuple]:
    n_gmail = int(min(profile.gmail_cap, max(1, round(float(profile.gmail_accounts.sample(rng))))))
    gmail = tuple(f"user{index:05d}.{k:03d}@gmail.com" for k in range(n_gmail))
    accounts = [(g, GMAIL_ACCOUNT_TYPE) for g in gmail]
    for t in profile.other_account_types:
        if rng.random() < profile.other_type_prob:
            for k in range(1 + int(rng.random() < 0.15)):
                accounts.append((f"acct{index:05d}.{k}@{t}", t))
    return tuple(accounts), gmail


def _grants(rng: np.random.Generator, catalog: Catalog, app_id: str, profile: BehaviorProfile) -> tuple[Permission, ...]:
    perms = []
    for name, level in catalog.apps[app_id].permissions:
        granted = True
        if level == "dangerous" and not profile.grant_all and rng.random() < profile.deny_dangerous_prob:
            granted = False
        perms.append(Permission(name, level, granted))
    return tuple(perms)


def plan_device(index: int, cls: str, ids: tuple[str, str, str], config: FleetConfig,
                catalog: Catalog, profiles: dict[str, BehaviorProfile]) -> DevicePlan:
    profile = profiles[cls]
    rng = np.random.default_rng([config.seed, index, 0])
    install_id, participant_id, android_id = ids
    t0 = config.start_time + int(rng.integers(0, int(DAY)))
    t1 = t0 + int(round(config.duration_days * DAY))
    wake_offset = int(rng.integers(4 * 3600, 10 * 3600))
    boot = t0 - int(rng.integers(90, 900)) * int(DAY)

    accounts, gmail = _accounts(rng, profile, index)
    apps: dict[str, AppInstance] = {}
    propensity: dict[str, float] = {}
    retention: set[str] = set()

    def add_app(app_id: str, pool: str, install_time: int, last_update: int | None = None,
                stopped: bool = False) -> AppInstance:
        intent = PROMOTION if pool == PROMOTED else INTENT_PERSONAL
        inst = apps.get(app_id)
        if inst is None:
            inst = AppInstance(app_id, pool, intent, _grants(rng, catalog, app_id, profile), [],
                               last_update if last_update is not None else install_time, stopped)
            apps[app_id] = inst
            if pool == PERSONAL:
                propensity[app_id] = 0.0 if rng.random() < profile.never_opened_share else float(
                    profile.personal_propensity.sample(rng))
            elif pool == PROMOTED and rng.random() < profile.retention_open_prob:
                retention.add(app_id)
        inst.spans.append([install_time, None])
        return inst

    # initial inventory
    n_pre = int(np.clip(round(rng.normal(profile.preinstalled_mean, profile.preinstalled_sd)), 18, 45))
    core_level = float(profile.core_system_propensity.sample(rng))
    for app_id in catalog.core + (LAUNCHER,):
        add_app(app_id, PREINSTALLED, boot, boot + int(rng.integers(0, t0 - boot)))
        propensity[app_id] = core_level * float(rng.uniform(0.3, 1.0))
    propensity[LAUNCHER] = 0.0
    n_oem = max(0, n_pre - len(catalog.core) - 1)
    for j in rng.choice(len(catalog.oem), min(n_oem, len(catalog.oem)), replace=False):
        app_id = catalog.oem[int(j)]
        add_app(app_id, PREINSTALLED, boot, boot + int(rng.integers(0, t0 - boot)))
        propensity[app_id] = 0.02

    if profile.personal_initial is not None:
        for _ in range(profile.personal_initial.sample_int(rng)):
            app_id = catalog.pick_personal(rng, apps.keys())
            t = int(rng.integers(boot, t0 - 3600))
            inst = add_app(app_id, PERSONAL, t, int(rng.integers(t, t0)))
            inst.initially_stopped = propensity[app_id] == 0.0
    if profile.promoted_initial is not None:
        for _ in range(profile.promoted_initial.sample_int(rng)):
            app_id = catalog.pick_promoted(rng, apps.keys())
            age = min(float(rng.exponential(25.0)) * DAY, t0 - boot - 3600)
            t = int(t0 - 3600 - age)
            add_app(app_id, PROMOTED, t, stopped=bool(rng.random() < 0.7))

    # in-window install and uninstall events
    days = (t1 - t0) / DAY
    rate_i, rate_u = _daily_rates(rng, profile)
    kinds = [INSTALLED] * int(rng.poisson(rate_i * days)) + [UNINSTALLED] * int(rng.poisson(rate_u * days))
    times = sorted((_waking_time(rng, t0, t1, wake_offset), k) for k in kinds)
    events: list[tuple[int, str, str]] = []
    actions: list[Segment] = []
    sessions: list[Segment] = []
    installed = {a for a in apps}
    last_t = -1
    for t, kind in times:
        t = max(t, last_t + 90)  # one install/uninstall flow at a time
        if t >= t1 - 60:
            break
        if kind == INSTALLED:
            if rng.random() < profile.personal_install_share:
                app_id, pool = catalog.pick_personal(rng, installed), PERSONAL
            else:
                app_id, pool = catalog.pick_promoted(rng, installed), PROMOTED
            add_app(app_id, pool, t, t, stopped=True)
            installed.add(app_id)
            actions.append(Segment(t - int(rng.integers(15, 60)), t + 10, PLAY_STORE))
            if pool == PERSONAL and propensity[app_id] > 0 and rng.random() < 0.9:
                s = t + int(rng.integers(5, 60))
                sessions.append(Segment(s, s + int(profile.session_seconds.sample(rng)), app_id))
            elif pool == PROMOTED and rng.random() < profile.promoted_open_prob:
                s = t + int(rng.integers(5, 60))
                sessions.append(Segment(s, s + max(3, int(_BRIEF_OPEN.sample(rng))), app_id))
        else:
            user_apps = sorted(a for a in installed if apps[a].pool != PREINSTALLED)
            if not user_apps:
                continue
            app_id = user_apps[int(rng.integers(len(user_apps)))]
            apps[app_id].spans[-1][1] = t
            installed.discard(app_id)
            actions.append(Segment(t - int(rng.integers(5, 20)), t + 5, SETTINGS))
        events.append((t, kind, app_id))
        last_t = t

    # daily foreground sessions
    waking = _waking_intervals(t0, t1, wake_offset)
    for app_id in sorted(apps):
        inst = apps[app_id]
        p = propensity.get(app_id, 0.0)
        brief = app_id in retention
        if brief:
            p = 0.5
        if p <= 0:
            continue
        for a, b in waking:
            for s_t, u_t in inst.spans:
                lo, hi = max(a, s_t), min(b, u_t if u_t is not None else b)
                if lo >= hi or rng.random() >= p:
                    continue
                n = 1 if brief else 1 + int(rng.poisson(0.4))
                for _ in range(n):
                    s = int(rng.integers(lo, hi))
                    dur = int(_BRIEF_OPEN.sample(rng)) if brief else int(profile.session_seconds.sample(rng))
                    sessions.append(Segment(s, min(s + max(3, dur), hi), app_id))
    sessions = _clip_sessions(sessions, apps)
    actions.sort(key=lambda g: (g.start, g.end, g.app_id))

    reviews = _plan_reviews(rng, profile, catalog, apps, gmail, t0, config.crawl_time)

    return DevicePlan(
        index=index,
        device_id=f"dev{index:05d}",
        cls=cls,
        participant_id=participant_id,
        android_id=android_id,
        t_start=t0,
        t_end=t1,
        accounts=accounts,
        gmail=gmail,
        apps=apps,
        events=events,
        sessions=sessions,
        actions=actions,
        reviews=reviews,
        installs=[CollectorInstall(install_id, participant_id, android_id, t0, t1)],
        battery_period=int(rng.integers(int(0.8 * DAY), int(2.0 * DAY))),
        battery_phase=int(rng.integers(0, int(DAY))),
        fast_phase=int(rng.integers(0, FAST_PERIOD)),
    )


def _clip_sessions(sessions: list[Segment], apps: dict[str, AppInstance]) -> list[Segment]:
    """Cut each session at the uninstall of its app; drop sessions outside any install span."""
    out = []
    for g in sessions:
        for s_t, u_t in apps[g.app_id].spans:
            if s_t <= g.start and (u_t is None or g.start < u_t):
                end = g.end if u_t is None else min(g.end, u_t)
                if end > g.start:
                    out.append(Segment(g.start, end, g.app_id))
                break
    out.sort(key=lambda g: (g.start, g.end, g.app_id))
    return out


def _daily_rates(rng: np.random.Generator, profile: BehaviorProfile) -> tuple[float, float]:
    z1 = rng.standard_normal()
    rho = profile.install_uninstall_corr
    z2 = rho * z1 + math.sqrt(1 - rho * rho) * rng.standard_normal()
    out = []
    for dist, z in ((profile.daily_installs, z1), (profile.daily_uninstalls, z2)):
        x = math.exp(dist.mu + dist.sigma * z)
        out.append(min(x, dist.cap) if dist.cap is not None else x)
    return out[0], out[1]


def _rating(rng: np.random.Generator, intent: str) -> int:
    if intent == PROMOTION:
        return 5 if rng.random() < 0.85 else 4
    return int(rng.choice(5, p=(0.08, 0.07, 0.12, 0.28, 0.45))) + 1


def _plan_reviews(rng, profile: BehaviorProfile, catalog: Catalog, apps: dict[str, AppInstance],
                  gmail: tuple[str, ...], t0: int, crawl_time: int) -> list[ReviewRecord]:
    reviews: list[ReviewRecord] = []
    seen: set[tuple[str, str]] = set()  # one review per (account, app)

    def post(app_id: str, account: str, t: int, intent: str) -> None:
        if (account, app_id) in seen or t > crawl_time:
            return
        seen.add((account, app_id))
        reviews.append(ReviewRecord(app_id, account, _rating(rng, intent), int(t)))

    for app_id in sorted(apps):
        inst = apps[app_id]
        if inst.pool == PREINSTALLED:
            continue
        for install_time, _ in inst.spans:
            if inst.pool == PROMOTED:
                if rng.random() >= profile.promo_review_prob:
                    continue
                k = 1 + int(rng.binomial(len(gmail) - 1, profile.reviewer_share))
                chosen = rng.choice(len(gmail), k, replace=False)
                delays = profile.promotion_delay.sample_seconds(rng, k)
                for j, d in zip(chosen, delays):
                    post(app_id, gmail[int(j)], install_time + int(d), PROMOTION)
            elif rng.random() < profile.personal_review_prob:
                d = profile.personal_delay.sample_seconds(rng, 1)[0]
                post(app_id, gmail[int(rng.integers(len(gmail)))], install_time + int(d), INTENT_PERSONAL)

    # reviews for apps that were never observed on the device
    for _ in range(profile.historical_reviews.sample(rng)):
        if profile.promo_review_prob > 0:
            app_id = catalog.pick_promoted(rng, apps.keys())
        else:
            app_id = catalog.pick_personal(rng, apps.keys())
        t = t0 - int(rng.uniform(1, 730) * DAY)
        post(app_id, gmail[int(rng.integers(len(gmail)))], t, PROMOTION if profile.promo_review_prob > 0 else INTENT_PERSONAL)

    reviews.sort(key=lambda r: (r.review_time, r.account_name, r.app_id))
    return reviews


def generate_fleet(config: FleetConfig) -> Fleet:
    """Plan every device of the fleet; snapshots are rendered lazily."""
    profiles = build_profiles({k: dict(v) for k, v in config.profile_overrides.items()})
    catalog = build_catalog(config.seed)
    classes = _device_classes(config)
    id_rng = np.random.default_rng([config.seed, 0x1D5])
    n = len(classes)
    install_ids = unique_digits(id_rng, n, 10)
    participant_ids = unique_digits(id_rng, n, 6)
    android_ids = [f"{int(x):016x}" for x in id_rng.integers(0, 2**63, n)]
    plans = [
        plan_device(i, classes[i], (install_ids[i], participant_ids[i], android_ids[i]), config, catalog, profiles)
        for i in range(n)
    ]
    return Fleet(config, catalog, profiles, plans)


# ---------------------------------------------------------------------------
# rendering


def _merge(intervals: list[tuple[int, int]], gap: int) -> list[tuple[int, int]]:
    out: list[list[int]] = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1] + gap:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def screen_intervals(plan: DevicePlan) -> list[tuple[int, int]]:
    return _merge([(g.start, g.end) for g in plan.sessions + plan.actions], SCREEN_MERGE_GAP)


def _battery(plan: DevicePlan, t: np.ndarray) -> np.ndarray:
    frac = ((t + plan.battery_phase) % plan.battery_period) / plan.battery_period
    return (100 - np.floor(frac * 88)).astype(np.int64)


def _state_at(plan: DevicePlan, t: int) -> dict[str, int]:
    """app_id -> install_time for apps installed at time ``t``."""
    out = {}
    for app_id, inst in plan.apps.items():
        for s, u in inst.spans:
            if s <= t and (u is None or u > t):
                out[app_id] = s
    return out


def _delta(plan: DevicePlan, app_id: str, install_time: int | None, catalog: Catalog) -> InstallDelta:
    if install_time is None:
        return InstallDelta(app_id, UNINSTALLED)
    inst = plan.apps[app_id]
    first_install = inst.spans[0][0]
    last_update = inst.last_update_time if install_time == first_install else install_time
    return InstallDelta(app_id, INSTALLED, install_time, max(last_update, install_time),
                        inst.permissions, catalog.apps[app_id].apk_hash)


def _stopped_changes(plan: DevicePlan) -> list[tuple[int, int, str]]:
    """(time, op, app) with op 1 = enters stopped state, 0 = leaves it (launch or uninstall)."""
    changes = []
    for app_id, inst in plan.apps.items():
        if inst.pool == PREINSTALLED:
            continue
        for k, (s, u) in enumerate(inst.spans):
            if k == 0 and s < plan.t_start:
                if inst.initially_stopped:
                    changes.append((s, 1, app_id))
            else:
                changes.append((s, 1, app_id))
            if u is not None:
                changes.append((u, 0, app_id))
    for g in plan.sessions:
        changes.append((g.start, 0, g.app_id))
    changes.sort()
    return changes


def render_device(plan: DevicePlan, catalog: Catalog, config: FleetConfig) -> dict[str, list]:
    """Snapshot records per install_id, each list ordered by timestamp."""
    rng = np.random.default_rng([config.seed, plan.index, 1])
    screen = screen_intervals(plan)
    s_starts = np.array([a for a, _ in screen], dtype=np.int64)
    s_ends = np.array([b for _, b in screen], dtype=np.int64)
    stopped_changes = _stopped_changes(plan)
    out: dict[str, list] = {}
    for inst in plan.installs:
        fast = _render_fast(plan, inst, catalog, config, rng, screen)
        slow = _render_slow(plan, inst, config, rng, s_starts, s_ends, stopped_changes)
        merged = sorted(fast + slow, key=lambda r: (r.timestamp, r.kind))
        out[inst.install_id] = merged
    return out


def _render_fast(plan: DevicePlan, inst: CollectorInstall, catalog: Catalog, config: FleetConfig,
                 rng: np.random.Generator, screen: list[tuple[int, int]]) -> list[FastSnapshot]:
    s, e = inst.start, inst.end
    chunks = []
    for a, b in screen:
        a, b = max(a, s), min(b, e)
        if a > b:
            continue
        first = a + ((plan.fast_phase - a) % FAST_PERIOD)
        if first <= b:
            chunks.append(np.arange(first, b + 1, FAST_PERIOD, dtype=np.int64))
    grid = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    grid = grid[(grid > s) & (grid < e)]
    times = np.concatenate(([s], grid, [e]))
    screen_on = np.ones(len(times), dtype=bool)
    screen_on[0] = screen_on[-1] = False

    # foreground app: actions override sessions, later sessions override earlier ones
    labels = np.full(len(times), -1, dtype=np.int64)
    names: list[str] = [LAUNCHER]
    index: dict[str, int] = {LAUNCHER: 0}
    labels[screen_on] = 0
    for g in plan.sessions + plan.actions:
        lo = np.searchsorted(times, g.start, "left")
        hi = np.searchsorted(times, g.end, "left")
        if lo < hi:
            k = index.setdefault(g.app_id, len(names))
            if k == len(names):
                names.append(g.app_id)
            sl = slice(lo, hi)
            labels[sl] = np.where(screen_on[sl], k, labels[sl])

    # forced first/last snapshots reflect whatever is on screen, if anything
    for pos in (0, len(times) - 1):
        t = int(times[pos])
        j = np.searchsorted(np.array([a for a, _ in screen]), t, "right") - 1 if screen else -1
        if j >= 0 and screen[j][1] >= t:
            screen_on[pos] = True
            labels[pos] = 0
            for g in plan.sessions + plan.actions:
                if g.start <= t < g.end:
                    k = index.setdefault(g.app_id, len(names))
                    if k == len(names):
                        names.append(g.app_id)
                    labels[pos] = k

    keep = rng.random(len(times)) >= config.dropout
    keep[0] = keep[-1] = True
    times, labels, screen_on = times[keep], labels[keep], screen_on[keep]
    battery = _battery(plan, times)

    # install deltas: diff of the installed set against the last reported one
    events = [ev for ev in plan.events if s < ev[0] <= e]
    current = _state_at(plan, s)
    reported: dict[str, int] = {}
    ei = 0
    out = []
    for pos in range(len(times)):
        t = int(times[pos])
        touched: list[str] = []
        if pos == 0:
            touched = sorted(current)
        while ei < len(events) and events[ei][0] <= t:
            _, kind, app_id = events[ei]
            if kind == INSTALLED:
                current[app_id] = events[ei][0]
            else:
                current.pop(app_id, None)
            if app_id not in touched:
                touched.append(app_id)
            ei += 1
        deltas = []
        for app_id in touched:
            before, now = reported.get(app_id), current.get(app_id)
            if before == now:
                continue
            if before is not None:
                deltas.append(_delta(plan, app_id, None, catalog))
            if now is not None:
                deltas.append(_delta(plan, app_id, now, catalog))
            if now is None:
                reported.pop(app_id, None)
            else:
                reported[app_id] = now
        lab = int(labels[pos])
        out.append(FastSnapshot(
            install_id=inst.install_id,
            participant_id=inst.participant_id,
            timestamp=t,
            foreground_app=names[lab] if lab >= 0 else None,
            screen_on=bool(screen_on[pos]),
            battery_level=int(battery[pos]),
            install_events=tuple(deltas),
        ))
    return out


def _render_slow(plan: DevicePlan, inst: CollectorInstall, config: FleetConfig, rng: np.random.Generator,
                 s_starts: np.ndarray, s_ends: np.ndarray,
                 stopped_changes: list[tuple[int, int, str]]) -> list[SlowSnapshot]:
    s, e = inst.start, inst.end
    ticks = np.append(np.arange(s, e, SLOW_PERIOD, dtype=np.int64), e)
    k = np.arange(len(ticks))
    j = np.searchsorted(s_starts, ticks, "right") - 1
    active = (j >= 0) & (s_ends[np.maximum(j, 0)] > ticks - SLOW_PERIOD)
    fire = active | (k % IDLE_SLOW_EVERY == 0)
    fire &= rng.random(len(ticks)) >= config.dropout
    fire[0] = fire[-1] = True
    ticks = ticks[fire]
    battery = _battery(plan, ticks)

    stopped: set[str] = set()
    ci = 0
    cached: tuple[str, ...] = ()
    dirty = True
    out = []
    for pos, t in enumerate(ticks.tolist()):
        while ci < len(stopped_changes) and stopped_changes[ci][0] <= t:
            _, op, app_id = stopped_changes[ci]
            if op:
                stopped.add(app_id)
            else:
                stopped.discard(app_id)
            dirty = True
            ci += 1
        if dirty:
            cached = tuple(sorted(stopped))
            dirty = False
        out.append(SlowSnapshot(
            install_id=inst.install_id,
            participant_id=inst.participant_id,
            android_id=inst.android_id,
            timestamp=t,
            registered_accounts=plan.accounts,
            save_mode=bool(battery[pos] < 15),
            stopped_apps=cached,
        ))
    return out
