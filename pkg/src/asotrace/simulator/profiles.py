"""Behaviour profiles for the three participant classes.

Defaults are pinned to published population statistics of ASO worker and
regular-user devices; ``docs/simulator_config.md`` lists every parameter with
its source value. Parameters without a published counterpart are marked
"calibrated" there.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Any

from .distributions import Beta, LogNormal, PoissonLogNormal, ReviewDelay

WORKER_DEDICATED = "worker_dedicated"
WORKER_ORGANIC = "worker_organic"
REGULAR = "regular"
CLASSES = (WORKER_DEDICATED, WORKER_ORGANIC, REGULAR)

# daily install/uninstall rates are capped; no maximum is published
MAX_DAILY_EVENTS = 150.0

WORKER_ACCOUNT_TYPES = (
    "com.lbe.parallel.dualspace",
    "com.freelancer.android",
    "com.whatsapp",
    "com.facebook.auth.login",
    "com.imo.android",
    "org.telegram.messenger",
)
REGULAR_ACCOUNT_TYPES = (
    "com.facebook.auth.login",
    "com.whatsapp",
    "org.telegram.messenger",
    "com.instagram.android",
    "com.twitter.android.auth.login",
    "com.linkedin.android",
    "com.skype.contacts.sync",
    "com.viber.voip",
    "com.imo.android",
    "com.snapchat.android",
    "com.microsoft.office",
    "com.truecaller",
    "com.samsung.android.mobileservice",
    "com.spotify.music",
    "com.amazon.mShop",
    "com.dropbox.android.account",
    "com.paytm",
    "com.pinterest",
    "com.tencent.mm",
)


@dataclass(frozen=True)
class BehaviorProfile:
    name: str
    gmail_accounts: LogNormal
    gmail_cap: int
    other_account_types: tuple[str, ...]
    other_type_prob: float
    preinstalled_mean: float
    preinstalled_sd: float
    personal_initial: LogNormal | None
    promoted_initial: LogNormal | None
    daily_installs: LogNormal
    daily_uninstalls: LogNormal
    install_uninstall_corr: float
    personal_install_share: float  # share of in-window installs that are personal apps
    promotion_delay: ReviewDelay
    personal_delay: ReviewDelay
    promo_review_prob: float
    reviewer_share: float  # each extra Gmail account joins a promoted-app review with this probability
    personal_review_prob: float
    historical_reviews: PoissonLogNormal
    personal_propensity: Beta
    core_system_propensity: Beta
    session_seconds: LogNormal
    promoted_open_prob: float
    retention_open_prob: float
    grant_all: bool
    deny_dangerous_prob: float
    never_opened_share: float  # personal apps left in stopped state since install

    def with_overrides(self, overrides: dict[str, Any]) -> "BehaviorProfile":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown profile parameters for {self.name}: {sorted(unknown)}")
        converted = {}
        for key, value in overrides.items():
            current = getattr(self, key)
            if isinstance(current, LogNormal) and isinstance(value, dict):
                value = LogNormal.fit(value["mean"], value["median"], value.get("cap", current.cap))
            elif isinstance(current, PoissonLogNormal) and isinstance(value, dict):
                value = PoissonLogNormal.fit(value["mean"], value["median"], value.get("cap"))
            elif isinstance(current, ReviewDelay) and isinstance(value, dict):
                value = ReviewDelay.fit(value["mean_days"], value["median_days"], value["quick"], value["cap_days"])
            elif isinstance(current, Beta) and isinstance(value, dict):
                value = Beta(value["a"], value["b"])
            converted[key] = value
        return replace(self, **converted)


# Install-to-review: workers mean 10.4 d, median 5.00 d, 13,376/40,397 within a day,
# max 574 d; regular users mean 85.09 d, median 21.92 d, 4/35 within a day, max 606.11 d.
WORKER_DELAY = ReviewDelay.fit(10.4, 5.00, 13376 / 40397, 574.0)
REGULAR_DELAY = ReviewDelay.fit(85.09, 21.92, 4 / 35, 606.11)

# Churn: workers 15.94 (M 6.41) installs, 7.02 (M 2.73) uninstalls per day;
# regular 3.88 (M 2.0) installs, 3.29 (M 1.8) uninstalls per day.
WORKER_INSTALLS = LogNormal.fit(15.94, 6.41, MAX_DAILY_EVENTS)
WORKER_UNINSTALLS = LogNormal.fit(7.02, 2.73, MAX_DAILY_EVENTS)
REGULAR_INSTALLS = LogNormal.fit(3.88, 2.0, MAX_DAILY_EVENTS)
REGULAR_UNINSTALLS = LogNormal.fit(3.29, 1.8, MAX_DAILY_EVENTS)

# per-waking-day chance of opening a personal app; most installed apps are used rarely
PERSONAL_USE = Beta(0.7, 1.3)
_SESSION = LogNormal.fit(90.0, 50.0, 3600.0)


def _worker_common(**kw) -> dict:
    base = dict(
        other_account_types=WORKER_ACCOUNT_TYPES,
        other_type_prob=0.3,
        preinstalled_mean=30.0,
        preinstalled_sd=4.0,
        daily_installs=WORKER_INSTALLS,
        daily_uninstalls=WORKER_UNINSTALLS,
        install_uninstall_corr=0.8,
        promotion_delay=WORKER_DELAY,
        personal_delay=REGULAR_DELAY,
        promo_review_prob=0.8,
        personal_review_prob=0.011,
        personal_propensity=PERSONAL_USE,
        session_seconds=_SESSION,
        promoted_open_prob=0.35,
        retention_open_prob=0.08,
        grant_all=True,
        deny_dangerous_prob=0.0,
        never_opened_share=0.02,
    )
    base.update(kw)
    return base


DEFAULT_PROFILES: dict[str, BehaviorProfile] = {
    # 55 of 178 worker devices: median 31 Gmail accounts (mean 37.18, max 114)
    WORKER_DEDICATED: BehaviorProfile(
        name=WORKER_DEDICATED,
        gmail_accounts=LogNormal.fit(37.18, 31.0, 114.0),
        gmail_cap=114,
        personal_initial=None,
        promoted_initial=LogNormal.fit(40.0, 24.0, 300.0),
        personal_install_share=0.0,
        reviewer_share=0.032,
        historical_reviews=PoissonLogNormal.fit(25.0, 10.0, 3000.0),
        core_system_propensity=Beta(1.0, 4.0),
        **_worker_common(),
    ),
    # organic share chosen so the all-worker mean is 28.87 Gmail accounts (max 163)
    WORKER_ORGANIC: BehaviorProfile(
        name=WORKER_ORGANIC,
        gmail_accounts=LogNormal.fit(25.15, 17.0, 163.0),
        gmail_cap=163,
        personal_initial=LogNormal.fit(22.0, 13.0, 200.0),
        promoted_initial=LogNormal.fit(17.0, 8.0, 300.0),
        personal_install_share=0.2,
        reviewer_share=0.032,
        historical_reviews=PoissonLogNormal.fit(25.0, 10.0, 3000.0),
        core_system_propensity=Beta(5.0, 1.0),
        **_worker_common(),
    ),
    # regular devices: at most 10 Gmail accounts, median 2
    REGULAR: BehaviorProfile(
        name=REGULAR,
        gmail_accounts=LogNormal(mu=0.6931471805599453, sigma=0.6, cap=10.0, floor=1.0),
        gmail_cap=10,
        other_account_types=REGULAR_ACCOUNT_TYPES,
        other_type_prob=0.26,
        preinstalled_mean=30.0,
        preinstalled_sd=4.0,
        personal_initial=LogNormal.fit(36.0, 34.0, 200.0),
        promoted_initial=None,
        daily_installs=REGULAR_INSTALLS,
        daily_uninstalls=REGULAR_UNINSTALLS,
        install_uninstall_corr=0.8,
        personal_install_share=1.0,
        promotion_delay=WORKER_DELAY,
        personal_delay=REGULAR_DELAY,
        promo_review_prob=0.0,
        reviewer_share=0.0,
        personal_review_prob=0.011,
        historical_reviews=PoissonLogNormal.fit(1.2, 0.5, 36.0),
        personal_propensity=PERSONAL_USE,
        core_system_propensity=Beta(5.0, 1.0),
        session_seconds=_SESSION,
        promoted_open_prob=0.0,
        retention_open_prob=0.0,
        grant_all=False,
        deny_dangerous_prob=0.15,
        never_opened_share=0.02,
    ),
}


def build_profiles(overrides: dict[str, dict[str, Any]] | None = None) -> dict[str, BehaviorProfile]:
    profiles = dict(DEFAULT_PROFILES)
    for name, params in (overrides or {}).items():
        if name not in profiles:
            raise ValueError(f"unknown profile {name!r}")
        profiles[name] = profiles[name].with_overrides(params)
    return profiles
