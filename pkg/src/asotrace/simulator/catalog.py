"""Synthetic app universe shared by every device of a fleet.

Three pools: preinstalled system apps (a core set present on every device plus
OEM extras), Play apps installed for personal use (popularity follows a Zipf
law), and apps advertised for promotion on worker boards.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..records import DANGEROUS, NORMAL, AppMetadata

CORE_SYSTEM_APPS = (
    "com.android.vending",
    "com.google.android.gm",
    "com.google.android.apps.maps",
    "com.android.chrome",
    "com.google.android.youtube",
    "com.google.android.apps.photos",
    "com.google.android.dialer",
    "com.google.android.apps.messaging",
    "com.android.camera2",
    "com.android.settings",
    "com.google.android.calendar",
    "com.google.android.contacts",
)
LAUNCHER = "com.android.launcher3"
PLAY_STORE = "com.android.vending"
SETTINGS = "com.android.settings"

NORMAL_PERMISSIONS = tuple(
    f"android.permission.{n}"
    for n in (
        "INTERNET", "ACCESS_NETWORK_STATE", "ACCESS_WIFI_STATE", "WAKE_LOCK", "VIBRATE",
        "RECEIVE_BOOT_COMPLETED", "FOREGROUND_SERVICE", "CHANGE_WIFI_STATE", "BLUETOOTH",
        "NFC", "SET_WALLPAPER", "EXPAND_STATUS_BAR", "REQUEST_INSTALL_PACKAGES",
        "USE_FINGERPRINT", "KILL_BACKGROUND_PROCESSES", "MODIFY_AUDIO_SETTINGS",
        "SET_ALARM", "TRANSMIT_IR", "BROADCAST_STICKY", "CHANGE_NETWORK_STATE",
        "DISABLE_KEYGUARD", "GET_PACKAGE_SIZE", "REORDER_TASKS", "INSTALL_SHORTCUT",
    )
)
DANGEROUS_PERMISSIONS = tuple(
    f"android.permission.{n}"
    for n in (
        "CAMERA", "RECORD_AUDIO", "ACCESS_FINE_LOCATION", "ACCESS_COARSE_LOCATION",
        "READ_CONTACTS", "WRITE_CONTACTS", "GET_ACCOUNTS", "READ_PHONE_STATE", "CALL_PHONE",
        "READ_CALL_LOG", "SEND_SMS", "RECEIVE_SMS", "READ_SMS", "READ_EXTERNAL_STORAGE",
        "WRITE_EXTERNAL_STORAGE", "READ_CALENDAR", "WRITE_CALENDAR", "BODY_SENSORS",
        "ACTIVITY_RECOGNITION", "ACCESS_MEDIA_LOCATION",
    )
)

PREINSTALLED = "preinstalled"
PERSONAL = "personal"
PROMOTED = "promoted"


@dataclass(frozen=True)
class AppSpec:
    app_id: str
    pool: str
    permissions: tuple[tuple[str, str], ...]  # (name, level)
    apk_hash: str
    metadata: AppMetadata


@dataclass
class Catalog:
    apps: dict[str, AppSpec]
    core: tuple[str, ...]
    oem: tuple[str, ...]
    personal: tuple[str, ...]
    personal_cdf: np.ndarray
    promoted: tuple[str, ...]
    promoted_cdf: np.ndarray

    def metadata(self) -> list[AppMetadata]:
        return [self.apps[a].metadata for a in sorted(self.apps)]

    def pick_personal(self, rng: np.random.Generator, exclude: set[str]) -> str:
        return _pick(rng, self.personal, self.personal_cdf, exclude)

    def pick_promoted(self, rng: np.random.Generator, exclude: set[str]) -> str:
        return _pick(rng, self.promoted, self.promoted_cdf, exclude)


def _pick(rng: np.random.Generator, pool: tuple[str, ...], cdf: np.ndarray, exclude: set[str]) -> str:
    for _ in range(64):
        app = pool[int(np.searchsorted(cdf, rng.random(), side="right"))]
        if app not in exclude:
            return app
    # dense exclusion: fall back to a uniform scan from a random offset
    start = int(rng.integers(len(pool)))
    for i in range(len(pool)):
        app = pool[(start + i) % len(pool)]
        if app not in exclude:
            return app
    raise RuntimeError("app pool exhausted")


def _apk_hash(app_id: str) -> str:
    return hashlib.md5(app_id.encode()).hexdigest()


def _permissions(rng: np.random.Generator, normal_mean: float, dangerous_mean: float) -> tuple[tuple[str, str], ...]:
    n_norm = min(len(NORMAL_PERMISSIONS), 1 + int(rng.poisson(normal_mean)))
    n_dang = min(len(DANGEROUS_PERMISSIONS), int(rng.poisson(dangerous_mean)))
    norm = rng.choice(len(NORMAL_PERMISSIONS), n_norm, replace=False)
    dang = rng.choice(len(DANGEROUS_PERMISSIONS), n_dang, replace=False)
    perms = [(NORMAL_PERMISSIONS[i], NORMAL) for i in sorted(norm)]
    perms += [(DANGEROUS_PERMISSIONS[i], DANGEROUS) for i in sorted(dang)]
    return tuple(perms)


def _cdf(weights: np.ndarray) -> np.ndarray:
    c = np.cumsum(weights / weights.sum())
    c[-1] = 1.0
    return c


def build_catalog(seed: int, n_personal: int = 5000, n_promoted: int = 3000, n_oem: int = 80) -> Catalog:
    rng = np.random.default_rng([seed, 0xCA7A])
    apps: dict[str, AppSpec] = {}

    def add(app_id: str, pool: str, perms, **meta) -> None:
        apps[app_id] = AppSpec(app_id, pool, perms, _apk_hash(app_id), AppMetadata(app_id=app_id, **meta))

    for app_id in CORE_SYSTEM_APPS + (LAUNCHER,):
        add(app_id, PREINSTALLED, _permissions(rng, 8, 4), preinstalled=True,
            play_review_count=int(rng.integers(1_000_000, 50_000_000)))
    oem = tuple(f"com.oem.system.svc{i:03d}" for i in range(n_oem))
    for app_id in oem:
        add(app_id, PREINSTALLED, _permissions(rng, 4, 1), preinstalled=True)

    # personal and promoted apps share one neutral namespace so identifiers carry no label
    idx = rng.permutation(n_personal + n_promoted)
    names = [f"com.store.app{i:05d}" for i in idx]
    personal = tuple(names[:n_personal])
    promoted = tuple(names[n_personal:])

    ranks = np.arange(1, n_personal + 1, dtype=float)
    personal_weights = ranks ** -0.9
    for rank, app_id in enumerate(personal, 1):
        # review volume tracks popularity with heavy noise
        reviews = int(np.exp(rng.normal(13.0 - 0.55 * np.log(rank), 1.3)))
        add(app_id, PERSONAL, _permissions(rng, 6, 3),
            vt_flag_count=int(rng.integers(1, 4)) if rng.random() < 0.04 else 0,
            advertised=bool(rng.random() < 0.005),
            play_review_count=reviews)

    promoted_weights = rng.lognormal(0.0, 0.8, n_promoted)
    for app_id in promoted:
        flagged = rng.random() < 0.10
        add(app_id, PROMOTED, _permissions(rng, 6, 3),
            vt_flag_count=int(rng.integers(1, 25)) if flagged else 0,
            advertised=bool(rng.random() < 0.85),
            play_review_count=int(np.exp(rng.normal(5.5, 1.5))))

    return Catalog(
        apps=apps,
        core=CORE_SYSTEM_APPS,
        oem=oem,
        personal=personal,
        personal_cdf=_cdf(personal_weights),
        promoted=promoted,
        promoted_cdf=_cdf(promoted_weights),
    )
