import statistics

import pytest

from asotrace.features import (
    APP_FEATURES,
    DEVICE_FEATURES,
    InsufficientDataError,
    DeviceView,
    ReviewIndex,
    extract_app_features,
    extract_device_app_features,
    extract_device_features,
    install_to_review_times,
    scan_device,
)
from asotrace.records import (
    DANGEROUS,
    GMAIL_ACCOUNT_TYPE,
    INSTALLED,
    NORMAL,
    AppMetadata,
    FastSnapshot,
    ReviewRecord,
    SlowSnapshot,
)
from asotrace.simulator.faults import FaultSchedule, inject_faults

from helpers import DAY, fast, installed, slow, uninstalled

S = 10 * DAY  # fixture start
T_END = S + 3 * DAY


def review(app, account, t, rating=5):
    return ReviewRecord(app, account, rating, t)


def device(extra_fast=(), accounts=(("a@gmail.com", GMAIL_ACCOUNT_TYPE),), stopped=(), first_events=()):
    """Three days of snapshots; ``extra_fast`` adds fast snapshots in between."""
    recs = [slow(S, accounts=accounts, stopped=stopped), fast(S, events=first_events),
            *extra_fast, slow(T_END, accounts=accounts, stopped=stopped), fast(T_END)]
    recs.sort(key=lambda r: r.timestamp)
    return DeviceView("dev", recs)


def features_of(view, reviews=(), metadata=None, app=None):
    scan, apps = extract_device_app_features(view, ReviewIndex(reviews), metadata or {})
    by_id = {a.app_id: a for a in apps}
    return scan, apps, (by_id[app].features if app else None)


# ---------------------------------------------------------------------------
# install-to-review


def test_install_to_review_examples():
    assert install_to_review_times(100, [review("x", "a", 200)]) == [100]
    assert install_to_review_times(100, [review("x", "a", 50)]) == []
    assert install_to_review_times(None, [review("x", "a", 200)]) == []


def test_install_to_review_three_accounts_brute_force():
    reviews = [review("x", f"acc{i}", t) for i, t in enumerate((150, 400, 90_000))]
    reviews.append(review("x", "acc3", 20))
    got = install_to_review_times(100, reviews)
    expected = [r.review_time - 100 for a in ("acc0", "acc1", "acc2", "acc3")
                for r in reviews if r.account_name == a and r.review_time - 100 >= 0]
    assert sorted(got) == sorted(expected) == [50, 300, 89_900]


# ---------------------------------------------------------------------------
# scripted fixtures


def test_promoted_app_reviewed_by_thirty_accounts():
    accounts = tuple((f"w{i}@gmail.com", GMAIL_ACCOUNT_TYPE) for i in range(30))
    t0 = S + 1000
    view = device([fast(t0, events=[installed("com.promo", t0)])], accounts=accounts)
    reviews = [review("com.promo", name, t0 + DAY) for name, _ in accounts]
    _, _, f = features_of(view, reviews, app="com.promo")
    assert f["f4_opened_multiple_days"] == 0 and f["f5_foreground_snaps_per_day"] == 0
    assert (f["f1_reviews_before"], f["f1_reviews_during"], f["f1_reviews_after"]) == (0, 30, 0)
    assert f["f2_install_to_review_mean"] == pytest.approx(86_400)
    assert f["f3_inter_review_max"] == 0
    assert f["f11_installs"] == 1 and f["f7_installed_after"] == 1 and f["f7_installed_before"] == 0
    assert f["f7_inner_retention"] == T_END - t0


def test_app_opened_daily_never_reviewed():
    opens = [fast(S + d * DAY + 3600, foreground="com.daily") for d in range(3)]
    view = device(opens, first_events=[installed("com.daily", 10)])
    _, _, f = features_of(view, app="com.daily")
    assert f["f4_opened_multiple_days"] == 1
    assert f["f5_foreground_snaps_per_day"] == pytest.approx(1.0)
    assert f["f1_reviews_before"] == f["f1_reviews_during"] == f["f1_reviews_after"] == 0
    assert all(f[f"f2_install_to_review_{s}"] is None for s in ("min", "mean", "median", "max"))
    assert f["f7_installed_before"] == 1 and f["f7_inner_retention"] == 3 * DAY


def test_permission_counts():
    perms = [(f"p{i}", DANGEROUS if i < 5 else NORMAL, True) for i in range(12)]
    view = device(first_events=[installed("com.perm", 10, perms)])
    _, _, f = features_of(view, app="com.perm")
    assert (f["f8_normal_perms"], f["f8_dangerous_perms"]) == (7, 5)
    assert (f["f9_granted"], f["f9_denied"]) == (12, 0)


def test_latest_grant_status_wins():
    first = installed("com.perm", 10, [("cam", DANGEROUS, False)])
    later = installed("com.perm", 10, [("cam", DANGEROUS, True)])
    view = device([fast(S + DAY, events=[later])], first_events=[first])
    _, _, f = features_of(view, app="com.perm")
    assert (f["f9_granted"], f["f9_denied"]) == (1, 0)


def test_review_phases_and_reinstall():
    events = [installed("com.x", S + 10)]
    extra = [fast(S + DAY, events=[uninstalled("com.x")]),
             fast(S + 2 * DAY, events=[installed("com.x", S + 2 * DAY)])]
    view = device(extra, first_events=events)
    reviews = [review("com.x", "a@gmail.com", 5), review("com.x", "a@gmail.com", S + 2 * DAY + 60),
               review("com.x", "a@gmail.com", T_END + 5), review("com.y", "other", 100)]
    _, _, f = features_of(view, reviews, app="com.x")
    assert (f["f1_reviews_before"], f["f1_reviews_during"], f["f1_reviews_after"]) == (1, 1, 1)
    assert f["f2_install_to_review_min"] == 60  # measured from the last install
    assert (f["f11_installs"], f["f11_uninstalls"]) == (2, 1)
    assert f["f7_inner_retention"] == (DAY - 10) + DAY


def test_device_fixture_counts():
    accounts = tuple((f"g{i}@gmail.com", GMAIL_ACCOUNT_TYPE) for i in range(31)) + (("x", "com.whatsapp"),)
    apps = [installed(f"app.{i}", 10) for i in range(40)]
    view = device(accounts=accounts, stopped=tuple(f"app.{i}" for i in range(23)), first_events=apps)
    reviews = [review(f"app.{i}", f"g{i}@gmail.com", S + DAY) for i in range(16)]
    reviews += [review("not.installed", "g0@gmail.com", S + DAY + i) for i in range(3)]
    index = ReviewIndex(reviews)
    scan, inst = extract_device_app_features(view, index, {})
    everything = extract_device_features(scan, inst, index, {}, lambda xs: [1] * len(xs)).features
    nothing = extract_device_features(scan, inst, index, {}, lambda xs: [0] * len(xs)).features
    assert everything["d2_suspiciousness"] == 1.0 and nothing["d2_suspiciousness"] == 0.0
    assert (everything["d5_gmail"], everything["d5_non_gmail"], everything["d5_account_types"]) == (31, 1, 2)
    assert everything["d3_stopped"] == 23
    assert everything["d6_installed_and_reviewed"] == 16
    assert everything["d7_total_reviewed"] == 19
    assert everything["d1_preinstalled"] + everything["d1_user_installed"] == 40


def test_preinstalled_split_uses_metadata():
    view = device(first_events=[installed("sys.a", 1), installed("user.b", 5)])
    meta = {"sys.a": AppMetadata("sys.a", preinstalled=True)}
    index = ReviewIndex([])
    scan, inst = extract_device_app_features(view, index, meta)
    feats = extract_device_features(scan, inst, index, meta).features
    assert (feats["d1_preinstalled"], feats["d1_user_installed"]) == (1, 1)
    assert feats["d2_suspiciousness"] is None


def test_insufficient_data():
    short = DeviceView("dev", [slow(S), fast(S), slow(S + DAY), fast(S + DAY)])
    with pytest.raises(InsufficientDataError):
        extract_device_app_features(short, ReviewIndex([]), {})
    no_fast = DeviceView("dev", [slow(S), slow(S + 3 * DAY)])
    with pytest.raises(InsufficientDataError):
        no_fast.check_window()
    with pytest.raises(InsufficientDataError):
        DeviceView("dev", [])


# ---------------------------------------------------------------------------
# brute-force oracle over simulator devices


def oracle_app(records, app, reviews, crawl, metadata):
    """Recompute one app's features from the raw stream, with no shared state between apps."""
    t_f = min(r.timestamp for r in records)
    t_l = max(r.timestamp for r in records)
    days = (t_l - t_f) / DAY
    fasts = [r for r in records if isinstance(r, FastSnapshot)]
    deltas = [(r.timestamp, d) for r in fasts for d in r.install_events if d.app_id == app]
    install_times = {d.install_time for _, d in deltas if d.kind == INSTALLED}
    latest = [d for _, d in deltas if d.kind == INSTALLED][-1]

    intervals, start, cur, prev, seen = [], None, None, None, set()
    before = None
    for r in fasts:
        if r.install_id not in seen:
            seen.add(r.install_id)
            inv = {d.app_id for d in r.install_events if d.kind == INSTALLED}
            if start is not None and app not in inv:
                intervals.append((start, max(prev if prev is not None else r.timestamp, start)))
                start = cur = None
        for d in r.install_events:
            if d.app_id != app:
                continue
            if d.kind == INSTALLED:
                if start is not None and cur != d.install_time:
                    intervals.append((start, max(d.install_time, start)))
                    start = None
                if start is None:
                    start, cur = d.install_time, d.install_time
            else:
                if start is not None:
                    intervals.append((start, max(r.timestamp, start)))
                start = cur = None
        if before is None:
            before = start is not None and cur < t_f
        prev = r.timestamp
    after = start is not None
    if after:
        intervals.append((start, max(t_l, start)))

    mine = sorted((r for r in reviews if r.app_id == app and r.review_time <= crawl),
                  key=lambda r: r.review_time)
    phase = {"before": set(), "during": set(), "after": set()}
    for r in mine:
        key = "before" if r.review_time < t_f else "during" if r.review_time <= t_l else "after"
        phase[key].add(r.account_name)
    i2r = [r.review_time - max(install_times) for r in mine if r.review_time >= max(install_times)]
    gaps = [b.review_time - a.review_time for a, b in zip(mine, mine[1:])]
    fg = [r.timestamp for r in fasts if r.foreground_app == app]

    def stats(v):
        if not v:
            return {s: None for s in ("min", "mean", "median", "max")}
        return {"min": min(v), "mean": sum(v) / len(v), "median": statistics.median(v), "max": max(v)}

    meta = metadata.get(app)
    out = {
        "f1_reviews_before": len(phase["before"]),
        "f1_reviews_during": len(phase["during"]),
        "f1_reviews_after": len(phase["after"]),
        **{f"f2_install_to_review_{k}": v for k, v in stats(i2r).items()},
        **{f"f3_inter_review_{k}": v for k, v in stats(gaps).items()},
        "f4_opened_multiple_days": int(len({t // DAY for t in fg}) > 1),
        "f5_foreground_snaps_per_day": len(fg) / days,
        "f6_device_snaps_per_day": len(records) / days,
        "f7_inner_retention": sum(max(0, min(b, t_l) - max(a, t_f)) for a, b in intervals),
        "f7_installed_before": int(bool(before)),
        "f7_installed_after": int(after),
        "f8_normal_perms": sum(p.level == NORMAL for p in latest.permissions),
        "f8_dangerous_perms": sum(p.level == DANGEROUS for p in latest.permissions),
        "f9_granted": sum(p.granted for p in latest.permissions),
        "f9_denied": sum(not p.granted for p in latest.permissions),
        "f10_vt_flags": meta.vt_flag_count if meta else 0,
        "f11_installs": sum(t_f <= t <= t_l for t in install_times),
        "f11_uninstalls": sum(d.kind != INSTALLED and t_f <= t <= t_l for t, d in deltas),
    }
    return out, before


def merged_views(fleet, plans):
    for plan in plans:
        streams = fleet.render(plan)
        members = sorted(streams, key=lambda i: min(r.timestamp for r in streams[i]))
        recs = sorted((r for i in members for r in streams[i]), key=lambda r: r.timestamp)
        yield DeviceView(plan.device_id, recs, tuple(members))


def test_features_match_brute_force_oracle(small_fleet):
    plans = inject_faults(small_fleet.plans, FaultSchedule(reinstall_rate=0.5), 9)
    assert any(len(p.installs) > 1 for p in plans)
    reviews = small_fleet.reviews()
    index = ReviewIndex(reviews)
    metadata = {m.app_id: m for m in small_fleet.metadata()}
    checked = 0
    for view in merged_views(small_fleet, plans):
        scan, apps = extract_device_app_features(view, index, metadata)
        mine = [r for r in reviews if r.account_name in view.accounts]
        befores = set()
        for inst in apps:
            expected, before = oracle_app(view.records, inst.app_id, mine, index.crawl_time, metadata)
            assert inst.features == pytest.approx(expected), inst.app_id
            if before:
                befores.add(inst.app_id)
            checked += 1
        dev = extract_device_features(scan, apps, index, metadata).features
        stopped = [r for r in view.records if isinstance(r, SlowSnapshot)][-1].stopped_apps
        reviewed_apps = {r.app_id for r in mine}
        assert dev["d1_preinstalled"] == sum(metadata[a].preinstalled for a in befores)
        assert dev["d1_preinstalled"] + dev["d1_user_installed"] == len(befores)
        assert dev["d3_stopped"] == len(stopped)
        assert dev["d4_daily_installs"] == pytest.approx(
            sum(a.features["f11_installs"] for a in apps) / ((view.t_last - view.t_first) / DAY))
        assert dev["d5_gmail"] == sum(t == GMAIL_ACCOUNT_TYPE for t in view.accounts.values())
        assert dev["d6_installed_and_reviewed"] == len(reviewed_apps & {a.app_id for a in apps})
        assert dev["d7_total_reviewed"] == len(mine)
        assert dev["d6_installed_and_reviewed"] <= dev["d7_total_reviewed"]
    assert checked > 100


def test_f1_phases_sum_to_reviews(small_fleet):
    index = ReviewIndex(small_fleet.reviews())
    metadata = {m.app_id: m for m in small_fleet.metadata()}
    for view in merged_views(small_fleet, small_fleet.plans):
        by_app = index.for_accounts(view.accounts)
        _, apps = extract_device_app_features(view, index, metadata)
        for a in apps:
            f = a.features
            total = f["f1_reviews_before"] + f["f1_reviews_during"] + f["f1_reviews_after"]
            pairs = {(r.account_name, r.review_time) for r in by_app.get(a.app_id, ())}
            assert total == len(pairs)


def test_shrinking_window_never_increases_counts(small_fleet):
    index = ReviewIndex(small_fleet.reviews())
    for view in merged_views(small_fleet, small_fleet.plans[:5]):
        full = scan_device(view)
        span = view.t_last - view.t_first
        inner = scan_device(view, (view.t_first + span // 4, view.t_last - span // 4))
        innermost = scan_device(view, (view.t_first + span // 3, view.t_last - span // 3))
        by_app = index.for_accounts(view.accounts)
        for app in full.apps:
            feats = [extract_app_features(s, app, by_app.get(app, ()), {}).features
                     for s in (full, inner, innermost)]
            for key in ("f11_installs", "f11_uninstalls", "f7_inner_retention"):
                assert feats[0][key] >= feats[1][key] >= feats[2][key]


def test_extraction_is_deterministic(small_fleet):
    index = ReviewIndex(small_fleet.reviews())
    views = list(merged_views(small_fleet, small_fleet.plans[:3]))
    first = [[a.to_obj() for a in extract_device_app_features(v, index, {})[1]] for v in views]
    again = [[a.to_obj() for a in extract_device_app_features(v, index, {})[1]] for v in views]
    assert first == again


def test_feature_name_tables():
    assert len(APP_FEATURES) == len(set(APP_FEATURES)) == 24
    assert len(DEVICE_FEATURES) == 11
