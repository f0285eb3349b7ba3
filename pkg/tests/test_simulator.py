import numpy as np
import pytest

from asotrace.pipeline import simulate
from asotrace.records import GMAIL_ACCOUNT_TYPE, SlowSnapshot
from asotrace.simulator.distributions import DAY, LogNormal, ReviewDelay
from asotrace.simulator.faults import (
    REINSTALL,
    SHARED_DEVICE,
    FaultSchedule,
    InvalidScheduleError,
    SplitEvent,
    inject_faults,
)
from asotrace.simulator.fleet import (
    FAST_PERIOD,
    PROMOTION,
    SLOW_PERIOD,
    FleetConfig,
    _accounts,
    _daily_rates,
    generate_fleet,
)
from asotrace.simulator.fidelity import measure
from asotrace.simulator.profiles import REGULAR, WORKER_ORGANIC, build_profiles


def test_fleet_config_validation():
    with pytest.raises(ValueError):
        FleetConfig(seed=None)
    with pytest.raises(ValueError):
        FleetConfig(seed=1, duration_days=1.5)
    with pytest.raises(ValueError):
        FleetConfig(seed=1, organic_share=1.2)
    with pytest.raises(ValueError):
        FleetConfig(seed=1, dropout=1.0)


def test_default_fleet_composition():
    cfg = FleetConfig(seed=42)
    assert (cfg.workers, cfg.regulars, cfg.duration_days) == (200, 100, 7.0)
    assert cfg.organic_count == 138  # 69.1% of 200


def test_invalid_distribution_parameters():
    with pytest.raises(ValueError):
        LogNormal.fit(mean=2.0, median=5.0)
    with pytest.raises(ValueError):
        ReviewDelay.fit(10.0, 5.0, quick=0.7, cap_days=100.0)
    with pytest.raises(ValueError):
        build_profiles({"regular": {"no_such_parameter": 1}})
    with pytest.raises(ValueError):
        build_profiles({"regular": {"daily_installs": {"mean": 1.0, "median": 3.0}}})
    with pytest.raises(ValueError):
        build_profiles({"superuser": {}})


def test_regular_gmail_capped_at_ten():
    profile = build_profiles()[REGULAR]
    rng = np.random.default_rng(42)
    counts = [sum(t == GMAIL_ACCOUNT_TYPE for _, t in _accounts(rng, profile, i)[0]) for i in range(1000)]
    assert max(counts) == 10
    assert np.median(counts) == 2


def test_worker_fleet_accounts_and_installs_near_targets():
    fleet = generate_fleet(FleetConfig(seed=42, workers=400, regulars=0))
    stats = measure(fleet.plans)
    assert abs(stats[("gmail_accounts", "worker", "mean")] / 28.87 - 1) <= 0.15
    assert abs(stats[("daily_installs", "worker", "mean")] / 15.94 - 1) <= 0.15


def test_daily_rate_sampler_is_unbiased():
    profile = build_profiles()[WORKER_ORGANIC]
    rng = np.random.default_rng(0)
    rates = np.array([_daily_rates(rng, profile) for _ in range(100_000)])
    assert np.allclose(rates.mean(axis=0), [15.94, 7.02], rtol=0.03)


def test_same_seed_same_bytes(tmp_path):
    cfg = FleetConfig(seed=3, workers=3, regulars=2, duration_days=2)
    sched = FaultSchedule(reinstall_rate=0.3, android_id_suppression=0.3)
    simulate(cfg, sched, tmp_path / "a")
    simulate(cfg, sched, tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["fast.install.jsonl", "ground_truth.jsonl", "metadata.jsonl", "reviews.jsonl",
                     "slow.install.jsonl"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_different_seed_differs(tmp_path):
    simulate(FleetConfig(seed=3, workers=2, regulars=1, duration_days=2), FaultSchedule(), tmp_path / "a")
    simulate(FleetConfig(seed=4, workers=2, regulars=1, duration_days=2), FaultSchedule(), tmp_path / "b")
    assert (tmp_path / "a" / "reviews.jsonl").read_bytes() != (tmp_path / "b" / "reviews.jsonl").read_bytes()


def test_snapshot_cadence(small_fleet):
    for plan in small_fleet.plans:
        (inst,) = plan.installs
        recs = small_fleet.render(plan)[inst.install_id]
        slow = [r.timestamp for r in recs if r.kind == "slow"]
        fast = [r.timestamp for r in recs if r.kind == "fast"]
        assert slow[0] == fast[0] == inst.start and slow[-1] == fast[-1] == inst.end
        assert all((t - inst.start) % SLOW_PERIOD == 0 for t in slow[:-1])
        assert all(t % FAST_PERIOD == plan.fast_phase for t in fast[1:-1])
        assert [r.timestamp for r in recs] == sorted(r.timestamp for r in recs)


def test_screen_off_fast_snapshots_only_at_edges(small_records):
    fast = [r for r in small_records if r.kind == "fast"]
    on = sum(r.screen_on for r in fast)
    assert 0 < on < len(fast)
    assert all(r.foreground_app is None for r in fast if not r.screen_on)


def test_reviews_come_from_device_accounts(small_fleet):
    for plan in small_fleet.plans:
        names = {name for name, _ in plan.accounts}
        assert all(r.account_name in names for r in plan.reviews)


def test_account_present_in_every_slow_snapshot(small_fleet, small_records):
    by_install = {i.install_id: p for p in small_fleet.plans for i in p.installs}
    for r in small_records:
        if isinstance(r, SlowSnapshot):
            assert r.registered_accounts == by_install[r.install_id].accounts


def test_regular_devices_have_no_promotion_intent(small_fleet):
    for plan in small_fleet.plans:
        intents = set(plan.intents().values())
        if plan.is_worker:
            assert PROMOTION in intents
        else:
            assert PROMOTION not in intents


def test_promotion_delays_are_quick():
    fleet = generate_fleet(FleetConfig(seed=8, workers=20, regulars=0, duration_days=2))
    delays = []
    for plan in fleet.plans:
        for r in plan.reviews:
            inst = plan.apps.get(r.app_id)
            if inst is not None and inst.intent == PROMOTION:
                last = max(s for s, _ in inst.spans)
                if r.review_time >= last:
                    delays.append((r.review_time - last) / DAY)
    assert len(delays) > 200
    assert 3.5 < np.median(delays) < 7.0
    assert np.mean(np.array(delays) <= 1.0) >= 0.30


# ---------------------------------------------------------------------------
# device-level faults


def test_one_reinstall_gives_two_installs_one_device(small_fleet):
    plan = small_fleet.plans[0]
    at = plan.t_start + int(DAY)
    out = inject_faults([plan], FaultSchedule(splits=(SplitEvent(plan.device_id, REINSTALL, at, 3600),)), 1)
    (faulted,) = out
    a, b = faulted.installs
    assert a.install_id != b.install_id
    assert a.end == at and b.start == at + 3600
    assert a.android_id == b.android_id == plan.android_id
    assert a.participant_id == b.participant_id
    assert faulted.ground_truth()["device_id"] == plan.device_id
    assert len(plan.installs) == 1  # input untouched


def test_shared_device_changes_participant(small_fleet):
    plan = small_fleet.plans[1]
    ev = SplitEvent(plan.device_id, SHARED_DEVICE, plan.t_start + int(DAY), 600)
    a, b = inject_faults([plan], FaultSchedule(splits=(ev,)), 1)[0].installs
    assert a.participant_id != b.participant_id
    assert a.android_id == b.android_id


def test_overlapping_splits_are_invalid(small_fleet):
    plan = small_fleet.plans[0]
    at = plan.t_start + int(DAY)
    evs = (SplitEvent(plan.device_id, REINSTALL, at, 7200), SplitEvent(plan.device_id, REINSTALL, at + 3600, 600))
    with pytest.raises(InvalidScheduleError):
        inject_faults([plan], FaultSchedule(splits=evs), 1)
    with pytest.raises(InvalidScheduleError):
        inject_faults([plan], FaultSchedule(splits=(SplitEvent(plan.device_id, REINSTALL, plan.t_end + 5, 60),)), 1)
    with pytest.raises(InvalidScheduleError):
        FaultSchedule(reinstall_rate=1.5)


def test_rendered_reinstall_intervals_disjoint(small_fleet):
    plans = inject_faults(small_fleet.plans, FaultSchedule(reinstall_rate=0.5, shared_device_rate=0.3), 2)
    split = [p for p in plans if len(p.installs) > 1]
    assert split
    for plan in split:
        streams = small_fleet.render(plan)
        spans = sorted((min(r.timestamp for r in s), max(r.timestamp for r in s)) for s in streams.values())
        assert all(a[1] < b[0] for a, b in zip(spans, spans[1:]))


def test_suppression_rate(small_fleet):
    plans = inject_faults(small_fleet.plans * 1, FaultSchedule(android_id_suppression=1.0), 2)
    assert all(i.android_id is None for p in plans for i in p.installs)
