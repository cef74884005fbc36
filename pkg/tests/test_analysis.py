from datetime import datetime, timedelta
from types import SimpleNamespace

import numpy as np
import pytest

from hemsim.analysis import (
    FilterStats,
    MonthlySavings,
    SURPLUS_WINDOW,
    annualize_savings,
    build_profiles,
    classify_optimizable,
    elbow_sweep,
    filter_transactions,
    grid_savings_from_rollout,
    grid_savings_measured,
    household_monthly_savings,
    kmeans,
    monthly_report,
    pick_k,
    synthesize,
    write_cluster_csv,
    write_savings_csv,
)
from hemsim.dataio import HourlyChannels
from hemsim.domain import ChargingTransaction, HouseholdSeries, HourStep, TechnicalSpec
from hemsim.domain import validate_household
from hemsim.env import Frame

from synthdata import base_household

BASE = datetime(2021, 3, 1)


def _tx(tx_id, start_h, duration_h, energy=1.0, day=0):
    start = BASE + timedelta(days=day, hours=start_h)
    return ChargingTransaction(tx_id, start, start + timedelta(hours=duration_h), energy)


# --- transaction filtering -------------------------------------------------------


def test_filter_drops_parking_and_blips():
    txs = [
        _tx("ok1", 6, 10.0),
        _tx("parked", 8, 50.0),
        _tx("blip", 9, 0.25),
        _tx("ok2", 18, 6.0),
    ]
    kept, stats = filter_transactions(txs)
    assert [t.transaction_id for t in kept] == ["ok1", "ok2"]
    assert stats == FilterStats(total=4, excluded_long=1, excluded_short=1)
    assert stats.pct_long == 25.0
    assert stats.pct_short == 25.0


def test_filter_boundaries_are_inclusive():
    kept, stats = filter_transactions([_tx("a", 0, 48.0), _tx("b", 0, 0.5, day=3)])
    assert len(kept) == 2
    assert stats.excluded_long == stats.excluded_short == 0


def test_filter_empty_input():
    kept, stats = filter_transactions([])
    assert kept == []
    assert stats.pct_long == 0.0 and stats.pct_short == 0.0


# --- profiles and clustering ------------------------------------------------------


def test_build_profiles_plain_means():
    txs = {
        "b": [_tx("1", 6, 6.0), _tx("2", 8, 6.0, day=1)],
        "a": [_tx("3", 22.5, 1.0)],
        "empty": [],
    }
    profiles = build_profiles(txs)
    assert [p.household_id for p in profiles] == ["a", "b"]
    a, b = profiles
    assert a.mean_start_hour == 22.5
    assert a.mean_end_hour == 23.5
    assert a.mean_duration_h == 1.0
    assert a.transaction_count == 1
    assert b.mean_start_hour == 7.0
    assert b.mean_end_hour == 13.0
    assert b.mean_duration_h == 6.0


def test_profile_end_hour_is_clock_time():
    # a charge running past midnight reports the end's clock hour
    profiles = build_profiles({"h": [_tx("1", 22, 4.0)]})
    assert profiles[0].mean_end_hour == 2.0


def _bimodal_features(rng, n_per=40):
    a = np.array([6.0, 12.0, 6.0]) + 0.3 * rng.standard_normal((n_per, 3))
    b = np.array([20.0, 24.0, 4.0]) + 0.3 * rng.standard_normal((n_per, 3))
    return np.concatenate([a, b])


def test_kmeans_separates_two_obvious_groups():
    rng = np.random.default_rng(0)
    features = _bimodal_features(rng)
    result = kmeans(features, k=2, rng=rng)
    assert result.k == 2
    first, second = result.assignments[:40], result.assignments[40:]
    assert len(np.unique(first)) == 1 and len(np.unique(second)) == 1
    assert first[0] != second[0]
    assert result.silhouette is not None and result.silhouette > 0.4
    # centroids come back in the original units
    centers = result.centroids[np.argsort(result.centroids[:, 0])]
    np.testing.assert_allclose(centers[0], [6.0, 12.0, 6.0], atol=0.5)
    np.testing.assert_allclose(centers[1], [20.0, 24.0, 4.0], atol=0.5)


def test_kmeans_more_restarts_never_hurt():
    rng = np.random.default_rng(1)
    features = _bimodal_features(rng)
    # both runs draw their restart seeds from an identical rng state
    once = kmeans(features, k=3, restarts=1, rng=np.random.default_rng(5))
    many = kmeans(features, k=3, restarts=10, rng=np.random.default_rng(5))
    assert many.wcss <= once.wcss + 1e-12


def test_kmeans_input_validation():
    features = np.zeros((3, 3))
    with pytest.raises(ValueError):
        kmeans(features, k=4)
    with pytest.raises(ValueError):
        kmeans(features, k=2, restarts=0)


def test_elbow_sweep_and_pick_k():
    rng = np.random.default_rng(2)
    features = _bimodal_features(rng)
    points = elbow_sweep(features, k_max=4, rng=rng)
    assert [p.k for p in points] == [1, 2, 3, 4]
    assert points[0].silhouette is None
    assert all(p.wcss >= q.wcss for p, q in zip(points, points[1:]))
    assert pick_k(points) == 2
    with pytest.raises(ValueError):
        pick_k([points[0]])


def test_cluster_csv(tmp_path):
    profiles = build_profiles(
        {"a": [_tx("1", 6, 6.0)], "b": [_tx("2", 20, 4.0)], "c": [_tx("3", 6.5, 6.0)]}
    )
    result = kmeans(profiles, k=2, rng=np.random.default_rng(0))
    path = tmp_path / "clusters.csv"
    write_cluster_csv(path, profiles, result)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "household,cluster,mean_start,mean_end,mean_duration,silhouette"
    assert len(lines) == 4
    assert lines[1].startswith("a,")


# --- optimizability --------------------------------------------------------------


def test_classify_optimizable_cases():
    assert SURPLUS_WINDOW == (8.0, 16.0)
    # already starts on surplus hours
    assert classify_optimizable(_tx("t", 10, 4.0)) is False
    # overnight, never touches the window
    assert classify_optimizable(_tx("t", 22, 7.0)) is False
    # early start that runs into the window
    assert classify_optimizable(_tx("t", 6, 6.0)) is True
    # evening plug that is still connected next morning
    assert classify_optimizable(_tx("t", 17, 16.0)) is True
    # ends exactly at the window's opening edge
    assert classify_optimizable(_tx("t", 16, 2.0)) is False
    # multi-day stays cross a full window
    assert classify_optimizable(_tx("t", 17, 40.0)) is True


# --- measured grid savings --------------------------------------------------------


def _channels(pv, demand, ev):
    n = len(pv)
    return HourlyChannels(
        timestamps=[BASE + timedelta(hours=h) for h in range(n)],
        pv_kwh=np.array(pv, dtype=float),
        demand_kwh=np.array(demand, dtype=float),
        ev_kwh=np.array(ev, dtype=float),
    )


def test_grid_savings_measured_overlap_rule():
    channels = _channels([0.0, 2.0, 5.0, 0.0], [1.0] * 4, [0.0, 3.0, 0.0, 0.0])
    tx = ChargingTransaction("t1", BASE + timedelta(hours=1), BASE + timedelta(hours=3), 3.0)
    savings = grid_savings_measured(channels, [tx])
    # 2 kWh of the EV charge came from the grid; 4 kWh were exported meanwhile
    assert savings == {"t1": 2.0}


def test_grid_savings_limited_by_feedin():
    channels = _channels([0.0, 1.0], [1.0, 0.5], [3.0, 0.0])
    tx = ChargingTransaction("t1", BASE, BASE + timedelta(hours=2), 3.0)
    savings = grid_savings_measured(channels, [tx])
    # plenty of grid charging but only 0.5 kWh ever exported
    assert savings["t1"] == pytest.approx(0.5)


def test_grid_savings_snap_to_hours():
    channels = _channels([0.0, 0.0, 5.0], [0.5] * 3, [0.0, 2.0, 0.0])
    tx = ChargingTransaction(
        "t1", BASE + timedelta(hours=1, minutes=20), BASE + timedelta(hours=1, minutes=50), 2.0
    )
    # the sub-hour transaction snaps to cover hour 1 only
    savings = grid_savings_measured(channels, [tx])
    assert savings["t1"] == pytest.approx(0.0)


def test_grid_savings_from_rollout():
    frames = [
        Frame(BASE, 0.0, 1.0, True, 2, 2.0, "t1"),
        Frame(BASE + timedelta(hours=1), 5.0, 1.0, True, 1, None, "t1"),
        Frame(BASE + timedelta(hours=2), 0.0, 1.0, False, -1),
    ]
    flows = [
        SimpleNamespace(ev_charge_kwh=2.0, grid_purchase_kwh=3.0, grid_feedin_kwh=0.0),
        SimpleNamespace(ev_charge_kwh=1.0, grid_purchase_kwh=0.0, grid_feedin_kwh=3.0),
        SimpleNamespace(ev_charge_kwh=0.0, grid_purchase_kwh=1.0, grid_feedin_kwh=0.0),
    ]
    outcomes = [SimpleNamespace(flows=f) for f in flows]
    savings = grid_savings_from_rollout(frames, outcomes)
    assert savings == {"t1": 2.0}


def test_household_monthly_savings_and_report():
    channels = _channels([0.0, 2.0, 5.0, 0.0], [1.0] * 4, [0.0, 3.0, 0.0, 0.0])
    tx = ChargingTransaction("t1", BASE + timedelta(hours=1), BASE + timedelta(hours=3), 3.0)
    rows = household_monthly_savings("h1", channels, [tx])
    assert rows == [MonthlySavings("h1", 3, 2.0, 4.0)]

    entries = [
        MonthlySavings("h1", 3, 2.0, 10.0),
        MonthlySavings("h2", 3, 4.0, 0.0),
        MonthlySavings("h1", 4, 1.0, 4.0),
    ]
    report = monthly_report(entries)
    assert report[0] == (3, 2, 3000.0, 1000.0, 20.0)
    assert report[1] == (4, 1, 1000.0, 0.0, 25.0)


def test_savings_csv(tmp_path):
    path = tmp_path / "savings.csv"
    write_savings_csv(path, [(3, 2, 3000.0, 1000.0, 20.0)])
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "month,households,mean_wh,std_wh,mean_pct"
    assert lines[1] == "3,2,3000.0,1000.0,20.0"


def test_annualize_savings():
    eur, co2 = annualize_savings(100.0)
    assert eur == pytest.approx(41.0)
    assert co2 == pytest.approx(45.0)
    assert annualize_savings(10.0, 0.30, 0.5) == (3.0, 5.0)


# --- synthetic high-potential household --------------------------------------------


def test_synthesize_doubles_transactions_into_free_days():
    series = base_household(days=20)
    synth = synthesize(series)
    assert synth.household_id == "base-synth"
    assert len(synth.transactions) == 2 * len(series.transactions)
    # the series keeps transactions sorted by start, so split them by id
    originals = [t for t in synth.transactions if not t.transaction_id.endswith("-dup")]
    duplicates = {t.transaction_id: t for t in synth.transactions if t.transaction_id.endswith("-dup")}
    assert tuple(originals) == series.transactions
    for orig in originals:
        dup = duplicates[f"{orig.transaction_id}-dup"]
        assert dup.energy_kwh == orig.energy_kwh
        assert dup.end - dup.start == orig.end - orig.start
        # base transactions start at 06:00, outside the surplus window
        assert dup.start.hour == orig.start.hour
    # no two transactions overlap and every duplicate landed on a free day
    validate_household(synth)
    days_used = {(tx.start - synth.start).days for tx in originals}
    days_dup = {(tx.start - synth.start).days for tx in duplicates.values()}
    assert days_used.isdisjoint(days_dup)


def test_synthesize_scales_pv_and_swaps_battery():
    series = base_household(days=10)
    synth = synthesize(series)
    for orig, new in zip(series.steps, synth.steps):
        assert new.pv_kwh == orig.pv_kwh * 1.5
        assert new.demand_kwh == orig.demand_kwh
        assert new.timestamp == orig.timestamp
    assert synth.spec.bess_capacity_kwh == 6.75
    assert synth.spec.bess_power_kw == 3.3
    assert synth.spec.pv_peak_kw == series.spec.pv_peak_kw * 1.5
    assert synth.spec.ev_capacity_kwh == series.spec.ev_capacity_kwh


def test_synthesize_moves_surplus_starts_earlier():
    series = base_household(days=10, tx_start_hour=10, tx_end_hour=16)
    synth = synthesize(series)
    duplicates = [tx for tx in synth.transactions if tx.transaction_id.endswith("-dup")]
    assert duplicates
    assert all(tx.start.hour == 6 for tx in duplicates)
    originals = [tx for tx in synth.transactions if not tx.transaction_id.endswith("-dup")]
    assert all(tx.start.hour == 10 for tx in originals)


def test_synthesize_raises_when_calendar_is_full():
    series = base_household(days=4, tx_every_days=1)
    with pytest.raises(ValueError, match="calendar is full"):
        synthesize(series)


def test_synthesize_requires_whole_days():
    steps = tuple(
        HourStep(BASE + timedelta(hours=h), 0.0, 0.5) for h in range(25)
    )
    series = HouseholdSeries("h", steps, (), TechnicalSpec(6.75, 3.3, 20.0))
    with pytest.raises(ValueError, match="whole days"):
        synthesize(series)
