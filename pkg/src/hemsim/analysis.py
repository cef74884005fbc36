"""Charging-behavior analytics and synthetic-household construction.

These operate on the transaction tables and hourly channels of many
households: who charges when, which transactions a home-energy system
could shift into PV surplus hours, and what that shift would be worth.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.cluster import KMeans
from sklearn.metrics import silhouette_score

from .dataio import HourlyChannels
from .domain import ChargingTransaction, HouseholdSeries, HourStep, TechnicalSpec

SURPLUS_WINDOW = (8.0, 16.0)  # typical PV surplus hours, start inclusive, end exclusive
CLUSTER_HEADER = "household,cluster,mean_start,mean_end,mean_duration,silhouette"
SAVINGS_HEADER = "month,households,mean_wh,std_wh,mean_pct"


# --- transaction filtering ----------------------------------------------------


@dataclass(frozen=True)
class FilterStats:
    total: int
    excluded_long: int
    excluded_short: int

    @property
    def pct_long(self) -> float:
        return 100.0 * self.excluded_long / self.total if self.total else 0.0

    @property
    def pct_short(self) -> float:
        return 100.0 * self.excluded_short / self.total if self.total else 0.0


def filter_transactions(
    transactions: Sequence[ChargingTransaction],
    max_duration_h: float = 48.0,
    min_duration_h: float = 0.5,
) -> tuple[list[ChargingTransaction], FilterStats]:
    """Drop implausibly long (parking, not charging) and very short plug-ins."""
    kept: list[ChargingTransaction] = []
    n_long = 0
    n_short = 0
    for tx in transactions:
        if tx.duration_h > max_duration_h:
            n_long += 1
        elif tx.duration_h < min_duration_h:
            n_short += 1
        else:
            kept.append(tx)
    return kept, FilterStats(len(transactions), n_long, n_short)


# --- per-household profiles and clustering ------------------------------------


@dataclass(frozen=True)
class UserProfile:
    """Mean charging habits of one household."""

    household_id: str
    mean_start_hour: float
    mean_end_hour: float
    mean_duration_h: float
    transaction_count: int

    def features(self) -> list[float]:
        return [self.mean_start_hour, self.mean_end_hour, self.mean_duration_h]


def _hour_of_day(ts: datetime) -> float:
    return ts.hour + ts.minute / 60.0 + ts.second / 3600.0


def build_profiles(
    transactions_by_household: Mapping[str, Sequence[ChargingTransaction]]
) -> list[UserProfile]:
    """Plain arithmetic means of start hour, end hour and duration per household."""
    profiles = []
    for household_id in sorted(transactions_by_household):
        txs = transactions_by_household[household_id]
        if not txs:
            continue
        profiles.append(
            UserProfile(
                household_id=household_id,
                mean_start_hour=sum(_hour_of_day(tx.start) for tx in txs) / len(txs),
                mean_end_hour=sum(_hour_of_day(tx.end) for tx in txs) / len(txs),
                mean_duration_h=sum(tx.duration_h for tx in txs) / len(txs),
                transaction_count=len(txs),
            )
        )
    return profiles


@dataclass
class ClusterResult:
    k: int
    assignments: np.ndarray
    centroids: np.ndarray  # in original feature units
    wcss: float  # on standardized features
    silhouette: float | None


def _standardize(features: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return (features - mean) / std, mean, std


def kmeans(
    profiles: Sequence[UserProfile] | np.ndarray,
    k: int,
    restarts: int = 10,
    rng: np.random.Generator | None = None,
) -> ClusterResult:
    """Best-of-restarts Lloyd's clustering on standardized profile features.

    Each restart is one independent Lloyd's run to convergence; the run
    with the lowest within-cluster sum of squares wins. Passing the same
    rng state with more restarts can only improve (or keep) the WCSS.
    """
    rng = rng or np.random.default_rng(0)
    features = (
        np.array([p.features() for p in profiles])
        if len(profiles) > 0 and isinstance(profiles[0], UserProfile)
        else np.asarray(profiles, dtype=float)
    )
    if len(features) < k:
        raise ValueError(f"cannot form {k} clusters from {len(features)} profiles")
    if restarts <= 0:
        raise ValueError("need at least one restart")
    x, mean, std = _standardize(features)
    best: KMeans | None = None
    for _ in range(restarts):
        seed = int(rng.integers(0, 2**31 - 1))
        model = KMeans(n_clusters=k, n_init=1, random_state=seed, algorithm="lloyd").fit(x)
        if best is None or model.inertia_ < best.inertia_:
            best = model
    assert best is not None
    silhouette = None
    if 2 <= k <= len(features) - 1 and len(np.unique(best.labels_)) > 1:
        silhouette = float(silhouette_score(x, best.labels_))
    return ClusterResult(
        k=k,
        assignments=best.labels_.copy(),
        centroids=best.cluster_centers_ * std + mean,
        wcss=float(best.inertia_),
        silhouette=silhouette,
    )


@dataclass(frozen=True)
class ElbowPoint:
    k: int
    wcss: float
    silhouette: float | None


def elbow_sweep(
    profiles: Sequence[UserProfile] | np.ndarray,
    k_max: int = 6,
    restarts: int = 10,
    rng: np.random.Generator | None = None,
) -> list[ElbowPoint]:
    """WCSS and silhouette for k = 1..k_max."""
    rng = rng or np.random.default_rng(0)
    points = []
    for k in range(1, k_max + 1):
        result = kmeans(profiles, k, restarts, rng)
        points.append(ElbowPoint(k, result.wcss, result.silhouette))
    return points


def pick_k(points: Sequence[ElbowPoint]) -> int:
    """Cluster count with the highest silhouette score (k >= 2)."""
    scored = [p for p in points if p.silhouette is not None]
    if not scored:
        raise ValueError("no k in the sweep admits a silhouette score")
    return max(scored, key=lambda p: p.silhouette).k


def write_cluster_csv(
    path: str | Path,
    profiles: Sequence[UserProfile],
    result: ClusterResult,
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CLUSTER_HEADER.split(","))
        for profile, cluster in zip(profiles, result.assignments):
            writer.writerow(
                [
                    profile.household_id,
                    int(cluster),
                    repr(profile.mean_start_hour),
                    repr(profile.mean_end_hour),
                    repr(profile.mean_duration_h),
                    "" if result.silhouette is None else repr(result.silhouette),
                ]
            )


# --- optimizability and savings -------------------------------------------------


def classify_optimizable(
    tx: ChargingTransaction, window: tuple[float, float] = SURPLUS_WINDOW
) -> bool:
    """True when shifting the charge into PV surplus hours could help.

    Transactions that already start inside the surplus window are running
    on surplus; transactions that never touch it have no surplus to use.
    """
    start_hour = _hour_of_day(tx.start)
    if window[0] <= start_hour < window[1]:
        return False
    day = tx.start.replace(hour=0, minute=0, second=0, microsecond=0)
    while day < tx.end:
        win_start = day + timedelta(hours=window[0])
        win_end = day + timedelta(hours=window[1])
        if tx.start < win_end and tx.end > win_start:
            return True
        day += timedelta(days=1)
    return False


def _snap_hours(channels: HourlyChannels, tx: ChargingTransaction) -> tuple[int, int]:
    origin = channels.timestamps[0]
    start = int(np.floor((tx.start - origin).total_seconds() / 3600.0))
    end = int(np.ceil((tx.end - origin).total_seconds() / 3600.0))
    return max(0, start), min(len(channels.timestamps), end)


def grid_savings_measured(
    channels: HourlyChannels, transactions: Sequence[ChargingTransaction]
) -> dict[str, float]:
    """Potential savings per transaction from measured behavior, in kWh.

    Savings are the overlap between what the EV pulled from the grid and
    what the household fed in while the car sat connected: energy a
    storage-aware controller could have routed directly.
    """
    pv = channels.pv_kwh
    demand = channels.demand_kwh
    ev = channels.ev_kwh
    net = pv - demand - ev
    purchase = np.maximum(0.0, -net)
    feedin = np.maximum(0.0, net)
    savings: dict[str, float] = {}
    for tx in transactions:
        lo, hi = _snap_hours(channels, tx)
        ev_purchase = float(np.minimum(ev[lo:hi], purchase[lo:hi]).sum())
        window_feedin = float(feedin[lo:hi].sum())
        savings[tx.transaction_id] = min(ev_purchase, window_feedin)
    return savings


def grid_savings_from_rollout(frames, outcomes) -> dict[str, float]:
    """Same savings rule on a simulated trace (e.g. re-simulated baseline)."""
    by_tx: dict[str, tuple[float, float]] = {}
    for frame, outcome in zip(frames, outcomes):
        if frame.tx_id is None:
            continue
        ev_purchase, feedin = by_tx.get(frame.tx_id, (0.0, 0.0))
        ev_purchase += min(outcome.flows.ev_charge_kwh, outcome.flows.grid_purchase_kwh)
        feedin += outcome.flows.grid_feedin_kwh
        by_tx[frame.tx_id] = (ev_purchase, feedin)
    return {tx_id: min(pair) for tx_id, pair in by_tx.items()}


@dataclass(frozen=True)
class MonthlySavings:
    household_id: str
    month: int
    savings_kwh: float
    purchase_kwh: float


def household_monthly_savings(
    household_id: str,
    channels: HourlyChannels,
    transactions: Sequence[ChargingTransaction],
) -> list[MonthlySavings]:
    """Collapse per-transaction savings into calendar months for one household."""
    per_tx = grid_savings_measured(channels, transactions)
    months = sorted({ts.month for ts in channels.timestamps})
    net = channels.pv_kwh - channels.demand_kwh - channels.ev_kwh
    purchase = np.maximum(0.0, -net)
    month_axis = np.array([ts.month for ts in channels.timestamps])
    rows = []
    for month in months:
        tx_sum = sum(
            per_tx[tx.transaction_id] for tx in transactions if tx.start.month == month
        )
        rows.append(
            MonthlySavings(
                household_id=household_id,
                month=month,
                savings_kwh=tx_sum,
                purchase_kwh=float(purchase[month_axis == month].sum()),
            )
        )
    return rows


def monthly_report(entries: Iterable[MonthlySavings]) -> list[tuple[int, int, float, float, float]]:
    """Rows of (month, households, mean_wh, std_wh, mean_pct) across households."""
    by_month: dict[int, list[MonthlySavings]] = {}
    for entry in entries:
        by_month.setdefault(entry.month, []).append(entry)
    rows = []
    for month in sorted(by_month):
        got = by_month[month]
        wh = np.array([e.savings_kwh for e in got]) * 1000.0
        pcts = [
            100.0 * e.savings_kwh / e.purchase_kwh for e in got if e.purchase_kwh > 0.0
        ]
        rows.append(
            (
                month,
                len(got),
                float(wh.mean()),
                float(wh.std()),
                float(np.mean(pcts)) if pcts else 0.0,
            )
        )
    return rows


def write_savings_csv(path: str | Path, rows: Sequence[tuple[int, int, float, float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SAVINGS_HEADER.split(","))
        for month, households, mean_wh, std_wh, mean_pct in rows:
            writer.writerow(
                [month, households, repr(mean_wh), repr(std_wh), repr(mean_pct)]
            )


def annualize_savings(
    kwh_per_year: float,
    price_buy_eur_per_kwh: float = 0.41,
    co2_kg_per_kwh: float = 0.45,
) -> tuple[float, float]:
    """(EUR, kg CO2) equivalents of one year of shifted grid energy."""
    return kwh_per_year * price_buy_eur_per_kwh, kwh_per_year * co2_kg_per_kwh


# --- synthetic high-potential household -----------------------------------------


def synthesize(
    series: HouseholdSeries,
    bess_capacity_kwh: float = 6.75,
    bess_power_kw: float = 3.3,
    pv_scale: float = 1.5,
    early_start_hour: int = 6,
) -> HouseholdSeries:
    """Construct a high-potential variant of a household.

    PV scales by exactly ``pv_scale``; demand stays bit-identical; every
    transaction is duplicated into the nearest transaction-free day, with
    starts that fell inside the surplus window moved before it; and the
    household gets the entry-level battery. Raises when the calendar is
    too full to double the transaction count.
    """
    if series.n_steps % 24 != 0:
        raise ValueError("series must cover whole days")
    n_days = series.n_steps // 24
    origin = series.start

    def day_of(ts: datetime) -> int:
        return int((ts - origin).total_seconds() // 86400)

    all_txs: list[ChargingTransaction] = list(series.transactions)

    def day_is_free(day: int) -> bool:
        day_start = origin + timedelta(days=day)
        day_end = day_start + timedelta(days=1)
        return all(tx.end <= day_start or tx.start >= day_end for tx in all_txs)

    def overlaps_any(start: datetime, end: datetime) -> bool:
        return any(tx.start < end and tx.end > start for tx in all_txs)

    duplicates: list[ChargingTransaction] = []
    for tx in series.transactions:
        start_hour = _hour_of_day(tx.start)
        if SURPLUS_WINDOW[0] <= start_hour < SURPLUS_WINDOW[1]:
            time_of_day = timedelta(hours=early_start_hour)
        else:
            time_of_day = tx.start - tx.start.replace(hour=0, minute=0, second=0)
        duration = tx.end - tx.start
        home_day = day_of(tx.start)
        placed = False
        for distance in range(1, n_days):
            for offset in (distance, -distance):
                day = home_day + offset
                if not 0 <= day < n_days:
                    continue
                if not day_is_free(day):
                    continue
                new_start = origin + timedelta(days=day) + time_of_day
                new_end = new_start + duration
                if new_end > origin + timedelta(days=n_days) or overlaps_any(new_start, new_end):
                    continue
                duplicate = replace(
                    tx,
                    transaction_id=f"{tx.transaction_id}-dup",
                    start=new_start,
                    end=new_end,
                )
                duplicates.append(duplicate)
                all_txs.append(duplicate)
                placed = True
                break
            if placed:
                break
        if not placed:
            raise ValueError(
                f"no free day to duplicate transaction {tx.transaction_id}: calendar is full"
            )

    steps = tuple(
        HourStep(hs.timestamp, hs.pv_kwh * pv_scale, hs.demand_kwh) for hs in series.steps
    )
    spec = TechnicalSpec(
        bess_capacity_kwh=bess_capacity_kwh,
        bess_power_kw=bess_power_kw,
        ev_capacity_kwh=series.spec.ev_capacity_kwh,
        ev_charger_power_kw=series.spec.ev_charger_power_kw,
        pv_peak_kw=series.spec.pv_peak_kw * pv_scale,
        bess_efficiency=series.spec.bess_efficiency,
        bess_standing_loss=series.spec.bess_standing_loss,
    )
    return HouseholdSeries(
        household_id=f"{series.household_id}-synth",
        steps=steps,
        transactions=tuple(series.transactions) + tuple(duplicates),
        spec=spec,
    )
