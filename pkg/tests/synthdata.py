"""Deterministic synthetic households shared across the test suite."""

from __future__ import annotations

import csv
import math
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from hemsim.dataio import MEASUREMENT_HEADER, TRANSACTION_HEADER
from hemsim.domain import ChargingTransaction, HouseholdSeries, HourStep, TechnicalSpec

YEAR_START = datetime(2021, 1, 1)


def pv_shape(hour: int) -> float:
    """Daylight bell over 06:00-18:00, peaking at noon."""
    s = math.sin(math.pi * (hour - 6) / 12.0)
    return max(0.0, s) ** 1.5


def seasonal_factor(ts: datetime) -> float:
    """1.0 at the June solstice, 0.25 in deep winter."""
    doy = ts.timetuple().tm_yday
    return 0.625 + 0.375 * math.cos(2.0 * math.pi * (doy - 172) / 365.0)


def demand_profile(hour: int) -> float:
    return (
        0.3
        + 0.4 * math.exp(-((hour - 8) ** 2) / 4.0)
        + 0.8 * math.exp(-((hour - 19) ** 2) / 6.0)
    )


def base_household(
    days: int = 365,
    seed: int = 1234,
    household_id: str = "base",
    pv_peak_kw: float = 8.0,
    tx_energy_kwh: float = 20.0,
    tx_every_days: int = 2,
    tx_start_hour: int = 6,
    tx_end_hour: int = 16,
    bess_capacity_kwh: float = 6.75,
    bess_power_kw: float = 3.3,
) -> HouseholdSeries:
    """A year of plausible PV/demand data with a strict charging routine.

    Transactions sit on every ``tx_every_days``-th day and always start
    before the PV window, which leaves plenty of shiftable charging for
    an optimizer to exploit.
    """
    rng = np.random.default_rng(seed)
    steps = []
    for d in range(days):
        for h in range(24):
            ts = YEAR_START + timedelta(days=d, hours=h)
            pv = pv_peak_kw * seasonal_factor(ts) * pv_shape(h)
            demand = max(0.05, demand_profile(h) + 0.05 * rng.standard_normal())
            steps.append(HourStep(ts, pv, demand))
    txs = []
    for d in range(0, days, tx_every_days):
        txs.append(
            ChargingTransaction(
                transaction_id=f"tx{d:04d}",
                start=YEAR_START + timedelta(days=d, hours=tx_start_hour),
                end=YEAR_START + timedelta(days=d, hours=tx_end_hour),
                energy_kwh=tx_energy_kwh,
            )
        )
    spec = TechnicalSpec(
        bess_capacity_kwh=bess_capacity_kwh,
        bess_power_kw=bess_power_kw,
        ev_capacity_kwh=tx_energy_kwh,
        pv_peak_kw=pv_peak_kw,
    )
    return HouseholdSeries(household_id, tuple(steps), tuple(txs), spec)


def micro_household(days: int = 30, seed: int = 7, household_id: str = "h1") -> HouseholdSeries:
    """Small variant for CLI round trips; 30 days split as 12/6/12."""
    return base_household(
        days=days,
        seed=seed,
        household_id=household_id,
        pv_peak_kw=4.0,
        tx_energy_kwh=10.0,
        tx_every_days=2,
        tx_start_hour=6,
        tx_end_hour=12,
    )


def write_raw_csv(
    path: str | Path, households: list[HouseholdSeries], label_transactions: bool = True
) -> None:
    """Expand hourly series into flat-power 15-minute metering rows.

    Constant power within each hour makes the hourly resample reproduce
    the original energies exactly.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MEASUREMENT_HEADER)
        for series in households:
            n_slots = series.n_steps * 4
            ev_w = np.zeros(n_slots)
            labels = [""] * n_slots
            for tx in series.transactions:
                s = int(series.hour_index(tx.start) * 4)
                e = int(series.hour_index(tx.end) * 4)
                power_w = tx.energy_kwh / ((e - s) / 4.0) * 1000.0
                for i in range(s, e):
                    ev_w[i] = power_w
                    if label_transactions:
                        labels[i] = tx.transaction_id
            for t, hs in enumerate(series.steps):
                for q in range(4):
                    i = t * 4 + q
                    writer.writerow(
                        [
                            (hs.timestamp + timedelta(minutes=15 * q)).isoformat(),
                            series.household_id,
                            repr(hs.pv_kwh * 1000.0),
                            repr(hs.demand_kwh * 1000.0),
                            repr(float(ev_w[i])),
                            labels[i],
                        ]
                    )


def write_tx_csv(path: str | Path, households: list[HouseholdSeries]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRANSACTION_HEADER)
        for series in households:
            for tx in series.transactions:
                writer.writerow(
                    [
                        series.household_id,
                        tx.transaction_id,
                        tx.start.isoformat(),
                        tx.end.isoformat(),
                        repr(tx.energy_kwh),
                    ]
                )
