"""CSV ingestion and preparation of hourly household series.

Raw input is 15-minute metering data; everything downstream runs on a
1-hour grid. The ``load_w`` column is the non-EV household demand (the
wallbox is metered separately in ``ev_w``).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import (
    ChargingTransaction,
    HourStep,
    HouseholdSeries,
    TechnicalSpec,
    start_soc_kwh,
)

MEASUREMENT_HEADER = ["timestamp", "household_id", "pv_w", "load_w", "ev_w", "transaction_id"]
TRANSACTION_HEADER = ["household_id", "transaction_id", "start", "end", "energy_kwh"]

QUARTERS = (0, 15, 30, 45)


@dataclass(frozen=True)
class RawMeasurement:
    """One 15-minute metering row (powers in W)."""

    timestamp: datetime
    household_id: str
    pv_w: float
    load_w: float
    ev_w: float
    transaction_id: str


def _parse_timestamp(text: str, line_no: int) -> datetime:
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise ValueError(f"line {line_no}: bad timestamp {text!r}") from exc
    if ts.minute not in QUARTERS or ts.second != 0 or ts.microsecond != 0:
        raise ValueError(f"line {line_no}: timestamp {text!r} not on the 15-minute grid")
    return ts


def _parse_power(text: str, column: str, line_no: int) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise ValueError(f"line {line_no}: bad {column} value {text!r}") from exc
    if not math.isfinite(value):
        raise ValueError(f"line {line_no}: non-finite {column} value")
    if value < 0.0:
        raise ValueError(f"line {line_no}: negative {column} rejected")
    return value


def ingest(path: str | Path) -> dict[str, list[RawMeasurement]]:
    """Read a measurement CSV, validated row by row, grouped per household.

    Rows come back sorted by timestamp; duplicates, unknown columns,
    negative powers and off-grid timestamps all raise with a line number.
    """
    by_household: dict[str, list[RawMeasurement]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MEASUREMENT_HEADER:
            raise ValueError(
                f"unexpected measurement header {header!r}; want {MEASUREMENT_HEADER!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(MEASUREMENT_HEADER):
                raise ValueError(f"line {line_no}: expected {len(MEASUREMENT_HEADER)} fields")
            ts = _parse_timestamp(row[0], line_no)
            household = row[1].strip()
            if not household:
                raise ValueError(f"line {line_no}: empty household_id")
            rec = RawMeasurement(
                timestamp=ts,
                household_id=household,
                pv_w=_parse_power(row[2], "pv_w", line_no),
                load_w=_parse_power(row[3], "load_w", line_no),
                ev_w=_parse_power(row[4], "ev_w", line_no),
                transaction_id=row[5].strip(),
            )
            by_household.setdefault(household, []).append(rec)
    for household, rows in by_household.items():
        rows.sort(key=lambda r: r.timestamp)
        for prev, cur in zip(rows, rows[1:]):
            if cur.timestamp == prev.timestamp:
                raise ValueError(
                    f"duplicate timestamp {cur.timestamp} for household {household}"
                )
    return by_household


def derive_transactions(rows: Sequence[RawMeasurement]) -> list[ChargingTransaction]:
    """Rebuild transactions from raw rows.

    Rows sharing a transaction_id form one transaction; unlabeled runs of
    ev_w > 0 get synthetic ids. Energy is the mean-power integral of the
    15-minute slots.
    """
    labeled: dict[str, list[RawMeasurement]] = {}
    runs: list[list[RawMeasurement]] = []
    for row in rows:
        if row.transaction_id:
            labeled.setdefault(row.transaction_id, []).append(row)
        elif row.ev_w > 0.0:
            if runs and runs[-1][-1].timestamp == row.timestamp - timedelta(minutes=15):
                runs[-1].append(row)
            else:
                runs.append([row])
    txs: list[ChargingTransaction] = []
    for key, members in labeled.items():
        energy = sum(m.ev_w for m in members) / 4.0 / 1000.0
        txs.append(
            ChargingTransaction(
                transaction_id=key,
                start=members[0].timestamp,
                end=members[-1].timestamp + timedelta(minutes=15),
                energy_kwh=energy,
            )
        )
    for i, members in enumerate(runs, start=1):
        energy = sum(m.ev_w for m in members) / 4.0 / 1000.0
        txs.append(
            ChargingTransaction(
                transaction_id=f"derived-{i:04d}",
                start=members[0].timestamp,
                end=members[-1].timestamp + timedelta(minutes=15),
                energy_kwh=energy,
            )
        )
    txs.sort(key=lambda tx: tx.start)
    return txs


def read_transactions_csv(path: str | Path) -> dict[str, list[ChargingTransaction]]:
    """Read the aggregated transaction table, grouped per household."""
    by_household: dict[str, list[ChargingTransaction]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRANSACTION_HEADER:
            raise ValueError(
                f"unexpected transaction header {header!r}; want {TRANSACTION_HEADER!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(TRANSACTION_HEADER):
                raise ValueError(f"line {line_no}: expected {len(TRANSACTION_HEADER)} fields")
            try:
                start = datetime.fromisoformat(row[2])
                end = datetime.fromisoformat(row[3])
                energy = float(row[4])
            except ValueError as exc:
                raise ValueError(f"line {line_no}: {exc}") from exc
            if energy < 0.0:
                raise ValueError(f"line {line_no}: negative energy rejected")
            tx = ChargingTransaction(row[1].strip(), start, end, energy)
            by_household.setdefault(row[0].strip(), []).append(tx)
    for txs in by_household.values():
        txs.sort(key=lambda tx: tx.start)
    return by_household


def write_transactions_csv(
    path: str | Path, household_id: str, txs: Iterable[ChargingTransaction]
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRANSACTION_HEADER)
        for tx in txs:
            writer.writerow(
                [
                    household_id,
                    tx.transaction_id,
                    tx.start.isoformat(),
                    tx.end.isoformat(),
                    repr(tx.energy_kwh),
                ]
            )


@dataclass
class HourlyChannels:
    """Hourly energy channels; NaN marks hours routed to gap filling."""

    timestamps: list[datetime]
    pv_kwh: np.ndarray
    demand_kwh: np.ndarray
    ev_kwh: np.ndarray


def resample_hourly(rows: Sequence[RawMeasurement]) -> HourlyChannels:
    """Aggregate 15-minute powers to hourly energies (mean power over 1 h).

    Hours missing any of their four quarter slots become NaN and are left
    for :func:`fill_gaps` to decide.
    """
    if not rows:
        raise ValueError("no measurement rows to resample")
    first = rows[0].timestamp.replace(minute=0)
    last = rows[-1].timestamp.replace(minute=0)
    n = int((last - first).total_seconds() // 3600) + 1
    sums = np.zeros((n, 3))
    counts = np.zeros(n, dtype=int)
    seen: set[tuple[int, int]] = set()
    for row in rows:
        idx = int((row.timestamp - first).total_seconds() // 3600)
        quarter = row.timestamp.minute // 15
        if (idx, quarter) in seen:
            raise ValueError(f"duplicate quarter slot at {row.timestamp}")
        seen.add((idx, quarter))
        sums[idx] += (row.pv_w, row.load_w, row.ev_w)
        counts[idx] += 1
    energies = sums / 4.0 / 1000.0  # mean power (W) over 4 slots x 1 h -> kWh
    energies[counts != 4] = np.nan
    timestamps = [first + timedelta(hours=i) for i in range(n)]
    return HourlyChannels(
        timestamps, energies[:, 0].copy(), energies[:, 1].copy(), energies[:, 2].copy()
    )


def _fill_channel(values: np.ndarray, max_gap_h: int) -> np.ndarray:
    """Quadratic gap interpolation on one channel.

    Each gap gets a parabola through its two flanking valid points plus the
    valid point nearest to the gap (earlier side wins ties); results clamp
    at zero. Gaps longer than ``max_gap_h`` or touching the series ends are
    rejected.
    """
    out = values.astype(float).copy()
    valid = ~np.isnan(out)
    if valid.all():
        return out
    if not valid.any():
        raise ValueError("channel has no valid data at all")
    idx = 0
    n = len(out)
    valid_indices = np.flatnonzero(valid)
    while idx < n:
        if valid[idx]:
            idx += 1
            continue
        gap_start = idx
        while idx < n and not valid[idx]:
            idx += 1
        gap_end = idx - 1
        gap_len = gap_end - gap_start + 1
        if gap_start == 0 or gap_end == n - 1:
            raise ValueError("gap touches the series boundary; cannot interpolate")
        if gap_len > max_gap_h:
            raise ValueError(
                f"gap of {gap_len} h exceeds the {max_gap_h} h interpolation limit"
            )
        left = gap_start - 1
        right = gap_end + 1
        third_candidates = [
            i for i in valid_indices if i != left and i != right
        ]
        xs = np.arange(gap_start, gap_end + 1, dtype=float)
        if third_candidates:
            def distance(i: int) -> tuple[float, int]:
                return (max(0, gap_start - i, i - gap_end), i)

            third = min(third_candidates, key=distance)
            coeffs = np.polyfit(
                np.array([left, right, third], dtype=float),
                np.array([out[left], out[right], out[third]]),
                2,
            )
            filled = np.polyval(coeffs, xs)
        else:
            # only the two flanking points exist: fall back to a straight line
            slope = (out[right] - out[left]) / (right - left)
            filled = out[left] + slope * (xs - left)
        out[gap_start : gap_end + 1] = np.maximum(filled, 0.0)
    return out


def fill_gaps(channels: HourlyChannels, max_gap_h: int = 5) -> HourlyChannels:
    """Interpolate short gaps on every channel; reject series with long ones."""
    return HourlyChannels(
        list(channels.timestamps),
        _fill_channel(channels.pv_kwh, max_gap_h),
        _fill_channel(channels.demand_kwh, max_gap_h),
        _fill_channel(channels.ev_kwh, max_gap_h),
    )


def infer_ev_capacity(transactions: Sequence[ChargingTransaction]) -> float:
    """Usable EV capacity: the largest energy any single transaction drew."""
    if not transactions:
        raise ValueError("cannot infer EV capacity without transactions")
    return max(tx.energy_kwh for tx in transactions)


def infer_pv_peak(rows: Sequence[RawMeasurement]) -> float:
    """Usable PV peak in kW: the largest 15-minute power reading."""
    if not rows:
        raise ValueError("cannot infer PV peak without measurements")
    return max(row.pv_w for row in rows) / 1000.0


def build_series(
    household_id: str,
    channels: HourlyChannels,
    transactions: Sequence[ChargingTransaction],
    bess_capacity_kwh: float,
    bess_power_kw: float,
    ev_capacity_kwh: float | None = None,
    pv_peak_kw: float | None = None,
    **spec_overrides: float,
) -> HouseholdSeries:
    """Assemble a validated hourly series with an inferred hardware spec."""
    cap = ev_capacity_kwh if ev_capacity_kwh is not None else infer_ev_capacity(transactions)
    peak = pv_peak_kw if pv_peak_kw is not None else float(np.max(channels.pv_kwh))
    spec = TechnicalSpec(
        bess_capacity_kwh=bess_capacity_kwh,
        bess_power_kw=bess_power_kw,
        ev_capacity_kwh=cap,
        pv_peak_kw=peak,
        **spec_overrides,
    )
    steps = tuple(
        HourStep(ts, float(pv), float(demand))
        for ts, pv, demand in zip(channels.timestamps, channels.pv_kwh, channels.demand_kwh)
    )
    return HouseholdSeries(household_id, steps, tuple(transactions), spec)


# --- split planning ----------------------------------------------------------


@dataclass(frozen=True)
class SplitConfig:
    """Repeating role pattern in days plus exact totals the plan must reach."""

    pattern: tuple[tuple[str, int], ...] = (("train", 15), ("eval", 5), ("test", 10))
    totals: tuple[tuple[str, int], ...] = (("train", 180), ("eval", 60), ("test", 125))


@dataclass(frozen=True)
class Segment:
    role: str
    start_day: int
    end_day: int

    @property
    def days(self) -> int:
        return self.end_day - self.start_day

    def step_range(self) -> tuple[int, int]:
        return self.start_day * 24, self.end_day * 24


@dataclass(frozen=True)
class SplitPlan:
    segments: tuple[Segment, ...]
    origin: datetime

    def by_role(self, role: str) -> list[Segment]:
        return [seg for seg in self.segments if seg.role == role]

    def day_totals(self) -> dict[str, int]:
        totals: dict[str, int] = {}
        for seg in self.segments:
            totals[seg.role] = totals.get(seg.role, 0) + seg.days
        return totals

    def segment_for(self, ts: datetime) -> Segment:
        day = int((ts - self.origin).total_seconds() // 86400)
        for seg in self.segments:
            if seg.start_day <= day < seg.end_day:
                return seg
        raise ValueError(f"{ts} outside the planned range")


def split(series: HouseholdSeries, config: SplitConfig = SplitConfig()) -> SplitPlan:
    """Assign whole days to train/eval/test without bisecting a transaction.

    The pattern repeats left to right; a boundary falling inside a
    transaction defers to the next transaction-free midnight, and the
    role's later segments shrink so every role lands exactly on its
    configured total.
    """
    if series.n_steps % 24 != 0:
        raise ValueError("series must cover whole days")
    if series.start.hour != 0 or series.start.minute != 0:
        raise ValueError("series must start at midnight")
    n_days = series.n_steps // 24
    totals = dict(config.totals)
    if sum(totals.values()) != n_days:
        raise ValueError(
            f"split totals cover {sum(totals.values())} days but the series has {n_days}"
        )

    def boundary_blocked(day: int) -> bool:
        ts = series.start + timedelta(days=day)
        return any(tx.start < ts < tx.end for tx in series.transactions)

    remaining = dict(totals)
    segments: list[Segment] = []
    cursor = 0
    pattern_idx = 0
    while cursor < n_days:
        role, nominal = config.pattern[pattern_idx % len(config.pattern)]
        pattern_idx += 1
        take = min(nominal, max(0, remaining[role]))
        if take == 0:
            if all(v <= 0 for v in remaining.values()):
                break
            continue
        end = cursor + take
        while end < n_days and boundary_blocked(end):
            end += 1
        end = min(end, n_days)
        remaining[role] -= end - cursor
        if segments and segments[-1].role == role and segments[-1].end_day == cursor:
            segments[-1] = Segment(role, segments[-1].start_day, end)
        else:
            segments.append(Segment(role, cursor, end))
        cursor = end
    if cursor != n_days or any(v != 0 for v in remaining.values()):
        raise ValueError("split infeasible: transaction layout defeats the day quotas")
    return SplitPlan(tuple(segments), series.start)


def plan_to_json(plan: SplitPlan) -> str:
    records = [
        {
            "role": seg.role,
            "start": (plan.origin + timedelta(days=seg.start_day)).isoformat(),
            "end": (plan.origin + timedelta(days=seg.end_day)).isoformat(),
        }
        for seg in plan.segments
    ]
    return json.dumps(records, indent=2)


def plan_from_json(text: str) -> SplitPlan:
    records = json.loads(text)
    if not records:
        raise ValueError("empty split plan")
    origin = datetime.fromisoformat(records[0]["start"])
    segments = []
    for rec in records:
        start = datetime.fromisoformat(rec["start"])
        end = datetime.fromisoformat(rec["end"])
        segments.append(
            Segment(
                rec["role"],
                int((start - origin).total_seconds() // 86400),
                int((end - origin).total_seconds() // 86400),
            )
        )
    return SplitPlan(tuple(segments), origin)


def interpolate_ev_soc(series: HouseholdSeries) -> np.ndarray:
    """Per-hour EV SoC inside transactions, linear from plug-in SoC to full.

    Hours outside any transaction are NaN; the SoC feature there is fixed
    at fraction 1 by convention.
    """
    from .env import snap_transactions  # local import to avoid a cycle

    soc = np.full(series.n_steps, np.nan)
    cap = series.spec.ev_capacity_kwh
    for sn in snap_transactions(series):
        length = sn.end_step - sn.start_step
        for t in range(sn.start_step, min(sn.end_step, series.n_steps)):
            frac = (t - sn.start_step) / length
            soc[t] = sn.start_soc_kwh + (cap - sn.start_soc_kwh) * frac
    return soc


def transaction_soc_profile(
    start_soc: float, capacity_kwh: float, duration_steps: int
) -> list[float]:
    """Hourly SoC checkpoints for one transaction, endpoints included."""
    return [
        start_soc + (capacity_kwh - start_soc) * k / duration_steps
        for k in range(duration_steps + 1)
    ]


# --- per-household artifact files -------------------------------------------

SERIES_HEADER = ["timestamp", "pv_kwh", "demand_kwh"]


def write_series_csv(path: str | Path, series: HouseholdSeries) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SERIES_HEADER)
        for hs in series.steps:
            writer.writerow([hs.timestamp.isoformat(), repr(hs.pv_kwh), repr(hs.demand_kwh)])


def read_series_csv(
    path: str | Path,
    household_id: str,
    transactions: Sequence[ChargingTransaction],
    spec: TechnicalSpec,
) -> HouseholdSeries:
    steps = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SERIES_HEADER:
            raise ValueError(f"{path}: unexpected series header {header!r}")
        for row in reader:
            steps.append(HourStep(datetime.fromisoformat(row[0]), float(row[1]), float(row[2])))
    return HouseholdSeries(household_id, tuple(steps), tuple(transactions), spec)


def spec_to_json(spec: TechnicalSpec) -> str:
    return json.dumps(
        {
            "bess_capacity_kwh": spec.bess_capacity_kwh,
            "bess_power_kw": spec.bess_power_kw,
            "ev_capacity_kwh": spec.ev_capacity_kwh,
            "ev_charger_power_kw": spec.ev_charger_power_kw,
            "pv_peak_kw": spec.pv_peak_kw,
            "bess_efficiency": spec.bess_efficiency,
            "bess_standing_loss": spec.bess_standing_loss,
        },
        indent=2,
    )


def spec_from_json(text: str) -> TechnicalSpec:
    return TechnicalSpec(**json.loads(text))
