"""Linear-program benchmark: perfect-foresight upper bound on grid profit.

One LP per contiguous segment maximizes feed-in revenue minus purchase
cost over the whole horizon, with battery and EV SoC chains as equality
constraints. Unmet EV demand at a transaction's end is a slack variable
priced like an external purchase, so the objective stays comparable with
simulated policies. The quadratic discomfort term has no linear form and
is deliberately absent: slack already prices unfinished charging.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .control import Policy, RolloutResult, rollout
from .domain import Action, HouseholdSeries, SimState, Tariff, TechnicalSpec
from .env import Frame, RewardWeights, build_frames

FEASIBILITY_TOL = 1e-7


@dataclass(frozen=True)
class LpTransaction:
    """A transaction's step range within one LP horizon, [start, end) local indices."""

    start: int
    end: int
    start_soc_kwh: float
    tx_id: str


@dataclass
class LpModel:
    """Sparse equality-form LP over one segment.

    Column layout: b_c | b_d | d_ev | x_p | x_f (T each), soc_b (T+1),
    one SoC chain of length L_j+1 per transaction, then one slack per
    transaction.
    """

    c: np.ndarray
    a_eq: sparse.csr_matrix
    b_eq: np.ndarray
    bounds: list[tuple[float, float | None]]
    n_steps: int
    transactions: list[LpTransaction]
    pv: np.ndarray
    demand: np.ndarray
    spec: TechnicalSpec
    tariff: Tariff
    soc_b0: float

    def col_bc(self, t: int) -> int:
        return t

    def col_bd(self, t: int) -> int:
        return self.n_steps + t

    def col_dev(self, t: int) -> int:
        return 2 * self.n_steps + t

    def col_xp(self, t: int) -> int:
        return 3 * self.n_steps + t

    def col_xf(self, t: int) -> int:
        return 4 * self.n_steps + t

    def col_socb(self, t: int) -> int:
        return 5 * self.n_steps + t


@dataclass
class LpSchedule:
    """Optimal flows of one segment plus the objective they achieve."""

    b_c: np.ndarray
    b_d: np.ndarray
    d_ev: np.ndarray
    x_p: np.ndarray
    x_f: np.ndarray
    soc_b: np.ndarray
    slack: np.ndarray
    objective_eur: float
    transactions: list[LpTransaction]


def _lp_transactions(frames: Sequence[Frame], spec: TechnicalSpec) -> list[LpTransaction]:
    txs: list[LpTransaction] = []
    t = 0
    n = len(frames)
    while t < n:
        frame = frames[t]
        if frame.connected and (t == 0 or frame.tx_start_soc_kwh is not None):
            if frame.tx_start_soc_kwh is None:
                raise ValueError("segment begins inside a transaction without a start SoC")
            end = t + frame.countdown_h
            if end > n:
                raise ValueError("transaction extends past the segment end")
            txs.append(LpTransaction(t, end, frame.tx_start_soc_kwh, frame.tx_id or ""))
            t = end
        else:
            t += 1
    return txs


def build_lp(
    frames: Sequence[Frame],
    spec: TechnicalSpec,
    tariff: Tariff,
    soc_b0_kwh: float = 0.0,
) -> LpModel:
    """Assemble the segment LP: balances, SoC dynamics, EV terminal slacks."""
    n = len(frames)
    if n == 0:
        raise ValueError("cannot build an LP over an empty segment")
    txs = _lp_transactions(frames, spec)
    pv = np.array([f.pv_kwh for f in frames])
    demand = np.array([f.demand_kwh for f in frames])
    connected = np.array([f.connected for f in frames])

    n_socb = n + 1
    tx_offsets: list[int] = []
    cursor = 5 * n + n_socb
    for tx in txs:
        tx_offsets.append(cursor)
        cursor += tx.end - tx.start + 1
    slack0 = cursor
    n_cols = slack0 + len(txs)

    c = np.zeros(n_cols)
    c[3 * n : 4 * n] = tariff.price_buy_eur_per_kwh  # x_p
    c[4 * n : 5 * n] = -tariff.price_sell_eur_per_kwh  # x_f
    c[slack0:] = tariff.price_buy_eur_per_kwh

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    b_eq: list[float] = []

    def emit(row: int, col: int, val: float) -> None:
        rows.append(row)
        cols.append(col)
        vals.append(val)

    row = 0
    # hourly balance: pv + b_d + x_p = demand + d_ev + b_c + x_f
    for t in range(n):
        emit(row, n + t, 1.0)  # b_d
        emit(row, 3 * n + t, 1.0)  # x_p
        emit(row, t, -1.0)  # b_c
        emit(row, 2 * n + t, -1.0)  # d_ev
        emit(row, 4 * n + t, -1.0)  # x_f
        b_eq.append(demand[t] - pv[t])
        row += 1
    # battery dynamics: soc[t+1] = (1-loss)soc[t] + eta*b_c[t] - b_d[t]
    keep = 1.0 - spec.bess_standing_loss
    for t in range(n):
        emit(row, 5 * n + t + 1, 1.0)
        emit(row, 5 * n + t, -keep)
        emit(row, t, -spec.bess_efficiency)
        emit(row, n + t, 1.0)
        b_eq.append(0.0)
        row += 1
    # EV SoC chains and full-at-departure slacks
    for j, tx in enumerate(txs):
        off = tx_offsets[j]
        for k in range(tx.end - tx.start):
            emit(row, off + k + 1, 1.0)
            emit(row, off + k, -1.0)
            emit(row, 2 * n + tx.start + k, -1.0)
            b_eq.append(0.0)
            row += 1
        emit(row, off + tx.end - tx.start, 1.0)
        emit(row, slack0 + j, 1.0)
        b_eq.append(spec.ev_capacity_kwh)
        row += 1

    bounds: list[tuple[float, float | None]] = []
    bounds += [(0.0, spec.bess_power_kw)] * n  # b_c
    bounds += [(0.0, spec.bess_power_kw)] * n  # b_d
    for t in range(n):  # d_ev only while plugged in
        bounds.append((0.0, spec.ev_charger_power_kw if connected[t] else 0.0))
    bounds += [(0.0, None)] * (2 * n)  # x_p, x_f
    bounds.append((soc_b0_kwh, soc_b0_kwh))
    bounds += [(0.0, spec.bess_capacity_kwh)] * n
    for tx in txs:
        bounds.append((tx.start_soc_kwh, tx.start_soc_kwh))
        bounds += [(0.0, spec.ev_capacity_kwh)] * (tx.end - tx.start)
    bounds += [(0.0, spec.ev_capacity_kwh)] * len(txs)

    a_eq = sparse.coo_matrix((vals, (rows, cols)), shape=(row, n_cols)).tocsr()
    return LpModel(
        c=c,
        a_eq=a_eq,
        b_eq=np.array(b_eq),
        bounds=bounds,
        n_steps=n,
        transactions=txs,
        pv=pv,
        demand=demand,
        spec=spec,
        tariff=tariff,
        soc_b0=soc_b0_kwh,
    )


def solve_lp(model: LpModel) -> LpSchedule:
    """Solve the segment LP and pick the least-traffic point on the optimal face.

    Profit ties admit schedules the simulator cannot realize (store surplus,
    export it later: value-neutral when charging is efficient), so a second
    solve minimizes total battery throughput subject to optimal profit.
    """
    res = linprog(
        model.c,
        A_eq=model.a_eq,
        b_eq=model.b_eq,
        bounds=model.bounds,
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"LP solve failed: {res.message}")
    x = res.x
    n = model.n_steps
    traffic = np.zeros_like(model.c)
    traffic[0 : 2 * n] = 1.0
    res2 = linprog(
        traffic,
        A_ub=model.c[None, :],
        b_ub=np.array([float(model.c @ x)]),
        A_eq=model.a_eq,
        b_eq=model.b_eq,
        bounds=model.bounds,
        method="highs",
    )
    if res2.success:
        x = res2.x
    residual = np.max(np.abs(model.a_eq @ x - model.b_eq)) if model.b_eq.size else 0.0
    if residual > FEASIBILITY_TOL:
        raise RuntimeError(f"LP solution violates balances by {residual:.2e} kWh")
    return LpSchedule(
        b_c=x[0:n],
        b_d=x[n : 2 * n],
        d_ev=x[2 * n : 3 * n],
        x_p=x[3 * n : 4 * n],
        x_f=x[4 * n : 5 * n],
        soc_b=x[5 * n : 6 * n + 1],
        slack=x[len(x) - len(model.transactions) :] if model.transactions else np.zeros(0),
        objective_eur=-float(model.c @ x),
        transactions=model.transactions,
    )


def schedule_policy(schedule: LpSchedule, spec: TechnicalSpec) -> Policy:
    """Replay an LP schedule through the simulator via derived SoC targets.

    Targets are chosen so the simulator's flow rules reproduce the LP's
    charge decisions exactly; discharge is automatic in both models.
    """
    counter = {"t": 0}

    def policy(state: SimState) -> Action:
        t = counter["t"]
        counter["t"] += 1
        keep = 1.0 - spec.bess_standing_loss
        stored_target = keep * state.soc_b_kwh + spec.bess_efficiency * schedule.b_c[t]
        target_bess = (
            min(1.0, max(0.0, stored_target / spec.bess_capacity_kwh))
            if spec.bess_capacity_kwh > 0.0
            else 0.0
        )
        if state.connected:
            target_ev = min(
                1.0, max(0.0, (state.soc_ev_kwh + schedule.d_ev[t]) / spec.ev_capacity_kwh)
            )
        else:
            target_ev = 1.0
        return Action(target_bess=target_bess, target_ev=target_ev)

    return policy


def replay_schedule(
    schedule: LpSchedule,
    frames: Sequence[Frame],
    spec: TechnicalSpec,
    tariff: Tariff,
    weights: RewardWeights | None = None,
    soc_b0_kwh: float = 0.0,
) -> RolloutResult:
    """Run the simulator under the schedule's derived targets."""
    return rollout(
        frames,
        schedule_policy(schedule, spec),
        spec,
        tariff,
        weights or RewardWeights(),
        soc_b0_kwh=soc_b0_kwh,
    )


@dataclass
class MpcResult:
    schedules: list[LpSchedule]
    profit_eur: float
    day_count: float

    @property
    def profit_per_day(self) -> float:
        return self.profit_eur / self.day_count


def mpc_profit(
    series: HouseholdSeries,
    segments: Sequence[tuple[int, int]],
    tariff: Tariff,
) -> MpcResult:
    """Solve one LP per segment with battery SoC chained across contiguous ones.

    Slack purchases count toward the profit like any external purchase, so
    the result is directly comparable with simulated policies.
    """
    frames_all = build_frames(series)
    soc_b = 0.0
    prev_end: int | None = None
    schedules: list[LpSchedule] = []
    profit = 0.0
    days = 0.0
    for seg_start, seg_end in segments:
        if prev_end is not None and seg_start != prev_end:
            soc_b = 0.0
        model = build_lp(frames_all[seg_start:seg_end], series.spec, tariff, soc_b)
        schedule = solve_lp(model)
        schedules.append(schedule)
        profit += schedule.objective_eur
        days += (seg_end - seg_start) / 24.0
        soc_b = float(schedule.soc_b[-1])
        prev_end = seg_end
    return MpcResult(schedules=schedules, profit_eur=profit, day_count=days)


SCHEDULE_HEADER = "t,pv,demand,d_ev,b_c,b_d,purchase,feedin,soc_b"


def write_schedule_csv(path: str | Path, frames: Sequence[Frame], schedule: LpSchedule) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCHEDULE_HEADER.split(","))
        for t, frame in enumerate(frames):
            writer.writerow(
                [
                    frame.timestamp.isoformat(),
                    repr(frame.pv_kwh),
                    repr(frame.demand_kwh),
                    repr(float(schedule.d_ev[t])),
                    repr(float(schedule.b_c[t])),
                    repr(float(schedule.b_d[t])),
                    repr(float(schedule.x_p[t])),
                    repr(float(schedule.x_f[t])),
                    repr(float(schedule.soc_b[t])),
                ]
            )
