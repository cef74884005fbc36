"""Deterministic hourly MDP for one prosumer household.

Flow priority within a step: PV serves household demand first, surplus
goes to the EV, then to the BESS, and the grid balances the remainder.
The controller only sets charge targets; BESS discharge is automatic
whenever demand (including EV charging) exceeds PV.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

from .domain import (
    Action,
    ChargingTransaction,
    EnergyFlows,
    HouseholdSeries,
    SimState,
    Tariff,
    TechnicalSpec,
    hour_angle,
    season_of,
    start_soc_kwh,
)

TRACE_HEADER = "t,pv,demand,d_ev,b_c,b_d,purchase,feedin,soc_b,soc_ev,reward"


@dataclass(frozen=True)
class RewardWeights:
    """Weights of the comfort terms in the reward."""

    discomfort_weight: float = 0.01
    penalty_weight: float = 0.1
    discomfort_kind: str = "quadratic"


@dataclass(frozen=True)
class StepOutcome:
    next_state: SimState
    flows: EnergyFlows
    reward: float
    disconnect_now: bool


@dataclass(frozen=True)
class Frame:
    """Exogenous description of one hour, independent of any policy.

    ``tx_start_soc_kwh`` is set on the frame where a transaction begins;
    ``tx_id`` names the active transaction for attribution.
    """

    timestamp: datetime
    pv_kwh: float
    demand_kwh: float
    connected: bool
    countdown_h: int
    tx_start_soc_kwh: float | None = None
    tx_id: str | None = None


def ev_charge(
    target_ev: float,
    soc_ev_kwh: float,
    ev_capacity_kwh: float,
    charger_power_kw: float,
    connected: bool,
) -> float:
    """Energy drawn by the EV this hour: rate-limited progress toward the target SoC."""
    if not connected:
        return 0.0
    return max(0.0, min(charger_power_kw, target_ev * ev_capacity_kwh - soc_ev_kwh))


def bess_charge(
    residual_pv_kwh: float, target_bess: float, soc_b_kwh: float, spec: TechnicalSpec
) -> float:
    """Energy drawn from PV surplus into the battery.

    The request toward the target is inflated by 1/efficiency so the
    stored amount (efficiency * drawn) lands on the target; PV surplus
    and the inverter rating cap what can actually be drawn.
    """
    headroom = target_bess * spec.bess_capacity_kwh - (1.0 - spec.bess_standing_loss) * soc_b_kwh
    request = headroom / spec.bess_efficiency
    return max(0.0, min(residual_pv_kwh, spec.bess_power_kw, request))


def bess_discharge(residual_demand_kwh: float, soc_b_kwh: float, spec: TechnicalSpec) -> float:
    """Automatic discharge covering residual demand, limited by rate and stock.

    The stock bound uses the post-decay level (1-loss)*soc so the SoC can
    never go negative once the standing loss is applied.
    """
    available = (1.0 - spec.bess_standing_loss) * soc_b_kwh
    return max(0.0, min(residual_demand_kwh, spec.bess_power_kw, available))


def balance(
    pv_kwh: float, demand_kwh: float, ev_charge_kwh: float, b_c_kwh: float, b_d_kwh: float
) -> tuple[float, float]:
    """Grid purchase and feed-in closing the step's energy balance.

    Exactly one of charge/discharge may be nonzero; the complementary
    flows are computed so purchase * feedin == 0 holds exactly.
    """
    if b_c_kwh > 0.0 and b_d_kwh > 0.0:
        raise ValueError("battery cannot charge and discharge within one step")
    net = pv_kwh + b_d_kwh - demand_kwh - ev_charge_kwh - b_c_kwh
    purchase = max(0.0, -net)
    feedin = max(0.0, net)
    return purchase, feedin


def reward(
    flows: EnergyFlows,
    soc_ev_fraction: float,
    disconnect_now: bool,
    action: Action,
    connected: bool,
    tariff: Tariff,
    weights: RewardWeights,
) -> float:
    """Step reward: grid cashflow minus comfort terms.

    Discomfort prices the SoC shortfall at disconnect in percentage
    points (so a 10% gap at weight 0.01 costs 1 EUR with the quadratic
    form); the penalty discourages low EV targets while the car is away.
    """
    value = tariff.price_sell_eur_per_kwh * flows.grid_feedin_kwh
    value -= tariff.price_buy_eur_per_kwh * (flows.grid_purchase_kwh + flows.external_ev_kwh)
    if disconnect_now:
        shortfall_pp = 100.0 * (1.0 - soc_ev_fraction)
        if weights.discomfort_kind == "quadratic":
            value -= weights.discomfort_weight * shortfall_pp**2
        else:
            value -= weights.discomfort_weight * shortfall_pp
    if not connected:
        value -= weights.penalty_weight * (1.0 - action.target_ev)
    return value


def step(
    state: SimState,
    action: Action,
    next_frame: Frame,
    spec: TechnicalSpec,
    tariff: Tariff,
    weights: RewardWeights,
) -> StepOutcome:
    """Advance one hour: resolve flows, pay the reward, build the next state."""
    d_ev = ev_charge(
        action.target_ev,
        state.soc_ev_kwh,
        spec.ev_capacity_kwh,
        spec.ev_charger_power_kw,
        state.connected,
    )
    residual_pv = state.pv_kwh - state.demand_kwh - d_ev
    if residual_pv > 0.0:
        b_c = bess_charge(residual_pv, action.target_bess, state.soc_b_kwh, spec)
        b_d = 0.0
    else:
        b_c = 0.0
        b_d = bess_discharge(-residual_pv, state.soc_b_kwh, spec)
    purchase, feedin = balance(state.pv_kwh, state.demand_kwh, d_ev, b_c, b_d)

    soc_b_next = (
        (1.0 - spec.bess_standing_loss) * state.soc_b_kwh + spec.bess_efficiency * b_c - b_d
    )
    soc_ev_mid = state.soc_ev_kwh + d_ev

    disconnect_now = state.connected and state.countdown_h == 1
    external = 0.0
    if disconnect_now:
        external = max(0.0, spec.ev_capacity_kwh - soc_ev_mid)
    soc_ev_fraction = min(1.0, soc_ev_mid / spec.ev_capacity_kwh)

    flows = EnergyFlows(
        ev_charge_kwh=d_ev,
        bess_charge_kwh=b_c,
        bess_discharge_kwh=b_d,
        grid_purchase_kwh=purchase,
        grid_feedin_kwh=feedin,
        purchase_for_ev_kwh=min(d_ev, purchase),
        external_ev_kwh=external,
    )
    r = reward(flows, soc_ev_fraction, disconnect_now, action, state.connected, tariff, weights)

    if next_frame.connected:
        if next_frame.tx_start_soc_kwh is not None:
            soc_ev_next = next_frame.tx_start_soc_kwh
        elif state.connected and not disconnect_now:
            soc_ev_next = soc_ev_mid
        else:
            raise ValueError(
                f"frame {next_frame.timestamp}: transaction continues without a start SoC"
            )
    else:
        soc_ev_next = spec.ev_capacity_kwh
    hour_cos, hour_sin = hour_angle(next_frame.timestamp.hour)
    next_state = SimState(
        soc_b_kwh=soc_b_next,
        soc_ev_kwh=soc_ev_next,
        connected=next_frame.connected,
        countdown_h=next_frame.countdown_h,
        hour_cos=hour_cos,
        hour_sin=hour_sin,
        season=season_of(next_frame.timestamp),
        demand_kwh=next_frame.demand_kwh,
        pv_kwh=next_frame.pv_kwh,
    )
    return StepOutcome(next_state, flows, r, disconnect_now)


# --- exogenous frame construction ------------------------------------------


@dataclass(frozen=True)
class SnappedTransaction:
    """A transaction mapped onto the hourly grid: connected steps [start_step, end_step)."""

    tx: ChargingTransaction
    start_step: int
    end_step: int
    start_soc_kwh: float


def snap_transactions(series: HouseholdSeries) -> list[SnappedTransaction]:
    """Map transactions to whole-hour steps: floor the start, ceil the end.

    When snapping makes neighbours touch, the later start defers to the
    earlier end; a collision that cannot be resolved this way raises.
    """
    snapped: list[SnappedTransaction] = []
    prev_end = 0
    for tx in series.transactions:
        start = math.floor(series.hour_index(tx.start))
        end = math.ceil(series.hour_index(tx.end))
        if start < prev_end:
            start = prev_end
        if end <= start:
            raise ValueError(
                f"transaction {tx.transaction_id} vanishes after snapping to hours"
            )
        if start < 0 or end > series.n_steps:
            raise ValueError(f"transaction {tx.transaction_id} outside the series range")
        soc0 = (
            tx.start_soc_kwh
            if tx.start_soc_kwh is not None
            else start_soc_kwh(tx.energy_kwh, series.spec.ev_capacity_kwh)
        )
        snapped.append(SnappedTransaction(tx, start, end, soc0))
        prev_end = end
    return snapped


def build_frames(series: HouseholdSeries) -> list[Frame]:
    """One frame per hourly step, with connection status and countdowns filled in."""
    frames: list[Frame] = []
    by_step: dict[int, SnappedTransaction] = {}
    for sn in snap_transactions(series):
        for t in range(sn.start_step, sn.end_step):
            by_step[t] = sn
    for t, hs in enumerate(series.steps):
        sn = by_step.get(t)
        if sn is None:
            frames.append(Frame(hs.timestamp, hs.pv_kwh, hs.demand_kwh, False, -1))
        else:
            frames.append(
                Frame(
                    hs.timestamp,
                    hs.pv_kwh,
                    hs.demand_kwh,
                    True,
                    sn.end_step - t,
                    sn.start_soc_kwh if t == sn.start_step else None,
                    sn.tx.transaction_id,
                )
            )
    return frames


def terminal_frame(last: Frame) -> Frame:
    """Padding frame after a segment's final step; only its clock fields matter."""
    return Frame(last.timestamp + timedelta(hours=1), 0.0, 0.0, False, -1)


def initial_state(frame: Frame, soc_b_kwh: float, spec: TechnicalSpec,
                  soc_ev_kwh: float | None = None) -> SimState:
    """State at a segment's first frame. A mid-transaction start needs an EV SoC."""
    if frame.connected:
        soc_ev = frame.tx_start_soc_kwh if frame.tx_start_soc_kwh is not None else soc_ev_kwh
        if soc_ev is None:
            raise ValueError("segment starts mid-transaction: initial EV SoC required")
    else:
        soc_ev = spec.ev_capacity_kwh
    hour_cos, hour_sin = hour_angle(frame.timestamp.hour)
    return SimState(
        soc_b_kwh=soc_b_kwh,
        soc_ev_kwh=soc_ev,
        connected=frame.connected,
        countdown_h=frame.countdown_h,
        hour_cos=hour_cos,
        hour_sin=hour_sin,
        season=season_of(frame.timestamp),
        demand_kwh=frame.demand_kwh,
        pv_kwh=frame.pv_kwh,
    )


def build_state(
    series: HouseholdSeries, t: int, soc_b_kwh: float, soc_ev_kwh: float | None = None
) -> SimState:
    """Assemble the observable state at step ``t`` of a household series."""
    frames = build_frames(series)
    frame = frames[t]
    if frame.connected and soc_ev_kwh is None and frame.tx_start_soc_kwh is None:
        raise ValueError("EV SoC required for a mid-transaction step")
    return initial_state(frame, soc_b_kwh, series.spec, soc_ev_kwh)


def state_features(state: SimState, spec: TechnicalSpec) -> list[float]:
    """8-dim feature vector: SoC fractions, countdown, clock, season, demand, PV."""
    soc_ev_frac = 1.0 if not state.connected else state.soc_ev_kwh / spec.ev_capacity_kwh
    soc_b_frac = (
        state.soc_b_kwh / spec.bess_capacity_kwh if spec.bess_capacity_kwh > 0.0 else 0.0
    )
    return [
        soc_b_frac,
        soc_ev_frac,
        float(state.countdown_h),
        state.hour_cos,
        state.hour_sin,
        state.season / 3.0,
        state.demand_kwh,
        state.pv_kwh,
    ]


def write_trace_csv(path: str | Path, frames: list[Frame], outcomes: list[StepOutcome],
                    states: list[SimState]) -> None:
    """Step-by-step flow trace; one row per hour, floats in shortest round-trip form."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER.split(","))
        for frame, outcome, state in zip(frames, outcomes, states):
            writer.writerow(
                [
                    frame.timestamp.isoformat(),
                    repr(frame.pv_kwh),
                    repr(frame.demand_kwh),
                    repr(outcome.flows.ev_charge_kwh),
                    repr(outcome.flows.bess_charge_kwh),
                    repr(outcome.flows.bess_discharge_kwh),
                    repr(outcome.flows.grid_purchase_kwh),
                    repr(outcome.flows.grid_feedin_kwh),
                    repr(state.soc_b_kwh),
                    repr(state.soc_ev_kwh),
                    repr(outcome.reward),
                ]
            )
