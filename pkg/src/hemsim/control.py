"""Policy rollouts, the rule-based baseline and comparison metrics.

The rule-based priority manager (RBPM) mirrors factory-default behavior:
charge the EV at full power while it is plugged in, and aim the battery
at "full" whenever PV would exceed demand plus the planned EV draw.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .domain import Action, HouseholdSeries, SimState, Tariff, TechnicalSpec
from .env import (
    Frame,
    RewardWeights,
    StepOutcome,
    build_frames,
    ev_charge,
    initial_state,
    step,
    terminal_frame,
)

METRICS_HEADER = "household,policy,seed,split,profit_per_day,discomfort,potential_realized"

Policy = Callable[[SimState], Action]


def rbpm_action(state: SimState, spec: TechnicalSpec) -> Action:
    """Factory-default action: EV to full, battery to full only on PV surplus."""
    planned_ev = ev_charge(
        1.0, state.soc_ev_kwh, spec.ev_capacity_kwh, spec.ev_charger_power_kw, state.connected
    )
    surplus = state.pv_kwh - state.demand_kwh - planned_ev
    return Action(target_bess=1.0 if surplus > 0.0 else 0.0, target_ev=1.0)


def rbpm_policy(spec: TechnicalSpec) -> Policy:
    return lambda state: rbpm_action(state, spec)


@dataclass
class RolloutResult:
    """Trace and aggregate metrics of one policy run over a frame sequence."""

    frames: list[Frame]
    states: list[SimState]
    outcomes: list[StepOutcome]
    profit_eur: float
    day_count: float
    shortfalls_pp: list[float]

    @property
    def profit_per_day(self) -> float:
        return self.profit_eur / self.day_count

    @property
    def discomfort_score(self) -> float | None:
        """Mean SoC shortfall at disconnect in percentage points; None without transactions."""
        if not self.shortfalls_pp:
            return None
        return sum(self.shortfalls_pp) / len(self.shortfalls_pp)

    @property
    def transaction_count(self) -> int:
        return len(self.shortfalls_pp)


def grid_profit(flows_purchase: float, flows_feedin: float, external: float,
                tariff: Tariff) -> float:
    return (
        tariff.price_sell_eur_per_kwh * flows_feedin
        - tariff.price_buy_eur_per_kwh * (flows_purchase + external)
    )


def rollout(
    frames: Sequence[Frame],
    policy: Policy,
    spec: TechnicalSpec,
    tariff: Tariff,
    weights: RewardWeights,
    soc_b0_kwh: float = 0.0,
    soc_ev0_kwh: float | None = None,
) -> RolloutResult:
    """Run a policy over consecutive frames and collect flows plus metrics.

    The battery starts at ``soc_b0_kwh``; a sequence that begins inside a
    transaction needs ``soc_ev0_kwh`` unless the first frame opens one.
    """
    if not frames:
        raise ValueError("cannot roll out over an empty frame sequence")
    state = initial_state(frames[0], soc_b0_kwh, spec, soc_ev0_kwh)
    states: list[SimState] = []
    outcomes: list[StepOutcome] = []
    profit = 0.0
    shortfalls: list[float] = []
    for t, frame in enumerate(frames):
        nxt = frames[t + 1] if t + 1 < len(frames) else terminal_frame(frame)
        action = policy(state)
        outcome = step(state, action, nxt, spec, tariff, weights)
        states.append(state)
        outcomes.append(outcome)
        profit += grid_profit(
            outcome.flows.grid_purchase_kwh,
            outcome.flows.grid_feedin_kwh,
            outcome.flows.external_ev_kwh,
            tariff,
        )
        if outcome.disconnect_now:
            shortfalls.append(100.0 * outcome.flows.external_ev_kwh / spec.ev_capacity_kwh)
        state = outcome.next_state
    return RolloutResult(
        frames=list(frames),
        states=states,
        outcomes=outcomes,
        profit_eur=profit,
        day_count=len(frames) / 24.0,
        shortfalls_pp=shortfalls,
    )


def discomfort_score(outcomes: Sequence[StepOutcome], ev_capacity_kwh: float) -> float | None:
    """Mean disconnect shortfall in percentage points over completed transactions."""
    shortfalls = [
        100.0 * oc.flows.external_ev_kwh / ev_capacity_kwh
        for oc in outcomes
        if oc.disconnect_now
    ]
    if not shortfalls:
        return None
    return sum(shortfalls) / len(shortfalls)


def rollout_segments(
    series: HouseholdSeries,
    segments: Sequence[tuple[int, int]],
    policy: Policy,
    tariff: Tariff,
    weights: RewardWeights,
) -> RolloutResult:
    """Roll out over several [start, end) step ranges of one household.

    Each segment starts with an empty battery unless it directly abuts the
    previous one, in which case the SoC carries over (segments of one split
    role are processed in calendar order).
    """
    frames_all = build_frames(series)
    combined: RolloutResult | None = None
    soc_b = 0.0
    prev_end: int | None = None
    for seg_start, seg_end in segments:
        if seg_start >= seg_end:
            raise ValueError("empty segment")
        if prev_end is not None and seg_start != prev_end:
            soc_b = 0.0
        seg_frames = frames_all[seg_start:seg_end]
        if seg_frames[0].connected and seg_frames[0].tx_start_soc_kwh is None:
            raise ValueError("segment boundary bisects a transaction")
        result = rollout(seg_frames, policy, series.spec, tariff, weights, soc_b0_kwh=soc_b)
        soc_b = result.outcomes[-1].next_state.soc_b_kwh
        prev_end = seg_end
        if combined is None:
            combined = result
        else:
            combined.frames.extend(result.frames)
            combined.states.extend(result.states)
            combined.outcomes.extend(result.outcomes)
            combined.profit_eur += result.profit_eur
            combined.day_count += result.day_count
            combined.shortfalls_pp.extend(result.shortfalls_pp)
    assert combined is not None
    return combined


@dataclass(frozen=True)
class PotentialRealized:
    """Share of the RBPM-to-MPC gap a policy captures, clamped to [0, 1]."""

    fraction: float
    zero_potential: bool


def potential_realized(
    policy_profit: float, rbpm_profit: float, mpc_profit: float, eps: float = 1e-9
) -> PotentialRealized:
    """Position of a policy between the RBPM floor and the MPC ceiling."""
    if mpc_profit < rbpm_profit - eps:
        raise ValueError("MPC profit below RBPM profit: benchmark inputs are inconsistent")
    gap = mpc_profit - rbpm_profit
    if gap <= eps:
        return PotentialRealized(0.0, True)
    fraction = (policy_profit - rbpm_profit) / gap
    return PotentialRealized(min(1.0, max(0.0, fraction)), False)


def avoided_cost_eur(shifted_kwh: float, tariff: Tariff) -> float:
    """Value of shifting a purchase onto own surplus: buy price minus lost feed-in."""
    return shifted_kwh * (tariff.price_buy_eur_per_kwh - tariff.price_sell_eur_per_kwh)


@dataclass(frozen=True)
class MetricsRow:
    household: str
    policy: str
    seed: int | None
    split: str
    profit_per_day: float
    discomfort: float | None
    potential_realized: float | None


def write_metrics_csv(path: str | Path, rows: Sequence[MetricsRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER.split(","))
        for row in rows:
            writer.writerow(
                [
                    row.household,
                    row.policy,
                    "" if row.seed is None else row.seed,
                    row.split,
                    repr(row.profit_per_day),
                    "" if row.discomfort is None else repr(row.discomfort),
                    "" if row.potential_realized is None else repr(row.potential_realized),
                ]
            )


def read_metrics_csv(path: str | Path) -> list[MetricsRow]:
    rows: list[MetricsRow] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_HEADER.split(","):
            raise ValueError(f"{path}: unexpected metrics header")
        for rec in reader:
            rows.append(
                MetricsRow(
                    household=rec["household"],
                    policy=rec["policy"],
                    seed=int(rec["seed"]) if rec["seed"] else None,
                    split=rec["split"],
                    profit_per_day=float(rec["profit_per_day"]),
                    discomfort=float(rec["discomfort"]) if rec["discomfort"] else None,
                    potential_realized=(
                        float(rec["potential_realized"]) if rec["potential_realized"] else None
                    ),
                )
            )
    return rows
