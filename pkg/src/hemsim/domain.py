"""Core value types for the prosumer-household toolkit.

Conventions shared by every module:

* energies are kWh on a 1-hour grid, so a kW power limit equals the
  maximum kWh that can move within one step;
* prices are EUR/kWh;
* state of charge (SoC) is kept in kWh internally, while controller and
  network facing features use fractions of capacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import datetime, timedelta


def season_of(ts: datetime) -> int:
    """Meteorological season index: Dec-Feb 0, Mar-May 1, Jun-Aug 2, Sep-Nov 3."""
    return ts.month % 12 // 3


def hour_angle(hour: float) -> tuple[float, float]:
    """(cos, sin) encoding of the hour of day on the 24-hour unit circle."""
    angle = 2.0 * math.pi * hour / 24.0
    return math.cos(angle), math.sin(angle)


def hour_from_angle(hour_cos: float, hour_sin: float) -> int:
    """Invert :func:`hour_angle` back to a whole hour 0..23."""
    angle = math.atan2(hour_sin, hour_cos)
    return round(angle * 24.0 / (2.0 * math.pi)) % 24


@dataclass(frozen=True)
class Tariff:
    """Fixed buy/sell prices in EUR/kWh. Purchase must cost more than feed-in earns."""

    price_buy_eur_per_kwh: float
    price_sell_eur_per_kwh: float

    def __post_init__(self) -> None:
        if self.price_sell_eur_per_kwh < 0.0:
            raise ValueError("feed-in price must be non-negative")
        if self.price_buy_eur_per_kwh <= self.price_sell_eur_per_kwh:
            raise ValueError("buy price must exceed sell price")


#: Named tariff presets selectable from the CLI.
TARIFF_PRESETS: dict[str, Tariff] = {
    "table": Tariff(0.40, 0.08),
    "sec53": Tariff(0.41, 0.09),
}


@dataclass(frozen=True)
class TechnicalSpec:
    """Hardware parameters of one household.

    ``bess_standing_loss`` is the fraction of stored energy lost per idle
    hour (0.003% -> 3e-5), ``bess_efficiency`` applies to charging only.
    """

    bess_capacity_kwh: float
    bess_power_kw: float
    ev_capacity_kwh: float
    ev_charger_power_kw: float = 11.0
    pv_peak_kw: float = 0.0
    bess_efficiency: float = 0.95
    bess_standing_loss: float = 3e-5

    def __post_init__(self) -> None:
        if self.bess_capacity_kwh < 0.0 or self.bess_power_kw < 0.0:
            raise ValueError("BESS capacity and power must be non-negative")
        if self.ev_capacity_kwh <= 0.0:
            raise ValueError("EV capacity must be positive")
        if self.ev_charger_power_kw <= 0.0:
            raise ValueError("charger power must be positive")
        if self.pv_peak_kw < 0.0:
            raise ValueError("PV peak must be non-negative")
        if not 0.0 < self.bess_efficiency <= 1.0:
            raise ValueError("charging efficiency must lie in (0, 1]")
        if not 0.0 <= self.bess_standing_loss < 1.0:
            raise ValueError("standing loss must lie in [0, 1)")


@dataclass(frozen=True)
class HourStep:
    """One hour of exogenous data: PV generation and non-EV household demand."""

    timestamp: datetime
    pv_kwh: float
    demand_kwh: float

    def __post_init__(self) -> None:
        if self.pv_kwh < 0.0 or self.demand_kwh < 0.0:
            raise ValueError(f"negative energy at {self.timestamp}")


@dataclass(frozen=True)
class ChargingTransaction:
    """One EV plug-in interval with the total energy it drew.

    ``start_soc_kwh`` defaults to capacity minus energy (charging to full
    consumes exactly the observed energy); it is resolved lazily because
    the usable capacity is inferred from the whole transaction set.
    """

    transaction_id: str
    start: datetime
    end: datetime
    energy_kwh: float
    start_soc_kwh: float | None = None

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise ValueError(f"transaction {self.transaction_id}: end must follow start")
        if self.energy_kwh < 0.0:
            raise ValueError(f"transaction {self.transaction_id}: negative energy")

    @property
    def duration_h(self) -> float:
        return (self.end - self.start).total_seconds() / 3600.0


def start_soc_kwh(energy_kwh: float, ev_capacity_kwh: float) -> float:
    """SoC at plug-in so that charging to full consumes exactly ``energy_kwh``."""
    if energy_kwh > ev_capacity_kwh + 1e-9:
        raise ValueError("transaction energy exceeds usable EV capacity")
    return max(0.0, ev_capacity_kwh - energy_kwh)


@dataclass(frozen=True)
class HouseholdSeries:
    """A household's hourly year: steps, EV transactions and hardware spec."""

    household_id: str
    steps: tuple[HourStep, ...]
    transactions: tuple[ChargingTransaction, ...]
    spec: TechnicalSpec

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(
            self, "transactions", tuple(sorted(self.transactions, key=lambda tx: tx.start))
        )

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def start(self) -> datetime:
        return self.steps[0].timestamp

    def hour_index(self, ts: datetime) -> float:
        return (ts - self.start).total_seconds() / 3600.0


def validate_household(series: HouseholdSeries) -> list[str]:
    """Collect consistency violations; an empty list means the series is usable.

    Checks hourly contiguity, transaction ordering/overlap, range containment
    and that no transaction drew more than the usable EV capacity.
    """
    problems: list[str] = []
    for prev, cur in zip(series.steps, series.steps[1:]):
        if cur.timestamp - prev.timestamp != timedelta(hours=1):
            problems.append(f"steps not hourly-contiguous at {cur.timestamp}")
    if series.steps and series.steps[0].timestamp.minute != 0:
        problems.append("series does not start on a whole hour")
    horizon_start = series.steps[0].timestamp if series.steps else None
    horizon_end = (
        series.steps[-1].timestamp + timedelta(hours=1) if series.steps else None
    )
    txs = series.transactions
    for prev, cur in zip(txs, txs[1:]):
        if cur.start < prev.end:
            problems.append(
                f"transactions {prev.transaction_id} and {cur.transaction_id} overlap"
            )
    for tx in txs:
        if horizon_start is not None and (tx.start < horizon_start or tx.end > horizon_end):
            problems.append(f"transaction {tx.transaction_id} outside step range")
        if tx.energy_kwh > series.spec.ev_capacity_kwh + 1e-9:
            problems.append(
                f"transaction {tx.transaction_id} energy exceeds EV capacity"
            )
    return problems


@dataclass(frozen=True)
class SimState:
    """Observable state at one hourly step.

    ``countdown_h`` is the number of whole hours until the EV disconnects
    (1 at the final connected step) and -1 whenever it is away; a
    disconnected EV also reports a full battery through ``soc_ev_kwh``.
    """

    soc_b_kwh: float
    soc_ev_kwh: float
    connected: bool
    countdown_h: int
    hour_cos: float
    hour_sin: float
    season: int
    demand_kwh: float
    pv_kwh: float

    def __post_init__(self) -> None:
        if self.connected != (self.countdown_h >= 0):
            raise ValueError("countdown must be >= 0 exactly when the EV is connected")
        if not self.connected and self.countdown_h != -1:
            raise ValueError("disconnected state must carry countdown -1")
        if abs(self.hour_cos**2 + self.hour_sin**2 - 1.0) > 1e-9:
            raise ValueError("hour encoding must lie on the unit circle")
        if self.season not in (0, 1, 2, 3):
            raise ValueError("season must be one of 0..3")
        if self.demand_kwh < 0.0 or self.pv_kwh < 0.0:
            raise ValueError("exogenous energies must be non-negative")
        if self.soc_b_kwh < 0.0 or self.soc_ev_kwh < 0.0:
            raise ValueError("SoC must be non-negative")


@dataclass(frozen=True)
class Action:
    """Target SoC fractions for the two storages; both in [0, 1]."""

    target_bess: float
    target_ev: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.target_bess <= 1.0 or not 0.0 <= self.target_ev <= 1.0:
            raise ValueError("targets must lie in [0, 1]")


@dataclass(frozen=True)
class EnergyFlows:
    """Resolved kWh flows for one step.

    ``purchase_for_ev_kwh`` splits the grid purchase attributable to EV
    charging (min of EV charge and total purchase); ``external_ev_kwh`` is
    the forced top-up at a transaction's final step and is zero elsewhere.
    """

    ev_charge_kwh: float
    bess_charge_kwh: float
    bess_discharge_kwh: float
    grid_purchase_kwh: float
    grid_feedin_kwh: float
    purchase_for_ev_kwh: float = 0.0
    external_ev_kwh: float = 0.0


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one DDPG training run."""

    episodes: int = 1001
    episode_len_h: int = 72
    batch_size: int = 120
    buffer_size: int = 24000
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    soft_update_tau: float = 0.001
    discount: float = 0.99
    layer1: int = 300
    layer2: int = 600
    noise_kind: str = "gaussian"
    noise_scale: float = 0.1
    discomfort_weight: float = 0.01
    penalty_weight: float = 0.1
    discomfort_kind: str = "quadratic"
    seed_count: int = 40

    def __post_init__(self) -> None:
        if self.episodes <= 0 or self.episode_len_h <= 0:
            raise ValueError("episode counts must be positive")
        if self.batch_size <= 0 or self.buffer_size < self.batch_size:
            raise ValueError("buffer must hold at least one batch")
        if self.lr_actor <= 0.0 or self.lr_critic <= 0.0:
            raise ValueError("learning rates must be positive")
        if not 0.0 < self.soft_update_tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if self.layer1 <= 0 or self.layer2 <= 0:
            raise ValueError("layer sizes must be positive")
        if self.noise_kind not in ("gaussian", "ou"):
            raise ValueError("noise_kind must be 'gaussian' or 'ou'")
        if self.noise_scale < 0.0:
            raise ValueError("noise scale must be non-negative")
        if self.discomfort_kind not in ("quadratic", "linear"):
            raise ValueError("discomfort_kind must be 'quadratic' or 'linear'")
        if self.seed_count <= 0:
            raise ValueError("seed_count must be positive")


def paper_preset() -> TrainConfig:
    """Default configuration (300/600 hidden units)."""
    return TrainConfig()


def tuned_preset() -> TrainConfig:
    """Tuned configuration: smaller hidden layers (250/500), rest unchanged."""
    return replace(TrainConfig(), layer1=250, layer2=500)


TRAIN_PRESETS = {"paper": paper_preset, "tuned": tuned_preset}
