"""Simulation and optimization toolkit for prosumer households.

A household couples a PV system, a stationary battery (BESS) and an EV
charger behind one grid connection under a fixed buy/sell tariff. The
package simulates the hourly energy flows, provides a rule-based
baseline, an LP benchmark and a DDPG agent, and ships the behavioral
analytics used to size the optimization potential.
"""

__version__ = "0.1.0"

from .domain import (
    Action,
    ChargingTransaction,
    EnergyFlows,
    HourStep,
    HouseholdSeries,
    SimState,
    Tariff,
    TechnicalSpec,
    TrainConfig,
)

__all__ = [
    "Action",
    "ChargingTransaction",
    "EnergyFlows",
    "HourStep",
    "HouseholdSeries",
    "SimState",
    "Tariff",
    "TechnicalSpec",
    "TrainConfig",
    "__version__",
]
