"""EV charging station siting and sizing on radial distribution feeders.

Library layout:

- :mod:`evsiting.netmodel` -- network data model, file ingestion, admittance
- :mod:`evsiting.powerflow` -- linearized and Newton AC power flow
- :mod:`evsiting.catalog` -- protective-device catalog and trend-line fits
- :mod:`evsiting.costs` -- the four exact cost components
- :mod:`evsiting.scenario` -- scenario files (demand, caps, term toggles)
- :mod:`evsiting.opt` -- convex surrogate model, branch and bound, oracles
- :mod:`evsiting.experiments` -- stacking, sweeps, comparisons, presets
- :mod:`evsiting.cli` -- command-line entry point
"""

from importlib import resources

from .catalog import DeviceCatalog, load_catalog, parse_catalog
from .costs import CostBreakdown, CostParameters, Placement
from .netmodel import DistributionNetwork, load_network, parse_network
from .opt import SolveReport, solve_scenario
from .powerflow import linear_power_flow, newton_power_flow
from .scenario import Scenario, load_scenario, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "CostBreakdown",
    "CostParameters",
    "DeviceCatalog",
    "DistributionNetwork",
    "Placement",
    "Scenario",
    "SolveReport",
    "bundled_path",
    "load_catalog",
    "load_network",
    "load_scenario",
    "linear_power_flow",
    "newton_power_flow",
    "parse_catalog",
    "parse_network",
    "parse_scenario",
    "solve_scenario",
]


def bundled_path(name: str):
    """Filesystem path of a bundled data file (e.g. ``ieee4.json``)."""
    return resources.files("evsiting.data").joinpath(name)
