"""Simulation and stability analysis of voltage control in multi-terminal HVDC grids.

The package models converters as capacitor nodes on a resistive line graph,
implements proportional droop control and a distributed-averaging controller
with optional communication delay, verifies the spectral stability conditions
and steady-state identities numerically, and reproduces the four-terminal
injection-step experiment end to end (library API and `mtdcgrid` CLI).
"""

from .config import ConfigDocument, dump_config, parse_config, preset, preset_names
from .controllers import DistributedController, DroopController, distributed_rhs, droop_output
from .errors import (
    ConnectivityError,
    MtdcError,
    NumericalError,
    SearchRangeError,
    ValidationError,
)
from .grid_graph import GridTopology, build_laplacian, spectral_decomposition
from .mtdc_model import (
    DEFAULT_REGULATOR_GAIN,
    ClosedLoopSystem,
    ConverterParams,
    NetworkState,
    assemble_distributed_loop,
    assemble_droop_loop,
    assemble_open_loop,
    controlled_current,
    equilibrium_state,
)
from .reporting import (
    ResultBundle,
    emit_plot_script,
    read_trajectory_csv,
    render_figures,
    write_trajectory_csv,
)
from .simulator import Scenario, Trajectory, integrate_dde, lti_step_exact, run_scenario
from .stability import (
    DelaySearchResult,
    EquilibriumReport,
    StabilityReport,
    check_condition_8,
    check_condition_9,
    classify_diverged,
    critical_delay_search,
    distributed_equilibrium,
    droop_equilibrium,
    droop_limits,
    hurwitz_check,
    stability_report,
    voltage_bound,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "MtdcError",
    "ValidationError",
    "ConnectivityError",
    "NumericalError",
    "SearchRangeError",
    # graph
    "GridTopology",
    "build_laplacian",
    "spectral_decomposition",
    # model
    "DEFAULT_REGULATOR_GAIN",
    "ConverterParams",
    "NetworkState",
    "ClosedLoopSystem",
    "assemble_open_loop",
    "assemble_droop_loop",
    "assemble_distributed_loop",
    "controlled_current",
    "equilibrium_state",
    # controllers
    "DroopController",
    "DistributedController",
    "droop_output",
    "distributed_rhs",
    # stability
    "StabilityReport",
    "EquilibriumReport",
    "DelaySearchResult",
    "hurwitz_check",
    "droop_equilibrium",
    "distributed_equilibrium",
    "check_condition_8",
    "check_condition_9",
    "stability_report",
    "droop_limits",
    "voltage_bound",
    "classify_diverged",
    "critical_delay_search",
    # simulator
    "Scenario",
    "Trajectory",
    "lti_step_exact",
    "integrate_dde",
    "run_scenario",
    # config + reporting
    "ConfigDocument",
    "parse_config",
    "dump_config",
    "preset",
    "preset_names",
    "ResultBundle",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "emit_plot_script",
    "render_figures",
]
