"""Frequency control of a power grid coupled to a district heating network."""

from .control import (
    AuditReport,
    FirstOrderBlock,
    PassiveBlock,
    first_order_rhs,
    passivity_audit,
    second_order_block,
    static_characteristic,
    wrap_first_order_as_passive,
)
from .dispatch import (
    DispatchProblem,
    DispatchSolution,
    EquilibriumPoint,
    OptimalityReport,
    check_security,
    compute_equilibrium,
    dispatch_problem,
    equilibrium_scalars_mode1,
    equilibrium_scalars_mode2,
    generalized_dispatch,
    kkt_residuals,
    solve_dispatch,
    solve_dispatch_mode1,
    solve_dispatch_mode2,
    verify_power_sharing,
)
from .dynamics import System, Trajectory, assemble_rhs, line_flow, pump_mode1_power, rk4_step, simulate
from .errors import ChpError, NonSettlingError, NumericalError, SingularKKTError, UnsettledTrajectoryError, ValidationError
from .metrics import max_deviation, settling_time
from .network import (
    ElectricNetwork,
    HeatNetwork,
    PumpCoupling,
    assemble_ah,
    attach_converter_bus,
    average_temperature,
    split_incidence,
    validate_networks,
)
from .report import RunReport, build_run_report, compare_modes, read_csv, write_csv
from .scenario import Disturbance, Scenario, load_scenario

__version__ = "0.1.0"
