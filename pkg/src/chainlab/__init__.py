"""Desk-scale laboratory for a tension-forced anharmonic chain with
conservative heat baths, its empirical hydrodynamic fields, and the matching
viscous reference solver."""

from .errors import (BlowUp, ChainLabError, ConfigInvalid, ConstraintViolation,
                     EnvelopeFailure, IndexOutOfRange, NonConvergedQuadrature,
                     OutOfRange, PairInvalid)
from .potential import Potential, PotentialKind, potential_from_config
from .thermo import CurvatureReport, ThermoModel
from .microsim import (ChainState, ScheduleKind, SimConfig, TensionSchedule,
                       Trajectory, drift, energy_monitor, microscopic_work,
                       noise_increments, rng_for_replica, run_trajectory,
                       sample_initial, stable_dt, step)
from .observables import (ClausiusReport, ClausiusSeries, EmpiricalField,
                          EntropyPair, TestFunction, bar_average,
                          block_gradient_identity_check, clausius_balance,
                          clausius_series, check_lax_pair, empirical_pairing,
                          entropy_production, hat_average, hat_series,
                          mechanical_energy_pair, one_block_residual,
                          two_block_residual, weak_residual,
                          weak_residual_basis)
from .pdesolver import (MacroField, MacroTrajectory, macro_cfl_dt, macro_rhs,
                        macro_step, solve, standing_wave)
from .harness import ExperimentConfig, ExperimentReport, Scenario, run, validate

__version__ = "0.1.0"
