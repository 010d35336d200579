"""Point-charge dynamics with radiation reaction under a bounded-acceleration
geometry: Minkowski algebra, worldline proper times, five force models,
invariant-monitored integration, and canonical experiments."""

from .dynamics import (ForceModelSpec, ald_rhs, characteristic_time,
                       explicit_approx_accel, implicit_residual,
                       landau_lifshitz_accel, larmor_power, operator_m,
                       operator_o, solve_implicit_accel,
                       uniform_covariant_rhs)
from .fields import FieldSpec, faraday_at, faraday_from_e_b, lorentz_force
from .integrator import (Event, SolverOptions, TrajectoryRecord,
                         detect_events, integrate, step_implicit)
from .maxaccel import (MassLedgerEntry, MaxAccelParams, epsilon, g_dot,
                       kinematic_residuals, mass_ledger)
from .minkowski import ETA, eta_dot, four_vector, lower, projector_apply
from .worldline import (SampledCurve, WorldlineState, finite_diff_jets,
                        proper_time_eta, proper_time_maxaccel,
                        reparameterize)

__version__ = "0.1.0"
