"""Model order reduction of linear switched systems via an envelope LTI system."""
from .benchmarks import HeatParams, heat_two_rooms, random_lss, rlc_example, tangential_toy
from .bounds import BoundReport, bt_envelope_bound, check_condition, posterior_bound
from .envelope import (EnvelopeModel, FeedbackMaps, build_envelope, compress_io, compute_deltas,
                       envelope, realize_modes, transform_generalized)
from .errors import (DegenerateSpectrumError, EnvmorError, InstabilityError, InvalidInputError,
                     LoadError, PoleError, ProjectionDegenerateError, StiffnessError,
                     UnsupportedError)
from .model import (ProjectionPair, StateSpaceModel, SwitchedModel, exact_switched_solution,
                    gramians, hankel_singular_values, project, state_transition, transfer_eval)
from .numerics import hinf_norm, skinny_svd, solve_lyapunov
from .reduction import (ReductionReport, balanced_truncation, irka, naive_per_mode_reduction,
                        reduce_switched, stability_preserving_pair)
from .signals import (Constant, Exp, OutputDriven, OutputRule, PiecewiseConstant, Samples, Sine,
                      SwitchSchedule, TimeDriven)
from .simulation import (Trajectory, l2_norm, linf_norm, simulate_envelope_closed_loop,
                         simulate_implicit, simulate_switched)
from .stability import dh_split, search_common_q, verify_quadratic_stability

__version__ = '0.1.0'
