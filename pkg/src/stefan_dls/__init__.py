"""Deep level-set solver for two-phase Stefan problems.

The solid region is the sub-zero set of Phi(t, x) = Phi0(x) + G(t, x; theta)
with a small tanh network G.  Training minimizes Monte Carlo residuals of a
probabilistic growth condition: test-function integrals over the moving
region must balance the heat absorbed by stopped liquid/solid particles,
with optional surface tension supplied by curvature-weighted boundary
arrivals.
"""

from .autodiff import AutodiffError, ParamStore, Tape, TapeValue
from .experiments import (ScenarioConfig, builtin_scenarios, extract_radius,
                          hadzic_rate, long_term_radius, physical_jump_size,
                          recover_temperature)
from .geometry import (CurvatureProbe, annulus_volume, ball_volume,
                       curvature, curvature_sign, relaxed_phase)
from .levelset import (NetworkArch, eval_on_tape, init_params,
                       make_initial_levelset, phi_and_grad, rho_values)
from .loss import (AnnealState, LossBatch, assemble_loss,
                   draw_test_functions, initial_integral,
                   stopped_value, stopping_probabilities)
from .particles import TimeGrid, reflect_radial, simulate_reflected
from .tension import generate_arrivals, radial_trick_transform
from .trainer import load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
