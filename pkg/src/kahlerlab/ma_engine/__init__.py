"""Radial Monge–Ampère solvers on the (conical) sphere."""

from .continuity import ContinuityPath, LogPole, continuity_path_run
from .flow import DT_MAX, FlowState, flow_residual, kr_flow_iter, kr_flow_run
from .profile import (CONVENTIONS, RadialProfile, football_density, gauss_bonnet, ricci_and_scal,
                      round_density, round_profile)
from .solvers import SolitonData, ke_residual, ke_solve_radial, soliton_residual, soliton_solve_radial

__all__ = ["CONVENTIONS", "ContinuityPath", "DT_MAX", "FlowState", "LogPole", "RadialProfile", "SolitonData",
           "continuity_path_run", "flow_residual", "football_density", "gauss_bonnet", "ke_residual",
           "ke_solve_radial", "kr_flow_iter", "kr_flow_run", "ricci_and_scal", "round_density", "round_profile",
           "soliton_residual", "soliton_solve_radial"]
