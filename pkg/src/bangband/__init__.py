"""Desk-scale laboratory for affine optimal control with pointwise constraints."""

from .mesh import (ControlField, DualField, Mesh1D, TestBank, common_mesh,
                   field_from_csv, field_to_csv, l1_distance, l1_norm,
                   linf_norm, pairing, prolong_to, refine_and_prolong, weak_gap)
from .sets import (Box, Polytope, RadiusEstimates, contains, extreme_defect,
                   kkt_residual_pointwise, lmo_field, lmo_pointwise,
                   midpoint_split)
from .problems import (CATALOG, EllipticProblem, MomentProblem,
                       OdeAffineProblem, Problem, elliptic_solve,
                       elliptic_switching, instance_a, instance_b, instance_c,
                       instance_e, ode_forward, ode_switching,
                       with_linear_perturbation, with_p_regularizer,
                       zero_moment_problem)
from .solver import (MultistartResult, SolveOptions, SolveReport,
                     criticality_residual, frank_wolfe, lmo_l1ball,
                     multistart_global, solve_localized)
from .analysis import (ClusteringResult, GrowthProfile, ProbeRecord,
                       VpCasasResult, adversarial_weak_ball,
                       clustering_sequence, genericity_probe, growth_profile,
                       regularization_path, split_radius, stability_probe,
                       subregularity_probe, vpcasas_check)

from .config import RunConfig, Tag, parse_config_text
from .cli import gradcheck_report, run

__version__ = "0.1.0"
