"""Numerical laboratory for magnification dynamics of dyadic cascade measures.

The submodules carry the full API; the names re-exported here are the
ones interactive sessions reach for first.
"""

from .cones import Subspace, cone_mass, epsilon_critical, min_cone_mass
from .experiments import ExperimentConfig, verify_lower_bound, verify_sharpness
from .measure import (
    build_cascade,
    build_lebesgue,
    build_plane,
    load_measure,
    sample_points,
    save_measure,
)
from .rectify import PointCloud, cone_vacancy, support_vacancy, vacancy_survey
from .scenery import magnify, scenery_at, translate
from .splice import SpliceSchedule, build_spliced, schedule_for_theta
from .stats import conical_statistic, empirical_td, measure_dimension

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "PointCloud",
    "SpliceSchedule",
    "Subspace",
    "build_cascade",
    "build_lebesgue",
    "build_plane",
    "build_spliced",
    "cone_mass",
    "cone_vacancy",
    "conical_statistic",
    "empirical_td",
    "epsilon_critical",
    "load_measure",
    "magnify",
    "measure_dimension",
    "min_cone_mass",
    "sample_points",
    "save_measure",
    "scenery_at",
    "schedule_for_theta",
    "support_vacancy",
    "translate",
    "vacancy_survey",
    "verify_lower_bound",
    "verify_sharpness",
]
