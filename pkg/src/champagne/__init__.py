"""Avoidability of spherical obstacle fields in the unit ball of R^d, d >= 3.

A champagne subregion is the unit ball minus a countable union of small
disjoint closed balls accumulating at the boundary.  This package decides
whether Brownian motion from the origin can avoid all of them with
positive probability, three ways that must agree: the boundary integral
of phi(t)^(d-2)/(1-t)^(d-1), the shell series (phi_j K^j)^(d-2), and a
Whitney-cube Wiener test at boundary points; it also computes certified
barrier bounds and validates everything against a walk-on-spheres
simulator with coupled depth truncation.
"""

from .bounds import (BoundReport, SandwichBound, exact_concentric,
                     product_avoidance_bound, sandwich, sufficiency_depth,
                     union_tail_bound)
from .criteria import (CriterionReport, Verdict, classify_tail,
                       equivalence_check, integral_partial, integral_report,
                       mutually_consistent, shell_series)
from .errors import ConfigurationError, DomainError, RangeError, SchemaError
from .experiment import run_experiment, validate_spec
from .field import (Obstacle, ObstacleField, PowerLawProfile, PowerLogProfile,
                    ShellGeometry, SpacingReport, TableProfile,
                    generate_regular_field, profile_eval, shell_radius,
                    validate_spacing)
from .whitney import (ConeWindow, WhitneyCube, WienerReport, boundary_points,
                      cap_interval, decompose, measure_ring_constant,
                      whitney_census, wiener_series)
from .wos import (HarmonicEstimate, WalkConfig, depth_sweep, nearest_surfaces,
                  run_walks, set_workers, simulate_raw, wilson_interval)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
