"""Overlapping conformal iterated function systems: stationary measures,
thermodynamic quantities, dimension estimates, unfolding into Smale systems,
and random systems with complete connections."""

__version__ = "0.1.0"

from .errors import (CombinatorialBlowup, EmptyBall, FractalError, NoConvergence, NonHyperbolic,
                     ResolutionExceeded, SymbolOutOfAlphabet, TailUncertified, UnfoldTimeout, ValidationError,
                     ZeroMarginal, ZeroWeight)
from .symbolic import Cylinder, Sequence, TwoSidedSequence, Word, d_beta, shift
from .ifs import Affine, Box, Disk, GaussBranch, IFSSystem, Interval, Moebius, code_point, compose_word
from .weights import (WeightSystem, birkhoff_sum, check_gibbs, check_summability, geometric_potential,
                      potential_from_weights, pressure, pressure_root)
from .measures import (CylinderMeasure, EmpiricalMeasure, GridMeasure, RefinedMeasure, chaos_game,
                       conditional_measure, gibbs_approximation, stationary_measure, two_sided_gibbs)
from .dimension import (DimensionReport, box_dimension, dimension_formula, entropy_estimate,
                        exact_dimensionality_test, local_dimension, lyapunov, projection_entropy)
from .unfolding import (MaximalSmaleSystem, fiber_dimension, fiber_fractal_sample, fiber_map, psi_s,
                        smale_project, summability_bound, unfold_indices)
from .rscc import (RSCC, UrnScheme, ifs_to_rscc, simulate_chain, smale_to_rscc, transfer_probability_m,
                   transfer_probability_mn)
from .config import SystemConfig
