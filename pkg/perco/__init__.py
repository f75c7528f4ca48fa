"""
MIT License

Copyright (c) 2024 the perco.py developers

Permission is hereby granted, free of charge, to any person obtaining a copy
of this software and associated documentation files (the "Software"), to deal
in the Software without restriction, including without limitation the rights
to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
copies of the Software, and to permit persons to whom the Software is
furnished to do so, subject to the following conditions:

The above copyright notice and this permission notice shall be included in all
copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
SOFTWARE.
"""

__version__ = "1.0.0"

from .clusters import (
    ClusterLabeling,
    ComponentSelection,
    check_A1,
    check_A2,
    check_A3,
    check_A4,
    check_C2R_contains_CR,
    check_local_uniqueness,
    chemical_distance,
    infinite_cluster_surrogate,
    label_components,
    largest_component,
    restrict_s_r,
)
from .corrector import (
    CorrectorField,
    check_corrector_sublinearity,
    check_shift_consistency,
    corrector_covariance,
    corrector_field,
    estimate_corrector,
)
from .enums import CandidateMethod, Check, ModelKind, Stream
from .errors import (
    PercoException,
    UsageError,
    InvalidArgument,
    UndefinedLevel,
    OracleRefused,
    EmptyRegion,
    CheckFailure,
    ContractViolation,
    SolverError,
    StageError,
)
from .experiment import CheckResult, ExperimentSpec, RunReport
from .fatset import FatSet, build_fat_set, special_components, verify_fat_set
from .isoperimetry import (
    SiteSet,
    check_A5,
    check_reduction_inequalities,
    coarse_box_profile,
    coarse_isoperimetry,
    edge_boundary,
    exact_min_ratio,
    heuristic_profile,
    map_MA_DA,
)
from .iterators import ReplicaIterator, SweepIterator, SweepPoint
from .lab import Laboratory
from .lattice import LatticeBox, Window, grid_points, l1_dist, linf_ball, linf_dist, slices, subboxes
from .renormalization import (
    GoodnessField,
    Levels,
    ScaleLadder,
    build_scale_ladder,
    check_event_H,
    classify_good,
    compute_f_j,
    compute_levels,
    estimate_bad_probability,
    event_A,
    event_A_line,
    event_B,
)
from .samplers import Config, ModelSpec, estimate_eta, green_function, load_config, sample, save_config
from .walks import (
    WalkStats,
    diffusive_fit,
    estimate_covariance,
    isotropy_ratio,
    msd_curve,
    return_probability,
    simulate_walk,
    step_distribution,
)
from . import utils
