"""creasefit: scattered-data approximation of piecewise-smooth functions.

Reconstructs functions of the form f = g + max(r, 0) from point samples to
the full order of the underlying moving-least-squares operator, by detecting
which side of the crease each site lies on, modeling r locally, and
correcting the operator near the crease.  Also recovers the crease curve
itself to high order.
"""

from .correction import CorrectedValue, CorrectionContext
from .errors import (ConfigError, ConjectureViolationError, CreasefitError,
                     DimensionMismatchError, DuplicatePointError, EmptyCloudError,
                     EmptyCurveError, NoComponentsError, NoFiniteUpsilonError,
                     RankDeficientError)
from .levelcurve import (HausdorffReport, LevelCurve, extract_zero_curve,
                         hausdorff_distance, singularity_study)
from .mls import (MlsConfig, QuasiInterpolant, WeightFunction, truncated_gaussian,
                  weight_eval, wendland_c2, wls_fit)
from .partition import (ComponentLabeling, PartitionConfig, PartitionResult,
                        SignPartition, SingularBand, connected_components,
                        detect_singular_band, label_band_sites, merge_components,
                        partition_pipeline, refine_partition)
from .pointset import (FillDistance, PointCloud, UnisolvencyRadius,
                       build_point_cloud, estimate_fill_distance, estimate_upsilon,
                       is_unisolvent)
from .polybasis import (LocalPolynomial, MultiIndexSet, TruncatedPolynomial,
                        basis_matrix, enumerate_multi_indices, eval_basis_row,
                        recenter)
from .testcases import (AnalyticCase, builtin_cases, get_case, probe_mesh,
                        sample_case, scaled_case_cloud)

__version__ = "0.1.0"
