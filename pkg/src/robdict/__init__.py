"""Dictionaries of local reduced-order bases.

Snapshots are grouped by k-medoids clustering under a principal-angle (sine)
dissimilarity, and one POD basis is built per cluster. The package also
evaluates such dictionaries against a single global basis.
"""

from .clustering import (Clustering, assign, assign_all, brute_force_kmedoids, load_clustering,
                         pam, save_clustering, select_snapshots, swap_optimal)
from .dictionary import (RomDictionary, build_dictionary, build_global_rom, cluster_basis_sizes,
                         integer_cube_root, load_basis, load_dictionary,
                         reduced_galerkin_solve_heat1d, save_basis, save_dictionary)
from .evaluation import (AccuracyModel, ErrorSummary, HyperparameterReport, admissible_set,
                         classical_mds, compare_strategies, correlation_report, evaluate_errors,
                         expected_real_gain, fit_accuracy_model, gain_samples,
                         nearest_snapshot_dissimilarity, perfect_profit_threshold)
from .geometry import (DissimilarityMatrix, ParameterScaler, ReducedBasis, cross_dissimilarity,
                       dissimilarity_matrix, euclid_parameter_dissimilarity,
                       euclid_solution_dissimilarity, grassmann_dissimilarity, pod_basis,
                       principal_angles, projection_errors, relative_projection_error,
                       sine_dissimilarity, weighted_dot, weighted_norm)
from .problems import (Advection2dParams, Heat1dParams, SnapshotFormatError, SnapshotSet,
                       export_snapshots, generate_advection2d_dataset, generate_heat1d_dataset,
                       import_snapshots, sample_gp_source, solve_heat1d, split_snapshot_set)

__version__ = "0.1.0"
