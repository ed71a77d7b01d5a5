"""Distance to instability: computation and global maximization.

Submodules are imported lazily so the command-line entry point can pin
BLAS thread counts before numpy loads.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "ParamMatrixFun": "matmodel",
    "ScalarFun": "matmodel",
    "Box": "matmodel",
    "eval_full": "matmodel",
    "eval_deriv": "matmodel",
    "eval_reduced": "matmodel",
    "gamma_affine": "matmodel",
    "gamma_general": "matmodel",
    "SingularTriplet": "stability",
    "DistResult": "stability",
    "spectral_abscissa": "stability",
    "smallest_singular_triplet": "stability",
    "distance_to_instability": "stability",
    "QuadPiece": "eigopt",
    "SupportModel": "eigopt",
    "OptResult": "eigopt",
    "add_piece": "eigopt",
    "maximize_model": "eigopt",
    "optimize": "eigopt",
    "SmallMaxConfig": "smallmax",
    "objective_sq_full": "smallmax",
    "maximize_small": "smallmax",
    "ReducedRect": "reduced",
    "ReducedDist": "reduced",
    "reduce_qr": "reduced",
    "dist_reduced_cplus": "reduced",
    "dist_reduced_imag": "reduced",
    "grad_dist_reduced": "reduced",
    "gamma_reduced_affine": "reduced",
    "SubspaceState": "subspace",
    "SubspaceConfig": "subspace",
    "RunTrace": "subspace",
    "expand_basis": "subspace",
    "run_basic": "subspace",
    "run_extended": "subspace",
    "run_uniform": "subspace",
    "GridCertificate": "oracle",
    "certified_min_sigma_imagaxis": "oracle",
    "certified_min_sigma_cplus": "oracle",
    "brute_max_distance": "oracle",
    "ProblemManifest": "manifest",
    "load_problem": "manifest",
    "gen_bench": "manifest",
    "RunReport": "manifest",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        import importlib

        mod = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(mod, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
