"""Command-line interface: distance computation, maximization runs,
oracle certification and benchmark generation.

Heavy imports happen inside the handlers so the DISTMAX_THREADS override
can pin BLAS thread counts before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_STAGNATED = 2

_STATUS_EXIT = {
    "converged": EXIT_OK,
    "max_iter": EXIT_STAGNATED,
    "stagnated": EXIT_STAGNATED,
    "stagnated-unstable": EXIT_STAGNATED,
    "failed": EXIT_ERROR,
}


def _configure_threads():
    want = os.environ.get("DISTMAX_THREADS")
    if want:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = want


def _oracle_for(fun, box, steps, tol):
    from .oracle import brute_max_distance

    cert = brute_max_distance(fun, box, steps_per_dim=steps, tol=tol)
    return cert


def _oracle_dict(cert):
    from .manifest import fmt12

    return {
        "value": fmt12(cert.value),
        "point": [fmt12(v) for v in cert.point],
        "radius": fmt12(cert.radius),
        "lipschitz_const": fmt12(cert.lipschitz_const),
        "error_bound": fmt12(cert.error_bound),
        "evals": cert.evals,
    }


def _rows_small(history, dist_trace, gamma, oracle, fmt12, TraceRow):
    import numpy as np

    rows = []
    f_best = -np.inf
    for k, ((x, val, gap), (_, _, dres)) in enumerate(zip(history, dist_trace), start=1):
        f_best = max(f_best, val)
        model_max = f_best + gap
        ub = np.sqrt(model_max) if np.isfinite(model_max) and model_max >= 0 else np.inf
        err_x = fmt12(np.linalg.norm(x - oracle.point)) if oracle is not None else ""
        err_v = fmt12(np.sqrt(val) - oracle.value) if oracle is not None else ""
        rows.append(TraceRow(
            ell=k, x=[fmt12(v) for v in x], err_x_vs_oracle=err_x,
            z_re=fmt12(dres.z_star.real), z_im=fmt12(dres.z_star.imag),
            gamma=fmt12(gamma), reduced_val=fmt12(ub),
            err_val_vs_oracle=err_v, full_val=fmt12(np.sqrt(val)),
            gap=fmt12(gap), stable=str(bool(dres.stable)).lower(), basis_dim=""))
    return rows


def _rows_subspace(trace, oracle, fmt12, TraceRow):
    import numpy as np

    rows = []
    for rec in trace.records:
        err_x = fmt12(np.linalg.norm(rec.x - oracle.point)) if oracle is not None else ""
        err_v = fmt12(rec.reduced_val - oracle.value) if oracle is not None else ""
        rows.append(TraceRow(
            ell=rec.ell, x=[fmt12(v) for v in rec.x], err_x_vs_oracle=err_x,
            z_re=fmt12(rec.z.real), z_im=fmt12(rec.z.imag),
            gamma=fmt12(rec.gamma_used), reduced_val=fmt12(rec.reduced_val),
            err_val_vs_oracle=err_v, full_val=fmt12(rec.full_val),
            gap=fmt12(rec.gap), stable=str(bool(rec.stable)).lower(),
            basis_dim=str(rec.basis_dim)))
    return rows


def run(manifest_path: str, out_dir: str, method: str = None, tol: float = None,
        tol_gap: float = None, max_iter: int = None, gamma: float = None,
        with_oracle: bool = False, oracle_steps: int = 33, oracle_tol: float = 1e-5):
    """Execute a manifest and write report.json + trace.csv into out_dir.

    Returns (RunReport, exit_code); exit code is 0 when converged, 2 when
    the run stopped without certificate (stagnated / max_iter), 1 on error.
    """
    import time

    import numpy as np

    from .manifest import RunReport, TraceRow, fmt12, load_problem

    t_start = time.perf_counter()
    fun, box, man = load_problem(manifest_path)
    method = method or man.method
    tol = man.tol if tol is None else tol
    tol_gap = man.tol_gap if tol_gap is None else tol_gap
    max_iter = man.max_iter if max_iter is None else max_iter
    gamma = man.gamma if gamma is None else gamma

    oracle = None
    if with_oracle or method == "oracle":
        oracle = _oracle_for(fun, box, oracle_steps, oracle_tol)

    if method == "oracle":
        total = time.perf_counter() - t_start
        row = TraceRow(ell=1, x=[fmt12(v) for v in oracle.point], err_x_vs_oracle="",
                       z_re="", z_im="", gamma="", reduced_val="",
                       err_val_vs_oracle="", full_val=fmt12(oracle.value),
                       gap=fmt12(oracle.error_bound), stable="", basis_dim="")
        report = RunReport(method="oracle", status="converged",
                           best_x=[fmt12(v) for v in oracle.point],
                           best_dist=fmt12(oracle.value), gap=fmt12(oracle.error_bound),
                           iterations=1, basis_dim=0, rows=[row],
                           time_reduced_s=fmt12(0.0), time_full_s=fmt12(total),
                           time_total_s=fmt12(total), oracle=_oracle_dict(oracle))
        report.write(out_dir)
        return report, EXIT_OK

    if method == "small":
        from .smallmax import SmallMaxConfig, maximize_small

        cfg = SmallMaxConfig(gamma=gamma, tol=tol, max_iter=max_iter,
                             restrict_omega_nonneg=fun.is_real)
        from .smallmax import pick_gamma

        gamma_used = pick_gamma(fun, box, cfg)
        dist_trace = []
        t1 = time.perf_counter()
        opt = maximize_small(fun, box, cfg, trace=dist_trace)
        t_run = time.perf_counter() - t1
        rows = _rows_small(opt.history, dist_trace, gamma_used, oracle, fmt12, TraceRow)
        best_d = float(np.sqrt(max(opt.f_best, 0.0)))
        report = RunReport(method="small", status=opt.status,
                           best_x=[fmt12(v) for v in opt.x_best],
                           best_dist=fmt12(best_d), gap=fmt12(opt.gap),
                           iterations=opt.iterations, basis_dim=0, rows=rows,
                           time_reduced_s=fmt12(0.0), time_full_s=fmt12(t_run),
                           time_total_s=fmt12(time.perf_counter() - t_start),
                           oracle=_oracle_dict(oracle) if oracle else None)
        report.write(out_dir)
        return report, _STATUS_EXIT.get(opt.status, EXIT_ERROR)

    if method in ("basic", "extended", "uniform"):
        from .subspace import SubspaceConfig, run_basic, run_extended, run_uniform

        cfg = SubspaceConfig(tol_gap=tol_gap, max_iter=max_iter, variant=method)
        runner = {"basic": run_basic, "extended": run_extended,
                  "uniform": run_uniform}[method]
        trace = runner(fun, box, cfg)
        rows = _rows_subspace(trace, oracle, fmt12, TraceRow)
        report = RunReport(method=method, status=trace.status,
                           best_x=[fmt12(v) for v in trace.x_best],
                           best_dist=fmt12(trace.f_best), gap=fmt12(trace.gap_final),
                           iterations=len(trace.records),
                           basis_dim=trace.basis.shape[1], rows=rows,
                           time_reduced_s=fmt12(trace.time_reduced_total),
                           time_full_s=fmt12(trace.time_full_total),
                           time_total_s=fmt12(time.perf_counter() - t_start),
                           oracle=_oracle_dict(oracle) if oracle else None,
                           message=trace.message)
        report.write(out_dir)
        return report, _STATUS_EXIT.get(trace.status, EXIT_ERROR)

    raise ValueError(f"unknown method {method!r}")


def _cmd_dist(args) -> int:
    from .manifest import _read_mm, fmt12
    from .stability import distance_to_instability

    m = _read_mm(args.matrixfile)
    res = distance_to_instability(m, tol=args.tol)
    out = {
        "stable": bool(res.stable),
        "dist": fmt12(res.dist),
        "z_star": {"re": fmt12(res.z_star.real), "im": fmt12(res.z_star.imag)},
    }
    if res.stable:
        out["omega_star"] = fmt12(res.omega_star)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_maximize(args) -> int:
    _report, code = run(args.manifest, args.out, method=args.method,
                        tol=args.tol, tol_gap=args.tol_gap, max_iter=args.max_iter,
                        gamma=args.gamma, with_oracle=args.with_oracle,
                        oracle_steps=args.oracle_steps)
    print(f"status={_report.status} best_dist={_report.best_dist} gap={_report.gap} "
          f"out={args.out}")
    return code


def _cmd_oracle(args) -> int:
    _report, code = run(args.manifest, args.out, method="oracle",
                        oracle_steps=args.steps, oracle_tol=args.tol)
    print(f"value={_report.best_dist} error_bound={_report.gap} out={args.out}")
    return code


def _cmd_bench(args) -> int:
    from .manifest import gen_bench

    path = gen_bench(args.seed, args.n, args.out)
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distmax",
                                description="distance to instability: computation "
                                            "and global maximization")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dist", help="distance to instability of one matrix")
    d.add_argument("matrixfile", help="Matrix Market file")
    d.add_argument("--tol", type=float, default=1e-8)
    d.set_defaults(func=_cmd_dist)

    m = sub.add_parser("maximize", help="maximize the distance over the box")
    m.add_argument("manifest")
    m.add_argument("--method", choices=["small", "basic", "extended", "uniform"])
    m.add_argument("--tol", type=float, default=None)
    m.add_argument("--tol-gap", dest="tol_gap", type=float, default=None)
    m.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    m.add_argument("--gamma", type=float, default=None)
    m.add_argument("--out", default="distmax-out")
    m.add_argument("--with-oracle", action="store_true",
                   help="also run the brute-force oracle and report errors")
    m.add_argument("--oracle-steps", type=int, default=33)
    m.set_defaults(func=_cmd_maximize)

    o = sub.add_parser("oracle", help="certified brute-force maximization")
    o.add_argument("manifest")
    o.add_argument("--steps", type=int, default=33)
    o.add_argument("--tol", type=float, default=1e-5)
    o.add_argument("--out", default="distmax-out")
    o.set_defaults(func=_cmd_oracle)

    b = sub.add_parser("bench", help="generate a seeded random feedback benchmark")
    b.add_argument("--seed", type=int, required=True)
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=_cmd_bench)
    return p


def main(argv=None) -> int:
    _configure_threads()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface as JSON error object with exit 1
        err = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        out_dir = getattr(args, "out", None)
        if out_dir:
            try:
                os.makedirs(out_dir, exist_ok=True)
                with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
                    json.dump(err, fh, indent=2)
                    fh.write("\n")
            except OSError:
                pass
        print(json.dumps(err), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
