import argparse
import logging
import math
import sys
import traceback

from rich.logging import RichHandler

from wfstein.config import ExperimentConfig, load_config
from wfstein.experiments import build_test_family, rate_study
from wfstein.tools.simplex_lattice import ModelParams, enumerate_states
from wfstein.tools.stein import ancestry_coupling_sim, factor_bound, solve_stein_batch
from wfstein.tools.wf_kernel import build_kernel, power_iteration, stationary_distribution
from wfstein.utils.errors import ConfigError, DomainError
from wfstein.utils.report import save_rows_csv, save_summary_json
from wfstein.verification import run_verification_suite

STEIN_RESIDUAL_TOL = 1e-10
SIGMA_LEVEL = 4.0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wfstein", description="Numerical checks of the O(1/N) Dirichlet approximation of the Wright-Fisher chain")
    parser.add_argument("--config", type=str, default=None, help="JSON file with ExperimentConfig fields")
    parser.add_argument("--out", type=str, default=None, help="Output path prefix; .csv and _summary.json are appended")
    parser.add_argument("--seed", type=int, default=None, help="Sets both family_seed and mc_seed")
    parser.add_argument("--workers", type=int, default=None, help="Worker threads for per-N stages and simulations")
    parser.add_argument("--debug", action="store_true", help="Debug mode")
    parser.add_argument("--quiet", action="store_true", help="Only warnings and errors, no progress bars")

    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("stationary", "Stationary law of one chain"),
        ("stein-solve", "Solve the Stein equation for the test family of one chain"),
        ("coupling-sim", "Simulate the ancestry of one or two tagged individuals"),
    ]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--N", type=int, default=None, help="Population size; defaults to the first entry of N_list")
        p.add_argument("--K", type=int, default=None, help="Number of types")
        p.add_argument("--beta", type=float, nargs="+", default=None, help="Scaled mutation parameters beta_1..beta_K")
        if name == "stein-solve":
            p.add_argument("--h", type=str, default=None, help="Test function id, e.g. mono_2; all members when omitted")
        if name == "coupling-sim":
            p.add_argument("--T", type=int, default=20, help="Number of generations")
            p.add_argument("--reps", type=int, default=None, help="Replicates; defaults to coupling_reps")
            p.add_argument("--tagged", type=int, default=1, choices=[1, 2], help="Number of tagged individuals")

    rate = sub.add_parser("rate-study", help="Fit the convergence rate of e(N) over N_list")
    rate.add_argument("--K", type=int, default=None, help="Number of types")
    rate.add_argument("--beta", type=float, nargs="+", default=None, help="Scaled mutation parameters")
    sub.add_parser("interp-verify", help="Interpolator identities, order and constants")
    sub.add_parser("moments-verify", help="Moment formulas against enumeration")
    sub.add_parser("verify-all", help="Every verification group")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    overrides = {
        "output_path": args.out,
        "family_seed": args.seed,
        "mc_seed": args.seed,
        "workers": args.workers,
        "K": getattr(args, "K", None),
        "beta": getattr(args, "beta", None),
    }
    if overrides["beta"] is not None and overrides["K"] is None:
        overrides["K"] = len(overrides["beta"])
    return overrides


def _instance(cfg: ExperimentConfig, args: argparse.Namespace) -> ModelParams:
    N = args.N if args.N is not None else cfg.N_list[0]
    try:
        return ModelParams(N=N, K=cfg.K, beta=tuple(cfg.beta))
    except DomainError as e:
        raise ConfigError(str(e)) from e


def _out(args: argparse.Namespace) -> str:
    return args.out or f"outputs/{args.command.replace('-', '_')}"


def cmd_stationary(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    params = _instance(cfg, args)
    kernel = build_kernel(params, enumerate_states(params, cfg.state_cap), workers=cfg.workers)
    pi = stationary_distribution(kernel)
    tv = 0.5 * float(abs(power_iteration(kernel) - pi.pi).sum())
    logging.info(f"Stationary law: {len(pi.pi)} states, residual {pi.residual:.2e}, power-iteration TV {tv:.2e}")

    out = _out(args)
    header = [f"count_{i + 1}" for i in range(params.dim)] + ["pi"]
    save_rows_csv(header, ([*map(int, c), float(p)] for c, p in zip(kernel.lattice.counts, pi.pi)), f"{out}.csv")
    save_summary_json({"N": params.N, "K": params.K, "beta": list(params.beta), "residual": pi.residual,
                       "power_iteration_tv": tv}, f"{out}_summary.json")
    return 0 if pi.residual <= 1e-12 else 1


def cmd_stein_solve(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    params = _instance(cfg, args)
    family = build_test_family(params.K, params.delta, cfg.family_seed, cfg.c_star)
    if args.h is not None:
        family = [tf for tf in family if tf.h_id == args.h]
        if not family:
            raise ConfigError(f"unknown test function {args.h!r}")
    kernel = build_kernel(params, enumerate_states(params, cfg.state_cap), workers=cfg.workers)
    pi = stationary_distribution(kernel)
    solutions = solve_stein_batch(kernel, pi, family)

    ok = True
    rows, summary = [], []
    for tf, sol in zip(family, solutions):
        bounds = [factor_bound(params, tf.class_constant, i) for i in range(1, 5)]
        within = all(b <= bound * (1 + 1e-9) for b, bound in zip(sol.factors, bounds))
        ok &= within and sol.residual <= STEIN_RESIDUAL_TOL
        logging.info(f"{tf.h_id}: residual {sol.residual:.2e}, B = {[f'{b:.2e}' for b in sol.factors]}, within bounds: {within}")
        summary.append({"h_id": tf.h_id, "class_constant": tf.class_constant, "pi_h": sol.pi_h,
                        "residual": sol.residual, "stationary_mean": sol.stationary_mean,
                        "factors": list(sol.factors), "factor_bounds": bounds, "within_bounds": within})
        for idx, counts in enumerate(kernel.lattice.counts):
            rows.append([tf.h_id, idx, *map(int, counts), float(sol.h.values[idx]), float(sol.f.values[idx])])

    out = _out(args)
    header = ["h_id", "state"] + [f"count_{i + 1}" for i in range(params.dim)] + ["h", "f"]
    save_rows_csv(header, rows, f"{out}.csv")
    save_summary_json({"N": params.N, "K": params.K, "beta": list(params.beta), "solutions": summary}, f"{out}_summary.json")
    return 0 if ok else 1


def cmd_coupling_sim(cfg: ExperimentConfig, args: argparse.Namespace, progress: bool) -> int:
    params = _instance(cfg, args)
    reps = args.reps or cfg.coupling_reps
    est = ancestry_coupling_sim(params, args.tagged, args.T, reps, cfg.mc_seed, workers=cfg.workers, progress=progress)
    if args.tagged == 1:
        mean, se, expected = est.mean_v1, est.se_v1, est.expected_v1
    else:
        mean, se, expected = est.mean_pair, est.se_pair, est.expected_pair
    z = max((abs(m - e) / s for m, s, e in zip(mean, se, expected) if s > 0), default=0.0)
    logging.info(f"Coupling N={params.N}, tagged={args.tagged}: max |z| = {z:.2f} over t <= {args.T}")

    out = _out(args)
    header = ["t", "mean", "se", "expected"] + (["displayed_bound"] if args.tagged == 2 else [])
    extra = est.displayed_pair if args.tagged == 2 else None
    rows = ([t, m, s, e] + ([extra[t]] if extra else []) for t, m, s, e in zip(est.t, mean, se, expected))
    save_rows_csv(header, rows, f"{out}.csv")
    summary = est.to_dict()
    summary["max_abs_z"] = z
    save_summary_json(summary, f"{out}_summary.json")
    return 0 if z <= SIGMA_LEVEL else 1


def cmd_rate_study(cfg: ExperimentConfig, progress: bool) -> int:
    report = rate_study(cfg, write=True, progress=progress)
    logging.info(f"e(N) = {[f'{e:.3e}' for e in report.errors]}, slope {report.slope:.3f}")
    return 0 if report.slope_ok and report.bounded else 1


def cmd_verify(cfg: ExperimentConfig, args: argparse.Namespace, progress: bool, groups: list[str] | None) -> int:
    report = run_verification_suite(cfg, groups=groups, progress=progress)
    out = _out(args)
    rows = ([r.group, r.name, r.value, r.bound, r.passed, r.detail] for r in report.records)
    save_rows_csv(["group", "name", "value", "bound", "passed", "detail"], rows, f"{out}.csv")
    save_summary_json(report.to_dict() | {"passed": report.passed}, f"{out}_summary.json")
    for r in report.failures:
        value = "nan" if math.isnan(r.value) else f"{r.value:.3e}"
        logging.error(f"{r.group}/{r.name}: {value} (bound {r.bound:.3e}) {r.detail}")
    return 0 if report.passed else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    level = logging.DEBUG if args.debug else (logging.WARNING if args.quiet else logging.INFO)
    logging.basicConfig(level=level, format="%(message)s", datefmt="[%X]", handlers=[RichHandler()], force=True)
    if args.debug:
        logging.debug("--- DEBUG MODE ENABLED ---")
    progress = level <= logging.INFO

    try:
        cfg = load_config(args.config, _overrides(args))
        match args.command:
            case "stationary":
                return cmd_stationary(cfg, args)
            case "stein-solve":
                return cmd_stein_solve(cfg, args)
            case "coupling-sim":
                return cmd_coupling_sim(cfg, args, progress)
            case "rate-study":
                return cmd_rate_study(cfg, progress)
            case "interp-verify":
                return cmd_verify(cfg, args, progress, ["interpolator"])
            case "moments-verify":
                return cmd_verify(cfg, args, progress, ["moments"])
            case "verify-all":
                return cmd_verify(cfg, args, progress, None)
    except ConfigError as e:
        logging.error(f"Configuration error: {e}")
        return 2
    except Exception:
        traceback.print_exc()
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
