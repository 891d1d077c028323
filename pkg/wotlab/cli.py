"""Command-line surface: `python -m wotlab <command>`.

Exit codes: 0 pass, 1 mathematical negative (order fails, duality gap,
infinite value, failed verification case), 2 usage error, 3 numerical failure.
"""
import argparse
import functools
import math
import traceback
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import ValidationError

from .config import SolverOptions, default_options, get_config
from .errors import DomainError, NumericalFailure, UsageError
from .logger import logger
from .models import Report
from .repositories import InstancesRepository, LoadedInstance, ReportsRepository, ScenariosRepository
from .services.dual_solver import attainment_witness, declared_monotone, solve_dual
from .services.orders import ConeSpec, check_cone_order, validate_certificate
from .services.primal_solver import solve_primal
from .services.projection import project_order
from .services.verification import SUITES, run_verification
from .utils import timed

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

# three projection values must agree to this relative tolerance
AGREEMENT_TOL = 1e-5


def error_handler(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (UsageError, DomainError, ValidationError) as e:
            logger.error(f"Error in {func.__name__}: {str(e)}")
            return EXIT_USAGE
        except NumericalFailure as e:
            logger.error(f"Error in {func.__name__}: {str(e)}")
            logger.error(traceback.format_exc())
            return EXIT_NUMERICAL
        except Exception as e:
            logger.error(f"Error in {func.__name__}: {str(e)}")
            logger.error(traceback.format_exc())
            return EXIT_NUMERICAL

    return wrapper


def _options(args: argparse.Namespace, instance: Optional[LoadedInstance] = None) -> SolverOptions:
    overrides = instance.option_overrides() if instance is not None else {}
    for key in ("tol", "grid_refine", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return default_options(**overrides)


def _load_instance(ref: str) -> LoadedInstance:
    path = Path(ref)
    if path.is_file():
        return InstancesRepository().instance(path)
    scenarios = ScenariosRepository()
    if scenarios.exists(ref):
        return scenarios.load(ref)
    raise UsageError(f"{ref} is neither an instance file nor a bundled scenario")


def _parse_order(order: str, repo: InstancesRepository) -> ConeSpec:
    if order == "cx":
        return ConeSpec.convex()
    if order == "icx":
        return ConeSpec.icx()
    if order.startswith("cone="):
        return repo.cone(order[len("cone="):])
    raise UsageError(f"--order must be cx, icx or cone=FILE, got {order!r}")


def _emit(args: argparse.Namespace, report: Report, timings: Dict[str, float]) -> None:
    if args.timings:
        report.timings = timings
    ReportsRepository(args.out, args.format).save(report)


def _config_echo(opts: SolverOptions, instance: Optional[LoadedInstance] = None) -> dict:
    echo = {"opts": opts.model_dump()}
    if instance is not None:
        echo["cost"] = instance.cost.to_config()
        dual_class = instance.dual_class
        echo["class"] = dual_class if isinstance(dual_class, str) else dual_class.to_dict()
        echo["cone"] = instance.cone.to_dict()
    return echo


@error_handler
def cmd_check_order(args: argparse.Namespace) -> int:
    repo = InstancesRepository()
    mu = repo.measure(args.mu)
    nu = repo.measure(args.nu)
    cone = _parse_order(args.order, repo)
    opts = _options(args)
    timings: Dict[str, float] = {}
    with timed(timings, "check"):
        cert = check_cone_order(mu, nu, cone, opts)
    revalidated = validate_certificate(cert, mu, nu, cone)
    if not revalidated:
        logger.warning(f"{cert.order} certificate did not re-validate")
    report = Report(
        command="check-order",
        ok=cert.verdict,
        values={"verdict": cert.verdict, "margin": cert.margin},
        certificates={"order": cert.to_dict()},
        witnesses={"revalidated": revalidated},
        config=_config_echo(opts),
    )
    _emit(args, report, timings)
    return EXIT_OK if cert.verdict else EXIT_NEGATIVE


@error_handler
def cmd_solve(args: argparse.Namespace) -> int:
    inst = _load_instance(args.instance)
    opts = _options(args, inst)
    side = args.side or inst.spec.side
    timings: Dict[str, float] = {}
    values: Dict[str, object] = {}
    details: Dict[str, object] = {}
    certificates: Dict[str, object] = {}
    witnesses: Dict[str, object] = {}
    ok = True

    if side in ("primal", "both"):
        with timed(timings, "primal"):
            primal = solve_primal(inst.mu, inst.nu, inst.cost, opts)
        values["primal"] = primal.value
        details["primal"] = primal.to_dict()
        if primal.certificate is not None:
            certificates["primal_infeasible"] = primal.certificate.to_dict()
        ok = ok and primal.finite

    if side in ("dual", "both"):
        monotone = declared_monotone(inst.cost, inst.dual_class)
        if not monotone:
            logger.warning(f"{inst.cost.name} is not declared decreasing for this class; the dual is only a lower bound")
        with timed(timings, "dual"):
            dual = solve_dual(inst.mu, inst.nu, inst.cost, inst.dual_class, opts, strict=False)
        values["dual"] = dual.value
        values["monotone"] = monotone
        details["dual"] = dual.to_dict()
        if monotone and math.isfinite(dual.value):
            with timed(timings, "witness"):
                witnesses["attainment"] = attainment_witness(dual, inst.nu, seed=opts.seed, opts=opts).to_dict()
        ok = ok and math.isfinite(dual.value)

    if side == "both":
        p, d = values["primal"], values["dual"]
        gap = 0.0 if math.isinf(p) and p == d else p - d
        values["gap"] = gap
        ok = ok and gap <= opts.tol * (1.0 + abs(p))

    report = Report(
        command="solve",
        ok=ok,
        instance=inst.name,
        values=values,
        certificates=certificates,
        witnesses=witnesses,
        details=details,
        config=_config_echo(opts, inst),
    )
    _emit(args, report, timings)
    return EXIT_OK if ok else EXIT_NEGATIVE


@error_handler
def cmd_project(args: argparse.Namespace) -> int:
    inst = _load_instance(args.instance)
    opts = _options(args, inst)
    timings: Dict[str, float] = {}
    with timed(timings, "project"):
        result = project_order(inst.mu, inst.nu, inst.cost, inst.cone, opts)
    lhs, mid, rhs = result.three_values
    ok = result.max_discrepancy <= AGREEMENT_TOL * (1.0 + abs(lhs))
    report = Report(
        command="project",
        ok=ok,
        instance=inst.name,
        values={"lhs": lhs, "mid": mid, "rhs": rhs, "max_discrepancy": result.max_discrepancy},
        details={"projection": result.to_dict()},
        config=_config_echo(opts, inst),
    )
    _emit(args, report, timings)
    return EXIT_OK if ok else EXIT_NEGATIVE


@error_handler
def cmd_verify(args: argparse.Namespace) -> int:
    opts = _options(args)
    seed = opts.seed
    timings: Dict[str, float] = {}
    with timed(timings, "verify"):
        reports = run_verification(args.suite, args.n, seed, opts, get_config().threads)
    passed = sum(r.passed for r in reports)
    failed = sum(r.failed for r in reports)
    report = Report(
        command="verify",
        ok=failed == 0,
        values={"passed": passed, "failed": failed},
        details={"suites": {r.suite: r.to_dict() for r in reports}},
        config={"suite": args.suite, "n": args.n, "seed": seed, "opts": opts.model_dump()},
    )
    _emit(args, report, timings)
    return EXIT_OK if failed == 0 else EXIT_NEGATIVE


@error_handler
def cmd_scenarios(args: argparse.Namespace) -> int:
    scenarios = ScenariosRepository().describe()
    report = Report(command="scenarios", ok=True, details={"scenarios": scenarios})
    ReportsRepository(args.out, args.format).save(report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None, help="Gap tolerance (overrides WOTLAB_GAP_TOL).")
    common.add_argument("--grid-refine", dest="grid_refine", type=int, default=None, help="Extra grid points per gap.")
    common.add_argument("--seed", type=int, default=None, help="Master seed for every random choice.")
    common.add_argument("--out", default=None, help="Write the report to FILE instead of stdout.")
    common.add_argument("--format", choices=("json", "table"), default="json")
    common.add_argument("--timings", action="store_true", help="Include wall-clock timings in the report.")

    parser = argparse.ArgumentParser(prog="wotlab", description="Discrete weak optimal transport toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-order", parents=[common], help="Stochastic order check with certificate")
    p.add_argument("mu", help="Measure file or inline JSON")
    p.add_argument("nu", help="Measure file or inline JSON")
    p.add_argument("--order", default="cx", help="cx, icx or cone=FILE")
    p.set_defaults(func=cmd_check_order)

    p = sub.add_parser("solve", parents=[common], help="Primal and/or restricted dual of an instance")
    p.add_argument("instance", help="Instance file or bundled scenario name")
    p.add_argument("--side", choices=("primal", "dual", "both"), default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", parents=[common], help="Seeded random-instance verification batches")
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.add_argument("--n", type=int, default=20)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("project", parents=[common], help="Order projection with three-way value check")
    p.add_argument("instance", help="Instance file or bundled scenario name")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("scenarios", parents=[common], help="List bundled scenarios")
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)
