"""Seeded random-instance batches cross-checking the solvers against each other."""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from ..config import SolverOptions, default_options, get_config
from ..errors import UsageError, WotlabError
from ..logger import logger
from .costs import Barycentric, CostPlugin, ICXPositivePart, MartingaleIndicator, Monopolist, NegativeMCov, RelaxedMartingaleBB
from .dual_solver import attainment_witness, solve_dual
from .hulls import GridFunction, Theta, brute_force_hull, conv_R, convex_hull, iconvex_hull, icx_hull_oracle
from .measures import DiscreteMeasure
from .orders import ConeSpec, check_cone_order, sample_dilation, validate_certificate
from .primal_solver import solve_primal
from .projection import verify_three_way

SUITES = ("duality", "hulls", "orders", "projection")
SCHEDULE_RADII = (0.25, 0.5, 1.0, 2.0, 4.0, math.inf)


@dataclass
class SuiteReport:
    suite: str
    seed: int
    n: int
    passed: int = 0
    failures: List[dict] = field(default_factory=list)

    @property
    def failed(self) -> int:
        return len(self.failures)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "seed": self.seed,
            "n": self.n,
            "passed": self.passed,
            "failed": self.failed,
            "failures": self.failures,
        }


def case_seeds(seed: int, n: int) -> List[int]:
    """Per-case seeds derived from one master seed."""
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def random_measure(rng: np.random.Generator, dim: int = 1, max_atoms: int = 6, decimals: int = 2) -> DiscreteMeasure:
    n = int(rng.integers(1, max_atoms + 1))
    points = np.round(rng.uniform(-3.0, 3.0, size=(n, dim)), decimals)
    return DiscreteMeasure.create(points, rng.dirichlet(np.ones(n)), normalize=True)


def _dilate(rho: DiscreteMeasure, order: str, rng: np.random.Generator, rounds: int = 2) -> DiscreteMeasure:
    out = rho
    for _ in range(rounds):
        out = sample_dilation(out, order, rng)
    return DiscreteMeasure.create(np.round(out.points, 6), out.weights, normalize=True)


def sampled_violation(r1: DiscreteMeasure, r2: DiscreteMeasure, order: str, rng: np.random.Generator, n_functions: int = 500) -> float:
    """Largest r1(f) - r2(f) over random convex (or increasing convex) test functions."""
    d = r1.dim
    worst = -math.inf
    monotone = order == "icx"
    atoms = np.vstack([r1.points, r2.points])
    directions = [np.eye(d)[i] for i in range(d)]
    directions += [u / np.linalg.norm(u) for u in rng.normal(size=(8 * d if d > 1 else 0, d))]
    if monotone:
        directions = [u for u in (np.abs(u) for u in directions) if np.any(u > 0)]
    tests: List[Callable[[np.ndarray], np.ndarray]] = []
    for u in directions:
        tests.append(lambda p, u=u: p @ u)
        if not monotone:
            tests.append(lambda p, u=u: -(p @ u))
        for k in atoms @ u:
            tests.append(lambda p, u=u, k=k: np.clip(p @ u - k, 0.0, None))
            if not monotone:
                tests.append(lambda p, u=u, k=k: np.clip(k - p @ u, 0.0, None))
    while len(tests) < n_functions:
        k = int(rng.integers(1, 5))
        slopes = rng.normal(size=(k, d))
        if monotone:
            slopes = np.abs(slopes)
        offsets = rng.normal(size=k) * 2.0
        tests.append(lambda p, s=slopes, b=offsets: np.max(p @ s.T + b, axis=1))
    for f in tests:
        worst = max(worst, r1.integrate(f(r1.points)) - r2.integrate(f(r2.points)))
    return worst


def _orders_case(seed: int, index: int, opts: SolverOptions) -> dict:
    rng = np.random.default_rng(seed)
    dim = 2 if index % 3 == 2 else 1
    order = "icx" if index % 2 else "cx"
    cone = ConeSpec.icx() if order == "icx" else ConeSpec.convex()
    max_atoms = 8 if dim == 2 else 6
    r1 = random_measure(rng, dim, max_atoms=max_atoms)
    r2 = _dilate(r1, order, rng) if rng.random() < 0.5 else random_measure(rng, dim, max_atoms=max_atoms)
    cert = check_cone_order(r1, r2, cone, opts)
    violation = sampled_violation(r1, r2, order, rng)
    if cert.verdict:
        ok = violation <= 1e-7
    else:
        ok = cert.margin > opts.margin_tol and validate_certificate(cert, r1, r2, cone) and violation > 0.0
    return {
        "ok": bool(ok),
        "order": order,
        "dim": dim,
        "verdict": cert.verdict,
        "degenerate": cert.degenerate,
        "sampled_violation": float(violation),
    }


def _random_grid_function(rng: np.random.Generator, dim: int) -> GridFunction:
    n = int(rng.integers(3, 21 if dim == 1 else 13))
    points = np.unique(np.round(rng.uniform(-3.0, 3.0, size=(n, dim)), 2), axis=0)
    return GridFunction(points, np.round(rng.normal(size=len(points)) * 2.0, 3))


def _hulls_case(seed: int, index: int, opts: SolverOptions) -> dict:
    rng = np.random.default_rng(seed)
    dim = 2 if index % 4 == 3 else 1
    f = _random_grid_function(rng, dim)
    hull = convex_hull(f, opts)
    ihull = iconvex_hull(f, opts)
    hull_err = max(abs(hull.values[j] - brute_force_hull(f, y, opts=opts)) for j, y in enumerate(f.support))
    icx_err = max(abs(ihull.values[j] - icx_hull_oracle(f, y, opts)) for j, y in enumerate(f.support))
    schedule_ok, terminal = True, 0.0
    for j, y in enumerate(f.support):
        schedule = [conv_R(f, y, R, opts) for R in SCHEDULE_RADII]
        schedule_ok = schedule_ok and all(b <= a + 1e-9 for a, b in zip(schedule, schedule[1:]))
        terminal = max(terminal, abs(schedule[-1] - hull.values[j]))
    ok = hull_err <= 1e-9 and icx_err <= 1e-9 and schedule_ok and terminal <= 1e-8
    return {"ok": bool(ok), "dim": dim, "hull_error": float(hull_err), "icx_error": float(icx_err), "schedule_monotone": schedule_ok}


# (factory, dual class, order nu is dilated in or None, max atoms of mu, relative gap tolerance)
DUALITY_COSTS: List[tuple] = [
    (lambda: Barycentric(Theta.norm(1)), "convex", None, 3, 1e-5),
    (lambda: Barycentric(Theta.sqnorm()), "convex", None, 3, 1e-5),
    (lambda: MartingaleIndicator(), "convex", "cx", 3, 1e-5),
    (lambda: ICXPositivePart(1.0), "icx", None, 3, 1e-5),
    (lambda: Monopolist(Theta.norm(1)), "icx", None, 3, 1e-5),
    (lambda: NegativeMCov(gauss_nodes=16), "convex", "cx", 5, 1e-4),
    (lambda: RelaxedMartingaleBB(gauss_nodes=16), "convex", None, 3, 1e-4),
]


def _duality_case(seed: int, index: int, opts: SolverOptions) -> dict:
    rng = np.random.default_rng(seed)
    make, dual_class, ordered, max_atoms, rel_tol = DUALITY_COSTS[index % len(DUALITY_COSTS)]
    cost: CostPlugin = make()
    mu = random_measure(rng, 1, max_atoms=max_atoms, decimals=1)
    nu = _dilate(mu, ordered, rng, rounds=1) if ordered else random_measure(rng, 1, max_atoms=3, decimals=1)
    primal = solve_primal(mu, nu, cost, opts).value
    dual = solve_dual(mu, nu, cost, dual_class, opts)
    gap = primal - dual.value
    witness = attainment_witness(dual, nu, n_probes=40, seed=seed % (2 ** 32), opts=opts)
    ok = abs(gap) <= rel_tol * (1.0 + abs(primal)) and witness.ok
    return {"ok": bool(ok), "cost": cost.name, "primal": primal, "dual": dual.value, "gap": gap, "witness": witness.ok}


def _projection_case(seed: int, index: int, opts: SolverOptions) -> dict:
    rng = np.random.default_rng(seed)
    mu = random_measure(rng, 1, max_atoms=3, decimals=1)
    nu = random_measure(rng, 1, max_atoms=3, decimals=1)
    if index % 2:
        cost, cone = ICXPositivePart(1.0), ConeSpec.icx()
    else:
        cost, cone = Barycentric(Theta.sqnorm()), ConeSpec.convex()
    report = verify_three_way(mu, nu, cost, cone, opts=opts)
    return {"ok": report.ok, "cost": cost.name, "lhs": report.lhs, "mid": report.mid, "rhs": report.rhs, "discrepancy": report.max_discrepancy}


CASES: Dict[str, Callable[[int, int, SolverOptions], dict]] = {
    "duality": _duality_case,
    "hulls": _hulls_case,
    "orders": _orders_case,
    "projection": _projection_case,
}


def _run_case(suite: str, seed: int, index: int, opts: SolverOptions) -> dict:
    try:
        return CASES[suite](seed, index, opts)
    except WotlabError as exc:
        logger.warning(f"{suite} case {index} (seed {seed}) raised {exc.__class__.__name__}: {exc}")
        return {"ok": False, "error": f"{exc.__class__.__name__}: {exc}"}


def run_suite(suite: str, n: int, seed: int, opts: Optional[SolverOptions] = None, threads: Optional[int] = None) -> SuiteReport:
    if suite not in CASES:
        raise UsageError(f"unknown suite {suite!r}; expected one of {', '.join(SUITES)} or all")
    if n < 1:
        raise UsageError("--n must be at least 1")
    opts = opts or default_options()
    threads = threads or get_config().threads
    seeds = case_seeds(seed, n)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda args: _run_case(suite, args[1], args[0], opts), enumerate(seeds)))
    report = SuiteReport(suite, seed, n)
    for index, (case_seed, result) in enumerate(zip(seeds, results)):
        if result.get("ok"):
            report.passed += 1
        else:
            report.failures.append({"case": index, "seed": case_seed, "detail": result})
    logger.info(f"suite {suite}: {report.passed}/{n} passed (seed {seed})")
    return report


def run_verification(suite: str, n: int, seed: int, opts: Optional[SolverOptions] = None, threads: Optional[int] = None) -> List[SuiteReport]:
    names = SUITES if suite == "all" else (suite,)
    return [run_suite(name, n, seed, opts, threads) for name in names]
