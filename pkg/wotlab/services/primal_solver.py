import itertools
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from ..config import SolverOptions, default_options
from ..errors import NumericalFailure, UsageError
from ..logger import logger
from .costs import CostPlugin, MeanCost, NegativeMCov
from .measures import Coupling, DiscreteMeasure, working_grid
from .optim_core import EQ, GE, FarkasCertificate, LinExpr, ProgramBuilder
from .orders import OrderCertificate, check_convex_order, check_icx_order

EXHAUSTIVE_MAX_CELLS = 12


@dataclass
class PrimalResult:
    value: float
    coupling: Optional[Coupling]
    method: str
    certified_gap: float
    status: str
    certificate: Optional[OrderCertificate] = None
    farkas: Optional[FarkasCertificate] = None
    iterations: int = 1

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)

    def to_dict(self) -> dict:
        out = {
            "value": self.value,
            "status": self.status,
            "gap": self.certified_gap,
            "method": self.method,
            "coupling": None if self.coupling is None else self.coupling.matrix.tolist(),
        }
        if self.certificate is not None:
            out["certificate"] = self.certificate.to_dict()
        return out


def _check_dims(mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
    if mu.dim != nu.dim:
        raise UsageError(f"marginals live in different dimensions ({mu.dim} vs {nu.dim})")


def _method_tag(cost: CostPlugin, solver_method: str) -> str:
    if cost.linear:
        return "transport_lp"
    if isinstance(cost, MeanCost) and cost.constraint is not None and cost.theta is None:
        return "constrained_lp"
    return solver_method


def _infeasibility_certificate(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostPlugin, opts: SolverOptions) -> Optional[OrderCertificate]:
    constraint = getattr(cost, "constraint", None)
    if isinstance(cost, NegativeMCov):
        constraint = EQ
    if constraint == EQ:
        return check_convex_order(mu, nu, opts)
    if constraint == GE:
        return check_icx_order(mu, nu, opts)
    return None


def transport_program(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostPlugin, grid: Optional[np.ndarray] = None) -> tuple:
    """Builder over pi (m x targets) with both marginal constraints and one cost
    block per source atom. Targets default to supp nu; on a larger grid the
    extra columns carry zero mass. Returns the builder, the variable index
    matrix and the column row indices."""
    builder = ProgramBuilder()
    targets = nu.points if grid is None else grid
    col_weights = nu.weights if grid is None else nu.weights_on(grid)
    m, n = mu.size, len(targets)
    pi = builder.add_variables(m * n).reshape(m, n)
    for i in range(m):
        builder.add_row(LinExpr.total(pi[i]), EQ, float(mu.weights[i]))
    cols = [builder.add_row(LinExpr.total(pi[:, j]), EQ, float(col_weights[j])) for j in range(n)]
    for i in range(m):
        cost.add_block(builder, mu.points[i], float(mu.weights[i]), targets, [LinExpr.var(k) for k in pi[i]])
    builder.set_start(pi.ravel(), np.outer(mu.weights, col_weights).ravel())
    return builder, pi, cols


def solve_primal(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostPlugin, opts: Optional[SolverOptions] = None) -> PrimalResult:
    """Minimise sum_x mu_x C(x, pi_x) over couplings of mu and nu."""
    opts = opts or default_options()
    _check_dims(mu, nu)
    if not cost.convex_in_rho:
        raise UsageError(f"{cost.name} is not convex in rho")
    cost = cost.bind_grid(working_grid(mu, nu, opts.grid_refine))
    builder, pi, _ = transport_program(mu, nu, cost)
    sol = builder.solve(opts)
    method = _method_tag(cost, sol.method)

    if sol.status == "infeasible":
        cert = _infeasibility_certificate(mu, nu, cost, opts)
        logger.info(f"primal {cost.name}: {mu.size}x{nu.size} infeasible ({method})")
        return PrimalResult(math.inf, None, method, 0.0, "infeasible", certificate=cert, farkas=sol.farkas)
    if sol.status == "unbounded":
        raise NumericalFailure(f"primal program for {cost.name} is unbounded")

    matrix = np.clip(sol.x[pi.ravel()].reshape(pi.shape), 0.0, None)
    coupling = Coupling.repaired(mu, nu, matrix)
    status = "optimal" if sol.status == "optimal" else "stalled"
    if status == "stalled":
        logger.warning(f"primal {cost.name}: Frank-Wolfe stopped with gap {sol.gap:.3e}")
    logger.info(f"primal {cost.name}: {mu.size}x{nu.size} value={sol.value:.12g} gap={sol.gap:.3e} ({method})")
    return PrimalResult(float(sol.value), coupling, method, float(sol.gap), status, iterations=sol.iterations)


def objective_on(coupling: Coupling, cost: CostPlugin, opts: Optional[SolverOptions] = None) -> float:
    """sum_x mu_x C(x, pi_x) for a given coupling."""
    total = 0.0
    for x, row in zip(coupling.first_support, coupling.matrix):
        mass = row.sum()
        if mass <= 0:
            continue
        total += mass * _row_cost(cost, x, coupling.second_support, row / mass, opts)
    return total


def _row_cost(cost: CostPlugin, x: np.ndarray, points: np.ndarray, weights: np.ndarray, opts: Optional[SolverOptions] = None) -> float:
    if isinstance(cost, MeanCost):
        return cost.penalty(x, weights @ points)
    return cost.evaluate(x, DiscreteMeasure.create(points, weights, normalize=True), opts)


def _transport_vertices(mu: DiscreteMeasure, nu: DiscreteMeasure) -> List[np.ndarray]:
    """Vertices of the transport polytope: basic solutions on m + n - 1 cells."""
    m, n = mu.size, nu.size
    rows = np.zeros((m + n, m * n))
    for i in range(m):
        rows[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        rows[m + j, j::n] = 1.0
    rhs = np.concatenate([mu.weights, nu.weights])
    seen = {}
    for cells in itertools.combinations(range(m * n), m + n - 1):
        sub = rows[:, cells]
        sol, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
        if np.max(np.abs(sub @ sol - rhs)) > 1e-10 or np.min(sol) < -1e-12:
            continue
        v = np.zeros(m * n)
        v[list(cells)] = np.clip(sol, 0.0, None)
        seen.setdefault(tuple(np.round(v, 12)), v.reshape(m, n))
    return list(seen.values())


class _FreeCells:
    """Couplings parametrised by the cells (i, j) with i < m-1 and j < n-1."""

    def __init__(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
        self.mu, self.nu = mu, nu
        self.m, self.n = mu.size, nu.size
        self.k = (self.m - 1) * (self.n - 1)
        self.upper = np.array([min(mu.weights[i], nu.weights[j]) for i in range(self.m - 1) for j in range(self.n - 1)])

    def matrix(self, free: np.ndarray) -> np.ndarray:
        pi = np.zeros((self.m, self.n))
        pi[: self.m - 1, : self.n - 1] = np.reshape(free, (self.m - 1, self.n - 1))
        pi[: self.m - 1, self.n - 1] = self.mu.weights[:-1] - pi[: self.m - 1, : self.n - 1].sum(axis=1)
        pi[self.m - 1, :] = self.nu.weights - pi[: self.m - 1, :].sum(axis=0)
        return pi

    def free_of(self, pi: np.ndarray) -> np.ndarray:
        return pi[: self.m - 1, : self.n - 1].ravel()


def solve_primal_exhaustive(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostPlugin, opts: Optional[SolverOptions] = None) -> PrimalResult:
    """Independent oracle on tiny instances: vertex enumeration for linear costs,
    grid scans of the transport polytope for one or two free parameters, and
    multi-start SLSQP beyond that. Finite-valued costs only."""
    _check_dims(mu, nu)
    if mu.size * nu.size > EXHAUSTIVE_MAX_CELLS:
        raise UsageError(f"exhaustive oracle is limited to {EXHAUSTIVE_MAX_CELLS} coupling cells")
    if isinstance(cost, NegativeMCov) or (isinstance(cost, MeanCost) and cost.constraint is not None):
        raise UsageError("exhaustive oracle needs a finite-valued cost")
    cost = cost.bind_grid(working_grid(mu, nu, 0))
    cells = _FreeCells(mu, nu)

    def value_of(pi: np.ndarray) -> float:
        return sum(
            mu.weights[i] * _row_cost(cost, mu.points[i], nu.points, pi[i] / mu.weights[i], opts)
            for i in range(cells.m)
        )

    def penalised(free: np.ndarray) -> float:
        free = np.clip(free, 0.0, cells.upper)
        pi = cells.matrix(free)
        shortfall = float(np.clip(-pi, 0.0, None).sum())
        return value_of(np.clip(pi, 0.0, None)) + 1e6 * shortfall

    vertices = _transport_vertices(mu, nu)
    vertex_values = [value_of(v) for v in vertices]
    best_index = int(np.argmin(vertex_values))
    best_pi, best = vertices[best_index], vertex_values[best_index]

    if cost.linear or cells.k == 0:
        return _exhaustive_result(mu, nu, best_pi, best, "vertex_enumeration")

    if cells.k == 1:
        ts = np.linspace(0.0, cells.upper[0], 10001)
        scan = [penalised(np.array([t])) for t in ts]
        i = int(np.argmin(scan))
        lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, len(ts) - 1)]
        res = minimize_scalar(lambda t: penalised(np.array([t])), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        candidates = [(scan[i], np.array([ts[i]])), (float(res.fun), np.array([res.x]))]
        method = "scan"
    elif cells.k == 2:
        g0 = np.linspace(0.0, cells.upper[0], 201)
        g1 = np.linspace(0.0, cells.upper[1], 201)
        best_scan, arg = math.inf, None
        for a in g0:
            for b in g1:
                v = penalised(np.array([a, b]))
                if v < best_scan:
                    best_scan, arg = v, np.array([a, b])
        res = minimize(penalised, arg, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        candidates = [(best_scan, arg), (float(res.fun), res.x)]
        method = "scan"
    else:
        rng = np.random.default_rng(0)
        starts = [cells.free_of(np.outer(mu.weights, nu.weights))]
        starts += [cells.free_of(0.5 * v + 0.5 * np.outer(mu.weights, nu.weights)) for v in vertices[:4]]
        starts += [cells.free_of(sum(w * v for w, v in zip(rng.dirichlet(np.ones(len(vertices))), vertices))) for _ in range(3)]
        constraints = [{"type": "ineq", "fun": lambda f: cells.matrix(f).ravel()}]
        candidates = []
        for start in starts:
            res = minimize(lambda f: value_of(np.clip(cells.matrix(f), 0.0, None)), start, method="SLSQP", constraints=constraints, bounds=[(0.0, u) for u in cells.upper])
            if np.min(cells.matrix(res.x)) >= -1e-9:
                candidates.append((float(res.fun), res.x))
        method = "slsqp"

    for v, free in candidates:
        pi = np.clip(cells.matrix(np.clip(free, 0.0, cells.upper)), 0.0, None)
        if np.min(cells.matrix(np.clip(free, 0.0, cells.upper))) < -1e-9:
            continue
        v = value_of(pi)
        if v < best:
            best, best_pi = v, pi
    return _exhaustive_result(mu, nu, best_pi, best, method)


def _exhaustive_result(mu, nu, pi, value, method) -> PrimalResult:
    coupling = Coupling.repaired(mu, nu, pi)
    logger.info(f"exhaustive oracle: {mu.size}x{nu.size} value={value:.12g} ({method})")
    return PrimalResult(float(value), coupling, method, 0.0, "optimal")
