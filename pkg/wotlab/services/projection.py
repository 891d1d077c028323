"""Order projections: transport mu onto some eta dominated by nu, then spread eta to nu."""
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from ..config import SolverOptions, default_options
from ..errors import DomainError, UsageError
from ..logger import logger
from .costs import CostPlugin, HullCost
from .dual_solver import resolve_class, solve_dual
from .measures import Coupling, DiscreteMeasure, Kernel, PRUNE_WEIGHT, chain, second_moment_weights, working_grid
from .optim_core import EQ, LinExpr, ProgramBuilder, lexicographic_polish
from .orders import ConeSpec, add_dilation_rows, check_cone_order
from .primal_solver import solve_primal


def monotone_hull_cost(cost: CostPlugin, cone: ConeSpec) -> CostPlugin:
    """C_hat(x, rho) = inf of C(x, xi) over xi dominated by rho in the cone order."""
    if not cost.convex_in_rho:
        raise UsageError("the monotone hull needs a cost that is convex in rho")
    return HullCost(cost, cone)


@dataclass
class ProjectionResult:
    eta: DiscreteMeasure
    first_leg: Coupling
    dilation_leg: Kernel
    three_values: Tuple[float, float, float]
    composed: Coupling
    grid: np.ndarray
    needs_sup: bool = False

    @property
    def max_discrepancy(self) -> float:
        lhs, mid, rhs = self.three_values
        return max(abs(lhs - mid), abs(lhs - rhs), abs(mid - rhs))

    def to_dict(self) -> dict:
        lhs, mid, rhs = self.three_values
        return {
            "eta": self.eta.to_dict(),
            "first_leg": self.first_leg.matrix.tolist(),
            "dilation_leg": self.dilation_leg.to_dict(),
            "three_values": {"lhs": lhs, "mid": mid, "rhs": rhs},
            "max_discrepancy": self.max_discrepancy,
            "composed": self.composed.matrix.tolist(),
            "grid_size": int(len(self.grid)),
            "needs_sup": self.needs_sup,
            "note": "grid is finite, so compactness of the target space holds",
        }


def _as_cone(cone: Union[str, ConeSpec]) -> ConeSpec:
    if isinstance(cone, ConeSpec):
        return cone
    return resolve_class({"cx": "convex"}.get(cone, cone))[1]


def _joint_program(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostPlugin, cone: ConeSpec, grid: np.ndarray):
    """pi (mu -> grid), Q (grid -> nu) with eta = col(pi) = row(Q) and Q's rows dilations."""
    builder = ProgramBuilder()
    m, g, n = mu.size, len(grid), nu.size
    pi = builder.add_variables(m * g).reshape(m, g)
    Q = builder.add_variables(g * n).reshape(g, n)
    for i in range(m):
        builder.add_row(LinExpr.total(pi[i]), EQ, float(mu.weights[i]))
    for k in range(g):
        builder.add_row(LinExpr.total(pi[:, k]) - LinExpr.total(Q[k]), EQ, 0.0)
    for j in range(n):
        builder.add_row(LinExpr.total(Q[:, j]), EQ, float(nu.weights[j]))
    add_dilation_rows(builder, grid, [LinExpr.total(Q[k]) for k in range(g)], nu.points, Q, cone.resolved(grid, nu.points))
    for i in range(m):
        cost.add_block(builder, mu.points[i], float(mu.weights[i]), grid, [LinExpr.var(k) for k in pi[i]])
    return builder, pi, Q


def project_order(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cost: CostPlugin,
    cone: Union[str, ConeSpec] = "cx",
    opts: Optional[SolverOptions] = None,
) -> ProjectionResult:
    """inf over eta dominated by nu of WOT(mu, eta), with the two-step decomposition
    and the values of the hull-cost primal and the cone-restricted dual."""
    opts = opts or default_options()
    if mu.dim != nu.dim:
        raise UsageError("marginals live in different dimensions")
    cone = _as_cone(cone)
    grid = working_grid(mu, nu, opts.grid_refine)
    bound = cost.bind_grid(grid)

    builder, pi, Q = _joint_program(mu, nu, bound, cone, grid)
    sol = builder.solve(opts)
    if sol.status == "infeasible":
        raise DomainError("no measure on the working grid is dominated by nu with finite cost")
    lhs = float(sol.value)

    secondary = np.zeros(builder.n_vars)
    moments = second_moment_weights(grid)
    for k in range(len(grid)):
        secondary[Q[k]] = moments[k]
    slack = sol.gap + 1e-9 * (1.0 + abs(lhs))
    x = lexicographic_polish(builder.build(), sol.x, lhs, secondary, slack, opts)

    pi_m = np.clip(x[pi], 0.0, None)
    Q_m = np.clip(x[Q], 0.0, None)
    eta_w = Q_m.sum(axis=1)
    keep = eta_w >= PRUNE_WEIGHT
    support = grid[keep]
    eta = DiscreteMeasure.create(support, eta_w[keep], normalize=True)
    first_leg = Coupling.repaired(mu, eta, pi_m[:, keep], second_support=support)
    dilation_leg = Kernel.from_matrix(support, nu.points, Q_m[keep])
    composed = chain(first_leg, dilation_leg)

    hull_cost = monotone_hull_cost(cost, cone)
    mid = solve_primal(mu, nu, hull_cost, opts).value
    dual = solve_dual(mu, nu, hull_cost, cone, opts)
    rhs = dual.value
    if dual.needs_sup:
        logger.warning("cone dual certificate is a max of several conic combinations")
    logger.info(f"projection {cost.name}/{cone.order_name}: lhs={lhs:.12g} mid={mid:.12g} rhs={rhs:.12g} |eta|={eta.size}")
    return ProjectionResult(eta, first_leg, dilation_leg, (lhs, mid, rhs), composed, grid, dual.needs_sup)


@dataclass
class ThreeWayReport:
    lhs: float
    mid: float
    rhs: float
    max_discrepancy: float
    eta_dominated: bool
    marginal_error: float
    needs_sup: bool
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_discrepancy <= self.tol and self.eta_dominated and self.marginal_error <= 1e-9

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "mid": self.mid,
            "rhs": self.rhs,
            "max_discrepancy": self.max_discrepancy,
            "eta_dominated": self.eta_dominated,
            "marginal_error": self.marginal_error,
            "needs_sup": self.needs_sup,
            "ok": self.ok,
        }


def verify_three_way(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cost: CostPlugin,
    cone: Union[str, ConeSpec] = "cx",
    tol: float = 1e-5,
    opts: Optional[SolverOptions] = None,
) -> ThreeWayReport:
    opts = opts or default_options()
    cone = _as_cone(cone)
    result = project_order(mu, nu, cost, cone, opts)
    lhs, mid, rhs = result.three_values
    cert = check_cone_order(result.eta, nu, cone, opts)
    composed = result.composed
    row_err = np.max(np.abs(composed.matrix.sum(axis=1) - mu.weights))
    try:
        col_err = np.max(np.abs(composed.matrix.sum(axis=0) - nu.weights_on(composed.second_support)))
    except UsageError:
        col_err = math.inf
    report = ThreeWayReport(lhs, mid, rhs, result.max_discrepancy, cert.verdict, float(max(row_err, col_err)), result.needs_sup, tol)
    if not report.ok:
        logger.warning(f"three-way check failed: lhs={lhs:.12g} mid={mid:.12g} rhs={rhs:.12g}")
    return report
