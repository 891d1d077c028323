"""C-conjugates and the dual problem restricted to convex, increasing convex or
cone potentials.

Potentials are parametrised by their values on a working grid that contains
supp mu and supp nu, together with one anchored affine piece (or one conic
combination) per grid point. The dual objective is concave in the grid
values; it is warm-started from the grid primal's column duals followed by the
class hull, then certified against the primal value with cutting planes.
"""
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import sparse

from ..config import SolverOptions, default_options
from ..errors import DomainError, NumericalFailure, UsageError
from ..logger import logger
from .costs import ClassicalLinear, CostPlugin, ICXPositivePart, MeanCost
from .hulls import (
    GridFunction,
    MaxAffinePotential,
    _lower_hull_1d,
    conv_R,
    convex_hull,
    iconvex_hull,
)
from .measures import DiscreteMeasure, as_points, working_grid
from .optim_core import EQ, LinExpr, ProgramBuilder, cutting_plane_max
from .orders import ConeFunction, ConeSpec, check_cone_order, cone_hull
from .primal_solver import solve_primal, transport_program

Potential = Union[MaxAffinePotential, ConeFunction]


def resolve_class(dual_class: Union[str, ConeSpec]) -> Tuple[str, ConeSpec]:
    if isinstance(dual_class, ConeSpec):
        name = {"cx": "convex", "icx": "icx"}.get(dual_class.order_name, "cone")
        return name, dual_class
    if dual_class == "convex":
        return "convex", ConeSpec.convex()
    if dual_class == "icx":
        return "icx", ConeSpec.icx()
    raise UsageError(f"unknown dual class {dual_class!r}; expected convex, icx or a cone spec")


def _values_on(psi, grid: np.ndarray) -> np.ndarray:
    if isinstance(psi, GridFunction):
        return np.array([psi.value_at(z) for z in grid])
    if callable(psi):
        return np.asarray(psi(grid), dtype=float)
    values = np.asarray(psi, dtype=float).ravel()
    if len(values) != len(grid):
        raise UsageError("potential values do not match the grid")
    return values


def _mean_conjugate_1d(values: np.ndarray, grid: np.ndarray, cost: MeanCost, x: float) -> Tuple[float, Optional[np.ndarray]]:
    """inf over m of conv psi(m) + h(x, m) for costs that see rho only through its mean."""
    mask = np.isfinite(values)
    vx, vy = _lower_hull_1d(grid[mask, 0], values[mask])
    candidates = list(vx)
    if cost.theta is not None:
        candidates += [x - k for k in cost.theta.kinks()]
        if cost.theta.smooth:
            for k in range(len(vx) - 1):
                s = (vy[k + 1] - vy[k]) / (vx[k + 1] - vx[k])
                candidates.append(min(max(x - 0.5 * s, vx[k]), vx[k + 1]))
    if cost.constraint is not None:
        candidates.append(x)
    best, arg = math.inf, None
    for m in candidates:
        if m < vx[0] - 1e-12 or m > vx[-1] + 1e-12:
            continue
        m = min(max(m, vx[0]), vx[-1])
        v = float(np.interp(m, vx, vy)) + cost.penalty(np.array([x]), np.array([m]))
        if v < best:
            best, arg = v, m
    if arg is None:
        return math.inf, None
    index = {float(z): j for j, z in enumerate(grid[:, 0]) if np.isfinite(values[j])}
    rho = np.zeros(len(grid))
    k = int(np.clip(np.searchsorted(vx, arg, side="right") - 1, 0, len(vx) - 1))
    if k == len(vx) - 1 or arg <= vx[k]:
        rho[index[float(vx[k])]] = 1.0
    else:
        t = (arg - vx[k]) / (vx[k + 1] - vx[k])
        rho[index[float(vx[k])]] = 1.0 - t
        rho[index[float(vx[k + 1])]] = t
    return best, rho


def _program_conjugate(values: np.ndarray, grid: np.ndarray, cost: CostPlugin, x: np.ndarray, opts: SolverOptions) -> Tuple[float, Optional[np.ndarray]]:
    builder = ProgramBuilder()
    r = builder.add_variables(len(grid), upper=1.0)
    builder.add_row(LinExpr.total(r), EQ, 1.0)
    finite = np.isfinite(values)
    for j in np.flatnonzero(~finite):
        builder.add_row(LinExpr.var(r[j]), EQ, 0.0)
    builder.add_objective(LinExpr.total(r, np.where(finite, values, 0.0)))
    cost.add_block(builder, x, 1.0, grid, [LinExpr.var(i) for i in r])
    sol = builder.solve(opts)
    if sol.status == "infeasible":
        return math.inf, None
    if sol.status == "unbounded":
        return -math.inf, None
    return float(sol.value), np.clip(sol.x[r], 0.0, None)


def conjugate_with_measure(values, grid, cost: CostPlugin, x, opts: Optional[SolverOptions] = None) -> Tuple[float, Optional[np.ndarray]]:
    """psi^C(x) with psi given by its grid values, and the minimising rho on the grid."""
    opts = opts or default_options()
    grid = as_points(grid)
    values = np.asarray(values, dtype=float)
    x = np.ravel(np.asarray(x, dtype=float))
    if not np.any(np.isfinite(values)):
        return math.inf, None
    if grid.shape[1] == 1 and isinstance(cost, MeanCost):
        return _mean_conjugate_1d(values, grid, cost, float(x[0]))
    return _program_conjugate(values, grid, cost.bind_grid(grid), x, opts)


def c_conjugate(psi, cost: CostPlugin, x, grid, opts: Optional[SolverOptions] = None) -> float:
    """inf over rho supported on the grid of rho(psi) + C(x, rho); -inf if unbounded."""
    grid = as_points(grid)
    value, _ = conjugate_with_measure(_values_on(psi, grid), grid, cost, x, opts)
    return value


@dataclass
class AdmissiblePair:
    support: np.ndarray
    phi: np.ndarray
    psi: Potential

    def probe(self, cost: CostPlugin, grid: np.ndarray, n_probes: int = 100, seed: int = 0, opts: Optional[SolverOptions] = None) -> float:
        """Largest phi(x) - rho(psi) - C(x, rho) over random grid measures rho."""
        rng = np.random.default_rng(seed)
        grid = as_points(grid)
        cost = cost.bind_grid(grid)
        worst = -math.inf
        for _ in range(n_probes):
            i = int(rng.integers(len(self.support)))
            k = int(rng.integers(1, min(3, len(grid)) + 1))
            atoms = rng.choice(len(grid), size=k, replace=False)
            rho = DiscreteMeasure.create(grid[atoms], rng.dirichlet(np.ones(k)), normalize=True)
            c = cost.evaluate(self.support[i], rho, opts)
            if math.isinf(c):
                continue
            lhs = self.phi[i] - rho.integrate(_values_on(self.psi, rho.points))
            worst = max(worst, lhs - c)
        return worst


@dataclass
class DualResult:
    value: float
    potential: Potential
    conjugate_values: np.ndarray
    dual_class: str
    support: np.ndarray
    grid: np.ndarray
    upper_bound: float
    converged: bool
    iterations: int = 0
    method: str = "hull_warm_start"
    shift: Optional[str] = None
    cone: Optional[ConeSpec] = None
    cost: Optional[CostPlugin] = field(default=None, repr=False)
    mu_weights: Optional[np.ndarray] = field(default=None, repr=False)
    nu_weights: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def needs_sup(self) -> bool:
        return isinstance(self.potential, ConeFunction) and self.potential.needs_sup

    @property
    def pair(self) -> AdmissiblePair:
        return AdmissiblePair(self.support, self.conjugate_values, self.potential)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "class": self.dual_class,
            "potential": self.potential.to_dict(),
            "conjugate_values": self.conjugate_values.tolist(),
            "upper_bound": self.upper_bound,
            "converged": self.converged,
            "method": self.method,
            "shift": self.shift,
            "needs_sup": self.needs_sup,
        }


def _check_metadata(cost: CostPlugin, name: str, cone: ConeSpec) -> bool:
    if name == "convex":
        return cost.cx_decreasing
    if name == "icx":
        return cost.icx_decreasing
    return cost.cone_decreasing(cone)


def declared_monotone(cost: CostPlugin, dual_class: Union[str, ConeSpec]) -> bool:
    """Whether the cost's metadata covers the restricted class."""
    name, cone = resolve_class(dual_class)
    return _check_metadata(cost, name, cone)


def _class_constraints(grid: np.ndarray, name: str, cone: ConeSpec, slope_bound: float):
    """Bounds and rows tying grid values w to an anchored class representation."""
    n, d = grid.shape
    diam = max(1.0, float(np.max(np.linalg.norm(grid[:, None, :] - grid[None, :, :], axis=2))))
    w_box = slope_bound * diam
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    if name in ("convex", "icx"):
        n_params = n + n * d
        lower = np.concatenate([np.full(n, -w_box), np.full(n * d, 0.0 if name == "icx" else -slope_bound)])
        upper = np.concatenate([np.full(n, w_box), np.full(n * d, slope_bound)])
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                # w_i - w_j + s_i.(z_j - z_i) <= 0
                rows += [r, r]
                cols += [i, j]
                vals += [1.0, -1.0]
                for k in range(d):
                    rows.append(r)
                    cols.append(n + i * d + k)
                    vals.append(float(grid[j, k] - grid[i, k]))
                rhs.append(0.0)
                r += 1
    else:
        F = cone.generator_matrix(grid)
        K = F.shape[0]
        n_params = 2 * n + n * K
        a_box = slope_bound * (1.0 + float(np.max(np.abs(F)) if K else 0.0)) * (K + 1) * diam
        lower = np.concatenate([np.full(n, -w_box), np.full(n, -a_box), np.zeros(n * K)])
        upper = np.concatenate([np.full(n, w_box), np.full(n, a_box), np.full(n * K, slope_bound)])
        for i in range(n):
            for j in range(n):
                sign = [1.0] if i != j else [1.0, -1.0]
                for sg in sign:
                    # sg * (a_i + c_i.F_j - w_j) <= 0
                    rows += [r, r]
                    cols += [n + i, j]
                    vals += [sg, -sg]
                    for k in range(K):
                        rows.append(r)
                        cols.append(2 * n + i * K + k)
                        vals.append(sg * float(F[k, j]))
                    rhs.append(0.0)
                    r += 1
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(r, n_params))
    lower[0] = upper[0] = 0.0
    return lower, upper, A, np.asarray(rhs)


def _class_start(grid: np.ndarray, name: str, potential: Potential, values: np.ndarray, n_params: int) -> Optional[np.ndarray]:
    n, d = grid.shape
    shift = values[0]
    if name in ("convex", "icx"):
        slopes = np.array([potential.subgradient(z) for z in grid])
        return np.concatenate([values - shift, slopes.ravel()])
    if len(potential.intercepts) != n:
        return None
    start = np.concatenate([values - shift, potential.intercepts - shift, potential.coefs.ravel()])
    return start if len(start) == n_params else None


def _dual_objective(values: np.ndarray, grid: np.ndarray, mu: DiscreteMeasure, nu_grid: np.ndarray, cost: CostPlugin, opts: SolverOptions) -> Tuple[float, np.ndarray, np.ndarray]:
    """mu(psi^C) - nu(psi) with a supergradient in the grid values."""
    phi = np.zeros(mu.size)
    grad = -nu_grid.copy()
    for i, (x, w) in enumerate(zip(mu.points, mu.weights)):
        phi[i], rho = conjugate_with_measure(values, grid, cost, x, opts)
        if rho is not None:
            grad += w * rho
    if not np.all(np.isfinite(phi)):
        return -math.inf, phi, grad
    return float(mu.weights @ phi - nu_grid @ values), phi, grad


def solve_dual(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cost: CostPlugin,
    dual_class: Union[str, ConeSpec] = "convex",
    opts: Optional[SolverOptions] = None,
    strict: bool = True,
) -> DualResult:
    """Maximise mu(psi^C) - nu(psi) over potentials of the requested class."""
    opts = opts or default_options()
    if mu.dim != nu.dim:
        raise UsageError("marginals live in different dimensions")
    name, cone = resolve_class(dual_class)
    if strict and not _check_metadata(cost, name, cone):
        raise UsageError(f"{cost.name} is not declared decreasing for the {name} class")
    grid = working_grid(mu, nu, opts.grid_refine)
    cone = cone.resolved(grid)
    nu_grid = nu.weights_on(grid)
    shift = cost.lower_bound.description if cost.lower_bound is not None else None
    bound_cost = cost.bind_grid(grid)
    conj_cost = cost.conjugate_cost(cone).bind_grid(grid)

    builder, pi, cols = transport_program(mu, nu, bound_cost, grid)
    primal = builder.solve(opts)
    if primal.status == "infeasible":
        return _unbounded_dual(mu, nu, cost, name, cone, grid, shift, opts)
    if primal.duals is not None:
        warm = -np.asarray(primal.duals)[cols]
    else:
        warm = np.zeros(len(grid))
    primal_value = float(primal.value)

    hull, potential = cone_hull(GridFunction(grid, warm), cone, opts)
    values = hull.values
    value, phi, _ = _dual_objective(values, grid, mu, nu_grid, conj_cost, opts)
    method, iterations, converged, upper = "hull_warm_start", 0, False, primal_value

    if value >= primal_value - opts.tol:
        converged = True
    else:
        lower, upper_box, A, b = _class_constraints(grid, name, cone, opts.slope_bound)
        start = _class_start(grid, name, potential, values, len(lower))
        n = len(grid)

        def evaluate(t: np.ndarray):
            v, _, g = _dual_objective(t[:n], grid, mu, nu_grid, conj_cost, opts)
            if not math.isfinite(v):
                raise NumericalFailure("dual objective is not finite at a class point")
            return v, np.concatenate([g, np.zeros(len(t) - n)])

        cut = cutting_plane_max(evaluate, lower, upper_box, opts, start=start, constraints=(A, b), upper_bound=primal_value)
        method, iterations, converged, upper = "cutting_plane", cut.iterations, cut.converged, cut.upper
        if cut.value > value:
            values = cut.argmax[:n]
            hull, potential = cone_hull(GridFunction(grid, values), cone, opts)
            values = hull.values

    psi_grid = potential(grid)
    value, phi, _ = _dual_objective(psi_grid, grid, mu, nu_grid, conj_cost, opts)
    if not converged:
        logger.warning(f"dual {cost.name}/{name}: bound gap {upper - value:.3e} after {iterations} cutting-plane rounds")
    logger.info(f"dual {cost.name}/{name}: grid={len(grid)} value={value:.12g} upper={upper:.12g} ({method})")
    return DualResult(
        value=value,
        potential=potential,
        conjugate_values=phi,
        dual_class=name,
        support=mu.points,
        grid=grid,
        upper_bound=upper,
        converged=converged,
        iterations=iterations,
        method=method,
        shift=shift,
        cone=cone,
        cost=cost,
        mu_weights=mu.weights,
        nu_weights=nu_grid,
    )


def _unbounded_dual(mu, nu, cost, name, cone, grid, shift, opts) -> DualResult:
    """Infeasible primal: the separating function scales the dual to +inf."""
    cert = check_cone_order(mu, nu, cone, opts)
    potential = cert.separating_function if cert.separating_function is not None else MaxAffinePotential.constant(0.0, mu.dim)
    logger.info(f"dual {cost.name}/{name}: unbounded along a separating function (margin {cert.margin:.3e})")
    return DualResult(
        value=math.inf,
        potential=potential,
        conjugate_values=np.full(mu.size, math.inf),
        dual_class=name,
        support=mu.points,
        grid=grid,
        upper_bound=math.inf,
        converged=True,
        method="order_certificate",
        shift=shift,
        cone=cone,
        cost=cost,
        mu_weights=mu.weights,
        nu_weights=nu.weights_on(grid),
    )


@dataclass
class HullStabilityReport:
    max_deviation: float
    violations: List[dict]
    n_probes: int

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"max_deviation": self.max_deviation, "violations": self.violations, "n_probes": self.n_probes}


def verify_hull_stability(psi: GridFunction, cost: CostPlugin, xs, order: str = "cx", tol: float = 1e-7, opts: Optional[SolverOptions] = None) -> HullStabilityReport:
    """psi^C and (hull psi)^C must agree at every probe point.

    psi^C is always taken from the grid program, so the one-dimensional
    mean-cost shortcut (which works on the hull) only enters the hull side.
    """
    if order == "cx" and not cost.cx_decreasing:
        logger.warning(f"{cost.name} is not declared cx-decreasing; stability may fail")
    if order == "icx" and not cost.icx_decreasing:
        logger.warning(f"{cost.name} is not declared icx-decreasing; stability may fail")
    opts = opts or default_options()
    hull = convex_hull(psi, opts) if order == "cx" else iconvex_hull(psi, opts)
    grid = psi.support
    bound = cost.bind_grid(grid)
    worst, violations = 0.0, []
    xs = as_points(xs, psi.dim)
    for x in xs:
        a, _ = _program_conjugate(np.asarray(psi.values, dtype=float), grid, bound, x, opts)
        b, _ = conjugate_with_measure(hull.values, grid, cost, x, opts)
        dev = 0.0 if a == b else abs(a - b)
        worst = max(worst, dev)
        if dev > tol:
            violations.append({"x": x.tolist(), "psi_conjugate": a, "hull_conjugate": b})
    return HullStabilityReport(worst, violations, len(xs))


@dataclass
class GapReport:
    primal: float
    dual: float
    gap: float
    monotone: bool
    tol: float

    @property
    def within_tol(self) -> bool:
        return self.gap <= self.tol

    @property
    def weak_duality(self) -> bool:
        return self.gap >= -1e-6

    def to_dict(self) -> dict:
        return {"primal": self.primal, "dual": self.dual, "gap": self.gap, "monotone": self.monotone}


def duality_gap(mu, nu, cost: CostPlugin, dual_class: Union[str, ConeSpec] = "convex", opts: Optional[SolverOptions] = None) -> GapReport:
    """primal - restricted dual; nonpositive-free for monotone costs, a converse witness otherwise."""
    opts = opts or default_options()
    name, cone = resolve_class(dual_class)
    monotone = _check_metadata(cost, name, cone)
    primal = solve_primal(mu, nu, cost, opts).value
    dual = solve_dual(mu, nu, cost, dual_class, opts, strict=False).value
    if math.isinf(primal) and primal == dual:
        gap = 0.0
    else:
        gap = primal - dual
    if gap < -1e-6:
        logger.warning(f"weak duality violated for {cost.name}: primal {primal:.12g} < dual {dual:.12g}")
    return GapReport(primal, dual, gap, monotone, opts.tol)


@dataclass
class AttainmentReport:
    integrable: bool
    in_class: bool
    admissible: bool
    max_violation: float
    schedule_monotone: bool
    schedule_terminal_error: float

    @property
    def ok(self) -> bool:
        return self.integrable and self.in_class and self.admissible and self.schedule_monotone and self.schedule_terminal_error <= 1e-8

    def to_dict(self) -> dict:
        return {
            "integrable": self.integrable,
            "in_class": self.in_class,
            "admissible": self.admissible,
            "max_violation": self.max_violation,
            "schedule_monotone": self.schedule_monotone,
            "schedule_terminal_error": self.schedule_terminal_error,
            "ok": self.ok,
        }


SCHEDULE_RADII = (0.25, 0.5, 1.0, 2.0, 4.0, math.inf)


def attainment_witness(result: DualResult, nu: DiscreteMeasure, n_probes: int = 100, seed: int = 0, opts: Optional[SolverOptions] = None) -> AttainmentReport:
    """Recheck a dual solution: finite nu(psi), class membership, admissibility
    probes and the shrinking-radius hull schedule on psi's grid values."""
    psi = result.potential
    integrable = math.isfinite(nu.integrate(_values_on(psi, nu.points)))
    f = GridFunction(result.grid, _values_on(psi, result.grid))
    if result.dual_class == "convex":
        in_class = bool(np.max(np.abs(convex_hull(f, opts).values - f.values)) <= 1e-8)
    elif result.dual_class == "icx":
        in_class = isinstance(psi, MaxAffinePotential) and psi.monotone and bool(np.all(psi.slopes >= 0))
    else:
        in_class = isinstance(psi, ConeFunction) and bool(np.all(psi.coefs >= 0))

    worst = -math.inf
    if result.cost is not None and np.all(np.isfinite(result.conjugate_values)):
        worst = result.pair.probe(result.cost.conjugate_cost(result.cone), result.grid, n_probes, seed, opts)
    admissible = worst <= 1e-8

    hull = convex_hull(f, opts)
    monotone, terminal = True, 0.0
    for j, y in enumerate(f.support):
        schedule = [conv_R(f, y, R, opts) for R in SCHEDULE_RADII]
        monotone = monotone and all(b <= a + 1e-9 for a, b in zip(schedule, schedule[1:]))
        terminal = max(terminal, abs(schedule[-1] - hull.values[j]))
    return AttainmentReport(integrable, in_class, admissible, float(max(worst, 0.0)), monotone, float(terminal))


def _declared_dual_ord(cost: CostPlugin) -> float:
    if isinstance(cost, ICXPositivePart):
        q = cost.q
    elif isinstance(cost, MeanCost) and cost.theta is not None and cost.theta.kind == "norm":
        q = cost.theta.ord
    else:
        raise UsageError(f"{cost.name} is not a Kantorovich-Rubinstein type cost")
    if q == 1.0:
        return math.inf
    if math.isinf(q):
        return 1.0
    return 2.0


def lipschitz_renormalize(result: DualResult, opts: Optional[SolverOptions] = None) -> DualResult:
    """Replace psi by psi^C on the grid; for norm-type costs the new potential is
    1-Lipschitz and the dual value does not drop."""
    cost = result.cost
    if cost is None or result.mu_weights is None:
        raise UsageError("dual result carries no cost")
    ord = _declared_dual_ord(cost)
    grid = result.grid
    psi_grid = _values_on(result.potential, grid)
    replaced = np.array([conjugate_with_measure(psi_grid, grid, cost, y, opts)[0] for y in grid])
    _, potential = cone_hull(GridFunction(grid, replaced), result.cone, opts)
    lip = potential.lipschitz(ord)
    if lip > 1.0 + 1e-7:
        raise DomainError(f"renormalised potential has Lipschitz constant {lip:.6g}")
    values = potential(grid)
    phi = np.array([conjugate_with_measure(values, grid, cost, x, opts)[0] for x in result.support])
    new_value = float(result.mu_weights @ phi - result.nu_weights @ values)
    if new_value < result.value - 1e-8 * (1.0 + abs(result.value)):
        raise NumericalFailure(f"renormalisation lowered the dual value from {result.value:.12g} to {new_value:.12g}")
    return replace(result, value=new_value, potential=potential, conjugate_values=phi, method="lipschitz_renormalized")


@dataclass
class LegendrePair:
    support: np.ndarray
    psi_star: np.ndarray
    psi: Potential
    value: float
    max_fenchel_violation: float

    def to_dict(self) -> dict:
        return {
            "support": self.support.tolist(),
            "psi_star": self.psi_star.tolist(),
            "psi": self.psi.to_dict(),
            "value": self.value,
            "max_fenchel_violation": self.max_fenchel_violation,
        }


def legendre_pair(result: DualResult) -> LegendrePair:
    """For c(x, y) = -x.y: psi* = -psi^C is the convex conjugate of psi over the grid,
    and the dual value reads -(mu(psi*) + nu(psi))."""
    cost = result.cost
    if not (isinstance(cost, ClassicalLinear) and cost.formula == "neg_product"):
        raise UsageError("Legendre pairs exist for the -x.y cost only")
    psi_star = -np.asarray(result.conjugate_values)
    psi_grid = _values_on(result.potential, result.grid)
    # Fenchel-Young: psi*(x) + psi(y) >= x.y on the grid
    slack = psi_star[:, None] + psi_grid[None, :] - result.support @ result.grid.T
    violation = float(max(0.0, -slack.min()))
    value = -float(result.mu_weights @ psi_star + result.nu_weights @ psi_grid)
    return LegendrePair(result.support, psi_star, result.potential, value, violation)
