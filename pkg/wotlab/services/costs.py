"""Cost plugins C(x, rho).

Every plugin can write itself into a ProgramBuilder as a block over the
(unnormalised) row masses of rho on a support; evaluation, linearisation,
the primal solver and the conjugates all go through that block.
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from ..config import SolverOptions, default_options
from ..errors import DomainError, UsageError
from ..logger import logger
from .hulls import GridFunction, Theta, convex_hull
from .measures import DiscreteMeasure, as_points, mean, union_points
from .optim_core import EQ, GE, LinExpr, ProgramBuilder
from .orders import ConeSpec, add_dilation_rows, check_convex_order, sample_dilation


@dataclass(frozen=True)
class Bound:
    """C(x, rho) >= -(a(x) + rho(b)) for lower bounds, C <= a(x) + rho(b) for upper ones."""

    a: Callable[[np.ndarray], float]
    b: Callable[[np.ndarray], np.ndarray]
    description: str


class CostPlugin(ABC):
    name = "cost"
    convex_in_rho = True
    cx_decreasing = False
    icx_decreasing = False
    continuity_declared = True
    linear = False
    smooth = False
    lower_bound: Optional[Bound] = None
    upper_bound: Optional[Bound] = None

    @abstractmethod
    def add_block(self, builder: ProgramBuilder, x: np.ndarray, mass: float, support: np.ndarray, rows: Sequence[LinExpr]) -> None:
        """Add mass * C(x, sum_j rows_j delta_{support_j} / mass) to the builder's objective."""

    @abstractmethod
    def params(self) -> dict:
        ...

    def to_config(self) -> dict:
        return {"cost": self.name, "params": self.params()}

    def cone_decreasing(self, cone: ConeSpec) -> bool:
        order = cone.order_name
        if order == "cx":
            return self.cx_decreasing
        if order == "icx":
            return self.icx_decreasing
        return False

    def bind_grid(self, grid: np.ndarray) -> "CostPlugin":
        return self

    def conjugate_cost(self, cone: Optional[ConeSpec]) -> "CostPlugin":
        """Cost whose conjugate agrees with this one on potentials from the cone."""
        return self

    def evaluate(self, x, rho: DiscreteMeasure, opts: Optional[SolverOptions] = None) -> float:
        x = np.ravel(np.asarray(x, dtype=float))
        builder = ProgramBuilder()
        self.add_block(builder, x, 1.0, rho.points, [LinExpr(const=w) for w in rho.weights])
        sol = builder.solve(opts or default_options())
        if sol.status == "infeasible":
            return math.inf
        if sol.status == "unbounded":
            return -math.inf
        return float(sol.value)

    def linearize(self, x, rho: DiscreteMeasure, grid=None, opts: Optional[SolverOptions] = None) -> GridFunction:
        """g on the grid with C(x, sigma) >= C(x, rho) + sigma(g) - rho(g)."""
        x = np.ravel(np.asarray(x, dtype=float))
        grid = rho.points if grid is None else union_points(as_points(grid, rho.dim), rho.points)
        weights = rho.weights_on(grid)
        builder = ProgramBuilder()
        r = builder.add_variables(len(grid), lower=-math.inf)
        fixed = [builder.add_row(LinExpr.var(i), EQ, float(w)) for i, w in zip(r, weights)]
        self.add_block(builder, x, 1.0, grid, [LinExpr.var(i) for i in r])
        sol = builder.solve(opts or default_options())
        if sol.status != "optimal" or sol.duals is None:
            raise DomainError(f"{self.name} is not finite at the linearization point")
        return GridFunction(grid, sol.duals[fixed])

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}({self.params()})"


def _mean_offset(x: np.ndarray, mass, support: np.ndarray, rows: Sequence[LinExpr]) -> List[LinExpr]:
    """mass * x - sum_j y_j rows_j, one expression per coordinate."""
    out = []
    for k in range(len(x)):
        expr = LinExpr(const=0.0)
        for y, row in zip(support[:, k], rows):
            expr = expr - row * float(y)
        out.append(expr + mass * float(x[k]))
    return out


def _add_theta_block(builder: ProgramBuilder, theta: Theta, x: np.ndarray, mass: float, support: np.ndarray, rows: Sequence[LinExpr], weight: float = 1.0) -> None:
    z = _mean_offset(x, mass, support, rows)
    if theta.smooth:
        builder.add_quadratic(z, weight / mass)
        return
    A, c = theta.pieces(len(x))
    (t,) = builder.add_variables(1, lower=-math.inf, aux=True)
    for a_k, c_k in zip(A, c):
        expr = LinExpr.var(t)
        for coef, zk in zip(a_k, z):
            expr = expr - zk * float(coef)
        builder.add_row(expr, GE, float(c_k) * mass)
    builder.add_objective(LinExpr.var(t) * weight)


class MeanCost(CostPlugin):
    """C(x, rho) = theta(x - mean(rho)) plus an optional constraint on mean(rho)."""

    theta: Optional[Theta] = None
    constraint: Optional[str] = None
    tol = 1e-9

    def penalty(self, x: np.ndarray, m: np.ndarray) -> float:
        x = np.ravel(x)
        m = np.ravel(m)
        if self.constraint == EQ and np.max(np.abs(x - m)) > self.tol:
            return math.inf
        if self.constraint == GE and np.any(m < x - self.tol):
            return math.inf
        return 0.0 if self.theta is None else self.theta(x - m)

    def evaluate(self, x, rho: DiscreteMeasure, opts: Optional[SolverOptions] = None) -> float:
        return self.penalty(np.asarray(x, dtype=float), mean(rho))

    def add_block(self, builder, x, mass, support, rows) -> None:
        if self.constraint is not None:
            for k in range(len(x)):
                expr = sum((row * float(y) for y, row in zip(support[:, k], rows)), LinExpr())
                builder.add_row(expr, self.constraint, mass * float(x[k]))
        if self.theta is not None:
            _add_theta_block(builder, self.theta, x, mass, support, rows)

    def linearize(self, x, rho: DiscreteMeasure, grid=None, opts: Optional[SolverOptions] = None) -> GridFunction:
        x = np.ravel(np.asarray(x, dtype=float))
        grid = rho.points if grid is None else union_points(as_points(grid, rho.dim), rho.points)
        m = mean(rho)
        if math.isinf(self.penalty(x, m)):
            raise DomainError(f"{self.name} is infinite at the linearization point")
        if self.theta is None:
            return GridFunction(grid, np.zeros(len(grid)))
        s = self.theta.subgradient(x - m)
        return GridFunction(grid, -(grid @ s))


class Barycentric(MeanCost):
    name = "barycentric"
    cx_decreasing = True

    def __init__(self, theta: Theta) -> None:
        self.theta = theta
        self.smooth = theta.smooth
        if theta.kind in ("norm", "sqnorm"):
            scale = 2.0 if theta.kind == "sqnorm" else 1.0
            self.upper_bound = Bound(
                a=lambda x: scale * theta(np.asarray(x)),
                b=lambda pts: np.array([scale * theta(p) for p in as_points(pts)]),
                description="theta(x - m) <= c (theta(x) + rho(theta))",
            )

    def params(self) -> dict:
        return {"theta": self.theta.to_dict()}


class MartingaleIndicator(MeanCost):
    name = "martingale"
    cx_decreasing = True
    constraint = EQ

    def __init__(self, tol: float = 1e-9) -> None:
        self.tol = tol

    def params(self) -> dict:
        return {"tol": self.tol}


class ConvexOrderIndicator(MeanCost):
    name = "cxo_indicator"
    cx_decreasing = True
    constraint = EQ

    def __init__(self, tol: float = 1e-9) -> None:
        self.tol = tol

    def evaluate(self, x, rho: DiscreteMeasure, opts: Optional[SolverOptions] = None) -> float:
        x = np.ravel(np.asarray(x, dtype=float))
        if rho.dim == 1:
            return self.penalty(x, mean(rho))
        cert = check_convex_order(DiscreteMeasure.dirac(x), rho, opts)
        return 0.0 if cert.verdict else math.inf

    def params(self) -> dict:
        return {"tol": self.tol}


class SubmartingaleIndicator(MeanCost):
    name = "submartingale"
    cx_decreasing = True
    icx_decreasing = True
    constraint = GE

    def __init__(self, tol: float = 1e-9) -> None:
        self.tol = tol

    def params(self) -> dict:
        return {"tol": self.tol}


class ICXPositivePart(MeanCost):
    name = "icx_pos"
    cx_decreasing = True
    icx_decreasing = True

    def __init__(self, q: float = 1.0) -> None:
        self.q = float(q)
        self.theta = Theta.pospart(self.q)
        self.upper_bound = Bound(
            a=lambda x: float(np.linalg.norm(np.clip(np.ravel(x), 0.0, None), ord=self.q)),
            b=lambda pts: np.linalg.norm(as_points(pts), ord=self.q, axis=1),
            description="|(x - m)_+|_q <= |x_+|_q + rho(|y|_q)",
        )

    def params(self) -> dict:
        return {"q": "inf" if math.isinf(self.q) else self.q}


CLASSICAL_FORMULAS: Dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "neg_product": lambda x, ys: -(ys @ x),
    "abs_y": lambda x, ys: np.linalg.norm(ys, axis=1),
    "sqdist": lambda x, ys: np.sum((ys - x) ** 2, axis=1),
    "dist": lambda x, ys: np.linalg.norm(ys - x, axis=1),
}


class ClassicalLinear(CostPlugin):
    """C(x, rho) = rho(c(x, .)) from a named formula or a finite table."""

    name = "classical"
    linear = True

    def __init__(self, formula: Optional[str] = None, table: Optional[dict] = None) -> None:
        if (formula is None) == (table is None):
            raise UsageError("classical cost needs exactly one of formula or table")
        self.formula = formula
        self.table = table
        if formula is not None:
            if formula not in CLASSICAL_FORMULAS:
                raise UsageError(f"unknown classical formula {formula!r}")
            self._c = CLASSICAL_FORMULAS[formula]
            self.cx_decreasing = formula == "neg_product"
        else:
            xs = as_points(table["x"])
            ys = as_points(table["y"])
            values = np.asarray(table["values"], dtype=float)
            if values.shape != (len(xs), len(ys)):
                raise UsageError("cost table shape does not match its supports")
            self._xs, self._ys, self._values = xs, ys, values
            self._c = self._lookup
            self.cx_decreasing = self._concave_rows()
        self.icx_decreasing = False

    def _lookup(self, x: np.ndarray, ys: np.ndarray) -> np.ndarray:
        i = int(np.argmin(np.linalg.norm(self._xs - x, axis=1)))
        if np.linalg.norm(self._xs[i] - x) > 1e-12:
            raise UsageError(f"cost table has no row for {x.tolist()}")
        out = []
        for y in ys:
            j = int(np.argmin(np.linalg.norm(self._ys - y, axis=1)))
            if np.linalg.norm(self._ys[j] - y) > 1e-12:
                raise UsageError(f"cost table has no column for {y.tolist()}")
            out.append(self._values[i, j])
        return np.asarray(out)

    def _concave_rows(self) -> bool:
        for row in self._values:
            neg = GridFunction(self._ys, -row)
            if np.max(np.abs(convex_hull(neg).values + row)) > 1e-9:
                return False
        return True

    def c(self, x, ys) -> np.ndarray:
        return self._c(np.ravel(np.asarray(x, dtype=float)), as_points(ys))

    def evaluate(self, x, rho: DiscreteMeasure, opts: Optional[SolverOptions] = None) -> float:
        return float(rho.weights @ self.c(x, rho.points))

    def add_block(self, builder, x, mass, support, rows) -> None:
        builder.add_objective(sum((row * float(v) for row, v in zip(rows, self.c(x, support))), LinExpr()))

    def linearize(self, x, rho: DiscreteMeasure, grid=None, opts: Optional[SolverOptions] = None) -> GridFunction:
        grid = rho.points if grid is None else union_points(as_points(grid, rho.dim), rho.points)
        return GridFunction(grid, self.c(x, grid))

    def params(self) -> dict:
        if self.formula is not None:
            return {"formula": self.formula}
        return {"table": {"x": self._xs.tolist(), "y": self._ys.tolist(), "values": self._values.tolist()}}


def gauss_hermite_measure(n: int = 16, dim: int = 1) -> DiscreteMeasure:
    """Gauss-Hermite discretisation of the standard normal, tensorised over axes."""
    if n not in (8, 16, 32):
        raise UsageError("gauss nodes must be 8, 16 or 32")
    nodes, weights = hermegauss(n)
    weights = weights / weights.sum()
    grids = np.meshgrid(*([nodes] * dim), indexing="ij")
    wgrids = np.meshgrid(*([weights] * dim), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return DiscreteMeasure.create(points, w, normalize=True)


def _add_mcov_block(builder: ProgramBuilder, mass: float, support: np.ndarray, rows: Sequence[LinExpr], gamma: DiscreteMeasure, weight: float) -> None:
    """Adds -weight * mass * MCov(rows / mass, gamma) through an auxiliary coupling."""
    q = builder.add_variables(len(support) * gamma.size, aux=True).reshape(len(support), gamma.size)
    for j, row in enumerate(rows):
        builder.add_row(LinExpr.total(q[j]) - row, EQ, 0.0)
    for k in range(gamma.size):
        builder.add_row(LinExpr.total(q[:, k]), EQ, mass * float(gamma.weights[k]))
    products = support @ gamma.points.T
    builder.add_objective(LinExpr.total(q.ravel(), -weight * products.ravel()))


def mcov(rho: DiscreteMeasure, gamma: DiscreteMeasure, opts: Optional[SolverOptions] = None) -> float:
    """Maximal covariance: max over couplings of rho and gamma of E[Y . Z]."""
    if rho.dim != gamma.dim:
        raise UsageError("MCov needs measures of the same dimension")
    builder = ProgramBuilder()
    _add_mcov_block(builder, 1.0, rho.points, [LinExpr(const=w) for w in rho.weights], gamma, 1.0)
    sol = builder.solve(opts or default_options())
    return float(-sol.value)


class _GaussianMixin:
    gauss_nodes = 16
    _gammas: Dict[int, DiscreteMeasure]

    def gamma_for(self, dim: int) -> DiscreteMeasure:
        if dim not in self._gammas:
            self._gammas[dim] = gauss_hermite_measure(self.gauss_nodes, dim)
        return self._gammas[dim]

    def _young_bound(self, weight: float) -> Bound:
        return Bound(
            a=lambda x: 0.5 * weight * float(self.gamma_for(len(np.ravel(x))).integrate(lambda p: np.sum(p ** 2, axis=1))),
            b=lambda pts: 0.5 * weight * np.sum(as_points(pts) ** 2, axis=1),
            description="Young's inequality: y.z <= |y|^2/2 + |z|^2/2",
        )


class NegativeMCov(_GaussianMixin, CostPlugin):
    """-MCov(rho, gamma) on martingale rows, +inf elsewhere."""

    name = "neg_mcov"
    cx_decreasing = True

    def __init__(self, gauss_nodes: int = 16, tol: float = 1e-9, gamma: Optional[DiscreteMeasure] = None) -> None:
        self.gauss_nodes = gauss_nodes
        self.tol = tol
        self._gammas = {} if gamma is None else {gamma.dim: gamma}
        self._custom_gamma = gamma
        self.lower_bound = self._young_bound(1.0)

    def evaluate(self, x, rho: DiscreteMeasure, opts: Optional[SolverOptions] = None) -> float:
        x = np.ravel(np.asarray(x, dtype=float))
        if np.max(np.abs(mean(rho) - x)) > self.tol:
            return math.inf
        return -mcov(rho, self.gamma_for(rho.dim), opts)

    def add_block(self, builder, x, mass, support, rows) -> None:
        MartingaleIndicator(self.tol).add_block(builder, x, mass, support, rows)
        _add_mcov_block(builder, mass, support, rows, self.gamma_for(support.shape[1]), 1.0)

    def params(self) -> dict:
        out = {"gauss_nodes": self.gauss_nodes, "tol": self.tol}
        if self._custom_gamma is not None:
            out["gamma"] = self._custom_gamma.to_dict()
        return out


class RelaxedMartingaleBB(_GaussianMixin, CostPlugin):
    """beta |x - mean(rho)|^2 - alpha MCov(rho, gamma): finite everywhere."""

    name = "relaxed_mbb"
    cx_decreasing = True
    smooth = True

    def __init__(self, alpha: float = 1.0, beta: float = 1.0, gauss_nodes: int = 16) -> None:
        if alpha < 0 or beta < 0:
            raise UsageError("relaxed martingale weights must be nonnegative")
        self.alpha, self.beta = float(alpha), float(beta)
        self.gauss_nodes = gauss_nodes
        self._gammas = {}
        self.smooth = self.beta > 0
        self.lower_bound = self._young_bound(self.alpha)

    def evaluate(self, x, rho: DiscreteMeasure, opts: Optional[SolverOptions] = None) -> float:
        x = np.ravel(np.asarray(x, dtype=float))
        drift = x - mean(rho)
        return self.beta * float(drift @ drift) - self.alpha * mcov(rho, self.gamma_for(rho.dim), opts)

    def add_block(self, builder, x, mass, support, rows) -> None:
        if self.beta > 0:
            builder.add_quadratic(_mean_offset(x, mass, support, rows), self.beta / mass)
        if self.alpha > 0:
            _add_mcov_block(builder, mass, support, rows, self.gamma_for(support.shape[1]), self.alpha)

    def params(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "gauss_nodes": self.gauss_nodes}


class HullCost(CostPlugin):
    """C_hat(x, rho) = inf of C(x, xi) over grid measures xi dominated by rho in the cone."""

    name = "hull"

    def __init__(self, inner: CostPlugin, cone: ConeSpec, grid: Optional[np.ndarray] = None) -> None:
        self.inner = inner
        self.cone = cone
        self.grid = None if grid is None else as_points(grid)
        self.smooth = inner.smooth
        self.convex_in_rho = inner.convex_in_rho
        order = cone.order_name
        self.icx_decreasing = order == "icx"
        self.cx_decreasing = order in ("cx", "icx")

    def cone_decreasing(self, cone: ConeSpec) -> bool:
        if cone == self.cone:
            return True
        return super().cone_decreasing(cone)

    def bind_grid(self, grid: np.ndarray) -> "HullCost":
        return HullCost(self.inner, self.cone, grid)

    def conjugate_cost(self, cone: Optional[ConeSpec]) -> CostPlugin:
        if cone is None:
            return self
        same = cone == self.cone
        if self.cone.order_name == "cx":
            same = same or cone.order_name in ("cx", "icx")
        elif self.cone.order_name == "icx":
            same = same or cone.order_name == "icx"
        return self.inner if same else self

    def inner_grid(self, x: np.ndarray, support: np.ndarray) -> np.ndarray:
        return union_points(self.grid, support, x.reshape(1, -1))

    def add_block(self, builder, x, mass, support, rows) -> None:
        xi_grid = self.inner_grid(x, support)
        Q = builder.add_variables(len(xi_grid) * len(support), aux=True).reshape(len(xi_grid), len(support))
        for j, row in enumerate(rows):
            builder.add_row(LinExpr.total(Q[:, j]) - row, EQ, 0.0)
        masses = [LinExpr.total(Q[z]) for z in range(len(xi_grid))]
        cone = self.cone.resolved(xi_grid, support)
        add_dilation_rows(builder, xi_grid, masses, support, Q, cone)
        self.inner.add_block(builder, x, mass, xi_grid, masses)

    def params(self) -> dict:
        out = {"inner": self.inner.to_config(), "cone": self.cone.to_dict()}
        if self.grid is not None:
            out["grid"] = self.grid.tolist()
        return out


class Monopolist(HullCost):
    """theta(x - mean(xi)) minimised over xi dominated by rho in increasing convex order."""

    name = "monopolist"

    def __init__(self, theta: Theta, grid: Optional[np.ndarray] = None) -> None:
        self.theta = theta
        super().__init__(Barycentric(theta), ConeSpec.icx(), grid)

    def bind_grid(self, grid: np.ndarray) -> "Monopolist":
        return Monopolist(self.theta, grid)

    def params(self) -> dict:
        out = {"theta": self.theta.to_dict()}
        if self.grid is not None:
            out["grid"] = self.grid.tolist()
        return out


def _theta_param(params: dict) -> Theta:
    theta = params.get("theta", {"family": "norm"})
    if isinstance(theta, str):
        theta = {"family": theta}
    return Theta.from_dict(theta)


def build_cost(config: Any) -> CostPlugin:
    """Plugin factory for {"cost": name, "params": {...}} configs."""
    if hasattr(config, "model_dump"):
        config = config.model_dump()
    name = config.get("cost")
    params = dict(config.get("params") or {})
    if name == "barycentric":
        return Barycentric(_theta_param(params))
    if name == "martingale":
        return MartingaleIndicator(params.get("tol", 1e-9))
    if name == "cxo_indicator":
        return ConvexOrderIndicator(params.get("tol", 1e-9))
    if name == "submartingale":
        return SubmartingaleIndicator(params.get("tol", 1e-9))
    if name == "icx_pos":
        q = params.get("q", 1)
        return ICXPositivePart(math.inf if q in ("inf", math.inf) else float(q))
    if name == "monopolist":
        grid = params.get("grid")
        return Monopolist(_theta_param(params), None if grid is None else as_points(grid))
    if name == "neg_mcov":
        gamma = params.get("gamma")
        gamma = None if gamma is None else DiscreteMeasure.create(gamma["points"], gamma["weights"], normalize=True)
        return NegativeMCov(int(params.get("gauss_nodes", 16)), params.get("tol", 1e-9), gamma)
    if name == "relaxed_mbb":
        return RelaxedMartingaleBB(params.get("alpha", 1.0), params.get("beta", 1.0), int(params.get("gauss_nodes", 16)))
    if name == "classical":
        return ClassicalLinear(params.get("formula"), params.get("table"))
    if name == "hull":
        return HullCost(build_cost(params["inner"]), ConeSpec.from_dict(params["cone"]))
    raise UsageError(f"unknown cost {name!r}")


@dataclass
class MonotonicityReport:
    cost: str
    order: str
    n_samples: int
    violations: List[dict]
    max_violation: float

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "cost": self.cost,
            "order": self.order,
            "n_samples": self.n_samples,
            "violations": self.violations,
            "max_violation": self.max_violation,
        }


def _random_measure(rng: np.random.Generator, dim: int, max_atoms: int = 4) -> DiscreteMeasure:
    n = int(rng.integers(1, max_atoms + 1))
    points = np.round(rng.uniform(-3.0, 3.0, size=(n, dim)), 3)
    return DiscreteMeasure.create(points, rng.dirichlet(np.ones(n)), normalize=True)


def check_monotonicity(
    plugin: CostPlugin,
    order: Union[str, ConeSpec],
    n_samples: int = 50,
    seed: int = 7,
    dim: int = 1,
    tol: float = 1e-8,
    opts: Optional[SolverOptions] = None,
) -> MonotonicityReport:
    """Sample rho and a dilation rho~ of it; C(x, rho) >= C(x, rho~) - tol must hold."""
    rng = np.random.default_rng(seed)
    order_name = order if isinstance(order, str) else order.order_name
    violations = []
    worst = 0.0
    for k in range(n_samples):
        rho = _random_measure(rng, dim)
        rho_t = sample_dilation(rho, order, rng, opts)
        x = mean(rho) if rng.random() < 0.5 else np.round(rng.uniform(-3.0, 3.0, size=dim), 3)
        bound = plugin.bind_grid(union_points(rho.points, rho_t.points, x.reshape(1, -1)))
        before = bound.evaluate(x, rho, opts)
        after = bound.evaluate(x, rho_t, opts)
        excess = after - before if not (math.isinf(after) and math.isinf(before)) else 0.0
        if excess > tol:
            worst = max(worst, excess)
            violations.append({"sample": k, "x": x.tolist(), "before": before, "after": after})
    if violations:
        logger.info(f"{plugin.name}: {len(violations)} monotonicity violations under {order_name}")
    return MonotonicityReport(plugin.name, order_name, n_samples, violations, float(worst))


@dataclass
class PropertyReport:
    cost: str
    check: str
    n_samples: int
    skipped: int
    violations: List[dict]
    max_violation: float

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "cost": self.cost,
            "check": self.check,
            "n_samples": self.n_samples,
            "skipped": self.skipped,
            "violations": self.violations,
            "max_violation": self.max_violation,
        }


def check_convexity(
    plugin: CostPlugin,
    n_samples: int = 50,
    seed: int = 7,
    dim: int = 1,
    tol: float = 1e-8,
    opts: Optional[SolverOptions] = None,
) -> PropertyReport:
    """C(x, a rho1 + (1 - a) rho2) <= a C(x, rho1) + (1 - a) C(x, rho2) + tol on finite samples."""
    rng = np.random.default_rng(seed)
    violations, worst, skipped = [], 0.0, 0
    for k in range(n_samples):
        r1, r2 = _random_measure(rng, dim), _random_measure(rng, dim)
        a = float(rng.uniform(0.05, 0.95))
        mix = DiscreteMeasure.create(
            np.vstack([r1.points, r2.points]),
            np.concatenate([a * r1.weights, (1.0 - a) * r2.weights]),
            normalize=True,
        )
        x = np.round(rng.uniform(-3.0, 3.0, size=dim), 3)
        bound = plugin.bind_grid(union_points(mix.points, x.reshape(1, -1)))
        v1, v2 = bound.evaluate(x, r1, opts), bound.evaluate(x, r2, opts)
        if not (math.isfinite(v1) and math.isfinite(v2)):
            skipped += 1
            continue
        excess = bound.evaluate(x, mix, opts) - (a * v1 + (1.0 - a) * v2)
        if excess > tol:
            worst = max(worst, excess)
            violations.append({"sample": k, "x": x.tolist(), "alpha": a, "excess": excess})
    if violations:
        logger.info(f"{plugin.name}: {len(violations)} convexity violations")
    return PropertyReport(plugin.name, "convexity", n_samples, skipped, violations, float(worst))


def check_lower_bound(
    plugin: CostPlugin,
    n_samples: int = 50,
    seed: int = 7,
    dim: int = 1,
    tol: float = 1e-8,
    opts: Optional[SolverOptions] = None,
) -> PropertyReport:
    """C(x, rho) >= -(a(x) + rho(b)) for the declared lower bound; x sits at mean(rho)
    half of the time so martingale-type costs are finite."""
    bound_spec = plugin.lower_bound
    if bound_spec is None:
        return PropertyReport(plugin.name, "lower_bound", 0, 0, [], 0.0)
    rng = np.random.default_rng(seed)
    violations, worst, skipped = [], 0.0, 0
    for k in range(n_samples):
        rho = _random_measure(rng, dim)
        x = mean(rho) if rng.random() < 0.5 else np.round(rng.uniform(-3.0, 3.0, size=dim), 3)
        value = plugin.bind_grid(union_points(rho.points, x.reshape(1, -1))).evaluate(x, rho, opts)
        if math.isinf(value):
            skipped += 1
            continue
        floor = -(bound_spec.a(x) + rho.integrate(bound_spec.b))
        if floor - value > tol:
            worst = max(worst, floor - value)
            violations.append({"sample": k, "x": x.tolist(), "value": value, "floor": floor})
    return PropertyReport(plugin.name, "lower_bound", n_samples, skipped, violations, float(worst))
