"""Stochastic orders between finite measures.

An order check is one LP over a dilation kernel Q from r1 to r2: rows sum to
r1, columns sum to r2, and each row dominates its source atom on the cone
generators (or in mean, for the dedicated convex / increasing convex forms).
When the LP is infeasible its Farkas certificate is turned into a separating
function f = max_i (alpha_i + sum_k gamma_ik f_k) with r1(f) > r2(f).
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import SolverOptions, default_options
from ..errors import NumericalFailure, OrderViolation, UsageError
from ..logger import logger
from .hulls import GridFunction, MaxAffinePotential, convex_hull, iconvex_hull, max_affine_from_values
from .measures import DiscreteMeasure, Kernel, as_points, compose, point_key, union_points
from .optim_core import EQ, GE, LE, LinExpr, ProgramBuilder

CONE_FAMILIES = ("convex", "icx", "convex1d", "icx1d", "custom")


@dataclass(frozen=True)
class Generator:
    kind: str
    slope: Tuple[float, ...] = ()
    intercept: float = 0.0
    knot: float = 0.0
    axis: int = 0
    table: Tuple[Tuple[Tuple[float, ...], float], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("affine", "hinge", "table"):
            raise UsageError(f"unknown generator kind {self.kind!r}")

    @classmethod
    def affine(cls, slope, intercept: float = 0.0) -> "Generator":
        return cls("affine", slope=tuple(float(s) for s in np.ravel(slope)), intercept=float(intercept))

    @classmethod
    def hinge(cls, knot: float, axis: int = 0) -> "Generator":
        return cls("hinge", knot=float(knot), axis=int(axis))

    @classmethod
    def from_table(cls, support, values) -> "Generator":
        pts = as_points(support)
        vals = np.asarray(values, dtype=float).ravel()
        if not np.all(np.isfinite(vals)):
            raise UsageError("table generators must be finite")
        return cls("table", table=tuple((point_key(p), float(v)) for p, v in zip(pts, vals)))

    def __call__(self, points) -> np.ndarray:
        pts = as_points(points)
        if self.kind == "affine":
            return pts @ np.asarray(self.slope) + self.intercept
        if self.kind == "hinge":
            return np.clip(pts[:, self.axis] - self.knot, 0.0, None)
        lookup = dict(self.table)
        out = []
        for p in pts:
            key = point_key(p)
            if key not in lookup:
                raise UsageError(f"table generator is not defined at {list(key)}")
            out.append(lookup[key])
        return np.asarray(out)

    def to_dict(self) -> dict:
        if self.kind == "affine":
            return {"kind": "affine", "slope": list(self.slope), "intercept": self.intercept}
        if self.kind == "hinge":
            return {"kind": "hinge", "knot": self.knot, "axis": self.axis}
        return {"kind": "table", "support": [list(k) for k, _ in self.table], "values": [v for _, v in self.table]}

    @classmethod
    def from_dict(cls, data: dict) -> "Generator":
        kind = data.get("kind")
        if kind == "affine":
            return cls.affine(data["slope"], data.get("intercept", 0.0))
        if kind == "hinge":
            return cls.hinge(data["knot"], data.get("axis", 0))
        if kind == "table":
            return cls.from_table(data["support"], data["values"])
        raise UsageError(f"unknown generator kind {kind!r}")


@dataclass(frozen=True)
class ConeSpec:
    """Cone of test functions; constants are always included.

    `convex` and `icx` use mean rows in any dimension. `convex1d` and `icx1d`
    expand to {y, -y} or {y} plus hinges at the given knots, or at the union of
    supports when no knots are given.
    """

    family: str
    generators: Tuple[Generator, ...] = ()
    knots: Optional[Tuple[float, ...]] = None
    includes_constants: bool = True

    def __post_init__(self) -> None:
        if self.family not in CONE_FAMILIES:
            raise UsageError(f"unknown cone family {self.family!r}")

    @classmethod
    def convex(cls) -> "ConeSpec":
        return cls("convex")

    @classmethod
    def icx(cls) -> "ConeSpec":
        return cls("icx")

    @classmethod
    def convex1d(cls, knots: Optional[Sequence[float]] = None) -> "ConeSpec":
        return cls("convex1d", knots=None if knots is None else tuple(float(k) for k in knots))

    @classmethod
    def icx1d(cls, knots: Optional[Sequence[float]] = None) -> "ConeSpec":
        return cls("icx1d", knots=None if knots is None else tuple(float(k) for k in knots))

    @classmethod
    def custom(cls, generators: Sequence[Generator]) -> "ConeSpec":
        return cls("custom", generators=tuple(generators))

    @property
    def mean_mode(self) -> Optional[str]:
        return {"convex": EQ, "icx": GE}.get(self.family)

    @property
    def monotone(self) -> bool:
        return self.family in ("icx", "icx1d")

    @property
    def order_name(self) -> str:
        return {"convex": "cx", "convex1d": "cx", "icx": "icx", "icx1d": "icx"}.get(self.family, "cone")

    def resolved(self, *supports: np.ndarray) -> "ConeSpec":
        """Expand 1D families into explicit generators over the given supports."""
        if self.family not in ("convex1d", "icx1d"):
            return self
        knots = self.knots
        if knots is None:
            pts = union_points(*supports)
            if pts.shape[1] != 1:
                raise UsageError(f"{self.family} cones are one-dimensional")
            knots = tuple(sorted(set(float(v) for v in pts[:, 0])))
        gens = [Generator.affine([1.0])]
        if self.family == "convex1d":
            gens.append(Generator.affine([-1.0]))
        gens.extend(Generator.hinge(k) for k in knots)
        return ConeSpec("custom", generators=tuple(gens))

    def generator_matrix(self, points) -> np.ndarray:
        pts = as_points(points)
        if not self.generators:
            return np.zeros((0, len(pts)))
        return np.vstack([g(pts) for g in self.generators])

    def to_dict(self) -> dict:
        out = {"family": self.family, "generators": [g.to_dict() for g in self.generators]}
        if self.knots is not None:
            out["knots"] = list(self.knots)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ConeSpec":
        family = data.get("family", "custom")
        gens = tuple(Generator.from_dict(g) for g in data.get("generators", []))
        knots = data.get("knots")
        return cls(family, generators=gens, knots=None if knots is None else tuple(float(k) for k in knots))


@dataclass(frozen=True)
class ConeFunction:
    """max_i (intercept_i + sum_k coefs_ik f_k) over the generators of a cone."""

    cone: ConeSpec
    intercepts: np.ndarray
    coefs: np.ndarray

    def __post_init__(self) -> None:
        coefs = np.atleast_2d(np.asarray(self.coefs, dtype=float))
        if np.any(coefs < -1e-9):
            raise UsageError("conic combinations need nonnegative coefficients")
        object.__setattr__(self, "coefs", np.clip(coefs, 0.0, None))
        object.__setattr__(self, "intercepts", np.asarray(self.intercepts, dtype=float).ravel())

    def __call__(self, points) -> np.ndarray:
        F = self.cone.generator_matrix(points)
        if F.shape[0] == 0:
            return np.full(as_points(points).shape[0], float(self.intercepts.max()))
        return np.max(self.coefs @ F + self.intercepts[:, None], axis=0)

    def at(self, point) -> float:
        return float(self(as_points(point))[0])

    @property
    def needs_sup(self) -> bool:
        """True when more than one distinct conic combination is active in the max."""
        rows = {tuple(np.round(np.concatenate([[a], c]), 12)) for a, c in zip(self.intercepts, self.coefs)}
        return len(rows) > 1

    def on_grid(self, grid) -> GridFunction:
        grid = as_points(grid)
        return GridFunction(grid, self(grid))

    def to_dict(self) -> dict:
        return {
            "cone": self.cone.to_dict(),
            "pieces": [{"intercept": float(a), "coefs": c.tolist()} for a, c in zip(self.intercepts, self.coefs)],
        }


SeparatingFunction = Union[MaxAffinePotential, ConeFunction]


@dataclass
class OrderCertificate:
    verdict: bool
    order: str
    witness_kernel: Optional[Kernel] = None
    separating_function: Optional[SeparatingFunction] = None
    margin: float = 0.0
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "order": self.order,
            "margin": self.margin,
            "degenerate": self.degenerate,
            "witness_kernel": None if self.witness_kernel is None else self.witness_kernel.to_dict(),
            "separating_function": None if self.separating_function is None else self.separating_function.to_dict(),
        }


def add_dilation_rows(
    builder: ProgramBuilder,
    sources: np.ndarray,
    masses: Sequence[Union[LinExpr, float]],
    targets: np.ndarray,
    Q: np.ndarray,
    cone: ConeSpec,
) -> List[List[int]]:
    """Row i of Q (variable indices) must dominate mass_i * delta_{source_i}.

    Returns the row indices added for each source, in generator (or coordinate) order.
    """
    added: List[List[int]] = []
    mode = cone.mean_mode
    if mode is not None:
        for i, z in enumerate(sources):
            rows = []
            for k in range(len(z)):
                expr = LinExpr.total(Q[i], targets[:, k]) - masses[i] * float(z[k])
                rows.append(builder.add_row(expr, mode, 0.0))
            added.append(rows)
        return added
    F_t = cone.generator_matrix(targets)
    F_s = cone.generator_matrix(sources)
    for i in range(len(sources)):
        rows = []
        for k in range(F_t.shape[0]):
            expr = LinExpr.total(Q[i], F_t[k]) - masses[i] * float(F_s[k, i])
            rows.append(builder.add_row(expr, GE, 0.0))
        added.append(rows)
    return added


def _separating_function(cone: ConeSpec, dim: int, alpha: np.ndarray, gamma: np.ndarray) -> SeparatingFunction:
    if cone.mean_mode is not None:
        return MaxAffinePotential(gamma.reshape(len(alpha), dim), alpha, monotone=cone.monotone)
    return ConeFunction(cone, alpha, np.clip(gamma, 0.0, None))


def _order_program(r1: DiscreteMeasure, r2: DiscreteMeasure, cone: ConeSpec, elastic: bool = False):
    builder = ProgramBuilder()
    n1, n2 = r1.size, r2.size
    Q = builder.add_variables(n1 * n2).reshape(n1, n2)
    slack = []

    def elastic_expr(sense: str) -> LinExpr:
        if not elastic:
            return LinExpr()
        if sense == EQ:
            pos, neg = builder.add_variables(2, aux=True)
            slack.extend([pos, neg])
            return LinExpr.var(pos) - LinExpr.var(neg)
        (pos,) = builder.add_variables(1, aux=True)
        slack.append(pos)
        return LinExpr.var(pos)

    row_rows = [builder.add_row(LinExpr.total(Q[i]) + elastic_expr(EQ), EQ, float(r1.weights[i])) for i in range(n1)]
    col_rows = [builder.add_row(LinExpr.total(Q[:, j]) + elastic_expr(EQ), EQ, float(r2.weights[j])) for j in range(n2)]
    dil_rows = add_dilation_rows(builder, r1.points, list(r1.weights), r2.points, Q, cone)
    if elastic:
        for rows in dil_rows:
            for r in rows:
                e = elastic_expr(GE if cone.mean_mode != EQ else EQ)
                for idx, c in e.terms.items():
                    builder.rows[r][idx] = c
        builder.add_objective(LinExpr.total(slack))
    return builder, Q, row_rows, col_rows, dil_rows


def _degenerate_true(r1: DiscreteMeasure, r2: DiscreteMeasure, cone: ConeSpec, order: str, margin: float, opts: SolverOptions) -> OrderCertificate:
    builder, Q, *_ = _order_program(r1, r2, cone, elastic=True)
    relaxed = builder.solve(opts)
    if relaxed.status != "optimal":
        raise NumericalFailure(f"elastic {order} program returned {relaxed.status}")
    if relaxed.value > opts.margin_tol:
        logger.warning(f"elastic {order} program leaves {relaxed.value:.3g} of slack")
    kernel = Kernel.from_matrix(r1.points, r2.points, relaxed.x[Q])
    return OrderCertificate(True, order, witness_kernel=kernel, margin=float(margin), degenerate=True)


def check_cone_order(
    r1: DiscreteMeasure,
    r2: DiscreteMeasure,
    cone: ConeSpec,
    opts: Optional[SolverOptions] = None,
) -> OrderCertificate:
    """Dilation kernel when r1 <= r2 in the cone order, separating function otherwise.

    Margins within `margin_tol` of zero and rows infeasible only within it are
    ties: the order is declared to hold and the certificate is marked degenerate.
    """
    opts = opts or default_options()
    if r1.dim != r2.dim:
        raise UsageError(f"measures live in dimensions {r1.dim} and {r2.dim}")
    order = cone.order_name
    cone = cone.resolved(r1.points, r2.points)
    if cone.mean_mode is None and not cone.generators:
        rows = tuple(r2 for _ in range(r1.size))
        return OrderCertificate(True, order, witness_kernel=Kernel(r1.points, rows))

    builder, Q, row_rows, col_rows, dil_rows = _order_program(r1, r2, cone)
    sol = builder.solve(opts, allow_near_feasible=True)
    if sol.status == "optimal":
        kernel = Kernel.from_matrix(r1.points, r2.points, sol.x[Q])
        return OrderCertificate(True, order, witness_kernel=kernel)
    if sol.status == "near_feasible":
        logger.warning(f"{order} order check is degenerate (rows off by {sol.infeasibility:.3g}); resolving to true")
        return _degenerate_true(r1, r2, cone, order, 0.0, opts)

    y = sol.farkas.y
    alpha = y[row_rows]
    gamma = np.array([[y[r] for r in rows] for rows in dil_rows])
    f = _separating_function(cone, r1.dim, alpha, gamma)
    margin = r1.integrate(f(r1.points)) - r2.integrate(f(r2.points))
    if margin > opts.margin_tol:
        logger.info(f"{order} order fails with margin {margin:.6g}")
        return OrderCertificate(False, order, separating_function=f, margin=float(margin))
    if margin < -opts.margin_tol:
        raise NumericalFailure(f"{order} separating function has negative margin {margin:.3g}")

    logger.warning(f"{order} order check is degenerate (margin {margin:.3g}); resolving to true")
    return _degenerate_true(r1, r2, cone, order, margin, opts)


def check_convex_order(r1: DiscreteMeasure, r2: DiscreteMeasure, opts: Optional[SolverOptions] = None) -> OrderCertificate:
    return check_cone_order(r1, r2, ConeSpec.convex(), opts)


def check_icx_order(r1: DiscreteMeasure, r2: DiscreteMeasure, opts: Optional[SolverOptions] = None) -> OrderCertificate:
    return check_cone_order(r1, r2, ConeSpec.icx(), opts)


def dilation_kernel(mu: DiscreteMeasure, nu: DiscreteMeasure, cone: ConeSpec, opts: Optional[SolverOptions] = None) -> Kernel:
    cert = check_cone_order(mu, nu, cone, opts)
    if not cert.verdict:
        raise OrderViolation(f"measures are not in {cert.order} order (margin {cert.margin:.6g})", cert)
    return cert.witness_kernel


def row_dominates(source, row: DiscreteMeasure, cone: ConeSpec, tol: float = 1e-8) -> bool:
    """delta_source is dominated by row in the cone order, checked on generators."""
    source = np.ravel(np.asarray(source, dtype=float))
    mode = cone.mean_mode
    m = row.weights @ row.points
    if mode == EQ:
        return bool(np.all(np.abs(m - source) <= tol))
    if mode == GE:
        return bool(np.all(m >= source - tol))
    cone = cone.resolved(row.points, source.reshape(1, -1))
    F_row = cone.generator_matrix(row.points)
    F_src = cone.generator_matrix(source.reshape(1, -1))[:, 0]
    return bool(np.all(F_row @ row.weights >= F_src - tol))


def validate_certificate(cert: OrderCertificate, r1: DiscreteMeasure, r2: DiscreteMeasure, cone: ConeSpec, tol: float = 1e-8) -> bool:
    """Re-check a certificate independently of the LP that produced it."""
    if (cert.witness_kernel is None) == (cert.separating_function is None):
        return False
    if cert.verdict:
        kernel = cert.witness_kernel
        try:
            coupling = compose(r1, kernel)
        except UsageError:
            return False
        target = np.zeros(r2.size)
        for j, p in enumerate(coupling.second_support):
            k = r2.index_of(p)
            if k is None:
                if coupling.matrix[:, j].sum() > tol:
                    return False
                continue
            target[k] += coupling.matrix[:, j].sum()
        if np.max(np.abs(target - r2.weights)) > tol:
            return False
        return all(row_dominates(x, kernel.row_for(x), cone, tol) for x in r1.points)
    f = cert.separating_function
    if isinstance(f, MaxAffinePotential) and cone.monotone and np.any(f.slopes < 0):
        return False
    if isinstance(f, ConeFunction) and np.any(f.coefs < 0):
        return False
    margin = r1.integrate(f(r1.points)) - r2.integrate(f(r2.points))
    return margin > 1e-9 and abs(margin - cert.margin) <= 1e-8 * (1.0 + abs(margin))


def cone_hull(f: GridFunction, cone: ConeSpec, opts: Optional[SolverOptions] = None) -> Tuple[GridFunction, Union[MaxAffinePotential, ConeFunction]]:
    """Largest minorant of f in the cone, on the grid, with its representation."""
    if cone.mean_mode == EQ:
        hull = convex_hull(f, opts)
        return hull, max_affine_from_values(hull.support, hull.values, monotone=False, opts=opts)
    if cone.mean_mode == GE:
        hull = iconvex_hull(f, opts)
        return hull, max_affine_from_values(hull.support, hull.values, monotone=True, opts=opts)
    opts = opts or default_options()
    cone = cone.resolved(f.support)
    F = cone.generator_matrix(f.support)
    finite = f.finite
    intercepts, coefs, values = [], [], []
    for i in range(len(f.support)):
        builder = ProgramBuilder()
        a = builder.add_variables(1, lower=-math.inf)
        c = builder.add_variables(F.shape[0])
        for j in np.flatnonzero(finite):
            builder.add_row(LinExpr.var(a[0]) + LinExpr.total(c, F[:, j]), LE, float(f.values[j]))
        builder.add_objective(-(LinExpr.var(a[0]) + LinExpr.total(c, F[:, i])))
        sol = builder.solve(opts)
        if sol.status != "optimal":
            values.append(math.inf)
            continue
        intercepts.append(float(sol.x[a[0]]))
        coefs.append(sol.x[c])
        values.append(-sol.value)
    hull = f.with_values(np.minimum(np.asarray(values), f.values))
    return hull, ConeFunction(cone, np.asarray(intercepts), np.asarray(coefs).reshape(len(intercepts), F.shape[0]))


def sample_dilation(rho: DiscreteMeasure, order: Union[str, ConeSpec], rng: np.random.Generator, opts: Optional[SolverOptions] = None) -> DiscreteMeasure:
    """A random measure dominating rho in the given order."""
    if isinstance(order, ConeSpec) and order.mean_mode is not None:
        order = order.order_name
    if isinstance(order, str):
        i = int(rng.integers(rho.size))
        y = rho.points[i]
        share = float(rng.uniform(0.2, 1.0)) * rho.weights[i]
        direction = rng.normal(size=rho.dim)
        direction /= np.linalg.norm(direction) or 1.0
        step = float(rng.uniform(0.25, 1.5)) * direction
        pts = [rho.points, (y - step).reshape(1, -1), (y + step).reshape(1, -1)]
        w = np.concatenate([rho.weights, [share / 2, share / 2]])
        w[i] -= share
        if order == "icx":
            pts[2] = pts[2] + np.abs(rng.normal(size=rho.dim)) * float(rng.uniform(0.0, 1.0))
        elif order != "cx":
            raise UsageError(f"unknown order {order!r}")
        return DiscreteMeasure.create(np.vstack(pts), w, rho.p, normalize=True)
    opts = opts or default_options()
    extra = rho.points + rng.uniform(-1.5, 1.5, size=rho.points.shape)
    targets = union_points(rho.points, extra)
    cone = order.resolved(targets)
    builder = ProgramBuilder()
    Q = builder.add_variables(rho.size * len(targets)).reshape(rho.size, len(targets))
    for i in range(rho.size):
        builder.add_row(LinExpr.total(Q[i]), EQ, float(rho.weights[i]))
    add_dilation_rows(builder, rho.points, list(rho.weights), targets, Q, cone)
    builder.add_objective(LinExpr.total(Q.ravel(), rng.normal(size=Q.size)))
    sol = builder.solve(opts)
    if sol.status != "optimal":
        return rho
    return DiscreteMeasure.create(targets, np.clip(sol.x[Q].sum(axis=0), 0.0, None), rho.p, normalize=True)
