"""Linear programs, Frank-Wolfe and cutting planes shared by every solver.

Sign conventions: row duals are reported as d(objective)/d(rhs) in the
original row senses. A Farkas certificate is in ">= form": y >= 0 on ">="
rows, y <= 0 on "<=" rows, free on "==" rows, and the margin
y.b - sum_j sup_{x_j in [l_j, u_j]} (A^T y)_j x_j is strictly positive.
"""
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import linprog, minimize

from ..config import SolverOptions, default_options
from ..errors import NumericalFailure, UsageError
from ..logger import logger

LE, EQ, GE = "<=", "==", ">="
SENSES = (LE, EQ, GE)


class LinExpr:
    """Sparse affine expression sum_i c_i v_i + const over program variables."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Optional[Dict[int, float]] = None, const: float = 0.0) -> None:
        self.terms: Dict[int, float] = dict(terms or {})
        self.const = float(const)

    @classmethod
    def var(cls, index: int, coef: float = 1.0) -> "LinExpr":
        return cls({int(index): float(coef)})

    @classmethod
    def total(cls, indices: Sequence[int], coefs: Optional[Sequence[float]] = None) -> "LinExpr":
        out = cls()
        if coefs is None:
            coefs = np.ones(len(indices))
        for i, c in zip(indices, coefs):
            c = float(c)
            if c != 0.0:
                out.terms[int(i)] = out.terms.get(int(i), 0.0) + c
        return out

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.const)

    def __add__(self, other) -> "LinExpr":
        out = self.copy()
        if isinstance(other, LinExpr):
            for i, c in other.terms.items():
                out.terms[i] = out.terms.get(i, 0.0) + c
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self) -> "LinExpr":
        return self * -1.0

    def __sub__(self, other) -> "LinExpr":
        return self + (-other)

    def __rsub__(self, other) -> "LinExpr":
        return (-self) + other

    def __mul__(self, k: float) -> "LinExpr":
        k = float(k)
        return LinExpr({i: c * k for i, c in self.terms.items()}, self.const * k)

    __rmul__ = __mul__

    def value(self, v: np.ndarray) -> float:
        return self.const + sum(c * v[i] for i, c in self.terms.items())

    def __repr__(self) -> str:
        return f"LinExpr({self.terms}, {self.const})"


@dataclass
class LinearProgram:
    c: np.ndarray
    A: sparse.csr_matrix
    b: np.ndarray
    senses: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    maximize: bool = False
    const: float = 0.0

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = len(self.c)
        self.A = sparse.csr_matrix(self.A, shape=(len(self.b), n)) if self.A is not None else sparse.csr_matrix((0, n))
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.senses = np.asarray(self.senses, dtype=object).ravel()
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        if self.A.shape != (len(self.b), n) or len(self.senses) != len(self.b):
            raise UsageError("inconsistent linear program dimensions")
        if len(self.lower) != n or len(self.upper) != n:
            raise UsageError("bounds do not match the number of variables")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.A.data))):
            raise UsageError("linear program coefficients must be finite")
        if any(s not in SENSES for s in self.senses):
            raise UsageError(f"unknown row sense in {set(self.senses)}")
        if np.any(self.lower > self.upper):
            raise UsageError("variable bounds are inconsistent")

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return len(self.b)

    def residual(self, x: np.ndarray) -> float:
        """Largest violation of rows and bounds at x."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if self.n_rows:
            ax = self.A @ x
            diff = ax - self.b
            worst = max(
                worst,
                float(np.max(np.where(self.senses == LE, diff, 0.0), initial=0.0)),
                float(np.max(np.where(self.senses == GE, -diff, 0.0), initial=0.0)),
                float(np.max(np.where(self.senses == EQ, np.abs(diff), 0.0), initial=0.0)),
            )
        worst = max(worst, float(np.max(self.lower - x, initial=0.0)), float(np.max(x - self.upper, initial=0.0)))
        return worst

    def with_objective(self, c: np.ndarray, maximize: bool = False, const: float = 0.0) -> "LinearProgram":
        return dataclasses.replace(self, c=np.asarray(c, dtype=float), maximize=maximize, const=const)

    def with_rows(self, A_new, b_new, senses_new) -> "LinearProgram":
        A_new = sparse.csr_matrix(A_new)
        return dataclasses.replace(
            self,
            A=sparse.vstack([self.A, A_new]).tocsr(),
            b=np.concatenate([self.b, np.asarray(b_new, dtype=float).ravel()]),
            senses=np.concatenate([self.senses, np.asarray(senses_new, dtype=object).ravel()]),
        )


@dataclass
class FarkasCertificate:
    y: np.ndarray
    margin: float


@dataclass
class LPSolution:
    status: str
    x: Optional[np.ndarray]
    value: float
    duals: Optional[np.ndarray] = None
    lower_duals: Optional[np.ndarray] = None
    upper_duals: Optional[np.ndarray] = None
    farkas: Optional[FarkasCertificate] = None
    message: str = ""
    infeasibility: float = 0.0


def _solver_options(opts: SolverOptions) -> dict:
    return {
        "primal_feasibility_tolerance": 1e-10,
        "dual_feasibility_tolerance": 1e-10,
        "presolve": True,
    }


def _run_highs(lp: LinearProgram, opts: SolverOptions):
    le = np.flatnonzero(lp.senses == LE)
    ge = np.flatnonzero(lp.senses == GE)
    eq = np.flatnonzero(lp.senses == EQ)
    A = lp.A
    A_ub = sparse.vstack([A[le], -A[ge]]).tocsr() if len(le) + len(ge) else None
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]]) if A_ub is not None else None
    A_eq = A[eq] if len(eq) else None
    b_eq = lp.b[eq] if len(eq) else None
    bounds = [
        (None if math.isinf(lo) else lo, None if math.isinf(hi) else hi)
        for lo, hi in zip(lp.lower, lp.upper)
    ]
    c = -lp.c if lp.maximize else lp.c
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method=opts.lp_method,
        options=_solver_options(opts),
    )
    return res, (le, ge, eq)


def _row_duals(res, index, n_rows: int, flip: bool) -> np.ndarray:
    le, ge, eq = index
    y = np.zeros(n_rows)
    if len(le) + len(ge) and getattr(res, "ineqlin", None) is not None:
        m = np.asarray(res.ineqlin.marginals, dtype=float)
        y[le] = m[: len(le)]
        y[ge] = -m[len(le):]
    if len(eq) and getattr(res, "eqlin", None) is not None:
        y[eq] = np.asarray(res.eqlin.marginals, dtype=float)
    return -y if flip else y


def _bound_duals(res, attr: str, n: int, flip: bool) -> np.ndarray:
    block = getattr(res, attr, None)
    if block is None or block.marginals is None:
        return np.zeros(n)
    m = np.asarray(block.marginals, dtype=float)
    return -m if flip else m


def farkas_margin(lp: LinearProgram, y: np.ndarray, zero_tol: float = 1e-9) -> float:
    """y.b minus the support function of the bound box in direction A^T y."""
    y = np.asarray(y, dtype=float)
    g = lp.A.T @ y
    g = np.where(np.abs(g) <= zero_tol, 0.0, g)
    sup = 0.0
    for gj, lo, hi in zip(g, lp.lower, lp.upper):
        if gj > 0:
            if math.isinf(hi):
                return -math.inf
            sup += gj * hi
        elif gj < 0:
            if math.isinf(lo):
                return -math.inf
            sup += gj * lo
    return float(y @ lp.b - sup)


def validate_farkas(lp: LinearProgram, cert: FarkasCertificate, tol: float = 1e-9) -> bool:
    y = cert.y
    if np.any(y[lp.senses == GE] < -tol) or np.any(y[lp.senses == LE] > tol):
        return False
    return farkas_margin(lp, y, tol) > tol


def _phase_one(lp: LinearProgram, opts: SolverOptions):
    """Elastic copy of the rows; its optimum is the total infeasibility."""
    n, m = lp.n_vars, lp.n_rows
    entries: List[Tuple[int, int, float]] = []
    for i, sense in enumerate(lp.senses):
        if sense in (GE, EQ):
            entries.append((i, len(entries), 1.0))
        if sense in (LE, EQ):
            entries.append((i, len(entries), -1.0))
    k = len(entries)
    rows, cols, vals = zip(*entries)
    E = sparse.csr_matrix((vals, (rows, cols)), shape=(m, k))
    phase1 = LinearProgram(
        c=np.concatenate([np.zeros(n), np.ones(k)]),
        A=sparse.hstack([lp.A, E]).tocsr(),
        b=lp.b,
        senses=lp.senses,
        lower=np.concatenate([lp.lower, np.zeros(k)]),
        upper=np.concatenate([lp.upper, np.full(k, np.inf)]),
    )
    res, index = _run_highs(phase1, opts)
    if res.status != 0:
        raise NumericalFailure(f"phase-1 program failed: {res.message}")
    return res, index


def _certificate(lp: LinearProgram, res, index) -> FarkasCertificate:
    y = _row_duals(res, index, lp.n_rows, flip=False)
    y[lp.senses == GE] = np.maximum(y[lp.senses == GE], 0.0)
    y[lp.senses == LE] = np.minimum(y[lp.senses == LE], 0.0)
    return FarkasCertificate(y=y, margin=farkas_margin(lp, y))


def farkas_certificate(lp: LinearProgram, opts: Optional[SolverOptions] = None) -> Optional[FarkasCertificate]:
    """Elastic phase-1 program; returns None when the rows are feasible."""
    opts = opts or default_options()
    if lp.n_rows == 0:
        return None
    res, index = _phase_one(lp, opts)
    if res.fun <= opts.margin_tol:
        return None
    return _certificate(lp, res, index)


def solve_lp(lp: LinearProgram, opts: Optional[SolverOptions] = None, allow_near_feasible: bool = False) -> LPSolution:
    """Solve with HiGHS. An infeasible verdict comes with a Farkas certificate.

    When HiGHS rejects rows that the phase-1 program satisfies within
    `margin_tol`, the result is either a NumericalFailure or, with
    `allow_near_feasible`, status "near_feasible" carrying the phase-1 point
    and its total infeasibility.
    """
    opts = opts or default_options()
    res, index = _run_highs(lp, opts)
    if res.status in (2, 3):
        phase1, p1_index = _phase_one(lp, opts) if lp.n_rows else (None, None)
        if phase1 is not None and phase1.fun > opts.margin_tol:
            cert = _certificate(lp, phase1, p1_index)
            return LPSolution(status="infeasible", x=None, value=-math.inf if lp.maximize else math.inf, farkas=cert, message=res.message)
        if res.status == 3 or "unbounded" in str(res.message).lower():
            return LPSolution(status="unbounded", x=None, value=math.inf if lp.maximize else -math.inf, message=res.message)
        if allow_near_feasible and phase1 is not None:
            x = np.asarray(phase1.x[: lp.n_vars], dtype=float)
            value = float(lp.c @ x) + lp.const
            logger.info(f"rows infeasible only by {phase1.fun:.3g}; returning the phase-1 point")
            return LPSolution(status="near_feasible", x=x, value=value, infeasibility=float(phase1.fun), message=res.message)
        raise NumericalFailure(f"solver reported infeasibility without a certificate: {res.message}")
    if res.status != 0:
        raise NumericalFailure(f"LP failed (status {res.status}): {res.message}", best=res.x)

    x = np.asarray(res.x, dtype=float)
    value = float(-res.fun if lp.maximize else res.fun) + lp.const
    scale = 1.0 + (float(np.max(np.abs(lp.b))) if lp.n_rows else 0.0)
    residual = lp.residual(x)
    if residual > opts.feas_tol * scale:
        raise NumericalFailure(f"LP solution violates constraints by {residual:.3g}", best=x)

    y = _row_duals(res, index, lp.n_rows, flip=lp.maximize)
    lo = _bound_duals(res, "lower", lp.n_vars, lp.maximize)
    hi = _bound_duals(res, "upper", lp.n_vars, lp.maximize)
    dual_value = float(y @ lp.b) + lp.const
    dual_value += float(sum(m * b for m, b in zip(lo, lp.lower) if m != 0 and math.isfinite(b)))
    dual_value += float(sum(m * b for m, b in zip(hi, lp.upper) if m != 0 and math.isfinite(b)))
    if abs(dual_value - value) > 1e-7 * (1.0 + abs(value)):
        logger.warning(f"LP duality mismatch: primal {value:.12g} dual {dual_value:.12g}")
    return LPSolution(status="optimal", x=x, value=value, duals=y, lower_duals=lo, upper_duals=hi, message=res.message)


@dataclass
class QuadraticTerm:
    """weight * |M v + a|^2"""

    M: sparse.csr_matrix
    a: np.ndarray
    weight: float

    def value(self, v: np.ndarray) -> float:
        z = self.M @ v + self.a
        return float(self.weight * (z @ z))

    def gradient(self, v: np.ndarray) -> np.ndarray:
        return 2.0 * self.weight * (self.M.T @ (self.M @ v + self.a))


@dataclass
class ConvexProgramOracle:
    polytope: LinearProgram
    terms: List[QuadraticTerm] = field(default_factory=list)

    def value(self, v: np.ndarray) -> float:
        return float(self.polytope.c @ v) + self.polytope.const + sum(t.value(v) for t in self.terms)

    def gradient(self, v: np.ndarray) -> np.ndarray:
        g = np.array(self.polytope.c, dtype=float)
        for t in self.terms:
            g = g + t.gradient(v)
        return g

    def curvature(self, d: np.ndarray) -> float:
        total = 0.0
        for t in self.terms:
            md = t.M @ d
            total += t.weight * float(md @ md)
        return total

    def lmo(self, g: np.ndarray, opts: SolverOptions) -> LPSolution:
        return solve_lp(self.polytope.with_objective(g), opts)

    def is_feasible(self, v: np.ndarray, tol: float) -> bool:
        return len(v) == self.polytope.n_vars and self.polytope.residual(v) <= tol


@dataclass
class FrankWolfeResult:
    x: np.ndarray
    value: float
    gap: float
    iterations: int
    converged: bool
    history: List[float]
    lmo_solution: Optional[LPSolution]
    active_set: int = 1


def _corrective_step(oracle: ConvexProgramOracle, vertices: List[np.ndarray], weights: np.ndarray) -> Tuple[np.ndarray, float]:
    V = np.vstack(vertices)
    lin = V @ oracle.polytope.c
    const = oracle.polytope.const
    blocks = [(np.asarray(t.M @ V.T), t.a, t.weight) for t in oracle.terms]

    def f(lam):
        total = float(lin @ lam) + const
        for B, a, w in blocks:
            z = B @ lam + a
            total += w * float(z @ z)
        return total

    def jac(lam):
        g = np.array(lin, dtype=float)
        for B, a, w in blocks:
            g = g + 2.0 * w * (B.T @ (B @ lam + a))
        return g

    res = minimize(
        f,
        weights,
        jac=jac,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * len(weights),
        constraints=[{"type": "eq", "fun": lambda lam: lam.sum() - 1.0, "jac": lambda lam: np.ones_like(lam)}],
        options={"ftol": 1e-15, "maxiter": 200},
    )
    lam = np.clip(res.x, 0.0, None)
    lam = lam / lam.sum() if lam.sum() > 0 else weights
    return lam, f(lam)


def frank_wolfe(
    oracle: ConvexProgramOracle,
    opts: Optional[SolverOptions] = None,
    start: Optional[np.ndarray] = None,
    fully_corrective: bool = True,
) -> FrankWolfeResult:
    """Conditional gradient with exact line search and an optional corrective step
    over the active vertex set. The value sequence never increases."""
    opts = opts or default_options()
    if start is not None and oracle.is_feasible(np.asarray(start, dtype=float), opts.feas_tol):
        x = np.asarray(start, dtype=float)
    else:
        first = oracle.lmo(oracle.polytope.c, opts)
        if first.status != "optimal":
            raise NumericalFailure(f"no feasible starting vertex ({first.status})")
        x = first.x
    vertices = [x.copy()]
    weights = np.array([1.0])
    value = oracle.value(x)
    history = [value]
    gap = math.inf
    last: Optional[LPSolution] = None
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        g = oracle.gradient(x)
        last = oracle.lmo(g, opts)
        if last.status != "optimal":
            raise NumericalFailure(f"linear minimization failed ({last.status})", best=x)
        s = last.x
        gap = float(g @ (x - s))
        if gap <= opts.tol:
            converged = True
            break
        d = s - x
        f1 = float(g @ d)
        f2 = oracle.curvature(d)
        step = 1.0 if f2 <= 0 else min(1.0, max(0.0, -f1 / (2.0 * f2)))
        x_new = x + step * d
        new_value = oracle.value(x_new)

        cand_vertices = list(vertices)
        cand_weights = (1.0 - step) * weights
        for k, vtx in enumerate(cand_vertices):
            if np.max(np.abs(vtx - s)) < 1e-12:
                cand_weights[k] += step
                break
        else:
            cand_vertices.append(s.copy())
            cand_weights = np.append(cand_weights, step)

        if fully_corrective and len(cand_vertices) > 1:
            lam, corrected = _corrective_step(oracle, cand_vertices, cand_weights)
            if corrected < new_value:
                cand_weights = lam
                x_new = np.vstack(cand_vertices).T @ lam
                new_value = corrected

        if new_value > value:
            # the same direction would come back on the next pass
            logger.debug(f"Frank-Wolfe step rejected at iteration {it}")
            history.append(value)
            break
        keep = cand_weights > 1e-12
        vertices = [v for v, k in zip(cand_vertices, keep) if k]
        weights = cand_weights[keep] / cand_weights[keep].sum()
        x, value = x_new, new_value
        history.append(value)
    if not converged:
        logger.warning(f"Frank-Wolfe stalled after {it} iterations with gap {gap:.3g}")
    return FrankWolfeResult(
        x=x,
        value=value,
        gap=max(gap, 0.0),
        iterations=it,
        converged=converged,
        history=history,
        lmo_solution=last,
        active_set=len(vertices),
    )


@dataclass
class CuttingPlaneResult:
    argmax: np.ndarray
    value: float
    upper: float
    iterations: int
    converged: bool


def cutting_plane_max(
    evaluate: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    lower: np.ndarray,
    upper: np.ndarray,
    opts: Optional[SolverOptions] = None,
    start: Optional[np.ndarray] = None,
    constraints: Optional[Tuple[sparse.spmatrix, np.ndarray]] = None,
    upper_bound: Optional[float] = None,
) -> CuttingPlaneResult:
    """Kelley's method for a concave function over {lower <= t <= upper, A t <= b}.

    `evaluate` returns the value and a supergradient. The upper bound is the
    master LP value, optionally capped by a known bound such as a primal value.
    """
    opts = opts or default_options()
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = len(lower)
    if constraints is not None:
        A_fixed = sparse.csr_matrix(constraints[0])
        b_fixed = np.asarray(constraints[1], dtype=float)
    else:
        A_fixed = sparse.csr_matrix((0, n))
        b_fixed = np.zeros(0)
    theta = np.clip(start, lower, upper) if start is not None else 0.5 * (lower + upper)

    def feasible(t: np.ndarray) -> bool:
        return not len(b_fixed) or float(np.max(A_fixed @ t - b_fixed)) <= 1e-9

    best, best_val = theta.copy(), -math.inf
    cut_rows: List[np.ndarray] = []
    cut_rhs: List[float] = []
    ub = math.inf
    converged = False
    it = 0
    for it in range(1, opts.cut_max_iter + 1):
        val, grad = evaluate(theta)
        grad = np.asarray(grad, dtype=float)
        if val > best_val and feasible(theta):
            best, best_val = theta.copy(), float(val)
        # tau - g.t <= val - g.theta
        cut_rows.append(np.concatenate([-grad, [1.0]]))
        cut_rhs.append(float(val - grad @ theta))

        A = sparse.vstack([sparse.hstack([A_fixed, sparse.csr_matrix((A_fixed.shape[0], 1))]), sparse.csr_matrix(np.vstack(cut_rows))]).tocsr()
        b = np.concatenate([b_fixed, cut_rhs])
        master = LinearProgram(
            c=np.concatenate([np.zeros(n), [1.0]]),
            A=A,
            b=b,
            senses=np.full(len(b), LE, dtype=object),
            lower=np.concatenate([lower, [-np.inf]]),
            upper=np.concatenate([upper, [np.inf]]),
            maximize=True,
        )
        sol = solve_lp(master, opts)
        if sol.status != "optimal":
            raise NumericalFailure(f"cutting-plane master is {sol.status}", best=best)
        ub = sol.value if upper_bound is None else min(sol.value, upper_bound)
        if ub - best_val <= opts.tol:
            converged = True
            break
        theta = sol.x[:n]
    if not converged:
        logger.warning(f"cutting planes stopped after {it} iterations, bound gap {ub - best_val:.3g}")
    return CuttingPlaneResult(argmax=best, value=best_val, upper=ub, iterations=it, converged=converged)


@dataclass
class ProgramSolution:
    status: str
    x: Optional[np.ndarray]
    value: float
    gap: float = 0.0
    duals: Optional[np.ndarray] = None
    farkas: Optional[FarkasCertificate] = None
    method: str = "lp"
    iterations: int = 1
    converged: bool = True
    infeasibility: float = 0.0


class ProgramBuilder:
    """Collects variables, linear rows and objective terms, then solves the
    result as an LP or, when quadratic terms are present, by Frank-Wolfe."""

    def __init__(self) -> None:
        self.lower: List[float] = []
        self.upper: List[float] = []
        self.rows: List[Dict[int, float]] = []
        self.rhs: List[float] = []
        self.senses: List[str] = []
        self.objective = LinExpr()
        self.quadratics: List[Tuple[List[LinExpr], float]] = []
        self.n_aux = 0
        self._start: Dict[int, float] = {}

    @property
    def n_vars(self) -> int:
        return len(self.lower)

    def add_variables(self, count: int, lower: float = 0.0, upper: float = math.inf, aux: bool = False) -> np.ndarray:
        first = self.n_vars
        self.lower.extend([lower] * count)
        self.upper.extend([upper] * count)
        if aux:
            self.n_aux += count
        return np.arange(first, first + count)

    def add_row(self, expr: LinExpr, sense: str, rhs: float = 0.0) -> int:
        if sense not in SENSES:
            raise UsageError(f"unknown row sense {sense}")
        self.rows.append({i: c for i, c in expr.terms.items() if c != 0.0})
        self.rhs.append(float(rhs) - expr.const)
        self.senses.append(sense)
        return len(self.rows) - 1

    def add_objective(self, expr: LinExpr) -> None:
        self.objective = self.objective + expr

    def add_quadratic(self, exprs: Sequence[LinExpr], weight: float) -> None:
        if weight < 0:
            raise UsageError("quadratic terms must have a nonnegative weight")
        if weight > 0:
            self.quadratics.append((list(exprs), float(weight)))

    def set_start(self, indices: Sequence[int], values: Sequence[float]) -> None:
        for i, v in zip(indices, values):
            self._start[int(i)] = float(v)

    def start_vector(self) -> Optional[np.ndarray]:
        if self.n_aux or len(self._start) != self.n_vars:
            return None
        return np.array([self._start[i] for i in range(self.n_vars)])

    def _matrix(self, rows: List[Dict[int, float]]) -> sparse.csr_matrix:
        r, c, v = [], [], []
        for k, row in enumerate(rows):
            for i, coef in row.items():
                r.append(k)
                c.append(i)
                v.append(coef)
        return sparse.csr_matrix((v, (r, c)), shape=(len(rows), self.n_vars))

    def build(self):
        c = np.zeros(self.n_vars)
        for i, coef in self.objective.terms.items():
            c[i] += coef
        lp = LinearProgram(
            c=c,
            A=self._matrix(self.rows),
            b=np.asarray(self.rhs, dtype=float),
            senses=np.asarray(self.senses, dtype=object),
            lower=np.asarray(self.lower, dtype=float),
            upper=np.asarray(self.upper, dtype=float),
            const=self.objective.const,
        )
        if not self.quadratics:
            return lp
        terms = []
        for exprs, weight in self.quadratics:
            M = self._matrix([e.terms for e in exprs])
            a = np.array([e.const for e in exprs])
            terms.append(QuadraticTerm(M=M, a=a, weight=weight))
        return ConvexProgramOracle(polytope=lp, terms=terms)

    def solve(self, opts: Optional[SolverOptions] = None, allow_near_feasible: bool = False) -> ProgramSolution:
        opts = opts or default_options()
        program = self.build()
        if isinstance(program, LinearProgram):
            sol = solve_lp(program, opts, allow_near_feasible)
            return ProgramSolution(
                status=sol.status, x=sol.x, value=sol.value, duals=sol.duals, farkas=sol.farkas, infeasibility=sol.infeasibility
            )
        first = solve_lp(program.polytope, opts)
        if first.status == "infeasible":
            return ProgramSolution(status="infeasible", x=None, value=math.inf, farkas=first.farkas, method="frank_wolfe")
        if first.status != "optimal":
            raise NumericalFailure(f"feasible region check returned {first.status}")
        start = self.start_vector()
        fw = frank_wolfe(program, opts, start=start if start is not None else first.x)
        duals = fw.lmo_solution.duals if fw.lmo_solution is not None else None
        return ProgramSolution(
            status="optimal" if fw.converged else "stalled",
            x=fw.x,
            value=fw.value,
            gap=fw.gap,
            duals=duals,
            method="frank_wolfe",
            iterations=fw.iterations,
            converged=fw.converged,
        )


def lexicographic_polish(
    program,
    optimum: np.ndarray,
    value: float,
    secondary: np.ndarray,
    slack: float,
    opts: Optional[SolverOptions] = None,
    max_rounds: int = 60,
) -> np.ndarray:
    """Among points whose objective is within `slack` of `value`, minimise a
    secondary linear objective. Quadratic objectives are handled by outer
    approximation of the level set."""
    opts = opts or default_options()
    secondary = np.asarray(secondary, dtype=float)
    if isinstance(program, LinearProgram):
        lp = program.with_rows(program.c.reshape(1, -1), [value - program.const + slack], [LE])
        sol = solve_lp(lp.with_objective(secondary), opts)
        return sol.x if sol.status == "optimal" else optimum
    lp = program.polytope
    point = np.asarray(optimum, dtype=float)
    best = point
    for _ in range(max_rounds):
        g = program.gradient(point)
        f = program.value(point)
        lp = lp.with_rows(g.reshape(1, -1), [value + slack - f + float(g @ point)], [LE])
        sol = solve_lp(lp.with_objective(secondary), opts)
        if sol.status != "optimal":
            return best
        point = sol.x
        if program.value(point) <= value + 2.0 * slack:
            return point
    logger.warning("lexicographic polish did not reach the level set; keeping the optimum")
    return best
