"""Hull operators on grid functions and infimal convolutions of potentials."""
import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError

from ..config import SolverOptions, default_options
from ..errors import DomainError, NumericalFailure, UsageError
from ..logger import logger
from .measures import as_points, point_key
from .optim_core import EQ, GE, LE, LinExpr, ProgramBuilder

ENUMERATION_MAX_POINTS = 40


@dataclass(frozen=True)
class GridFunction:
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        support = as_points(self.support)
        values = np.asarray(self.values, dtype=float).ravel()
        if len(values) != len(support):
            raise UsageError(f"{len(support)} support points but {len(values)} values")
        if np.any(np.isnan(values)) or np.any(values == -np.inf):
            raise UsageError("grid function values must be finite or +inf")
        if not np.any(np.isfinite(values)):
            raise UsageError("grid function needs at least one finite value")
        if len({point_key(row) for row in support}) != len(support):
            raise UsageError("grid function support must be pairwise distinct")
        support = support.copy()
        values = values.copy()
        support.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.support.shape[1])

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.values)

    def value_at(self, point) -> float:
        key = point_key(point)
        for row, v in zip(self.support, self.values):
            if point_key(row) == key:
                return float(v)
        raise DomainError(f"{list(np.ravel(point))} is not a grid point")

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.support, values)

    def to_dict(self) -> dict:
        return {
            "support": self.support.tolist(),
            "values": ["inf" if math.isinf(v) else float(v) for v in self.values],
        }


@dataclass(frozen=True)
class MaxAffinePotential:
    slopes: np.ndarray
    intercepts: np.ndarray
    monotone: bool = False

    def __post_init__(self) -> None:
        slopes = np.asarray(self.slopes, dtype=float)
        if slopes.ndim == 1:
            slopes = slopes.reshape(-1, 1)
        intercepts = np.asarray(self.intercepts, dtype=float).ravel()
        if len(slopes) != len(intercepts) or len(slopes) == 0:
            raise UsageError("a potential needs as many slopes as intercepts, at least one")
        if not (np.all(np.isfinite(slopes)) and np.all(np.isfinite(intercepts))):
            raise UsageError("potential pieces must be finite")
        if self.monotone:
            if np.any(slopes < -1e-9):
                raise UsageError("monotone potentials need coordinatewise nonnegative slopes")
            slopes = np.clip(slopes, 0.0, None)
        slopes.setflags(write=False)
        intercepts.setflags(write=False)
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "intercepts", intercepts)

    @classmethod
    def constant(cls, value: float, dim: int) -> "MaxAffinePotential":
        return cls(np.zeros((1, dim)), np.array([value]), monotone=True)

    @property
    def dim(self) -> int:
        return int(self.slopes.shape[1])

    def __call__(self, points) -> np.ndarray:
        pts = as_points(points, self.dim)
        return np.max(pts @ self.slopes.T + self.intercepts, axis=1)

    def at(self, point) -> float:
        return float(self(as_points(point, self.dim))[0])

    def subgradient(self, point) -> np.ndarray:
        pts = as_points(point, self.dim)
        k = int(np.argmax(pts[0] @ self.slopes.T + self.intercepts))
        return self.slopes[k].copy()

    def on_grid(self, grid) -> GridFunction:
        grid = as_points(grid, self.dim)
        return GridFunction(grid, self(grid))

    def lipschitz(self, ord=2) -> float:
        return float(max(np.linalg.norm(s, ord=ord) for s in self.slopes))

    def to_dict(self) -> dict:
        return {
            "pieces": [
                {"slope": s.tolist(), "intercept": float(b)} for s, b in zip(self.slopes, self.intercepts)
            ],
            "monotone": bool(self.monotone),
        }


THETA_KINDS = ("norm", "sqnorm", "pwl", "pospart")


@dataclass(frozen=True)
class Theta:
    """Convex penalty on x - mean(rho): a norm, the squared norm, a 1D
    piecewise-linear function or the norm of the positive part."""

    kind: str
    ord: float = 1.0
    pwl_slopes: Tuple[float, ...] = ()
    pwl_intercepts: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in THETA_KINDS:
            raise UsageError(f"unknown theta family {self.kind!r}")
        if self.kind in ("norm", "pospart") and self.ord not in (1.0, 2.0, math.inf):
            raise UsageError("theta order must be 1, 2 or inf")
        if self.kind == "pwl" and (not self.pwl_slopes or len(self.pwl_slopes) != len(self.pwl_intercepts)):
            raise UsageError("piecewise-linear theta needs matching slopes and intercepts")

    @classmethod
    def norm(cls, ord: float = 1.0) -> "Theta":
        return cls("norm", ord=float(ord))

    @classmethod
    def sqnorm(cls) -> "Theta":
        return cls("sqnorm")

    @classmethod
    def pwl(cls, slopes: Sequence[float], intercepts: Sequence[float]) -> "Theta":
        return cls("pwl", pwl_slopes=tuple(float(s) for s in slopes), pwl_intercepts=tuple(float(c) for c in intercepts))

    @classmethod
    def pospart(cls, q: float = 1.0) -> "Theta":
        return cls("pospart", ord=float(q))

    @property
    def smooth(self) -> bool:
        return self.kind == "sqnorm"

    def _check_dim(self, d: int) -> None:
        if self.kind == "pwl" and d != 1:
            raise UsageError("piecewise-linear theta is one-dimensional")
        if d > 1 and self.kind in ("norm", "pospart") and self.ord == 2.0:
            raise UsageError("the Euclidean norm is only supported in dimension 1; use ord 1 or inf")

    def __call__(self, z) -> float:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if self.kind == "sqnorm":
            return float(z @ z)
        if self.kind == "norm":
            return float(np.linalg.norm(z, ord=self.ord))
        if self.kind == "pospart":
            return float(np.linalg.norm(np.clip(z, 0.0, None), ord=self.ord))
        return float(max(a * z[0] + c for a, c in zip(self.pwl_slopes, self.pwl_intercepts)))

    def subgradient(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if self.kind == "sqnorm":
            return 2.0 * z
        A, c = self.pieces(len(z))
        return A[int(np.argmax(A @ z + c))].copy()

    def pieces(self, d: int) -> Tuple[np.ndarray, np.ndarray]:
        """theta(z) = max_k A_k.z + c_k; not available for the squared norm."""
        self._check_dim(d)
        if self.kind == "sqnorm":
            raise UsageError("the squared norm has no polyhedral representation")
        if self.kind == "pwl":
            return np.array(self.pwl_slopes).reshape(-1, 1), np.array(self.pwl_intercepts)
        if d == 1:
            if self.kind == "norm":
                return np.array([[1.0], [-1.0]]), np.zeros(2)
            return np.array([[1.0], [0.0]]), np.zeros(2)
        eye = np.eye(d)
        if self.kind == "norm" and self.ord == math.inf:
            return np.vstack([eye, -eye]), np.zeros(2 * d)
        if self.kind == "norm":
            signs = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
            return signs, np.zeros(len(signs))
        if self.ord == math.inf:
            return np.vstack([eye, np.zeros((1, d))]), np.zeros(d + 1)
        subsets = np.array(list(itertools.product((0.0, 1.0), repeat=d)))
        return subsets, np.zeros(len(subsets))

    def kinks(self) -> List[float]:
        """Breakpoints of a one-dimensional theta."""
        if self.kind == "sqnorm":
            return []
        if self.kind in ("norm", "pospart"):
            return [0.0]
        out = []
        pairs = list(zip(self.pwl_slopes, self.pwl_intercepts))
        for (a1, c1), (a2, c2) in itertools.combinations(pairs, 2):
            if a1 != a2:
                out.append((c2 - c1) / (a1 - a2))
        return out

    def asymptotic_slopes(self) -> Tuple[float, float]:
        """Slopes of a one-dimensional theta at -inf and +inf."""
        if self.kind == "sqnorm":
            return -math.inf, math.inf
        A, _ = self.pieces(1)
        return float(A.min()), float(A.max())

    def to_dict(self) -> dict:
        out = {"family": self.kind}
        if self.kind in ("norm", "pospart"):
            out["ord"] = "inf" if math.isinf(self.ord) else self.ord
        if self.kind == "pwl":
            out["slopes"] = list(self.pwl_slopes)
            out["intercepts"] = list(self.pwl_intercepts)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Theta":
        family = data.get("family", "norm")
        order = data.get("ord", data.get("q", 1))
        order = math.inf if order in ("inf", math.inf) else float(order)
        if family == "pwl":
            return cls.pwl(data.get("slopes", []), data.get("intercepts", []))
        if family in ("norm", "pospart"):
            return cls(family, ord=order)
        return cls(family)


def _lower_hull_1d(xs: np.ndarray, ys: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Monotone chain over points sorted by x; returns the hull vertices."""
    order = np.argsort(xs, kind="stable")
    hull: List[Tuple[float, float]] = []
    for i in order:
        p = (float(xs[i]), float(ys[i]))
        if hull and hull[-1][0] == p[0]:
            if p[1] >= hull[-1][1]:
                continue
            hull.pop()
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    vx = np.array([h[0] for h in hull])
    vy = np.array([h[1] for h in hull])
    return vx, vy


def _interpolate(vx: np.ndarray, vy: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.interp(x, vx, vy)
    return np.where((x < vx[0] - 1e-15) | (x > vx[-1] + 1e-15), np.inf, out)


def _hull_lp(points: np.ndarray, values: np.ndarray, y: np.ndarray, opts: SolverOptions) -> float:
    builder = ProgramBuilder()
    lam = builder.add_variables(len(points))
    builder.add_row(LinExpr.total(lam), EQ, 1.0)
    for k in range(points.shape[1]):
        builder.add_row(LinExpr.total(lam, points[:, k]), EQ, float(y[k]))
    builder.add_objective(LinExpr.total(lam, values))
    sol = builder.solve(opts)
    if sol.status == "infeasible":
        raise DomainError(f"{y.tolist()} lies outside the convex hull of the finite support")
    return float(sol.value)


def _enumerate_hull(points: np.ndarray, values: np.ndarray, y: np.ndarray) -> float:
    d = points.shape[1]
    n = len(points)
    best = math.inf
    exact = np.all(np.abs(points - y) <= 1e-12, axis=1)
    if np.any(exact):
        best = float(values[exact].min())
    pairs = np.array(list(itertools.combinations(range(n), 2))) if n >= 2 else np.zeros((0, 2), dtype=int)
    if len(pairs):
        a, b = points[pairs[:, 0]], points[pairs[:, 1]]
        ab = b - a
        denom = np.einsum("ij,ij->i", ab, ab)
        ok = denom > 1e-24
        t = np.where(ok, np.einsum("ij,ij->i", y - a, ab) / np.where(ok, denom, 1.0), -1.0)
        on_seg = ok & (t >= -1e-12) & (t <= 1 + 1e-12)
        on_seg &= np.linalg.norm(a + t[:, None] * ab - y, axis=1) <= 1e-10
        if np.any(on_seg):
            t = np.clip(t, 0.0, 1.0)
            vals = (1 - t) * values[pairs[:, 0]] + t * values[pairs[:, 1]]
            best = min(best, float(vals[on_seg].min()))
    if d >= 2 and n >= d + 1:
        subsets = np.array(list(itertools.combinations(range(n), d + 1)))
        M = np.concatenate([points[subsets].transpose(0, 2, 1), np.ones((len(subsets), 1, d + 1))], axis=1)
        det = np.linalg.det(M)
        good = np.abs(det) > 1e-12
        if np.any(good):
            rhs = np.concatenate([y, [1.0]])
            lam = np.linalg.solve(M[good], np.broadcast_to(rhs, (int(good.sum()), d + 1))[..., None])[..., 0]
            inside = np.all(lam >= -1e-12, axis=1)
            if np.any(inside):
                vals = np.einsum("ij,ij->i", np.clip(lam[inside], 0.0, None), values[subsets[good][inside]])
                best = min(best, float(vals.min()))
    if math.isinf(best):
        raise DomainError(f"{y.tolist()} lies outside the convex hull of the finite support")
    return best


def brute_force_hull(f: GridFunction, y, method: str = "auto", opts: Optional[SolverOptions] = None) -> float:
    """inf of xi(f) over grid measures xi with mean y, by subset enumeration or one LP."""
    opts = opts or default_options()
    y = np.ravel(np.asarray(y, dtype=float))
    if len(y) != f.dim:
        raise UsageError(f"point has dimension {len(y)}, function has {f.dim}")
    mask = f.finite
    points, values = f.support[mask], f.values[mask]
    if method == "auto":
        method = "enumerate" if f.dim <= 2 and len(points) <= ENUMERATION_MAX_POINTS else "lp"
    if method == "enumerate":
        return _enumerate_hull(points, values, y)
    if method == "lp":
        return _hull_lp(points, values, y, opts)
    raise UsageError(f"unknown hull method {method!r}")


def convex_hull(f: GridFunction, opts: Optional[SolverOptions] = None) -> GridFunction:
    mask = f.finite
    points, values = f.support[mask], f.values[mask]
    if f.dim == 1:
        vx, vy = _lower_hull_1d(points[:, 0], values)
        return f.with_values(np.minimum(_interpolate(vx, vy, f.support[:, 0]), f.values))
    try:
        lifted = np.hstack([points, values[:, None]])
        hull = ConvexHull(lifted)
        lower = hull.equations[hull.equations[:, -2] < -1e-12]
        tri = Delaunay(points)
        normals, offsets, tcoef = lower[:, :-2], lower[:, -1], lower[:, -2]
        planes = -(f.support @ normals.T + offsets) / tcoef
        out = np.max(planes, axis=1)
        out = np.where(tri.find_simplex(f.support, tol=1e-12) < 0, np.inf, out)
        return f.with_values(np.minimum(out, f.values))
    except (QhullError, ValueError) as exc:
        logger.info(f"qhull unavailable for this grid ({exc.__class__.__name__}); using per-point LPs")
    opts = opts or default_options()
    out = []
    for y in f.support:
        try:
            out.append(_hull_lp(points, values, y, opts))
        except DomainError:
            out.append(math.inf)
    return f.with_values(np.minimum(np.asarray(out), f.values))


def iconvex_hull(f: GridFunction, opts: Optional[SolverOptions] = None) -> GridFunction:
    """Largest coordinatewise nondecreasing convex minorant at the grid points."""
    mask = f.finite
    points, values = f.support[mask], f.values[mask]
    if f.dim == 1:
        vx, vy = _lower_hull_1d(points[:, 0], values)
        k = int(np.argmin(vy))
        vx, vy = vx[k:], vy[k:]
        x = f.support[:, 0]
        out = np.where(x <= vx[0], vy[0], _interpolate(vx, vy, x))
        return f.with_values(np.minimum(out, f.values))
    opts = opts or default_options()
    out = []
    for y in f.support:
        builder = ProgramBuilder()
        a = builder.add_variables(1, lower=-math.inf)
        s = builder.add_variables(f.dim, lower=0.0)
        for z, v in zip(points, values):
            builder.add_row(LinExpr.var(a[0]) + LinExpr.total(s, z), LE, float(v))
        builder.add_objective(-(LinExpr.var(a[0]) + LinExpr.total(s, y)))
        sol = builder.solve(opts)
        out.append(math.inf if sol.status == "unbounded" else -sol.value)
    return f.with_values(np.minimum(np.asarray(out), f.values))


def icx_hull_oracle(f: GridFunction, y, opts: Optional[SolverOptions] = None) -> float:
    """inf of rho(f) over grid measures rho with mean(rho) >= y coordinatewise."""
    opts = opts or default_options()
    y = np.ravel(np.asarray(y, dtype=float))
    mask = f.finite
    points, values = f.support[mask], f.values[mask]
    builder = ProgramBuilder()
    lam = builder.add_variables(len(points))
    builder.add_row(LinExpr.total(lam), EQ, 1.0)
    for k in range(f.dim):
        builder.add_row(LinExpr.total(lam, points[:, k]), GE, float(y[k]))
    builder.add_objective(LinExpr.total(lam, values))
    sol = builder.solve(opts)
    return math.inf if sol.status == "infeasible" else float(sol.value)


def conv_R(f: GridFunction, y, R: float, opts: Optional[SolverOptions] = None) -> float:
    """Hull value at y using only grid points within distance R of y."""
    if not R > 0:
        raise UsageError("R must be positive")
    y = np.ravel(np.asarray(y, dtype=float))
    if math.isinf(R):
        return brute_force_hull(f, y, opts=opts)
    near = np.linalg.norm(f.support - y, axis=1) <= R + 1e-12
    local = GridFunction(f.support[near], f.values[near])
    return brute_force_hull(local, y, opts=opts)


def max_affine_from_values(support, values, monotone: bool = False, opts: Optional[SolverOptions] = None) -> MaxAffinePotential:
    """Anchored max-affine extension of convex grid values, one piece per finite
    grid point, with the smallest admissible slope at each anchor."""
    support = as_points(support)
    values = np.asarray(values, dtype=float).ravel()
    mask = np.isfinite(values)
    pts, w = support[mask], values[mask]
    slopes = []
    if support.shape[1] == 1:
        order = np.argsort(pts[:, 0])
        xs, ws = pts[order, 0], w[order]
        sorted_slopes = np.zeros(len(xs))
        for k in range(len(xs)):
            left = (ws[k] - ws[k - 1]) / (xs[k] - xs[k - 1]) if k > 0 else -math.inf
            right = (ws[k + 1] - ws[k]) / (xs[k + 1] - xs[k]) if k + 1 < len(xs) else math.inf
            if monotone:
                left = max(left, 0.0)
            if left > right:
                if left - right > 1e-7 * (1.0 + abs(left)):
                    raise DomainError("grid values are not convex")
                left = right = 0.5 * (left + right)
            sorted_slopes[k] = min(max(0.0, left), right)
        inverse = np.empty_like(order)
        inverse[order] = np.arange(len(order))
        slopes = sorted_slopes[inverse].reshape(-1, 1)
    else:
        opts = opts or default_options()
        d = support.shape[1]
        for i, (zi, wi) in enumerate(zip(pts, w)):
            builder = ProgramBuilder()
            sp = builder.add_variables(d)
            sn = builder.add_variables(d, upper=0.0 if monotone else math.inf)
            for j, (zj, wj) in enumerate(zip(pts, w)):
                if j == i:
                    continue
                diff = zj - zi
                builder.add_row(LinExpr.total(sp, diff) - LinExpr.total(sn, diff), LE, float(wj - wi) + 1e-9 * (1.0 + abs(wj)))
            builder.add_objective(LinExpr.total(sp) + LinExpr.total(sn))
            sol = builder.solve(opts)
            if sol.status != "optimal":
                raise DomainError("grid values are not convex")
            slopes.append(sol.x[sp] - sol.x[sn])
        slopes = np.asarray(slopes)
    intercepts = w - np.einsum("ij,ij->i", slopes, pts)
    return MaxAffinePotential(slopes, intercepts, monotone=monotone)


def inf_convolution(psi: MaxAffinePotential, theta: Theta, x, opts: Optional[SolverOptions] = None) -> float:
    """inf over z of psi(z) + theta(x - z); -inf when psi grows too fast."""
    x = np.ravel(np.asarray(x, dtype=float))
    if psi.dim == 1:
        return _inf_convolution_1d(psi, theta, float(x[0]))
    opts = opts or default_options()
    S, b = psi.slopes, psi.intercepts
    if theta.smooth:
        # dual: max over the simplex of lam.(S x + b) - |S^T lam|^2 / 4
        builder = ProgramBuilder()
        lam = builder.add_variables(len(b), upper=1.0)
        builder.add_row(LinExpr.total(lam), EQ, 1.0)
        builder.add_objective(-LinExpr.total(lam, S @ x + b))
        builder.add_quadratic([LinExpr.total(lam, S[:, k]) for k in range(psi.dim)], 0.25)
        sol = builder.solve(opts.model_copy(update={"tol": min(opts.tol, 1e-10)}))
        if not sol.converged:
            raise NumericalFailure("inf-convolution did not reach its tolerance", best=-sol.value)
        return float(-sol.value)
    A, c = theta.pieces(psi.dim)
    builder = ProgramBuilder()
    z = builder.add_variables(psi.dim, lower=-math.inf)
    u = builder.add_variables(1, lower=-math.inf)
    t = builder.add_variables(1, lower=-math.inf)
    for s_i, b_i in zip(S, b):
        builder.add_row(LinExpr.var(u[0]) - LinExpr.total(z, s_i), GE, float(b_i))
    for a_k, c_k in zip(A, c):
        builder.add_row(LinExpr.var(t[0]) + LinExpr.total(z, a_k), GE, float(a_k @ x + c_k))
    builder.add_objective(LinExpr.var(u[0]) + LinExpr.var(t[0]))
    sol = builder.solve(opts)
    if sol.status == "unbounded":
        logger.info("inf-convolution unbounded below")
        return -math.inf
    return float(sol.value)


def _inf_convolution_1d(psi: MaxAffinePotential, theta: Theta, x: float) -> float:
    s = psi.slopes[:, 0]
    b = psi.intercepts
    lo, hi = theta.asymptotic_slopes()
    if not theta.smooth and (s.max() < lo - 1e-12 or s.min() > hi + 1e-12):
        logger.info("inf-convolution unbounded below")
        return -math.inf
    candidates = [x - k for k in theta.kinks()]
    for i, j in itertools.combinations(range(len(s)), 2):
        if s[i] != s[j]:
            candidates.append((b[j] - b[i]) / (s[i] - s[j]))
    if theta.smooth:
        candidates.extend(x - s / 2.0)
    if not candidates:
        candidates.append(x)
    zs = np.asarray(candidates, dtype=float)
    vals = psi(zs.reshape(-1, 1)) + np.array([theta(x - z) for z in zs])
    return float(vals.min())
