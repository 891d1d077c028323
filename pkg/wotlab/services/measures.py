"""Finite measures, couplings and kernels.

Every type here is immutable after construction: arrays are copied and flagged
read-only, so measures can be shared freely between threads.
"""
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import UsageError

PRUNE_WEIGHT = 1e-14
MASS_TOL = 1e-12
COUPLING_TOL = 1e-10


def as_points(points, dim: Optional[int] = None) -> np.ndarray:
    """Coerce scalars, flat lists or nested lists into an (n, d) float array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim in (None, 1) else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise UsageError(f"points must be a list of coordinate vectors, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim and arr.size:
        raise UsageError(f"expected dimension {dim}, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise UsageError("points must have finite coordinates")
    return arr


def point_key(point: Sequence[float]) -> Tuple[float, ...]:
    return tuple(float(c) for c in np.ravel(point))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def union_points(*arrays: np.ndarray) -> np.ndarray:
    """Order-preserving union of point arrays (exact coordinate equality)."""
    seen: Dict[Tuple[float, ...], int] = {}
    out: List[np.ndarray] = []
    dim = None
    for arr in arrays:
        if arr is None:
            continue
        arr = as_points(arr, dim)
        if arr.size == 0:
            continue
        dim = arr.shape[1]
        for row in arr:
            key = point_key(row)
            if key not in seen:
                seen[key] = len(out)
                out.append(np.array(row, dtype=float))
    if not out:
        raise UsageError("cannot take the union of empty supports")
    return np.vstack(out)


@dataclass(frozen=True)
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray
    p: float = 2.0

    def __post_init__(self) -> None:
        points = as_points(self.points)
        weights = np.asarray(self.weights, dtype=float).ravel()
        if len(points) != len(weights):
            raise UsageError(f"{len(points)} points but {len(weights)} weights")
        if len(points) == 0:
            raise UsageError("a measure needs at least one atom")
        if np.any(weights < 0):
            raise UsageError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > MASS_TOL:
            raise UsageError(f"weights sum to {weights.sum():.15g}, expected 1")
        if self.p < 1:
            raise UsageError("moment order p must be at least 1")
        if len({point_key(row) for row in points}) != len(points):
            raise UsageError("points must be pairwise distinct")
        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "weights", _frozen(weights))

    @classmethod
    def create(cls, points, weights=None, p: float = 2.0, normalize: bool = False) -> "DiscreteMeasure":
        """Canonical constructor: merges coincident points and prunes negligible atoms."""
        pts = as_points(points)
        if weights is None:
            w = np.full(len(pts), 1.0 / max(len(pts), 1))
        else:
            w = np.asarray(weights, dtype=float).ravel()
        if len(w) != len(pts):
            raise UsageError(f"{len(pts)} points but {len(w)} weights")
        if normalize:
            if np.any(w < -1e-9):
                raise UsageError("weights must be nonnegative")
            w = np.clip(w, 0.0, None)
        merged: Dict[Tuple[float, ...], int] = {}
        keep_pts: List[np.ndarray] = []
        keep_w: List[float] = []
        for row, weight in zip(pts, w):
            key = point_key(row)
            if key in merged:
                keep_w[merged[key]] += weight
            else:
                merged[key] = len(keep_pts)
                keep_pts.append(row)
                keep_w.append(weight)
        mask = np.asarray(keep_w) >= PRUNE_WEIGHT
        if not np.any(mask):
            raise UsageError("measure has no atom of positive mass")
        pts = np.vstack(keep_pts)[mask]
        w = np.asarray(keep_w)[mask]
        total = w.sum()
        if normalize or abs(total - 1.0) <= 1e-9:
            w = w / total
        return cls(pts, w, p)

    @classmethod
    def dirac(cls, point, p: float = 2.0) -> "DiscreteMeasure":
        return cls.create(as_points(point, None if np.ndim(point) == 0 else len(np.ravel(point))), [1.0], p)

    @classmethod
    def uniform(cls, points, p: float = 2.0) -> "DiscreteMeasure":
        return cls.create(points, None, p)

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    def integrate(self, values) -> float:
        """rho(f) for f given as values on the atoms or as a callable on points."""
        vals = values(self.points) if callable(values) else np.asarray(values, dtype=float)
        vals = np.asarray(vals, dtype=float).ravel()
        if np.any(np.isinf(vals) & (self.weights > 0)):
            return float(np.inf) if np.all(vals[np.isinf(vals)] > 0) else float(-np.inf)
        return float(self.weights @ vals)

    def index_of(self, point) -> Optional[int]:
        key = point_key(point)
        for i, row in enumerate(self.points):
            if point_key(row) == key:
                return i
        return None

    def weights_on(self, grid: np.ndarray) -> np.ndarray:
        """Weights re-indexed onto a grid that contains the support."""
        index = {point_key(row): j for j, row in enumerate(as_points(grid))}
        out = np.zeros(len(grid))
        for row, w in zip(self.points, self.weights):
            j = index.get(point_key(row))
            if j is None:
                raise UsageError(f"atom {list(row)} is not on the grid")
            out[j] += w
        return out

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "p": self.p,
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }


def _ipf(matrix: np.ndarray, rows: np.ndarray, cols: np.ndarray, rounds: int = 200) -> np.ndarray:
    """Iterative proportional fitting; keeps the zero pattern of the matrix."""
    m = np.array(matrix, dtype=float)
    for _ in range(rounds):
        rs = m.sum(axis=1)
        m *= np.divide(rows, rs, out=np.zeros_like(rs), where=rs > 0)[:, None]
        cs = m.sum(axis=0)
        m *= np.divide(cols, cs, out=np.zeros_like(cs), where=cs > 0)[None, :]
        if np.max(np.abs(m.sum(axis=1) - rows)) < 1e-15:
            break
    return m


@dataclass(frozen=True)
class Coupling:
    first_support: np.ndarray
    second_support: np.ndarray
    matrix: np.ndarray

    def __post_init__(self) -> None:
        first = as_points(self.first_support)
        second = as_points(self.second_support)
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.shape != (len(first), len(second)):
            raise UsageError(f"matrix shape {matrix.shape} does not match supports {len(first)}x{len(second)}")
        if np.any(matrix < 0):
            raise UsageError("coupling entries must be nonnegative")
        if abs(matrix.sum() - 1.0) > COUPLING_TOL:
            raise UsageError(f"coupling mass is {matrix.sum():.15g}, expected 1")
        object.__setattr__(self, "first_support", _frozen(first))
        object.__setattr__(self, "second_support", _frozen(second))
        object.__setattr__(self, "matrix", _frozen(matrix))

    @classmethod
    def between(cls, mu: DiscreteMeasure, nu: DiscreteMeasure, matrix, tol: float = COUPLING_TOL) -> "Coupling":
        matrix = np.asarray(matrix, dtype=float)
        coupling = cls(mu.points, nu.points, matrix)
        row_err = np.max(np.abs(matrix.sum(axis=1) - mu.weights))
        col_err = np.max(np.abs(matrix.sum(axis=0) - nu.weights))
        if max(row_err, col_err) > tol:
            raise UsageError(f"marginals violated by {max(row_err, col_err):.3g}")
        return coupling

    @classmethod
    def repaired(cls, mu: DiscreteMeasure, nu: DiscreteMeasure, matrix, second_support=None) -> "Coupling":
        """Clean a solver output: clip round-off negatives, then rescale onto the exact marginals."""
        matrix = np.clip(np.asarray(matrix, dtype=float), 0.0, None)
        matrix[matrix < PRUNE_WEIGHT] = 0.0
        cols = nu.weights if second_support is None else nu.weights_on(second_support)
        support = nu.points if second_support is None else as_points(second_support)
        fitted = _ipf(matrix, mu.weights, cols)
        return cls(mu.points, support, fitted)

    @classmethod
    def product(cls, mu: DiscreteMeasure, nu: DiscreteMeasure) -> "Coupling":
        return cls(mu.points, nu.points, np.outer(mu.weights, nu.weights))

    @property
    def first_marginal(self) -> DiscreteMeasure:
        return DiscreteMeasure.create(self.first_support, self.matrix.sum(axis=1), normalize=True)

    @property
    def second_marginal(self) -> DiscreteMeasure:
        return DiscreteMeasure.create(self.second_support, self.matrix.sum(axis=0), normalize=True)

    def to_dict(self) -> dict:
        return {
            "mu": self.first_marginal.to_dict(),
            "nu": self.second_marginal.to_dict(),
            "matrix": self.matrix.tolist(),
        }


@dataclass(frozen=True)
class Kernel:
    source_support: np.ndarray
    rows: Tuple[Optional[DiscreteMeasure], ...]

    def __post_init__(self) -> None:
        support = as_points(self.source_support)
        rows = tuple(self.rows)
        if len(rows) != len(support):
            raise UsageError(f"{len(support)} source points but {len(rows)} rows")
        object.__setattr__(self, "source_support", _frozen(support))
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_matrix(cls, source_support, target_support, matrix) -> "Kernel":
        matrix = np.asarray(matrix, dtype=float)
        target = as_points(target_support)
        rows: List[Optional[DiscreteMeasure]] = []
        for row in matrix:
            mass = row.sum()
            if mass < PRUNE_WEIGHT:
                rows.append(None)
            else:
                rows.append(DiscreteMeasure.create(target, np.clip(row, 0.0, None) / mass, normalize=True))
        return cls(source_support, tuple(rows))

    @property
    def empty_rows(self) -> List[int]:
        return [i for i, row in enumerate(self.rows) if row is None]

    def row_for(self, point) -> Optional[DiscreteMeasure]:
        key = point_key(point)
        for row_point, row in zip(self.source_support, self.rows):
            if point_key(row_point) == key:
                return row
        return None

    def to_dict(self) -> dict:
        return {
            "source_support": self.source_support.tolist(),
            "rows": [None if row is None else row.to_dict() for row in self.rows],
        }


def disintegrate(c: Coupling) -> Tuple[DiscreteMeasure, Kernel]:
    mu = c.first_marginal
    kernel = Kernel.from_matrix(c.first_support, c.second_support, c.matrix)
    return mu, kernel


def compose(mu: DiscreteMeasure, k: Kernel) -> Coupling:
    rows: List[DiscreteMeasure] = []
    for point in mu.points:
        row = k.row_for(point)
        if row is None:
            raise UsageError(f"support mismatch: no kernel row for atom {list(point)}")
        rows.append(row)
    target = union_points(*[row.points for row in rows])
    matrix = np.zeros((mu.size, len(target)))
    for i, (weight, row) in enumerate(zip(mu.weights, rows)):
        matrix[i] = weight * row.weights_on(target)
    return Coupling(mu.points, target, matrix)


def chain(first_leg: Coupling, k: Kernel) -> Coupling:
    """Compose a coupling (mu -> eta) with a kernel (eta -> nu) into a coupling mu -> nu."""
    masses = first_leg.matrix.sum(axis=0)
    used = [j for j, m in enumerate(masses) if m >= PRUNE_WEIGHT]
    rows = []
    for j in used:
        row = k.row_for(first_leg.second_support[j])
        if row is None:
            raise UsageError(f"support mismatch: no kernel row for {list(first_leg.second_support[j])}")
        rows.append(row)
    target = union_points(*[row.points for row in rows])
    row_matrix = np.vstack([row.weights_on(target) for row in rows])
    matrix = first_leg.matrix[:, used] @ row_matrix
    return Coupling(first_leg.first_support, target, matrix)


def mean(rho: DiscreteMeasure) -> np.ndarray:
    return rho.weights @ rho.points


def p_moment(rho: DiscreteMeasure, p: float) -> float:
    if p < 1:
        raise UsageError("p must be at least 1")
    norms = np.linalg.norm(rho.points, axis=1)
    return float(rho.weights @ norms ** p)


def second_moment_weights(grid: np.ndarray) -> np.ndarray:
    return np.sum(as_points(grid) ** 2, axis=1)


def working_grid(mu: DiscreteMeasure, nu: DiscreteMeasure, refine: int = 0, extra: Optional[Iterable] = None) -> np.ndarray:
    """supp(nu) ∪ supp(mu) plus `refine` interior points per 1D gap or per segment in d >= 2."""
    base = union_points(nu.points, mu.points, None if extra is None else as_points(list(extra), nu.dim))
    if nu.dim == 1:
        xs = np.unique(base[:, 0])
        if refine > 0 and len(xs) > 1:
            fill = [np.linspace(a, b, refine + 2)[1:-1] for a, b in zip(xs[:-1], xs[1:])]
            xs = np.unique(np.concatenate([xs, *fill]))
        return xs.reshape(-1, 1)
    if refine <= 0:
        return base
    extra_pts = []
    ts = np.linspace(0.0, 1.0, refine + 2)[1:-1]
    for i in range(len(base)):
        for j in range(i + 1, len(base)):
            for t in ts:
                extra_pts.append((1 - t) * base[i] + t * base[j])
    return union_points(base, np.asarray(extra_pts)) if extra_pts else base
