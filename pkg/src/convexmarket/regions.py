"""Convex compact feasible price regions.

Every region supports a membership test, Euclidean projection, a linear
maximization oracle, a diameter, and a relative-interior point. Polyhedral
regions share one constraint representation (a box plus sparse two-sided
"slab" rows ``slo <= a . x <= shi``) so that the Dykstra kernel, the active-set
polish and the LP oracle can all work from the same data.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import linprog, nnls

from .errors import DimensionError, SolverError
from .kernels import dykstra_box_slabs

DYKSTRA_MAX_SWEEPS = 50_000
DYKSTRA_TOL = 1e-10


def _as_vector(x, dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != dim:
        raise DimensionError(f"expected a vector of length {dim}, got shape {arr.shape}")
    return arr


def project_simplex(y: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = radius}`` (sort-based)."""
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - radius
    ind = np.arange(1, len(y) + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(y - theta, 0.0)


def pair_index(n: int) -> list[tuple[int, int]]:
    """Reduced pair coordinates ``(i, j)`` with ``i < j`` (0-based), in lexicographic order."""
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


@dataclass(frozen=True)
class PolyConstraints:
    lo: np.ndarray
    hi: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    slo: np.ndarray
    shi: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.slo)

    def dense_rows(self) -> np.ndarray:
        A = np.zeros((self.n_rows, len(self.lo)))
        for j in range(self.n_rows):
            sl = slice(self.indptr[j], self.indptr[j + 1])
            A[j, self.indices[sl]] = self.data[sl]
        return A

    @staticmethod
    def from_dense(lo, hi, A, slo, shi) -> "PolyConstraints":
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        indptr, indices, data = [0], [], []
        for row in A:
            nz = np.nonzero(row)[0]
            indices.extend(nz.tolist())
            data.extend(row[nz].tolist())
            indptr.append(len(indices))
        return PolyConstraints(
            np.asarray(lo, dtype=np.float64),
            np.asarray(hi, dtype=np.float64),
            np.asarray(indptr, dtype=np.int64),
            np.asarray(indices, dtype=np.int64),
            np.asarray(data, dtype=np.float64),
            np.asarray(slo, dtype=np.float64),
            np.asarray(shi, dtype=np.float64),
        )


class PriceRegion:
    """Base class. Subclasses are immutable value objects."""

    dimension: int
    #: whether :attr:`diameter` is exact (``False`` means it is an upper bound)
    diameter_exact: bool = True

    def contains(self, x, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def project(self, y) -> np.ndarray:
        raise NotImplementedError

    def linear_maximize(self, c) -> np.ndarray:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    def interior_point(self) -> np.ndarray:
        raise NotImplementedError

    def distance(self, x) -> float:
        x = _as_vector(x, self.dimension)
        return float(np.linalg.norm(x - self.project(x)))

    def contains_all(self, X, tol: float = 1e-9) -> bool:
        return bool(np.all(self.member_mask(X, tol)))

    def member_mask(self, X, tol: float = 1e-9) -> np.ndarray:
        """Row-wise membership of a 2-D array of points."""
        return np.array([self.contains(x, tol) for x in np.atleast_2d(X)], dtype=bool)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class PolyhedralRegion(PriceRegion):
    """Region ``{lo <= x <= hi, slo <= A x <= shi}``."""

    @cached_property
    def constraints(self) -> PolyConstraints:
        return self._build_constraints()

    def _build_constraints(self) -> PolyConstraints:
        raise NotImplementedError

    def violation(self, x) -> float:
        x = _as_vector(x, self.dimension)
        c = self.constraints
        v = max(0.0, float(np.max(c.lo - x, initial=0.0)), float(np.max(x - c.hi, initial=0.0)))
        if c.n_rows:
            s = self._row_values(x)
            v = max(v, float(np.max(c.slo - s, initial=0.0)), float(np.max(s - c.shi, initial=0.0)))
        return v

    def _row_values(self, x: np.ndarray) -> np.ndarray:
        c = self.constraints
        prod = c.data * x[c.indices]
        return np.add.reduceat(prod, c.indptr[:-1]) if len(prod) else np.zeros(c.n_rows)

    def contains(self, x, tol: float = 1e-9) -> bool:
        return self.violation(x) <= tol

    def member_mask(self, X, tol: float = 1e-9) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dimension:
            raise DimensionError("dimension mismatch")
        c = self.constraints
        ok = np.all((X >= c.lo - tol) & (X <= c.hi + tol), axis=1)
        S = X @ self.constraints_dense.T
        return ok & np.all((S >= c.slo - tol) & (S <= c.shi + tol), axis=1)

    def project(self, y) -> np.ndarray:
        return self.project_with_info(y)[0]

    def project_with_info(self, y) -> tuple[np.ndarray, dict]:
        """Dykstra's alternating projections followed by an active-set polish."""
        y = _as_vector(y, self.dimension)
        if self.contains(y, tol=0.0):
            return y.copy(), {"sweeps": 0, "converged": True, "polished": True}
        c = self.constraints
        x, sweeps, converged = dykstra_box_slabs(
            y, c.lo, c.hi, c.indptr, c.indices, c.data, c.slo, c.shi,
            DYKSTRA_MAX_SWEEPS, DYKSTRA_TOL,
        )
        polished = None
        for act_tol in (1e-7, 1e-9, 1e-6, 1e-5):
            polished = self._polish(y, x, act_tol)
            if polished is not None:
                break
        info = {"sweeps": int(sweeps), "converged": bool(converged), "polished": polished is not None}
        if polished is not None:
            return polished, info
        if not converged:
            raise SolverError(f"Dykstra projection did not converge in {sweeps} sweeps")
        return np.clip(x, c.lo, c.hi), info

    def _polish(self, y: np.ndarray, x: np.ndarray, act_tol: float = 1e-7):
        """Solve the equality-constrained projection on the active set guessed from ``x``.

        Returns the polished point only if it is feasible and satisfies the KKT
        sign conditions; otherwise ``None``.
        """
        c = self.constraints
        rows, rhs, signs = [], [], []
        for i in range(self.dimension):
            if x[i] - c.lo[i] <= act_tol:
                e = np.zeros(self.dimension)
                e[i] = 1.0
                rows.append(e), rhs.append(c.lo[i]), signs.append(-1.0)
            elif c.hi[i] - x[i] <= act_tol:
                e = np.zeros(self.dimension)
                e[i] = 1.0
                rows.append(e), rhs.append(c.hi[i]), signs.append(1.0)
        if c.n_rows:
            dense = self.constraints_dense
            s = dense @ x
            for j in range(c.n_rows):
                if c.slo[j] == c.shi[j]:
                    rows.append(dense[j]), rhs.append(c.slo[j]), signs.append(0.0)
                elif abs(s[j] - c.shi[j]) <= act_tol:
                    rows.append(dense[j]), rhs.append(c.shi[j]), signs.append(1.0)
                elif abs(s[j] - c.slo[j]) <= act_tol:
                    rows.append(dense[j]), rhs.append(c.slo[j]), signs.append(-1.0)
        if not rows:
            return None
        M = np.array(rows)
        b = np.array(rhs)
        mu = np.linalg.lstsq(M @ M.T, M @ y - b, rcond=None)[0]
        z = y - M.T @ mu
        if self.violation(z) > 1e-12 * max(1.0, float(np.max(np.abs(z)))):
            return None
        # degenerate active sets make the least-squares multipliers non-unique,
        # so certify optimality with a sign-constrained fit instead
        sg = np.array(signs)
        G = (M * np.where(sg == 0, 1.0, sg)[:, None]).T
        G = np.hstack([G, -G[:, sg == 0]])
        nu, resid = nnls(G, y - z, maxiter=50 * G.shape[1])
        if resid > 1e-10 * max(1.0, float(np.linalg.norm(y - z))):
            return None
        return z

    @cached_property
    def constraints_dense(self) -> np.ndarray:
        return self.constraints.dense_rows()

    def linear_maximize(self, c) -> np.ndarray:
        c = _as_vector(c, self.dimension)
        cons = self.constraints
        A = self.constraints_dense
        eq = cons.slo == cons.shi
        ub_rows, ub_rhs = [], []
        for j in np.nonzero(~eq)[0]:
            if np.isfinite(cons.shi[j]):
                ub_rows.append(A[j]), ub_rhs.append(cons.shi[j])
            if np.isfinite(cons.slo[j]):
                ub_rows.append(-A[j]), ub_rhs.append(-cons.slo[j])
        bounds = [
            (None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
            for lo, hi in zip(cons.lo, cons.hi)
        ]
        res = linprog(
            -c,
            A_ub=np.array(ub_rows) if ub_rows else None,
            b_ub=np.array(ub_rhs) if ub_rhs else None,
            A_eq=A[eq] if eq.any() else None,
            b_eq=cons.slo[eq] if eq.any() else None,
            bounds=bounds,
            method="highs-ds",
        )
        if res.status != 0:
            raise SolverError(f"linear maximization failed: {res.message}")
        return np.asarray(res.x, dtype=np.float64)

    def bounding_box(self):
        c = self.constraints
        return c.lo.copy(), c.hi.copy()


@dataclass(frozen=True)
class SimplexRegion(PolyhedralRegion):
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DimensionError("simplex needs at least one outcome")

    @property
    def dimension(self) -> int:
        return self.n

    def _build_constraints(self):
        return PolyConstraints.from_dense(
            np.zeros(self.n), np.full(self.n, np.inf), np.ones((1, self.n)), [1.0], [1.0]
        )

    def contains(self, x, tol=1e-9):
        x = _as_vector(x, self.n)
        return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol)

    def project(self, y):
        return project_simplex(_as_vector(y, self.n))

    def linear_maximize(self, c):
        c = _as_vector(c, self.n)
        x = np.zeros(self.n)
        x[int(np.argmax(c))] = 1.0
        return x

    @property
    def diameter(self):
        return math.sqrt(2.0) if self.n > 1 else 0.0

    def interior_point(self):
        return np.full(self.n, 1.0 / self.n)

    def bounding_box(self):
        return np.zeros(self.n), np.ones(self.n)

    def to_dict(self):
        return {"type": "simplex", "n": self.n}


@dataclass(frozen=True)
class BandRegion(PolyhedralRegion):
    """Prices ``x >= 0`` with ``1 <= sum(x) <= 1 + c``."""

    n: int
    c: float

    def __post_init__(self):
        if self.n < 1:
            raise DimensionError("band region needs at least one outcome")
        if not self.c >= 0:
            raise ValueError("maximal transaction cost must be nonnegative")

    @property
    def dimension(self):
        return self.n

    def _build_constraints(self):
        return PolyConstraints.from_dense(
            np.zeros(self.n), np.full(self.n, np.inf), np.ones((1, self.n)), [1.0], [1.0 + self.c]
        )

    def contains(self, x, tol=1e-9):
        x = _as_vector(x, self.n)
        s = x.sum()
        return bool(np.all(x >= -tol) and 1.0 - tol <= s <= 1.0 + self.c + tol)

    def project(self, y):
        y = _as_vector(y, self.n)
        radius = min(max(np.maximum(y, 0.0).sum(), 1.0), 1.0 + self.c)
        return project_simplex(y, radius)

    def linear_maximize(self, c):
        c = _as_vector(c, self.n)
        i = int(np.argmax(c))
        x = np.zeros(self.n)
        x[i] = 1.0 + self.c if c[i] > 0 else 1.0
        return x

    def vertices(self) -> np.ndarray:
        eye = np.eye(self.n)
        return np.vstack([eye, (1.0 + self.c) * eye])

    @property
    def diameter(self):
        if self.n <= 6:
            V = self.vertices()
            d = V[:, None, :] - V[None, :, :]
            return float(np.sqrt((d**2).sum(-1)).max())
        return math.sqrt(2.0) * (1.0 + self.c)

    def interior_point(self):
        return np.full(self.n, (1.0 + 0.5 * self.c) / self.n)

    def bounding_box(self):
        return np.zeros(self.n), np.full(self.n, 1.0 + self.c)

    def to_dict(self):
        return {"type": "band", "n": self.n, "c": self.c}


@dataclass(frozen=True)
class GomRegion(PolyhedralRegion):
    """Generalized order matrices in reduced ``x_ij`` (``i < j``) coordinates.

    The full matrix has ``X(i, i) = 1/2`` and ``X(j, i) = 1 - X(i, j)``; the only
    remaining constraints are the box ``0 <= x_ij <= 1`` and, for each triple
    ``i < j < k``, the slab ``0 <= x_ij + x_jk - x_ik <= 1``.
    """

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise DimensionError("pair betting needs at least two competitors")

    @property
    def dimension(self):
        return self.n * (self.n - 1) // 2

    @cached_property
    def pairs(self) -> list[tuple[int, int]]:
        return pair_index(self.n)

    def _build_constraints(self):
        idx = {p: k for k, p in enumerate(self.pairs)}
        indptr, indices, data = [0], [], []
        for i, j, k in itertools.combinations(range(self.n), 3):
            for col, val in sorted([(idx[i, j], 1.0), (idx[j, k], 1.0), (idx[i, k], -1.0)]):
                indices.append(col)
                data.append(val)
            indptr.append(len(indices))
        m = len(indptr) - 1
        return PolyConstraints(
            np.zeros(self.dimension),
            np.ones(self.dimension),
            np.asarray(indptr, dtype=np.int64),
            np.asarray(indices, dtype=np.int64),
            np.asarray(data, dtype=np.float64),
            np.zeros(m),
            np.ones(m),
        )

    @property
    def diameter(self):
        # both box corners are order matrices (identity and reversal), so the
        # box diagonal is attained
        return math.sqrt(self.dimension)

    def interior_point(self):
        return np.full(self.dimension, 0.5)

    def to_dict(self):
        return {"type": "gom", "n": self.n}


@dataclass(frozen=True)
class HalfspaceTrimmedSimplex(PolyhedralRegion):
    """The simplex intersected with extra halfspaces ``a_m . x <= b_m``."""

    n: int
    normals: tuple = field(default=())
    offsets: tuple = field(default=())

    diameter_exact = False

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.normals, dtype=np.float64)) if len(self.normals) else np.zeros((0, self.n))
        if A.shape[1] != self.n or A.shape[0] != len(self.offsets):
            raise DimensionError("halfspace normals must be n-vectors, one offset each")
        object.__setattr__(self, "normals", tuple(tuple(float(v) for v in row) for row in A))
        object.__setattr__(self, "offsets", tuple(float(b) for b in self.offsets))
        if self.linear_maximize(np.zeros(self.n)) is None:
            raise ValueError("trimmed simplex is empty")

    @property
    def dimension(self):
        return self.n

    def _build_constraints(self):
        m = len(self.offsets)
        A = np.vstack([np.ones((1, self.n)), np.asarray(self.normals).reshape(m, self.n)])
        slo = np.r_[1.0, np.full(m, -np.inf)]
        shi = np.r_[1.0, np.asarray(self.offsets)]
        return PolyConstraints.from_dense(np.zeros(self.n), np.full(self.n, np.inf), A, slo, shi)

    @property
    def diameter(self):
        return math.sqrt(2.0) if self.n > 1 else 0.0

    def interior_point(self):
        pts = []
        for i in range(self.n):
            for s in (1.0, -1.0):
                c = np.zeros(self.n)
                c[i] = s
                pts.append(self.linear_maximize(c))
        return np.mean(pts, axis=0)

    def bounding_box(self):
        return np.zeros(self.n), np.ones(self.n)

    def to_dict(self):
        return {
            "type": "trimmed_simplex",
            "n": self.n,
            "halfspaces": [[list(a), b] for a, b in zip(self.normals, self.offsets)],
        }


@dataclass(frozen=True)
class BallRegion(PriceRegion):
    """Unit Euclidean ball centred at the all-ones vector."""

    dim: int = 3

    @property
    def dimension(self):
        return self.dim

    @property
    def center(self) -> np.ndarray:
        return np.ones(self.dim)

    def contains(self, x, tol=1e-9):
        x = _as_vector(x, self.dim)
        return bool(np.linalg.norm(x - 1.0) <= 1.0 + tol)

    def member_mask(self, X, tol=1e-9):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise DimensionError("dimension mismatch")
        return np.linalg.norm(X - 1.0, axis=1) <= 1.0 + tol

    def project(self, y):
        y = _as_vector(y, self.dim)
        d = y - 1.0
        r = np.linalg.norm(d)
        if r <= 1.0:
            return y.copy()
        return 1.0 + d / r

    def linear_maximize(self, c):
        c = _as_vector(c, self.dim)
        nrm = np.linalg.norm(c)
        if nrm == 0.0:
            return self.center
        return 1.0 + c / nrm

    @property
    def diameter(self):
        return 2.0

    def interior_point(self):
        return self.center

    def bounding_box(self):
        return np.zeros(self.dim), np.full(self.dim, 2.0)

    def to_dict(self):
        return {"type": "ball", "dim": self.dim}


def region_from_dict(d: dict) -> PriceRegion:
    kind = d.get("type")
    if kind == "simplex":
        return SimplexRegion(int(d["n"]))
    if kind == "band":
        return BandRegion(int(d["n"]), float(d["c"]))
    if kind == "gom":
        return GomRegion(int(d["n"]))
    if kind == "ball":
        return BallRegion(int(d.get("dim", 3)))
    if kind == "trimmed_simplex":
        hs = d.get("halfspaces", [])
        return HalfspaceTrimmedSimplex(int(d["n"]), tuple(h[0] for h in hs), tuple(h[1] for h in hs))
    raise ValueError(f"unknown region type {kind!r}")
