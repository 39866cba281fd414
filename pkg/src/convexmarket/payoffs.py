"""Security payoff structures: maps from outcomes to nonnegative payoff vectors."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionError, EnumerationUnavailable, InvalidOutcome
from .regions import pair_index

ENUMERATION_CAP = 50_000


class PayoffStructure:
    K: int

    def payoff(self, o) -> np.ndarray:
        raise NotImplementedError

    def canonical(self, o):
        """Validate an outcome and return its canonical (JSON-friendly) encoding."""
        raise NotImplementedError

    def enumerate(self, cap: int = ENUMERATION_CAP) -> list:
        raise EnumerationUnavailable("outcome space is not enumerable")

    @property
    def enumerable(self) -> bool:
        try:
            self.enumerate()
        except EnumerationUnavailable:
            return False
        return True

    def payoff_matrix(self, cap: int = ENUMERATION_CAP) -> np.ndarray:
        """Rows are the payoff vectors of all enumerated outcomes."""
        return np.array([self.payoff(o) for o in self.enumerate(cap)])

    def expected_payoff(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        P = self.payoff_matrix()
        if p.shape != (P.shape[0],):
            raise DimensionError(f"belief needs {P.shape[0]} entries")
        if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("belief is not a probability distribution")
        return p @ P

    def worst_outcome(self, r):
        """An outcome minimizing the payout ``rho(o) . r``."""
        r = np.asarray(r, dtype=np.float64)
        outs = self.enumerate()
        vals = self.payoff_matrix() @ r
        return outs[int(np.argmin(vals))]

    def sample(self, rng, size: int) -> list:
        outs = self.enumerate()
        idx = rng.integers(0, len(outs), size=size)
        return [outs[i] for i in idx]

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class CompletePayoff(PayoffStructure):
    """``n`` mutually exclusive outcomes, numbered from 1; outcome ``i`` pays ``e_i``."""

    n: int

    @property
    def K(self):
        return self.n

    def canonical(self, o):
        if isinstance(o, (bool, np.bool_)) or not isinstance(o, (int, np.integer, float, np.floating)):
            raise InvalidOutcome(f"complete-market outcome must be an integer, got {o!r}")
        if float(o) != int(o) or not 1 <= int(o) <= self.n:
            raise InvalidOutcome(f"outcome must be an integer in 1..{self.n}, got {o!r}")
        return int(o)

    def payoff(self, o):
        e = np.zeros(self.n)
        e[self.canonical(o) - 1] = 1.0
        return e

    def enumerate(self, cap=ENUMERATION_CAP):
        if self.n > cap:
            raise EnumerationUnavailable(f"{self.n} outcomes exceed the cap {cap}")
        return list(range(1, self.n + 1))

    def payoff_matrix(self, cap=ENUMERATION_CAP):
        self.enumerate(cap)
        return np.eye(self.n)

    def to_dict(self):
        return {"type": "complete", "n": self.n}


@dataclass(frozen=True)
class SpherePayoff(PayoffStructure):
    """Outcome is a unit vector ``u``; security ``i`` pays ``u_i + 1``."""

    dim: int = 3
    #: inputs this close to unit norm are renormalized, anything else is rejected
    norm_tol: float = 1e-6

    @property
    def K(self):
        return self.dim

    def canonical(self, o):
        u = np.asarray(o, dtype=np.float64)
        if u.shape != (self.dim,):
            raise InvalidOutcome(f"sphere outcome must be a {self.dim}-vector")
        nrm = np.linalg.norm(u)
        if not np.isfinite(nrm) or abs(nrm - 1.0) > self.norm_tol:
            raise InvalidOutcome(f"sphere outcome must be a unit vector (norm {nrm})")
        return (u / nrm).tolist()

    def payoff(self, o):
        return np.asarray(self.canonical(o)) + 1.0

    def worst_outcome(self, r):
        r = np.asarray(r, dtype=np.float64)
        nrm = np.linalg.norm(r)
        if nrm == 0.0:
            u = np.zeros(self.dim)
            u[0] = 1.0
            return u.tolist()
        return (-r / nrm).tolist()

    def sample(self, rng, size):
        g = rng.normal(size=(size, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return [row.tolist() for row in g]

    def to_dict(self):
        return {"type": "sphere", "dim": self.dim}


@dataclass(frozen=True)
class PairBetPayoff(PayoffStructure):
    """Pair bets over the final ordering of ``n`` competitors.

    An outcome is a permutation ``pi`` written as a list of 1..n, where
    ``pi[i]`` is the finishing position of competitor ``i`` (1 is best). The
    security for the ordered pair ``(i, j)`` pays 1 iff ``pi(i) > pi(j)``, i.e.
    iff ``i`` finishes behind ``j``. Internally only the ``i < j`` securities are
    kept; ``(j, i)`` pays ``1 - x_ij``.
    """

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise DimensionError("pair betting needs at least two competitors")

    @property
    def K(self):
        return self.n * (self.n - 1) // 2

    @cached_property
    def pairs(self):
        return pair_index(self.n)

    def canonical(self, o):
        try:
            perm = [int(v) for v in o]
            exact = all(float(v) == int(v) for v in o)
        except (TypeError, ValueError):
            raise InvalidOutcome(f"pair-bet outcome must be a permutation list, got {o!r}") from None
        if not exact or sorted(perm) != list(range(1, self.n + 1)):
            raise InvalidOutcome(f"not a permutation of 1..{self.n}: {o!r}")
        return perm

    def order_matrix(self, o) -> np.ndarray:
        """Full ``n x n`` matrix with ``1/2`` on the diagonal."""
        pi = np.asarray(self.canonical(o))
        M = (pi[:, None] > pi[None, :]).astype(np.float64)
        np.fill_diagonal(M, 0.5)
        return M

    def payoff(self, o):
        pi = self.canonical(o)
        return np.array([1.0 if pi[i] > pi[j] else 0.0 for i, j in self.pairs])

    def enumerate(self, cap=ENUMERATION_CAP):
        if math.factorial(self.n) > cap:
            raise EnumerationUnavailable(f"{self.n}! orderings exceed the cap {cap}")
        return [[p + 1 for p in perm] for perm in itertools.permutations(range(self.n))]

    def fold_ordered(self, Q) -> tuple[np.ndarray, float]:
        """Reduce an ordered-pair bundle (``n x n``, diagonal ignored) to ``(r, constant)``.

        Holding ``Q`` pays ``constant + r . x`` where ``x`` is the reduced
        payoff vector, so its cost is ``constant + C(q + r) - C(q)``.
        """
        Q = np.asarray(Q, dtype=np.float64)
        if Q.shape != (self.n, self.n):
            raise DimensionError(f"ordered bundle must be {self.n}x{self.n}")
        r = np.array([Q[i, j] - Q[j, i] for i, j in self.pairs])
        constant = float(sum(Q[j, i] for i, j in self.pairs))
        return r, constant

    def to_dict(self):
        return {"type": "pairbet", "n": self.n}


def payoffs_from_dict(d: dict) -> PayoffStructure:
    kind = d.get("type")
    if kind == "complete":
        return CompletePayoff(int(d["n"]))
    if kind == "sphere":
        return SpherePayoff(int(d.get("dim", 3)))
    if kind == "pairbet":
        return PairBetPayoff(int(d["n"]))
    raise ValueError(f"unknown payoff type {kind!r}")
