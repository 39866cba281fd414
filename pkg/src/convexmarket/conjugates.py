"""Strictly convex conjugate functions R over a price region."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, UndefinedGradient

#: entropy coordinates at or below this are treated as exactly zero
ZERO_CUTOFF = 1e-12
#: barrier slack at or below this counts as the boundary sum x = 1 + c
SLACK_CUTOFF = 1e-12


def _xlogx(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    pos = x > ZERO_CUTOFF
    out[pos] = x[pos] * np.log(x[pos])
    return out


class ConjugateFunction:
    """Interface: ``value``, ``gradient``, ``hessian``, ``bregman`` and a strong-convexity modulus."""

    domain = None

    def _check(self, x, tol=1e-9) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.domain is not None and not self.domain.contains(x, tol):
            raise DomainError("point lies outside the conjugate's domain")
        return x

    def value(self, x) -> float:
        raise NotImplementedError

    def values(self, X) -> np.ndarray:
        """Row-wise values for a 2-D array of domain points (no domain check)."""
        return np.array([self.value(x) for x in np.atleast_2d(X)])

    def gradient(self, x, strict: bool = True) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def modulus(self) -> float:
        raise NotImplementedError

    def bregman(self, x, y) -> float:
        """``R(x) - R(y) - grad R(y) . (x - y)``."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        g = self.gradient(y)
        return float(self.value(x) - self.value(y) - g @ (x - y))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class NegEntropy(ConjugateFunction):
    """``R(x) = b * sum x_i log x_i`` with ``0 log 0 = 0``."""

    b: float = 1.0
    domain: object = None

    def __post_init__(self):
        if not self.b > 0:
            raise ConfigError("liquidity parameter b must be positive")

    def value(self, x):
        x = self._check(x)
        if np.any(x < -1e-9):
            raise DomainError("entropy is undefined for negative coordinates")
        return float(self.b * _xlogx(x).sum())

    def values(self, X):
        return self.b * _xlogx(np.atleast_2d(np.asarray(X, dtype=np.float64))).sum(axis=1)

    def gradient(self, x, strict=True):
        x = np.asarray(x, dtype=np.float64)
        if np.any(x <= ZERO_CUTOFF):
            if strict:
                raise UndefinedGradient("entropy gradient diverges at the simplex boundary")
            x = np.maximum(x, ZERO_CUTOFF)
        return self.b * (np.log(x) + 1.0)

    def hessian(self, x):
        x = np.asarray(x, dtype=np.float64)
        if np.any(x <= ZERO_CUTOFF):
            raise UndefinedGradient("entropy Hessian diverges at the simplex boundary")
        return np.diag(self.b / x)

    @property
    def modulus(self):
        # b / x_i >= b on the simplex
        return self.b

    def bregman(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if np.any(y <= ZERO_CUTOFF):
            raise UndefinedGradient("divergence needs y in the relative interior")
        pos = x > ZERO_CUTOFF
        kl = np.sum(x[pos] * np.log(x[pos] / y[pos])) - x.sum() + y.sum()
        return float(self.b * kl)

    def to_dict(self):
        return {"type": "negentropy", "b": self.b}


@dataclass(frozen=True)
class QuadraticR(ConjugateFunction):
    """``R(x) = lam * ||x - m||^2``; ``m`` may be a scalar (broadcast) or a vector."""

    lam: float = 1.0
    m: object = 0.0
    domain: object = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError("quadratic weight must be positive")
        m = self.m
        if np.ndim(m) == 0:
            object.__setattr__(self, "m", float(m))
        else:
            object.__setattr__(self, "m", tuple(float(v) for v in m))

    def center(self, dim: int) -> np.ndarray:
        if isinstance(self.m, float):
            return np.full(dim, self.m)
        if len(self.m) != dim:
            raise DomainError("centre dimension mismatch")
        return np.asarray(self.m)

    def value(self, x):
        x = self._check(x)
        d = x - self.center(len(x))
        return float(self.lam * d @ d)

    def values(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        D = X - self.center(X.shape[1])
        return self.lam * np.einsum("ij,ij->i", D, D)

    def gradient(self, x, strict=True):
        x = np.asarray(x, dtype=np.float64)
        return 2.0 * self.lam * (x - self.center(len(x)))

    def hessian(self, x):
        return 2.0 * self.lam * np.eye(len(x))

    @property
    def modulus(self):
        return 2.0 * self.lam

    def bregman(self, x, y):
        d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
        return float(self.lam * d @ d)

    def unconstrained_argmax(self, q) -> np.ndarray:
        """Maximizer of ``x . q - R(x)`` over all of R^K."""
        q = np.asarray(q, dtype=np.float64)
        return q / (2.0 * self.lam) + self.center(len(q))

    def to_dict(self):
        return {"type": "quadratic", "lam": self.lam, "m": self.m if isinstance(self.m, float) else list(self.m)}


@dataclass(frozen=True)
class BarrierEntropy(ConjugateFunction):
    """``R(x) = b * sum x_i log x_i - gamma * log(1 + c - sum x)`` on the band ``1 <= sum x <= 1 + c``.

    On the simplex the barrier term is the constant ``-gamma log c``; its
    curvature along the all-ones direction blows up as the price sum nears
    ``1 + c``.
    """

    b: float = 1.0
    gamma: float = 0.1
    c: float = 0.5
    domain: object = None

    def __post_init__(self):
        for name in ("b", "gamma", "c"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    @staticmethod
    def min_gamma(n: int, b: float, c: float) -> float:
        """Smallest barrier weight keeping ``argmin R`` on the simplex."""
        return max(0.0, c * b * (math.log(n) - 1.0))

    @staticmethod
    def default_gamma(n: int, b: float, c: float) -> float:
        return max(0.01, c * b * (math.log(n) - 1.0))

    def slack(self, x) -> float:
        return 1.0 + self.c - float(np.sum(x))

    def value(self, x):
        x = self._check(x)
        t = self.slack(x)
        if t <= SLACK_CUTOFF:
            # rounding-level slack is the boundary itself
            raise DomainError("price sum reached 1 + c")
        if np.any(x < -1e-9):
            raise DomainError("entropy is undefined for negative coordinates")
        return float(self.b * _xlogx(x).sum() - self.gamma * math.log(t))

    def values(self, X):
        # +inf on the barrier boundary
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        t = 1.0 + self.c - X.sum(axis=1)
        out = np.full(len(X), np.inf)
        ok = t > SLACK_CUTOFF
        out[ok] = self.b * _xlogx(X[ok]).sum(axis=1) - self.gamma * np.log(t[ok])
        return out

    def gradient(self, x, strict=True):
        x = np.asarray(x, dtype=np.float64)
        t = self.slack(x)
        if t <= 0:
            raise UndefinedGradient("barrier gradient diverges at sum x = 1 + c")
        if np.any(x <= ZERO_CUTOFF):
            if strict:
                raise UndefinedGradient("entropy gradient diverges at the boundary")
            x = np.maximum(x, ZERO_CUTOFF)
        return self.b * (np.log(x) + 1.0) + self.gamma / t

    def hessian(self, x):
        x = np.asarray(x, dtype=np.float64)
        t = self.slack(x)
        if t <= 0 or np.any(x <= ZERO_CUTOFF):
            raise UndefinedGradient("Hessian undefined on the boundary")
        return np.diag(self.b / x) + self.gamma / t**2

    @property
    def modulus(self):
        return self.b / (1.0 + self.c)

    def to_dict(self):
        return {"type": "barrier_entropy", "b": self.b, "gamma": self.gamma, "c": self.c}


def conjugate_from_dict(d: dict, domain=None) -> ConjugateFunction:
    kind = d.get("type")
    if kind == "negentropy":
        return NegEntropy(float(d.get("b", 1.0)), domain)
    if kind == "quadratic":
        m = d.get("m", 0.0)
        return QuadraticR(float(d.get("lam", 1.0)), m, domain)
    if kind == "barrier_entropy":
        return BarrierEntropy(float(d["b"]), float(d["gamma"]), float(d["c"]), domain)
    raise ConfigError(f"unknown conjugate type {kind!r}")
