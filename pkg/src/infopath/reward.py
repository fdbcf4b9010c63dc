"""Submodular rewards: modular tables, GP mutual information and residuals."""

from __future__ import annotations

import itertools
import math
from abc import ABC, abstractmethod
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

JITTER = 1e-10


class RewardFunction(ABC):
    """Set function over location ids with f(empty) = 0."""

    @abstractmethod
    def value(self, A: frozenset) -> float: ...

    def __call__(self, A: Iterable[int]) -> float:
        return self.value(frozenset(A))

    def gain(self, A: Iterable[int], v: int) -> float:
        A = frozenset(A)
        if v in A:
            raise ValueError(f"location {v} is already in the set")
        return self.value(A | {v}) - self.value(A)

    def session(self, candidates: Iterable[int], committed: Iterable[int] = ()) -> "GainSession":
        return _DirectSession(self, candidates, committed)

    def cache_token(self):
        """Hashable key identifying (base function, committed set) for memo tables."""
        return (id(self), frozenset())


class GainSession:
    """Incremental marginal-gain bookkeeping for one greedy run.

    ``remaining`` lists the selectable ids in increasing order and
    ``gains()`` returns their current marginal gains in the same order.
    """

    remaining: list[int]

    def gains(self) -> np.ndarray:
        raise NotImplementedError

    def select(self, v: int) -> None:
        raise NotImplementedError


class _DirectSession(GainSession):
    def __init__(self, fn: RewardFunction, candidates, committed):
        self.fn = fn
        self.current = frozenset(committed)
        self.remaining = sorted(set(candidates) - self.current)

    def gains(self):
        base = self.fn.value(self.current)
        return np.array([self.fn.value(self.current | {v}) - base for v in self.remaining])

    def select(self, v):
        self.remaining.remove(v)
        self.current = self.current | {v}


class ModularReward(RewardFunction):
    def __init__(self, table: Mapping[int, float]):
        self.table = dict(table)

    def value(self, A):
        return float(sum(self.table.get(v, 0.0) for v in A))

    def gain(self, A, v):
        if v in A:
            raise ValueError(f"location {v} is already in the set")
        return float(self.table.get(v, 0.0))

    def session(self, candidates, committed=()):
        return _ModularSession(self.table, candidates, committed)


class _ModularSession(GainSession):
    def __init__(self, table, candidates, committed):
        self.table = table
        self.remaining = sorted(set(candidates) - set(committed))

    def gains(self):
        return np.array([float(self.table.get(v, 0.0)) for v in self.remaining])

    def select(self, v):
        self.remaining.remove(v)


@dataclass(frozen=True)
class SEKernel:
    """Isotropic squared-exponential kernel with additive observation noise."""

    signal_variance: float = 1.0
    lengthscale: float = 1.0
    noise_variance: float = 0.01

    def __call__(self, X, Y=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Y = X if Y is None else np.asarray(Y, dtype=float)
        d2 = ((X[:, None, :] - Y[None, :, :]) ** 2).sum(-1)
        return self.signal_variance * np.exp(-0.5 * d2 / self.lengthscale**2)


class GPModel:
    """Zero-mean GP restricted to a finite set of locations.

    ``cov`` is the joint covariance of noisy observations at every location,
    i.e. the kernel matrix plus noise on the diagonal plus a small jitter.
    """

    def __init__(self, kernel: SEKernel | None, positions=None, ids: Sequence[int] | None = None,
                 cov: np.ndarray | None = None):
        self.kernel = kernel
        if cov is None:
            if kernel is None or positions is None:
                raise ValueError("need either a kernel with positions or an explicit covariance")
            self.positions = np.asarray(positions, dtype=float).reshape(-1, 2)
            K = kernel(self.positions)
            n = len(K)
            K[np.diag_indices(n)] += kernel.noise_variance + JITTER * kernel.signal_variance
        else:
            K = np.array(cov, dtype=float)
            self.positions = None if positions is None else np.asarray(positions, dtype=float)
            n = len(K)
        if not np.allclose(K, K.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        K.setflags(write=False)
        self.cov = K
        self.ids = tuple(range(n)) if ids is None else tuple(int(i) for i in ids)
        if len(self.ids) != n:
            raise ValueError("ids do not match covariance size")
        self.index = {v: i for i, v in enumerate(self.ids)}

    @classmethod
    def from_covariance(cls, cov, ids=None) -> "GPModel":
        return cls(None, ids=ids, cov=cov)

    @classmethod
    def for_domain(cls, kernel: SEKernel, dom) -> "GPModel":
        return cls(kernel, dom.positions, dom.ids)

    def indices(self, A: Iterable[int]) -> list[int]:
        try:
            return [self.index[v] for v in A]
        except KeyError as e:
            raise KeyError(f"unknown location id {e.args[0]!r}") from None


def _logdet_chol(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    c, _ = cho_factor(M, lower=True, check_finite=False)
    return 2.0 * float(np.log(np.diag(c)).sum())


class MutualInformation(RewardFunction):
    """MI(A) = H(X_{V\\A}) - H(X_{V\\A} | X_A) in nats.

    Uses the identity MI(A) = 1/2 (log det S_AA + log det P_AA) with
    P = S^{-1}, which follows from I(A; V\\A) = H(A) + H(V\\A) - H(V) and
    det S_{V\\A} = det S * det P_AA.
    """

    def __init__(self, model: GPModel, cache_size: int = 200_000):
        self.model = model
        S = model.cov
        try:
            c = cho_factor(S, lower=True, check_finite=False)
        except LinAlgError as e:
            raise LinAlgError(f"covariance is not positive definite: {e}") from None
        P = cho_solve(c, np.eye(len(S)), check_finite=False)
        P = 0.5 * (P + P.T)
        P.setflags(write=False)
        self.precision = P
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self._rfac: OrderedDict = OrderedDict()

    @property
    def n(self):
        return len(self.model.ids)

    def value(self, A):
        A = frozenset(A)
        if not A:
            return 0.0
        hit = self._cache.get(A)
        if hit is not None:
            return hit
        idx = sorted(self.model.indices(A))
        ix = np.ix_(idx, idx)
        try:
            val = 0.5 * (_logdet_chol(self.model.cov[ix]) + _logdet_chol(self.precision[ix]))
        except LinAlgError as e:
            raise LinAlgError(f"singular covariance for set {sorted(A)}: {e}") from None
        val = float(val)
        self._cache[A] = val
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return val

    def _factors(self, R: frozenset):
        hit = self._rfac.get(R)
        if hit is not None:
            return hit
        r = sorted(self.model.indices(R))
        ix = np.ix_(r, r)
        out = (r, cho_factor(self.model.cov[ix], lower=True, check_finite=False),
               cho_factor(self.precision[ix], lower=True, check_finite=False))
        self._rfac[R] = out
        if len(self._rfac) > 20_000:
            self._rfac.popitem(last=False)
        return out

    def conditional_blocks(self, S: Sequence[int], R: frozenset):
        """Covariance of S given R, and the (V\\R)-precision restricted to S."""
        s = self.model.indices(S)
        cov = self.model.cov
        P = self.precision
        cs = cov[np.ix_(s, s)]
        ps = P[np.ix_(s, s)]
        if R:
            r, cf, pf = self._factors(R)
            csr = cov[np.ix_(s, r)]
            psr = P[np.ix_(s, r)]
            cs = cs - csr @ cho_solve(cf, csr.T, check_finite=False)
            ps = ps - psr @ cho_solve(pf, psr.T, check_finite=False)
        return np.array(cs), np.array(ps)

    def session(self, candidates, committed=()):
        return _MISession(self, candidates, frozenset(committed))


class _MISession(GainSession):
    """Greedy gains via rank-one updates.

    gain(u | A) = 1/2 log(var(u | A) / var(u | V \\ A \\ u)) and
    var(u | V \\ A \\ u) = 1 / [inv(S_{V\\A})]_{uu}.
    """

    def __init__(self, mi: MutualInformation, candidates, committed: frozenset):
        self.remaining = sorted(set(candidates) - committed)
        self.cond, self.prec = mi.conditional_blocks(self.remaining, committed)

    def gains(self):
        if not self.remaining:
            return np.zeros(0)
        a = np.maximum(np.diag(self.cond), 1e-300)
        b = np.maximum(np.diag(self.prec), 1e-300)
        return 0.5 * np.log(a * b)

    def select(self, v):
        k = self.remaining.index(v)
        c, p = self.cond, self.prec
        ck = c[:, k].copy()
        pk = p[:, k].copy()
        c = c - np.outer(ck, ck) / c[k, k]
        p = p - np.outer(pk, pk) / p[k, k]
        keep = [i for i in range(len(self.remaining)) if i != k]
        self.cond = c[np.ix_(keep, keep)]
        self.prec = p[np.ix_(keep, keep)]
        del self.remaining[k]


class ResidualReward(RewardFunction):
    """f_R(A) = f(A | R) - f(R)."""

    def __init__(self, base: RewardFunction, committed: Iterable[int]):
        if isinstance(base, ResidualReward):
            committed = frozenset(committed) | base.committed
            base = base.base
        self.base = base
        self.committed = frozenset(committed)
        self._offset = base.value(self.committed)

    def value(self, A):
        A = frozenset(A)
        if A <= self.committed:
            return 0.0
        return self.base.value(A | self.committed) - self._offset

    def gain(self, A, v):
        A = frozenset(A)
        if v in A:
            raise ValueError(f"location {v} is already in the set")
        if v in self.committed:
            return 0.0
        return self.base.value(A | self.committed | {v}) - self.base.value(A | self.committed)

    def session(self, candidates, committed=()):
        return self.base.session(candidates, self.committed | frozenset(committed))

    def cache_token(self):
        return (id(self.base), self.committed)


def base_and_committed(fn: RewardFunction) -> tuple[RewardFunction, frozenset]:
    if isinstance(fn, ResidualReward):
        return fn.base, fn.committed
    return fn, frozenset()


def residual(fn: RewardFunction, R: Iterable[int]) -> RewardFunction:
    R = frozenset(R)
    if not R and not isinstance(fn, ResidualReward):
        return fn
    return ResidualReward(fn, R)


def mi_evaluate(model: GPModel | MutualInformation, A: Iterable[int]) -> float:
    mi = model if isinstance(model, MutualInformation) else MutualInformation(model)
    return mi(A)


def marginal_gain(fn: RewardFunction, A: Iterable[int], v: int) -> float:
    return fn.gain(A, v)


def gp_posterior(model: GPModel, observed: Mapping[int, float]) -> dict[int, tuple[float, float]]:
    """Posterior mean and variance at every unobserved location."""
    obs_ids = list(observed)
    o = model.indices(obs_ids)
    rest = [v for v in model.ids if v not in observed]
    u = model.indices(rest)
    K = model.cov
    if not o:
        return {v: (0.0, float(K[i, i])) for v, i in zip(rest, u)}
    y = np.array([observed[v] for v in obs_ids], dtype=float)
    try:
        c = cho_factor(K[np.ix_(o, o)], lower=True)
    except LinAlgError as e:
        raise LinAlgError(f"singular observation covariance: {e}") from None
    Kuo = K[np.ix_(u, o)]
    mean = Kuo @ cho_solve(c, y)
    var = np.diag(K)[u] - np.einsum("ij,ji->i", Kuo, cho_solve(c, Kuo.T))
    var = np.maximum(var, 0.0)
    return {v: (float(m), float(s)) for v, m, s in zip(rest, mean, var)}


def log_marginal_likelihood(kernel: SEKernel, X, y) -> float:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    K = kernel(X)
    K[np.diag_indices(len(K))] += kernel.noise_variance + JITTER * kernel.signal_variance
    try:
        c = cho_factor(K, lower=True)
    except LinAlgError:
        return -math.inf
    alpha = cho_solve(c, y)
    return float(-0.5 * y @ alpha - np.log(np.diag(c[0])).sum() - 0.5 * len(y) * math.log(2 * math.pi))


@dataclass(frozen=True)
class HyperGrid:
    signal_variance: tuple[float, ...]
    lengthscale: tuple[float, ...]
    noise_variance: tuple[float, ...]

    def __iter__(self):
        for sf, ls, sn in itertools.product(self.signal_variance, self.lengthscale, self.noise_variance):
            yield SEKernel(sf, ls, sn)


def gp_fit(samples: Sequence[tuple[Sequence[float], float]], search_grid: Iterable[SEKernel] | HyperGrid,
           ) -> GPModel:
    """Grid search on the log marginal likelihood; ties go to the earliest grid point."""
    if len(samples) < 3:
        raise ValueError("gp_fit needs at least three samples")
    grid = list(search_grid)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    X = np.array([p for p, _ in samples], dtype=float).reshape(-1, 2)
    y = np.array([v for _, v in samples], dtype=float)
    if np.ptp(y) == 0:
        low = min(k.signal_variance for k in grid)
        best = next(k for k in grid if k.signal_variance == low)
        return GPModel(best, X)
    best, best_ll = None, -math.inf
    for k in grid:
        ll = log_marginal_likelihood(k, X, y)
        if best is None or ll > best_ll:
            best, best_ll = k, ll
    return GPModel(best, X)
