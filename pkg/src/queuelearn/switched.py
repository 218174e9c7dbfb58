"""Single-hop switched queueing networks under the MaxWeight family.

At each slot a schedule ``sigma`` from a finite monotone set ``S`` is chosen,
queue ``j`` releases ``min(sigma_j, Q_j)`` jobs and then receives its
arrivals.  The module also builds the lifted vector-payoff game in which
Blackwell's policy toward ``{0}`` picks MaxWeight schedules.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit
from scipy.optimize import linprog

from .blackwell import PayoffTensor, decide_kernel, _sample
from .exceptions import DimensionMismatch, NotSupercritical
from .geometry import SINGLETON, Singleton


# --- schedules -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScheduleSet:
    """Monotone schedule set stored in lexicographic order (zero schedule first)."""

    schedules: np.ndarray

    @property
    def q(self):
        return self.schedules.shape[1]

    @property
    def d_max(self):
        return int(self.schedules.max())

    def __len__(self):
        return self.schedules.shape[0]

    def __contains__(self, sigma):
        return bool(np.any(np.all(self.schedules == np.asarray(sigma), axis=1)))

    def as_set(self):
        return {tuple(int(v) for v in s) for s in self.schedules}


def _lex_sorted(rows):
    rows = np.unique(np.asarray(rows, dtype=np.int64), axis=0)
    return rows[np.lexsort(rows.T[::-1])]


def monotone_closure(raw) -> ScheduleSet:
    """Smallest monotone superset of ``raw``."""
    raw = np.asarray(list(raw) if not isinstance(raw, np.ndarray) else raw)
    if raw.size == 0:
        raise ValueError("schedule set must be nonempty")
    if raw.ndim != 2:
        raise DimensionMismatch("schedules must be equal-length vectors")
    if np.any(raw < 0) or np.any(raw != np.round(raw)):
        raise ValueError("schedules must be nonnegative integer vectors")
    raw = raw.astype(np.int64)
    if np.any(raw.max(axis=0) < 1):
        raise ValueError("every queue must be served by some schedule")
    lower = set()
    for s in _lex_sorted(raw):
        for sub in itertools.product(*(range(v + 1) for v in s)):
            lower.add(sub)
    return ScheduleSet(_lex_sorted(sorted(lower)))


def crossbar(n=2):
    """An ``n``-port switch restricted to one queue per slot (the 2-queue crossbar when n=2)."""
    return monotone_closure(np.eye(n, dtype=np.int64))


# --- arrivals and service --------------------------------------------------

class ArrivalModel:
    a_max: int
    q: int

    def sample(self, rng, T):
        raise NotImplementedError

    def mean_at(self, t):
        raise NotImplementedError


@dataclass(eq=False)
class IID(ArrivalModel):
    """Arrival vector ``values[k]`` with probability ``probs[k]`` each slot."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.int64))
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.shape != (self.values.shape[0],):
            raise DimensionMismatch("one probability per arrival vector is required")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1) > 1e-12:
            raise ValueError("arrival probabilities must form a distribution")
        if np.any(self.values < 0):
            raise ValueError("arrivals must be nonnegative")

    @classmethod
    def bernoulli(cls, rates):
        """Independent Bernoulli arrivals with the given per-queue rates."""
        rates = np.asarray(rates, dtype=float)
        if np.any((rates < 0) | (rates > 1)):
            raise ValueError("Bernoulli rates must lie in [0, 1]")
        values = np.array(list(itertools.product((0, 1), repeat=rates.size)), dtype=np.int64)
        probs = np.prod(np.where(values == 1, rates, 1 - rates), axis=1)
        return cls(values, probs / probs.sum())

    @property
    def q(self):
        return self.values.shape[1]

    @property
    def a_max(self):
        return int(self.values.max())

    @property
    def mean(self):
        return self.probs @ self.values

    def mean_at(self, t):
        return self.mean

    def sample(self, rng, T):
        idx = rng.choice(self.values.shape[0], size=T, p=self.probs)
        return self.values[idx]


@dataclass(eq=False)
class AdversarialSequence(ArrivalModel):
    """A fixed arrival sequence, repeated cyclically if shorter than the horizon."""

    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=np.int64))
        if np.any(self.vectors < 0):
            raise ValueError("arrivals must be nonnegative")

    @property
    def q(self):
        return self.vectors.shape[1]

    @property
    def a_max(self):
        return int(self.vectors.max())

    def mean_at(self, t):
        return self.vectors[t % len(self.vectors)].astype(float)

    def sample(self, rng, T):
        return self.vectors[np.arange(T) % len(self.vectors)]


@dataclass(eq=False)
class TimeVaryingMean(ArrivalModel):
    """Piecewise-IID arrivals: ``phases`` is a list of ``(duration, IID)``, cycled."""

    phases: list

    def __post_init__(self):
        if not self.phases or any(d < 1 for d, _ in self.phases):
            raise ValueError("phases need positive durations")
        if len({m.q for _, m in self.phases}) != 1:
            raise DimensionMismatch("all phases must have the same queue count")

    @property
    def q(self):
        return self.phases[0][1].q

    @property
    def a_max(self):
        return max(m.a_max for _, m in self.phases)

    def _phase_index(self, T):
        lengths = np.array([d for d, _ in self.phases])
        pos = np.arange(T) % lengths.sum()
        return np.searchsorted(np.cumsum(lengths), pos, side="right")

    def mean_at(self, t):
        return self.phases[int(self._phase_index(t + 1)[-1])][1].mean

    def sample(self, rng, T):
        which = self._phase_index(T)
        out = np.zeros((T, self.q), dtype=np.int64)
        for k, (_, model) in enumerate(self.phases):
            mask = which == k
            out[mask] = model.sample(rng, int(mask.sum()))
        return out


@dataclass(frozen=True, eq=False)
class ServiceRates:
    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 1 or np.any(mu <= 0):
            raise ValueError("service rates must be strictly positive")
        object.__setattr__(self, "mu", mu)


# --- capacity region -------------------------------------------------------

def interior_margin(abar, S: ScheduleSet) -> float:
    """Largest ``eps`` with ``abar + eps * 1`` inside the hull of ``S``.

    The hull of a monotone set is down-closed, so this is
    ``max over sigma in hull of min_j (sigma_j - abar_j)``; negative values
    mean ``abar`` lies outside.
    """
    abar = np.asarray(abar, dtype=float)
    if abar.shape != (S.q,):
        raise DimensionMismatch("mean arrival vector does not match the queue count")
    if np.any(abar < 0):
        raise ValueError("mean arrivals must be nonnegative")
    K = len(S)
    # variables: K convex weights, then eps; maximize eps
    c = np.zeros(K + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-S.schedules.T.astype(float), np.ones((S.q, 1))])
    A_eq = np.hstack([np.ones((1, K)), np.zeros((1, 1))])
    bounds = [(0, None)] * K + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=-abar, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if not res.success:
        raise ArithmeticError(f"interior margin LP failed: {res.message}")
    return float(res.x[-1])


def transience_check(S: ScheduleSet, abar):
    """Separating direction for a mean arrival vector outside the hull of ``S``.

    Returns ``(n, eps)`` with ``0 <= n <= 1`` (largest entry 1) and
    ``n . (abar - sigma) >= eps > 0`` for every schedule, so that
    ``E[n . Q(t)] >= eps * t`` under any policy.
    """
    abar = np.asarray(abar, dtype=float)
    if interior_margin(abar, S) >= 0:
        raise NotSupercritical("mean arrivals lie inside the capacity region")
    q = S.q
    # variables: n (q entries in [0, 1]) then eps; maximize eps
    c = np.zeros(q + 1)
    c[-1] = -1.0
    sched = S.schedules.astype(float)
    A_ub = np.hstack([sched - abar, np.ones((len(S), 1))])
    bounds = [(0, 1)] * q + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(len(S)), bounds=bounds, method="highs")
    if not res.success or res.x[-1] <= 0:
        raise ArithmeticError("no separating direction found")
    n = res.x[:q]
    scale = n.max()
    return n / scale, float(res.x[-1] / scale)


# --- policies --------------------------------------------------------------

def _argmax_weight(weights, S: ScheduleSet, cap=None):
    sched = S.schedules
    score = sched @ np.asarray(weights, dtype=float)
    if cap is not None:
        feasible = np.all(sched <= np.asarray(cap)[None, :], axis=1)
        score = np.where(feasible, score, -np.inf)
    return sched[int(np.argmax(score))].copy()


def _check_state(Q, S):
    Q = np.asarray(Q)
    if Q.shape != (S.q,):
        raise DimensionMismatch("queue state does not match the schedule set")
    if np.any(Q < 0):
        raise ValueError("queue lengths must be nonnegative")
    return Q


def maxweight(Q, S: ScheduleSet):
    """Schedule maximizing ``Q . sigma`` over ``sigma <= Q``; ties go to the lexicographically smallest."""
    Q = _check_state(Q, S)
    return _argmax_weight(Q, S, cap=Q)


def weighted_maxweight(Q, S: ScheduleSet, mu):
    mu = mu.mu if isinstance(mu, ServiceRates) else ServiceRates(mu).mu
    Q = _check_state(Q, S)
    return _argmax_weight(mu * Q, S, cap=Q)


def f_maxweight(Q, S: ScheduleSet, f: Callable):
    Q = _check_state(Q, S)
    return _argmax_weight(np.array([f(v) for v in Q], dtype=float), S, cap=Q)


def step(Q, a, sigma):
    """One slot: ``Q + a - min(sigma, Q)``."""
    Q = np.asarray(Q)
    return Q + np.asarray(a) - np.minimum(sigma, Q)


# --- simulation ------------------------------------------------------------

POLICIES = ("mw", "wmw", "fmw-square", "fmw-log", "random")


@njit(cache=True)
def _simulate_kernel(sched, arrivals, policy, mu, u_pick, q0):
    T, q = arrivals.shape
    K = sched.shape[0]
    Q = np.empty((T + 1, q), dtype=np.int64)
    dep = np.empty((T, q), dtype=np.int64)
    chosen = np.empty(T, dtype=np.int64)
    Q[0] = q0
    thin = False
    for j in range(q):
        if mu[j] < 1.0:
            thin = True
    for t in range(T):
        cur = Q[t]
        if policy == 4:
            best = min(int(u_pick[t] * K), K - 1)
        else:
            best = -1
            best_w = -np.inf
            for k in range(K):
                ok = True
                w = 0.0
                for j in range(q):
                    s = sched[k, j]
                    if s > cur[j]:
                        ok = False
                        break
                    x = float(cur[j])
                    if policy == 1:
                        x = mu[j] * x
                    elif policy == 2:
                        x = x * x
                    elif policy == 3:
                        x = np.log1p(x)
                    w += x * s
                if ok and w > best_w:
                    best_w = w
                    best = k
        chosen[t] = best
        for j in range(q):
            d = min(sched[best, j], cur[j])
            if thin:
                served = 0
                for m in range(d):
                    if np.random.random() < mu[j]:
                        served += 1
                d = served
            dep[t, j] = d
            Q[t + 1, j] = cur[j] + arrivals[t, j] - d
    return Q, dep, chosen


@dataclass(eq=False)
class SwitchTrace:
    """Replayable record of a switched-network run."""

    S: ScheduleSet
    Q: np.ndarray              # (T+1, q) queue lengths, Q[0] is the initial state
    arrivals: np.ndarray       # (T, q)
    departures: np.ndarray     # (T, q)
    schedules: np.ndarray      # (T, q) chosen schedules
    abar: np.ndarray

    @property
    def T(self):
        return self.arrivals.shape[0]

    @property
    def total(self):
        return self.Q.sum(axis=1)

    @property
    def time_average_total(self):
        """``(1/T) sum_{t<T} Q^Sigma(t)``."""
        return float(self.total[:-1].mean())

    @property
    def drift(self):
        """Lyapunov increments ``||Q(t+1)||^2 - ||Q(t)||^2``."""
        sq = (self.Q.astype(float) ** 2).sum(axis=1)
        return np.diff(sq)

    @property
    def c(self):
        """Measured second moment ``E ||a - d||^2``."""
        diff = (self.arrivals - self.departures).astype(float)
        return float((diff ** 2).sum(axis=1).mean())

    @property
    def eps_hat(self):
        return interior_margin(self.abar, self.S)

    @property
    def bound(self):
        """Long-run queue bound ``c / (2 eps_hat)`` (infinite outside the interior)."""
        eps = self.eps_hat
        return self.c / (2 * eps) if eps > 0 else math.inf


def simulate(S: ScheduleSet, arrivals: ArrivalModel, policy: str, T: int, seed=0, mu=None, q0=None):
    """Run ``T`` slots; ``mu`` thins each served job with probability ``mu_j``."""
    if T < 1:
        raise ValueError("T must be at least 1")
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; choose from {POLICIES}")
    if arrivals.q != S.q:
        raise DimensionMismatch("arrival model and schedule set disagree on queue count")
    rng = np.random.default_rng(seed)
    a = np.ascontiguousarray(arrivals.sample(rng, T), dtype=np.int64)
    mu_arr = np.ones(S.q) if mu is None else (mu.mu if isinstance(mu, ServiceRates) else ServiceRates(mu).mu)
    if mu_arr.shape != (S.q,) or np.any(mu_arr > 1):
        raise ValueError("service rates must be probabilities, one per queue")
    u_pick = rng.random(T)
    q0 = np.zeros(S.q, dtype=np.int64) if q0 is None else np.asarray(q0, dtype=np.int64)
    _seed_numba(int(rng.integers(2**31 - 1)))
    Q, dep, chosen = _simulate_kernel(
        S.schedules, a, POLICIES.index(policy), mu_arr, u_pick, q0
    )
    abar = arrivals.mean_at(0) if isinstance(arrivals, IID) else a.mean(axis=0)
    return SwitchTrace(S, Q, a, dep, S.schedules[chosen], np.asarray(abar, dtype=float))


@njit(cache=True)
def _seed_numba(seed):
    np.random.seed(seed)


# --- approachability embedding --------------------------------------------

def lift_matrices(q):
    """``R^k`` for k = 1..q, each ``2q x 2q`` with diagonal blocks ``+delta_k`` and ``-delta_k``.

    With ``a' = [a, 1]`` and ``d' = [1, d]`` the lifted payoff
    ``d'^T R^k a'`` equals ``a_k - d_k``.
    """
    mats = np.zeros((q, 2 * q, 2 * q))
    for k in range(q):
        mats[k, k, k] = 1.0
        mats[k, q + k, q + k] = -1.0
    return mats


def lift_decision(d):
    d = np.asarray(d, dtype=float)
    return np.concatenate([np.ones(d.size), d])


def lift_arrival(a):
    a = np.asarray(a, dtype=float)
    return np.concatenate([a, np.ones(a.size)])


def lifted_payoff(mats, d, a):
    return np.einsum("i,kij,j->k", lift_decision(d), mats, lift_arrival(a))


def embed_as_game(S: ScheduleSet, a_max: int):
    """Vector-payoff game whose player and adversary both pick schedules.

    The adversary's pure actions are the schedules, so its mixed actions
    are exactly the mean arrival vectors in the capacity region.  ``r_max``
    covers any arrival in ``[0, a_max]^q`` against any schedule.
    """
    mats = lift_matrices(S.q)
    K = len(S)
    R = np.empty((K, K, S.q))
    for i in range(K):
        for j in range(K):
            R[i, j] = lifted_payoff(mats, S.schedules[i], S.schedules[j])
    r_max = math.sqrt(S.q) * max(int(a_max), S.d_max)
    return PayoffTensor(R, r_max=r_max), Singleton.origin(S.q)


@njit(cache=True)
def _blackwell_switch_kernel(R, sched, arrivals, u_player):
    T, q = arrivals.shape
    Q = np.zeros(q, dtype=np.int64)
    zeros = np.zeros(q)
    dist = np.empty(T)
    chosen = np.empty(T, dtype=np.int64)
    states = np.empty((T, q), dtype=np.int64)
    status_out = 1
    for t in range(T):
        states[t] = Q
        qbar = zeros.copy() if t == 0 else Q / float(t)
        d, status, value, v = decide_kernel(R, SINGLETON, zeros, zeros, 0.0, qbar)
        if status == 2:
            status_out = 2
        i = _sample(d, u_player[t])
        chosen[t] = i
        for j in range(q):
            Q[j] = Q[j] + arrivals[t, j] - min(sched[i, j], Q[j])
        dist[t] = np.sqrt(np.sum((Q / float(t + 1)) ** 2))
    return dist, chosen, states, status_out


@dataclass(eq=False)
class EmbeddedRun:
    distances: np.ndarray   # ||Qbar(t)|| for t = 1..T
    schedules: np.ndarray   # chosen schedule per slot
    states: np.ndarray      # Q(t) before each decision
    final_Q: np.ndarray
    r_max: float


def run_embedded(S: ScheduleSet, arrivals: ArrivalModel, T: int, seed=0) -> EmbeddedRun:
    """Blackwell's policy on the lifted game driving a real queue.

    The realized vector payoff is ``a - min(sigma, Q)``, so the running
    average is ``Q(t) / t``.
    """
    tensor, _ = embed_as_game(S, arrivals.a_max)
    rng = np.random.default_rng(seed)
    a = np.ascontiguousarray(arrivals.sample(rng, T), dtype=np.int64)
    u = rng.random(T)
    dist, chosen, states, status = _blackwell_switch_kernel(tensor.R, S.schedules, a, u)
    if status == 2:
        raise ArithmeticError("embedded target became unapproachable; check the schedule set")
    final = states[-1] + a[-1] - np.minimum(S.schedules[chosen[-1]], states[-1])
    return EmbeddedRun(dist, S.schedules[chosen], states, final, tensor.r_max)


def verify_equivalence(S: ScheduleSet, states, a_max=1, return_details=False):
    """Check that Blackwell's decision on the embedding is a MaxWeight decision.

    For each state ``Q`` the running average is taken as ``Q / t`` for a
    nominal ``t`` (the decision is scale-free); every schedule in the
    decision's support must attain ``max_sigma Q . sigma`` over ``S``.
    """
    from .blackwell import GameState, blackwell_decision

    tensor, Z = embed_as_game(S, a_max)
    results = []
    for t, Q in enumerate(np.atleast_2d(np.asarray(states)), start=1):
        qbar = np.asarray(Q, dtype=float) / t
        d = blackwell_decision(tensor, GameState(t, qbar * t, np.zeros(S.q)), Z)
        weights = S.schedules @ np.asarray(Q)
        best = weights.max()
        support = np.flatnonzero(d > 1e-9)
        results.append(bool(np.all(weights[support] == best)))
    ok = all(results)
    return (ok, results) if return_details else ok
