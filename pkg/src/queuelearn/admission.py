"""Admission control for a queue fed by Poisson arrivals and Poisson service tokens.

Jobs arrive at rate ``lambda``; each token of an independent rate ``1 - p``
stream removes one job if any are present.  The controller may divert
arrivals, but the long-run diversion rate should stay below ``p``.  Three
policies are compared: the online threshold rule, the infinite-lookahead
rule that diverts only jobs opening a busy period that would never end, and
a finite-window heuristic of the same shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy import stats

from .exceptions import InfeasibleThreshold
from .harness import child_seed, summarize

THRESHOLD, GREEDY, WINDOWED = 0, 1, 2
N_BATCHES = 20
POLICIES = ("threshold", "greedy", "windowed")


@dataclass(frozen=True)
class AdmissionConfig:
    lam: float
    p: float
    L: float = math.inf
    horizon: float = 1e5
    seed: int = 0
    slack: float = 0.05
    burst: float = 50.0

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise ValueError("arrival rate must lie in (0, 1)")
        if not 0 < self.p < 1:
            raise ValueError("diversion budget must lie in (0, 1)")
        if self.L < 0 or self.horizon < 0:
            raise ValueError("window length and horizon must be nonnegative")

    @property
    def load(self):
        """Normalized load ``(lambda - p) / (1 - p)``."""
        return (self.lam - self.p) / (1 - self.p)

    @classmethod
    def at_load(cls, load, p, **kw):
        return cls(lam=p + load * (1 - p), p=p, **kw)


@dataclass(frozen=True, eq=False)
class EventStream:
    arrivals: np.ndarray
    tokens: np.ndarray
    horizon: float

    def merged(self):
        """Event times and kinds (+1 arrival, -1 token) in time order."""
        t = np.concatenate([self.arrivals, self.tokens])
        e = np.concatenate([np.ones(self.arrivals.size, np.int64), -np.ones(self.tokens.size, np.int64)])
        order = np.argsort(t, kind="stable")
        return t[order], e[order]


def _poisson_epochs(rng, rate, horizon):
    if horizon <= 0 or rate <= 0:
        return np.empty(0)
    n = int(rate * horizon + 10 * math.sqrt(rate * horizon) + 10)
    t = np.cumsum(rng.exponential(1.0 / rate, size=n))
    while t[-1] < horizon:
        more = np.cumsum(rng.exponential(1.0 / rate, size=n)) + t[-1]
        t = np.concatenate([t, more])
    return t[t < horizon]


def gen_streams(cfg: AdmissionConfig) -> EventStream:
    rng = np.random.default_rng(cfg.seed)
    arrivals = _poisson_epochs(rng, cfg.lam, cfg.horizon)
    tokens = _poisson_epochs(rng, 1 - cfg.p, cfg.horizon)
    return EventStream(arrivals, tokens, float(cfg.horizon))


@njit(cache=True)
def _event_loop(t, e, horizon, policy, k, L, budget_rate, burst, n_batches):
    n = t.size
    # S[m] is the free walk after event m; the busy period opened by an
    # admission at m ends at the first later event where S returns to S[m-1]
    S = np.empty(n + 1, dtype=np.int64)
    S[0] = 0
    for m in range(n):
        S[m + 1] = S[m] + e[m]
    sufmin = np.empty(n + 2, dtype=np.int64)
    sufmin[n + 1] = np.iinfo(np.int64).max
    for m in range(n, -1, -1):
        sufmin[m] = min(S[m], sufmin[m + 1])
    start = horizon / 2.0
    width = (horizon - start) / n_batches
    batch = np.zeros(n_batches)
    Q = 0
    last = start
    area = 0.0
    diverted = 0
    arrivals = 0
    n_arr = 0
    for m in range(n):
        if e[m] > 0:
            n_arr += 1
    seen = np.empty(n_arr, dtype=np.int32)
    mask = np.zeros(n_arr, dtype=np.bool_)
    rejected_nonempty = 0
    admitted_empty = 0
    for m in range(n):
        tm = t[m]
        if tm > start:
            area += Q * (tm - last)
            _spread(batch, start, width, last, tm, Q)
            last = tm
        if e[m] < 0:
            if Q > 0:
                Q -= 1
            continue
        seen[arrivals] = Q
        arrivals += 1
        divert = False
        if policy == THRESHOLD:
            divert = Q >= k
        elif policy == GREEDY:
            divert = Q == 0 and sufmin[m + 2] > S[m]
        else:
            # the excursion this arrival opens above the current level
            if L == np.inf:
                never_ends = sufmin[m + 2] > S[m]
            else:
                never_ends = True
                r = m + 1
                while r < n and t[r] < tm + L:
                    if S[r + 1] <= S[m]:
                        never_ends = False
                        break
                    r += 1
            divert = never_ends and diverted + 1 <= budget_rate * tm + burst
        if divert:
            mask[arrivals - 1] = True
            diverted += 1
            if Q > 0:
                rejected_nonempty += 1
        else:
            if Q == 0:
                admitted_empty += 1
            Q += 1
    if horizon > last:
        area += Q * (horizon - last)
        _spread(batch, start, width, last, horizon, Q)
    return area, batch / width, diverted, arrivals, rejected_nonempty, admitted_empty, Q, seen, mask


@njit(cache=True)
def _spread(batch, start, width, a, b, Q):
    """Add ``Q * |[a, b) & batch_i|`` to each batch's area."""
    if Q == 0:
        return
    i = min(int((a - start) / width), batch.size - 1)
    while a < b:
        edge = start + (i + 1) * width if i < batch.size - 1 else b
        hi = min(b, edge)
        batch[i] += Q * (hi - a)
        a = hi
        i += 1


@dataclass(eq=False)
class SimTrace:
    policy: str
    cfg: AdmissionConfig
    EQ: float                # time-average queue over the second half of the horizon
    EQ_ci: float             # batch-means 95% half-width of EQ
    diverted: int
    arrivals: int
    audit: dict = field(default_factory=dict)
    queue_seen: np.ndarray | None = None   # queue length found by each arrival
    diverted_mask: np.ndarray | None = None

    @property
    def diversion_rate(self):
        return self.diverted / self.cfg.horizon if self.cfg.horizon > 0 else 0.0

    @property
    def budget_violated(self):
        return self.diversion_rate > self.cfg.p


def _run(cfg, policy, k=0, stream=None):
    stream = gen_streams(cfg) if stream is None else stream
    t, e = stream.merged()
    if cfg.horizon == 0:
        return SimTrace(POLICIES[policy], cfg, 0.0, 0.0, 0, 0, {})
    area, batches, div, arr, rej_ne, adm_empty, qend, seen, mask = _event_loop(
        t, e, float(cfg.horizon), policy, int(min(k, 2**62)), float(cfg.L),
        # with unlimited lookahead the long-run rate lambda - (1 - p) < p is always feasible
        math.inf if math.isinf(cfg.L) else cfg.p * (1 + cfg.slack), float(cfg.burst), N_BATCHES,
    )
    audit = {"rejected_nonempty": int(rej_ne), "admitted_at_empty": int(adm_empty), "final_queue": int(qend)}
    ci = summarize(batches).ci
    return SimTrace(POLICIES[policy], cfg, area / (cfg.horizon / 2), ci, int(div), int(arr), audit, seen, mask)


def threshold_run(cfg: AdmissionConfig, k, stream=None) -> SimTrace:
    """Admit iff the queue is below ``k`` at arrival (``k = inf`` admits all)."""
    if k < 0:
        raise ValueError("threshold must be nonnegative")
    return _run(cfg, THRESHOLD, k, stream)


def greedy_empty_run(cfg: AdmissionConfig, stream=None) -> SimTrace:
    """Divert only arrivals that find the queue empty and whose busy period would never end."""
    return _run(replace(cfg, L=math.inf), GREEDY, 0, stream)


def windowed_run(cfg: AdmissionConfig, stream=None) -> SimTrace:
    """Divert an arrival whose excursion above the current queue level does not close within ``[t, t + L)``.

    At an empty queue this is the greedy test restricted to the window; at
    ``L = 0`` no future is used and every arrival qualifies.  With finite
    ``L`` a diversion is vetoed when it would push the diversion count above
    ``p (1 + slack) t + burst``.
    """
    return _run(cfg, WINDOWED, 0, stream)


# --- birth-death oracle ----------------------------------------------------

def stationary(lam, p, k):
    """Stationary law of the queue on ``{0..k}`` under threshold ``k``."""
    rho = lam / (1 - p)
    i = np.arange(k + 1)
    logw = i * math.log(rho)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def threshold_oracle(lam, p, k):
    """``(E[Q], diversion rate)`` of the threshold-``k`` policy."""
    if math.isinf(k):
        rho = lam / (1 - p)
        if rho >= 1:
            return math.inf, 0.0
        return rho / (1 - rho), 0.0
    pi = stationary(lam, p, int(k))
    return float(np.arange(k + 1) @ pi), float(lam * pi[-1])


def min_feasible_threshold(lam, p, k_cap=100_000):
    """Smallest ``k`` with stationary diversion rate ``lambda pi_k <= p``."""
    if not (0 < lam < 1 and 0 < p < 1):
        raise ValueError("rates must lie in (0, 1)")
    for k in range(k_cap + 1):
        if threshold_oracle(lam, p, k)[1] <= p:
            return k
    raise InfeasibleThreshold(
        f"no threshold up to {k_cap} meets the budget: lambda={lam}, p={p}, "
        f"diversion at cap={threshold_oracle(lam, p, k_cap)[1]:.6g}"
    )


def greedy_limit(lam, p):
    """Stationary mean queue of the infinite-lookahead rule, ``(1-p)/(lambda-1+p)``."""
    if lam <= 1 - p:
        return math.nan
    return (1 - p) / (lam - 1 + p)


# --- heavy-traffic sweep ---------------------------------------------------

@dataclass(eq=False)
class SweepRow:
    load: float
    lam: float
    policy: str
    k: int | None
    EQ: float
    se: float
    ci: float
    diversion_rate: float
    oracle: float
    samples: np.ndarray


def log_fit(loads, values):
    """Least-squares ``values = c1 + c2 log(1/(1-load))``; returns ``(c1, c2, R^2)``."""
    x = np.log(1.0 / (1.0 - np.asarray(loads, dtype=float)))
    fit = stats.linregress(x, np.asarray(values, dtype=float))
    return float(fit.intercept), float(fit.slope), float(fit.rvalue ** 2)


def heavy_traffic_sweep(p, loads, policies=("threshold", "greedy"), reps=20, horizon=6e5, seed=0, a=2.0, slack=0.05):
    """Mean queue per policy and load; the windowed policy uses ``L = a log(1/(1-load))``."""
    rows = []
    for li, load in enumerate(loads):
        lam = p + load * (1 - p)
        k = min_feasible_threshold(lam, p)
        for policy in policies:
            eq, rates = [], []
            for r in range(reps):
                cfg = AdmissionConfig(lam, p, horizon=horizon, seed=child_seed(seed, li * 10_000 + r), slack=slack)
                if policy == "threshold":
                    tr = threshold_run(cfg, k)
                elif policy == "greedy":
                    tr = greedy_empty_run(cfg)
                else:
                    tr = windowed_run(replace(cfg, L=a * math.log(1 / (1 - load))))
                eq.append(tr.EQ)
                rates.append(tr.diversion_rate)
            s = summarize(eq)
            oracle = threshold_oracle(lam, p, k)[0] if policy == "threshold" else greedy_limit(lam, p)
            rows.append(SweepRow(load, lam, policy, k if policy == "threshold" else None,
                                 s.mean, s.se, s.ci, float(np.mean(rates)), oracle, np.asarray(eq)))
    return rows
