"""Many-server load balancing with an idle-message channel and bounded dispatcher memory.

Jobs reach a dispatcher at rate ``lambda * n``.  Each idle server pings the
dispatcher at rate ``r``; the dispatcher keeps at most ``c`` distinct server
IDs, dropping new ones when full.  An arriving job goes to a random
remembered server (whose ID is then erased), or to a uniformly random server
when the memory is empty.  Service times are exponential with mean 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .harness import child_seed, summarize

BURN_IN = 0.2
N_BATCHES = 20


@dataclass(frozen=True)
class ClusterConfig:
    n: int
    lam: float
    r: float
    c: int
    horizon: float = 2000.0
    seed: int = 0
    capacity: int = 4096     # per-server queue buffer

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one server")
        if not 0 < self.lam < 1:
            raise ValueError("per-server load must lie in (0, 1)")
        if self.r < 0 or self.c < 0:
            raise ValueError("message rate and memory size must be nonnegative")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")


@njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


@njit(cache=True)
def _cluster_kernel(n, lam, r, c, horizon, K, burn):
    qlen = np.zeros(n, dtype=np.int64)
    ring = np.empty((n, K))           # arrival epochs of waiting jobs
    head = np.zeros(n, dtype=np.int64)
    # idle servers occupy the front of `order`, busy ones the back
    order = np.arange(n)
    where = np.arange(n)
    n_idle = n
    mem = np.empty(max(c, 1), dtype=np.int64)
    in_mem = np.zeros(n, dtype=np.bool_)
    m = 0
    waits = np.empty(1024)
    n_waits = 0
    t = 0.0
    arrivals = 0
    routed_mem = 0
    messages = 0
    msgs_dropped = 0
    max_mem = 0
    busy_mismatch = 0
    while True:
        busy = n - n_idle
        total = lam * n + busy + r * n_idle
        t += np.random.exponential(1.0 / total)
        if t >= horizon:
            break
        u = np.random.random() * total
        if u < lam * n:
            arrivals += 1
            if m > 0:
                slot = np.random.randint(m)
                s = mem[slot]
                mem[slot] = mem[m - 1]
                m -= 1
                in_mem[s] = False
                routed_mem += 1
            else:
                s = np.random.randint(n)
            if qlen[s] == 0:
                # idle -> busy: move s to the busy block
                j = where[s]
                last = order[n_idle - 1]
                order[j] = last
                where[last] = j
                order[n_idle - 1] = s
                where[s] = n_idle - 1
                n_idle -= 1
                if t > burn:
                    if n_waits == waits.size:
                        waits = np.concatenate((waits, np.empty(waits.size)))
                    waits[n_waits] = 0.0
                    n_waits += 1
            else:
                if qlen[s] - 1 >= K:
                    return waits[:0], -1, 0, 0, 0, 0, 0
                ring[s, (head[s] + qlen[s] - 1) % K] = t
            qlen[s] += 1
        elif u < lam * n + busy:
            s = order[n_idle + np.random.randint(busy)]
            qlen[s] -= 1
            if qlen[s] == 0:
                j = where[s]
                first = order[n_idle]
                order[j] = first
                where[first] = j
                order[n_idle] = s
                where[s] = n_idle
                n_idle += 1
            else:
                a = ring[s, head[s]]
                head[s] = (head[s] + 1) % K
                if a > burn:
                    if n_waits == waits.size:
                        waits = np.concatenate((waits, np.empty(waits.size)))
                    waits[n_waits] = t - a
                    n_waits += 1
        else:
            s = order[np.random.randint(n_idle)]
            messages += 1
            if qlen[s] != 0:
                # a message from a busy server would break the idle-only rule
                busy_mismatch += 1
            if not in_mem[s]:
                if m < c:
                    mem[m] = s
                    m += 1
                    in_mem[s] = True
                else:
                    msgs_dropped += 1
        if m > max_mem:
            max_mem = m
    # work conservation: the busy block holds exactly the servers with jobs
    for j in range(n):
        if (qlen[order[j]] > 0) != (j >= n_idle) or where[order[j]] != j:
            busy_mismatch += 1
    return waits[:n_waits], arrivals, routed_mem, messages, msgs_dropped, max_mem, busy_mismatch


@dataclass(eq=False)
class DelayStats:
    cfg: ClusterConfig
    mean: float
    se: float                # batch-means standard error
    ci: float
    mem_hit_fraction: float
    jobs: int
    audit: dict

    def as_row(self):
        c = self.cfg
        return {"n": c.n, "r": c.r, "c": c.c, "mean_delay": self.mean, "ci": self.ci,
                "mem_hit_fraction": self.mem_hit_fraction}


def simulate_cluster(cfg: ClusterConfig) -> DelayStats:
    """Mean waiting time (arrival to service start) of jobs arriving after the burn-in."""
    _seed(int(np.random.SeedSequence(cfg.seed).generate_state(1)[0]))
    waits, arrivals, via_mem, messages, dropped, max_mem, mismatch = _cluster_kernel(
        cfg.n, cfg.lam, cfg.r, cfg.c, cfg.horizon, cfg.capacity, BURN_IN * cfg.horizon
    )
    if arrivals < 0:
        raise OverflowError(f"a server queue exceeded its buffer of {cfg.capacity} jobs")
    if waits.size == 0:
        return DelayStats(cfg, math.nan, math.nan, math.nan, 0.0, 0, {})
    batches = np.array_split(waits, min(N_BATCHES, waits.size))
    s = summarize([b.mean() for b in batches])
    audit = {"messages": int(messages), "messages_dropped": int(dropped), "max_memory": int(max_mem),
             "inconsistencies": int(mismatch), "arrivals": int(arrivals)}
    return DelayStats(cfg, float(waits.mean()), s.se, s.ci, via_mem / max(arrivals, 1), int(waits.size), audit)


def mm1_wait(lam):
    """Mean queueing delay of an M/M/1 queue with unit service rate."""
    return lam / (1 - lam)


REGIMES = ("high_message", "high_memory", "constrained")


def regime_params(regime, n, lam, arm="above", c_small=2, r_const=1.0):
    """``(r, c)`` for a desk-scale stand-in of each asymptotic regime.

    ``r`` is always the rate of each idle server.  In the high-memory regime
    the arms are expressed through the average message rate per server,
    ``r (1 - lambda)``, which is what must reach one message per job.
    """
    if regime == "high_message":
        return math.log(n), c_small
    if regime == "high_memory":
        # ``arm`` scales the population-average message rate relative to lambda;
        # only the idle fraction (1 - lambda at zero delay) is sending
        mult = {"above": 1.2, "below": 0.5}[arm] if isinstance(arm, str) else float(arm)
        return mult * lam / (1 - lam), n
    if regime == "constrained":
        return r_const, c_small
    raise ValueError(f"unknown regime {regime!r}; choose from {REGIMES}")


@dataclass(eq=False)
class RegimeRow:
    regime: str
    arm: str
    n: int
    r: float
    c: int
    mean: float
    se: float
    ci: float
    mem_hit_fraction: float


def regime_sweep(regime, ns, lam=0.7, reps=5, horizon=2000.0, seed=0, arm="above", **kw):
    """Mean delay per ``n``, averaged over independent replications."""
    rows = []
    for i, n in enumerate(ns):
        r, c = regime_params(regime, n, lam, arm, **kw)
        means, hits = [], []
        for k in range(reps):
            cfg = ClusterConfig(n, lam, r, c, horizon, child_seed(seed, 1000 * i + k))
            st = simulate_cluster(cfg)
            means.append(st.mean)
            hits.append(st.mem_hit_fraction)
        s = summarize(means)
        rows.append(RegimeRow(regime, arm, n, r, c, s.mean, s.se, s.ci, float(np.mean(hits))))
    return rows
