"""Seeded replication, summary statistics and CSV output for experiments.

Replication ``k`` of a run with master seed ``s`` draws from
``numpy.random.SeedSequence([s, k])``; the sequence hash is stable across
platforms and numpy versions, so results replay bit-exactly.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

Z95 = 1.96


def child_seed(master: int, index: int) -> int:
    """Stable 63-bit seed for replication ``index`` under ``master``."""
    state = np.random.SeedSequence([int(master), int(index)]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)


def child_rng(master: int, index: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(master, index))


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    se: float
    ci: float
    count: int

    def as_row(self):
        return {"mean": self.mean, "se": self.se, "ci95": self.ci, "count": self.count}


def summarize(samples) -> SummaryStats:
    """Mean, standard error, 95% half-width and count of ``samples``."""
    x = np.asarray(list(samples), dtype=float)
    if x.size == 0:
        raise ValueError("cannot summarize an empty sample")
    mean = float(math.fsum(x) / x.size)
    if x.size == 1 or np.all(x == x[0]):
        return SummaryStats(float(x[0]) if np.all(x == x[0]) else mean, 0.0, 0.0, int(x.size))
    var = math.fsum((x - mean) ** 2) / (x.size - 1)
    se = math.sqrt(var / x.size)
    return SummaryStats(mean, se, Z95 * se, int(x.size))


# --- experiments -----------------------------------------------------------

class UsageError(ValueError):
    """Bad subcommand or parameter; maps to exit code 2."""


@dataclass
class ExperimentSpec:
    name: str
    params: dict = field(default_factory=dict)
    reps: int = 1
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if self.reps < 1:
            raise UsageError("--reps must be at least 1")

    @property
    def out_path(self):
        return self.out or f"{self.name}.csv"

    @property
    def summary_path(self):
        root, ext = os.path.splitext(self.out_path)
        return f"{root}_summary{ext or '.csv'}"


def _get(params: Mapping, key, default, kind=float):
    value = params.get(key, default)
    if value is None:
        return None
    try:
        if kind is list:
            if isinstance(value, (list, tuple)):
                return [float(v) for v in value]
            return [float(v) for v in str(value).split(",") if v.strip()]
        if kind is bool:
            return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
        if kind is int:
            return int(float(value)) if not isinstance(value, int) else value
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid value for {key}: {value!r}") from exc


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def write_csv(path, rows):
    if not rows:
        raise ValueError("nothing to write")
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def summary_rows(config, metrics: Mapping[str, list]):
    out = []
    for metric, samples in metrics.items():
        s = summarize(samples)
        out.append({"config": config, "metric": metric, **s.as_row()})
    return out


def _drive_blackwell(p, reps, seed):
    from .blackwell import PayoffTensor, ScriptedAdversary, run_game
    from .formats import load_tensor, parse_target
    from .regret import rock_paper_scissors

    path = p.get("tensor")
    tensor = load_tensor(path) if path else PayoffTensor(-rock_paper_scissors().r)
    target = parse_target(str(p.get("target") or ("value" if tensor.n == 1 else "orthant")), tensor)
    kind = str(p.get("adversary", "random"))
    adversary = ScriptedAdversary(kind, action=_get(p, "action", 0, int), utility=tensor.R.sum(axis=2))
    T = _get(p, "T", 1000, int)
    sq = np.zeros(T)
    finals = []
    for k in range(reps):
        run = run_game(tensor, target, adversary, T, seed=child_seed(seed, k))
        sq += run.distances ** 2
        finals.append(run.distances[-1])
    t = np.arange(1, T + 1)
    est = np.sqrt(sq / reps)
    bound = tensor.bound(t)
    rows = [{"t": int(a), "distance_estimate": b, "bound": c} for a, b, c in zip(t, est, bound)]
    summary = summary_rows(f"T={T}", {"final_distance": finals})
    return rows, summary


def _drive_regret(p, reps, seed):
    from .formats import load_matrix
    from .regret import ScalarGame, expected_regret, hg_play, regret, regret_bound, rock_paper_scissors, scripted

    path = p.get("rewards")
    game = ScalarGame(load_matrix(path)) if path else rock_paper_scissors()
    adversary = scripted(str(p.get("adversary", "random")), game, action=_get(p, "action", 0, int))
    T = _get(p, "T", 10_000, int)
    bound = float(regret_bound(game, T))
    rows, realized, expected = [], [], []
    for k in range(reps):
        tr = hg_play(game, adversary, T, seed=child_seed(seed, k))
        rg, erg = regret(tr), expected_regret(tr)
        rows.append({"rep": k, "T": T, "realized_regret": rg, "expected_regret": erg, "bound": bound * T})
        realized.append(rg / T)
        expected.append(erg / T)
    summary = summary_rows(f"T={T}", {"realized_regret_per_round": realized, "expected_regret_per_round": expected})
    return rows, summary


def _arrival_model(text, q):
    from .switched import IID

    kind, _, arg = text.partition(":")
    if kind != "bernoulli":
        raise UsageError(f"unknown arrival spec {text!r}; use bernoulli:r1,r2,...")
    rates = [float(v) for v in arg.split(",")] if arg else [0.4] * q
    if len(rates) != q:
        raise UsageError("one arrival rate per queue is required")
    return IID.bernoulli(rates)


def _drive_maxweight(p, reps, seed):
    from .formats import load_schedules
    from .switched import crossbar, monotone_closure, simulate

    path = p.get("schedules")
    S = monotone_closure(load_schedules(path)) if path else crossbar()
    arrivals = _arrival_model(str(p.get("arrivals", "bernoulli")), S.q)
    policy = str(p.get("policy", "mw"))
    mu = _get(p, "mu", None, list)
    T = _get(p, "T", 10_000, int)
    every = max(_get(p, "every", 1, int), 1)
    rows = []
    metrics = {"time_average_total": [], "c": [], "bound": []}
    for k in range(reps):
        tr = simulate(S, arrivals, policy, T, seed=child_seed(seed, k), mu=mu)
        drift = tr.drift
        for t in range(0, T + 1, every):
            row = {"rep": k, "t": t}
            row.update({f"Q_{j + 1}": int(tr.Q[t, j]) for j in range(S.q)})
            row["total"] = int(tr.total[t])
            row["drift"] = float(drift[t]) if t < T else ""
            rows.append(row)
        metrics["time_average_total"].append(tr.time_average_total)
        metrics["c"].append(tr.c)
        metrics["bound"].append(tr.bound)
    return rows, summary_rows(f"policy={policy}", metrics)


def _drive_lindley(p, reps, seed):
    from .lindley import ServiceModeModel, run_queue_with_perceptron, waiting_gap_check

    model = ServiceModeModel(
        tau_star=_get(p, "tau_star", 0.5), tau_0=_get(p, "tau_0", 1.0), p=_get(p, "p", 2, int),
        D=_get(p, "D", 1.0), w_norm=_get(p, "w_norm", 2.0),
    )
    T = _get(p, "T", 1000, int)
    rate = _get(p, "rate", 1.2)
    alpha = _get(p, "alpha", 1.0)
    rows = []
    metrics = {"mistakes": [], "max_gap": [], "bound": []}
    for k in range(reps):
        rep = run_queue_with_perceptron(model, rate, T, seed=child_seed(seed, k), alpha=alpha)
        tr = rep.trace
        ok, _, _ = waiting_gap_check(tr)
        if not (ok.all() and rep.gap_ok and rep.equal_after):
            raise AssertionError(f"waiting-time guarantee violated in replication {k}")
        mistakes = np.concatenate([[0], np.cumsum(tr.modes != tr.labels)])
        regret = tr.regret_path()
        for t in range(T + 1):
            rows.append({"rep": k, "t": t, "W_pi": tr.W_pi[t], "W_star": tr.W_star[t],
                         "gap": tr.gap[t], "regret": regret[t], "mistakes": int(mistakes[t])})
        metrics["mistakes"].append(rep.mistakes)
        metrics["max_gap"].append(float(tr.gap.max()))
        metrics["bound"].append(rep.bound)
    return rows, summary_rows(f"T={T}", metrics)


def _drive_admission(p, reps, seed):
    from dataclasses import replace

    from .admission import AdmissionConfig, greedy_empty_run, min_feasible_threshold, threshold_run, windowed_run

    prob = _get(p, "p", 0.3)
    lams = _get(p, "lam", None, list)
    loads = _get(p, "load", None, list)
    if lams is None:
        lams = [prob + x * (1 - prob) for x in (loads or [0.9])]
    policies = str(p.get("policy", "all"))
    policies = ["threshold", "greedy", "windowed"] if policies == "all" else policies.split(",")
    horizon = _get(p, "horizon", 1e5)
    L_text = p.get("L")
    a = _get(p, "a", 2.0)
    rows, summary = [], []
    for li, lam in enumerate(lams):
        base = AdmissionConfig(lam, prob, horizon=horizon, slack=_get(p, "slack", 0.05))
        L = math.inf if str(L_text).lower() in ("inf", "infinity") else (
            float(L_text) if L_text is not None else a * math.log(1 / (1 - base.load)) if base.load < 1 else math.inf)
        k = _get(p, "k", None, int)
        k = min_feasible_threshold(lam, prob) if k is None else k
        for policy in policies:
            eq, div = [], []
            for r in range(reps):
                cfg = replace(base, seed=child_seed(seed, li * 100_000 + r), L=L)
                if policy == "threshold":
                    tr = threshold_run(cfg, k)
                elif policy == "greedy":
                    tr = greedy_empty_run(cfg)
                elif policy == "windowed":
                    tr = windowed_run(cfg)
                else:
                    raise UsageError(f"unknown admission policy {policy!r}")
                rows.append({"lambda": lam, "policy": policy, "rep": r, "EQ": tr.EQ,
                             "EQ_ci": tr.EQ_ci, "diversion_rate": tr.diversion_rate})
                eq.append(tr.EQ)
                div.append(tr.diversion_rate)
            summary += summary_rows(f"lambda={lam!r};policy={policy}", {"EQ": eq, "diversion_rate": div})
    return rows, summary


def _drive_balance(p, reps, seed):
    from .balance import ClusterConfig, regime_params, simulate_cluster

    ns = [int(v) for v in _get(p, "n", [100], list)]
    lam = _get(p, "lam", 0.7)
    regime = p.get("regime")
    horizon = _get(p, "horizon", 1000.0)
    rows, summary = [], []
    for i, n in enumerate(ns):
        if regime:
            r, c = regime_params(str(regime), n, lam, p.get("arm", "above"))
        else:
            r, c = _get(p, "r", 1.0), _get(p, "c", 2, int)
        means, hits = [], []
        for k in range(reps):
            st = simulate_cluster(ClusterConfig(n, lam, r, c, horizon, child_seed(seed, 1000 * i + k)))
            rows.append({"n": n, "r": r, "c": c, "rep": k, "mean_delay": st.mean, "ci": st.ci,
                         "mem_hit_fraction": st.mem_hit_fraction})
            means.append(st.mean)
            hits.append(st.mem_hit_fraction)
        summary += summary_rows(f"n={n};r={r!r};c={c}", {"mean_delay": means, "mem_hit_fraction": hits})
    return rows, summary


DRIVERS: dict[str, Callable] = {
    "blackwell": _drive_blackwell,
    "regret": _drive_regret,
    "maxweight": _drive_maxweight,
    "lindley": _drive_lindley,
    "admission": _drive_admission,
    "balance": _drive_balance,
}


def run_experiment(spec: ExperimentSpec):
    """Run all replications of ``spec`` and write the per-run and summary CSVs.

    Returns the two output paths.
    """
    driver = DRIVERS.get(spec.name)
    if driver is None:
        raise UsageError(f"unknown subcommand {spec.name!r}; choose from {sorted(DRIVERS)}")
    rows, summary = driver(dict(spec.params), spec.reps, spec.seed)
    write_csv(spec.out_path, rows)
    write_csv(spec.summary_path, summary)
    return spec.out_path, spec.summary_path
