"""Vector-payoff repeated games and Blackwell's approachability policy.

Player actions index the first axis of the payoff tensor and adversary
actions the second; each pair ``(i, j)`` yields an ``n``-vector.  The player
steers the running average payoff toward a target set by solving, every
round, the scalar game obtained by projecting payoffs on the normal of the
supporting half-space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .exceptions import DimensionMismatch, NotApproachable
from .geometry import TargetSet, project, project_kernel, supporting_halfspace, INSIDE_TOL
from .matrix_game import simplex_game, solve_matrix_game

APPROACH_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class PayoffTensor:
    """``R[i, j]`` is the payoff vector when the player plays ``i`` and the adversary ``j``."""

    R: np.ndarray
    r_max: float = None

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        if R.ndim == 2:
            R = R[:, :, None]
        if R.ndim != 3:
            raise DimensionMismatch("payoff tensor must have shape (p, q, n)")
        if not np.all(np.isfinite(R)):
            raise ValueError("payoff tensor has non-finite entries")
        norm_max = float(np.linalg.norm(R, axis=2).max())
        r_max = norm_max if self.r_max is None else float(self.r_max)
        if r_max < norm_max * (1 - 1e-12):
            raise ValueError(f"r_max={r_max} is below the largest payoff norm {norm_max}")
        object.__setattr__(self, "R", np.ascontiguousarray(R))
        object.__setattr__(self, "r_max", r_max)

    @property
    def p(self):
        return self.R.shape[0]

    @property
    def q(self):
        return self.R.shape[1]

    @property
    def n(self):
        return self.R.shape[2]

    def bound(self, t):
        """Approachability rate ``r_max * sqrt(2 / t)``."""
        return self.r_max * np.sqrt(2.0 / np.asarray(t, dtype=float))


class MixedAction(np.ndarray):
    """A probability vector (nonnegative, sums to one)."""

    def __new__(cls, weights):
        w = np.array(weights, dtype=float).view(cls)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("mixed action must be a nonempty vector")
        if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-12 * max(1, w.size):
            raise ValueError("mixed action must be a probability distribution")
        return w

    @classmethod
    def pure(cls, index, size):
        w = np.zeros(size)
        w[index] = 1.0
        return cls(w)


@dataclass(frozen=True, eq=False)
class GameState:
    """Rounds played plus the running sum ``Q(0) + sum of payoffs``."""

    t: int
    total: np.ndarray
    q0: np.ndarray

    @classmethod
    def initial(cls, q0):
        q0 = np.asarray(q0, dtype=float)
        return cls(0, q0.copy(), q0)

    @property
    def qbar(self):
        # before the first round the reference point is Q(0) itself
        return self.q0 if self.t == 0 else self.total / self.t


def payoff(tensor: PayoffTensor, d, a):
    """Bilinear payoff ``sum_ij d_i R_ij a_j``."""
    d = np.asarray(d, dtype=float)
    a = np.asarray(a, dtype=float)
    if d.shape != (tensor.p,) or a.shape != (tensor.q,):
        raise DimensionMismatch(
            f"expected mixtures of sizes {tensor.p} and {tensor.q}, got {d.shape} and {a.shape}"
        )
    return np.einsum("i,ijk,j->k", d, tensor.R, a)


def update_average(s: GameState, r) -> GameState:
    r = np.asarray(r, dtype=float)
    if r.shape != s.total.shape:
        raise DimensionMismatch("payoff dimension does not match the game state")
    return GameState(s.t + 1, s.total + r, s.q0)


def scalarize(tensor: PayoffTensor, normal):
    """``M_ij = normal . R_ij``."""
    return tensor.R @ np.asarray(normal, dtype=float)


def check_halfspace_approachable(tensor: PayoffTensor, H) -> bool:
    """True iff some mixed decision keeps every payoff inside ``H``."""
    _, _, value = solve_matrix_game(scalarize(tensor, H.normal))
    return bool(value <= H.offset + APPROACH_TOL)


@njit(cache=True)
def decide_kernel(R, kind, a, b, offset, qbar):
    """Blackwell decision; status 0 = inside target, 1 = ok, 2 = not approachable."""
    p = R.shape[0]
    proj = project_kernel(kind, a, b, offset, qbar)
    diff = qbar - proj
    dist = np.sqrt(np.dot(diff, diff))
    if dist < INSIDE_TOL:
        d = np.zeros(p)
        d[0] = 1.0
        return d, 0, 0.0, 0.0
    unit = diff / dist
    M = np.zeros((p, R.shape[1]))
    for i in range(p):
        for j in range(R.shape[1]):
            M[i, j] = np.dot(unit, R[i, j])
    d, _, value = simplex_game(M)
    v = np.dot(proj, unit)
    status = 1 if value <= v + 1e-8 else 2
    return d, status, value, v


def blackwell_decision(tensor: PayoffTensor, state: GameState, Z: TargetSet) -> MixedAction:
    """Mixed decision whose expected payoff lies in the supporting half-space.

    When the running average is already in ``Z`` the pure action 0 is played.
    Raises :class:`NotApproachable` if the half-space cannot be forced.
    """
    qbar = np.asarray(state.qbar, dtype=float)
    if qbar.size != tensor.n or Z.dim != tensor.n:
        raise DimensionMismatch("game state, tensor and target set dimensions differ")
    kind, a, b, offset = Z.encode()
    d, status, value, v = decide_kernel(tensor.R, kind, a, b, offset, qbar)
    if status == 2:
        raise NotApproachable(value, v)
    d = np.maximum(d, 0.0)
    return MixedAction(d / d.sum())


# --- scripted adversaries -------------------------------------------------

ADVERSARY_KINDS = ("constant", "cyclic", "best_response", "random", "counter_last")


@dataclass(eq=False)
class ScriptedAdversary:
    """Adversary driven by a fixed script.

    ``utility[i, j]`` is what the adversary gains when it plays ``j`` against
    player action ``i``; ``best_response`` answers the player's empirical
    action frequencies and ``counter_last`` the player's previous action.
    """

    kind: str
    action: int = 0
    mixture: np.ndarray | None = None
    utility: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ADVERSARY_KINDS:
            raise ValueError(f"unknown adversary {self.kind!r}; choose from {ADVERSARY_KINDS}")
        if self.kind in ("best_response", "counter_last") and self.utility is None:
            raise ValueError(f"{self.kind} adversary needs a utility matrix")

    @property
    def code(self):
        return ADVERSARY_KINDS.index(self.kind)

    def arrays(self, p, q):
        mix = np.full(q, 1.0 / q) if self.mixture is None else np.asarray(self.mixture, float)
        util = np.zeros((p, q)) if self.utility is None else np.asarray(self.utility, float)
        if mix.shape != (q,) or util.shape != (p, q):
            raise DimensionMismatch("adversary mixture/utility does not match the game")
        return mix, np.ascontiguousarray(util)

    def __call__(self, history: "GameHistory", rng=None):
        p, q = history.p, history.q
        t = history.t
        mix, util = self.arrays(p, q)
        if self.kind == "constant":
            return self.action
        if self.kind == "cyclic":
            return (self.action + t) % q
        if self.kind == "random":
            return MixedAction(mix)
        if self.kind == "best_response":
            freq = np.bincount(history.player_actions[:t], minlength=p).astype(float)
            if t == 0:
                freq[:] = 1.0
            return int(np.argmax(freq @ util))
        last = history.player_actions[t - 1] if t > 0 else 0
        return int(np.argmax(util[last]))


@dataclass
class GameHistory:
    p: int
    q: int
    player_actions: np.ndarray
    adversary_actions: np.ndarray
    t: int = 0


@dataclass(eq=False)
class GameRun:
    """Record of one played game."""

    tensor: PayoffTensor
    distances: np.ndarray          # ||Qbar(t) - P(t)|| for t = 1..T
    player_actions: np.ndarray
    adversary_actions: np.ndarray
    mixtures: np.ndarray           # player mixture used at each round
    final: GameState
    drift_excess: float = field(default=-np.inf)  # max over rounds of n.E[R|F] - v

    @property
    def T(self):
        return self.distances.size


@njit(cache=True)
def _sample(w, u):
    c = 0.0
    for k in range(w.size):
        c += w[k]
        if u < c:
            return k
    for k in range(w.size - 1, -1, -1):
        if w[k] > 0.0:
            return k
    return w.size - 1


@njit(cache=True)
def _play_kernel(R, kind, a, b, offset, q0, adv_code, adv_action, adv_mix, adv_util, u_player, u_adv):
    p, q, n = R.shape
    T = u_player.size
    total = q0.copy()
    qbar = q0.copy()
    dist = np.empty(T)
    pa = np.empty(T, dtype=np.int64)
    aa = np.empty(T, dtype=np.int64)
    mixtures = np.empty((T, p))
    counts = np.zeros(p)
    excess = -np.inf
    status_out = 1
    for t in range(T):
        d, status, value, v = decide_kernel(R, kind, a, b, offset, qbar)
        if status == 2:
            status_out = 2
            return dist[:t], pa[:t], aa[:t], mixtures[:t], total, excess, status_out
        if status == 1 and value - v > excess:
            excess = value - v
        mixtures[t] = d
        i = _sample(d, u_player[t])
        if adv_code == 0:
            j = adv_action
        elif adv_code == 1:
            j = (adv_action + t) % q
        elif adv_code == 3:
            j = _sample(adv_mix, u_adv[t])
        elif adv_code == 2:
            best = -np.inf
            j = 0
            for jj in range(q):
                s = 0.0
                for ii in range(p):
                    s += (counts[ii] if t > 0 else 1.0) * adv_util[ii, jj]
                if s > best:
                    best = s
                    j = jj
        else:
            last = pa[t - 1] if t > 0 else 0
            best = -np.inf
            j = 0
            for jj in range(q):
                if adv_util[last, jj] > best:
                    best = adv_util[last, jj]
                    j = jj
        pa[t] = i
        aa[t] = j
        counts[i] += 1.0
        total += R[i, j]
        qbar = total / (t + 1)
        proj = project_kernel(kind, a, b, offset, qbar)
        diff = qbar - proj
        dist[t] = np.sqrt(np.dot(diff, diff))
    return dist, pa, aa, mixtures, total, excess, status_out


def _uniforms(seed, T):
    rng = np.random.default_rng(seed)
    return rng.random(T), rng.random(T)


def run_game(
    tensor: PayoffTensor,
    Z: TargetSet,
    adversary_rule,
    T: int,
    seed=0,
    player_rule: Callable | None = None,
    q0=None,
    engine: str = "auto",
) -> GameRun:
    """Play ``T`` rounds and record the distance of the running average to ``Z``.

    ``player_rule(tensor, state, Z)`` returns a mixed action and defaults to
    :func:`blackwell_decision`.  ``adversary_rule(history, rng)`` returns a pure
    action index or a :class:`MixedAction`; the player's mixture for the
    current round is never visible to it.  Both sides sample their pure
    action from a shared seeded stream, so a scripted adversary gives the
    same run under the compiled engine and the Python loop.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    q0 = np.zeros(tensor.n) if q0 is None else np.asarray(q0, dtype=float)
    if q0.shape != (tensor.n,):
        raise DimensionMismatch("initial position has the wrong dimension")
    if np.linalg.norm(q0) > tensor.r_max * (1 + 1e-12):
        raise ValueError("initial position must satisfy ||Q(0)|| <= r_max")
    if Z.dim != tensor.n:
        raise DimensionMismatch("target set dimension differs from payoff dimension")
    u_player, u_adv = _uniforms(seed, T)

    compiled = player_rule is None and isinstance(adversary_rule, ScriptedAdversary)
    if engine == "python" or (engine == "auto" and not compiled):
        return _run_python(tensor, Z, adversary_rule, T, player_rule, q0, u_player, u_adv, seed)
    if not compiled:
        raise ValueError("the compiled engine needs the Blackwell player and a scripted adversary")

    kind, a, b, offset = Z.encode()
    mix, util = adversary_rule.arrays(tensor.p, tensor.q)
    dist, pa, aa, mixtures, total, excess, status = _play_kernel(
        tensor.R, kind, a, b, offset, q0, adversary_rule.code, adversary_rule.action,
        mix, util, u_player, u_adv,
    )
    if status == 2:
        qbar = total / max(dist.size, 1) if dist.size else q0
        H = supporting_halfspace(qbar, Z)
        _, _, value = solve_matrix_game(scalarize(tensor, H.normal / np.linalg.norm(H.normal)))
        raise NotApproachable(value, H.offset / np.linalg.norm(H.normal))
    final = GameState(T, total, q0)
    return GameRun(tensor, dist, pa, aa, mixtures, final, excess)


def _run_python(tensor, Z, adversary_rule, T, player_rule, q0, u_player, u_adv, seed):
    player_rule = blackwell_decision if player_rule is None else player_rule
    adv_rng = np.random.default_rng([seed, 1])
    history = GameHistory(tensor.p, tensor.q, np.zeros(T, dtype=np.int64), np.zeros(T, dtype=np.int64))
    mixtures = np.empty((T, tensor.p))
    dist = np.empty(T)
    state = GameState.initial(q0)
    excess = -np.inf
    for t in range(T):
        history.t = t
        d = np.asarray(player_rule(tensor, state, Z), dtype=float)
        H = supporting_halfspace(state.qbar, Z)
        if H is not None:
            unit = H.normal / np.linalg.norm(H.normal)
            worst = np.max(d @ scalarize(tensor, unit))
            excess = max(excess, worst - H.offset / np.linalg.norm(H.normal))
        adv = adversary_rule(history, adv_rng)
        if isinstance(adv, MixedAction) or np.ndim(adv) == 1:
            j = int(_sample(np.asarray(adv, dtype=float), u_adv[t]))
        else:
            j = int(adv)
        i = int(_sample(d, u_player[t]))
        history.player_actions[t] = i
        history.adversary_actions[t] = j
        mixtures[t] = d
        state = update_average(state, tensor.R[i, j])
        dist[t] = project(state.qbar, Z)[1]
    return GameRun(tensor, dist, history.player_actions, history.adversary_actions, mixtures, state, excess)


def distance_profile(tensor, Z, adversary, T, reps, seed=0, q0=None):
    """Monte-Carlo estimate of ``sqrt(E ||Qbar(t) - P(t)||^2)`` for t = 1..T."""
    from .harness import child_seed

    sq = np.zeros(T)
    for k in range(reps):
        run = run_game(tensor, Z, adversary, T, seed=child_seed(seed, k), q0=q0)
        sq += run.distances ** 2
    return np.sqrt(sq / reps)
