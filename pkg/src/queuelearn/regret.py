"""Regret minimization against an arbitrary adversary via approachability.

Component ``k`` of the vector payoff is the reward action ``k`` would have
collected minus the reward actually collected; keeping the running average in
the nonpositive orthant makes the player no worse than any fixed action.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blackwell import PayoffTensor, ScriptedAdversary, run_game
from .geometry import NonpositiveOrthant


@dataclass(frozen=True, eq=False)
class ScalarGame:
    """``r[i, j]`` is the player's reward for action ``i`` against ``j``."""

    r: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 2 or r.size == 0:
            raise ValueError("reward matrix must be a nonempty 2-d array")
        if not np.all(np.isfinite(r)):
            raise ValueError("reward matrix has non-finite entries")
        object.__setattr__(self, "r", r)

    @property
    def p(self):
        return self.r.shape[0]

    @property
    def q(self):
        return self.r.shape[1]


def rock_paper_scissors():
    return ScalarGame([[0, -1, 1], [1, 0, -1], [-1, 1, 0]])


@dataclass(eq=False)
class RegretTrace:
    game: ScalarGame
    player_actions: np.ndarray
    adversary_actions: np.ndarray
    mixtures: np.ndarray
    qbar: np.ndarray               # final running average of the vector payoff
    r_max: float

    @property
    def T(self):
        return self.player_actions.size

    @property
    def rewards(self):
        return self.game.r[self.player_actions, self.adversary_actions]

    def fixed_action_totals(self):
        """Cumulative reward each fixed action would have earned."""
        return self.game.r[:, self.adversary_actions].sum(axis=1)


def hg_payoff_tensor(g: ScalarGame) -> PayoffTensor:
    """``R[i, j, k] = r(k, j) - r(i, j)``; the target is the nonpositive orthant."""
    r = g.r
    R = r.T[None, :, :] - r[:, :, None]
    return PayoffTensor(R)


def hg_play(g: ScalarGame, adversary_rule, T: int, seed=0, engine="auto") -> RegretTrace:
    tensor = hg_payoff_tensor(g)
    run = run_game(tensor, NonpositiveOrthant(g.p), adversary_rule, T, seed=seed, engine=engine)
    return RegretTrace(
        g, run.player_actions, run.adversary_actions, run.mixtures, run.final.qbar, tensor.r_max
    )


def regret(trace: RegretTrace) -> float:
    """Realized regret: best fixed action's total reward minus the collected reward."""
    if trace.T == 0:
        raise ValueError("regret of an empty trace is undefined")
    return float(trace.fixed_action_totals().max() - trace.rewards.sum())


def expected_regret(trace: RegretTrace) -> float:
    """Regret with the player's reward replaced by its conditional mean under the mixture."""
    if trace.T == 0:
        raise ValueError("regret of an empty trace is undefined")
    played = np.einsum("ti,it->", trace.mixtures, trace.game.r[:, trace.adversary_actions])
    return float(trace.fixed_action_totals().max() - played)


def jensen_chain(trace: RegretTrace):
    """Links of the chain bounding per-round regret by the distance to the orthant.

    Returns ``(rg/T, max_i (Qbar_i)+, ||(Qbar)+||, sum_i (Qbar_i)+, sqrt(p) ||(Qbar)+||)``.
    The first three are nondecreasing; the sum is only dominated after the
    ``sqrt(p)`` factor.
    """
    pos = np.maximum(trace.qbar, 0.0)
    norm = float(np.linalg.norm(pos))
    return (
        regret(trace) / trace.T,
        float(pos.max()),
        norm,
        float(pos.sum()),
        float(np.sqrt(trace.game.p) * norm),
    )


def regret_bound(source, T):
    """``r_max sqrt(2/T)`` for a game, a trace, or a bare ``r_max``."""
    if isinstance(source, ScalarGame):
        r_max = hg_payoff_tensor(source).r_max
    elif isinstance(source, RegretTrace):
        r_max = source.r_max
    else:
        r_max = float(source)
    return r_max * np.sqrt(2.0 / T)


def scripted(name: str, g: ScalarGame, action: int = 0, mixture=None) -> ScriptedAdversary:
    """Adversaries that try to hurt the player; their utility is the player's loss."""
    aliases = {"adaptive": "best_response", "adversarial": "counter_last"}
    kind = aliases.get(name, name)
    return ScriptedAdversary(kind, action=action, mixture=mixture, utility=-g.r)


ADVERSARIES = ("constant", "cyclic", "best_response", "random", "counter_last")
