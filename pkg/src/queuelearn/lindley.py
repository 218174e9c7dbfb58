"""Single-server queue with two service modes and a perceptron mode selector.

``a_t`` is the gap between the arrivals of customers ``t`` and ``t+1``.  Picking the right mode costs
``tau_star`` of service, the wrong one ``tau_0``.  Waiting times follow the
Lindley recursion, so any regret in service time transfers to waiting time
only since the last moment the queue was empty.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import DimensionMismatch, NonSeparable

GRID = 1.0 / 1024  # time grid; dyadic times keep every sum exact in floating point


# --- Lindley recursion -----------------------------------------------------

def lindley_step(W, tau, a):
    return max(0.0, W + tau - a)


def lindley(tau, a, W0=0.0):
    """Waiting times ``W_0 .. W_T`` for service times ``tau`` and inter-arrival gaps ``a``."""
    tau = np.broadcast_to(np.asarray(tau, dtype=float), np.shape(a))
    a = np.asarray(a, dtype=float)
    W = np.empty(a.size + 1)
    W[0] = W0
    for t in range(a.size):
        W[t + 1] = lindley_step(W[t], tau[t], a[t])
    return W


def last_empty(W):
    """``t0[t]`` = last index ``s <= t`` with ``W[s] == 0`` (-1 if none)."""
    idx = np.where(np.asarray(W) == 0, np.arange(len(W)), -1)
    return np.maximum.accumulate(idx)


# --- service-mode model ----------------------------------------------------

@dataclass(frozen=True)
class ServiceModeModel:
    """Contexts in the ``D``-ball labelled by a separator ``w_star`` with margin at least 1."""

    tau_star: float
    tau_0: float
    p: int = 2
    D: float = 1.0
    w_norm: float = 2.0

    def __post_init__(self):
        if not self.tau_0 > self.tau_star > 0:
            raise ValueError("service times need tau_0 > tau_star > 0")
        if self.p < 1 or self.D <= 0 or self.w_norm <= 0:
            raise ValueError("p, D and |w_star| must be positive")
        if self.D * self.w_norm <= 1:
            raise ValueError("margin 1 is unreachable unless D * |w_star| > 1")

    @property
    def mistake_bound(self):
        return self.D ** 2 * self.w_norm ** 2

    def draw_w_star(self, rng):
        v = rng.normal(size=self.p)
        return self.w_norm * v / np.linalg.norm(v)

    def contexts(self, rng, w_star, T):
        """``T`` labelled contexts, rejection-sampled so ``y <w_star, x> >= 1``."""
        out = np.empty((0, self.p))
        while out.shape[0] < T:
            n = max(2 * (T - out.shape[0]), 64)
            v = rng.normal(size=(n, self.p))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            x = v * self.D * rng.random(n)[:, None] ** (1.0 / self.p)
            keep = np.abs(x @ w_star) >= 1.0
            out = np.vstack([out, x[keep]])
        x = out[:T]
        y = np.where(x @ w_star >= 0, 1, -1)
        return x, y

    def stream(self, rng, T):
        w_star = self.draw_w_star(rng)
        x, y = self.contexts(rng, w_star, T)
        return w_star, x, y

    def service(self, modes, y):
        return np.where(np.asarray(modes) == np.asarray(y), self.tau_star, self.tau_0)


def interarrivals(rng, rate, T, grid=GRID):
    """Exponential gaps rounded up to the time grid (never zero)."""
    return np.maximum(np.ceil(rng.exponential(1.0 / rate, size=T) / grid), 1.0) * grid


# --- traces ------------------------------------------------------------------

@dataclass(eq=False)
class WaitTrace:
    """Coupled waiting times of the policy queue and the oracle queue."""

    a: np.ndarray            # inter-arrival gaps a_0..a_{T-1}
    modes: np.ndarray        # chosen mode per customer
    tau_pi: np.ndarray       # realized service times
    tau_star: float
    W_pi: np.ndarray         # W_0..W_T
    W_star: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.t0 = last_empty(self.W_pi)

    @property
    def T(self):
        return self.a.size

    @property
    def gap(self):
        return self.W_pi - self.W_star

    def regret_path(self):
        """``Rg(t)`` for t = 0..T (cumulative extra service)."""
        return np.concatenate([[0.0], np.cumsum(self.tau_pi - self.tau_star)])


def wait_trace(a, tau_pi, tau_star, modes=None, labels=None) -> WaitTrace:
    a = np.asarray(a, dtype=float)
    tau_pi = np.asarray(tau_pi, dtype=float)
    if a.shape != tau_pi.shape:
        raise DimensionMismatch("one service time per inter-arrival gap is required")
    modes = np.ones(a.size, dtype=int) if modes is None else np.asarray(modes)
    return WaitTrace(a, modes, tau_pi, float(tau_star), lindley(tau_pi, a), lindley(tau_star, a), labels)


def service_regret(trace: WaitTrace, T=None) -> float:
    T = trace.T if T is None else T
    if T > trace.T:
        raise ValueError("T exceeds the trace length")
    return float(np.sum(trace.tau_pi[:T] - trace.tau_star))


def waiting_gap_check(trace: WaitTrace, atol=0.0):
    """Per-index verdicts of ``W^pi_{t+1} - W^*_{t+1} <= sum_{s=t0}^{t} (tau^pi_s - tau^*)``.

    Also returns the right-hand sides and the alternative
    ``Rg(t) - Rg(t - t0)`` reading for comparison.
    """
    Rg = trace.regret_path()
    t = np.arange(trace.T)
    t0 = trace.t0[:-1]
    rhs = Rg[t + 1] - Rg[t0]
    lhs = trace.gap[1:]
    # the alternative reading indexes regret by elapsed time since emptying
    alt = Rg[t] - Rg[np.maximum(t - t0, 0)]
    return lhs <= rhs + atol, rhs, alt


# --- hinge loss and the perceptron ------------------------------------------

def hinge_loss(w, x, y):
    return max(1.0 - y * float(np.dot(w, x)), 0.0)


def hinge_grad(w, x, y):
    return -y * np.asarray(x, dtype=float) if y * float(np.dot(w, x)) < 1 else np.zeros(len(x))


def classify(w, x):
    """Mode +1 when ``<w, x> >= 0``, else -1."""
    return 1 if float(np.dot(w, x)) >= 0 else -1


def zero_one_loss(w, x, y):
    return float(classify(w, x) != y)


@dataclass(frozen=True)
class PerceptronState:
    w: np.ndarray
    alpha: float = 1.0
    mistake_count: int = 0
    margin_update_count: int = 0
    margin: float = 1.0

    @classmethod
    def initial(cls, p, alpha=1.0, margin=1.0):
        if alpha <= 0:
            raise ValueError("learning rate must be positive")
        return cls(np.zeros(p), float(alpha), 0, 0, float(margin))


def perceptron_update(s: PerceptronState, x, y) -> PerceptronState:
    """Add ``alpha * y * x`` whenever ``y <w, x> < margin``; count mistakes and updates."""
    x = np.asarray(x, dtype=float)
    if x.shape != s.w.shape:
        raise DimensionMismatch("context dimension differs from the weight vector")
    mistake = classify(s.w, x) != y
    if y * float(s.w @ x) < s.margin:
        return PerceptronState(
            s.w + s.alpha * y * x, s.alpha, s.mistake_count + mistake, s.margin_update_count + 1, s.margin
        )
    return PerceptronState(s.w, s.alpha, s.mistake_count + mistake, s.margin_update_count, s.margin)


@dataclass(eq=False)
class PerceptronRun:
    modes: np.ndarray          # prediction made before each update
    mistakes: np.ndarray       # boolean per round
    updated: np.ndarray        # boolean per round
    weights: np.ndarray        # w_0 .. w_T
    final: PerceptronState


def run_perceptron(x, y, alpha=1.0, margin=1.0) -> PerceptronRun:
    x = np.asarray(x, dtype=float)
    T, p = x.shape
    s = PerceptronState.initial(p, alpha, margin)
    modes = np.empty(T, dtype=int)
    updated = np.zeros(T, dtype=bool)
    W = np.empty((T + 1, p))
    W[0] = s.w
    for t in range(T):
        modes[t] = classify(s.w, x[t])
        before = s.margin_update_count
        s = perceptron_update(s, x[t], y[t])
        updated[t] = s.margin_update_count > before
        W[t + 1] = s.w
    return PerceptronRun(modes, modes != np.asarray(y), updated, W, s)


@dataclass(frozen=True)
class MistakeReport:
    mistakes: int
    bound: float
    updates: int

    @property
    def ok(self):
        return self.mistakes <= self.bound


def check_separable(x, y, w_star, D, tol=1e-12):
    x = np.asarray(x, dtype=float)
    margins = np.asarray(y) * (x @ np.asarray(w_star))
    if np.any(margins < 1 - tol):
        raise NonSeparable(f"margin condition fails at {int(np.sum(margins < 1 - tol))} samples")
    if np.any(np.linalg.norm(x, axis=1) > D * (1 + tol)):
        raise NonSeparable("contexts exceed the norm bound D")


def mistake_bound_check(x, y, w_star, D, alpha=1.0, margin=1.0) -> MistakeReport:
    """Run the perceptron once over the stream and compare mistakes with ``D^2 |w_star|^2``."""
    check_separable(x, y, w_star, D)
    run = run_perceptron(x, y, alpha, margin)
    bound = D ** 2 * float(np.dot(w_star, w_star))
    return MistakeReport(int(run.mistakes.sum()), bound, int(run.updated.sum()))


# --- online convex optimization --------------------------------------------

def ogd_trajectory(x, y, alphas, w1=None):
    """Online gradient descent on hinge losses: ``w_{t+1} = w_t - alpha_t g_t``.

    Returns ``(W, grads)`` with ``W`` holding ``w_1 .. w_{T+1}``.
    """
    x = np.asarray(x, dtype=float)
    T, p = x.shape
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (T,))
    if np.any(alphas <= 0):
        raise ValueError("step sizes must be positive")
    W = np.empty((T + 1, p))
    W[0] = 0.0 if w1 is None else w1
    G = np.empty((T, p))
    for t in range(T):
        G[t] = hinge_grad(W[t], x[t], y[t])
        W[t + 1] = W[t] - alphas[t] * G[t]
    return W, G


@dataclass(frozen=True)
class OCOBound:
    lhs: float          # sum l_t(w_t) - sum l_t(w)
    rhs: float          # bound obtained by telescoping the gradient step
    rhs_displayed: float  # the same bound written with 1/alpha_{t+1} differences and unsquared first term

    @property
    def slack(self):
        return self.rhs - self.lhs

    @property
    def slack_displayed(self):
        return self.rhs_displayed - self.lhs


def oco_bound_check(x, y, W, alphas, w) -> OCOBound:
    """Both sides of the OGD regret bound against comparator ``w``.

    ``rhs = sum_t |w_t - w|^2 (1/(2 alpha_t) - 1/(2 alpha_{t-1})) + sum_t alpha_t/2 |g_t|^2``
    with ``1/alpha_0 = 0``; this is what the step-by-step expansion of
    ``|w_{t+1} - w|^2`` yields for any positive step sizes.
    """
    x = np.asarray(x, dtype=float)
    T = x.shape[0]
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (T,))
    w = np.asarray(w, dtype=float)
    y = np.asarray(y)
    margins_t = y * np.einsum("tp,tp->t", W[:T], x)
    losses_t = np.maximum(1 - margins_t, 0.0)
    losses_w = np.maximum(1 - y * (x @ w), 0.0)
    grads = np.where((margins_t < 1)[:, None], -y[:, None] * x, 0.0)
    gsq = (grads ** 2).sum(axis=1)
    dist_sq = ((W[:T] - w) ** 2).sum(axis=1)
    inv = 1.0 / alphas
    inv_prev = np.concatenate([[0.0], inv[:-1]])
    rhs = float(np.sum(dist_sq * (inv - inv_prev) / 2) + np.sum(alphas * gsq / 2))
    inv_next = np.concatenate([inv[1:], [inv[-1]]])
    displayed = float(
        np.sqrt(dist_sq[0]) * inv[0] + np.sum(dist_sq / 2 * (inv - inv_next)) + np.sum(alphas * gsq / 2)
    )
    return OCOBound(float(losses_t.sum() - losses_w.sum()), rhs, displayed)


# --- the coupled queue ------------------------------------------------------

@dataclass(eq=False)
class QueueReport:
    trace: WaitTrace
    mistakes: int
    bound: float             # D^2 |w_star|^2 (tau_0 - tau_star)
    bound_unscaled: float    # D^2 |w_star|^2
    t_prime: int             # first emptying of the policy queue after the last mistake
    gap_ok: bool
    equal_after: bool


def run_queue_with_perceptron(model: ServiceModeModel, rate, T, seed=0, alpha=1.0, w_star=None):
    """Serve ``T`` customers with perceptron-chosen modes next to the oracle queue.

    Both queues see the same inter-arrival gaps (mean ``1/rate``).
    """
    rng = np.random.default_rng(seed)
    w_star = model.draw_w_star(rng) if w_star is None else np.asarray(w_star, dtype=float)
    x, y = model.contexts(rng, w_star, T)
    a = interarrivals(rng, rate, T)
    return queue_report(model, x, y, a, alpha)


def queue_report(model: ServiceModeModel, x, y, a, alpha=1.0, w_star_norm=None) -> QueueReport:
    run = run_perceptron(x, y, alpha)
    tau_pi = model.service(run.modes, y)
    trace = wait_trace(a, tau_pi, model.tau_star, run.modes, np.asarray(y))
    norm = model.w_norm if w_star_norm is None else w_star_norm
    unscaled = model.D ** 2 * norm ** 2
    bound = unscaled * (model.tau_0 - model.tau_star)
    mistakes = np.flatnonzero(run.mistakes)
    start = 0 if mistakes.size == 0 else mistakes[-1] + 1
    zeros = np.flatnonzero(trace.W_pi[start:] == 0)
    t_prime = int(start + zeros[0]) if zeros.size else trace.T + 1
    gap_ok = bool(np.all(trace.gap <= bound))
    equal_after = bool(np.array_equal(trace.W_pi[t_prime:], trace.W_star[t_prime:]))
    return QueueReport(trace, int(mistakes.size), bound, unscaled, t_prime, gap_ok, equal_after)


# --- estimator --------------------------------------------------------------

class MarginPerceptron(ClassifierMixin, BaseEstimator):
    """Online perceptron that updates whenever the signed margin is below ``margin``.

    With ``margin=1`` each update is a hinge-loss gradient step of size
    ``alpha``; ``margin=0`` gives the classic mistake-driven rule.  Samples
    are visited once, in order, by :meth:`fit`.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    n_mistakes_ : int
        Rounds whose prediction (made before updating) was wrong.
    n_updates_ : int
    """

    def __init__(self, alpha=1.0, margin=1.0):
        self.alpha = alpha
        self.margin = margin

    def _signs(self, y):
        return np.where(y == self.classes_[1], 1, -1)

    def partial_fit(self, X, y, classes=None):
        X, y = check_X_y(X, y)
        if not hasattr(self, "classes_"):
            labels = unique_labels(y) if classes is None else np.asarray(classes)
            if labels.size != 2:
                raise ValueError("MarginPerceptron needs exactly two classes")
            self.classes_ = np.sort(labels)
            self.n_features_in_ = X.shape[1]
            self.coef_ = np.zeros(X.shape[1])
            self.n_mistakes_ = 0
            self.n_updates_ = 0
        elif X.shape[1] != self.n_features_in_:
            raise ValueError("feature count changed between calls")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        s = PerceptronState(self.coef_, float(self.alpha), self.n_mistakes_, self.n_updates_, float(self.margin))
        for xt, yt in zip(X, self._signs(y)):
            s = perceptron_update(s, xt, int(yt))
        self.coef_ = s.w
        self.n_mistakes_ = s.mistake_count
        self.n_updates_ = s.margin_update_count
        return self

    def fit(self, X, y):
        for attr in ("classes_", "coef_"):
            if hasattr(self, attr):
                delattr(self, attr)
        return self.partial_fit(X, y)

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, self.classes_[1], self.classes_[0])
