"""Donsker-Varadhan mutual information estimation with neural critics.

The DV bound for a critic T is

    I(A; B) >= E_{p(a,b)}[T] - log E_{p(a)p(b)}[exp T],

with product-of-marginals samples drawn by permuting the rows of B. Critics
are trained by gradient ascent on the bound; the gradient of the log-mean-exp
term uses an exponential moving average of its denominator (the MINE bias
correction), while every reported value is the plain plug-in bound.
Values are in nats.
"""

from __future__ import annotations

import math

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DivergenceError, IBFlowError
from .linalg import as_sample_matrix
from .nn import (AdamState, MLPCritic, adam_step, backward_cached, critic_forward, critic_init,
                 forward_cached)

SCORE_CLIP = 50.0


@dataclass
class MIPairBatch:
    """Row-aligned joint samples of two variables."""

    a: np.ndarray
    b: np.ndarray
    true_mi: float | None = None  # known ground truth for synthetic data

    def __post_init__(self):
        self.a = as_sample_matrix(self.a, "a")
        self.b = as_sample_matrix(self.b, "b")
        if self.a.shape[0] != self.b.shape[0]:
            raise IBFlowError(f"row mismatch: a has {self.a.shape[0]} rows, b has {self.b.shape[0]}")
        if self.a.shape[0] < 2:
            raise IBFlowError("an MI pair batch needs at least 2 rows")

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class DVEstimate:
    value_nats: float
    n_joint: int
    n_marginal: int


def _log_mean_exp(s: np.ndarray) -> float:
    top = s.max()
    return float(top + np.log(np.mean(np.exp(s - top))))


def dv_lower_bound(scores_joint, scores_marginal) -> float:
    """mean(joint) - log mean exp(marginal), max-shifted for stability."""
    sj = np.asarray(scores_joint, dtype=np.float64).ravel()
    sm = np.asarray(scores_marginal, dtype=np.float64).ravel()
    if sj.size == 0 or sm.size == 0:
        raise IBFlowError("DV bound needs non-empty joint and marginal scores")
    if not (np.all(np.isfinite(sj)) and np.all(np.isfinite(sm))):
        raise DivergenceError("diverged: non-finite critic scores")
    return float(sj.mean()) - _log_mean_exp(np.clip(sm, -SCORE_CLIP, SCORE_CLIP))


def shuffle_marginals(batch: MIPairBatch, seed) -> MIPairBatch:
    rng = np.random.default_rng(seed)
    return MIPairBatch(batch.a, batch.b[rng.permutation(batch.n)], batch.true_mi)


@dataclass
class MINEConfig:
    hidden: int = 128
    lr: float = 1e-3
    steps: int = 2000
    batch_size: int = 256
    ema_rate: float = 0.99
    seed: int = 0
    activation: str = "softplus"

    def to_dict(self) -> dict:
        return asdict(self)


class DVCritic:
    """A pair critic, its Adam state and the EMA of the marginal denominator.

    One instance is owned by exactly one training loop.
    """

    def __init__(self, d_a: int, d_b: int, hidden: int = 128, lr: float = 1e-3,
                 ema_rate: float = 0.99, seed=0, activation: str = "softplus"):
        self.d_a = d_a
        self.d_b = d_b
        self.critic: MLPCritic = critic_init(d_a + d_b, hidden, seed, activation)
        self.adam = AdamState(lr=lr)
        self.ema_rate = ema_rate
        self.ema: float | None = None

    def scores(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return critic_forward(self.critic, np.hstack([a, b]))

    def estimate(self, a: np.ndarray, b: np.ndarray, perm: np.ndarray) -> float:
        """Plug-in DV bound with marginal pairs (a, b[perm])."""
        return dv_lower_bound(self.scores(a, b), self.scores(a, b[perm]))

    def step(self, a: np.ndarray, b: np.ndarray, perm: np.ndarray, weight: float = 1.0,
             input_grad: bool = False):
        """One gradient-ascent step on ``weight * DV(a, b)``.

        Returns the plug-in DV value of the batch. With ``input_grad`` it also
        returns the gradients of the (unweighted) DV value w.r.t. `a` and `b`,
        taken before the parameter update.
        """
        n = a.shape[0]
        u = np.vstack([np.hstack([a, b]), np.hstack([a, b[perm]])])
        s, cache = forward_cached(self.critic, u)
        sj, sm = s[:n], s[n:]
        value = dv_lower_bound(sj, sm)
        e = np.exp(np.clip(sm, -SCORE_CLIP, SCORE_CLIP))
        batch_mean = float(e.mean())
        if not np.isfinite(batch_mean):
            raise DivergenceError("diverged: marginal term overflowed")
        if self.ema is None:
            self.ema = batch_mean
        else:
            self.ema = self.ema_rate * self.ema + (1.0 - self.ema_rate) * batch_mean
        # d(-DV)/d score with the EMA denominator; clipped scores pass no gradient
        up = np.empty(2 * n)
        up[:n] = -1.0 / n
        up[n:] = e / (n * self.ema) * (np.abs(sm) < SCORE_CLIP)
        if input_grad:
            grads, du = backward_cached(self.critic, u, cache, up, input_grad=True)
        else:
            grads = backward_cached(self.critic, u, cache, up)
        if weight != 1.0:
            for g in grads.values():
                g *= weight
        adam_step(self.critic, grads, self.adam)
        if not input_grad:
            return value
        du = -du
        da = du[:n, : self.d_a] + du[n:, : self.d_a]
        db = du[:n, self.d_a:].copy()
        np.add.at(db, perm, du[n:, self.d_a:])
        return value, da, db


def _batches(rng: np.random.Generator, n: int, batch_size: int):
    """Endless stream of index batches, one fresh permutation per data pass."""
    bs = min(batch_size, n)
    while True:
        perm = rng.permutation(n)
        for start in range(0, n - bs + 1, bs):
            yield perm[start:start + bs]


def train_mi_critic(batch: MIPairBatch, config: MINEConfig | None = None):
    """Train a critic on the DV bound and estimate I(a; b) over the full data.

    Returns ``(DVEstimate, trace)`` where `trace` holds the per-step
    mini-batch DV values.
    """
    cfg = config or MINEConfig()
    if cfg.steps < 1:
        raise IBFlowError("steps must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    init_seed, data_seed = rng.integers(0, 2**63, size=2)
    data_rng = np.random.default_rng(data_seed)
    dv = DVCritic(batch.a.shape[1], batch.b.shape[1], cfg.hidden, cfg.lr, cfg.ema_rate,
                  init_seed, cfg.activation)
    trace = np.empty(cfg.steps)
    stream = _batches(data_rng, batch.n, cfg.batch_size)
    for t in range(cfg.steps):
        idx = next(stream)
        perm = data_rng.permutation(idx.size)
        trace[t] = dv.step(batch.a[idx], batch.b[idx], perm)
        if not np.isfinite(trace[t]):
            raise DivergenceError(f"diverged: non-finite DV estimate at step {t}")
    value = dv.estimate(batch.a, batch.b, data_rng.permutation(batch.n))
    return DVEstimate(value, batch.n, batch.n), trace


# ---------------------------------------------------------------------------
# exact discrete oracles
# ---------------------------------------------------------------------------


def as_discrete_joint(table) -> np.ndarray:
    j = np.asarray(table, dtype=np.float64)
    if j.ndim != 2:
        raise IBFlowError(f"joint table must be 2-D, got shape {j.shape}")
    if np.any(j < 0) or not np.all(np.isfinite(j)):
        raise IBFlowError("joint table has negative or non-finite entries")
    if abs(j.sum() - 1.0) > 1e-12:
        raise IBFlowError(f"joint table sums to {j.sum()!r}, not 1")
    return j


def exact_mi_discrete(table) -> float:
    """sum p(a,b) log[p(a,b) / (p(a) p(b))] by full enumeration.

    MI is non-negative, so round-off below zero is clamped; a variable with a
    single outcome of positive probability gives exactly 0.
    """
    j = as_discrete_joint(table)
    j = j[j.sum(axis=1) > 0][:, j.sum(axis=0) > 0]
    if min(j.shape) <= 1:
        return 0.0
    pa = [math.fsum(row) for row in j]
    pb = [math.fsum(col) for col in j.T]
    terms = []
    for r in range(j.shape[0]):
        for c in range(j.shape[1]):
            if j[r, c] > 0:
                terms.append(j[r, c] * np.log(j[r, c] / (pa[r] * pb[c])))
    # fsum is exactly rounded, so relabeling or padding outcomes cannot change the result
    total = math.fsum(terms)
    return max(float(total), 0.0)


def dv_with_optimal_critic(table) -> float:
    """DV bound evaluated exactly over the table with T* = log p(a,b)/(p(a)p(b)).

    Cells with p(a,b) = 0 have T* = -inf; they carry no joint mass and
    exp(T*) = 0 in the marginal term.
    """
    j = as_discrete_joint(table)
    pa = j.sum(axis=1)
    pb = j.sum(axis=0)
    if np.any(pa <= 0) or np.any(pb <= 0):
        raise IBFlowError("optimal critic undefined: a marginal has zero probability")
    prod = np.outer(pa, pb)
    support = j > 0
    t_star = np.full(j.shape, -np.inf)
    t_star[support] = np.log(j[support]) - np.log(prod[support])
    joint_term = float((j[support] * t_star[support]).sum())
    marg_term = float((prod[support] * np.exp(t_star[support])).sum())
    return joint_term - float(np.log(marg_term))


def sample_discrete_joint(table, n: int, seed) -> MIPairBatch:
    """Draw n pairs from a discrete joint, each side one-hot encoded."""
    j = as_discrete_joint(table)
    rng = np.random.default_rng(seed)
    flat = rng.choice(j.size, size=n, p=j.ravel() / j.sum())
    ra, rb = np.divmod(flat, j.shape[1])
    return MIPairBatch(np.eye(j.shape[0])[ra], np.eye(j.shape[1])[rb])


def normalized_mi(dv: float, d_eff_value: float) -> float:
    """Dimension-normalized MI: dv / d_eff^2."""
    if not d_eff_value >= 1.0:
        raise IBFlowError(f"effective dimension must be >= 1, got {d_eff_value}")
    return dv / (d_eff_value * d_eff_value)
