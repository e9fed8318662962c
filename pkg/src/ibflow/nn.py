"""Two-layer scalar critic with hand-written backprop, and an Adam optimizer.

score(u) = W2^T act(W1^T u + b1) + b2, where u is a row of the input matrix
(for a pair critic, the concatenation of the two variables' rows).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, IBFlowError

PARAM_NAMES = ("W1", "b1", "W2", "b2")


def _softplus(x):
    # max(x, 0) + log(1 + exp(-|x|)); log1p buys nothing since exp(-|x|) <= 1
    out = np.abs(x)
    np.negative(out, out=out)
    np.exp(out, out=out)
    out += 1.0
    np.log(out, out=out)
    out += np.maximum(x, 0.0)
    return out


def _sigmoid(x):
    out = np.multiply(x, 0.5)
    np.tanh(out, out=out)
    out += 1.0
    out *= 0.5
    return out


ACTIVATIONS = {
    "softplus": (_softplus, _sigmoid),
    "relu": (lambda x: np.maximum(x, 0.0), lambda x: (x > 0).astype(np.float64)),
}


@dataclass
class MLPCritic:
    W1: np.ndarray  # (d_in, h)
    b1: np.ndarray  # (h,)
    W2: np.ndarray  # (h, 1)
    b2: np.ndarray  # (1,)
    activation: str = "softplus"

    @property
    def d_in(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def n_params(self) -> int:
        return sum(p.size for p in self.params().values())

    def copy(self) -> "MLPCritic":
        return MLPCritic(*(getattr(self, n).copy() for n in PARAM_NAMES), activation=self.activation)


def critic_init(d_in: int, h: int, seed, activation: str = "softplus") -> MLPCritic:
    """He-style init: weights ~ N(0, 2 / fan_in), biases zero.

    `seed` may be an int or a numpy Generator.
    """
    if d_in < 1 or h < 1:
        raise IBFlowError(f"critic dimensions must be >= 1, got d_in={d_in}, h={h}")
    if activation not in ACTIVATIONS:
        raise IBFlowError(f"unknown activation {activation!r}")
    rng = np.random.default_rng(seed)
    W1 = rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, h))
    W2 = rng.normal(0.0, np.sqrt(2.0 / h), size=(h, 1))
    return MLPCritic(W1, np.zeros(h), W2, np.zeros(1), activation)


def _check_input(c: MLPCritic, pairs) -> np.ndarray:
    u = np.asarray(pairs, dtype=np.float64)
    if u.ndim == 1:
        u = u[None, :]
    if u.ndim != 2 or u.shape[1] != c.d_in:
        raise IBFlowError(f"critic expects {c.d_in} input columns, got shape {u.shape}")
    return u


def forward_cached(c: MLPCritic, u: np.ndarray):
    """Scores plus the (pre-activation, hidden) pair needed by `backward_cached`."""
    act, _ = ACTIVATIONS[c.activation]
    pre = u @ c.W1
    pre += c.b1
    hid = act(pre)
    return (hid @ c.W2)[:, 0] + c.b2[0], (pre, hid)


def backward_cached(c: MLPCritic, u: np.ndarray, cache, g: np.ndarray, input_grad: bool = False):
    pre, hid = cache
    _, dact = ACTIVATIONS[c.activation]
    grads = {
        "W2": hid.T @ g[:, None],
        "b2": np.array([g.sum()]),
    }
    d_pre = dact(pre)
    d_pre *= g[:, None] * c.W2[:, 0][None, :]
    grads["W1"] = u.T @ d_pre
    grads["b1"] = d_pre.sum(axis=0)
    if input_grad:
        return grads, d_pre @ c.W1.T
    return grads


def critic_forward(c: MLPCritic, pairs) -> np.ndarray:
    u = _check_input(c, pairs)
    return forward_cached(c, u)[0]


def critic_backward(c: MLPCritic, pairs, upstream, input_grad: bool = False):
    """Gradients of sum_i upstream[i] * score_i w.r.t. every parameter.

    Returns a dict keyed like `MLPCritic.params()`. With ``input_grad=True``
    also returns the (n, d_in) gradient w.r.t. the input rows.
    """
    u = _check_input(c, pairs)
    g = np.asarray(upstream, dtype=np.float64).ravel()
    if g.shape[0] != u.shape[0]:
        raise IBFlowError(f"upstream has {g.shape[0]} entries for {u.shape[0]} rows")
    _, cache = forward_cached(c, u)
    return backward_cached(c, u, cache, g, input_grad)


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_update(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam descent step, applied in place to `params`."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"diverged: non-finite gradient for {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise IBFlowError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)


def adam_step(c: MLPCritic, grads: dict[str, np.ndarray], state: AdamState):
    """Adam descent step on a critic; mutates both and returns them."""
    adam_update(c.params(), grads, state)
    return c, state
