"""Dynamic information-bottleneck training over per-layer representations.

For every layer Z_l two critics are trained, T_xz on (X, Z_l) and T_zy on
(Z_l, Y), under the loss

    L(t) = -(alpha(t) * I_xz / d_eff(Z)^2 + (1 - alpha(t)) * I_zy / d_eff(Y)^2)

where I_xz and I_zy are DV bounds and alpha(t) decays linearly from 1.
Each epoch ends with full-set DV estimates that are recorded, normalized,
together with alpha and the loss.

Two modes:

* ``frozen`` (default): Z_l is fixed; only the critics learn.
* ``encoder``: Z = Z_l @ W_hat + sigma * noise, where W_hat is a trainable
  linear map rescaled to a fixed Frobenius norm (a fixed signal power budget),
  so the representation itself can move under the loss.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .effdim import SpectralMeasure, d_eff_of_data
from .errors import DegenerateSpectrumError, DivergenceError, IBFlowError
from .mi_estimator import DVCritic, normalized_mi
from .nn import AdamState, adam_update
from .reps import RepresentationSet, gen_regression_task
from .scheduler import AlphaSchedule, alpha_at

log = logging.getLogger(__name__)


@dataclass
class FlowNIBConfig:
    epochs: int = 20
    steps_per_epoch: int = 50
    batch_size: int = 256
    hidden: int = 128
    lr: float = 1e-3
    ema_rate: float = 0.99
    schedule: AlphaSchedule = field(default_factory=AlphaSchedule)
    measure: str = "l2"
    seed: int = 0
    mode: str = "frozen"
    decoupled: bool = False
    encoder_noise: float = 1.0
    encoder_lr: float = 1e-2
    activation: str = "softplus"
    critic_warmup: int = 0
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.schedule, dict):
            self.schedule = AlphaSchedule(**self.schedule)
        if self.epochs < 1:
            raise IBFlowError(f"epochs must be >= 1, got {self.epochs}")
        if self.steps_per_epoch < 1:
            raise IBFlowError(f"steps_per_epoch must be >= 1, got {self.steps_per_epoch}")
        if self.batch_size < 2:
            raise IBFlowError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.mode not in ("frozen", "encoder"):
            raise IBFlowError(f"mode must be 'frozen' or 'encoder', got {self.mode!r}")
        if self.critic_warmup < 0:
            raise IBFlowError(f"critic_warmup must be >= 0, got {self.critic_warmup}")
        SpectralMeasure(self.measure)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TraceRecord:
    epoch: int
    alpha: float
    i_xz_raw: float
    i_zy_raw: float
    i_xz_norm: float
    i_zy_norm: float
    d_eff_z: float
    d_eff_y: float
    loss: float


@dataclass
class LayerTrace:
    layer: int
    records: list = field(default_factory=list)

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def flownib_loss(i_xz_norm: float, i_zy_norm: float, alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise IBFlowError(f"alpha must lie in [0, 1], got {alpha}")
    return -(alpha * i_xz_norm + (1.0 - alpha) * i_zy_norm)


def check_compression_bound(rec: TraceRecord) -> float:
    """Slack RHS - I_xz of I_xz <= d_eff(Z)^2 / alpha * (-L + (1 - alpha) * I_zy_norm).

    Substituting the loss gives slack = 2 (1 - alpha) d_eff(Z)^2 I_zy_norm / alpha,
    which is non-negative whenever I_zy_norm is.
    """
    if rec.alpha <= 0.0:
        raise IBFlowError("bound undefined at alpha=0")
    rhs = rec.d_eff_z ** 2 / rec.alpha * (-rec.loss + (1.0 - rec.alpha) * rec.i_zy_norm)
    return rhs - rec.i_xz_raw


def _effective_dim(data: np.ndarray, measure: str, what: str) -> float:
    try:
        value = d_eff_of_data(data, measure)
    except DegenerateSpectrumError as exc:
        raise DegenerateSpectrumError(f"{what}: {exc}") from None
    # d_eff >= 1 holds exactly; guard the divisor against round-off
    return max(value, 1.0)


class _LinearEncoder:
    """Z = Z_in @ W_hat + noise, with ||W_hat||_F^2 = d_out held fixed."""

    def __init__(self, d_in: int, lr: float, noise: float):
        self.W = np.eye(d_in)
        self.adam = AdamState(lr=lr)
        self.noise = noise
        self.scale = np.sqrt(d_in)

    def w_hat(self) -> np.ndarray:
        return self.scale * self.W / np.linalg.norm(self.W)

    def __call__(self, z_in: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        z = z_in @ self.w_hat()
        if self.noise > 0:
            z = z + self.noise * rng.standard_normal(z.shape)
        return z

    def descend(self, z_in: np.ndarray, d_loss_dz: np.ndarray):
        g_hat = z_in.T @ d_loss_dz
        norm = np.linalg.norm(self.W)
        # gradient through the fixed-norm reparameterization
        g = self.scale / norm * (g_hat - (np.sum(self.W * g_hat) / norm ** 2) * self.W)
        adam_update({"W": self.W}, {"W": g}, self.adam)


def _run_layer(ell: int, reps: RepresentationSet, cfg: FlowNIBConfig, seed_seq: np.random.SeedSequence,
               d_eff_y: float) -> LayerTrace:
    rng = np.random.default_rng(seed_seq)
    x, y, z_in = reps.x, reps.y, reps.layers[ell]
    n = reps.n
    bs = min(cfg.batch_size, n)
    seeds = rng.integers(0, 2**63, size=2)
    t_xz = DVCritic(x.shape[1], z_in.shape[1], cfg.hidden, cfg.lr, cfg.ema_rate, seeds[0], cfg.activation)
    t_zy = DVCritic(z_in.shape[1], y.shape[1], cfg.hidden, cfg.lr, cfg.ema_rate, seeds[1], cfg.activation)
    encoder = _LinearEncoder(z_in.shape[1], cfg.encoder_lr, cfg.encoder_noise) if cfg.mode == "encoder" else None
    trace = LayerTrace(ell)
    d_eff_z = None
    step = 0
    order, cursor = rng.permutation(n), 0

    def next_batch():
        nonlocal order, cursor
        if cursor + bs > n:
            order, cursor = rng.permutation(n), 0
        cursor += bs
        return order[cursor - bs:cursor]

    # critics fitted to the initial representation before the schedule starts
    for _ in range(cfg.critic_warmup):
        idx = next_batch()
        zb = encoder(z_in[idx], rng) if encoder is not None else z_in[idx]
        t_xz.step(x[idx], zb, rng.permutation(bs))
        t_zy.step(zb, y[idx], rng.permutation(bs))
    for epoch in range(cfg.epochs):
        if encoder is not None or d_eff_z is None:
            z_eval = encoder(z_in, rng) if encoder is not None else z_in
            d_eff_z = _effective_dim(z_eval, cfg.measure, f"layer {ell}")
        for _ in range(cfg.steps_per_epoch):
            t = step if cfg.schedule.per == "step" else epoch
            alpha = alpha_at(cfg.schedule, t)
            w_xz = alpha / d_eff_z ** 2
            w_zy = (1.0 - alpha) / d_eff_y ** 2
            idx = next_batch()
            zb_in = z_in[idx]
            zb = encoder(zb_in, rng) if encoder is not None else zb_in
            perm_xz = rng.permutation(bs)
            perm_zy = rng.permutation(bs)
            crit_w = (1.0, 1.0) if cfg.decoupled else (w_xz, w_zy)
            try:
                if encoder is None:
                    t_xz.step(x[idx], zb, perm_xz, crit_w[0])
                    t_zy.step(zb, y[idx], perm_zy, crit_w[1])
                else:
                    _, _, dz_xz = t_xz.step(x[idx], zb, perm_xz, crit_w[0], input_grad=True)
                    _, dz_zy, _ = t_zy.step(zb, y[idx], perm_zy, crit_w[1], input_grad=True)
                    encoder.descend(zb_in, -(w_xz * dz_xz + w_zy * dz_zy))
            except DivergenceError as exc:
                raise DivergenceError(f"layer {ell}, epoch {epoch}: {exc}") from None
            step += 1
        rec_alpha = alpha_at(cfg.schedule, epoch * cfg.steps_per_epoch if cfg.schedule.per == "step" else epoch)
        z_eval = encoder(z_in, rng) if encoder is not None else z_in
        try:
            i_xz = t_xz.estimate(x, z_eval, rng.permutation(n))
            i_zy = t_zy.estimate(z_eval, y, rng.permutation(n))
        except DivergenceError as exc:
            raise DivergenceError(f"layer {ell}, epoch {epoch}: {exc}") from None
        i_xz_n = normalized_mi(i_xz, d_eff_z)
        i_zy_n = normalized_mi(i_zy, d_eff_y)
        trace.records.append(TraceRecord(
            epoch=epoch, alpha=rec_alpha, i_xz_raw=i_xz, i_zy_raw=i_zy,
            i_xz_norm=i_xz_n, i_zy_norm=i_zy_n, d_eff_z=d_eff_z, d_eff_y=d_eff_y,
            loss=flownib_loss(i_xz_n, i_zy_n, rec_alpha)))
        log.debug("layer %d epoch %d alpha=%.4f I_xz=%.4f I_zy=%.4f", ell, epoch, rec_alpha, i_xz, i_zy)
    return trace


def _worker_count(cfg: FlowNIBConfig) -> int:
    env = os.environ.get("IBFLOW_THREADS")
    cap = int(env) if env else cfg.workers
    return max(1, cap)


def run_flownib(reps: RepresentationSet, cfg: FlowNIBConfig | None = None) -> list[LayerTrace]:
    """Train critic pairs for every layer; one LayerTrace per layer.

    Each layer draws from its own child seed, so results do not depend on
    the number of workers.
    """
    cfg = cfg or FlowNIBConfig()
    d_eff_y = _effective_dim(reps.y, cfg.measure, "target y")
    children = np.random.SeedSequence(cfg.seed).spawn(len(reps.layers))
    workers = min(_worker_count(cfg), len(reps.layers))
    if workers == 1:
        return [_run_layer(ell, reps, cfg, children[ell], d_eff_y) for ell in range(len(reps.layers))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_layer, ell, reps, cfg, children[ell], d_eff_y)
                   for ell in range(len(reps.layers))]
        return [f.result() for f in futures]


def delta_ablation(reps: RepresentationSet, cfg: FlowNIBConfig, deltas) -> list[tuple[float, list[LayerTrace]]]:
    """One run per decrement, all sharing cfg.seed, as (delta, traces) pairs in input order."""
    deltas = [float(d) for d in deltas]
    if len(deltas) < 2:
        raise IBFlowError("delta ablation needs at least two deltas")
    return [(d, run_flownib(reps, replace(cfg, schedule=replace(cfg.schedule, delta=d)))) for d in deltas]


@dataclass
class YDimTaskConfig:
    n: int = 4000
    d_x: int = 4
    n_layers: int = 2
    noise: float = 0.1
    target: str = "tanh"  # or "identity" (requires d_y == d_x)
    seed: int = 0


def ydim_task(gen: YDimTaskConfig, d_y: int) -> RepresentationSet:
    reps = gen_regression_task(gen.n, gen.d_x, d_y, gen.n_layers, gen.seed, gen.noise)
    if gen.target == "identity":
        if d_y != gen.d_x:
            raise IBFlowError("identity target requires d_y == d_x")
        reps = RepresentationSet(reps.x, reps.layers, reps.x.copy())
    elif gen.target != "tanh":
        raise IBFlowError(f"unknown target {gen.target!r}")
    return reps


def ydim_ablation(gen: YDimTaskConfig, cfg: FlowNIBConfig, y_dims) -> list[dict]:
    """Run FlowNIB on synthetic regression tasks of varying output width.

    Returns one row per (d_y, layer) with the final-epoch MI values and
    effective dimensions.
    """
    y_dims = list(y_dims)
    if len(y_dims) < 3:
        raise IBFlowError("output-dimension ablation needs at least three widths")
    if gen.n_layers < 1:
        raise IBFlowError("output-dimension ablation needs at least one layer")
    rows = []
    for d_y in y_dims:
        traces = run_flownib(ydim_task(gen, d_y), cfg)
        for tr in traces:
            last = tr.records[-1]
            rows.append({
                "d_y": d_y, "layer": tr.layer,
                "i_xz_raw": last.i_xz_raw, "i_zy_raw": last.i_zy_raw,
                "i_xz_norm": last.i_xz_norm, "i_zy_norm": last.i_zy_norm,
                "d_eff_z": last.d_eff_z, "d_eff_y": last.d_eff_y,
            })
    return rows


def trace_rows(traces: list[LayerTrace]) -> list[dict]:
    """Flat rows, one per (layer, epoch), with every LayerTrace record field."""
    return [{"layer": tr.layer, **asdict(rec)} for tr in traces for rec in tr.records]


def write_traces_jsonl(traces: list[LayerTrace], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in trace_rows(traces):
            fh.write(json.dumps(row) + "\n")


def read_traces_jsonl(path) -> list[LayerTrace]:
    by_layer: dict[int, LayerTrace] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                layer = int(row.pop("layer"))
                rec = TraceRecord(**row)
            except (ValueError, KeyError, TypeError) as exc:
                raise IBFlowError(f"{path}:{lineno}: malformed trace record ({exc})") from None
            by_layer.setdefault(layer, LayerTrace(layer)).records.append(rec)
    for tr in by_layer.values():
        tr.records.sort(key=lambda r: r.epoch)
    return [by_layer[k] for k in sorted(by_layer)]
