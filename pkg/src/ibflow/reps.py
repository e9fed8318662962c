"""Synthetic data with known MI, toy sequence encoders, and representation dumps.

Dump format: a JSON manifest

    {"x": "x.csv", "y": "y.csv", "layers": ["layer_0.csv", ...],
     "y_kind": "regression" | "classification"}

with paths relative to the manifest. Each CSV has a header line followed by
one sample per row of comma-separated decimal floats. A classification `y`
is a single integer label column and is one-hot expanded on load.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DumpFormatError, IBFlowError
from .linalg import as_sample_matrix, center, sym_eigvals
from .effdim import d_eff_of_data
from .mi_estimator import MINEConfig, MIPairBatch, train_mi_critic


def gaussian_mi(rho: float, d: int = 1) -> float:
    """MI in nats of d independent bivariate-normal pairs with correlation rho."""
    return -0.5 * d * float(np.log1p(-rho * rho))


def gen_gaussian_pair(n: int, d: int, rho: float, seed) -> MIPairBatch:
    """Coordinate-wise correlated standard normals; `true_mi` is set on the batch."""
    if not abs(rho) < 1.0:
        raise IBFlowError(f"|rho| must be < 1, got {rho}")
    if d < 1:
        raise IBFlowError(f"d must be >= 1, got {d}")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, d))
    b = rho * a + np.sqrt(1.0 - rho * rho) * rng.standard_normal((n, d))
    return MIPairBatch(a, b, gaussian_mi(rho, d))


# ---------------------------------------------------------------------------
# sequence task and frozen encoders
# ---------------------------------------------------------------------------


@dataclass
class SequenceDataset:
    tokens: np.ndarray  # (n, length) ints in [0, vocab)
    labels: np.ndarray  # (n, 1) floats
    vocab: int

    @property
    def length(self) -> int:
        return self.tokens.shape[1]

    def one_hot(self) -> np.ndarray:
        """(n, length * vocab) one-hot encoding of the tokens."""
        n, length = self.tokens.shape
        out = np.zeros((n, length * self.vocab))
        cols = self.tokens + self.vocab * np.arange(length)[None, :]
        out[np.arange(n)[:, None], cols] = 1.0
        return out


def gen_sequence_task(n: int, length: int, vocab: int, seed) -> SequenceDataset:
    """Uniform i.i.d. tokens; y = 1 iff the first and last tokens share a vocab half."""
    if length < 2 or vocab < 2:
        raise IBFlowError(f"need length >= 2 and vocab >= 2, got {length}, {vocab}")
    rng = np.random.default_rng(seed)
    tokens = rng.integers(0, vocab, size=(n, length))
    half = vocab // 2
    same = (tokens[:, 0] < half) == (tokens[:, -1] < half)
    return SequenceDataset(tokens, same.astype(np.float64)[:, None], vocab)


@dataclass
class EncoderSpec:
    """Frozen random sequence encoder.

    Each position k (counted from the start of the reading direction) has its
    own embedding table; a representation is tanh(A @ mean_k E[k][token_k]).
    The forward encoder reads x_1..x_t*, the backward one reads x_len..x_t*.
    """

    vocab: int
    length: int
    embed_dim: int = 8
    rep_dim: int = 4
    seed: int = 0
    embeddings: np.ndarray = field(init=False, repr=False)
    projection: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        self.embeddings = rng.standard_normal((self.length, self.vocab, self.embed_dim))
        self.projection = rng.standard_normal((self.rep_dim, self.embed_dim)) / np.sqrt(self.embed_dim)


def _pool(tokens: np.ndarray, spec: EncoderSpec) -> np.ndarray:
    """tanh(A @ mean_k E[k][tokens[:, k]]) for tokens already in reading order."""
    steps = tokens.shape[1]
    emb = spec.embeddings[np.arange(steps)[None, :], tokens]  # (n, steps, embed)
    return np.tanh(emb.mean(axis=1) @ spec.projection.T)


def _check_pair(ds: SequenceDataset, spec: EncoderSpec):
    if ds.length != spec.length or ds.vocab != spec.vocab:
        raise IBFlowError(
            f"encoder built for length={spec.length}, vocab={spec.vocab}; "
            f"dataset has length={ds.length}, vocab={ds.vocab}")


def encode_unidir(ds: SequenceDataset, spec: EncoderSpec, t_star: int | None = None) -> np.ndarray:
    """Forward representation from the prefix x_1..x_t* (default t* = length)."""
    _check_pair(ds, spec)
    t = ds.length if t_star is None else t_star
    return _pool(ds.tokens[:, :t], spec)


def encode_backward(ds: SequenceDataset, spec: EncoderSpec, t_star: int = 1) -> np.ndarray:
    """Backward representation from the suffix x_t*..x_len, read right to left."""
    _check_pair(ds, spec)
    return _pool(ds.tokens[:, t_star - 1:][:, ::-1], spec)


def encode_bidir(ds: SequenceDataset, spec: EncoderSpec) -> np.ndarray:
    """Concatenation (forward, backward); 2 * rep_dim columns."""
    return np.hstack([encode_unidir(ds, spec), encode_backward(ds, spec)])


def cross_covariance(z1, z2) -> np.ndarray:
    """Population cross-covariance Cov(z1, z2), shape (d1, d2)."""
    z1 = as_sample_matrix(z1, "z1")
    z2 = as_sample_matrix(z2, "z2")
    if z1.shape[0] != z2.shape[0]:
        raise IBFlowError("cross-covariance needs row-aligned inputs")
    return center(z1).T @ center(z2) / z1.shape[0]


def singular_values(m) -> np.ndarray:
    """Descending singular values via the eigenvalues of m^T m."""
    m = np.asarray(m, dtype=np.float64)
    gram = m.T @ m if m.shape[0] >= m.shape[1] else m @ m.T
    return np.sqrt(np.clip(sym_eigvals(0.5 * (gram + gram.T)), 0.0, None))


def cross_cov_nonsingular(z_back, z_fwd, tol: float = 1e-6) -> bool:
    """Whether Cov(z_back, z_fwd) is square with smallest singular value > tol."""
    c = cross_covariance(z_back, z_fwd)
    if c.shape[0] != c.shape[1]:
        return False
    return bool(singular_values(c)[-1] > tol)


def repr_diff_stats(z1, z2) -> dict:
    """Empirical terms of E|D|^2 = trCov1 + trCov2 - 2 trCov12 + |E D|^2, D = z1 - z2."""
    z1 = as_sample_matrix(z1, "z1")
    z2 = as_sample_matrix(z2, "z2")
    if z1.shape != z2.shape:
        raise IBFlowError(f"shape mismatch: {z1.shape} vs {z2.shape}")
    n = z1.shape[0]
    c1, c2 = center(z1), center(z2)
    diff = z1 - z2
    out = {
        "mean_sq_diff": float((diff * diff).sum() / n),
        "tr_cov1": float((c1 * c1).sum() / n),
        "tr_cov2": float((c2 * c2).sum() / n),
        "tr_crosscov": float((c1 * c2).sum() / n),
        "mean_diff_norm_sq": float((diff.mean(axis=0) ** 2).sum()),
    }
    rhs = out["tr_cov1"] + out["tr_cov2"] - 2.0 * out["tr_crosscov"] + out["mean_diff_norm_sq"]
    out["identity_residual"] = abs(out["mean_sq_diff"] - rhs)
    return out


# ---------------------------------------------------------------------------
# layered synthetic benchmarks
# ---------------------------------------------------------------------------


@dataclass
class RepresentationSet:
    x: np.ndarray
    layers: list
    y: np.ndarray
    y_kind: str = "regression"

    def __post_init__(self):
        self.x = as_sample_matrix(self.x, "x")
        self.y = as_sample_matrix(self.y, "y")
        if not self.layers:
            raise IBFlowError("a representation set needs at least one layer")
        self.layers = [as_sample_matrix(z, f"layer {i}") for i, z in enumerate(self.layers)]
        n = self.x.shape[0]
        for name, m in [("y", self.y)] + [(f"layer {i}", z) for i, z in enumerate(self.layers)]:
            if m.shape[0] != n:
                raise IBFlowError(f"{name} has {m.shape[0]} rows, x has {n}")
        if self.y_kind not in ("regression", "classification"):
            raise IBFlowError(f"unknown y_kind {self.y_kind!r}")

    @property
    def n(self) -> int:
        return self.x.shape[0]


def gen_layered_gaussian(n: int = 4000, d_x: int = 4, n_layers: int = 2, d_y: int = 1,
                         rho: float = 0.9, layer_noise: float = 0.5, seed=0) -> RepresentationSet:
    """Gaussian input, increasingly noisy linear layers, and a correlated target.

    Layer l is X @ R_l + (l+1) * layer_noise * noise for random orthogonal R_l,
    and y_j = rho * x_j + sqrt(1 - rho^2) * noise for the first d_y
    coordinates (d_y <= d_x).
    """
    if d_y > d_x:
        raise IBFlowError(f"d_y={d_y} exceeds d_x={d_x}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d_x))
    layers = []
    for ell in range(n_layers):
        q, _ = np.linalg.qr(rng.standard_normal((d_x, d_x)))
        layers.append(x @ q + (ell + 1) * layer_noise * rng.standard_normal((n, d_x)))
    y = rho * x[:, :d_y] + np.sqrt(1.0 - rho * rho) * rng.standard_normal((n, d_y))
    return RepresentationSet(x, layers, y)


def gen_regression_task(n: int, d_x: int, d_y: int, n_layers: int = 3, seed=0,
                        noise: float = 0.1) -> RepresentationSet:
    """Regression task with fixed input width and variable output width.

    Y = tanh(X W) + noise with W of shape (d_x, d_y). Layers are frozen random
    tanh features of X of width d_x, each layer feeding the next.
    """
    if d_y < 1 or d_x < 1:
        raise IBFlowError("d_x and d_y must be >= 1")
    # separate streams: X and the layers do not change with d_y
    rng_x, rng_y = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    x = rng_x.standard_normal((n, d_x))
    layers, h = [], x
    for _ in range(n_layers):
        h = np.tanh(h @ (rng_x.standard_normal((d_x, d_x)) / np.sqrt(d_x)))
        layers.append(h)
    w = rng_y.standard_normal((d_x, d_y)) / np.sqrt(d_x)
    y = np.tanh(x @ w) + noise * rng_y.standard_normal((n, d_y))
    return RepresentationSet(x, layers, y)


# ---------------------------------------------------------------------------
# dump ingestion
# ---------------------------------------------------------------------------


def _read_csv(path: Path) -> np.ndarray:
    if not path.is_file():
        raise DumpFormatError(f"missing file: {path}")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DumpFormatError(f"{path}: empty file, expected a header line")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DumpFormatError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise DumpFormatError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if not rows:
        raise DumpFormatError(f"{path}: no data rows")
    data = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise DumpFormatError(f"{path}: non-finite value")
    return data


def _one_hot_labels(labels: np.ndarray, path: Path) -> np.ndarray:
    if labels.shape[1] != 1:
        raise DumpFormatError(f"{path}: classification y must be a single column")
    col = labels[:, 0]
    if np.any(col != np.round(col)) or np.any(col < 0):
        raise DumpFormatError(f"{path}: classification labels must be non-negative integers")
    ints = col.astype(int)
    return np.eye(ints.max() + 1)[ints]


def load_representation_dump(manifest_path) -> RepresentationSet:
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DumpFormatError(f"missing file: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DumpFormatError(f"{manifest_path}: invalid JSON ({exc})") from None
    for key in ("x", "y", "layers"):
        if key not in manifest:
            raise DumpFormatError(f"{manifest_path}: manifest lacks key {key!r}")
    if not manifest["layers"]:
        raise DumpFormatError(f"{manifest_path}: manifest lists no layers")
    base = manifest_path.parent
    y_kind = manifest.get("y_kind", "regression")
    x_path = base / manifest["x"]
    x = _read_csv(x_path)
    loaded = []
    for rel in manifest["layers"]:
        p = base / rel
        z = _read_csv(p)
        if z.shape[0] != x.shape[0]:
            raise DumpFormatError(f"{p}: {z.shape[0]} rows, but {x_path} has {x.shape[0]}")
        loaded.append(z)
    y_path = base / manifest["y"]
    y = _read_csv(y_path)
    if y.shape[0] != x.shape[0]:
        raise DumpFormatError(f"{y_path}: {y.shape[0]} rows, but {x_path} has {x.shape[0]}")
    if y_kind == "classification":
        y = _one_hot_labels(y, y_path)
    elif y_kind != "regression":
        raise DumpFormatError(f"{manifest_path}: unknown y_kind {y_kind!r}")
    return RepresentationSet(x, loaded, y, y_kind)


def _write_csv(path: Path, data: np.ndarray, prefix: str):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"{prefix}{j}" for j in range(data.shape[1])])
        for row in data:
            # repr round-trips float64 exactly
            writer.writerow([repr(float(v)) for v in row])


def write_representation_dump(reps: RepresentationSet, directory) -> Path:
    """Write `reps` as CSVs plus manifest.json; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_csv(directory / "x.csv", reps.x, "x")
    names = []
    for i, z in enumerate(reps.layers):
        names.append(f"layer_{i}.csv")
        _write_csv(directory / names[-1], z, "z")
    y = reps.y
    if reps.y_kind == "classification":
        y = y.argmax(axis=1)[:, None].astype(np.float64)
    _write_csv(directory / "y.csv", y, "y")
    manifest = {"x": "x.csv", "y": "y.csv", "layers": names, "y_kind": reps.y_kind}
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# forward vs bidirectional comparisons
# ---------------------------------------------------------------------------


@dataclass
class BidirConfig:
    n: int = 10000
    length: int = 4
    vocab: int = 2
    embed_dim: int = 8
    rep_dim: int = 4
    steps: int = 2000
    batch_size: int = 256
    hidden: int = 128
    lr: float = 1e-3
    tolerance: float = 0.05
    measure: str = "l2"


def spectral_trial(seed, cfg: BidirConfig | None = None) -> dict:
    """d_eff of forward vs concatenated representations for one random draw."""
    cfg = cfg or BidirConfig()
    ds = gen_sequence_task(cfg.n, cfg.length, cfg.vocab, seed)
    spec = EncoderSpec(cfg.vocab, cfg.length, cfg.embed_dim, cfg.rep_dim, seed)
    z_fwd = encode_unidir(ds, spec)
    z_back = encode_backward(ds, spec)
    return {
        "seed": seed,
        "d_eff_fwd": d_eff_of_data(z_fwd, cfg.measure),
        "d_eff_bidir": d_eff_of_data(np.hstack([z_fwd, z_back]), cfg.measure),
        "nonsingular": cross_cov_nonsingular(z_back, z_fwd),
    }


def bidir_trial(seed: int, cfg: BidirConfig | None = None) -> dict:
    """Estimate I(X;Z) and I(Z;Y) for forward and bidirectional encodings.

    All four estimators share the seed, so they see the same mini-batch
    order; X is fed to the critics one-hot encoded.
    """
    cfg = cfg or BidirConfig()
    ds = gen_sequence_task(cfg.n, cfg.length, cfg.vocab, seed)
    spec = EncoderSpec(cfg.vocab, cfg.length, cfg.embed_dim, cfg.rep_dim, seed)
    x = ds.one_hot()
    z_fwd, z_bi = encode_unidir(ds, spec), encode_bidir(ds, spec)
    mine = MINEConfig(hidden=cfg.hidden, lr=cfg.lr, steps=cfg.steps, batch_size=cfg.batch_size, seed=seed)
    out = {"seed": seed}
    for tag, z in (("fwd", z_fwd), ("bidir", z_bi)):
        out[f"i_xz_{tag}"] = train_mi_critic(MIPairBatch(x, z), mine)[0].value_nats
        out[f"i_zy_{tag}"] = train_mi_critic(MIPairBatch(z, ds.labels), mine)[0].value_nats
    spectral = spectral_trial(seed, cfg)
    out["d_eff_fwd"] = spectral["d_eff_fwd"]
    out["d_eff_bidir"] = spectral["d_eff_bidir"]
    tol = cfg.tolerance
    out["xz_ok"] = out["i_xz_bidir"] >= out["i_xz_fwd"] - tol
    out["zy_ok"] = out["i_zy_bidir"] >= out["i_zy_fwd"] - tol
    out["passed"] = out["xz_ok"] and out["zy_ok"]
    return out
