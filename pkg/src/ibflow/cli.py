"""Command-line front end.

Usage:
    ibflow mi-estimate --synthetic gaussian --rho 0.9 --n 20000 --seed 7 --out runs/mi
    ibflow mi-estimate --input dump/manifest.json --pair xz --layer 0 --out runs/mi
    ibflow effdim --input dump/manifest.json --out runs/effdim
    ibflow flownib run --synthetic gaussian --epochs 20 --delta 1e-3 --out runs/flow
    ibflow infoplane export --trace runs/flow/trace.jsonl --offset 0.05 --out runs/plane
    ibflow compare-bidir --seeds 20 --out runs/bidir
    ibflow ablate --param delta --values 1e-1,1e-3,1e-6 --out runs/ablate

Every run writes run.json with the fully resolved arguments; pass it back
with --config to reproduce the run. Exit codes: 0 success, 1 runtime or
numerical failure, 2 usage error. IBFLOW_THREADS caps worker processes.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .effdim import SpectralMeasure, d_eff
from .errors import IBFlowError
from .flownib import (FlowNIBConfig, YDimTaskConfig, delta_ablation, read_traces_jsonl, run_flownib,
                      trace_rows, write_traces_jsonl, ydim_ablation)
from .infoplane import detect_phases, export_plane, mic_summary
from .linalg import pca_spectrum
from .mi_estimator import MINEConfig, MIPairBatch, exact_mi_discrete, sample_discrete_joint, train_mi_critic
from .reps import (BidirConfig, RepresentationSet, bidir_trial, gen_gaussian_pair, gen_layered_gaussian,
                   load_representation_dump, spectral_trial)
from .scheduler import AlphaSchedule

NATS_TO_BITS = 1.0 / math.log(2.0)
# arguments that never influence results and are not echoed into run.json
_NOT_ECHOED = {"config", "func", "parser"}
_COMMANDS = ("mi-estimate", "effdim", "flownib", "infoplane", "compare-bidir", "ablate")


class UsageError(Exception):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_run_json(out: Path, args, command: str):
    _write_json(out / "run.json", {"command": command, "args": _resolved(args), "created": _now()})


def _write_csv(path: Path, rows: list[dict], columns: list[str] | None = None):
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def _workers() -> int:
    env = os.environ.get("IBFLOW_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise UsageError(f"IBFLOW_THREADS must be an integer, got {env!r}") from None


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------------------
# mi-estimate
# ---------------------------------------------------------------------------


def _mi_batch(args) -> MIPairBatch:
    if args.input:
        reps = load_representation_dump(args.input)
        if not 0 <= args.layer < len(reps.layers):
            raise UsageError(f"--layer {args.layer} out of range; dump has {len(reps.layers)} layers")
        z = reps.layers[args.layer]
        return MIPairBatch(reps.x, z) if args.pair == "xz" else MIPairBatch(z, reps.y)
    if args.synthetic == "gaussian":
        if not abs(args.rho) < 1.0:
            raise UsageError(f"--rho must satisfy |rho| < 1, got {args.rho}")
        return gen_gaussian_pair(args.n, args.d, args.rho, args.seed)
    table = np.array(json.loads(args.joint), dtype=float)
    batch = sample_discrete_joint(table, args.n, args.seed)
    batch.true_mi = exact_mi_discrete(table)
    return batch


def cmd_mi_estimate(args) -> int:
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    batch = _mi_batch(args)
    out = _out_dir(args)
    cfg = MINEConfig(hidden=args.hidden, lr=args.lr, steps=args.steps, batch_size=args.batch_size,
                     ema_rate=args.ema_rate, seed=args.seed, activation=args.activation)
    est, trace = train_mi_critic(batch, cfg)
    trace_path = out / "mi_trace.jsonl"
    with open(trace_path, "w", encoding="utf-8") as fh:
        for step, value in enumerate(trace):
            fh.write(json.dumps({"step": step, "dv_nats": float(value)}) + "\n")
    scale = NATS_TO_BITS if args.bits else 1.0
    payload = {
        "estimate_nats": est.value_nats,
        "estimate": est.value_nats * scale,
        "units": "bits" if args.bits else "nats",
        "n_joint": est.n_joint,
        "n_marginal": est.n_marginal,
        "true_mi_nats": batch.true_mi,
        "config": cfg.to_dict(),
        "trace": trace_path.name,
        "timestamp": _now(),
    }
    _write_json(out / "mi.json", payload)
    _write_run_json(out, args, "mi-estimate")
    print(f"I = {payload['estimate']:.4f} {payload['units']}")
    return 0


# ---------------------------------------------------------------------------
# effdim
# ---------------------------------------------------------------------------


def cmd_effdim(args) -> int:
    if not (args.input or args.csv):
        raise UsageError("one of --input or --csv is required")
    if args.input:
        reps = load_representation_dump(args.input)
        named = [("x", reps.x)] + [(f"layer_{i}", z) for i, z in enumerate(reps.layers)] + [("y", reps.y)]
    else:
        from .reps import _read_csv

        named = [(Path(p).stem, _read_csv(Path(p))) for p in args.csv]
    out = _out_dir(args)
    rows = []
    for name, data in named:
        spectrum = pca_spectrum(data)
        row = {"name": name, "n_rows": data.shape[0], "n_cols": data.shape[1]}
        for m in SpectralMeasure:
            row[f"d_eff_{m.value}"] = d_eff(spectrum, m)
        row["d_eff"] = row[f"d_eff_{SpectralMeasure(args.measure).value}"]
        rows.append(row)
    _write_csv(out / "effdim.csv", rows)
    _write_run_json(out, args, "effdim")
    for row in rows:
        print(f"{row['name']}: d_eff = {row['d_eff']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# flownib run / ablate
# ---------------------------------------------------------------------------


def _flownib_config(args) -> FlowNIBConfig:
    schedule = AlphaSchedule(alpha0=args.alpha0, delta=args.delta, per=args.per)
    return FlowNIBConfig(
        epochs=args.epochs, steps_per_epoch=args.steps_per_epoch, batch_size=args.batch_size,
        hidden=args.hidden, lr=args.lr, schedule=schedule, measure=args.measure, seed=args.seed,
        mode=args.mode, decoupled=args.decoupled, encoder_noise=args.encoder_noise,
        encoder_lr=args.encoder_lr, activation=args.activation, critic_warmup=args.critic_warmup,
        workers=_workers())


def _flownib_reps(args) -> RepresentationSet:
    if args.input:
        return load_representation_dump(args.input)
    return gen_layered_gaussian(n=args.n, d_x=args.d_x, n_layers=args.layers, d_y=args.d_y,
                                rho=args.rho, layer_noise=args.layer_noise, seed=args.seed)


def _check_flownib_args(args):
    if not 0.0 <= args.alpha0 <= 1.0:
        raise UsageError("--alpha0 must lie in [0, 1]")
    if args.delta < 0:
        raise UsageError("--delta must be >= 0")
    if args.epochs < 1 or args.steps_per_epoch < 1:
        raise UsageError("--epochs and --steps-per-epoch must be >= 1")
    if args.batch_size < 2:
        raise UsageError("--batch-size must be >= 2")
    if not args.input and not abs(args.rho) < 1.0:
        raise UsageError("--rho must satisfy |rho| < 1")


def cmd_flownib_run(args) -> int:
    _check_flownib_args(args)
    cfg = _flownib_config(args)
    reps = _flownib_reps(args)
    out = _out_dir(args)
    traces = run_flownib(reps, cfg)
    write_traces_jsonl(traces, out / "trace.jsonl")
    _write_run_json(out, args, "flownib run")
    for row in mic_summary(traces):
        print(f"layer {row['layer']}: I_xz_norm={row['i_xz_norm']:.4f} I_zy_norm={row['i_zy_norm']:.4f}")
    return 0


def cmd_ablate(args) -> int:
    if not args.values:
        raise UsageError("--values is required")
    _check_flownib_args(args)
    cfg = _flownib_config(args)
    out = _out_dir(args)
    if args.param == "delta":
        if len(args.values) < 2:
            raise UsageError("--values needs at least two deltas")
        reps = _flownib_reps(args)
        results = delta_ablation(reps, cfg, args.values)
        combined = []
        for k, (delta, traces) in enumerate(results):
            write_traces_jsonl(traces, out / f"trace_{k}_delta_{delta:g}.jsonl")
            combined.extend({"run": k, "delta": delta, **row} for row in trace_rows(traces))
        _write_csv(out / "ablation.csv", combined)
    else:
        dims = [int(v) for v in args.values]
        if len(dims) < 3:
            raise UsageError("--values needs at least three output dimensions")
        gen = YDimTaskConfig(n=args.n, d_x=args.d_x, n_layers=args.layers, seed=args.seed)
        rows = ydim_ablation(gen, cfg, dims)
        _write_csv(out / "ablation.csv", rows)
    _write_run_json(out, args, "ablate")
    print(f"wrote {out / 'ablation.csv'}")
    return 0


# ---------------------------------------------------------------------------
# infoplane export
# ---------------------------------------------------------------------------


def cmd_infoplane(args) -> int:
    if not args.trace:
        raise UsageError("--trace is required")
    trace_path = Path(args.trace)
    if not trace_path.is_file():
        raise IBFlowError(f"missing file: {trace_path}")
    traces = read_traces_jsonl(trace_path)
    out = _out_dir(args)
    points = export_plane(traces, args.offset, args.normalized, phases=True, window=args.window)
    scale = NATS_TO_BITS if args.bits else 1.0
    rows = [{"layer": p.layer, "epoch": p.epoch, "x": p.i_xz * scale, "y": p.i_zy * scale,
             "alpha": p.alpha, "phase": p.phase} for p in points]
    columns = ["layer", "epoch", "x", "y", "alpha", "phase"]
    _write_csv(out / "plane.csv", rows, columns)
    with open(out / "plane.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    _write_csv(out / "mic.csv", mic_summary(traces, args.mic))
    phase_rows = []
    for tr in traces:
        if len(tr.records) >= 2 * args.window:
            phase_rows.extend({"layer": tr.layer, **asdict(p)} for p in detect_phases(tr, args.window))
    _write_csv(out / "phases.csv", phase_rows, ["layer", "start", "stop", "label"])
    _write_run_json(out, args, "infoplane export")
    print(f"wrote {len(rows)} plane points to {out / 'plane.csv'}")
    return 0


# ---------------------------------------------------------------------------
# compare-bidir
# ---------------------------------------------------------------------------


def _bidir_job(job):
    seed, cfg = job
    return bidir_trial(seed, cfg)


def _spectral_job(job):
    seed, cfg = job
    return spectral_trial(seed, cfg)


def cmd_compare_bidir(args) -> int:
    if args.seeds < 1 or args.spectral_draws < 0:
        raise UsageError("--seeds must be >= 1 and --spectral-draws >= 0")
    cfg = BidirConfig(n=args.n, length=args.length, vocab=args.vocab, embed_dim=args.embed_dim,
                      rep_dim=args.rep_dim, steps=args.steps, batch_size=args.batch_size,
                      tolerance=args.tolerance)
    out = _out_dir(args)
    workers = _workers()
    seeds = [args.seed + k for k in range(args.seeds)]
    trials = _map(_bidir_job, [(s, cfg) for s in seeds], workers)
    _write_csv(out / "bidir.csv", trials)
    spectral = _map(_spectral_job, [(args.seed + k, cfg) for k in range(args.spectral_draws)], workers)
    if spectral:
        _write_csv(out / "spectral.csv", spectral)
    checked = [r for r in spectral if r["nonsingular"]]
    summary = {
        "seeds": len(trials),
        "pass_rate": sum(t["passed"] for t in trials) / len(trials),
        "xz_pass_rate": sum(t["xz_ok"] for t in trials) / len(trials),
        "zy_pass_rate": sum(t["zy_ok"] for t in trials) / len(trials),
        "spectral_checked": len(checked),
        "spectral_passed": sum(r["d_eff_bidir"] >= r["d_eff_fwd"] for r in checked),
        "config": asdict(cfg),
    }
    _write_json(out / "summary.json", summary)
    _write_run_json(out, args, "compare-bidir")
    print(f"pass_rate={summary['pass_rate']:.2f} spectral {summary['spectral_passed']}/{summary['spectral_checked']}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_critic_args(p):
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--activation", choices=["softplus", "relu"], default="softplus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")


def _add_flownib_args(p):
    _add_critic_args(p)
    p.add_argument("--input", help="representation dump manifest (JSON)")
    p.add_argument("--synthetic", choices=["gaussian"], default="gaussian")
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--d-x", type=int, default=4)
    p.add_argument("--d-y", type=int, default=1)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--layer-noise", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--steps-per-epoch", type=int, default=50)
    p.add_argument("--alpha0", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--per", choices=["step", "epoch"], default="step")
    p.add_argument("--measure", choices=[m.value for m in SpectralMeasure], default="l2")
    p.add_argument("--mode", choices=["frozen", "encoder"], default="frozen")
    p.add_argument("--decoupled", action="store_true")
    p.add_argument("--encoder-noise", type=float, default=1.0)
    p.add_argument("--encoder-lr", type=float, default=1e-2)
    p.add_argument("--critic-warmup", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ibflow", description=__doc__.split("\n")[0])
    parser.add_argument("--config", help="run.json from an earlier run; its arguments become defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mi-estimate", help="train a DV critic and report I(A;B)")
    _add_critic_args(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="representation dump manifest (JSON)")
    src.add_argument("--synthetic", choices=["gaussian", "discrete"], default="gaussian")
    p.add_argument("--pair", choices=["xz", "zy"], default="xz")
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--joint", default="[[0.4, 0.1], [0.1, 0.4]]", help="JSON table for --synthetic discrete")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--ema-rate", type=float, default=0.99)
    p.add_argument("--bits", action="store_true", help="report in bits instead of nats")
    p.set_defaults(func=cmd_mi_estimate, parser=p)

    p = sub.add_parser("effdim", help="effective dimensionality of stored representations")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="representation dump manifest (JSON)")
    src.add_argument("--csv", nargs="+", help="one or more CSV sample matrices")
    p.add_argument("--measure", choices=[m.value for m in SpectralMeasure], default="l2")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_effdim, parser=p)

    p = sub.add_parser("flownib", help="dynamic information-bottleneck runs")
    fsub = p.add_subparsers(dest="action", required=True)
    run = fsub.add_parser("run", help="train critics per layer and write trace.jsonl")
    _add_flownib_args(run)
    run.set_defaults(func=cmd_flownib_run, parser=run)

    p = sub.add_parser("infoplane", help="information-plane tables")
    isub = p.add_subparsers(dest="action", required=True)
    exp = isub.add_parser("export", help="plot-ready CSV/JSONL from a trace")
    exp.add_argument("--trace", help="trace.jsonl written by 'flownib run'")
    exp.add_argument("--offset", type=float, default=0.0, help="x shift per layer index")
    exp.add_argument("--normalized", action="store_true")
    exp.add_argument("--window", type=int, default=5)
    exp.add_argument("--mic", choices=["min", "harmonic"], default="min")
    exp.add_argument("--bits", action="store_true")
    exp.add_argument("--out", default=".")
    exp.set_defaults(func=cmd_infoplane, parser=exp)

    p = sub.add_parser("compare-bidir", help="forward vs bidirectional MI and d_eff")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--spectral-draws", type=int, default=100)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--length", type=int, default=4)
    p.add_argument("--vocab", type=int, default=2)
    p.add_argument("--embed-dim", type=int, default=8)
    p.add_argument("--rep-dim", type=int, default=4)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--tolerance", type=float, default=0.05)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_compare_bidir, parser=p)

    p = sub.add_parser("ablate", help="delta or output-dimension ablations")
    _add_flownib_args(p)
    p.add_argument("--param", choices=["delta", "ydim"], default="delta")
    p.add_argument("--values", type=_float_list, help="comma-separated list, e.g. 1e-1,1e-3,1e-6")
    p.set_defaults(func=cmd_ablate, parser=p)
    return parser


def _parse(argv) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    try:
        saved = json.loads(Path(known.config).read_text(encoding="utf-8"))
        command, saved_args = saved["command"].split(), saved["args"]
    except (OSError, ValueError, KeyError, AttributeError) as exc:
        parser.error(f"cannot read --config {known.config}: {exc}")
    if not any(a in _COMMANDS for a in rest):
        argv = ["--config", known.config] + command + rest
    args = parser.parse_args(argv)
    # saved values act as defaults; flags given on this command line win
    args.parser.set_defaults(**{k: v for k, v in saved_args.items() if k not in ("command", "action")})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = _parse(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        args.parser.print_usage(sys.stderr)
        print(f"ibflow: error: {exc}", file=sys.stderr)
        return 2
    except (IBFlowError, OSError) as exc:
        print(f"ibflow: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
