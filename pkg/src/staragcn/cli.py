"""Command-line workbench: every experiment as a subcommand.

Conventions shared by all subcommands:

* flags may also come from a flat ``key = value`` config file (``--config``);
  command-line flags win, unknown keys are rejected;
* every run echoes its resolved configuration to ``config.json`` in the
  output directory, so reruns are auditable;
* all randomness flows from ``--seed``;
* exit codes: 0 = pass, 1 = runtime or check failure, 2 = usage/config error.

Outputs are plain CSV/JSON with no timestamps, so a rerun with the same
configuration and seed reproduces files byte for byte (measured wall times
in ``bench`` outputs are the one unavoidable exception).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import spectral
from .bench import fit_loglog_slope, time_layer, write_bench_csv
from .data import SyntheticConfig, generate_synthetic, make_windows
from .models import AgcrnLiteConfig, GwnetLiteConfig, config_fingerprint, save_checkpoint
from .spatial import (
    SpatialKind,
    SpatialLayerSpec,
    gwt_attention_factors,
    init_spatial_params,
    spatial_forward,
)
from .tensor import Tensor, grad_check, tensor_sum
from .topology import build_star
from .training import (
    TrainConfig,
    init_ablation,
    metrics,
    perturb_sweep,
    train,
    write_curve_csv,
)

PASS, FAIL, USAGE = 0, 1, 2


def _json_dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _echo_config(args: argparse.Namespace, out_dir: Path) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}
    _json_dump(resolved, out_dir / "config.json")


def _load_config_file(path: str, parser: argparse.ArgumentParser, known: set[str]) -> list[str]:
    """Turn 'key = value' lines into CLI tokens (inserted before real flags)."""
    tokens: list[str] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            parser.error(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            parser.error(f"{path}:{lineno}: unknown config key {key!r}")
        tokens += [f"--{key.replace('_', '-')}", value]
    return tokens


def _spatial_spec(kind: str, n: int, d_in: int, d_out: int, embed_dim: int) -> SpatialLayerSpec:
    return SpatialLayerSpec(SpatialKind(kind), n=n, d_in=d_in, d_out=d_out, embed_dim=embed_dim)


def _build_model_cfg(args) -> AgcrnLiteConfig | GwnetLiteConfig:
    if args.model == "agcrn-lite":
        spec = _spatial_spec(args.spatial, args.n, 1, args.spatial_out, args.embed_dim)
        return AgcrnLiteConfig(
            n=args.n, d_in=1, d_hidden=args.hidden, d_out=1,
            t_in=args.t_in, t_out=args.t_out, spatial=spec,
        )
    spec = _spatial_spec(args.spatial, args.n, args.hidden, args.hidden, args.embed_dim)
    return GwnetLiteConfig(
        n=args.n, d_in=1, d_hidden=args.hidden, d_out=1,
        t_in=args.t_in, t_out=args.t_out, spatial=spec,
    )


def _windows_from_args(args):
    cfg = SyntheticConfig(
        diffusion_alpha=args.alpha, noise_sigma=args.sigma,
        season_period=args.period, phase_spread=args.phase_spread,
    )
    series = generate_synthetic(args.n, args.t, args.data_seed, cfg)
    return make_windows(series, args.t_in, args.t_out)


def _train_cfg(args, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        early_stop_patience=args.patience, seed=seed,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_spectral_verify(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(args, out_dir)
    reports = []
    status = PASS
    first_fail = None
    for n in range(3, args.n_max + 1):
        lap_k = spectral.laplacian_complete(n)
        lap_t = spectral.laplacian_from_edges(build_star(n, 0).edge_list())
        spec_k = spectral.eigenvalues_sym(lap_k)
        spec_t = spectral.eigenvalues_sym(lap_t)
        want_k = np.array([0.0] + [float(n)] * (n - 1))
        want_t = np.array([0.0] + [1.0] * (n - 2) + [float(n)])
        lemmas_ok = bool(
            np.max(np.abs(spec_k - want_k)) <= args.tol
            and np.max(np.abs(spec_t - want_t)) <= args.tol
        )
        sigma_pass = spectral.check_sigma_approx(lap_k, lap_t, float(n), args.tol)
        sigma_tight = not spectral.check_sigma_approx(lap_k, lap_t, n - 0.5, args.tol)
        ok = lemmas_ok and sigma_pass and sigma_tight
        reports.append({
            "n": n,
            "spectrum_K": [float(v) for v in spec_k],
            "spectrum_T": [float(v) for v in spec_t],
            "lemmas_pass": lemmas_ok,
            "sigma_pass": bool(sigma_pass),
            "sigma_tight": bool(sigma_tight),
        })
        print(f"n={n}: {'PASS' if ok else 'FAIL'}")
        if not ok and first_fail is None:
            first_fail = n
            status = FAIL
    _json_dump(reports, out_dir / "spectral_report.json")
    if status != PASS:
        print(f"first failing n: {first_fail}", file=sys.stderr)
    return status


def cmd_equiv_check(args) -> int:
    if args.trials < 1:
        print("equiv-check: --trials must be >= 1", file=sys.stderr)
        return USAGE
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(args, out_dir)
    rng = np.random.default_rng(args.seed)
    worst = {"rank1": 0.0, "two_layer_vs_k_layer": 0.0}

    from .spatial import Direction, star_gat_adjacency  # local: oracle-only pieces

    for trial in range(args.trials):
        spec = _spatial_spec("gwt", args.n, 3, 4, args.embed_dim)
        params = init_spatial_params(spec, rng)
        x = Tensor(rng.standard_normal((args.n, 3)))
        z = spatial_forward(spec, params, x)
        a_in, a_out = gwt_attention_factors(params["embed"], params["center"])
        dense = (a_out.data @ a_in.data) @ x.data @ params["theta"].data
        worst["rank1"] = max(worst["rank1"], float(np.max(np.abs(z.data - dense))))

        spec2 = _spatial_spec("two-layer-star", args.n, 3, 4, args.embed_dim)
        params2 = init_spatial_params(spec2, rng)
        z2 = spatial_forward(spec2, params2, x)
        att = star_gat_adjacency(spec2.star(), params2["embed"],
                                 direction=Direction.UNDIRECTED, self_loops=spec2.self_loops)
        adj = att.to_dense()
        klayer = adj @ (adj @ x.data @ params2["theta"].data) @ params2["theta2"].data
        worst["two_layer_vs_k_layer"] = max(
            worst["two_layer_vs_k_layer"], float(np.max(np.abs(z2.data - klayer)))
        )

    report = {"n": args.n, "trials": args.trials, "worst_abs_deviation": worst,
              "threshold": 1e-10}
    _json_dump(report, out_dir / "equiv_report.json")
    ok = max(worst.values()) < 1e-10
    print(f"equiv-check: {'PASS' if ok else 'FAIL'} (worst {max(worst.values()):.3e})")
    return PASS if ok else FAIL


def cmd_grad_check(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(args, out_dir)
    rng = np.random.default_rng(args.seed)
    report = {}
    worst = 0.0
    for kind in SpatialKind:
        spec = _spatial_spec(kind.value, args.n, 2, 3, 4)
        params = init_spatial_params(spec, rng)
        x = Tensor(rng.standard_normal((args.n, 2)))
        errs = []
        for name, p in params.items():
            def f(t, name=name):
                probe = dict(params)
                probe[name] = t
                return tensor_sum(spatial_forward(spec, probe, x))
            errs.append(grad_check(f, p, args.eps))
        report[kind.value] = max(errs)
        worst = max(worst, max(errs))
    _json_dump({"max_rel_error": report, "threshold": 1e-4}, out_dir / "grad_report.json")
    ok = worst < 1e-4
    print(f"grad-check: {'PASS' if ok else 'FAIL'} (worst {worst:.3e})")
    return PASS if ok else FAIL


def cmd_train(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(args, out_dir)
    windows = _windows_from_args(args)
    model_cfg = _build_model_cfg(args)
    result = train(model_cfg, windows, _train_cfg(args, args.seed))
    write_curve_csv(result.curve, out_dir / "curve.csv")
    save_checkpoint(result.best_params, out_dir / "checkpoint.bin",
                    config_fingerprint(model_cfg))
    _json_dump(
        {
            "best_epoch": result.best_epoch,
            "epochs_run": len(result.curve),
            "test_mae": result.test.mae,
            "test_rmse": result.test.rmse,
            "test_mape_pct": result.test.mape,
        },
        out_dir / "metrics.json",
    )
    print(f"train: best_epoch={result.best_epoch} test_mae={result.test.mae:.6f}")
    return PASS


def cmd_bench(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(args, out_dir)
    kinds = [SpatialKind(k.strip()) for k in args.kinds.split(",") if k.strip()]
    n_list = [int(v) for v in args.n_list.split(",")]
    records = []
    slopes = {}
    for kind in kinds:
        kind_records = []
        for n in n_list:
            rec = time_layer(kind, n, d=args.d, d_in=args.d, d_out=args.d,
                             reps=args.reps, seed=args.seed)
            kind_records.append(rec)
            print(f"{kind.value} n={n}: fwd={rec.median_forward_s:.6f}s "
                  f"peak_floats={rec.peak_floats}")
        slopes[kind.value] = fit_loglog_slope(kind_records)
        records.extend(kind_records)
    write_bench_csv(records, out_dir / "bench.csv")
    _json_dump({"slopes": slopes, "n_list": n_list, "d": args.d}, out_dir / "summary.json")
    print("slopes:", json.dumps(slopes, sort_keys=True))
    return PASS


def cmd_perturb_sweep(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(args, out_dir)
    p_list = [float(v) for v in args.p_list.split(",")]
    seeds = [int(v) for v in args.seeds.split(",")]
    windows = _windows_from_args(args)
    spec = _spatial_spec("two-layer-star", args.n, 1, args.spatial_out, args.embed_dim)
    model_cfg = AgcrnLiteConfig(n=args.n, d_in=1, d_hidden=args.hidden, d_out=1,
                                t_in=args.t_in, t_out=args.t_out, spatial=spec)
    table, cells = perturb_sweep(p_list, seeds, model_cfg, windows, _train_cfg(args, 0))
    with open(out_dir / "sweep.csv", "w") as fh:
        fh.write("p,mean_mae,std_mae,runs\n")
        for p in sorted(table):
            row = table[p]
            fh.write(f"{p},{repr(row['mean_mae'])},{repr(row['std_mae'])},{row['runs']}\n")
    _json_dump(
        {
            "table": {str(k): v for k, v in table.items()},
            "cells": [{"p": c.key, "seed": c.seed, "test_mae": c.test_mae} for c in cells],
        },
        out_dir / "sweep.json",
    )
    for p in sorted(table):
        print(f"p={p}: mean_mae={table[p]['mean_mae']:.6f} (+/- {table[p]['std_mae']:.6f})")
    return PASS


def cmd_init_ablation(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(args, out_dir)
    seeds = [int(v) for v in args.seeds.split(",")]
    windows = _windows_from_args(args)
    spec = _spatial_spec("gwt", args.n, 1, args.spatial_out, args.embed_dim)
    model_cfg = AgcrnLiteConfig(n=args.n, d_in=1, d_hidden=args.hidden, d_out=1,
                                t_in=args.t_in, t_out=args.t_out, spatial=spec)
    table, cells = init_ablation(seeds, model_cfg, windows, _train_cfg(args, 0))
    with open(out_dir / "ablation.csv", "w") as fh:
        fh.write("center_init,mean_mae,std_mae,runs\n")
        for key in ("averaged", "random"):
            row = table[key]
            fh.write(f"{key},{repr(row['mean_mae'])},{repr(row['std_mae'])},{row['runs']}\n")
    _json_dump(
        {
            "table": table,
            "cells": [{"init": c.key, "seed": c.seed, "test_mae": c.test_mae} for c in cells],
        },
        out_dir / "ablation.json",
    )
    for key in ("averaged", "random"):
        print(f"{key}: mean_mae={table[key]['mean_mae']:.6f}")
    return PASS


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=64, help="node count of the synthetic graph")
    p.add_argument("--t", type=int, default=2000, help="timesteps to generate")
    p.add_argument("--t-in", type=int, default=12, help="input window length")
    p.add_argument("--t-out", type=int, default=12, help="forecast horizon length")
    p.add_argument("--alpha", type=float, default=0.5, help="diffusion mixing coefficient")
    p.add_argument("--sigma", type=float, default=0.05, help="per-step noise std")
    p.add_argument("--period", type=int, default=24, help="seasonal period in steps")
    p.add_argument("--phase-spread", type=float, default=0.0,
                   help="per-node seasonal phase spread in [0, 1]")
    p.add_argument("--data-seed", type=int, default=0, help="seed for the data generator")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=100, help="maximum training epochs")
    p.add_argument("--batch-size", type=int, default=64, help="mini-batch size")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
    p.add_argument("--patience", type=int, default=10, help="early-stop patience (epochs)")
    p.add_argument("--hidden", type=int, default=16, help="model hidden width")
    p.add_argument("--spatial-out", type=int, default=8, help="spatial layer output width")
    p.add_argument("--embed-dim", type=int, default=4, help="node embedding dimension")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="staragcn",
        description="Star-topology adaptive graph convolution workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectral-verify", help="verify Laplacian spectra and N-approximation")
    p.add_argument("--n-max", type=int, default=64, help="largest graph order to check")
    p.add_argument("--tol", type=float, default=1e-8, help="numeric tolerance for checks")
    p.add_argument("--out-dir", required=True, help="directory for reports")
    p.add_argument("--seed", type=int, default=0, help="unused here; accepted for uniformity")
    p.add_argument("--config", help="flat key = value config file")
    p.set_defaults(func=cmd_spectral_verify)

    p = sub.add_parser("equiv-check", help="factored layer vs materialized rank-1 product")
    p.add_argument("--n", type=int, default=16, help="node count")
    p.add_argument("--trials", type=int, default=50, help="random instances to test")
    p.add_argument("--embed-dim", type=int, default=4, help="node embedding dimension")
    p.add_argument("--seed", type=int, default=0, help="rng seed")
    p.add_argument("--out-dir", required=True, help="directory for reports")
    p.add_argument("--config", help="flat key = value config file")
    p.set_defaults(func=cmd_equiv_check)

    p = sub.add_parser("grad-check", help="finite-difference check of every spatial variant")
    p.add_argument("--n", type=int, default=6, help="node count")
    p.add_argument("--eps", type=float, default=1e-5, help="finite-difference step")
    p.add_argument("--seed", type=int, default=0, help="rng seed")
    p.add_argument("--out-dir", required=True, help="directory for reports")
    p.add_argument("--config", help="flat key = value config file")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("train", help="train a toy forecaster on synthetic data")
    p.add_argument("--model", choices=["agcrn-lite", "gwnet-lite"], default="agcrn-lite")
    p.add_argument("--spatial", choices=[k.value for k in SpatialKind], default="gwt")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0, help="training seed")
    p.add_argument("--out-dir", required=True, help="directory for curve/checkpoint/metrics")
    p.add_argument("--config", help="flat key = value config file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="time spatial layers across n and fit log-log slopes")
    p.add_argument("--kinds", default="dense,gwt", help="comma-separated spatial kinds")
    p.add_argument("--n-list", default="512,1024,2048,4096,8192",
                   help="comma-separated node counts")
    p.add_argument("--d", type=int, default=16, help="embedding and feature width")
    p.add_argument("--reps", type=int, default=5, help="timed repetitions per point")
    p.add_argument("--seed", type=int, default=0, help="rng seed for layer parameters")
    p.add_argument("--out-dir", required=True, help="directory for bench.csv / summary.json")
    p.add_argument("--config", help="flat key = value config file")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("perturb-sweep", help="test MAE across star perturbation ratios")
    p.add_argument("--p-list", default="0.0,0.1,0.2,0.3,0.4,0.5",
                   help="comma-separated perturbation ratios in [0, 0.5]")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated run seeds")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0, help="base seed (cells use --seeds)")
    p.add_argument("--out-dir", required=True, help="directory for sweep outputs")
    p.add_argument("--config", help="flat key = value config file")
    p.set_defaults(func=cmd_perturb_sweep)

    p = sub.add_parser("init-ablation", help="averaged vs random center initialization")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated run seeds")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0, help="base seed (cells use --seeds)")
    p.add_argument("--out-dir", required=True, help="directory for ablation outputs")
    p.add_argument("--config", help="flat key = value config file")
    p.set_defaults(func=cmd_init_ablation)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # Config file values are parsed first so explicit flags override them.
    if "--config" in argv:
        idx = argv.index("--config")
        if idx + 1 >= len(argv):
            parser.error("--config needs a path")
        probe = parser.parse_args([argv[0], "--config", argv[idx + 1],
                                   *_required_stub(parser, argv[0])])
        known = {k for k in vars(probe) if k not in ("func", "command", "config")}
        sub_flags = _load_config_file(argv[idx + 1], parser, known)
        argv = [argv[0], *sub_flags, *argv[1:idx], *argv[idx + 2:]]
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAIL


def _required_stub(parser: argparse.ArgumentParser, command: str) -> list[str]:
    # Satisfy required flags (e.g. --out-dir) while probing a subcommand's
    # known keys for config-file validation.
    return ["--out-dir", "_probe_"]


if __name__ == "__main__":
    sys.exit(main())
