"""Acceptance gate: one test per criterion, at the stated tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see one line per
criterion. The training-based criteria (7, 8, 9) retrain small forecasters
and take a few minutes each; the benchmark criterion (5) measures wall
time on the host and is allowed a single remeasurement if the first sweep
lands outside the band (scheduler noise on shared machines).
"""

import time

import numpy as np
import pytest

from staragcn import tensor as tz
from staragcn.bench import fit_loglog_slope, sweep_layer
from staragcn.data import generate_synthetic, make_windows
from staragcn.models import AgcrnLiteConfig, GwnetLiteConfig, init_params, model_forward
from staragcn.spatial import (
    SpatialKind,
    SpatialLayerSpec,
    gwt_attention_factors,
    init_spatial_params,
    spatial_forward,
)
from staragcn.spectral import check_sigma_approx, eigenvalues_sym, laplacian_complete, laplacian_from_edges
from staragcn.tensor import ALLOCS, Tensor, grad_check, record
from staragcn.topology import build_star, diameter, star_sparsity
from staragcn.training import TrainConfig, init_ablation, perturb_sweep, train

SEEDS = [0, 1, 2]


def report(criterion: int, passed: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="module")
def default_windows():
    return make_windows(generate_synthetic(64, 2000, seed=0))


def star_laplacian(n):
    return laplacian_from_edges(build_star(n, 0).edge_list())


def test_criterion_01_spectral_lemmas():
    t0 = time.perf_counter()
    worst = 0.0
    for n in range(3, 65):
        spec_k = eigenvalues_sym(laplacian_complete(n))
        spec_t = eigenvalues_sym(star_laplacian(n))
        want_k = np.array([0.0] + [float(n)] * (n - 1))
        want_t = np.array([0.0] + [1.0] * (n - 2) + [float(n)])
        worst = max(worst, float(np.max(np.abs(spec_k - want_k))),
                    float(np.max(np.abs(spec_t - want_t))))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-8 and elapsed < 30.0,
           f"complete/star spectra closed forms, n in [3,64]; "
           f"worst dev {worst:.2e} (tol 1e-8), {elapsed:.1f}s (< 30s)")


def test_criterion_02_n_approximation_tight():
    ok = True
    for n in range(3, 65):
        lap_k, lap_t = laplacian_complete(n), star_laplacian(n)
        if not check_sigma_approx(lap_k, lap_t, float(n), 1e-8):
            ok = False
            break
        if check_sigma_approx(lap_k, lap_t, n - 0.5, 1e-8):
            ok = False
            break
    report(2, ok, "sigma=n passes and sigma=n-0.5 fails for all n in [3,64], tol 1e-8")


def test_criterion_03_rank1_equivalence():
    worst = 0.0
    for n in (2, 4, 8, 16, 32):
        rng = np.random.default_rng(1000 + n)
        for _ in range(50):
            embed = Tensor(rng.standard_normal((n, 4)))
            e_c = Tensor(rng.standard_normal((1, 4)))
            x = Tensor(rng.standard_normal((n, 3)))
            theta = Tensor(rng.standard_normal((3, 5)))
            from staragcn.spatial import gwt_agcn_forward

            z = gwt_agcn_forward(embed, e_c, x, theta)
            a_in, a_out = gwt_attention_factors(embed, e_c)
            rank1 = (a_out.data @ a_in.data) @ x.data @ theta.data
            worst = max(worst, float(np.max(np.abs(z.data - rank1))))
    report(3, worst < 1e-10,
           f"factored forward vs materialized rank-1, 50 runs x n in 2..32; "
           f"worst |dev| {worst:.2e} (< 1e-10)")


def test_criterion_04_gradients_everywhere():
    worst = 0.0
    where = ""
    # every spatial variant, parameters and input, 10 seeds
    for kind in SpatialKind:
        for seed in range(10):
            spec = SpatialLayerSpec(kind, n=6, d_in=2, d_out=3, embed_dim=4)
            params = init_spatial_params(spec, np.random.default_rng(200 + seed))
            x = Tensor(np.random.default_rng(300 + seed).standard_normal((6, 2)))
            target = Tensor(np.random.default_rng(400 + seed).standard_normal((6, 3)))
            for name in params:
                def f(t, name=name):
                    probe = dict(params)
                    probe[name] = t
                    return tz.mean_abs(spatial_forward(spec, probe, x), target)
                err = grad_check(f, params[name], 1e-5)
                if err > worst:
                    worst, where = err, f"{kind.value}.{name}[seed {seed}]"
    # both toy models, MAE loss, 10 seeds
    for seed in range(10):
        spec = SpatialLayerSpec(SpatialKind.GWT_FACTORED, n=4, d_in=1, d_out=3, embed_dim=2)
        a_cfg = AgcrnLiteConfig(n=4, d_in=1, d_hidden=3, d_out=1, t_in=3, t_out=2, spatial=spec)
        g_spec = SpatialLayerSpec(SpatialKind.DENSE, n=4, d_in=3, d_out=3, embed_dim=2)
        g_cfg = GwnetLiteConfig(n=4, d_in=1, d_hidden=3, d_out=1, t_in=5, t_out=2,
                                dilations=(1, 2), spatial=g_spec)
        rng = np.random.default_rng(500 + seed)
        for cfg, t_in in ((a_cfg, 3), (g_cfg, 5)):
            params = init_params(cfg, np.random.default_rng(600 + seed))
            x = rng.standard_normal((2, t_in, 4, 1))
            target = Tensor(rng.standard_normal((2, 2, 4, 1)))
            for name in params:
                def f(t, name=name, cfg=cfg, x=x, target=target, params=params):
                    probe = dict(params)
                    probe[name] = t
                    return tz.mean_abs(model_forward(cfg, probe, x), target)
                err = grad_check(f, params[name], 1e-5)
                if err > worst:
                    worst, where = err, f"{type(cfg).__name__}.{name}[seed {seed}]"
    report(4, worst < 1e-4,
           f"grad_check across variants and models (eps 1e-5, 10 seeds); "
           f"worst {worst:.2e} at {where} (< 1e-4)")


def _bench_slopes():
    n_list = [512, 1024, 2048, 4096, 8192]
    out = {}
    for kind in (SpatialKind.DENSE, SpatialKind.GWT_FACTORED):
        records = sweep_layer(kind, n_list, d=16, d_in=16, d_out=16, reps=9)
        out[kind] = (fit_loglog_slope(records), records)
    return out


def test_criterion_05_complexity_slopes():
    t0 = time.perf_counter()
    attempts = []
    for attempt in range(2):  # one remeasure allowed: wall time on shared hosts
        slopes = _bench_slopes()
        dense_slope = slopes[SpatialKind.DENSE][0]
        gwt_slope = slopes[SpatialKind.GWT_FACTORED][0]
        attempts.append((round(dense_slope, 3), round(gwt_slope, 3)))
        in_band = 1.7 <= dense_slope <= 2.3 and 0.8 <= gwt_slope <= 1.3
        if in_band:
            break
    gwt_records = slopes[SpatialKind.GWT_FACTORED][1]
    no_quadratic = all(r.peak_floats < r.n * r.n for r in gwt_records)
    elapsed = time.perf_counter() - t0
    report(5, in_band and no_quadratic and elapsed < 600.0,
           f"slopes dense/gwt per attempt {attempts} (bands [1.7,2.3] / [0.8,1.3]); "
           f"gwt peak floats linear: {no_quadratic}; {elapsed:.0f}s (< 600s)")


def test_criterion_06_structural_claims():
    sampled = [3, 4, 5, 8, 16, 64, 128, 883, 2048, 10000]
    diam_ok = all(diameter(build_star(n, 0).edge_list()) == 2 for n in sampled if n >= 3)
    sparsity_ok = all(star_sparsity(n) == 1.0 - 2.0 / n for n in sampled)
    pems_value = star_sparsity(883)
    report(6, diam_ok and sparsity_ok and abs(pems_value - 0.9977349943374858) < 1e-15,
           f"star diameter 2 and sparsity 1-2/n over n in [3,10000] sampled; "
           f"sparsity(883) = {pems_value:.10f}")


TRAIN_BUDGET = TrainConfig(epochs=25, batch_size=64, lr=1e-2, early_stop_patience=25, seed=0)


def _parity_arm(kind: SpatialKind, seed: int, windows):
    spec = SpatialLayerSpec(kind, n=64, d_in=1, d_out=8, embed_dim=4)
    cfg = AgcrnLiteConfig(n=64, d_in=1, d_hidden=16, d_out=1, spatial=spec)
    tc = TrainConfig(epochs=TRAIN_BUDGET.epochs, batch_size=TRAIN_BUDGET.batch_size,
                     lr=TRAIN_BUDGET.lr, early_stop_patience=TRAIN_BUDGET.early_stop_patience,
                     seed=seed)
    result = train(cfg, windows, tc)
    return min(row[2] for row in result.curve)


def test_criterion_07_training_parity(default_windows):
    t0 = time.perf_counter()
    ratios = []
    for seed in SEEDS:
        dense_best = _parity_arm(SpatialKind.DENSE, seed, default_windows)
        gwt_best = _parity_arm(SpatialKind.GWT_FACTORED, seed, default_windows)
        ratios.append(gwt_best / dense_best)
    mean_ratio = float(np.mean(ratios))
    elapsed = time.perf_counter() - t0
    report(7, mean_ratio <= 1.10 and elapsed < 6 * 1200.0,
           f"factored vs dense best-val MAE at equal budget "
           f"({TRAIN_BUDGET.epochs} epochs), per-seed ratios "
           f"{[round(r, 4) for r in ratios]}, mean {mean_ratio:.4f} (<= 1.10); "
           f"{elapsed:.0f}s total")


def test_criterion_08_perturbation_trend(default_windows):
    spec = SpatialLayerSpec(SpatialKind.TWO_LAYER_STAR, n=64, d_in=1, d_out=8, embed_dim=4)
    cfg = AgcrnLiteConfig(n=64, d_in=1, d_hidden=16, d_out=1, spatial=spec)
    tc = TrainConfig(epochs=15, batch_size=64, lr=1e-2, early_stop_patience=15, seed=0)
    table, _ = perturb_sweep([0.0, 0.5], SEEDS, cfg, default_windows, tc)
    clean, broken = table[0.0]["mean_mae"], table[0.5]["mean_mae"]
    report(8, broken > clean,
           f"mean test MAE p=0.5 ({broken:.5f}) strictly exceeds p=0 ({clean:.5f}) "
           f"over {len(SEEDS)} seeds")


def test_criterion_09_averaged_init_trend(default_windows):
    spec = SpatialLayerSpec(SpatialKind.GWT_FACTORED, n=64, d_in=1, d_out=8, embed_dim=4)
    cfg = AgcrnLiteConfig(n=64, d_in=1, d_hidden=16, d_out=1, spatial=spec)
    tc = TrainConfig(epochs=2, batch_size=64, lr=5e-3, early_stop_patience=2, seed=0)
    table, _ = init_ablation(SEEDS, cfg, default_windows, tc)
    averaged, rand = table["averaged"]["mean_mae"], table["random"]["mean_mae"]
    report(9, averaged <= rand,
           f"averaged center init mean test MAE ({averaged:.5f}) <= random ({rand:.5f}) "
           f"over {len(SEEDS)} seeds at an equal short budget")


def test_criterion_10_cli_determinism(tmp_path):
    from staragcn.cli import main

    def run_twice(args, out_a, out_b, skip=("config.json",)):
        assert main(args + ["--out-dir", str(out_a)]) == 0
        assert main(args + ["--out-dir", str(out_b)]) == 0
        names_a = {p.name for p in out_a.iterdir()}
        names_b = {p.name for p in out_b.iterdir()}
        assert names_a == names_b
        for name in names_a:
            if name in skip:
                continue  # echoes the differing out_dir path by design
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name

    cases = {
        "spectral": ["spectral-verify", "--n-max", "8"],
        "equiv": ["equiv-check", "--n", "8", "--trials", "5"],
        "grad": ["grad-check", "--n", "5"],
        "train": ["train", "--model", "agcrn-lite", "--spatial", "gwt", "--n", "8",
                  "--t", "120", "--epochs", "2", "--batch-size", "16", "--hidden", "4",
                  "--spatial-out", "3", "--embed-dim", "2", "--seed", "1"],
        "sweep": ["perturb-sweep", "--p-list", "0.0,0.25", "--seeds", "0,1", "--n", "8",
                  "--t", "120", "--epochs", "2", "--batch-size", "16", "--hidden", "4",
                  "--spatial-out", "3", "--embed-dim", "2"],
        "ablation": ["init-ablation", "--seeds", "0,1", "--n", "8", "--t", "120",
                     "--epochs", "2", "--batch-size", "16", "--hidden", "4",
                     "--spatial-out", "3", "--embed-dim", "2"],
    }
    for label, args in cases.items():
        run_twice(args, tmp_path / f"{label}_a", tmp_path / f"{label}_b")
    # bench: config echo and record structure are deterministic; measured
    # wall times are the one excluded quantity (see decisions notes)
    from staragcn.cli import main as cli_main
    out = tmp_path / "bench_out"
    assert cli_main(["bench", "--kinds", "gwt", "--n-list", "64,128,256,512",
                     "--d", "4", "--reps", "5", "--out-dir", str(out)]) == 0
    assert (out / "bench.csv").exists() and (out / "summary.json").exists()
    report(10, True, "byte-identical reruns for all deterministic subcommands "
                     "(bench wall times excluded by design)")
