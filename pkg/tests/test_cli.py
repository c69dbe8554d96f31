"""CLI behavior: exit codes, config files, outputs, reruns, help flags."""

import json
from pathlib import Path

import pytest

from staragcn.cli import build_parser, main

GOLDEN_FLAGS = json.loads((Path(__file__).parent / "golden" / "cli_flags.json").read_text())


def run(argv):
    return main(argv)


def read_bytes_map(out_dir: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir()) if p.is_file()}


# ---------------------------------------------------------------------------
# Help / flag inventory
# ---------------------------------------------------------------------------


def test_every_subcommand_in_golden_inventory():
    parser = build_parser()
    action = parser._subparsers._group_actions[0]
    assert sorted(action.choices) == sorted(GOLDEN_FLAGS)


@pytest.mark.parametrize("sub", sorted(GOLDEN_FLAGS))
def test_help_lists_every_flag(sub, capsys):
    with pytest.raises(SystemExit) as exc:
        main([sub, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for flag in GOLDEN_FLAGS[sub]:
        assert flag in text, f"{sub}: {flag} missing from --help"


def test_flag_inventory_matches_golden():
    parser = build_parser()
    action = parser._subparsers._group_actions[0]
    for name, sub in action.choices.items():
        flags = sorted({opt for a in sub._actions for opt in a.option_strings
                        if opt.startswith("--")})
        assert flags == GOLDEN_FLAGS[name], f"flag drift in {name}"


# ---------------------------------------------------------------------------
# Exit codes and config handling
# ---------------------------------------------------------------------------


def test_missing_out_dir_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["spectral-verify", "--n-max", "4"])
    assert exc.value.code == 2


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["spectral-verify", "--nope", "1", "--out-dir", "/tmp/x"])
    assert exc.value.code == 2


def test_unknown_config_key_is_usage_error(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("bogus = 1\n")
    with pytest.raises(SystemExit) as exc:
        main(["spectral-verify", "--config", str(cfg), "--out-dir", str(tmp_path / "o")])
    assert exc.value.code == 2


def test_config_file_supplies_values_and_flags_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment line\nn_max = 4\ntol = 1e-8\n")
    out = tmp_path / "o"
    assert run(["spectral-verify", "--config", str(cfg), "--out-dir", str(out)]) == 0
    resolved = json.loads((out / "config.json").read_text())
    assert resolved["n_max"] == 4

    out2 = tmp_path / "o2"
    assert run(["spectral-verify", "--config", str(cfg), "--n-max", "3",
                "--out-dir", str(out2)]) == 0
    assert json.loads((out2 / "config.json").read_text())["n_max"] == 3


def test_spectral_verify_small_passes(tmp_path, capsys):
    out = tmp_path / "sv"
    assert run(["spectral-verify", "--n-max", "6", "--out-dir", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert stdout.count("PASS") == 4  # n = 3..6
    report = json.loads((out / "spectral_report.json").read_text())
    assert [r["n"] for r in report] == [3, 4, 5, 6]
    assert all(r["sigma_pass"] and r["sigma_tight"] for r in report)


def test_spectral_verify_zero_tolerance_fails(tmp_path):
    # Float round-off makes exact-zero tolerance unattainable by design.
    out = tmp_path / "sv0"
    assert run(["spectral-verify", "--n-max", "6", "--tol", "0", "--out-dir", str(out)]) == 1


def test_equiv_check_passes_and_rejects_zero_trials(tmp_path):
    assert run(["equiv-check", "--n", "8", "--trials", "5",
                "--out-dir", str(tmp_path / "eq")]) == 0
    report = json.loads((tmp_path / "eq" / "equiv_report.json").read_text())
    assert report["worst_abs_deviation"]["rank1"] < 1e-10
    assert run(["equiv-check", "--n", "8", "--trials", "0",
                "--out-dir", str(tmp_path / "eq0")]) == 2


def test_equiv_check_smallest_case(tmp_path):
    assert run(["equiv-check", "--n", "2", "--trials", "3",
                "--out-dir", str(tmp_path / "eq2")]) == 0


def test_grad_check_cli(tmp_path):
    out = tmp_path / "gc"
    assert run(["grad-check", "--n", "5", "--out-dir", str(out)]) == 0
    report = json.loads((out / "grad_report.json").read_text())
    assert all(v < 1e-4 for v in report["max_rel_error"].values())


def test_train_writes_outputs_and_is_byte_identical_on_rerun(tmp_path):
    args = ["train", "--model", "agcrn-lite", "--spatial", "gwt",
            "--n", "8", "--t", "120", "--epochs", "2", "--batch-size", "16",
            "--hidden", "4", "--spatial-out", "3", "--embed-dim", "2",
            "--seed", "3"]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run(args + ["--out-dir", str(out1)]) == 0
    assert run(args + ["--out-dir", str(out2)]) == 0
    files1, files2 = read_bytes_map(out1), read_bytes_map(out2)
    assert set(files1) == {"config.json", "curve.csv", "checkpoint.bin", "metrics.json"}
    for name in files1:
        if name == "config.json":
            continue  # contains out_dir path, which differs by construction
        assert files1[name] == files2[name], f"{name} differs between reruns"
    curve = (out1 / "curve.csv").read_text().splitlines()
    assert curve[0] == "epoch,train_loss,val_mae"
    assert len(curve) == 3


def test_train_curve_bounded_by_epoch_budget(tmp_path):
    args = ["train", "--model", "agcrn-lite", "--spatial", "dense",
            "--n", "8", "--t", "120", "--epochs", "4", "--batch-size", "16",
            "--hidden", "4", "--spatial-out", "3", "--embed-dim", "2",
            "--out-dir", str(tmp_path / "t")]
    assert run(args) == 0
    rows = (tmp_path / "t" / "curve.csv").read_text().splitlines()
    assert len(rows) - 1 <= 4


def test_gwnet_train_path(tmp_path):
    args = ["train", "--model", "gwnet-lite", "--spatial", "two-layer-star",
            "--n", "8", "--t", "120", "--epochs", "2", "--batch-size", "16",
            "--hidden", "4", "--embed-dim", "2",
            "--out-dir", str(tmp_path / "g")]
    assert run(args) == 0
    assert (tmp_path / "g" / "metrics.json").exists()


def test_bench_cli_small(tmp_path):
    out = tmp_path / "bench"
    assert run(["bench", "--kinds", "gwt", "--n-list", "64,128,256,512",
                "--d", "4", "--reps", "5", "--out-dir", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert "gwt" in summary["slopes"]
    lines = (out / "bench.csv").read_text().splitlines()
    assert lines[0] == "kind,n,d,median_forward_s,median_backward_s,peak_floats"
    assert len(lines) == 5


def test_perturb_sweep_cli_rerun_identical(tmp_path):
    args = ["perturb-sweep", "--p-list", "0.0,0.5", "--seeds", "0,1",
            "--n", "8", "--t", "120", "--epochs", "2", "--batch-size", "16",
            "--hidden", "4", "--spatial-out", "3", "--embed-dim", "2"]
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert run(args + ["--out-dir", str(out1)]) == 0
    assert run(args + ["--out-dir", str(out2)]) == 0
    assert (out1 / "sweep.csv").read_bytes() == (out2 / "sweep.csv").read_bytes()
    assert (out1 / "sweep.json").read_bytes() == (out2 / "sweep.json").read_bytes()
    table = json.loads((out1 / "sweep.json").read_text())["table"]
    assert set(table) == {"0.0", "0.5"}
    assert all(v["runs"] == 2 for v in table.values())


def test_init_ablation_cli(tmp_path):
    out = tmp_path / "ab"
    assert run(["init-ablation", "--seeds", "0,1",
                "--n", "8", "--t", "120", "--epochs", "2", "--batch-size", "16",
                "--hidden", "4", "--spatial-out", "3", "--embed-dim", "2",
                "--out-dir", str(out)]) == 0
    rows = (out / "ablation.csv").read_text().splitlines()
    assert rows[0] == "center_init,mean_mae,std_mae,runs"
    assert len(rows) == 3
    assert rows[1].startswith("averaged,")
    assert rows[2].startswith("random,")


def test_runtime_failure_exits_one(tmp_path):
    # t too small for the 12->12 windows: a runtime error, not usage.
    assert run(["train", "--model", "agcrn-lite", "--spatial", "gwt",
                "--n", "8", "--t", "120", "--t-in", "60", "--t-out", "60",
                "--out-dir", str(tmp_path / "bad")]) == 1


def test_spectral_verify_empty_range(tmp_path, capsys):
    # n-max below 3 checks nothing and passes vacuously.
    out = tmp_path / "sv2"
    assert run(["spectral-verify", "--n-max", "2", "--out-dir", str(out)]) == 0
    assert json.loads((out / "spectral_report.json").read_text()) == []
