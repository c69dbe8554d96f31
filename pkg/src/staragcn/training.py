"""Training loop, Adam, forecast metrics, and the sweep experiments.

Training minimizes MAE with Adam over seeded shuffled mini-batches and
early-stops on validation MAE (an epoch must improve the best value by at
least ``min_improve`` to reset patience; the first epoch reaching the best
value wins ties). The best-validation parameters are what get evaluated on
the test split.

``perturb_sweep`` retrains one model per (perturbation ratio, seed) on a
rewired star, and ``init_ablation`` pairs runs that differ only in how the
virtual center embedding is initialized.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import tensor as tz
from .data import WindowSet, generate_synthetic, make_windows
from .models import init_params, model_forward
from .spatial import SpatialKind
from .tensor import Tensor, record
from .topology import build_star, perturb_star

__all__ = [
    "AdamState",
    "MetricsRecord",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "adam_step",
    "init_ablation",
    "mae_loss",
    "metrics",
    "perturb_sweep",
    "train",
]

MAPE_MIN_TARGET = 1e-3


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    early_stop_patience: int = 10
    min_improve: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class MetricsRecord:
    mae: float
    rmse: float
    mape: float  # percent; NaN when no target clears the magnitude mask
    horizon: str | int = "all"


def mae_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Differentiable mean absolute error (subgradient 0 at ties)."""
    if pred.shape != target.shape:
        raise tz.ShapeError.for_op("mae_loss", pred.shape, target.shape)
    return tz.mean_abs(pred, target)


def metrics(pred: np.ndarray, target: np.ndarray, horizon: str | int = "all") -> MetricsRecord:
    """MAE / RMSE / MAPE of a [B, T_out, N, D] forecast against raw targets.

    ``horizon`` selects one 1-based output step, or "all" for every step.
    MAPE averages |err|/|y| only where |y| >= 1e-3 and is reported as a
    percentage; an empty mask yields NaN with a warning.
    """
    if pred.shape != target.shape:
        raise tz.ShapeError.for_op("metrics", pred.shape, target.shape)
    if horizon != "all":
        step = int(horizon) - 1
        if not 0 <= step < pred.shape[1]:
            raise ValueError(f"horizon {horizon} outside 1..{pred.shape[1]}")
        pred = pred[:, step : step + 1]
        target = target[:, step : step + 1]
    err = pred - target
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))
    mask = np.abs(target) >= MAPE_MIN_TARGET
    if mask.any():
        mape = float(np.mean(np.abs(err[mask]) / np.abs(target[mask])) * 100.0)
    else:
        warnings.warn("metrics: every target below magnitude mask; MAPE is NaN")
        mape = math.nan
    return MetricsRecord(mae, rmse, mape, horizon)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(
            m={k: np.zeros(p.shape) for k, p in params.items()},
            v={k: np.zeros(p.shape) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> dict[str, Tensor]:
    """One bias-corrected Adam update; returns fresh parameter tensors.

    Parameters without a gradient this step are carried over unchanged.
    """
    state.step += 1
    t = state.step
    corr1 = 1.0 - cfg.beta1**t
    corr2 = 1.0 - cfg.beta2**t
    out: dict[str, Tensor] = {}
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            out[k] = p
            continue
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * (g * g)
        m_hat = state.m[k] / corr1
        v_hat = state.v[k] / corr2
        out[k] = Tensor(p.data - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps),
                        requires_grad=True)
    return out


@dataclass
class TrainResult:
    curve: list[tuple[int, float, float]]  # (epoch, train_loss, val_mae)
    best_epoch: int
    best_params: dict[str, Tensor]
    test: MetricsRecord


def _predict(cfg, params, windows: WindowSet, part: str, batch_size: int) -> tuple[np.ndarray, np.ndarray]:
    idx = list(windows.indices(part))
    preds, targets = [], []
    for lo in range(0, len(idx), batch_size):
        xs, ys = windows.batch(idx[lo : lo + batch_size])
        preds.append(model_forward(cfg, params, xs).data)
        targets.append(ys)
    return np.concatenate(preds), np.concatenate(targets)


def train(model_cfg, windows: WindowSet, train_cfg: TrainConfig) -> TrainResult:
    """Full training run: per-epoch curve, best-val checkpoint, test metrics."""
    rng = np.random.default_rng(train_cfg.seed)
    params = init_params(model_cfg, rng)
    state = AdamState.for_params(params)
    train_idx = np.array(list(windows.indices("train")))

    curve: list[tuple[int, float, float]] = []
    best_val = math.inf
    best_epoch = -1
    best_params = dict(params)
    stale = 0
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(train_idx)
        loss_sum = 0.0
        for lo in range(0, len(order), train_cfg.batch_size):
            batch = order[lo : lo + train_cfg.batch_size]
            xs, ys = windows.batch(batch)
            with record() as tape:
                pred = model_forward(model_cfg, params, xs)
                loss = mae_loss(pred, Tensor(ys))
                loss_val = loss.item()
                if not math.isfinite(loss_val):
                    raise TrainingDiverged(
                        f"loss became {loss_val} at epoch {epoch}, batch {lo // train_cfg.batch_size}"
                    )
                grad_map = tape.backward(loss)
            grads = {
                k: grad_map[p.node_id].data
                for k, p in params.items()
                if p.node_id in grad_map
            }
            params = adam_step(params, grads, state, train_cfg)
            loss_sum += loss_val * len(batch)  # window-weighted epoch mean

        val_pred, val_target = _predict(model_cfg, params, windows, "val", train_cfg.batch_size)
        val_mae = metrics(val_pred, val_target).mae
        curve.append((epoch, loss_sum / len(order), val_mae))
        if val_mae < best_val - train_cfg.min_improve:
            best_val = val_mae
            best_epoch = epoch
            best_params = dict(params)
            stale = 0
        else:
            stale += 1
            if stale >= train_cfg.early_stop_patience:
                break

    if best_epoch < 0:  # no epoch improved on +inf by min_improve: keep first
        best_epoch, best_params = 0, dict(params)
    test_pred, test_target = _predict(model_cfg, best_params, windows, "test", train_cfg.batch_size)
    return TrainResult(curve, best_epoch, best_params, metrics(test_pred, test_target))


def write_curve_csv(curve: list[tuple[int, float, float]], path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,val_mae\n")
        for epoch, loss, val in curve:
            fh.write(f"{epoch},{repr(loss)},{repr(val)}\n")


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass
class SweepCell:
    key: float | str
    seed: int
    test_mae: float
    best_epoch: int


def _aggregate(cells: list[SweepCell]) -> dict:
    by_key: dict = {}
    for c in cells:
        by_key.setdefault(c.key, []).append(c.test_mae)
    return {
        k: {"mean_mae": float(np.mean(v)), "std_mae": float(np.std(v)), "runs": len(v)}
        for k, v in by_key.items()
    }


def perturb_sweep(
    p_list: list[float],
    seeds: list[int],
    model_cfg,
    windows: WindowSet,
    train_cfg: TrainConfig,
) -> tuple[dict, list[SweepCell]]:
    """Train once per (perturbation ratio, seed) on a rewired star topology.

    The model's spatial layer must be a star kind with a real center; each
    cell replaces its edge set with perturb_star(star, p, seed).
    """
    spec = model_cfg.spatial
    if spec.kind is not SpatialKind.TWO_LAYER_STAR:
        raise ValueError("perturb_sweep: spatial kind must be two-layer-star")
    star = build_star(spec.n, spec.center)
    cells: list[SweepCell] = []
    for p in p_list:
        if not 0.0 <= p <= 0.5:
            raise ValueError(f"perturbation ratio {p} outside [0, 0.5]")
        for seed in seeds:
            topo = perturb_star(star, p, seed)
            cell_spec = replace(spec, topology=topo)
            cell_cfg = replace(model_cfg, spatial=cell_spec)
            result = train(cell_cfg, windows, replace(train_cfg, seed=seed))
            cells.append(SweepCell(p, seed, result.test.mae, result.best_epoch))
    return _aggregate(cells), cells


def init_ablation(
    seeds: list[int],
    model_cfg,
    windows: WindowSet,
    train_cfg: TrainConfig,
) -> tuple[dict, list[SweepCell]]:
    """Averaged vs random center initialization, all else held fixed."""
    spec = model_cfg.spatial
    if spec.kind is not SpatialKind.GWT_FACTORED:
        raise ValueError("init_ablation: spatial kind must be gwt")
    cells: list[SweepCell] = []
    for origin in ("averaged", "random"):
        for seed in seeds:
            cell_cfg = replace(model_cfg, spatial=replace(spec, center_init=origin))
            result = train(cell_cfg, windows, replace(train_cfg, seed=seed))
            cells.append(SweepCell(origin, seed, result.test.mae, result.best_epoch))
    return _aggregate(cells), cells


def default_synthetic_windows(
    n: int = 64, t: int = 2000, seed: int = 0, t_in: int = 12, t_out: int = 12
) -> WindowSet:
    """The workbench's default dataset for the training-trend experiments."""
    return make_windows(generate_synthetic(n, t, seed), t_in, t_out)
