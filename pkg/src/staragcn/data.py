"""Synthetic spatial-temporal series, CSV ingestion, windowing, and splits.

The generator drives each node with a phase-shifted sinusoid and diffuses
states over a hidden random-geometric graph:

    X[t+1] = alpha * P @ X[t] + (1 - alpha) * sin(2*pi*t/period + phase) + noise

where P is the row-normalized adjacency (self-loops included so rows are
always well defined). Windowing is stride-1 sequence-to-sequence with a
6:2:2 train/val/test split by window index; z-score statistics are fitted
on the train windows only and applied to inputs, never to targets.

All randomness flows through numpy's PCG64 generator, so a seed pins every
emitted number across platforms.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FrameSeries",
    "SplitIndex",
    "SyntheticConfig",
    "WindowSet",
    "count_windows",
    "generate_synthetic",
    "load_csv",
    "make_windows",
    "save_csv",
]


@dataclass
class SyntheticConfig:
    """Generator knobs.

    ``phase_spread`` scales the per-node seasonal phase offsets: 0 gives one
    shared cycle (the traffic-like regime where a global context carries
    most of the signal), 1 gives fully independent phases.
    """

    diffusion_alpha: float = 0.5
    noise_sigma: float = 0.05
    season_period: int = 24
    phase_spread: float = 0.0
    mean_degree: float = 6.0

    def validate(self) -> None:
        if not 0.0 <= self.diffusion_alpha <= 1.0:
            raise ValueError(f"diffusion_alpha must be in [0, 1], got {self.diffusion_alpha}")
        if self.noise_sigma < 0.0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.season_period < 2:
            raise ValueError(f"season_period must be >= 2, got {self.season_period}")
        if not 0.0 <= self.phase_spread <= 1.0:
            raise ValueError(f"phase_spread must be in [0, 1], got {self.phase_spread}")
        if self.mean_degree <= 0.0:
            raise ValueError(f"mean_degree must be > 0, got {self.mean_degree}")


@dataclass
class FrameSeries:
    """[T, N, D] series plus optional train-split normalization stats."""

    frames: np.ndarray
    interval_desc: str = "synthetic step"
    norm: tuple[np.ndarray, np.ndarray] | None = None  # per-channel (mean, std)

    @property
    def t(self) -> int:
        return self.frames.shape[0]

    @property
    def n(self) -> int:
        return self.frames.shape[1]

    @property
    def d(self) -> int:
        return self.frames.shape[2]


@dataclass(frozen=True)
class SplitIndex:
    """Window-index boundaries: [0, train_end) / [train_end, val_end) / rest."""

    train_end: int
    val_end: int
    num_windows: int

    def __post_init__(self) -> None:
        if not 0 < self.train_end < self.val_end < self.num_windows:
            raise ValueError(
                f"degenerate split {self.train_end}/{self.val_end}/{self.num_windows}"
            )


def _geometric_adjacency(n: int, mean_degree: float, rng: np.random.Generator) -> np.ndarray:
    pts = rng.uniform(0.0, 1.0, size=(n, 2))
    radius = math.sqrt(mean_degree / ((n - 1) * math.pi))
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    adj = (d2 <= radius * radius).astype(np.float64)
    # Self-loops keep every row of the diffusion operator stochastic.
    return adj


def generate_synthetic(
    n: int, t: int, seed: int, cfg: SyntheticConfig | None = None
) -> FrameSeries:
    """Seasonal-plus-diffusion series on a hidden random-geometric graph."""
    if n < 4:
        raise ValueError(f"generate_synthetic: n must be >= 4, got {n}")
    if t < 48:
        raise ValueError(f"generate_synthetic: t must be >= 48, got {t}")
    cfg = cfg or SyntheticConfig()
    cfg.validate()
    rng = np.random.default_rng(seed)
    adj = _geometric_adjacency(n, cfg.mean_degree, rng)
    diffuse = adj / adj.sum(axis=1, keepdims=True)
    phase = cfg.phase_spread * rng.uniform(-math.pi, math.pi, size=n)
    alpha, sigma, period = cfg.diffusion_alpha, cfg.noise_sigma, cfg.season_period

    def season_at(step: int) -> np.ndarray:
        # Phase argument reduced mod period so noiseless series are exactly
        # (bitwise) periodic.
        return np.sin(2.0 * math.pi * (step % period) / period + phase)

    frames = np.empty((t, n, 1))
    x = season_at(-1 % period)
    if sigma > 0.0:
        x = x + rng.normal(0.0, sigma, size=n)
    frames[0, :, 0] = x
    for step in range(t - 1):
        x = alpha * (diffuse @ x) + (1.0 - alpha) * season_at(step)
        if sigma > 0.0:
            x = x + rng.normal(0.0, sigma, size=n)
        frames[step + 1, :, 0] = x
    return FrameSeries(frames, interval_desc=f"synthetic(alpha={alpha}, period={period})")


def save_csv(fs: FrameSeries, path) -> None:
    """Wide CSV: header t,node_0..node_{N-1}, one row per timestep (D=1)."""
    if fs.d != 1:
        raise ValueError(f"save_csv: only D=1 series supported, got D={fs.d}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"node_{i}" for i in range(fs.n)])
        for step in range(fs.t):
            w.writerow([step] + [repr(float(v)) for v in fs.frames[step, :, 0]])


def load_csv(path) -> FrameSeries:
    """Read the wide CSV format back into a [T, N, 1] series."""
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "t":
            raise ValueError(f"{path}: expected header starting with 't'")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise ValueError(f"{path}:{lineno}: ragged row ({len(row)} != {width} cells)")
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric cell ({exc})") from exc
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows)[:, :, None]
    return FrameSeries(arr, interval_desc=f"loaded from {path}")


@dataclass
class WindowSet:
    """Stride-1 forecast windows over a series, with split and normalization.

    Window w has inputs frames[w : w+t_in] and targets
    frames[w+t_in : w+t_in+t_out]. Inputs are z-scored with the train-split
    statistics; targets stay in raw data units.
    """

    series: FrameSeries
    t_in: int
    t_out: int
    split: SplitIndex
    norm_mean: np.ndarray = field(repr=False, default=None)
    norm_std: np.ndarray = field(repr=False, default=None)

    @property
    def num_windows(self) -> int:
        return self.split.num_windows

    def indices(self, part: str) -> range:
        if part == "train":
            return range(0, self.split.train_end)
        if part == "val":
            return range(self.split.train_end, self.split.val_end)
        if part == "test":
            return range(self.split.val_end, self.num_windows)
        raise ValueError(f"unknown split part {part!r}")

    def inputs(self, window: int) -> np.ndarray:
        raw = self.series.frames[window : window + self.t_in]
        return (raw - self.norm_mean) / self.norm_std

    def targets(self, window: int) -> np.ndarray:
        start = window + self.t_in
        return self.series.frames[start : start + self.t_out]

    def batch(self, windows) -> tuple[np.ndarray, np.ndarray]:
        """Stack normalized inputs [B, t_in, N, D] and raw targets."""
        xs = np.stack([self.inputs(w) for w in windows])
        ys = np.stack([self.targets(w) for w in windows])
        return xs, ys


def count_windows(t: int, t_in: int = 12, t_out: int = 12) -> int:
    """Number of stride-1 windows a length-t series yields."""
    if t < t_in + t_out:
        raise ValueError(f"series too short: T={t} < t_in+t_out={t_in + t_out}")
    return t - t_in - t_out + 1


def make_windows(fs: FrameSeries, t_in: int = 12, t_out: int = 12) -> WindowSet:
    """Slide stride-1 windows and split them 6:2:2 (remainder to test)."""
    num_windows = count_windows(fs.t, t_in, t_out)
    train_end = num_windows * 6 // 10
    val_end = train_end + num_windows * 2 // 10
    if train_end == 0 or val_end == train_end or val_end == num_windows:
        raise ValueError(
            f"make_windows: {num_windows} windows cannot be split 6:2:2 non-degenerately"
        )
    split = SplitIndex(train_end, val_end, num_windows)

    # Fit z-score stats over the stacked train-window inputs (overlapping
    # frames weighted by how often they appear in a train window).
    train_frames = np.stack([fs.frames[w : w + t_in] for w in range(train_end)])
    mean = train_frames.mean(axis=(0, 1, 2))
    std = train_frames.std(axis=(0, 1, 2))
    if np.any(std <= 0.0):
        raise ValueError("make_windows: zero variance channel in train split")
    fs.norm = (mean, std)
    return WindowSet(fs, t_in, t_out, split, norm_mean=mean, norm_std=std)
