"""Timing and memory measurements for the spatial layers as N grows.

The point being measured: a dense adaptive adjacency costs quadratic time
and memory in the node count, while the factored and directed-star layers
stay linear. ``time_layer`` isolates one spatial forward (and backward) at
a given N and reads peak float counts off the allocation counter;
``fit_loglog_slope`` turns a sweep over N into an empirical exponent.

Benchmarks force single-threaded BLAS (via threadpoolctl) so slopes are not
distorted by thread scaling differences across sizes.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import gc
import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from . import tensor as tz
from .spatial import SpatialKind, SpatialLayerSpec, init_spatial_params, spatial_forward
from .tensor import ALLOCS, Tensor, record

_heap_tuned = False


def _tune_allocator() -> None:
    """Keep large buffers on the heap and pin to one CPU while benchmarking.

    By default glibc serves multi-hundred-MB tensors straight from mmap and
    returns them to the kernel on free, so every repetition pays page-fault
    costs that have nothing to do with the layer being measured. Raising the
    mmap/trim thresholds makes freed blocks reusable. Pinning removes
    core-migration jitter. Both are best effort: silently skipped where the
    platform does not support them.
    """
    global _heap_tuned
    if _heap_tuned:
        return
    _heap_tuned = True
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        m_mmap_threshold, m_trim_threshold = -3, -1
        libc.mallopt(m_mmap_threshold, 2**31 - 1)
        libc.mallopt(m_trim_threshold, 2**31 - 1)
    except (OSError, AttributeError):
        pass
    try:
        import os

        cpu = min(os.sched_getaffinity(0))
        os.sched_setaffinity(0, {cpu})
    except (AttributeError, OSError):
        pass

__all__ = ["BenchRecord", "BenchOutOfMemory", "fit_loglog_slope", "time_layer", "write_bench_csv"]


class BenchOutOfMemory(RuntimeError):
    """Requested size did not fit in memory; sweeps may truncate on this."""

    def __init__(self, kind: str, n: int) -> None:
        super().__init__(f"out of memory at kind={kind}, n={n}")
        self.kind = kind
        self.n = n


@dataclass
class BenchRecord:
    kind: str
    n: int
    d: int
    d_in: int
    d_out: int
    reps: int
    median_forward_s: float
    median_backward_s: float
    peak_floats: int


def time_layer(
    kind: SpatialKind,
    n: int,
    d: int = 16,
    d_in: int = 16,
    d_out: int = 16,
    reps: int = 5,
    warmup: int = 2,
    seed: int = 0,
) -> BenchRecord:
    """Median wall time of one spatial forward and backward at size n.

    The allocation counter is reset before the timed section, so
    peak_floats covers parameters, inputs, and every tensor the layer (and
    its backward) creates.
    """
    if n < 64:
        raise ValueError(f"time_layer: n must be >= 64, got {n}")
    if reps < 5:
        raise ValueError(f"time_layer: reps must be >= 5, got {reps}")
    records = sweep_layer(kind, [n], d=d, d_in=d_in, d_out=d_out,
                          reps=reps, warmup=warmup, seed=seed)
    return records[0]


def sweep_layer(
    kind: SpatialKind,
    n_list: list[int],
    d: int = 16,
    d_in: int = 16,
    d_out: int = 16,
    reps: int = 5,
    warmup: int = 2,
    seed: int = 0,
) -> list[BenchRecord]:
    """Time one kind at several sizes with interleaved repetitions.

    Visiting every n once per round (rather than finishing one n before the
    next) spreads slow scheduling windows across all sizes, which keeps the
    *ratios* between sizes stable; those ratios are what the fitted slope
    measures.
    """
    if reps < 5:
        raise ValueError(f"sweep_layer: reps must be >= 5, got {reps}")
    _tune_allocator()
    rng = np.random.default_rng(seed)
    setups = []
    for n in n_list:
        if n < 64:
            raise ValueError(f"sweep_layer: n must be >= 64, got {n}")
        spec = SpatialLayerSpec(kind, n=n, d_in=d_in, d_out=d_out, embed_dim=d)
        try:
            params = init_spatial_params(spec, rng)
            x = Tensor(rng.standard_normal((n, d_in)))
        except MemoryError as exc:
            raise BenchOutOfMemory(kind.value, n) from exc
        setups.append({"n": n, "spec": spec, "params": params, "x": x,
                       "fwd": [], "bwd": [], "inner": 1, "peak": 0})

    def one_cycle(setup, timed: bool) -> None:
        # Forward latency is measured in inference mode (no tape); the
        # recorded forward that feeds the timed backward is untimed.
        fwd_acc = bwd_acc = 0.0
        for _ in range(setup["inner"]):
            t0 = time.perf_counter()
            z = spatial_forward(setup["spec"], setup["params"], setup["x"])
            t1 = time.perf_counter()
            del z
            with record() as tape:
                z = spatial_forward(setup["spec"], setup["params"], setup["x"])
                loss = tz.tensor_sum(z)
                t2 = time.perf_counter()
                tape.backward(loss)
                t3 = time.perf_counter()
            del tape, z, loss
            fwd_acc += t1 - t0
            bwd_acc += t3 - t2
        if timed:
            setup["fwd"].append(fwd_acc / setup["inner"])
            setup["bwd"].append(bwd_acc / setup["inner"])

    gc.collect()
    try:
        with threadpool_limits(limits=1):
            for setup in setups:
                t0 = time.perf_counter()
                one_cycle(setup, timed=False)
                probe = time.perf_counter() - t0
                setup["inner"] = max(1, int(2e-3 / max(probe, 1e-9)) + 1) if probe < 2e-3 else 1
            for rep in range(warmup + reps):
                for setup in setups:
                    if rep == warmup:
                        # Peak floats attributable to this layer alone: its
                        # own parameters and input, plus everything one
                        # forward+backward creates (measured as a delta so
                        # other sweep sizes' live tensors do not leak in).
                        gc.collect()
                        own = sum(p.size for p in setup["params"].values()) + setup["x"].size
                        live_before = ALLOCS.live_floats
                        ALLOCS.reset()
                        one_cycle(setup, timed=True)
                        setup["peak"] = ALLOCS.peak_floats - live_before + own
                    else:
                        one_cycle(setup, timed=rep >= warmup)
    except MemoryError as exc:
        raise BenchOutOfMemory(kind.value, -1) from exc

    return [
        BenchRecord(
            kind.value, s["n"], d, d_in, d_out, reps,
            float(np.median(s["fwd"])), float(np.median(s["bwd"])), s["peak"],
        )
        for s in setups
    ]


def fit_loglog_slope(records: list[BenchRecord], field: str = "median_forward_s") -> float:
    """Least-squares slope of log(time) against log(n) for one layer kind."""
    ns = sorted({r.n for r in records})
    if len(ns) < 4:
        raise ValueError(f"fit_loglog_slope: need >= 4 distinct n, got {len(ns)}")
    if max(ns) < 8 * min(ns):
        raise ValueError(f"fit_loglog_slope: n range {min(ns)}..{max(ns)} spans < 8x")
    kinds = {r.kind for r in records}
    if len(kinds) != 1:
        raise ValueError(f"fit_loglog_slope: mixed kinds {kinds}")
    xs = np.log([r.n for r in records])
    ys = np.log([getattr(r, field) for r in records])
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


def write_bench_csv(records: list[BenchRecord], path) -> None:
    with open(path, "w") as fh:
        fh.write("kind,n,d,median_forward_s,median_backward_s,peak_floats\n")
        for r in records:
            fh.write(
                f"{r.kind},{r.n},{r.d},{repr(r.median_forward_s)},"
                f"{repr(r.median_backward_s)},{r.peak_floats}\n"
            )
