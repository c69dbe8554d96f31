"""Toy sequence-to-sequence forecasters built around one spatial layer.

Two architectures, both mapping [B, T_in, N, D] histories to
[B, T_out, N, D_out] forecasts and both parameterized by a
``SpatialLayerSpec`` so every spatial variant plugs into either model:

* AGCRN-lite: a GRU whose input at each step is the spatial convolution of
  that step's frame; a single linear readout of the final hidden state
  produces the whole horizon.
* GWNET-lite: stacked blocks of dilated causal convolution (gated
  tanh * sigmoid), a spatial convolution per time step, and residual adds;
  the last-step activations of every block are summed and pushed through
  two linear layers to produce the horizon.

Forwards are pure functions of (config, params, inputs); parameters live in
a flat name->Tensor dict so the optimizer and checkpoints stay trivial.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import tensor as tz
from .spatial import (
    SpatialKind,
    SpatialLayerSpec,
    aggregate_packed,
    count_spatial_params,
    graph_weights,
    init_spatial_params,
)
from .tensor import Tensor

__all__ = [
    "AgcrnLiteConfig",
    "GwnetLiteConfig",
    "agcrn_lite_forward",
    "count_params",
    "gwnet_lite_forward",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
    "spatial_step",
]


@dataclass
class AgcrnLiteConfig:
    n: int
    d_in: int = 1
    d_hidden: int = 16
    d_out: int = 1
    t_in: int = 12
    t_out: int = 12
    spatial: SpatialLayerSpec = None

    def __post_init__(self) -> None:
        if self.spatial is None:
            self.spatial = SpatialLayerSpec(SpatialKind.DENSE, self.n, self.d_in, self.d_hidden)
        if self.spatial.n != self.n or self.spatial.d_in != self.d_in:
            raise ValueError("spatial spec does not match model dims")


@dataclass
class GwnetLiteConfig:
    n: int
    d_in: int = 1
    d_hidden: int = 16
    d_out: int = 1
    t_in: int = 12
    t_out: int = 12
    dilations: tuple[int, ...] = (1, 2, 4)
    kernel: int = 2
    spatial: SpatialLayerSpec = None

    def __post_init__(self) -> None:
        if self.spatial is None:
            self.spatial = SpatialLayerSpec(
                SpatialKind.DENSE, self.n, self.d_hidden, self.d_hidden
            )
        if self.spatial.n != self.n:
            raise ValueError("spatial spec does not match node count")
        if self.spatial.d_in != self.d_hidden or self.spatial.d_out != self.d_hidden:
            raise ValueError("gwnet-lite needs a d_hidden -> d_hidden spatial layer")
        receptive = sum(d * (self.kernel - 1) for d in self.dilations) + 1
        if receptive > self.t_in:
            raise ValueError(f"receptive field {receptive} exceeds t_in={self.t_in}")

    @property
    def blocks(self) -> int:
        return len(self.dilations)


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_params(cfg, rng: np.random.Generator) -> dict[str, Tensor]:
    """Trainable parameters for either model config, fixed draw order."""
    params = {f"spatial.{k}": v for k, v in init_spatial_params(cfg.spatial, rng).items()}
    h = cfg.d_hidden
    horizon = cfg.t_out * cfg.d_out
    if isinstance(cfg, AgcrnLiteConfig):
        d_s = cfg.spatial.d_out
        params["gru.w_gates"] = _uniform(rng, (d_s + h, 2 * h), d_s + h)
        params["gru.b_gates"] = _uniform(rng, (1, 2 * h), d_s + h)
        params["gru.w_cand"] = _uniform(rng, (d_s + h, h), d_s + h)
        params["gru.b_cand"] = _uniform(rng, (1, h), d_s + h)
        params["out.w"] = _uniform(rng, (h, horizon), h)
        params["out.b"] = _uniform(rng, (1, horizon), h)
        return params
    if isinstance(cfg, GwnetLiteConfig):
        params["in.w"] = _uniform(rng, (cfg.d_in, h), cfg.d_in)
        params["in.b"] = _uniform(rng, (1, h), cfg.d_in)
        for i in range(cfg.blocks):
            for branch in ("filter", "gate"):
                params[f"block{i}.{branch}.w_prev"] = _uniform(rng, (h, h), 2 * h)
                params[f"block{i}.{branch}.w_curr"] = _uniform(rng, (h, h), 2 * h)
                params[f"block{i}.{branch}.b"] = _uniform(rng, (1, h), 2 * h)
        params["skip.w1"] = _uniform(rng, (h, h), h)
        params["skip.b1"] = _uniform(rng, (1, h), h)
        params["skip.w2"] = _uniform(rng, (h, horizon), h)
        params["skip.b2"] = _uniform(rng, (1, horizon), h)
        return params
    raise TypeError(f"unknown config type {type(cfg)}")


def count_params(cfg) -> int:
    """Exact trainable scalar count for a model config."""
    h = cfg.d_hidden
    horizon = cfg.t_out * cfg.d_out
    total = count_spatial_params(cfg.spatial)
    if isinstance(cfg, AgcrnLiteConfig):
        d_s = cfg.spatial.d_out
        total += (d_s + h) * 2 * h + 2 * h  # gates
        total += (d_s + h) * h + h  # candidate
        total += h * horizon + horizon  # readout
        return total
    if isinstance(cfg, GwnetLiteConfig):
        total += cfg.d_in * h + h  # input projection
        total += cfg.blocks * 2 * (2 * h * h + h)  # filter+gate conv pairs
        total += h * h + h + h * horizon + horizon  # skip head
        return total
    raise TypeError(f"unknown config type {type(cfg)}")


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------


def spatial_subparams(params: dict[str, Tensor]) -> dict[str, Tensor]:
    """The spatial layer's own parameters, with the model prefix stripped."""
    return {k.split(".", 1)[1]: v for k, v in params.items() if k.startswith("spatial.")}


def _pack_nodes(t: Tensor, b: int, n: int) -> Tensor:
    # [B*N, F] -> [N, B*F] so one matmul aggregates every batch item.
    f = t.shape[1]
    return tz.reshape(tz.transpose(tz.reshape(t, (b, n, f)), (1, 0, 2)), (n, b * f))


def _unpack_nodes(t: Tensor, b: int, n: int) -> Tensor:
    f = t.shape[1] // b
    return tz.reshape(tz.transpose(tz.reshape(t, (n, b, f)), (1, 0, 2)), (b * n, f))


def spatial_step(
    spec: SpatialLayerSpec, params: dict[str, Tensor], weights: dict, x_flat: Tensor, b: int
) -> Tensor:
    """Spatial layer over a [B*N, d_in] block using precomputed weights."""
    packed = _pack_nodes(x_flat, b, spec.n)
    agg = aggregate_packed(spec, weights, packed)
    out = tz.matmul(_unpack_nodes(agg, b, spec.n), params["spatial.theta"])
    theta2 = params.get("spatial.theta2")
    if theta2 is not None and spec.use_theta2:
        out = tz.matmul(out, theta2)
    return out


def _linear(x: Tensor, w: Tensor, bias: Tensor) -> Tensor:
    y = tz.matmul(x, w)
    return tz.add(y, tz.broadcast_rows(bias, y.shape[0]))


def _horizon_reshape(flat: Tensor, b: int, n: int, t_out: int, d_out: int) -> Tensor:
    # [B*N, t_out*d_out] -> [B, t_out, N, d_out]
    return tz.transpose(tz.reshape(flat, (b, n, t_out, d_out)), (0, 2, 1, 3))


# ---------------------------------------------------------------------------
# AGCRN-lite
# ---------------------------------------------------------------------------


def agcrn_lite_forward(
    cfg: AgcrnLiteConfig, params: dict[str, Tensor], inputs: np.ndarray
) -> Tensor:
    """GRU over spatially convolved frames; linear readout of the final state.

    Per step: S_t = spatial(X_t); [r, z] = sigmoid([S_t, H] W_g + b);
    c = tanh([S_t, r*H] W_c + b); H = z*H + (1-z)*c.
    """
    b, t_in, n, d = inputs.shape
    if (t_in, n, d) != (cfg.t_in, cfg.n, cfg.d_in):
        raise tz.ShapeError.for_op(
            "agcrn_lite_forward", inputs.shape,
            note=f"expected (B, {cfg.t_in}, {cfg.n}, {cfg.d_in})",
        )
    h = cfg.d_hidden
    weights = graph_weights(cfg.spatial, spatial_subparams(params))
    hidden = Tensor(np.zeros((b * n, h)))
    ones = Tensor(np.ones((b * n, h)))
    for step in range(t_in):
        x_flat = Tensor(np.ascontiguousarray(inputs[:, step]).reshape(b * n, d))
        s = spatial_step(cfg.spatial, params, weights, x_flat, b)
        gates = tz.sigmoid(
            _linear(tz.concat([s, hidden], axis=1), params["gru.w_gates"], params["gru.b_gates"])
        )
        reset = tz.slice_axis(gates, 1, 0, h)
        update = tz.slice_axis(gates, 1, h, 2 * h)
        cand_in = tz.concat([s, tz.hadamard(reset, hidden)], axis=1)
        cand = tz.tanh(_linear(cand_in, params["gru.w_cand"], params["gru.b_cand"]))
        keep = tz.hadamard(update, hidden)
        blend = tz.hadamard(tz.sub(ones, update), cand)
        hidden = tz.add(keep, blend)
    readout = _linear(hidden, params["out.w"], params["out.b"])
    return _horizon_reshape(readout, b, n, cfg.t_out, cfg.d_out)


# ---------------------------------------------------------------------------
# GWNET-lite
# ---------------------------------------------------------------------------


def gwnet_lite_forward(
    cfg: GwnetLiteConfig,
    params: dict[str, Tensor],
    inputs: np.ndarray,
    return_block_outputs: bool = False,
):
    """Dilated gated causal convolutions with a spatial mix per time step.

    Activations are kept time-major as flat [T*B*N, h] blocks; time t owns
    rows [t*B*N, (t+1)*B*N). The causal shift at dilation r prepends r
    timesteps of zeros, so position t only ever reads positions <= t.
    """
    b, t_in, n, d = inputs.shape
    if (t_in, n, d) != (cfg.t_in, cfg.n, cfg.d_in):
        raise tz.ShapeError.for_op(
            "gwnet_lite_forward", inputs.shape,
            note=f"expected (B, {cfg.t_in}, {cfg.n}, {cfg.d_in})",
        )
    h = cfg.d_hidden
    bn = b * n
    weights = graph_weights(cfg.spatial, spatial_subparams(params))
    time_major = np.ascontiguousarray(inputs.transpose(1, 0, 2, 3)).reshape(t_in * bn, d)
    acts = _linear(Tensor(time_major), params["in.w"], params["in.b"])

    block_outputs: list[Tensor] = []
    skip_parts: list[Tensor] = []
    for i, dilation in enumerate(cfg.dilations):
        span = dilation * (cfg.kernel - 1)
        pad = Tensor(np.zeros((span * bn, h)))
        shifted = tz.concat([pad, tz.slice_axis(acts, 0, 0, (t_in - span) * bn)], axis=0)

        def branch(name: str) -> Tensor:
            prev = tz.matmul(shifted, params[f"block{i}.{name}.w_prev"])
            curr = tz.matmul(acts, params[f"block{i}.{name}.w_curr"])
            summed = tz.add(prev, curr)
            return tz.add(summed, tz.broadcast_rows(params[f"block{i}.{name}.b"], t_in * bn))

        gated = tz.hadamard(tz.tanh(branch("filter")), tz.sigmoid(branch("gate")))

        mixed_steps = []
        for step in range(t_in):
            frame = tz.slice_axis(gated, 0, step * bn, (step + 1) * bn)
            mixed_steps.append(spatial_step(cfg.spatial, params, weights, frame, b))
        mixed = tz.concat(mixed_steps, axis=0)
        acts = tz.add(acts, mixed)  # residual
        block_outputs.append(mixed)
        skip_parts.append(tz.slice_axis(mixed, 0, (t_in - 1) * bn, t_in * bn))

    skip = skip_parts[0]
    for part in skip_parts[1:]:
        skip = tz.add(skip, part)
    head = tz.relu(_linear(tz.relu(skip), params["skip.w1"], params["skip.b1"]))
    flat = _linear(head, params["skip.w2"], params["skip.b2"])
    pred = _horizon_reshape(flat, b, n, cfg.t_out, cfg.d_out)
    if return_block_outputs:
        return pred, block_outputs
    return pred


def model_forward(cfg, params: dict[str, Tensor], inputs: np.ndarray) -> Tensor:
    if isinstance(cfg, AgcrnLiteConfig):
        return agcrn_lite_forward(cfg, params, inputs)
    if isinstance(cfg, GwnetLiteConfig):
        return gwnet_lite_forward(cfg, params, inputs)
    raise TypeError(f"unknown config type {type(cfg)}")


# ---------------------------------------------------------------------------
# Checkpoints: one JSON header line, then little-endian f64 parameter data
# ---------------------------------------------------------------------------


def config_fingerprint(cfg) -> str:
    """Stable hash of a model config (spatial topology included)."""

    def encode(obj):
        if isinstance(obj, SpatialLayerSpec):
            d = dict(obj.__dict__)
            d["kind"] = obj.kind.value
            if obj.topology is not None:
                d["topology"] = sorted(obj.topology.edges)
                d["topology_n"] = obj.topology.n
            return d
        if hasattr(obj, "__dict__"):
            return {k: encode(v) for k, v in obj.__dict__.items()}
        return obj

    blob = json.dumps({"type": type(cfg).__name__, "cfg": encode(cfg)},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_checkpoint(params: dict[str, Tensor], path, config_hash: str = "") -> None:
    order = sorted(params)
    header = {
        "config_hash": config_hash,
        "order": order,
        "shapes": {k: list(params[k].shape) for k in order},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode())
        fh.write(b"\n")
        for k in order:
            fh.write(params[k].data.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, Tensor], dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        params: dict[str, Tensor] = {}
        for k in header["order"]:
            shape = tuple(header["shapes"][k])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            arr = np.frombuffer(buf, dtype="<f8").reshape(shape)
            params[k] = Tensor(arr, requires_grad=True)
    return params, header
