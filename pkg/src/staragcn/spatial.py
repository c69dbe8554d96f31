"""Spatial graph-convolution variants over learnable node embeddings.

Five interchangeable layer kinds:

* ``dense``: A = row_softmax(relu(E @ E^T)), Z = A X Theta. The adjacency is
  a full N x N attention matrix over node embeddings.
* ``gwnet-dual``: same, but scores come from separate source/target
  embeddings E1 @ E2^T.
* ``two-layer-star``: attention restricted to a star topology, applied
  twice so every node reaches every other through the center,
  Z = A*(A* X Theta1) Theta2 (Theta2 optional).
* ``directed-star``: gather-to-center then scatter-to-leaves using the two
  orientations of the star, Z = U*(L* X Theta). Graph cost is Theta(N).
* ``gwt``: the factored form with a virtual center embedding e_c,
  Z = softmax(relu(E e_c^T)) softmax(relu(e_c E^T)) X Theta, evaluated as
  two rank-1 contractions so no N x N tensor ever exists.

Star kinds default to a center self-loop; without it two hops do not give
every node a full receptive field.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import tensor as tz
from .tensor import Tensor
from .topology import VIRTUAL, EdgeList, StarGraph, build_star

__all__ = [
    "CenterEmbedding",
    "Direction",
    "SpatialKind",
    "SpatialLayerSpec",
    "StarAttention",
    "averaged_center",
    "count_spatial_params",
    "dense_adjacency",
    "directed_star_forward",
    "edge_masked_adjacency",
    "gwnet_adjacency",
    "gwt_agcn_forward",
    "gwt_attention_factors",
    "init_spatial_params",
    "k_layer_subgraph_forward",
    "spatial_forward",
    "star_aggregate",
    "star_gat_adjacency",
    "two_layer_star_forward",
]


class SpatialKind(str, Enum):
    DENSE = "dense"
    GWNET_DUAL = "gwnet-dual"
    TWO_LAYER_STAR = "two-layer-star"
    DIRECTED_STAR = "directed-star"
    GWT_FACTORED = "gwt"


class Direction(str, Enum):
    GATHER = "gather"  # edges point leaf -> center
    SCATTER = "scatter"  # edges point center -> leaf
    UNDIRECTED = "undirected"


@dataclass
class CenterEmbedding:
    """Center embedding vector and how it was obtained.

    origin is "averaged" (row mean of E at init), "random", or an int node
    index when the center is a real node whose row of E is used directly.
    """

    vector: Tensor
    origin: str | int


@dataclass
class SpatialLayerSpec:
    """Which spatial variant a model uses, plus its structural knobs."""

    kind: SpatialKind
    n: int
    d_in: int
    d_out: int
    embed_dim: int = 8
    self_loops: bool = True
    use_theta2: bool = True  # two-layer-star only
    center: int = 0  # star kinds with a real center
    center_init: str = "averaged"  # gwt only: "averaged" | "random"
    topology: EdgeList | None = None  # perturbed-star override (two-layer-star)
    scatter_softmax_over_nodes: bool = True  # gwt N x 1 factor normalization axis

    def star(self) -> StarGraph:
        return build_star(self.n, self.center)


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_spatial_params(spec: SpatialLayerSpec, rng: np.random.Generator) -> dict[str, Tensor]:
    """Trainable parameters for one spatial layer, in a fixed draw order.

    Node embeddings (and a random-origin center) draw standard normal
    entries, the field's convention for adaptive embeddings; attention
    scores then have O(d) variance, so initialization placement genuinely
    shapes the initial graph. Weight matrices use fan-in uniform. The gwt
    center vector is always drawn (keeping the rng stream identical across
    init strategies) and overwritten with the embedding row mean when
    center_init is "averaged".
    """
    d = spec.embed_dim
    params: dict[str, Tensor] = {}
    embed = rng.standard_normal((spec.n, d))
    params["embed"] = Tensor(embed, requires_grad=True)
    if spec.kind is SpatialKind.GWNET_DUAL:
        params["embed2"] = Tensor(rng.standard_normal((spec.n, d)), requires_grad=True)
    if spec.kind is SpatialKind.GWT_FACTORED:
        center = rng.standard_normal((1, d))
        if spec.center_init == "averaged":
            center = embed.mean(axis=0, keepdims=True)
        elif spec.center_init != "random":
            raise ValueError(f"unknown center_init {spec.center_init!r}")
        params["center"] = Tensor(center, requires_grad=True)
    params["theta"] = Tensor(_uniform(rng, (spec.d_in, spec.d_out), spec.d_in), requires_grad=True)
    if spec.kind is SpatialKind.TWO_LAYER_STAR and spec.use_theta2:
        params["theta2"] = Tensor(
            _uniform(rng, (spec.d_out, spec.d_out), spec.d_out), requires_grad=True
        )
    return params


def count_spatial_params(spec: SpatialLayerSpec) -> int:
    n, d = spec.n, spec.embed_dim
    total = n * d + spec.d_in * spec.d_out
    if spec.kind is SpatialKind.GWNET_DUAL:
        total += n * d
    if spec.kind is SpatialKind.GWT_FACTORED:
        total += d
    if spec.kind is SpatialKind.TWO_LAYER_STAR and spec.use_theta2:
        total += spec.d_out * spec.d_out
    return total


# ---------------------------------------------------------------------------
# Adjacency builders
# ---------------------------------------------------------------------------


def dense_adjacency(embed: Tensor) -> Tensor:
    """Full adaptive adjacency: row-wise softmax of relu(E @ E^T).

    Fused so the forward allocates exactly one N x N buffer.
    """
    return tz.attention_adjacency(embed, embed)


def gwnet_adjacency(embed_src: Tensor, embed_dst: Tensor) -> Tensor:
    """Dual-embedding adjacency: row softmax of relu(E1 @ E2^T)."""
    if embed_src.shape != embed_dst.shape:
        raise tz.ShapeError.for_op("gwnet_adjacency", embed_src.shape, embed_dst.shape)
    return tz.attention_adjacency(embed_src, embed_dst)


def averaged_center(embed: Tensor) -> CenterEmbedding:
    """Center embedding initialized at the row mean of E (trainable after)."""
    vec = embed.data.mean(axis=0, keepdims=True)
    return CenterEmbedding(Tensor(vec, requires_grad=True), "averaged")


def _center_scores(embed: Tensor, e_c: Tensor) -> Tensor:
    # Dot-product scores of every node against the center, as an N x 1 column.
    return tz.matmul(embed, tz.transpose(e_c))


def _drop_row(t: Tensor, row: int) -> Tensor:
    n = t.shape[0]
    if row == 0:
        return tz.slice_axis(t, 0, 1, n)
    if row == n - 1:
        return tz.slice_axis(t, 0, 0, n - 1)
    return tz.concat([tz.slice_axis(t, 0, 0, row), tz.slice_axis(t, 0, row + 1, n)], axis=0)


@dataclass
class StarAttention:
    """Per-node softmax weights of a star graph, stored in Theta(N) space.

    ``center_row`` holds the center's in-neighborhood weights as a 1 x N row
    (zero where a node is not an in-neighbor). Leaf rows are implicit:
    weight exactly 1.0 on the center when ``leaf_gets_center``, otherwise an
    all-zero row (empty in-neighborhood).
    """

    star: StarGraph
    direction: Direction
    self_loops: bool
    center_row: Tensor | None
    leaf_gets_center: bool
    center_gets_self: bool = False  # scatter only: center row is {center: 1}

    def to_dense(self) -> np.ndarray:
        """Materialize the N x N weight matrix (test/oracle helper)."""
        if self.star.center is VIRTUAL:
            raise ValueError("to_dense: virtual-center attention has no N x N form")
        n, c = self.star.n, self.star.center
        out = np.zeros((n, n))
        if self.center_row is not None:
            out[c, :] = self.center_row.data[0]
        if self.center_gets_self:
            out[c, c] = 1.0
        if self.leaf_gets_center:
            for v in range(n):
                if v != c:
                    out[v, c] = 1.0
        return out


def star_gat_adjacency(
    star: StarGraph,
    embed: Tensor,
    e_c: Tensor | None = None,
    direction: Direction = Direction.UNDIRECTED,
    self_loops: bool = True,
) -> StarAttention:
    """Attention weights on a star, softmaxed per in-neighborhood.

    For a real center, e_c defaults to the center's row of E (sliced so
    gradients reach it). A virtual center requires an explicit e_c and
    excludes any self score. Leaf rows never need a softmax: a leaf's only
    in-neighbor is the center, and a softmax over one score is exactly 1.
    """
    n = star.n
    virtual = star.center is VIRTUAL
    if virtual and e_c is None:
        raise ValueError("star_gat_adjacency: virtual center requires e_c")
    center = 0 if virtual else star.center
    if e_c is None:
        e_c = tz.slice_axis(embed, 0, center, center + 1)

    center_row: Tensor | None = None
    if direction in (Direction.GATHER, Direction.UNDIRECTED):
        scores = _center_scores(embed, e_c)  # [n, 1]
        include_self = self_loops and not virtual
        if include_self:
            w = tz.softmax(tz.relu(scores), axis=0)  # over leaves + center
        else:
            leaf_scores = scores if virtual else _drop_row(scores, center)
            w_leaves = tz.softmax(tz.relu(leaf_scores), axis=0)
            if virtual:
                w = w_leaves
            else:
                zero = Tensor(np.zeros((1, 1)))
                parts = []
                if center > 0:
                    parts.append(tz.slice_axis(w_leaves, 0, 0, center))
                parts.append(zero)
                if center < n - 1:
                    parts.append(tz.slice_axis(w_leaves, 0, center, n - 1))
                w = tz.concat(parts, axis=0)
        center_row = tz.transpose(w)

    if direction is Direction.GATHER:
        return StarAttention(star, direction, self_loops, center_row, leaf_gets_center=False)
    if direction is Direction.SCATTER:
        return StarAttention(
            star, direction, self_loops, None, leaf_gets_center=True, center_gets_self=self_loops
        )
    return StarAttention(star, direction, self_loops, center_row, leaf_gets_center=True)


def star_aggregate(att: StarAttention, y: Tensor) -> Tensor:
    """One aggregation round A_star @ Y in Theta(N * F) time and memory."""
    if att.star.center is VIRTUAL:
        raise ValueError("star_aggregate: needs a real center node")
    n, c = att.star.n, att.star.center
    f = y.shape[1]
    ctx = tz.matmul(att.center_row, y) if att.center_row is not None else None

    if att.leaf_gets_center:
        y_center = tz.slice_axis(y, 0, c, c + 1)
        leaf_value = y_center
    else:
        leaf_value = None

    if att.direction is Direction.SCATTER:
        center_piece = tz.slice_axis(y, 0, c, c + 1) if att.center_gets_self else Tensor(np.zeros((1, f)))
    elif ctx is not None:
        center_piece = ctx
    else:
        center_piece = Tensor(np.zeros((1, f)))

    parts = []
    if c > 0:
        parts.append(
            tz.broadcast_rows(leaf_value, c) if leaf_value is not None else Tensor(np.zeros((c, f)))
        )
    parts.append(center_piece)
    if c < n - 1:
        rows = n - 1 - c
        parts.append(
            tz.broadcast_rows(leaf_value, rows) if leaf_value is not None else Tensor(np.zeros((rows, f)))
        )
    return tz.concat(parts, axis=0) if len(parts) > 1 else parts[0]


def edge_masked_adjacency(
    embed: Tensor, topology: EdgeList, self_loop_center: int | None = None
) -> Tensor:
    """Dense attention adjacency restricted to an explicit edge set.

    Used for perturbed stars at desk scale; rows are softmaxed over each
    node's neighborhood only (empty neighborhoods give all-zero rows).
    """
    n = topology.n
    mask = np.zeros((n, n), dtype=bool)
    for u, v in topology.edges:
        mask[u, v] = True
        mask[v, u] = True
    if self_loop_center is not None:
        mask[self_loop_center, self_loop_center] = True
    scores = tz.relu(tz.matmul(embed, tz.transpose(embed)))
    return tz.masked_softmax_rows(scores, mask)


# ---------------------------------------------------------------------------
# Layer forwards (single instance, [N, d_in] -> [N, d_out])
# ---------------------------------------------------------------------------


def two_layer_star_forward(spec: SpatialLayerSpec, params: dict[str, Tensor], x: Tensor) -> Tensor:
    """Z = A*(A* X Theta1) Theta2 over the star (or a perturbed edge list)."""
    _check_input(spec, x, "two_layer_star_forward")
    theta2 = params.get("theta2") if spec.use_theta2 else None
    if spec.topology is not None:
        adj = edge_masked_adjacency(
            params["embed"], spec.topology, spec.center if spec.self_loops else None
        )
        inner = tz.matmul(tz.matmul(adj, x), params["theta"])
        out = tz.matmul(adj, inner)
    else:
        att = star_gat_adjacency(
            spec.star(), params["embed"], direction=Direction.UNDIRECTED, self_loops=spec.self_loops
        )
        inner = tz.matmul(star_aggregate(att, x), params["theta"])
        out = star_aggregate(att, inner)
    return tz.matmul(out, theta2) if theta2 is not None else out


def directed_star_forward(spec: SpatialLayerSpec, params: dict[str, Tensor], x: Tensor) -> Tensor:
    """Z = U*(L* X Theta): gather everything to the center, then scatter."""
    _check_input(spec, x, "directed_star_forward")
    if spec.topology is not None:
        raise ValueError("directed_star_forward: defined for the pure star only")
    star = spec.star()
    gather = star_gat_adjacency(star, params["embed"], direction=Direction.GATHER,
                                self_loops=spec.self_loops)
    scatter = star_gat_adjacency(star, params["embed"], direction=Direction.SCATTER,
                                 self_loops=spec.self_loops)
    inner = tz.matmul(star_aggregate(gather, x), params["theta"])
    return star_aggregate(scatter, inner)


def gwt_attention_factors(
    embed: Tensor, e_c: Tensor, scatter_softmax_over_nodes: bool = True
) -> tuple[Tensor, Tensor]:
    """The 1 x N gather row and N x 1 scatter column of the factored layer.

    The gather row softmaxes relu(e_c @ E^T) over the node axis; the scatter
    column softmaxes relu(E @ e_c^T). Since the two score products are
    transposes of the same N dot products, the scores are computed once.
    Under the default node-axis normalization the factors are transposes of
    each other; the alternative per-row reading makes every scatter weight
    exactly 1.
    """
    scores = tz.relu(tz.matmul(embed, tz.transpose(e_c)))  # [n, 1]
    over_nodes = tz.softmax(scores, axis=0)
    a_in = tz.transpose(over_nodes)
    a_out = over_nodes if scatter_softmax_over_nodes else tz.softmax(scores, axis=1)
    return a_in, a_out


def gwt_agcn_forward(
    embed: Tensor,
    e_c: Tensor,
    x: Tensor,
    theta: Tensor,
    scatter_softmax_over_nodes: bool = True,
) -> Tensor:
    """Factored star convolution: Z = a_out (a_in X Theta), all Theta(N).

    Exactly equals the materialized rank-1 product (a_out @ a_in) X Theta.
    Runs as one fused op (analytic backward) so a size-n forward is a
    handful of length-n kernels rather than a pile of tiny tape nodes.
    """
    if x.shape[0] != embed.shape[0]:
        raise tz.ShapeError.for_op("gwt_agcn_forward", embed.shape, x.shape)
    return tz.factored_star_conv(embed, e_c, x, theta, scatter_softmax_over_nodes)


def k_layer_subgraph_forward(adjacency: Tensor, x: Tensor, thetas: list[Tensor]) -> Tensor:
    """K alternations of aggregation and linear map: A(...(A X T1)...) TK."""
    if not thetas:
        raise ValueError("k_layer_subgraph_forward: need at least one weight matrix")
    out = x
    for theta in thetas:
        out = tz.matmul(tz.matmul(adjacency, out), theta)
    return out


def _check_input(spec: SpatialLayerSpec, x: Tensor, op: str) -> None:
    if x.data.ndim != 2 or x.shape != (spec.n, spec.d_in):
        raise tz.ShapeError.for_op(op, x.shape, note=f"expected ({spec.n}, {spec.d_in})")


def spatial_forward(spec: SpatialLayerSpec, params: dict[str, Tensor], x: Tensor) -> Tensor:
    """Run one spatial layer on a single [N, d_in] frame."""
    if spec.kind is SpatialKind.DENSE:
        _check_input(spec, x, "spatial_forward[dense]")
        adj = dense_adjacency(params["embed"])
        return tz.matmul(tz.matmul(adj, x), params["theta"])
    if spec.kind is SpatialKind.GWNET_DUAL:
        _check_input(spec, x, "spatial_forward[gwnet-dual]")
        adj = gwnet_adjacency(params["embed"], params["embed2"])
        return tz.matmul(tz.matmul(adj, x), params["theta"])
    if spec.kind is SpatialKind.TWO_LAYER_STAR:
        return two_layer_star_forward(spec, params, x)
    if spec.kind is SpatialKind.DIRECTED_STAR:
        return directed_star_forward(spec, params, x)
    if spec.kind is SpatialKind.GWT_FACTORED:
        _check_input(spec, x, "spatial_forward[gwt]")
        return gwt_agcn_forward(
            params["embed"], params["center"], x, params["theta"],
            spec.scatter_softmax_over_nodes,
        )
    raise ValueError(f"unknown spatial kind {spec.kind}")


# ---------------------------------------------------------------------------
# Batched path used by the models: graph operator once, applied per step
# ---------------------------------------------------------------------------


def graph_weights(spec: SpatialLayerSpec, params: dict[str, Tensor]) -> dict:
    """Build the reusable graph operator pieces for one model forward."""
    if spec.kind is SpatialKind.DENSE:
        return {"adj": dense_adjacency(params["embed"])}
    if spec.kind is SpatialKind.GWNET_DUAL:
        return {"adj": gwnet_adjacency(params["embed"], params["embed2"])}
    if spec.kind is SpatialKind.TWO_LAYER_STAR:
        if spec.topology is not None:
            adj = edge_masked_adjacency(
                params["embed"], spec.topology, spec.center if spec.self_loops else None
            )
            return {"adj": adj, "rounds": 2}
        att = star_gat_adjacency(
            spec.star(), params["embed"], direction=Direction.UNDIRECTED, self_loops=spec.self_loops
        )
        return {"att": att, "rounds": 2}
    if spec.kind is SpatialKind.DIRECTED_STAR:
        star = spec.star()
        return {
            "gather": star_gat_adjacency(star, params["embed"], direction=Direction.GATHER,
                                         self_loops=spec.self_loops),
            "scatter": star_gat_adjacency(star, params["embed"], direction=Direction.SCATTER,
                                          self_loops=spec.self_loops),
        }
    if spec.kind is SpatialKind.GWT_FACTORED:
        a_in, a_out = gwt_attention_factors(
            params["embed"], params["center"], spec.scatter_softmax_over_nodes
        )
        return {"a_in": a_in, "a_out": a_out}
    raise ValueError(f"unknown spatial kind {spec.kind}")


def aggregate_packed(spec: SpatialLayerSpec, weights: dict, y: Tensor) -> Tensor:
    """Apply the full graph operator to a node-major [N, F] block.

    The per-kind Theta chain is deliberately not applied here; callers
    multiply by theta (and theta2) afterwards, which is equivalent by
    associativity.
    """
    if spec.kind in (SpatialKind.DENSE, SpatialKind.GWNET_DUAL):
        return tz.matmul(weights["adj"], y)
    if spec.kind is SpatialKind.TWO_LAYER_STAR:
        if "adj" in weights:
            return tz.matmul(weights["adj"], tz.matmul(weights["adj"], y))
        att = weights["att"]
        return star_aggregate(att, star_aggregate(att, y))
    if spec.kind is SpatialKind.DIRECTED_STAR:
        return star_aggregate(weights["scatter"], star_aggregate(weights["gather"], y))
    if spec.kind is SpatialKind.GWT_FACTORED:
        return tz.matmul(weights["a_out"], tz.matmul(weights["a_in"], y))
    raise ValueError(f"unknown spatial kind {spec.kind}")
