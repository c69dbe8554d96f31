"""Star-topology adaptive graph convolution workbench.

A self-contained library and CLI for working with adaptive spatial-temporal
graph convolutions whose learned spatial graph is replaced, before any
training, by a star spanning tree. Includes the factored Theta(N) layer
built around a virtual center embedding, desk-scale recurrent and
convolutional forecasters, spectral verification of the star's
N-approximation of the complete graph, and an asymptotic benchmark harness.
"""

from .spatial import SpatialKind, SpatialLayerSpec
from .tensor import ALLOCS, Tensor, grad_check, record
from .topology import VIRTUAL, EdgeList, StarGraph, build_star, star_sparsity

__version__ = "0.1.0"

__all__ = [
    "ALLOCS",
    "EdgeList",
    "SpatialKind",
    "SpatialLayerSpec",
    "StarGraph",
    "Tensor",
    "VIRTUAL",
    "build_star",
    "grad_check",
    "record",
    "star_sparsity",
    "__version__",
]
