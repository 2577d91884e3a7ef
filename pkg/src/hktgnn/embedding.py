"""Graph embedding encoder for single-product subgraphs.

Each node of a subgraph is described by bucketized in/out degree, node type
and hop distance from the product root; table lookups are concatenated,
projected, augmented with the node's coordinate of the dominant Laplacian
eigenvector, pushed through two GIN layers over symmetrized edges, and
sum-pooled into one row per product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .centrality import hop_distances, laplacian_top_eigenvector
from .supply import (
    EMBED_DIM,
    INVESTEE,
    INVESTOR,
    LISTED_COMPANY,
    PRODUCT,
    ProductSubgraph,
)

#: log2 buckets 0..8 plus one overflow/sentinel bucket
N_BUCKETS = 10
_OVERFLOW = N_BUCKETS - 1

TYPE_INDEX = {PRODUCT: 0, LISTED_COMPANY: 1, INVESTOR: 2, INVESTEE: 3}
N_TYPES = 4


def bucketize(value: int) -> int:
    """Map a count to floor(log2(v+1)) capped at 8; negatives (sentinels) and
    anything past the cap land in the overflow bucket."""
    if value < 0:
        return _OVERFLOW
    b = (int(value) + 1).bit_length() - 1
    return b if b <= 8 else _OVERFLOW


@dataclass
class TopoFeatures:
    in_degree: np.ndarray
    out_degree: np.ndarray
    node_type: np.ndarray
    root_distance: np.ndarray


def node_topo_features(sub: ProductSubgraph) -> TopoFeatures:
    """Raw per-node degrees, type index, and hop distance from the root."""
    n = sub.n
    local = sub.local_edges()
    in_deg = np.bincount(local[:, 1], minlength=n) if local.size else np.zeros(n, int)
    out_deg = np.bincount(local[:, 0], minlength=n) if local.size else np.zeros(n, int)
    types = np.array([TYPE_INDEX[k] for k in sub.node_kinds], dtype=np.int64)
    root_local = sub.local_index()[sub.root]
    dist = hop_distances(n, local, root_local)
    return TopoFeatures(in_deg.astype(np.int64), out_deg.astype(np.int64), types, dist)


@dataclass
class GinLayer:
    w1: Tensor
    b1: Tensor
    slope: Tensor
    w2: Tensor
    b2: Tensor
    eps: Tensor

    def tensors(self):
        return [self.w1, self.b1, self.slope, self.w2, self.b2, self.eps]


@dataclass
class EncoderParams:
    in_deg_table: Tensor
    out_deg_table: Tensor
    type_table: Tensor
    spb_table: Tensor
    proj: Tensor
    gin: list[GinLayer]
    readout: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, table_dim: int = 8, node_dim: int = 64,
             hidden_dim: int = 64, out_dim: int = EMBED_DIM, n_layers: int = 2):
        def table(n_rows):
            return Tensor(rng.normal(0.0, 0.1, (n_rows, table_dim)), requires_grad=True)

        layers = []
        width_in = node_dim + 1  # +1 for the spectral coordinate
        for _ in range(n_layers):
            layers.append(GinLayer(
                w1=Tensor(ad.glorot(rng, width_in, hidden_dim), requires_grad=True),
                b1=Tensor(np.zeros(hidden_dim), requires_grad=True),
                slope=Tensor(0.25, requires_grad=True),
                w2=Tensor(ad.glorot(rng, hidden_dim, hidden_dim), requires_grad=True),
                b2=Tensor(np.zeros(hidden_dim), requires_grad=True),
                eps=Tensor(0.0, requires_grad=True),
            ))
            width_in = hidden_dim
        return cls(
            in_deg_table=table(N_BUCKETS),
            out_deg_table=table(N_BUCKETS),
            type_table=table(N_TYPES),
            spb_table=table(N_BUCKETS),
            proj=Tensor(ad.glorot(rng, 4 * table_dim, node_dim), requires_grad=True),
            gin=layers,
            readout=Tensor(ad.glorot(rng, hidden_dim, out_dim) * 0.25, requires_grad=True),
        )

    def tensors(self):
        out = [self.in_deg_table, self.out_deg_table, self.type_table,
               self.spb_table, self.proj, self.readout]
        for layer in self.gin:
            out.extend(layer.tensors())
        return out


def embed_nodes(feats: TopoFeatures, params: EncoderParams) -> Tensor:
    """Table-lookup embedding of (deg_in, deg_out, type, root distance) per node."""
    in_b = np.array([bucketize(v) for v in feats.in_degree])
    out_b = np.array([bucketize(v) for v in feats.out_degree])
    spb_b = np.array([bucketize(v) for v in feats.root_distance])
    parts = [
        ad.rows(params.in_deg_table, in_b),
        ad.rows(params.out_deg_table, out_b),
        ad.rows(params.type_table, feats.node_type),
        ad.rows(params.spb_table, spb_b),
    ]
    return ad.matmul(ad.concat(parts, axis=1), params.proj)


def embed_node(in_degree: int, out_degree: int, node_type: int, root_distance: int,
               params: EncoderParams) -> Tensor:
    feats = TopoFeatures(np.array([in_degree]), np.array([out_degree]),
                         np.array([node_type]), np.array([root_distance]))
    return ad.rows(embed_nodes(feats, params), np.array([0]))


def spectral_coordinates(sub: ProductSubgraph) -> np.ndarray:
    return laplacian_top_eigenvector(sub.n, sub.local_edges()).values


def augment_spectral(sub: ProductSubgraph, node_vectors: Tensor,
                     spectral: np.ndarray | None = None) -> Tensor:
    """Append each node's dominant-Laplacian-eigenvector coordinate as a column."""
    if spectral is None:
        spectral = spectral_coordinates(sub)
    col = Tensor(spectral.reshape(-1, 1))
    return ad.concat([node_vectors, col], axis=1)


@dataclass
class SubgraphBatch:
    """Constant per-node data for a set of subgraphs, flattened for one pass."""

    feats: TopoFeatures
    spectral: np.ndarray
    sym_src: np.ndarray
    sym_dst: np.ndarray
    graph_of_node: np.ndarray
    n_graphs: int
    n_nodes: int


def build_batch(subs: list[ProductSubgraph]) -> SubgraphBatch:
    in_deg, out_deg, types, dist, spectral, graph_ids = [], [], [], [], [], []
    srcs, dsts = [], []
    offset = 0
    for gi, sub in enumerate(subs):
        f = node_topo_features(sub)
        in_deg.append(f.in_degree)
        out_deg.append(f.out_degree)
        types.append(f.node_type)
        dist.append(f.root_distance)
        spectral.append(spectral_coordinates(sub))
        graph_ids.append(np.full(sub.n, gi, dtype=np.int64))
        local = sub.local_edges()
        if local.size:
            both = np.concatenate([local, local[:, ::-1]], axis=0)
            keys = np.unique(both[:, 0] * sub.n + both[:, 1])
            srcs.append(keys // sub.n + offset)
            dsts.append(keys % sub.n + offset)
        offset += sub.n
    cat = lambda parts, dtype: (np.concatenate(parts).astype(dtype) if parts
                                else np.zeros(0, dtype=dtype))
    return SubgraphBatch(
        feats=TopoFeatures(cat(in_deg, np.int64), cat(out_deg, np.int64),
                           cat(types, np.int64), cat(dist, np.int64)),
        spectral=cat(spectral, np.float64),
        sym_src=cat(srcs, np.int64),
        sym_dst=cat(dsts, np.int64),
        graph_of_node=cat(graph_ids, np.int64),
        n_graphs=len(subs),
        n_nodes=offset,
    )


def encode_batch(batch: SubgraphBatch, params: EncoderParams) -> Tensor:
    """One embedding row per subgraph (n_graphs x EMBED_DIM), differentiable."""
    h = embed_nodes(batch.feats, params)
    h = ad.concat([h, Tensor(batch.spectral.reshape(-1, 1))], axis=1)
    for layer in params.gin:
        agg = ad.mul(ad.add(Tensor(1.0), layer.eps), h)
        if batch.sym_src.size:
            agg = ad.add(agg, ad.segment_sum(ad.rows(h, batch.sym_src),
                                             batch.sym_dst, batch.n_nodes))
        hidden = ad.prelu(ad.add(ad.matmul(agg, layer.w1), layer.b1), layer.slope)
        h = ad.add(ad.matmul(hidden, layer.w2), layer.b2)
    pooled = ad.segment_sum(h, batch.graph_of_node, batch.n_graphs)
    return ad.matmul(pooled, params.readout)


def encode_subgraph(sub: ProductSubgraph, params: EncoderParams) -> Tensor:
    """Embedding row for one subgraph."""
    return ad.rows(encode_batch(build_batch([sub]), params), np.array([0]))


def encode_subgraphs(subs: list[ProductSubgraph], params: EncoderParams) -> Tensor:
    return encode_batch(build_batch(subs), params)
