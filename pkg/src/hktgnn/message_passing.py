"""Attention message passing with cross-domain distribution-shift projection.

Nodes live in two domains (complete vs biased). Messages between same-domain
endpoints are plain attention messages; cross-domain messages first shift the
sender's hidden state by a gated multiple of the hidden-space domain gap (the
centrality-weighted difference of complete and biased hidden mass). All
per-edge parameters are selected by the receiver's domain, and attention is
softmax-normalized over each receiver's in-neighborhood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

_ATTN_SLOPE = 0.2
_UPDATE_SLOPE = 0.01


@dataclass
class LayerParams:
    w_self: Tensor
    w_nbr: Tensor
    bias: Tensor

    def tensors(self):
        return [self.w_self, self.w_nbr, self.bias]


@dataclass
class PassingParams:
    """Input projection, per-domain attention/gate parameters (index 0 =
    complete receivers, 1 = biased receivers), an optional gap projection,
    and per-round update weights."""

    input_proj: Tensor
    domain_proj: list[Tensor]
    attention: list[Tensor]
    gate: list[Tensor]
    gap_proj: Tensor
    layers: list[LayerParams]

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, hidden_dim: int = 64,
             attn_dim: int = 16, rounds: int = 2):
        return cls(
            input_proj=Tensor(ad.glorot(rng, in_dim, hidden_dim), requires_grad=True),
            domain_proj=[Tensor(ad.glorot(rng, hidden_dim, attn_dim), requires_grad=True)
                         for _ in range(2)],
            attention=[Tensor(rng.normal(0.0, 0.3, 2 * attn_dim), requires_grad=True)
                       for _ in range(2)],
            gate=[Tensor(rng.normal(0.0, 0.3, 2 * hidden_dim), requires_grad=True)
                  for _ in range(2)],
            gap_proj=Tensor(np.eye(hidden_dim), requires_grad=True),
            layers=[LayerParams(
                w_self=Tensor(ad.glorot(rng, hidden_dim, hidden_dim), requires_grad=True),
                w_nbr=Tensor(ad.glorot(rng, hidden_dim, hidden_dim), requires_grad=True),
                bias=Tensor(np.zeros(hidden_dim), requires_grad=True),
            ) for _ in range(rounds)],
        )

    def tensors(self, project_gap: bool = False):
        out = [self.input_proj] + self.domain_proj + self.attention + self.gate
        if project_gap:
            out.append(self.gap_proj)
        for layer in self.layers:
            out.extend(layer.tensors())
        return out


def hidden_domain_difference(hidden: Tensor, biased: np.ndarray,
                             weights: np.ndarray, unweighted: bool = False,
                             params: PassingParams | None = None,
                             project: bool = False) -> Tensor:
    """Hidden-space domain gap: weighted complete mass minus weighted biased mass.

    ``unweighted`` replaces centrality weights by per-domain means (the
    no-centrality ablation). Zero vector when either domain is empty.
    """
    biased = np.asarray(biased, dtype=bool)
    if not biased.any() or biased.all():
        return Tensor(np.zeros(hidden.shape[1]))
    comp_idx = np.flatnonzero(~biased)
    bias_idx = np.flatnonzero(biased)
    if unweighted:
        w_comp = np.full(len(comp_idx), 1.0 / len(comp_idx))
        w_bias = np.full(len(bias_idx), 1.0 / len(bias_idx))
    else:
        w_comp = weights[comp_idx]
        w_bias = weights[bias_idx]
    gap = ad.sub(ad.weighted_rowsum(ad.rows(hidden, comp_idx), w_comp),
                 ad.weighted_rowsum(ad.rows(hidden, bias_idx), w_bias))
    if project:
        gap = ad.matmul(gap, params.gap_proj)
    return gap


def distribution_shift(h_src: Tensor, gap: Tensor, src_domain: int,
                       dst_domain: int, params: PassingParams) -> Tensor:
    """Per-edge shift added to the sender state: zero within a domain, else a
    softsign-gated, sign-flipped multiple of the domain gap."""
    if src_domain == dst_domain:
        return Tensor(np.zeros(h_src.shape[-1]))
    return ad.rows(_shift_rows(ad.reshape(h_src, (1, -1)), gap, dst_domain, params),
                   np.array([0]))


def _shift_rows(h_rows: Tensor, gap: Tensor, dst_domain: int,
                params: PassingParams) -> Tensor:
    n = h_rows.shape[0]
    gap_rows = ad.repeat_rows(gap, n)
    gate_in = ad.concat([h_rows, gap_rows], axis=1)
    gate = ad.softsign(ad.matmul(gate_in, params.gate[dst_domain]))
    sign = 1.0 if dst_domain == 0 else -1.0
    return ad.mul(ad.mul(ad.reshape(gate, (-1, 1)), gap_rows), Tensor(sign))


def _directed_edges(edges: np.ndarray, n: int, symmetric: bool) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if symmetric and arr.size:
        both = np.concatenate([arr, arr[:, ::-1]], axis=0)
        keys = np.unique(both[:, 0] * n + both[:, 1])
        arr = np.stack([keys // n, keys % n], axis=1)
    return arr


def edge_messages(hidden: Tensor, edges: np.ndarray, biased: np.ndarray,
                  gap: Tensor, params: PassingParams):
    """Messages and attention weights for every directed edge, receiver-grouped.

    Returns (order, shifted sender states, attention weights) where ``order``
    indexes into the input edge array.
    """
    biased = np.asarray(biased, dtype=bool)
    n = len(biased)
    src, dst = edges[:, 0], edges[:, 1]
    order_parts, shifted_parts, score_parts, dst_parts = [], [], [], []
    for dom in (0, 1):
        sel = np.flatnonzero(biased[dst] == bool(dom))
        if sel.size == 0:
            continue
        e_src, e_dst = src[sel], dst[sel]
        cross = biased[e_src] != bool(dom)
        h_src = ad.rows(hidden, e_src)
        if cross.any():
            shift = _shift_rows(ad.rows(hidden, e_src[cross]), gap, dom, params)
            h_tilde = ad.add(h_src, _expand_rows(shift, np.flatnonzero(cross), sel.size))
        else:
            h_tilde = h_src
        lhs = ad.matmul(h_tilde, params.domain_proj[dom])
        rhs = ad.matmul(ad.rows(hidden, e_dst), params.domain_proj[dom])
        scores = ad.matmul(ad.leaky_relu(ad.concat([lhs, rhs], axis=1), _ATTN_SLOPE),
                           params.attention[dom])
        order_parts.append(sel)
        shifted_parts.append(h_tilde)
        score_parts.append(scores)
        dst_parts.append(e_dst)
    if not order_parts:
        empty = Tensor(np.zeros((0, hidden.shape[1])))
        return np.zeros(0, dtype=np.int64), empty, Tensor(np.zeros(0))
    order = np.concatenate(order_parts)
    shifted = ad.concat(shifted_parts, axis=0)
    scores = ad.concat(score_parts, axis=0)
    dst_all = np.concatenate(dst_parts)
    alphas = ad.segment_softmax(scores, dst_all, n)
    return order, shifted, alphas


def _expand_rows(values: Tensor, idx: np.ndarray, n: int) -> Tensor:
    """Scatter rows into a zero matrix of ``n`` rows (for masked subsets)."""
    base = Tensor(np.zeros((n, values.shape[1])))
    return ad.scatter_rows(base, idx, values)


def message(hidden: Tensor, edges: np.ndarray, edge_index: int,
            biased: np.ndarray, gap: Tensor, params: PassingParams) -> Tensor:
    """The message sent along one edge, normalized over the receiver's
    in-neighborhood within the full edge set."""
    order, shifted, alphas = edge_messages(hidden, edges, biased, gap, params)
    pos = int(np.flatnonzero(order == edge_index)[0])
    msg = ad.mul(ad.rows(shifted, np.array([pos])),
                 ad.reshape(ad.rows(alphas, np.array([pos])), (1, 1)))
    return ad.reshape(msg, (-1,))


def passing_layer(hidden: Tensor, edges: np.ndarray, biased: np.ndarray,
                  weights: np.ndarray, params: PassingParams, layer_index: int,
                  symmetric: bool = False, unweighted: bool = False,
                  gap: Tensor | None = None, project_gap: bool = False) -> Tensor:
    """One round: aggregate in-neighbor messages, then residual update.

    Nodes without in-neighbors keep the pure self-update.
    """
    biased = np.asarray(biased, dtype=bool)
    n = len(biased)
    arr = _directed_edges(edges, n, symmetric)
    if gap is None:
        gap = hidden_domain_difference(hidden, biased, weights,
                                       unweighted=unweighted, params=params,
                                       project=project_gap)
    if arr.size:
        order, shifted, alphas = edge_messages(hidden, arr, biased, gap, params)
        messages = ad.mul(shifted, ad.reshape(alphas, (-1, 1)))
        agg = ad.segment_sum(messages, arr[order, 1], n)
    else:
        agg = Tensor(np.zeros(hidden.shape))
    layer = params.layers[layer_index]
    update = ad.leaky_relu(
        ad.add(ad.add(ad.matmul(hidden, layer.w_self),
                      ad.matmul(agg, layer.w_nbr)), layer.bias),
        _UPDATE_SLOPE)
    return ad.add(hidden, update)


def forward(x: Tensor, edges: np.ndarray, biased: np.ndarray,
            weights: np.ndarray, params: PassingParams, rounds: int,
            symmetric: bool = False, unweighted: bool = False,
            freeze_gap: bool = False, project_gap: bool = False) -> Tensor:
    """Project node features to hidden width, then apply all rounds.

    ``freeze_gap`` computes the domain gap from the initial hidden states and
    reuses it; otherwise each round recomputes it.
    """
    hidden = ad.matmul(x, params.input_proj)
    frozen = None
    if freeze_gap:
        frozen = hidden_domain_difference(hidden, biased, weights,
                                          unweighted=unweighted, params=params,
                                          project=project_gap)
    for layer_index in range(rounds):
        hidden = passing_layer(hidden, edges, biased, weights, params,
                               layer_index, symmetric=symmetric,
                               unweighted=unweighted, gap=frozen,
                               project_gap=project_gap)
    return hidden
