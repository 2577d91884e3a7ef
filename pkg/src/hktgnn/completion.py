"""Centrality-weighted cross-domain feature completion.

Biased product nodes lack usable financial features. Completion proceeds in
synchronous frontier steps: nodes adjacent to the already-usable set receive
an attention-weighted convex combination of their providers' (calibrated)
financial vectors, then join the usable set for the next step. Calibration
subtracts a gated share of the observable-domain gap — the centrality-weighted
difference between complete-node and biased-node observable feature mass —
projected into financial space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class CompletionParams:
    """Provider/receiver attention projections and score vector, the
    calibration gate, the observable-to-financial projection, and the PReLU
    slope of the score nonlinearity."""

    receiver_proj: Tensor
    provider_proj: Tensor
    attention: Tensor
    gate: Tensor
    obs_to_unobs: Tensor
    slope: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, obs_dim: int, unobs_dim: int,
             attn_dim: int = 16):
        return cls(
            receiver_proj=Tensor(ad.glorot(rng, obs_dim, attn_dim), requires_grad=True),
            provider_proj=Tensor(ad.glorot(rng, obs_dim, attn_dim), requires_grad=True),
            attention=Tensor(rng.normal(0.0, 0.3, 2 * attn_dim), requires_grad=True),
            gate=Tensor(ad.glorot(rng, 2 * unobs_dim, unobs_dim), requires_grad=True),
            obs_to_unobs=Tensor(ad.glorot(rng, obs_dim, unobs_dim), requires_grad=True),
            slope=Tensor(0.25, requires_grad=True),
        )

    def tensors(self):
        return [self.receiver_proj, self.provider_proj, self.attention,
                self.gate, self.obs_to_unobs, self.slope]


def domain_difference(x_obs: Tensor, biased: np.ndarray, weights: np.ndarray,
                      params: CompletionParams, drop: bool = False) -> Tensor:
    """Centrality-weighted observable gap projected into financial space.

    Returns a zero vector when either domain is empty, or when ``drop`` is set
    (the no-centrality ablation removes calibration entirely).
    """
    unobs_dim = params.obs_to_unobs.shape[1]
    biased = np.asarray(biased, dtype=bool)
    if drop or not biased.any() or biased.all():
        return Tensor(np.zeros(unobs_dim))
    comp_idx = np.flatnonzero(~biased)
    bias_idx = np.flatnonzero(biased)
    comp_mass = ad.weighted_rowsum(ad.rows(x_obs, comp_idx), weights[comp_idx])
    bias_mass = ad.weighted_rowsum(ad.rows(x_obs, bias_idx), weights[bias_idx])
    return ad.matmul(ad.sub(comp_mass, bias_mass), params.obs_to_unobs)


def calibrate(x_unobs: Tensor, gap: Tensor, params: CompletionParams) -> Tensor:
    """Gated subtraction of the domain gap from provider financial rows.

    Accepts one vector or a row matrix; gate entries lie in (-1, 1), so a zero
    gap (or a zero gate matrix) leaves the input untouched.
    """
    single = x_unobs.ndim == 1
    mat = ad.reshape(x_unobs, (1, -1)) if single else x_unobs
    gap_rows = ad.repeat_rows(gap, mat.shape[0])
    gate = ad.softsign(ad.matmul(ad.concat([mat, gap_rows], axis=1), params.gate))
    out = ad.sub(mat, ad.mul(gap_rows, gate))
    return ad.reshape(out, (-1,)) if single else out


def _edge_scores(x_obs: Tensor, receivers: np.ndarray, providers: np.ndarray,
                 params: CompletionParams) -> Tensor:
    recv = ad.matmul(ad.rows(x_obs, receivers), params.receiver_proj)
    prov = ad.matmul(ad.rows(x_obs, providers), params.provider_proj)
    scored = ad.prelu(ad.concat([recv, prov], axis=1), params.slope)
    return ad.matmul(scored, params.attention)


def neighbor_importance(x_obs: Tensor, receivers, providers,
                        params: CompletionParams) -> Tensor:
    """Provider weights for each (receiver, provider) pair, softmax-normalized
    over every receiver's provider set (so they sum to one per receiver)."""
    receivers = np.asarray(receivers, dtype=np.int64)
    providers = np.asarray(providers, dtype=np.int64)
    scores = _edge_scores(x_obs, receivers, providers, params)
    _, compact = np.unique(receivers, return_inverse=True)
    return ad.segment_softmax(scores, compact, int(compact.max()) + 1)


@dataclass
class FrontierTrace:
    """Which nodes were completed at each step, plus any left unreachable."""

    steps: list[list[int]] = field(default_factory=list)
    unreached: list[int] = field(default_factory=list)

    @property
    def completed(self) -> list[int]:
        return sorted(i for step in self.steps for i in step)

    def to_dict(self) -> dict:
        return {"steps": self.steps, "unreached": self.unreached}


def _undirected_neighbors(n: int, edges: np.ndarray) -> list[np.ndarray]:
    nbr = [set() for _ in range(n)]
    for s, d in np.asarray(edges, dtype=np.int64).reshape(-1, 2):
        nbr[s].add(int(d))
        nbr[d].add(int(s))
    return [np.array(sorted(s), dtype=np.int64) for s in nbr]


def complete_features(edges: np.ndarray, x_obs: Tensor, x_unobs_start: Tensor,
                      biased: np.ndarray, weights: np.ndarray,
                      params: CompletionParams, steps: int,
                      late_calibration: bool = True,
                      drop_gap: bool = False):
    """Run up to ``steps`` synchronous completion rounds.

    ``x_unobs_start`` must hold usable values on complete rows only (masked
    rows are ignored until completed). Frontier growth is monotone; each step
    reads values from the previous step only, so results are independent of
    node order. Returns (final financial matrix, gap, trace).

    ``late_calibration=False`` calibrates provider values on the first step
    only and feeds raw values afterwards.
    """
    if steps < 0:
        raise ValueError("completion steps must be non-negative")
    biased = np.asarray(biased, dtype=bool)
    n = len(biased)
    gap = domain_difference(x_obs, biased, weights, params, drop=drop_gap)
    trace = FrontierTrace()
    usable = ~biased.copy()
    x_unobs = x_unobs_start
    neighbors = _undirected_neighbors(n, edges)
    for step in range(1, steps + 1):
        pending = np.flatnonzero(~usable)
        recv_list, prov_list = [], []
        for i in pending:
            provs = neighbors[i][usable[neighbors[i]]]
            if provs.size:
                recv_list.append(np.full(provs.size, i, dtype=np.int64))
                prov_list.append(provs)
        if not recv_list:
            break
        receivers = np.concatenate(recv_list)
        providers = np.concatenate(prov_list)
        alphas = neighbor_importance(x_obs, receivers, providers, params)
        prov_vals = ad.rows(x_unobs, providers)
        if step == 1 or late_calibration:
            prov_vals = calibrate(prov_vals, gap, params)
        contrib = ad.mul(prov_vals, ad.reshape(alphas, (-1, 1)))
        completed_ids, compact = np.unique(receivers, return_inverse=True)
        new_vals = ad.segment_sum(contrib, compact, len(completed_ids))
        x_unobs = ad.scatter_rows(x_unobs, completed_ids, new_vals)
        usable[completed_ids] = True
        trace.steps.append(completed_ids.tolist())
    trace.unreached = np.flatnonzero(biased & ~usable).tolist()
    return x_unobs, gap, trace


def distribution_consistency_loss(gap: Tensor, x_unobs: Tensor,
                                  biased: np.ndarray, weights: np.ndarray,
                                  trace: FrontierTrace) -> Tensor:
    """Squared distance between the projected gap and the financial-space gap
    rebuilt from observed complete rows and completed biased rows.

    Zero when completion never ran (nothing to make consistent).
    """
    completed = trace.completed
    if not completed:
        return Tensor(0.0)
    biased = np.asarray(biased, dtype=bool)
    comp_idx = np.flatnonzero(~biased)
    comp_mass = ad.weighted_rowsum(ad.rows(x_unobs, comp_idx), weights[comp_idx])
    done = np.asarray(completed, dtype=np.int64)
    done_mass = ad.weighted_rowsum(ad.rows(x_unobs, done), weights[done])
    return ad.squared_l2(ad.sub(gap, ad.sub(comp_mass, done_mass)))
