"""Graph kernels: centrality measures, hop distances, dominant Laplacian eigenvector.

Graphs are passed as (n_nodes, edge array) pairs where edges are integer
index pairs. Eigenvector centrality and the Laplacian eigenvector symmetrize
directed input before iterating; degree/closeness/betweenness honor the
``directed`` flag.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass
class CentralityVector:
    values: np.ndarray
    kind: str


@dataclass
class SpectralVector:
    values: np.ndarray
    eigenvalue: float


class PowerIterationError(RuntimeError):
    def __init__(self, message: str, iterations: int):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


def _edge_array(edges) -> np.ndarray:
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                     dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return arr.reshape(-1, 2)


def _sym_edges(n: int, edges) -> np.ndarray:
    """Unique directed pairs of the symmetrized graph, self-loops dropped."""
    arr = _edge_array(edges)
    if arr.shape[0] == 0:
        return arr
    both = np.concatenate([arr, arr[:, ::-1]], axis=0)
    both = both[both[:, 0] != both[:, 1]]
    if both.shape[0] == 0:
        return np.zeros((0, 2), dtype=np.int64)
    keys = np.unique(both[:, 0] * n + both[:, 1])
    return np.stack([keys // n, keys % n], axis=1)


def _unique_directed(n: int, edges) -> np.ndarray:
    arr = _edge_array(edges)
    if arr.shape[0] == 0:
        return arr
    arr = arr[arr[:, 0] != arr[:, 1]]
    if arr.shape[0] == 0:
        return np.zeros((0, 2), dtype=np.int64)
    keys = np.unique(arr[:, 0] * n + arr[:, 1])
    return np.stack([keys // n, keys % n], axis=1)


def _csr(n: int, srcs: np.ndarray, dsts: np.ndarray):
    order = np.argsort(srcs, kind="stable")
    sorted_dst = dsts[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, srcs + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, sorted_dst


def _bfs_distances(indptr: np.ndarray, indices: np.ndarray, source: int,
                   n: int) -> np.ndarray:
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    frontier = np.array([source], dtype=np.int64)
    d = 0
    while frontier.size:
        parts = [indices[indptr[u]:indptr[u + 1]] for u in frontier]
        if not parts:
            break
        cand = np.concatenate(parts)
        cand = np.unique(cand[dist[cand] < 0])
        if cand.size == 0:
            break
        d += 1
        dist[cand] = d
        frontier = cand
    return dist


# ---------------------------------------------------------------------------
# eigen solvers (power iteration; dense eigendecomposition stays in tests as
# the independent oracle)


def eigenvector_centrality(n_nodes: int, edges, tol: float = 1e-10,
                           max_iter: int = 1000) -> CentralityVector:
    """Dominant-eigenvector centrality of the symmetrized adjacency.

    Iterates on A + I so bipartite structures cannot oscillate; the result is
    L2-normalized and entrywise non-negative.
    """
    if n_nodes <= 0:
        raise ValueError("eigenvector_centrality needs a nonempty graph")
    sym = _sym_edges(n_nodes, edges)
    srcs, dsts = sym[:, 0], sym[:, 1]
    v = np.full(n_nodes, 1.0 / np.sqrt(n_nodes))
    for _ in range(max_iter):
        w = v.copy()
        np.add.at(w, dsts, v[srcs])
        w /= np.linalg.norm(w)
        if np.linalg.norm(w - v) <= tol:
            return CentralityVector(w, "eigenvector")
        v = w
    raise PowerIterationError("eigenvector centrality did not converge", max_iter)


def laplacian_top_eigenvector(n_nodes: int, edges, tol: float = 1e-12,
                              max_iter: int = 10000) -> SpectralVector:
    """Eigenvector of L = D - A (symmetrized) for the largest eigenvalue.

    Sign convention: the entry of largest absolute value is made positive
    (first such index on ties). An edgeless graph returns e_1 with
    eigenvalue 0.
    """
    if n_nodes <= 0:
        raise ValueError("laplacian_top_eigenvector needs a nonempty graph")
    sym = _sym_edges(n_nodes, edges)
    if sym.shape[0] == 0:
        v = np.zeros(n_nodes)
        v[0] = 1.0
        return SpectralVector(v, 0.0)
    srcs, dsts = sym[:, 0], sym[:, 1]
    deg = np.bincount(srcs, minlength=n_nodes).astype(np.float64)

    def lap_mv(x):
        out = deg * x
        np.add.at(out, dsts, -x[srcs])
        return out

    # fixed-seed start: deterministic, and (unlike structural starts, which can
    # be exactly orthogonal to the target on symmetric graphs) almost surely
    # has a component along the top eigenvector
    v = np.random.default_rng(1813).standard_normal(n_nodes)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = lap_mv(v)
        lam = float(v @ w)
        if np.linalg.norm(w - lam * v) <= tol * max(1.0, abs(lam)):
            i = int(np.argmax(np.abs(v)))
            if v[i] < 0:
                v = -v
            return SpectralVector(v, lam)
        nw = np.linalg.norm(w)
        if nw <= 1e-30:
            raise PowerIterationError("iterate collapsed into the null space", max_iter)
        v = w / nw
    raise PowerIterationError("Laplacian eigenvector did not converge", max_iter)


# ---------------------------------------------------------------------------
# path-based centralities


def degree_centrality(n_nodes: int, edges, directed: bool = True) -> CentralityVector:
    """Degree centrality: (in+out)/(n-1) for directed graphs, deg/(n-1) otherwise."""
    if n_nodes <= 0:
        raise ValueError("degree_centrality needs a nonempty graph")
    if n_nodes == 1:
        return CentralityVector(np.zeros(1), "degree")
    if directed:
        arr = _unique_directed(n_nodes, edges)
        counts = (np.bincount(arr[:, 0], minlength=n_nodes)
                  + np.bincount(arr[:, 1], minlength=n_nodes))
    else:
        sym = _sym_edges(n_nodes, edges)
        counts = np.bincount(sym[:, 0], minlength=n_nodes)
    return CentralityVector(counts / (n_nodes - 1), "degree")


def closeness_centrality(n_nodes: int, edges, directed: bool = True) -> CentralityVector:
    """Closeness with the reachable-fraction scaling.

    For node u with r nodes able to reach it at total distance T:
    c(u) = (r / T) * (r / (n-1)); unreached pairs contribute nothing.
    Directed graphs use inward distances.
    """
    if n_nodes <= 0:
        raise ValueError("closeness_centrality needs a nonempty graph")
    arr = _unique_directed(n_nodes, edges) if directed else _sym_edges(n_nodes, edges)
    # inward distances = BFS over reversed edges
    indptr, indices = _csr(n_nodes, arr[:, 1], arr[:, 0])
    values = np.zeros(n_nodes)
    if n_nodes == 1:
        return CentralityVector(values, "closeness")
    for u in range(n_nodes):
        dist = _bfs_distances(indptr, indices, u, n_nodes)
        reach = dist > 0
        r = int(reach.sum())
        if r == 0:
            continue
        total = int(dist[reach].sum())
        values[u] = (r / total) * (r / (n_nodes - 1))
    return CentralityVector(values, "closeness")


def _brandes_exact(n: int, arr: np.ndarray) -> list:
    """Brandes accumulation with exact rational dependencies."""
    adj = [[] for _ in range(n)]
    for s, d in arr:
        adj[s].append(int(d))
    acc = [Fraction(0)] * n
    for s in range(n):
        stack = []
        preds = [[] for _ in range(n)]
        sigma = [0] * n
        dist = [-1] * n
        sigma[s] = 1
        dist[s] = 0
        queue = [s]
        head = 0
        while head < len(queue):
            v = queue[head]
            head += 1
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [Fraction(0)] * n
        for w in reversed(stack):
            for v in preds[w]:
                delta[v] += Fraction(sigma[v], sigma[w]) * (1 + delta[w])
            if w != s:
                acc[w] += delta[w]
        del stack
    return acc


def _brandes_float(n: int, arr: np.ndarray) -> np.ndarray:
    """Level-synchronous Brandes in float arithmetic for larger graphs."""
    indptr, indices = _csr(n, arr[:, 0], arr[:, 1])
    srcs, dsts = arr[:, 0], arr[:, 1]
    acc = np.zeros(n)
    for s in range(n):
        dist = _bfs_distances(indptr, indices, s, n)
        sigma = np.zeros(n)
        sigma[s] = 1.0
        max_d = int(dist.max())
        tree = (dist[srcs] >= 0) & (dist[dsts] == dist[srcs] + 1)
        t_src, t_dst = srcs[tree], dsts[tree]
        d_dst = dist[t_dst]
        for level in range(1, max_d + 1):
            sel = d_dst == level
            np.add.at(sigma, t_dst[sel], sigma[t_src[sel]])
        delta = np.zeros(n)
        for level in range(max_d, 0, -1):
            sel = d_dst == level
            contrib = sigma[t_src[sel]] / sigma[t_dst[sel]] * (1.0 + delta[t_dst[sel]])
            np.add.at(delta, t_src[sel], contrib)
        delta[s] = 0.0
        acc += delta
    return acc


#: graphs at or below this size use exact rational Brandes accumulation
EXACT_BETWEENNESS_MAX_NODES = 64


def betweenness_centrality(n_nodes: int, edges, directed: bool = True) -> CentralityVector:
    """Brandes betweenness, normalized by (n-1)(n-2) over ordered pairs.

    Small graphs are accumulated in exact rational arithmetic so results are
    independent of summation order; larger graphs fall back to floats.
    """
    if n_nodes <= 0:
        raise ValueError("betweenness_centrality needs a nonempty graph")
    if n_nodes < 3:
        return CentralityVector(np.zeros(n_nodes), "betweenness")
    arr = _unique_directed(n_nodes, edges) if directed else _sym_edges(n_nodes, edges)
    scale = 1.0 / ((n_nodes - 1) * (n_nodes - 2))
    if n_nodes <= EXACT_BETWEENNESS_MAX_NODES:
        acc = _brandes_exact(n_nodes, arr)
        values = np.array([float(a) * scale for a in acc])
    else:
        values = _brandes_float(n_nodes, arr) * scale
    return CentralityVector(values, "betweenness")


def hop_distances(n_nodes: int, edges, root: int) -> np.ndarray:
    """Hop counts from ``root`` with edge directions ignored; unreachable is -1."""
    sym = _sym_edges(n_nodes, edges)
    indptr, indices = _csr(n_nodes, sym[:, 0], sym[:, 1])
    return _bfs_distances(indptr, indices, root, n_nodes)
