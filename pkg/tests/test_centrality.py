from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest

from hktgnn.centrality import (
    CentralityVector,
    PowerIterationError,
    betweenness_centrality,
    closeness_centrality,
    degree_centrality,
    eigenvector_centrality,
    hop_distances,
    laplacian_top_eigenvector,
)

from helpers import dense_sym_adjacency, random_connected_edges


# ---------------------------------------------------------------------------
# naive oracles


def oracle_dominant_eig(A):
    vals, vecs = np.linalg.eigh(A)
    return vals[-1], vecs[:, -1]


def oracle_all_shortest_paths(n, edges, directed):
    """Distance matrix and all-shortest-path enumeration via brute force."""
    neighbor_sets = [set() for _ in range(n)]
    for s, d in np.asarray(edges).reshape(-1, 2):
        neighbor_sets[s].add(int(d))
        if not directed:
            neighbor_sets[d].add(int(s))
    adj = [sorted(s) for s in neighbor_sets]
    # Floyd-Warshall distances
    INF = 10 ** 9
    dist = np.full((n, n), INF, dtype=np.int64)
    np.fill_diagonal(dist, 0)
    for s, d in np.asarray(edges).reshape(-1, 2):
        dist[s, d] = 1
        if not directed:
            dist[d, s] = 1
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if dist[i, k] + dist[k, j] < dist[i, j]:
                    dist[i, j] = dist[i, k] + dist[k, j]

    def all_paths(s, t):
        """Enumerate every shortest s->t path by DFS over the shortest-path DAG."""
        if dist[s, t] >= INF:
            return []
        paths = []

        def dfs(u, path):
            if u == t:
                paths.append(list(path))
                return
            for w in adj[u]:
                if dist[s, w] == len(path) and dist[w, t] == dist[s, t] - len(path):
                    dfs(w, path + [w])

        dfs(s, [s])
        return paths

    return dist, all_paths


def oracle_betweenness(n, edges, directed):
    dist, all_paths = oracle_all_shortest_paths(n, edges, directed)
    acc = [Fraction(0)] * n
    for s in range(n):
        for t in range(n):
            if s == t or dist[s, t] >= 10 ** 9:
                continue
            paths = all_paths(s, t)
            sigma = len(paths)
            for v in range(n):
                if v in (s, t):
                    continue
                through = sum(1 for p in paths if v in p)
                if through:
                    acc[v] += Fraction(through, sigma)
    scale = 1.0 / ((n - 1) * (n - 2))
    return np.array([float(a) * scale for a in acc])


def oracle_closeness(n, edges, directed):
    dist, _ = oracle_all_shortest_paths(n, edges, directed)
    values = np.zeros(n)
    for u in range(n):
        incoming = dist[:, u]
        reach = (incoming > 0) & (incoming < 10 ** 9)
        r = int(reach.sum())
        if r:
            total = int(incoming[reach].sum())
            values[u] = (r / total) * (r / (n - 1))
    return values


# ---------------------------------------------------------------------------
# eigenvector centrality


def test_star_graph_closed_form():
    edges = [(0, 1), (0, 2), (0, 3)]
    v = eigenvector_centrality(4, edges).values
    assert v[0] == pytest.approx(1 / np.sqrt(2), abs=1e-9)
    assert np.allclose(v[1:], 1 / np.sqrt(6), atol=1e-9)


def test_single_node():
    assert eigenvector_centrality(1, []).values.tolist() == [1.0]


def test_eigenvector_matches_dense_oracle():
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 100:
        n = int(rng.integers(3, 13))
        edges = random_connected_edges(rng, n, extra=int(rng.integers(0, 6)))
        A = dense_sym_adjacency(n, edges)
        lam, vec = oracle_dominant_eig(A)
        vals = np.linalg.eigvalsh(A)
        if vals[-1] - vals[-2] < 1e-3:
            continue
        got = eigenvector_centrality(n, edges, tol=1e-12, max_iter=20000).values
        vec = vec if vec.sum() >= 0 else -vec
        assert np.max(np.abs(got - vec)) < 1e-8
        # accepted outputs are true eigenpairs up to tight residual
        lam_hat = got @ A @ got
        assert np.linalg.norm(A @ got - lam_hat * got) <= 1e-8 * np.linalg.norm(A)
        checked += 1


def test_eigenvector_strictly_positive_on_connected():
    rng = np.random.default_rng(6)
    for _ in range(20):
        n = int(rng.integers(2, 10))
        edges = random_connected_edges(rng, n)
        assert np.all(eigenvector_centrality(n, edges).values > 0)


def test_permutation_equivariance_of_centralities():
    rng = np.random.default_rng(7)
    n = 8
    edges = random_connected_edges(rng, n, extra=4)
    perm = rng.permutation(n)
    mapped = np.array([(perm[s], perm[d]) for s, d in edges])
    for fn in (eigenvector_centrality,
               lambda nn, ee: degree_centrality(nn, ee, directed=False),
               lambda nn, ee: closeness_centrality(nn, ee, directed=False),
               lambda nn, ee: betweenness_centrality(nn, ee, directed=False)):
        base = fn(n, edges).values
        relabeled = fn(n, mapped).values
        assert np.allclose(relabeled[perm], base, atol=1e-10)


def test_nonconvergence_raises_with_iteration_count():
    with pytest.raises(PowerIterationError) as err:
        eigenvector_centrality(6, random_connected_edges(np.random.default_rng(0), 6),
                               tol=0.0, max_iter=3)
    assert err.value.iterations == 3


# ---------------------------------------------------------------------------
# degree / closeness / betweenness


def test_directed_3cycle_degree_is_100_percent():
    v = degree_centrality(3, [(0, 1), (1, 2), (2, 0)], directed=True).values
    assert np.allclose(v, 1.0)


def test_path_betweenness_middle_is_one():
    v = betweenness_centrality(3, [(0, 1), (1, 2)], directed=False).values
    assert v.tolist() == [0.0, 1.0, 0.0]


def test_complete_graph_betweenness_zero():
    edges = [(i, j) for i in range(4) for j in range(i + 1, 4)]
    assert np.all(betweenness_centrality(4, edges, directed=False).values == 0.0)


def test_single_directed_edge_betweenness_zero():
    assert np.all(betweenness_centrality(3, [(0, 1)], directed=True).values == 0.0)


@pytest.mark.parametrize("directed", [True, False])
def test_betweenness_matches_naive_oracle_exactly(directed):
    rng = np.random.default_rng(8 if directed else 9)
    for _ in range(30):
        n = int(rng.integers(3, 11))
        m = int(rng.integers(n - 1, n * (n - 1) // 2 + 1))
        pairs = set()
        while len(pairs) < m:
            a, b = rng.integers(0, n, 2)
            if a != b:
                pairs.add((int(a), int(b)))
        edges = np.array(sorted(pairs))
        got = betweenness_centrality(n, edges, directed=directed).values
        want = oracle_betweenness(n, edges, directed)
        assert np.array_equal(got, want)


@pytest.mark.parametrize("directed", [True, False])
def test_closeness_matches_naive_oracle_exactly(directed):
    rng = np.random.default_rng(10 if directed else 11)
    for _ in range(30):
        n = int(rng.integers(2, 11))
        m = int(rng.integers(1, n * (n - 1) // 2 + 1))
        pairs = set()
        while len(pairs) < m:
            a, b = rng.integers(0, n, 2)
            if a != b:
                pairs.add((int(a), int(b)))
        edges = np.array(sorted(pairs))
        got = closeness_centrality(n, edges, directed=directed).values
        want = oracle_closeness(n, edges, directed)
        assert np.array_equal(got, want)


def test_float_brandes_agrees_with_exact_path():
    from hktgnn import centrality as cen
    rng = np.random.default_rng(12)
    n = 20
    edges = random_connected_edges(rng, n, extra=15)
    exact = betweenness_centrality(n, edges, directed=False).values
    old = cen.EXACT_BETWEENNESS_MAX_NODES
    cen.EXACT_BETWEENNESS_MAX_NODES = 0
    try:
        fast = betweenness_centrality(n, edges, directed=False).values
    finally:
        cen.EXACT_BETWEENNESS_MAX_NODES = old
    assert np.allclose(fast, exact, atol=1e-12)


# ---------------------------------------------------------------------------
# hop distances


def test_hop_distances_chain():
    dist = hop_distances(3, [(1, 0), (2, 1)], root=0)
    assert dist.tolist() == [0, 1, 2]


def test_hop_distances_isolated_root():
    assert hop_distances(1, [], root=0).tolist() == [0]


def test_hop_distances_match_floyd_warshall():
    rng = np.random.default_rng(13)
    for _ in range(20):
        n = int(rng.integers(2, 10))
        edges = random_connected_edges(rng, n, extra=2)
        dist, _ = oracle_all_shortest_paths(n, edges, directed=False)
        got = hop_distances(n, edges, root=0)
        assert np.array_equal(got, dist[0])


def test_hop_distance_unreachable_sentinel():
    dist = hop_distances(3, [(0, 1)], root=0)
    assert dist.tolist() == [0, 1, -1]


# ---------------------------------------------------------------------------
# Laplacian top eigenvector


def test_two_node_closed_form():
    out = laplacian_top_eigenvector(2, [(0, 1)])
    assert out.eigenvalue == pytest.approx(2.0, abs=1e-12)
    assert out.values[0] == pytest.approx(0.70711, abs=1e-5)
    assert out.values[1] == pytest.approx(-0.70711, abs=1e-5)


def test_edgeless_graph_convention():
    out = laplacian_top_eigenvector(3, [])
    assert out.values.tolist() == [1.0, 0.0, 0.0]
    assert out.eigenvalue == 0.0


def test_laplacian_matches_dense_oracle():
    rng = np.random.default_rng(14)
    checked = 0
    while checked < 100:
        n = int(rng.integers(3, 13))
        edges = random_connected_edges(rng, n, extra=int(rng.integers(0, 5)))
        A = dense_sym_adjacency(n, edges)
        L = np.diag(A.sum(1)) - A
        vals, vecs = np.linalg.eigh(L)
        if vals[-1] - vals[-2] < 1e-4:
            continue
        got = laplacian_top_eigenvector(n, edges)
        assert abs(got.eigenvalue - vals[-1]) < 1e-8
        want = vecs[:, -1]
        align = want if abs(got.values @ want) == got.values @ want else -want
        assert np.max(np.abs(got.values - align)) < 1e-8
        checked += 1


def test_sign_convention_idempotent_and_stable():
    rng = np.random.default_rng(15)
    n = 7
    edges = random_connected_edges(rng, n, extra=3)
    out = laplacian_top_eigenvector(n, edges)
    i = int(np.argmax(np.abs(out.values)))
    assert out.values[i] > 0
    # re-running returns the identical vector
    again = laplacian_top_eigenvector(n, edges)
    assert np.array_equal(out.values, again.values)


def test_laplacian_permutation_stability():
    rng = np.random.default_rng(16)
    n = 6
    edges = random_connected_edges(rng, n, extra=2)
    A = dense_sym_adjacency(n, edges)
    L = np.diag(A.sum(1)) - A
    vals = np.linalg.eigvalsh(L)
    assert vals[-1] - vals[-2] > 1e-3  # non-degenerate by construction

    base = laplacian_top_eigenvector(n, edges).values
    for perm in list(permutations(range(n)))[:8]:
        perm = np.array(perm)
        mapped = np.array([(perm[s], perm[d]) for s, d in edges])
        relabeled = laplacian_top_eigenvector(n, mapped).values
        assert np.allclose(relabeled[perm], base, atol=1e-9)


def test_centrality_vector_kind_labels():
    assert isinstance(degree_centrality(2, [(0, 1)]), CentralityVector)
    assert degree_centrality(2, [(0, 1)]).kind == "degree"
    assert closeness_centrality(2, [(0, 1)]).kind == "closeness"
    assert betweenness_centrality(3, [(0, 1)]).kind == "betweenness"
