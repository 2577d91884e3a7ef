"""Shared test utilities: finite-difference gradient checks and naive oracles."""

import numpy as np

from hktgnn import autodiff as ad


def numeric_gradient(build_loss, tensor, h=1e-6):
    """Central finite differences of a scalar-loss builder w.r.t. one tensor."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        up = build_loss().item()
        flat[i] = original - h
        down = build_loss().item()
        flat[i] = original
        gflat[i] = (up - down) / (2 * h)
    return grad


def max_rel_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(1e-6, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0


def check_gradients(build_loss, params, h=1e-6, rtol=1e-4):
    """Assert analytic gradients match central differences for every param."""
    loss = build_loss()
    for p in params:
        p.grad = None
    loss.backward()
    for i, p in enumerate(params):
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numeric_gradient(build_loss, p, h=h)
        err = max_rel_error(analytic, numeric)
        assert err < rtol, f"param {i}: relative gradient error {err:.3e}"


def random_connected_edges(rng, n, extra=2):
    """Random connected undirected graph: a random spanning tree plus extras."""
    edges = set()
    order = rng.permutation(n)
    for i in range(1, n):
        a = order[rng.integers(0, i)]
        b = order[i]
        edges.add((min(a, b), max(a, b)))
    for _ in range(extra):
        a, b = rng.integers(0, n, 2)
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return np.array(sorted(edges), dtype=np.int64)


def dense_sym_adjacency(n, edges):
    A = np.zeros((n, n))
    for s, d in np.asarray(edges).reshape(-1, 2):
        if s != d:
            A[s, d] = 1.0
            A[d, s] = 1.0
    return A


def leaf(rng, *shape, requires_grad=True):
    return ad.Tensor(rng.normal(size=shape), requires_grad=requires_grad)
