"""Synthetic supply-chain generator and company-level dataset derivation.

The generator plants a smooth per-product risk factor: neighboring products
get correlated factors, company risk flags are Bernoulli draws whose
product-level "any risky" probability follows the factor, and business /
financial vectors are factor-shifted Gaussians (scaled by
``signal_strength``). A configurable fraction of products is made biased by
stripping statements or relations from one company, or by attaching no
companies at all, so that feature completion has real signal to recover.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .centrality import (
    betweenness_centrality,
    closeness_centrality,
    degree_centrality,
    eigenvector_centrality,
)
from .supply import (
    BUSINESS_DIM,
    COMPANY_PRODUCT,
    FINANCIAL_DIM,
    INVEST_OR_SUPPLY,
    INVESTEE,
    INVESTOR,
    LISTED_COMPANY,
    PRODUCT,
    PRODUCT_PRODUCT,
    CompanyRecord,
    SupplyGraph,
    aggregate_product_features,
)

# feature geometry of the planted signal
_BUSINESS_GAIN = 1.6
_FINANCIAL_GAIN = 3.2
_NOISE_STD = 1.0
_SMOOTHING_ROUNDS = 2
_ZERO_COMPANY_SHARE = 0.1


@dataclass
class GenConfig:
    n_products: int = 430
    n_product_edges: int = 1875
    companies_per_product: tuple[int, int] = (0, 40)
    investors_per_company: tuple[int, int] = (0, 3)
    biased_fraction: float = 0.3
    signal_strength: float = 0.8
    seed: int = 0

    def validate(self) -> None:
        n = self.n_products
        if n < 0:
            raise ValueError("n_products must be non-negative")
        if not 0 <= self.n_product_edges <= n * (n - 1):
            raise ValueError(
                f"n_product_edges={self.n_product_edges} infeasible for {n} products")
        for name in ("biased_fraction", "signal_strength"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("companies_per_product", "investors_per_company"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} range ({lo}, {hi}) is invalid")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["companies_per_product"] = list(self.companies_per_product)
        d["investors_per_company"] = list(self.investors_per_company)
        return d

    @classmethod
    def from_dict(cls, payload: dict) -> "GenConfig":
        kwargs = dict(payload)
        for key in ("companies_per_product", "investors_per_company"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class JoinMode:
    """Company-join rule: full cross join per product edge, or keep-with-p."""

    p: float | None = None

    @classmethod
    def full(cls) -> "JoinMode":
        return cls(None)

    @classmethod
    def random(cls, p: float) -> "JoinMode":
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"join probability must lie in [0, 1], got {p}")
        return cls(float(p))

    @classmethod
    def parse(cls, text: str) -> "JoinMode":
        text = text.strip().lower()
        if text in ("full", "fjg"):
            return cls.full()
        if text.startswith("p"):
            return cls.random(float(text[1:]) / 100.0)
        return cls.random(float(text))

    @property
    def name(self) -> str:
        return "full" if self.p is None else f"p{int(round(self.p * 100)):02d}"


def _sample_product_edges(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    chosen: set[int] = set()
    while len(chosen) < count:
        need = count - len(chosen)
        src = rng.integers(0, n, size=max(4 * need, 16))
        dst = rng.integers(0, n, size=src.size)
        for s, d in zip(src, dst):
            if s != d:
                chosen.add(int(s) * n + int(d))
                if len(chosen) == count:
                    break
    keys = np.array(sorted(chosen), dtype=np.int64)
    return np.stack([keys // n, keys % n], axis=1)


def _smooth_over_edges(values: np.ndarray, edges: np.ndarray, rounds: int) -> np.ndarray:
    n = len(values)
    neighbors = [[] for _ in range(n)]
    for s, d in edges:
        neighbors[s].append(d)
        neighbors[d].append(s)
    out = values.copy()
    for _ in range(rounds):
        nxt = out.copy()
        for i in range(n):
            if neighbors[i]:
                nxt[i] = 0.5 * out[i] + 0.5 * np.mean(out[neighbors[i]])
        out = nxt
    lo, hi = out.min(), out.max()
    if hi > lo:
        out = (out - lo) / (hi - lo)
    return out


def _skewed_count(rng: np.random.Generator, lo: int, hi: int) -> int:
    # cube of a uniform keeps most products small while allowing the cap
    u = rng.random()
    return min(lo + int((hi - lo + 1) * u ** 3), hi)


def generate_supply_graph(cfg: GenConfig) -> SupplyGraph:
    """Generate a seeded supply graph with the planted risk factor."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_products
    nodes = [(i, PRODUCT, None) for i in range(n)]
    edges = []
    product_edges = (_sample_product_edges(rng, n, cfg.n_product_edges)
                     if cfg.n_product_edges else np.zeros((0, 2), dtype=np.int64))
    for s, d in product_edges:
        edges.append((int(s), int(d), PRODUCT_PRODUCT))

    factor = _smooth_over_edges(rng.random(n), product_edges, _SMOOTHING_ROUNDS)
    risk_prob = np.clip(0.5 + 1.4 * (factor - 0.5), 0.02, 0.98)

    n_biased = int(round(cfg.biased_fraction * n))
    biased = set(rng.choice(n, size=n_biased, replace=False).tolist()) if n_biased else set()

    beta_b = rng.normal(size=BUSINESS_DIM)
    beta_b *= _BUSINESS_GAIN / np.linalg.norm(beta_b)
    beta_f = rng.normal(size=FINANCIAL_DIM)
    beta_f *= _FINANCIAL_GAIN / np.linalg.norm(beta_f)

    c_lo, c_hi = cfg.companies_per_product
    i_lo, i_hi = cfg.investors_per_company
    next_id = n
    for pid in range(n):
        if pid in biased and c_lo == 0 and rng.random() < _ZERO_COMPANY_SHARE:
            continue  # integrity-missing product: no companies at all
        count = max(1, _skewed_count(rng, c_lo, c_hi)) if c_hi >= 1 else 0
        if count == 0:
            continue
        degrade = rng.integers(0, count) if pid in biased else -1
        degrade_kind = rng.random() < 0.5  # True: drop statements, False: drop relations
        shift = cfg.signal_strength * (factor[pid] - 0.5)
        flag_prob = 1.0 - (1.0 - risk_prob[pid]) ** (1.0 / count)
        for k in range(count):
            cid = next_id
            next_id += 1
            business = shift * beta_b + rng.normal(0.0, _NOISE_STD, BUSINESS_DIM)
            financial = shift * beta_f + rng.normal(0.0, _NOISE_STD, FINANCIAL_DIM)
            risky = bool(rng.random() < flag_prob)
            if k == degrade and degrade_kind:
                record = CompanyRecord(business, None, risky,
                                       has_relations=True, has_statements=False)
            elif k == degrade:
                record = CompanyRecord(business, financial, risky,
                                       has_relations=False, has_statements=True)
            else:
                record = CompanyRecord(business, financial, risky)
            nodes.append((cid, LISTED_COMPANY, record))
            edges.append((cid, pid, COMPANY_PRODUCT))
            for _ in range(int(rng.integers(i_lo, i_hi + 1))):
                other = next_id
                next_id += 1
                if rng.random() < 0.5:
                    nodes.append((other, INVESTOR, None))
                    edges.append((other, cid, INVEST_OR_SUPPLY))
                else:
                    nodes.append((other, INVESTEE, None))
                    edges.append((cid, other, INVEST_OR_SUPPLY))
    return SupplyGraph(nodes, edges)


# ---------------------------------------------------------------------------
# company-level derivation


@dataclass(eq=False)
class CompanyGraph:
    """Directed company graph derived from product links, isolated nodes removed."""

    node_ids: np.ndarray
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    mode: str = "full"

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "nodes": self.node_ids.tolist(),
            "edges": self.edges.tolist(),
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
        }


def candidate_company_pairs(g: SupplyGraph) -> np.ndarray:
    """Deduplicated directed company pairs induced by product-to-product edges."""
    members = {pid: g.companies_of_product(pid) for pid in g.product_ids}
    pairs: set[tuple[int, int]] = set()
    for a, b in g.product_edges():
        for ca in members[a]:
            for cb in members[b]:
                if ca != cb:
                    pairs.add((ca, cb))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array(sorted(pairs), dtype=np.int64)


def derive_company_graph(g: SupplyGraph, mode: JoinMode, seed: int = 0) -> CompanyGraph:
    """Project product links onto companies and attach per-company features.

    Features are the company's financial statement (zeros when unpublished)
    concatenated with the mean business row of the products it serves.
    """
    pairs = candidate_company_pairs(g)
    if mode.p is not None:
        rng = np.random.default_rng(seed)
        pairs = pairs[rng.random(len(pairs)) < mode.p]
    active = np.unique(pairs) if pairs.size else np.array([], dtype=np.int64)
    index = {cid: i for i, cid in enumerate(active.tolist())}
    edges = (np.array([(index[s], index[d]) for s, d in pairs], dtype=np.int64)
             if pairs.size else np.zeros((0, 2), dtype=np.int64))

    business, _, _, _ = aggregate_product_features(g)
    product_row = {pid: i for i, pid in enumerate(g.product_ids)}
    served: dict[int, list[int]] = {}
    for pid in g.product_ids:
        for cid in g.companies_of_product(pid):
            served.setdefault(cid, []).append(product_row[pid])

    features = np.zeros((len(active), FINANCIAL_DIM + BUSINESS_DIM))
    labels = np.zeros(len(active), dtype=np.int8)
    for cid, i in index.items():
        rec = g.records[cid]
        if rec is not None and rec.financial is not None:
            features[i, :FINANCIAL_DIM] = rec.financial
        if served.get(cid):
            features[i, FINANCIAL_DIM:] = business[served[cid]].mean(axis=0)
        labels[i] = 1 if (rec is not None and rec.risk) else 0
    return CompanyGraph(active, edges, features, labels, mode=mode.name)


# ---------------------------------------------------------------------------
# headline statistics


@dataclass
class StatsRow:
    name: str
    n_edges: float | tuple
    betweenness_pct: float | tuple
    degree_pct: float | tuple
    eigenvector_pct: float | tuple
    closeness_pct: float | tuple
    columns = ("name", "edges", "betw%", "deg%", "eig%", "close%")

    def formatted(self) -> list[str]:
        def fmt(v, digits):
            if isinstance(v, tuple):
                return f"[{fmt(v[0], digits)}, {fmt(v[1], digits)}]"
            return f"{v:.{digits}f}" if digits else str(int(v))
        return [self.name, fmt(self.n_edges, 0),
                fmt(self.betweenness_pct, 7), fmt(self.degree_pct, 7),
                fmt(self.eigenvector_pct, 7), fmt(self.closeness_pct, 7)]


def dataset_stats(n_nodes: int, edges, name: str = "graph",
                  directed: bool = True) -> StatsRow:
    """Edge count plus average betweenness/degree/eigenvector/closeness, in percent."""
    if n_nodes <= 0:
        raise ValueError("dataset_stats needs a nonempty graph")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return StatsRow(
        name=name,
        n_edges=float(len(edges)),
        betweenness_pct=float(betweenness_centrality(n_nodes, edges, directed).values.mean() * 100),
        degree_pct=float(degree_centrality(n_nodes, edges, directed).values.mean() * 100),
        eigenvector_pct=float(eigenvector_centrality(n_nodes, edges).values.mean() * 100),
        closeness_pct=float(closeness_centrality(n_nodes, edges, directed).values.mean() * 100),
    )


def stats_table(g: SupplyGraph, modes=None, seed: int = 0,
                instances: int = 10) -> list[StatsRow]:
    """Stats rows per join mode; random modes report [min, max] over seeded instances."""
    if modes is None:
        modes = [JoinMode.full(), JoinMode.random(0.25),
                 JoinMode.random(0.5), JoinMode.random(0.75)]
    rows = []
    for mode in modes:
        if mode.p is None:
            cg = derive_company_graph(g, mode)
            if cg.n == 0:
                raise ValueError("company graph is empty; nothing to report")
            rows.append(dataset_stats(cg.n, cg.edges, name=mode.name))
            continue
        samples = []
        for k in range(instances):
            cg = derive_company_graph(g, mode, seed=seed + k)
            if cg.n == 0:
                continue
            samples.append(dataset_stats(cg.n, cg.edges, name=mode.name))
        if not samples:
            raise ValueError(f"all {mode.name} instances were empty")
        def span(attr):
            vals = [getattr(s, attr) for s in samples]
            return (min(vals), max(vals))
        rows.append(StatsRow(
            name=f"{mode.name}[0, {instances - 1}]",
            n_edges=span("n_edges"),
            betweenness_pct=span("betweenness_pct"),
            degree_pct=span("degree_pct"),
            eigenvector_pct=span("eigenvector_pct"),
            closeness_pct=span("closeness_pct"),
        ))
    return rows


def stats_to_csv(rows: list[StatsRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(StatsRow.columns)
    for row in rows:
        writer.writerow(row.formatted())
    return buf.getvalue()
