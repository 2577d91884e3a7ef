"""Supply-chain graph model.

A heterogeneous directed graph of products, listed companies and their
investors/investees is reduced to a homogeneous product graph: each product
induces a single-product subgraph (its companies plus their investment
neighborhood), company records are aggregated into per-product feature rows,
and products are labeled risky/complete-vs-biased. The result is a CBGraph
whose feature matrix is the concatenation [embedding | business | financial]
with fixed widths 64/17/18.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

PRODUCT = "product"
LISTED_COMPANY = "listed_company"
INVESTOR = "investor"
INVESTEE = "investee"
NODE_KINDS = (PRODUCT, LISTED_COMPANY, INVESTOR, INVESTEE)

INVEST_OR_SUPPLY = "invest_or_supply"
COMPANY_PRODUCT = "company_product"
PRODUCT_PRODUCT = "product_product"
EDGE_KINDS = (INVEST_OR_SUPPLY, COMPANY_PRODUCT, PRODUCT_PRODUCT)

EMBED_DIM = 64
BUSINESS_DIM = 17
FINANCIAL_DIM = 18
FEATURE_DIM = EMBED_DIM + BUSINESS_DIM + FINANCIAL_DIM


class GraphError(ValueError):
    """Structural violation in a supply graph or CB graph."""


@dataclass(eq=False)
class CompanyRecord:
    """Observed company data: business vector, optional statements, risk flag."""

    business: np.ndarray
    financial: np.ndarray | None
    risk: bool
    has_relations: bool = True
    has_statements: bool = True

    def __post_init__(self):
        self.business = np.asarray(self.business, dtype=np.float64)
        if self.business.shape != (BUSINESS_DIM,):
            raise GraphError(f"business vector must have {BUSINESS_DIM} entries, "
                             f"got {self.business.shape}")
        if self.financial is not None:
            self.financial = np.asarray(self.financial, dtype=np.float64)
            if self.financial.shape != (FINANCIAL_DIM,):
                raise GraphError(f"financial vector must have {FINANCIAL_DIM} entries, "
                                 f"got {self.financial.shape}")
        elif self.has_statements:
            raise GraphError("has_statements=True requires a financial vector")


class SupplyGraph:
    """Immutable heterogeneous graph with typed nodes and edges."""

    def __init__(self, nodes, edges):
        self.kinds: dict[int, str] = {}
        self.records: dict[int, CompanyRecord | None] = {}
        for node_id, kind, record in nodes:
            node_id = int(node_id)
            if node_id in self.kinds:
                raise GraphError(f"duplicate node id {node_id}")
            if kind not in NODE_KINDS:
                raise GraphError(f"unknown node kind {kind!r}")
            self.kinds[node_id] = kind
            self.records[node_id] = record
        seen = set()
        cleaned = []
        for src, dst, kind in edges:
            src, dst = int(src), int(dst)
            if kind not in EDGE_KINDS:
                raise GraphError(f"unknown edge kind {kind!r}")
            if src == dst:
                raise GraphError(f"self-loop on node {src}")
            if src not in self.kinds or dst not in self.kinds:
                raise GraphError(f"edge ({src}, {dst}) references a missing node")
            self._check_edge_kinds(src, dst, kind)
            key = (src, dst, kind)
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
            cleaned.append(key)
        self.edges = sorted(cleaned)
        self.node_ids = sorted(self.kinds)
        self._out: dict[int, list] = {i: [] for i in self.node_ids}
        self._in: dict[int, list] = {i: [] for i in self.node_ids}
        for src, dst, kind in self.edges:
            self._out[src].append((dst, kind))
            self._in[dst].append((src, kind))

    def _check_edge_kinds(self, src, dst, kind):
        ks, kd = self.kinds[src], self.kinds[dst]
        if kind == COMPANY_PRODUCT:
            if not (ks == LISTED_COMPANY and kd == PRODUCT):
                raise GraphError(f"company_product edge must be listed_company->product, "
                                 f"got {ks}->{kd}")
        elif kind == PRODUCT_PRODUCT:
            if not (ks == PRODUCT and kd == PRODUCT):
                raise GraphError(f"product_product edge must be product->product, "
                                 f"got {ks}->{kd}")
        else:
            ok = (ks == LISTED_COMPANY and kd in (LISTED_COMPANY, INVESTOR, INVESTEE)) or \
                 (kd == LISTED_COMPANY and ks in (LISTED_COMPANY, INVESTOR, INVESTEE))
            if not ok:
                raise GraphError(f"invest_or_supply edge must touch a listed company, "
                                 f"got {ks}->{kd}")

    @property
    def product_ids(self) -> list[int]:
        return [i for i in self.node_ids if self.kinds[i] == PRODUCT]

    def companies_of_product(self, product_id: int) -> list[int]:
        return sorted(src for src, kind in self._in[product_id]
                      if kind == COMPANY_PRODUCT)

    def product_edges(self) -> list[tuple[int, int]]:
        return [(s, d) for s, d, k in self.edges if k == PRODUCT_PRODUCT]

    def __eq__(self, other):
        if not isinstance(other, SupplyGraph):
            return NotImplemented
        if self.node_ids != other.node_ids or self.edges != other.edges:
            return False
        for i in self.node_ids:
            if self.kinds[i] != other.kinds[i]:
                return False
            a, b = self.records[i], other.records[i]
            if (a is None) != (b is None):
                return False
            if a is not None:
                same = (np.array_equal(a.business, b.business)
                        and a.risk == b.risk
                        and a.has_relations == b.has_relations
                        and a.has_statements == b.has_statements)
                if not same:
                    return False
                if (a.financial is None) != (b.financial is None):
                    return False
                if a.financial is not None and not np.array_equal(a.financial, b.financial):
                    return False
        return True


@dataclass(eq=False)
class ProductSubgraph:
    """One product plus its companies and their investment neighborhood."""

    root: int
    node_ids: list[int]
    node_kinds: list[str]
    edges: list[tuple[int, int]]
    records: dict[int, CompanyRecord | None] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def local_index(self) -> dict[int, int]:
        return {node: i for i, node in enumerate(self.node_ids)}

    def local_edges(self) -> np.ndarray:
        index = self.local_index()
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array([(index[s], index[d]) for s, d in self.edges], dtype=np.int64)

    def listed_companies(self) -> list[int]:
        return [i for i, k in zip(self.node_ids, self.node_kinds)
                if k == LISTED_COMPANY]


def extract_product_subgraphs(g: SupplyGraph) -> list[ProductSubgraph]:
    """Build one subgraph per product: attached companies, then the nodes their
    invest/supply edges touch; product-to-product edges are excluded."""
    subs = []
    for pid in g.product_ids:
        first_hop = set(g.companies_of_product(pid))
        members = {pid} | first_hop
        for c in first_hop:
            for other, kind in g._out[c]:
                if kind == INVEST_OR_SUPPLY:
                    members.add(other)
            for other, kind in g._in[c]:
                if kind == INVEST_OR_SUPPLY:
                    members.add(other)
        node_ids = sorted(members)
        edges = [(s, d) for s, d, k in g.edges
                 if k != PRODUCT_PRODUCT and s in members and d in members]
        subs.append(ProductSubgraph(
            root=pid,
            node_ids=node_ids,
            node_kinds=[g.kinds[i] for i in node_ids],
            edges=edges,
            records={i: g.records[i] for i in node_ids},
        ))
    return subs


def _constituents(sub: ProductSubgraph) -> list[CompanyRecord]:
    return [sub.records[i] for i in sub.listed_companies()
            if sub.records[i] is not None]


def assign_cb_labels(g: SupplyGraph, subgraphs=None) -> np.ndarray:
    """Per-product complete/biased label, in ascending product-id order.

    A product is biased (1) when its subgraph has a company with missing
    relations, a listed company with missing statements (a record-less listed
    company counts as both), or no attached companies at all.
    """
    subs = subgraphs if subgraphs is not None else extract_product_subgraphs(g)
    labels = np.zeros(len(subs), dtype=np.int8)
    for i, sub in enumerate(subs):
        companies = sub.listed_companies()
        if not companies:
            labels[i] = 1
            continue
        for c in companies:
            rec = sub.records[c]
            if rec is None or not rec.has_relations or not rec.has_statements:
                labels[i] = 1
                break
    return labels


def aggregate_product_features(g: SupplyGraph, subgraphs=None):
    """Aggregate company records per product.

    Returns (business, financial, observed, risk): business rows are means of
    constituent business vectors, financial rows are means of the statements
    that exist, ``observed`` marks complete products (biased products keep
    their aggregated values but are masked), and risk is 1 when any
    constituent company is risky. Zero-company products get zero rows and
    risk 1.
    """
    subs = subgraphs if subgraphs is not None else extract_product_subgraphs(g)
    labels = assign_cb_labels(g, subs)
    n = len(subs)
    business = np.zeros((n, BUSINESS_DIM))
    financial = np.zeros((n, FINANCIAL_DIM))
    risk = np.zeros(n, dtype=np.int8)
    for i, sub in enumerate(subs):
        recs = _constituents(sub)
        if not recs:
            risk[i] = 1
            continue
        business[i] = np.mean([r.business for r in recs], axis=0)
        stated = [r.financial for r in recs if r.financial is not None]
        if stated:
            financial[i] = np.mean(stated, axis=0)
        risk[i] = 1 if any(r.risk for r in recs) else 0
    observed = labels == 0
    return business, financial, observed, risk


@dataclass(eq=False)
class CBGraph:
    """Homogeneous product graph with partitioned features and both label sets.

    ``x_financial`` keeps aggregated values even for biased rows; consumers
    must honor ``financial_observed`` instead of reading masked rows.
    """

    node_ids: np.ndarray
    edges: np.ndarray
    x_embed: np.ndarray
    x_business: np.ndarray
    x_financial: np.ndarray
    financial_observed: np.ndarray
    risk: np.ndarray
    cb_label: np.ndarray

    def __post_init__(self):
        self.node_ids = np.asarray(self.node_ids, dtype=np.int64)
        n = len(self.node_ids)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= n:
                raise GraphError("edge endpoint out of range")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise GraphError("self-loop in product edges")
            keys = np.unique(self.edges[:, 0] * n + self.edges[:, 1])
            self.edges = np.stack([keys // n, keys % n], axis=1)
        self.x_embed = np.asarray(self.x_embed, dtype=np.float64)
        self.x_business = np.asarray(self.x_business, dtype=np.float64)
        self.x_financial = np.asarray(self.x_financial, dtype=np.float64)
        for name, mat, dim in (("embedding", self.x_embed, EMBED_DIM),
                               ("business", self.x_business, BUSINESS_DIM),
                               ("financial", self.x_financial, FINANCIAL_DIM)):
            if mat.shape != (n, dim):
                raise GraphError(f"{name} matrix must be {n}x{dim}, got {mat.shape}")
        self.financial_observed = np.asarray(self.financial_observed, dtype=bool)
        self.risk = np.asarray(self.risk, dtype=np.int8)
        self.cb_label = np.asarray(self.cb_label, dtype=np.int8)
        for name, vec in (("observed mask", self.financial_observed),
                          ("risk labels", self.risk), ("cb labels", self.cb_label)):
            if vec.shape != (n,):
                raise GraphError(f"{name} must have length {n}, got {vec.shape}")
        if not np.all(np.isin(self.risk, (0, 1))) or not np.all(np.isin(self.cb_label, (0, 1))):
            raise GraphError("labels must be 0/1")
        if np.any((self.cb_label == 0) & ~self.financial_observed):
            raise GraphError("complete nodes must have observed financial features")

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def to_dict(self) -> dict:
        return {
            "nodes": self.node_ids.tolist(),
            "edges": self.edges.tolist(),
            "X_E": self.x_embed.tolist(),
            "X_B": self.x_business.tolist(),
            "X_F": self.x_financial.tolist(),
            "mask_F": self.financial_observed.tolist(),
            "Y": self.risk.tolist(),
            "Psi": self.cb_label.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CBGraph":
        return cls(
            node_ids=payload["nodes"],
            edges=payload["edges"],
            x_embed=payload["X_E"],
            x_business=payload["X_B"],
            x_financial=payload["X_F"],
            financial_observed=payload["mask_F"],
            risk=payload["Y"],
            cb_label=payload["Psi"],
        )


def build_cb_graph(g: SupplyGraph, x_embed: np.ndarray,
                   subgraphs=None) -> CBGraph:
    """Assemble the product-level CBGraph from a supply graph and embedding rows."""
    products = g.product_ids
    x_embed = np.asarray(x_embed, dtype=np.float64)
    if x_embed.shape != (len(products), EMBED_DIM):
        raise GraphError(f"embedding matrix must be {len(products)}x{EMBED_DIM}, "
                         f"got {x_embed.shape}")
    subs = subgraphs if subgraphs is not None else extract_product_subgraphs(g)
    labels = assign_cb_labels(g, subs)
    business, financial, observed, risk = aggregate_product_features(g, subs)
    index = {pid: i for i, pid in enumerate(products)}
    edges = [(index[s], index[d]) for s, d in g.product_edges()]
    return CBGraph(
        node_ids=np.array(products, dtype=np.int64),
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        x_embed=x_embed,
        x_business=business,
        x_financial=financial,
        financial_observed=observed,
        risk=risk,
        cb_label=labels,
    )


# ---------------------------------------------------------------------------
# JSON interchange


def supply_graph_to_dict(g: SupplyGraph, config: dict | None = None) -> dict:
    nodes = []
    for i in g.node_ids:
        entry: dict = {"id": i, "kind": g.kinds[i]}
        rec = g.records[i]
        if rec is not None:
            entry["business"] = rec.business.tolist()
            entry["financial"] = None if rec.financial is None else rec.financial.tolist()
            entry["risk"] = bool(rec.risk)
            entry["has_relations"] = bool(rec.has_relations)
            entry["has_statements"] = bool(rec.has_statements)
        nodes.append(entry)
    payload = {
        "nodes": nodes,
        "edges": [{"src": s, "dst": d, "kind": k} for s, d, k in g.edges],
    }
    if config is not None:
        payload["config"] = config
    return payload


def supply_graph_from_dict(payload: dict) -> SupplyGraph:
    nodes = []
    for entry in payload["nodes"]:
        record = None
        if "business" in entry:
            record = CompanyRecord(
                business=entry["business"],
                financial=entry.get("financial"),
                risk=bool(entry.get("risk", False)),
                has_relations=bool(entry.get("has_relations", True)),
                has_statements=bool(entry.get("has_statements", True)),
            )
        nodes.append((entry["id"], entry["kind"], record))
    edges = [(e["src"], e["dst"], e["kind"]) for e in payload["edges"]]
    return SupplyGraph(nodes, edges)


def save_supply_graph(g: SupplyGraph, path, config: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(supply_graph_to_dict(g, config), fh, indent=1)
        fh.write("\n")


def load_supply_graph(path) -> SupplyGraph:
    with open(path, encoding="utf-8") as fh:
        return supply_graph_from_dict(json.load(fh))
