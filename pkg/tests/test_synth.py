import numpy as np
import pytest

from hktgnn.supply import COMPANY_PRODUCT, PRODUCT_PRODUCT
from hktgnn.synth import (
    GenConfig,
    JoinMode,
    candidate_company_pairs,
    dataset_stats,
    derive_company_graph,
    generate_supply_graph,
    stats_table,
    stats_to_csv,
)
from hktgnn.supply import aggregate_product_features, assign_cb_labels

from test_centrality import oracle_betweenness, oracle_closeness


def small_cfg(**kw):
    base = dict(n_products=20, n_product_edges=40, companies_per_product=(0, 5),
                investors_per_company=(0, 2), biased_fraction=0.3, seed=1)
    base.update(kw)
    return GenConfig(**base)


class TestGenerate:
    def test_exact_product_and_edge_counts(self):
        cfg = GenConfig(n_products=430, n_product_edges=1875,
                        companies_per_product=(0, 6),
                        investors_per_company=(0, 1), seed=7)
        g = generate_supply_graph(cfg)
        assert len(g.product_ids) == 430
        assert sum(1 for _, _, k in g.edges if k == PRODUCT_PRODUCT) == 1875

    def test_determinism(self):
        cfg = small_cfg(seed=11)
        assert generate_supply_graph(cfg) == generate_supply_graph(cfg)

    def test_zero_biased_fraction_gives_all_complete(self):
        g = generate_supply_graph(small_cfg(biased_fraction=0.0))
        assert assign_cb_labels(g).sum() == 0

    def test_biased_fraction_recovered_by_labeling(self):
        cfg = small_cfg(n_products=40, biased_fraction=0.25, seed=3)
        g = generate_supply_graph(cfg)
        assert assign_cb_labels(g).sum() == round(0.25 * 40)

    def test_infeasible_edge_count_rejected(self):
        with pytest.raises(ValueError, match="infeasible"):
            GenConfig(n_products=3, n_product_edges=7).validate()

    def test_company_counts_within_range(self):
        g = generate_supply_graph(small_cfg(companies_per_product=(0, 5)))
        for pid in g.product_ids:
            assert len(g.companies_of_product(pid)) <= 5

    def test_labels_correlate_with_planted_factor(self):
        # with full signal, risky and clean products separate in business space
        g = generate_supply_graph(small_cfg(n_products=60, n_product_edges=150,
                                            signal_strength=1.0, seed=2))
        business, _, _, risk = aggregate_product_features(g)
        labels = assign_cb_labels(g)
        keep = labels == 0
        risky = business[keep & (risk == 1)]
        clean = business[keep & (risk == 0)]
        gap = np.linalg.norm(risky.mean(axis=0) - clean.mean(axis=0))
        assert gap > 0.2


class TestDerive:
    def graph_two_products(self):
        cfg = GenConfig(n_products=2, n_product_edges=1,
                        companies_per_product=(2, 3),
                        investors_per_company=(0, 0), biased_fraction=0.0, seed=4)
        return generate_supply_graph(cfg)

    def test_full_join_cross_product(self):
        g = self.graph_two_products()
        sizes = [len(g.companies_of_product(p)) for p in g.product_ids]
        (a, b), = [tuple(e) for e in [g.product_edges()[0]]]
        expected = len(g.companies_of_product(a)) * len(g.companies_of_product(b))
        cg = derive_company_graph(g, JoinMode.full())
        assert len(cg.edges) == expected
        assert min(sizes) >= 2

    def test_random_join_p0_empty(self):
        cg = derive_company_graph(self.graph_two_products(), JoinMode.random(0.0))
        assert cg.n == 0 and len(cg.edges) == 0

    def test_random_join_p1_equals_full(self):
        g = self.graph_two_products()
        full = derive_company_graph(g, JoinMode.full())
        all_kept = derive_company_graph(g, JoinMode.random(1.0))
        assert len(full.edges) == len(all_kept.edges)

    def test_full_join_count_matches_bruteforce(self):
        g = generate_supply_graph(GenConfig(
            n_products=8, n_product_edges=16, companies_per_product=(0, 4),
            investors_per_company=(0, 0), biased_fraction=0.2, seed=6))
        members = {p: g.companies_of_product(p) for p in g.product_ids}
        expected = set()
        for s, d, k in g.edges:
            if k == PRODUCT_PRODUCT:
                for ca in members[s]:
                    for cb in members[d]:
                        if ca != cb:
                            expected.add((ca, cb))
        assert len(derive_company_graph(g, JoinMode.full()).edges) == len(expected)
        assert candidate_company_pairs(g).shape[0] == len(expected)

    def test_expected_edge_count_increases_with_p(self):
        g = generate_supply_graph(small_cfg(seed=8))
        counts = []
        for p in (0.25, 0.5, 0.75):
            total = sum(len(derive_company_graph(g, JoinMode.random(p), seed=s).edges)
                        for s in range(5))
            counts.append(total)
        assert counts[0] < counts[1] < counts[2]

    def test_isolated_companies_removed(self):
        cg = derive_company_graph(self.graph_two_products(), JoinMode.full())
        touched = set(cg.edges[:, 0]) | set(cg.edges[:, 1])
        assert touched == set(range(cg.n))

    def test_features_are_statement_plus_product_context(self):
        g = self.graph_two_products()
        cg = derive_company_graph(g, JoinMode.full())
        business, _, _, _ = aggregate_product_features(g)
        prow = {p: i for i, p in enumerate(g.product_ids)}
        for i, cid in enumerate(cg.node_ids.tolist()):
            rec = g.records[cid]
            assert np.allclose(cg.features[i, :18], rec.financial)
            pids = [p for p in g.product_ids if cid in g.companies_of_product(p)]
            ctx = business[[prow[p] for p in pids]].mean(axis=0)
            assert np.allclose(cg.features[i, 18:], ctx)


class TestJoinMode:
    def test_parse(self):
        assert JoinMode.parse("full").p is None
        assert JoinMode.parse("p25").p == 0.25
        assert JoinMode.parse("0.4").p == 0.4

    def test_invalid_probability(self):
        with pytest.raises(ValueError):
            JoinMode.random(1.5)


class TestStats:
    def test_directed_3cycle_degree_100(self):
        row = dataset_stats(3, [(0, 1), (1, 2), (2, 0)])
        assert row.degree_pct == pytest.approx(100.0)

    def test_single_edge_betweenness_zero(self):
        row = dataset_stats(3, [(0, 1)])
        assert row.betweenness_pct == 0.0

    def test_random_join_stats_match_naive_oracles(self):
        g = generate_supply_graph(GenConfig(
            n_products=4, n_product_edges=6, companies_per_product=(1, 3),
            investors_per_company=(0, 0), biased_fraction=0.0, seed=12))
        cg = derive_company_graph(g, JoinMode.random(0.5), seed=1)
        row = dataset_stats(cg.n, cg.edges, directed=True)
        assert row.betweenness_pct == pytest.approx(
            oracle_betweenness(cg.n, cg.edges, True).mean() * 100, abs=1e-12)
        assert row.closeness_pct == pytest.approx(
            oracle_closeness(cg.n, cg.edges, True).mean() * 100, abs=1e-12)

    def test_stats_table_ranges_over_instances(self):
        g = generate_supply_graph(small_cfg(seed=13))
        rows = stats_table(g, [JoinMode.full(), JoinMode.random(0.5)],
                           seed=0, instances=3)
        assert isinstance(rows[0].n_edges, float)
        lo, hi = rows[1].n_edges
        assert lo <= hi
        csv_text = stats_to_csv(rows)
        assert csv_text.splitlines()[0] == "name,edges,betw%,deg%,eig%,close%"
        assert "p50[0, 2]" in csv_text

    def test_empty_graph_rejected(self):
        with pytest.raises(ValueError):
            dataset_stats(0, [])
