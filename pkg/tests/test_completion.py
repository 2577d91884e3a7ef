import numpy as np
import pytest

from hktgnn import autodiff as ad
from hktgnn.autodiff import Tensor
from hktgnn.completion import (
    CompletionParams,
    calibrate,
    complete_features,
    distribution_consistency_loss,
    domain_difference,
    neighbor_importance,
)

from helpers import check_gradients

OBS, UNOBS, ATTN = 5, 3, 4


def make_params(seed=0, **kw):
    return CompletionParams.init(np.random.default_rng(seed), OBS, UNOBS, ATTN, **kw)


def rand_instance(seed, n=8, biased_frac=0.4):
    rng = np.random.default_rng(seed)
    x_obs = Tensor(rng.normal(size=(n, OBS)))
    biased = rng.random(n) < biased_frac
    if not biased.any():
        biased[0] = True
    if biased.all():
        biased[-1] = False
    weights = rng.random(n) + 0.1
    return rng, x_obs, biased, weights


class TestDomainDifference:
    def test_symmetric_domains_give_zero(self):
        params = make_params()
        x = Tensor(np.vstack([np.ones((2, OBS)), np.ones((2, OBS))]))
        biased = np.array([False, False, True, True])
        weights = np.array([0.3, 0.2, 0.25, 0.25])  # equal mass per domain
        gap = domain_difference(x, biased, weights, params)
        assert np.allclose(gap.data, 0.0, atol=1e-12)

    def test_single_complete_term(self):
        params = make_params()
        params.obs_to_unobs.data[:] = 0.0
        params.obs_to_unobs.data[:UNOBS, :UNOBS] = np.eye(UNOBS)
        x = np.zeros((2, OBS))
        x[0, 0] = 1.0  # complete node carries e_1
        biased = np.array([False, True])
        weights = np.array([0.7, 0.0])  # biased node carries no mass
        gap = domain_difference(Tensor(x), biased, weights, params)
        assert np.allclose(gap.data, 0.7 * params.obs_to_unobs.data[0], atol=1e-15)

    def test_no_biased_nodes_zero_vector(self):
        params = make_params()
        gap = domain_difference(Tensor(np.ones((3, OBS))),
                                np.array([False] * 3), np.ones(3), params)
        assert np.all(gap.data == 0.0)

    def test_matches_naive_loop(self):
        params = make_params(3)
        _, x_obs, biased, weights = rand_instance(4)
        gap = domain_difference(x_obs, biased, weights, params).data
        naive = np.zeros(OBS)
        for i in range(len(biased)):
            naive += (-1 if biased[i] else 1) * x_obs.data[i] * weights[i]
        assert np.allclose(gap, naive @ params.obs_to_unobs.data, atol=1e-12)

    def test_drop_flag_forces_zero(self):
        params = make_params(5)
        _, x_obs, biased, weights = rand_instance(6)
        gap = domain_difference(x_obs, biased, weights, params, drop=True)
        assert np.all(gap.data == 0.0)


class TestCalibrate:
    def test_zero_gap_is_identity(self):
        params = make_params(1)
        x = Tensor(np.random.default_rng(2).normal(size=(4, UNOBS)))
        out = calibrate(x, Tensor(np.zeros(UNOBS)), params)
        assert np.array_equal(out.data, x.data)

    def test_zero_gate_matrix_is_identity(self):
        params = make_params(2)
        params.gate.data[:] = 0.0
        x = Tensor(np.random.default_rng(3).normal(size=(4, UNOBS)))
        gap = Tensor(np.random.default_rng(4).normal(size=UNOBS))
        assert np.array_equal(calibrate(x, gap, params).data, x.data)

    def test_gate_bounded(self):
        params = make_params(6)
        rng = np.random.default_rng(7)
        x = rng.normal(size=(10, UNOBS))
        gap = rng.normal(size=UNOBS)
        out = calibrate(Tensor(x), Tensor(gap), params).data
        assert np.all(np.abs(out - x) <= np.abs(gap)[None, :] + 1e-15)

    def test_single_vector_form(self):
        params = make_params(8)
        rng = np.random.default_rng(9)
        vec = rng.normal(size=UNOBS)
        gap = rng.normal(size=UNOBS)
        single = calibrate(Tensor(vec), Tensor(gap), params).data
        batch = calibrate(Tensor(vec[None, :]), Tensor(gap), params).data[0]
        assert np.array_equal(single, batch)

    def test_gradients(self):
        params = make_params(10)
        rng = np.random.default_rng(11)
        x = Tensor(rng.normal(size=(3, UNOBS)), requires_grad=True)
        gap_src = Tensor(rng.normal(size=(1, OBS)), requires_grad=True)

        def build():
            gap = ad.reshape(ad.matmul(gap_src, params.obs_to_unobs), (-1,))
            return ad.squared_l2(calibrate(x, gap, params))

        check_gradients(build, [x, gap_src, params.gate, params.obs_to_unobs])


class TestNeighborImportance:
    def test_single_provider_weight_one(self):
        params = make_params(12)
        x = Tensor(np.random.default_rng(13).normal(size=(2, OBS)))
        w = neighbor_importance(x, [0], [1], params)
        assert w.data.tolist() == [1.0]

    def test_identical_providers_split_evenly(self):
        params = make_params(14)
        x = np.zeros((3, OBS))
        x[0] = 1.0
        x[1] = x[2] = 0.5  # identical providers
        w = neighbor_importance(Tensor(x), [0, 0], [1, 2], params)
        assert np.allclose(w.data, 0.5, atol=1e-15)

    def test_weights_sum_to_one_per_receiver(self):
        params = make_params(15)
        rng, x_obs, _, _ = rand_instance(16, n=10)
        receivers = np.repeat(np.arange(4), 3)
        providers = rng.integers(4, 10, size=12)
        w = neighbor_importance(x_obs, receivers, providers, params).data
        sums = np.zeros(4)
        np.add.at(sums, receivers, w)
        assert np.allclose(sums, 1.0, atol=1e-12)


def complete_case(seed, n=10, steps=2, **kw):
    rng, x_obs, biased, weights = rand_instance(seed, n=n)
    pairs = {(int(a), int(b)) for a, b in rng.integers(0, n, (2 * n, 2)) if a != b}
    edges = np.array(sorted(pairs))
    x_start = rng.normal(size=(n, UNOBS))
    x_start[biased] = 0.0
    params = make_params(seed + 1000)
    out = complete_features(edges, x_obs, Tensor(x_start), biased, weights,
                            params, steps, **kw)
    return edges, x_obs, x_start, biased, weights, params, out


class TestCompleteFeatures:
    def test_all_complete_is_noop(self):
        n = 5
        rng = np.random.default_rng(17)
        x_start = rng.normal(size=(n, UNOBS))
        out, gap, trace = complete_features(
            np.array([(0, 1), (1, 2)]), Tensor(rng.normal(size=(n, OBS))),
            Tensor(x_start), np.zeros(n, dtype=bool), np.ones(n),
            make_params(18), steps=3)
        assert np.array_equal(out.data, x_start)
        assert trace.steps == [] and trace.unreached == []

    def test_zero_steps_is_noop(self):
        edges, _, x_start, biased, _, _, (out, gap, trace) = complete_case(19, steps=0)
        assert np.array_equal(out.data, x_start)
        assert trace.steps == []
        assert trace.unreached == np.flatnonzero(biased).tolist()

    def test_negative_steps_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            complete_case(20, steps=-1)

    def test_two_equal_calibrated_providers_reproduce_value(self):
        params = make_params(21)
        params.obs_to_unobs.data[:] = 0.0  # gap = 0, calibration = identity
        c = np.array([1.5, -2.0, 0.25])
        x_start = np.vstack([c, c, np.zeros(UNOBS)])
        rng = np.random.default_rng(22)
        out, _, trace = complete_features(
            np.array([(0, 2), (1, 2)]), Tensor(rng.normal(size=(3, OBS))),
            Tensor(x_start), np.array([False, False, True]),
            np.ones(3), params, steps=1)
        assert trace.steps == [[2]]
        assert np.allclose(out.data[2], c, atol=1e-12)

    def test_frontier_monotone_single_membership_change(self):
        _, _, _, biased, _, _, (out, gap, trace) = complete_case(23, n=14, steps=4)
        seen = set()
        for step in trace.steps:
            assert not (set(step) & seen)  # each node completed at most once
            seen.update(step)
        assert seen <= set(np.flatnonzero(biased).tolist())
        assert len(trace.steps) <= 4

    def test_unreachable_biased_nodes_flagged(self):
        n = 4
        # biased node 3 is disconnected
        edges = np.array([(0, 1), (1, 2)])
        rng = np.random.default_rng(24)
        biased = np.array([False, False, True, True])
        x_start = rng.normal(size=(n, UNOBS))
        x_start[biased] = 0.0
        out, _, trace = complete_features(edges, Tensor(rng.normal(size=(n, OBS))),
                                          Tensor(x_start), biased, np.ones(n),
                                          make_params(25), steps=5)
        assert trace.unreached == [3]
        assert np.all(out.data[3] == 0.0)
        assert trace.completed == [2]

    def test_edge_order_cannot_change_results(self):
        edges, x_obs, x_start, biased, weights, params, (out, _, _) = \
            complete_case(26, n=12, steps=3)
        rng = np.random.default_rng(27)
        for _ in range(2):
            shuffled = edges[rng.permutation(len(edges))]
            again, _, _ = complete_features(shuffled, x_obs, Tensor(x_start),
                                            biased, weights, params, 3)
            assert np.array_equal(again.data, out.data)

    def test_second_step_uses_first_step_nodes(self):
        # chain: complete 0 -> biased 1 -> biased 2
        params = make_params(28)
        rng = np.random.default_rng(29)
        x_start = np.vstack([rng.normal(size=UNOBS), np.zeros(UNOBS), np.zeros(UNOBS)])
        out, _, trace = complete_features(
            np.array([(0, 1), (1, 2)]), Tensor(rng.normal(size=(3, OBS))),
            Tensor(x_start), np.array([False, True, True]), np.ones(3),
            params, steps=2)
        assert trace.steps == [[1], [2]]
        assert np.any(out.data[2] != 0.0)

    def test_early_stop_when_frontier_stalls(self):
        params = make_params(30)
        rng = np.random.default_rng(31)
        out, _, trace = complete_features(
            np.array([(0, 1)]), Tensor(rng.normal(size=(3, OBS))),
            Tensor(np.vstack([rng.normal(size=UNOBS), np.zeros(UNOBS),
                              np.zeros(UNOBS)])),
            np.array([False, True, True]), np.ones(3), params, steps=50)
        assert len(trace.steps) == 1  # node 2 is unreachable; loop stops

    def test_convex_box_property(self):
        # one-step completions stay inside the box of calibrated provider values
        for trial in range(100):
            edges, x_obs, x_start, biased, weights, params, (out, gap, trace) = \
                complete_case(1000 + trial, n=8, steps=1)
            if not trace.steps:
                continue
            calibrated = calibrate(Tensor(x_start), gap, params).data
            nbr = [set() for _ in range(8)]
            for s, d in edges:
                nbr[s].add(d)
                nbr[d].add(s)
            for node in trace.steps[0]:
                providers = [p for p in nbr[node] if not biased[p]]
                box = calibrated[providers]
                assert np.all(out.data[node] >= box.min(axis=0) - 1e-9)
                assert np.all(out.data[node] <= box.max(axis=0) + 1e-9)

    def test_late_calibration_flag_changes_second_step_only(self):
        edges, x_obs, x_start, biased, weights, params, (out_cal, _, trace) = \
            complete_case(32, n=12, steps=2)
        out_raw, _, trace_raw = complete_features(
            edges, x_obs, Tensor(x_start), biased, weights, params, 2,
            late_calibration=False)
        assert trace.steps == trace_raw.steps
        if len(trace.steps) >= 1:
            first = trace.steps[0]
            assert np.allclose(out_cal.data[first], out_raw.data[first], atol=1e-12)


class TestDistributionLoss:
    def test_zero_when_reconstruction_matches_gap(self):
        # no completed nodes but forced: use completed set manually via trace
        from hktgnn.completion import FrontierTrace
        params = make_params(33)
        n = 4
        rng = np.random.default_rng(34)
        biased = np.array([False, False, True, True])
        weights = np.array([0.5, 0.5, 1.0, 1.0])
        x_unobs = rng.normal(size=(n, UNOBS))
        trace = FrontierTrace(steps=[[2, 3]])
        inner = (weights[0] * x_unobs[0] + weights[1] * x_unobs[1]
                 - weights[2] * x_unobs[2] - weights[3] * x_unobs[3])
        loss = distribution_consistency_loss(Tensor(inner), Tensor(x_unobs),
                                             biased, weights, trace)
        assert loss.item() == pytest.approx(0.0, abs=1e-18)

    def test_zero_without_completion(self):
        from hktgnn.completion import FrontierTrace
        loss = distribution_consistency_loss(
            Tensor(np.ones(UNOBS)), Tensor(np.ones((3, UNOBS))),
            np.array([False, True, True]), np.ones(3), FrontierTrace())
        assert loss.item() == 0.0

    def test_matches_naive_recomputation(self):
        edges, x_obs, x_start, biased, weights, params, (out, gap, trace) = \
            complete_case(35, n=10, steps=2)
        if not trace.completed:
            pytest.skip("instance completed nothing")
        loss = distribution_consistency_loss(gap, out, biased, weights, trace)
        naive = gap.data.copy()
        for i in np.flatnonzero(~biased):
            naive -= weights[i] * out.data[i]
        for i in trace.completed:
            naive += weights[i] * out.data[i]
        assert loss.item() == pytest.approx(float(naive @ naive), rel=1e-12)

    def test_gradients_through_completion_and_loss(self):
        rng = np.random.default_rng(36)
        n = 6
        biased = np.array([False, False, False, True, True, False])
        weights = rng.random(n) + 0.5
        edges = np.array([(0, 3), (1, 3), (3, 4), (2, 4), (5, 0)])
        x_obs_leaf = Tensor(rng.normal(size=(n, OBS)), requires_grad=True)
        x_start = rng.normal(size=(n, UNOBS))
        x_start[biased] = 0.0
        start_leaf = Tensor(x_start, requires_grad=True)
        params = make_params(37)

        def build():
            out, gap, trace = complete_features(edges, x_obs_leaf, start_leaf,
                                                biased, weights, params, 2)
            dist = distribution_consistency_loss(gap, out, biased, weights, trace)
            return ad.add(ad.squared_l2(ad.tsum(out, axis=0)), dist)

        check_gradients(build, params.tensors() + [x_obs_leaf, start_leaf])
