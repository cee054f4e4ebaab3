import itertools
import math

import numpy as np
import pytest

from bklab.dist import DiscreteDist, EqualRevenueCapped, ProductDist, ShiftedEqualRevenue
from bklab.duality import (
    SINK,
    FlowNetwork,
    RegionMode,
    VirtualTransform,
    build_region_flow,
    check_flow_conservation,
    multi_bidder_bound,
    region_index_table,
    region_of,
    rev_j_bound,
    single_bidder_bound,
    virtual_transform,
)
from bklab.optrev import lagrangian_value, opt_rev_single, type_space

UNIFORM2 = DiscreteDist((1.0, 2.0), (0.5, 0.5))
UNIFORM3 = DiscreteDist((1.0, 2.0, 3.0), (1 / 3, 1 / 3, 1 / 3))
UNIFORM4 = DiscreteDist((1.0, 2.0, 3.0, 4.0), (0.25, 0.25, 0.25, 0.25))
MODES = (RegionMode.VALUE, RegionMode.QUANTILE)


def random_product(rng, m=None, max_support=4, max_value=8):
    m = m or int(rng.integers(1, 4))
    items = []
    for _ in range(m):
        size = int(rng.integers(2, max_support + 1))
        values = np.sort(rng.choice(np.arange(1, max_value + 1), size=size, replace=False))
        probs = rng.random(size) + 0.2
        probs /= probs.sum()
        items.append(DiscreteDist(tuple(float(v) for v in values), tuple(probs)))
    return ProductDist(tuple(items))


def brute_bound(F, mode):
    """Independent enumeration of the one-buyer bound over the full type grid."""
    total = 0.0
    supports = [list(zip(d.values, d.probs)) for d in F.items]
    for combo in itertools.product(*supports):
        v = [c[0] for c in combo]
        p = math.prod(c[1] for c in combo)
        j = region_of(v, F, mode)
        for jj, d in enumerate(F.items):
            if jj == j:
                total += p * max(d.virtual_value(v[jj]), 0.0)
            else:
                total += p * v[jj]
    return total


def brute_item_term(F, n, j, mode):
    """E[max over bidders of the clamped region score for item j]."""
    supports = [list(zip(d.values, d.probs)) for d in F.items]
    types = list(itertools.product(*supports))
    total = 0.0
    for profile in itertools.product(types, repeat=n):
        p = math.prod(c[1] for t in profile for c in t)
        best = -math.inf
        for t in profile:
            v = [c[0] for c in t]
            if region_of(v, F, mode) == j:
                score = max(F.items[j].virtual_value(v[j]), 0.0)
            else:
                score = v[j]
            best = max(best, score)
        total += p * best
    return total


class TestRegionOf:
    def test_iid_items_agree_across_modes(self):
        F = ProductDist((UNIFORM3, UNIFORM3))
        for v in itertools.product([1.0, 2.0, 3.0], repeat=2):
            assert region_of(v, F, "value") == region_of(v, F, "quantile")

    def test_quantile_prefers_rarer_high_value(self):
        F = ProductDist((UNIFORM3, DiscreteDist((2.0, 3.0), (0.5, 0.5))))
        assert region_of((2.0, 2.0), F, "quantile") == 0
        assert region_of((2.0, 2.0), F, "value") == 0  # tie, smallest index

    def test_modes_can_disagree(self):
        long_tail = DiscreteDist(tuple(float(v) for v in range(2, 8)), (1 / 6,) * 6)
        F = ProductDist((UNIFORM3, long_tail))
        assert region_of((2.0, 3.0), F, "value") == 1
        assert region_of((2.0, 3.0), F, "quantile") == 0

    def test_counterexample_pair_value_mode(self):
        F = ProductDist((EqualRevenueCapped(100.0), ShiftedEqualRevenue(100.0)))
        assert region_of((3.0, 105.0), F, "value") == 1
        assert region_of((100.0, 100.5), F, "value") == 1

    def test_table_matches_pointwise(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            F = random_product(rng)
            table = region_index_table(F, "quantile")
            supports = [d.values for d in F.items]
            for idx, combo in enumerate(itertools.product(*supports)):
                assert table[idx] == region_of(list(combo), F, "quantile")

    def test_type_grid_matches_lp_order(self):
        F = ProductDist((UNIFORM2, UNIFORM3))
        net = build_region_flow(F, "value")
        lp_types, lp_probs = type_space(F.items)
        assert net.types == pytest.approx(lp_types)
        assert lp_probs == pytest.approx(np.full(6, 1 / 6))


class TestBuildRegionFlow:
    def test_single_item_chain_weights(self):
        F = ProductDist((UNIFORM3,))
        net = build_region_flow(F, "value")
        assert net.lam == pytest.approx({(2, 1): 1 / 3, (1, 0): 2 / 3, (0, SINK): 1.0})

    def test_two_item_iid_uniform2_conservation(self):
        F = ProductDist((UNIFORM2, UNIFORM2))
        for mode in MODES:
            net = build_region_flow(F, mode)
            assert check_flow_conservation(net, F)

    def test_two_item_hand_weights(self):
        F = ProductDist((UNIFORM2, UNIFORM2))
        net = build_region_flow(F, "value")
        # regions: (1,1),(2,1),(2,2) to item 0; (1,2) to item 1
        assert net.lam == pytest.approx(
            {(2, 0): 0.25, (0, SINK): 0.5, (3, SINK): 0.25, (1, SINK): 0.25}
        )

    def test_random_instances_conserve(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            F = random_product(rng)
            for mode in MODES:
                net = build_region_flow(F, mode)
                assert check_flow_conservation(net, F)
                assert all(w >= 0 for w in net.lam.values())

    def test_custom_regions_must_be_upward_closed(self):
        F = ProductDist((UNIFORM2, UNIFORM2))
        bad = np.array([1, 0, 0, 0])  # (1,1) claims item 1 but (1,2) does not
        with pytest.raises(ValueError):
            build_region_flow(F, "value", regions=bad)

    def test_custom_regions_must_index_items(self):
        F = ProductDist((UNIFORM2,))
        with pytest.raises(ValueError):
            build_region_flow(F, "value", regions=np.array([0, 5]))

    def test_analytic_items_rejected(self):
        F = ProductDist((EqualRevenueCapped(4.0),))
        with pytest.raises(ValueError):
            build_region_flow(F, "value")


class TestCheckFlowConservation:
    def test_all_to_sink_conserves(self):
        F = ProductDist((UNIFORM2, UNIFORM3))
        net = build_region_flow(F, "value")
        sink_only = FlowNetwork(net.types, {(t, SINK): 1 / 6 for t in range(6)})
        assert check_flow_conservation(sink_only, F)

    def test_perturbed_weight_fails(self):
        F = ProductDist((UNIFORM3,))
        net = build_region_flow(F, "value")
        lam = dict(net.lam)
        lam[(1, 0)] += 1e-3
        assert not check_flow_conservation(FlowNetwork(net.types, lam), F)

    def test_negative_weight_rejected(self):
        F = ProductDist((UNIFORM2,))
        net = build_region_flow(F, "value")
        with pytest.raises(ValueError):
            FlowNetwork(net.types, {(0, SINK): -0.5, (1, 0): 0.5})

    def test_edge_bounds_checked(self):
        F = ProductDist((UNIFORM2,))
        net = build_region_flow(F, "value")
        with pytest.raises(IndexError):
            FlowNetwork(net.types, {(0, 9): 0.5})


class TestVirtualTransform:
    def test_single_item_chain_equals_discrete_virtuals(self):
        F = ProductDist((UNIFORM3,))
        vt = virtual_transform(build_region_flow(F, "value"), F)
        assert vt.phi[:, 0] == pytest.approx([-1.0, 1.0, 3.0])

    def test_all_to_sink_is_identity(self):
        F = ProductDist((UNIFORM2, UNIFORM2))
        net = build_region_flow(F, "value")
        sink_only = FlowNetwork(net.types, {(t, SINK): 0.25 for t in range(4)})
        vt = virtual_transform(sink_only, F)
        assert vt.phi == pytest.approx(net.types)

    def test_closed_form_at_every_type(self):
        # inside region j the j-coordinate drops to the item's virtual value,
        # all other coordinates stay at face value
        rng = np.random.default_rng(5)
        for _ in range(15):
            F = random_product(rng)
            for mode in MODES:
                net = build_region_flow(F, mode)
                vt = virtual_transform(net, F)
                regions = region_index_table(F, mode)
                for t, v in enumerate(net.types):
                    expect = v.copy()
                    j = regions[t]
                    expect[j] = F.items[j].virtual_value(v[j])
                    assert vt.phi[t] == pytest.approx(expect, abs=1e-12), (mode, t)

    def test_lookup_by_type(self):
        F = ProductDist((UNIFORM2, UNIFORM2))
        vt = virtual_transform(build_region_flow(F, "value"), F)
        assert vt.of([1.0, 2.0]) == pytest.approx(vt.phi[1])
        with pytest.raises(KeyError):
            vt.of([9.0, 9.0])


class TestSingleBidderBound:
    def test_single_item_is_myerson_revenue(self):
        F = ProductDist((UNIFORM4,))
        for mode in MODES:
            assert single_bidder_bound(F, mode) == pytest.approx(1.5)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(6)
        for _ in range(15):
            F = random_product(rng)
            for mode in MODES:
                assert single_bidder_bound(F, mode) == pytest.approx(
                    brute_bound(F, mode), abs=1e-12
                )

    def test_iid_items_mode_agreement(self):
        F = ProductDist((UNIFORM3, UNIFORM3))
        assert single_bidder_bound(F, "value") == pytest.approx(
            single_bidder_bound(F, "quantile"), abs=1e-12
        )

    def test_dominates_lp_optimum(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            F = random_product(rng, max_support=3)
            opt, _ = opt_rev_single(F.items)
            for mode in MODES:
                assert single_bidder_bound(F, mode) >= opt - 1e-8

    def test_counterexample_value_mode_closed_form(self):
        k = 100.0
        F = ProductDist((EqualRevenueCapped(k), ShiftedEqualRevenue(k)))
        assert single_bidder_bound(F, "value") == pytest.approx(k + math.log(k), abs=1e-6)

    def test_counterexample_quantile_mode_diverges(self):
        F = ProductDist((EqualRevenueCapped(100.0), ShiftedEqualRevenue(100.0)))
        assert single_bidder_bound(F, "quantile") == math.inf

    def test_mixed_discrete_analytic(self):
        # a bounded analytic item against a discrete one stays finite and
        # matches a fine discretization of the analytic item
        F = ProductDist((EqualRevenueCapped(8.0), UNIFORM3))
        got = single_bidder_bound(F, "value")
        fine = ProductDist((EqualRevenueCapped(8.0).discretize(4000), UNIFORM3))
        want = single_bidder_bound(fine, "value")
        assert got == pytest.approx(want, rel=2e-3)


class TestQuantileRegionCoupling:
    def test_region_mass_matches_order_statistics(self):
        # with aligned uniform probability grids, the chance that a type lands
        # in region j equals the chance that the j-th of m i.i.d. draws from
        # F_j is the largest under the same tie rule
        rng = np.random.default_rng(8)
        for _ in range(8):
            s = int(rng.integers(2, 5))
            m = int(rng.integers(2, 4))
            items = []
            for _ in range(m):
                values = np.sort(rng.choice(np.arange(1, 9), size=s, replace=False))
                items.append(DiscreteDist(tuple(float(v) for v in values), (1.0 / s,) * s))
            F = ProductDist(tuple(items))
            regions = region_index_table(F, "quantile")
            probs = np.ones(s**m) / s**m
            for j in range(m):
                lhs = probs[regions == j].sum()
                rhs = 0.0
                for combo in itertools.product(range(s), repeat=m):
                    # draw i of the coupled vector sits at rank combo[i]
                    if int(np.argmax(combo)) == j:
                        rhs += 1.0 / s**m
                assert lhs == pytest.approx(rhs, abs=1e-12)


class TestWeakDuality:
    def test_lp_revenue_below_virtual_welfare(self):
        rng = np.random.default_rng(9)
        for _ in range(12):
            F = random_product(rng, max_support=3)
            opt, rf = opt_rev_single(F.items)
            for mode in MODES:
                net = build_region_flow(F, mode)
                vt = virtual_transform(net, F)
                virtual_welfare = float(rf.probs @ (rf.alloc * vt.phi).sum(axis=1))
                assert opt <= virtual_welfare + 1e-8
                assert opt <= lagrangian_value(rf.probs, vt.phi) + 1e-8


class TestMultiBidderBound:
    def test_one_bidder_collapses_to_single_bound(self):
        rng = np.random.default_rng(10)
        for _ in range(8):
            F = random_product(rng)
            for mode in MODES:
                est = multi_bidder_bound(F, 1, mode)
                assert est.method == "exact"
                assert est.mean == pytest.approx(single_bidder_bound(F, mode), abs=1e-10)

    def test_single_item_max_virtual(self):
        F = ProductDist((UNIFORM4,))
        assert multi_bidder_bound(F, 2, "value").mean == pytest.approx(2.375)
        assert multi_bidder_bound(F, 3, "value").mean == pytest.approx(2.90625)

    def test_matches_enumeration(self):
        F = ProductDist((UNIFORM2, DiscreteDist((1.0, 3.0), (0.5, 0.5))))
        for mode in MODES:
            want = sum(brute_item_term(F, 2, j, mode) for j in range(2))
            assert multi_bidder_bound(F, 2, mode).mean == pytest.approx(want, abs=1e-12)

    def test_monotone_in_bidders(self):
        rng = np.random.default_rng(11)
        for _ in range(6):
            F = random_product(rng, max_support=3)
            for mode in MODES:
                vals = [multi_bidder_bound(F, n, mode).mean for n in (1, 2, 3)]
                assert vals[0] <= vals[1] + 1e-12
                assert vals[1] <= vals[2] + 1e-12

    def test_monte_carlo_agrees_with_analytic_single(self):
        F = ProductDist((EqualRevenueCapped(5.0), EqualRevenueCapped(5.0)))
        est = multi_bidder_bound(F, 1, "value", budget=60_000, seed=3)
        assert est.method == "mc"
        want = single_bidder_bound(F, "value")
        assert abs(est.mean - want) <= 4 * est.stderr

    def test_bad_bidder_count(self):
        with pytest.raises(ValueError):
            multi_bidder_bound(ProductDist((UNIFORM2,)), 0)


class TestRevJBound:
    def test_single_item_two_bidders_hand_value(self):
        F = ProductDist((UNIFORM4,))
        est = rev_j_bound(F, 2, 0)
        assert est.method == "exact"
        assert est.mean == pytest.approx(2.75)

    def test_one_bidder_matches_bound_term(self):
        rng = np.random.default_rng(12)
        for _ in range(8):
            F = random_product(rng)
            total = sum(rev_j_bound(F, 1, j).mean for j in range(len(F.items)))
            assert total == pytest.approx(single_bidder_bound(F, "quantile"), abs=1e-10)

    def test_dominates_item_term(self):
        # the bound caps the item's share of the multi-bidder benchmark
        rng = np.random.default_rng(13)
        for _ in range(8):
            F = random_product(rng, m=2, max_support=3)
            for n in (1, 2):
                for j in range(2):
                    bound = rev_j_bound(F, n, j).mean
                    term = brute_item_term(F, n, j, RegionMode.QUANTILE)
                    assert bound >= term - 1e-9

    def test_monte_carlo_single_item(self):
        F = ProductDist((EqualRevenueCapped(5.0),))
        est = rev_j_bound(F, 1, 0, budget=50_000, seed=6)
        assert est.method == "mc"
        # sole region: bound collapses to E[phi+] = the unit posted revenue
        assert abs(est.mean - 1.0) <= 4 * est.stderr

    def test_item_index_validated(self):
        with pytest.raises(IndexError):
            rev_j_bound(ProductDist((UNIFORM2,)), 1, 1)
