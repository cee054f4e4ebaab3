import itertools

import numpy as np
import pytest

from bklab.setsys import (
    Explicit,
    Full,
    Partition,
    Uniform,
    disjoint_spanning_number,
    is_matroid,
    system_from_json,
    system_to_json,
)

# triangle graphic matroid on 3 edges: every proper edge subset is a forest
TRIANGLE = Explicit(3, [[], [0], [1], [2], [0, 1], [0, 2], [1, 2]])


def all_subsets(m):
    for r in range(m + 1):
        yield from (frozenset(c) for c in itertools.combinations(range(m), r))


class TestFeasibility:
    def test_uniform(self):
        s = Uniform(4, 2)
        assert s.is_feasible([0, 2])
        assert not s.is_feasible([0, 1, 2])

    def test_full(self):
        s = Full(5)
        for S in all_subsets(5):
            assert s.is_feasible(S)

    def test_triangle(self):
        assert not TRIANGLE.is_feasible([0, 1, 2])
        assert TRIANGLE.is_feasible([1, 2])

    def test_accepts_bitmask(self):
        assert Uniform(4, 2).is_feasible(0b0101)
        assert not Uniform(4, 2).is_feasible(0b0111)


class TestValueOf:
    def test_unit_demand_max(self):
        assert Uniform(3, 1).value_of([3, 5, 2], [0, 1, 2]) == 5.0

    def test_full_additive(self):
        assert Full(3).value_of([3, 5, 2], [0, 2]) == 5.0

    def test_triangle_forest(self):
        assert TRIANGLE.value_of([1, 1, 1], [0, 1, 2]) == 2.0

    def test_full_equals_sum(self):
        rng = np.random.default_rng(0)
        s = Full(6)
        for _ in range(50):
            w = rng.uniform(0, 5, 6)
            S = [j for j in range(6) if rng.random() < 0.5]
            assert s.value_of(w, S) == pytest.approx(sum(w[j] for j in S))

    def test_partition_caps(self):
        s = Partition(blocks=[[0, 1], [2, 3, 4]], caps=[1, 2])
        assert s.value_of([4, 7, 1, 3, 2], range(5)) == pytest.approx(7 + 3 + 2)

    def test_value_table_matches(self):
        rng = np.random.default_rng(1)
        for s in [Uniform(4, 2), TRIANGLE, Partition([[0], [1, 2]], [1, 1])]:
            w = rng.uniform(0, 3, s.m)
            table = s.value_table(w)
            for mask in range(1 << s.m):
                assert table[mask] == pytest.approx(s.value_of(w, mask))


class TestRank:
    def test_uniform(self):
        assert Uniform(6, 2).rank([0, 1, 2, 3, 4]) == 2

    def test_full(self):
        s = Full(5)
        for S in all_subsets(5):
            assert s.rank(S) == len(S)

    def test_partition(self):
        s = Partition(blocks=[[0, 1], [2]], caps=[1, 1])
        assert s.rank([0, 1]) == 1
        assert s.rank([0, 1, 2]) == 2

    def test_triangle(self):
        assert TRIANGLE.rank([0, 1, 2]) == 2

    def test_rank_rejects_non_matroid(self):
        bad = Explicit(3, [[], [0], [1], [2], [0, 1]])
        with pytest.raises(ValueError):
            bad.rank([0, 1, 2])

    def test_monotone_submodular(self):
        systems = [Uniform(5, 2), Partition([[0, 1, 2], [3, 4]], [2, 1]), TRIANGLE]
        for s in systems:
            subsets = [frozenset(S) for S in all_subsets(s.m)]
            for A in subsets:
                for B in subsets:
                    ra, rb = s.rank(A), s.rank(B)
                    if A <= B:
                        assert ra <= rb
                    assert s.rank(A | B) + s.rank(A & B) <= ra + rb


class TestSpans:
    def test_uniform_capped(self):
        s = Uniform(5, 2)
        assert s.spans([0, 1], 4)

    def test_full_never_spans(self):
        s = Full(4)
        for S in all_subsets(4):
            for j in range(4):
                if j not in S:
                    assert not s.spans(S, j)

    def test_partition_same_block(self):
        s = Partition(blocks=[[0, 1], [2]], caps=[1, 1])
        assert s.spans([0], 1)
        assert not s.spans([0], 2)

    def test_rejects_j_in_s(self):
        with pytest.raises(ValueError):
            Uniform(3, 1).spans([0, 1], 1)

    def test_spanning_extension_claim(self):
        # if S spans j but not j', then nothing inside S + {j} spans j'
        systems = [
            Uniform(5, 2),
            Uniform(4, 1),
            Partition([[0, 1, 2], [3, 4]], [1, 1]),
            TRIANGLE,
        ]
        for s in systems:
            m = s.m
            for S in all_subsets(m):
                outside = [j for j in range(m) if j not in S]
                for j in outside:
                    if not s.spans(S, j):
                        continue
                    for jp in outside:
                        if jp == j or s.spans(S, jp):
                            continue
                        closure = S | {j}
                        for Sp in all_subsets(m):
                            if Sp <= closure and jp not in Sp:
                                assert not s.spans(Sp, jp)


class TestDisjointSpanningNumber:
    def test_unit_demand(self):
        assert disjoint_spanning_number(Uniform(4, 1)) == 3

    def test_full_is_zero(self):
        for m in [1, 3, 5]:
            assert disjoint_spanning_number(Full(m)) == 0

    def test_unit_demand_family(self):
        for m in range(2, 9):
            assert disjoint_spanning_number(Uniform(m, 1)) == m - 1

    def test_uniform2_m6_brute(self):
        # spanning sets avoiding j need k = 2 items, so packings hold floor(5/2) of them
        assert disjoint_spanning_number(Uniform(6, 2)) == 2

    def test_uniform_k_grid(self):
        for m in range(2, 8):
            for k in range(1, m):
                assert disjoint_spanning_number(Uniform(m, k)) == (m - 1) // k

    def test_partition_blocks(self):
        s = Partition(blocks=[[0, 1, 2], [3, 4]], caps=[1, 1])
        assert disjoint_spanning_number(s) == 2

    def test_triangle(self):
        # any single edge spans each other edge? rank({e}) = 1, rank({e, f}) = 2: no.
        # two edges span the third.
        assert disjoint_spanning_number(TRIANGLE) == 1

    def test_size_limit(self):
        with pytest.raises(ValueError):
            disjoint_spanning_number(Uniform(13, 1))


class TestIsMatroid:
    def test_parallel_elements_family(self):
        # {} {0} {1} {2} {01} {12}: exchange holds ({2}+{1}={12} etc.);
        # this is the rank-2 matroid with items 0 and 2 parallel
        s = Explicit(3, [[], [0], [1], [2], [0, 1], [1, 2]])
        assert is_matroid(s)
        assert s.rank([0, 2]) == 1

    def test_uniform_encoding(self):
        fam = [S for S in map(list, all_subsets(3)) if len(S) <= 2]
        assert is_matroid(Explicit(3, fam))

    def test_full_encoding(self):
        fam = [list(S) for S in all_subsets(3)]
        assert is_matroid(Explicit(3, fam))

    def test_non_matroid(self):
        s = Explicit(3, [[], [0], [1], [2], [0, 1]])
        assert not is_matroid(s)

    def test_closed_forms_pass(self):
        assert is_matroid(Uniform(5, 2))
        assert is_matroid(Full(4))
        assert is_matroid(Partition([[0, 1], [2]], [1, 1]))


class TestValidation:
    def test_explicit_requires_empty_and_singletons(self):
        with pytest.raises(ValueError):
            Explicit(2, [[0], [1]])
        with pytest.raises(ValueError):
            Explicit(3, [[], [0], [1]])

    def test_explicit_requires_downward_closed(self):
        with pytest.raises(ValueError):
            Explicit(3, [[], [0], [1], [2], [0, 1, 2]])
        with pytest.raises(ValueError):
            Explicit(4, [[], [0], [1], [2], [3], [0, 1], [0, 1, 2]])

    def test_partition_must_cover(self):
        with pytest.raises(ValueError):
            Partition(blocks=[[0, 2]], caps=[1])

    def test_item_range(self):
        with pytest.raises(ValueError):
            Uniform(3, 1).is_feasible([3])


class TestJson:
    def test_round_trips(self):
        systems = [
            Uniform(5, 2),
            Partition([[0, 1], [2, 3, 4]], [1, 1]),
            Full(5),
            Explicit(3, [[], [0], [1], [2], [0, 1]]),
        ]
        for s in systems:
            s2 = system_from_json(system_to_json(s))
            assert type(s2) is type(s)
            for S in all_subsets(s.m):
                assert s.is_feasible(S) == s2.is_feasible(S)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            system_from_json({"kind": "laminar"})
