import itertools

import numpy as np
import pytest

from pmbtrack.assignment import Assignment, murty_kbest, solve_assignment
from pmbtrack.errors import ContractViolationError, InfeasibleAssignmentError


def brute_force_all(cost):
    """Every feasible assignment of rows to columns, cost-sorted."""
    cost = np.asarray(cost, dtype=float)
    n_rows, n_cols = cost.shape
    out = []
    for cols in itertools.permutations(range(n_cols), n_rows):
        total = sum(cost[r, c] for r, c in enumerate(cols))
        if np.isfinite(total):
            out.append((total, cols))
    out.sort(key=lambda x: x[0])
    return out


class TestSolveAssignment:
    def test_two_by_two(self):
        a = solve_assignment([[1.0, 2.0], [2.0, 1.0]])
        assert a.mapping == (0, 1)
        assert a.cost == pytest.approx(2.0)

    def test_forced_diagonal(self):
        inf = np.inf
        a = solve_assignment([[0.0, inf, inf], [inf, 0.0, inf], [inf, inf, 0.0]])
        assert a.mapping == (0, 1, 2)
        assert a.cost == 0.0

    def test_three_by_three(self):
        a = solve_assignment([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
        assert a.cost == pytest.approx(5.0)
        assert a.mapping == (1, 0, 2)

    def test_infeasible_raises(self):
        inf = np.inf
        with pytest.raises(InfeasibleAssignmentError):
            solve_assignment([[inf, inf], [1.0, 2.0]])

    def test_rejects_nan_and_bad_shape(self):
        with pytest.raises(ContractViolationError):
            solve_assignment([[np.nan, 1.0]])
        with pytest.raises(ContractViolationError):
            solve_assignment([[1.0], [2.0]])

    def test_matches_brute_force_on_random_squares(self, rng):
        for _ in range(500):
            n = int(rng.integers(1, 8))
            cost = rng.normal(size=(n, n))
            if rng.random() < 0.3:
                mask = rng.random(size=(n, n)) < 0.2
                cost = np.where(mask, np.inf, cost)
            ref = brute_force_all(cost)
            if not ref:
                with pytest.raises(InfeasibleAssignmentError):
                    solve_assignment(cost)
                continue
            got = solve_assignment(cost)
            assert got.cost == pytest.approx(ref[0][0], abs=1e-9)
            assert sum(cost[r, c] for r, c in enumerate(got.mapping)) == pytest.approx(
                got.cost, abs=1e-9
            )

    def test_rectangular_leaves_columns_free(self):
        a = solve_assignment([[5.0, 1.0, 9.0]])
        assert a.mapping == (1,)
        assert a.cost == pytest.approx(1.0)


class TestMurtyKbest:
    def test_single_cell(self):
        out = murty_kbest([[5.0]], 3)
        assert out == [Assignment((0,), 5.0)]

    def test_two_by_two_ranked(self):
        out = murty_kbest([[1.0, 2.0], [2.0, 1.0]], 2)
        assert [a.cost for a in out] == pytest.approx([2.0, 4.0])

    def test_all_zero_permutations(self):
        out = murty_kbest(np.zeros((3, 3)), 6)
        assert len(out) == 6
        assert all(a.cost == 0.0 for a in out)
        assert len({a.mapping for a in out}) == 6

    def test_k_zero_rejected(self):
        with pytest.raises(ContractViolationError):
            murty_kbest([[1.0]], 0)

    def test_first_equals_solve_assignment(self, rng):
        for _ in range(50):
            cost = rng.normal(size=(4, 6))
            assert murty_kbest(cost, 3)[0] == solve_assignment(cost)

    def test_enumerates_exactly_brute_force(self, rng):
        for _ in range(120):
            n = int(rng.integers(1, 6))
            m = n if rng.random() < 0.7 else int(rng.integers(n, 7))
            cost = rng.normal(size=(n, m))
            if rng.random() < 0.3:
                cost = np.where(rng.random(size=(n, m)) < 0.2, np.inf, cost)
            ref = brute_force_all(cost)
            if not ref:
                with pytest.raises(InfeasibleAssignmentError):
                    murty_kbest(cost, 1)
                continue
            got = murty_kbest(cost, len(ref) + 3)
            assert len(got) == len(ref)
            np.testing.assert_allclose(
                [a.cost for a in got], [c for c, _ in ref], atol=1e-9
            )
            assert len({a.mapping for a in got}) == len(got)
            costs = [a.cost for a in got]
            assert costs == sorted(costs)

    def test_prefix_property(self, rng):
        for _ in range(40):
            n = int(rng.integers(2, 5))
            cost = rng.normal(size=(n, n))
            full = murty_kbest(cost, 12)
            for j in range(1, len(full) + 1):
                prefix = murty_kbest(cost, j)
                assert sorted(round(a.cost, 9) for a in prefix) == sorted(
                    round(a.cost, 9) for a in full[:j]
                )
