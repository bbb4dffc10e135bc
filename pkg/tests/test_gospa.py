import itertools
import math

import numpy as np
import pytest

from pmbtrack.errors import ContractViolationError
from pmbtrack.gospa import gospa, rms_gospa


def gospa_brute_force(xs, ys, p, c):
    """Minimum over all partial assignments of the alpha=2 GOSPA cost."""
    xs = [np.asarray(x, float) for x in xs]
    ys = [np.asarray(y, float) for y in ys]
    best = math.inf
    for k in range(min(len(xs), len(ys)) + 1):
        for x_idx in itertools.combinations(range(len(xs)), k):
            for y_idx in itertools.permutations(range(len(ys)), k):
                cost = sum(
                    float(np.linalg.norm(xs[i] - ys[j])) ** p
                    for i, j in zip(x_idx, y_idx)
                )
                cost += (c**p / 2.0) * (len(xs) + len(ys) - 2 * k)
                best = min(best, cost)
    return best ** (1.0 / p)


class TestGospa:
    def test_perfect_estimate(self, rng):
        pts = [rng.normal(size=2) for _ in range(3)]
        res = gospa(pts, pts, 2.0, 10.0)
        assert res.total == pytest.approx(0.0, abs=1e-12)
        assert res.missed == 0 and res.false_count == 0

    def test_single_missed_target(self):
        res = gospa([np.array([5.0, 5.0])], [], 2.0, 10.0)
        assert res.total == pytest.approx(math.sqrt(100.0 / 2.0))
        assert res.missed == 1 and res.false_count == 0
        assert res.localisation == 0.0

    def test_single_close_pair(self):
        res = gospa([np.array([0.0])], [np.array([3.0])], 2.0, 10.0)
        assert res.total == pytest.approx(3.0)
        assert res.localisation == pytest.approx(9.0)
        assert res.missed == 0 and res.false_count == 0

    def test_decomposition_identity(self, rng):
        for _ in range(100):
            xs = [rng.uniform(0, 20, size=2) for _ in range(int(rng.integers(0, 5)))]
            ys = [rng.uniform(0, 20, size=2) for _ in range(int(rng.integers(0, 5)))]
            res = gospa(xs, ys, 2.0, 10.0)
            assert res.total**2 == pytest.approx(res.decomposed_power_sum, abs=1e-9)

    def test_matches_brute_force(self, rng):
        for _ in range(500):
            n = int(rng.integers(0, 5))
            m = int(rng.integers(0, 5))
            xs = [rng.uniform(0, 30, size=2) for _ in range(n)]
            ys = [rng.uniform(0, 30, size=2) for _ in range(m)]
            p = float(rng.choice([1.0, 2.0]))
            c = float(rng.uniform(3.0, 15.0))
            res = gospa(xs, ys, p, c)
            assert res.total == pytest.approx(gospa_brute_force(xs, ys, p, c), abs=1e-9)

    def test_symmetry(self, rng):
        for _ in range(50):
            xs = [rng.uniform(0, 20, size=2) for _ in range(int(rng.integers(0, 4)))]
            ys = [rng.uniform(0, 20, size=2) for _ in range(int(rng.integers(0, 4)))]
            fwd = gospa(xs, ys, 2.0, 10.0)
            rev = gospa(ys, xs, 2.0, 10.0)
            assert fwd.total == pytest.approx(rev.total, abs=1e-12)
            assert fwd.missed == rev.false_count
            assert fwd.false_count == rev.missed

    def test_far_pairs_never_assigned(self, rng):
        for _ in range(100):
            xs = [rng.uniform(0, 50, size=2) for _ in range(3)]
            ys = [rng.uniform(0, 50, size=2) for _ in range(3)]
            c = 5.0
            res = gospa(xs, ys, 2.0, c)
            for i, j in res.matched_pairs:
                assert float(np.linalg.norm(xs[i] - ys[j])) < c

    def test_parameter_validation(self):
        with pytest.raises(ContractViolationError):
            gospa([], [], 0.5, 10.0)
        with pytest.raises(ContractViolationError):
            gospa([], [], 2.0, 0.0)


class TestRmsGospa:
    def test_all_zero(self):
        assert rms_gospa([0.0, 0.0, 0.0]) == 0.0

    def test_three_four(self):
        assert rms_gospa([3.0, 4.0]) == pytest.approx(math.sqrt(12.5))

    def test_single_value(self):
        assert rms_gospa([2.5]) == pytest.approx(2.5)

    def test_empty_rejected(self):
        with pytest.raises(ContractViolationError):
            rms_gospa([])
