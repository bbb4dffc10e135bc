import math

import numpy as np
import pytest

from pmbtrack.errors import ContractViolationError
from pmbtrack.gaussian import GaussianDensity, gaussian_kld
from pmbtrack.pmbm import (
    DIVERGENCE_CAP,
    BernoulliComponent,
    GlobalHypothesis,
    PmbmDensity,
    PppIntensity,
    PppTerm,
    Track,
    bernoulli_kld,
    compute_phd,
    empty_pmbm,
    estimate_targets,
    make_pmb,
    parse_pmbm,
    prune_and_cap,
    serialize_pmbm,
)

from conftest import random_gaussian, random_pmbm


def bern(existence, mean=0.0, var=1.0, awl=0.0):
    return BernoulliComponent(existence, GaussianDensity([mean], [[var]]), awl)


class TestBernoulliKld:
    def test_identical_is_zero(self):
        assert bernoulli_kld(bern(0.5), bern(0.5)) == 0.0

    def test_sure_existence_reduces_to_gaussian(self):
        assert bernoulli_kld(bern(1.0, 0.0), bern(1.0, 1.0)) == pytest.approx(0.5)

    def test_binary_closed_form(self):
        expected = 0.7 * math.log(0.7 / 0.4) + 0.3 * math.log(0.3 / 0.6)
        assert bernoulli_kld(bern(0.3), bern(0.6)) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.18378, abs=1e-5)

    def test_absolute_continuity_failures_are_capped(self):
        assert bernoulli_kld(bern(0.5), bern(0.0)) == DIVERGENCE_CAP
        assert bernoulli_kld(bern(1.0), bern(0.0)) == DIVERGENCE_CAP
        assert bernoulli_kld(bern(0.5), bern(1.0)) == DIVERGENCE_CAP
        assert bernoulli_kld(bern(0.0), bern(1.0)) == DIVERGENCE_CAP

    def test_matching_boundary_cases(self):
        assert bernoulli_kld(bern(0.0, 3.0), bern(0.0, -1.0)) == 0.0
        f, q = bern(1.0, 0.0, 2.0), bern(1.0, 0.0, 1.0)
        assert bernoulli_kld(f, q) == pytest.approx(gaussian_kld(f.density, q.density))

    def test_non_negative_on_random_pairs(self, rng):
        for _ in range(1000):
            n = int(rng.integers(1, 4))
            f = BernoulliComponent(float(rng.uniform(0, 1)), random_gaussian(rng, n))
            q = BernoulliComponent(float(rng.uniform(0.01, 0.99)), random_gaussian(rng, n))
            assert bernoulli_kld(f, q) >= 0.0
            assert bernoulli_kld(f, f) == 0.0


class TestComputePhd:
    def test_empty_density(self):
        assert compute_phd(empty_pmbm(), [0.0]) == 0.0

    def test_single_certain_track(self):
        d = make_pmb(PppIntensity(()), [bern(1.0, 2.0, 1.5)])
        x = np.array([1.0])
        expected = math.exp(GaussianDensity([2.0], [[1.5]]).log_pdf(x))
        assert compute_phd(d, x) == pytest.approx(expected)

    def test_two_hypotheses_expand_by_hand(self):
        dens = GaussianDensity([1.0], [[2.0]])
        track = Track(id=0, locals=(BernoulliComponent(0.4, dens), BernoulliComponent(0.6, dens)))
        d = PmbmDensity(
            ppp=PppIntensity(()),
            tracks=(track,),
            hypotheses=(
                GlobalHypothesis(math.log(0.5), (0,)),
                GlobalHypothesis(math.log(0.5), (1,)),
            ),
        )
        x = np.array([0.3])
        expected = 0.5 * (0.4 + 0.6) * math.exp(dens.log_pdf(x))
        assert compute_phd(d, x) == pytest.approx(expected)

    def test_integrates_to_expected_cardinality(self, rng):
        # Dense 2-D quadrature of the PHD must recover the PPP mass plus the
        # weighted existence sum.
        for _ in range(2):
            d = random_pmbm(rng, n_tracks=2, n_hyps=3, dim=2)
            expected = sum(t.weight for t in d.ppp.terms)
            for hyp in d.hypotheses:
                for track, chosen in zip(d.tracks, hyp.locals_chosen):
                    expected += hyp.weight * track.locals[chosen].existence
            grid = np.linspace(-40.0, 40.0, 161)
            values = np.array([[compute_phd(d, [x, y]) for y in grid] for x in grid])
            integral = np.trapezoid(np.trapezoid(values, grid, axis=1), grid)
            assert integral == pytest.approx(expected, abs=1e-3)


class TestPruneAndCap:
    def test_noop_thresholds(self, rng):
        d = random_pmbm(rng)
        out = prune_and_cap(d, 0.0, 0.0, 100)
        assert len(out.hypotheses) == len(d.hypotheses)
        np.testing.assert_allclose(
            sorted(h.log_weight for h in out.hypotheses),
            sorted(h.log_weight for h in d.hypotheses),
            atol=1e-12,
        )

    def test_cap_to_best(self):
        dens = GaussianDensity([0.0], [[1.0]])
        track = Track(0, (BernoulliComponent(0.9, dens), BernoulliComponent(0.8, dens)))
        d = PmbmDensity(
            ppp=PppIntensity(()),
            tracks=(track,),
            hypotheses=(
                GlobalHypothesis(math.log(0.9), (0,)),
                GlobalHypothesis(math.log(0.1), (1,)),
            ),
        )
        out = prune_and_cap(d, 0.0, 0.0, 1)
        assert len(out.hypotheses) == 1
        assert out.hypotheses[0].log_weight == pytest.approx(0.0, abs=1e-12)
        assert out.tracks[0].locals[0].existence == 0.9

    def test_ppp_threshold(self):
        dens = GaussianDensity([0.0], [[1.0]])
        d = PmbmDensity(
            ppp=PppIntensity((PppTerm(1e-3, dens), PppTerm(1e-6, dens))),
            tracks=(),
            hypotheses=(GlobalHypothesis(0.0, ()),),
        )
        out = prune_and_cap(d, 1e-5, 0.0, 10)
        assert len(out.ppp.terms) == 1
        assert out.ppp.terms[0].weight == 1e-3

    def test_low_existence_becomes_explicit_zero(self):
        dens = GaussianDensity([0.0], [[1.0]])
        track = Track(0, (BernoulliComponent(1e-7, dens), BernoulliComponent(0.9, dens)))
        d = PmbmDensity(
            ppp=PppIntensity(()),
            tracks=(track,),
            hypotheses=(
                GlobalHypothesis(math.log(0.5), (0,)),
                GlobalHypothesis(math.log(0.5), (1,)),
            ),
        )
        out = prune_and_cap(d, 0.0, 1e-5, 10)
        assert len(out.tracks[0].locals) == 2
        assert out.tracks[0].locals[0].existence == 0.0
        assert out.tracks[0].locals[1].existence == 0.9

    def test_all_zero_track_is_removed(self):
        dens = GaussianDensity([0.0], [[1.0]])
        live = Track(0, (BernoulliComponent(0.9, dens),))
        dead = Track(1, (BernoulliComponent(1e-8, dens),))
        d = PmbmDensity(
            ppp=PppIntensity(()),
            tracks=(live, dead),
            hypotheses=(GlobalHypothesis(0.0, (0, 0)),),
        )
        out = prune_and_cap(d, 0.0, 1e-5, 10)
        assert [t.id for t in out.tracks] == [0]
        assert out.hypotheses[0].locals_chosen == (0,)

    def test_idempotent(self, rng):
        for _ in range(30):
            d = random_pmbm(rng)
            once = prune_and_cap(d, 1e-5, 0.2, 3)
            twice = prune_and_cap(once, 1e-5, 0.2, 3)
            assert serialize_pmbm(once).splitlines()[:10] == serialize_pmbm(twice).splitlines()[:10]
            assert len(once.hypotheses) == len(twice.hypotheses)
            np.testing.assert_allclose(once.log_weights, twice.log_weights, atol=1e-12)
            assert [t.id for t in once.tracks] == [t.id for t in twice.tracks]
            for a, b in zip(once.tracks, twice.tracks):
                assert len(a.locals) == len(b.locals)
                for la, lb in zip(a.locals, b.locals):
                    assert la.existence == lb.existence

    def test_rejects_removing_everything(self, rng):
        d = random_pmbm(rng)
        with pytest.raises(ContractViolationError):
            prune_and_cap(d, 0.0, 0.0, 0)

    def test_weights_stay_normalised(self, rng):
        for _ in range(50):
            d = random_pmbm(rng)
            out = prune_and_cap(d, 1e-4, 0.1, 2)
            assert abs(np.exp(out.log_weights).sum() - 1.0) < 1e-9


class TestEstimateTargets:
    def test_empty(self):
        assert estimate_targets(empty_pmbm(), 0.4) == []

    def test_threshold_filters(self):
        d = make_pmb(
            PppIntensity(()), [bern(0.9, mean=1.0), bern(0.2, mean=2.0)]
        )
        out = estimate_targets(d, 0.4)
        assert len(out) == 1
        assert out[0][0] == 1.0

    def test_only_best_hypothesis_contributes(self):
        dens_a = GaussianDensity([1.0], [[1.0]])
        dens_b = GaussianDensity([2.0], [[1.0]])
        track = Track(0, (BernoulliComponent(0.9, dens_a), BernoulliComponent(0.9, dens_b)))
        d = PmbmDensity(
            ppp=PppIntensity(()),
            tracks=(track,),
            hypotheses=(
                GlobalHypothesis(math.log(0.6), (0,)),
                GlobalHypothesis(math.log(0.4), (1,)),
            ),
        )
        out = estimate_targets(d, 0.4)
        assert [x[0] for x in out] == [1.0]

    def test_threshold_bounds(self):
        with pytest.raises(ContractViolationError):
            estimate_targets(empty_pmbm(), 0.0)


class TestSerialization:
    def test_roundtrip_exact(self, rng):
        for _ in range(10):
            d = random_pmbm(rng)
            back = parse_pmbm(serialize_pmbm(d))
            assert serialize_pmbm(back) == serialize_pmbm(d)
            assert len(back.tracks) == len(d.tracks)
            for ta, tb in zip(d.tracks, back.tracks):
                assert ta.id == tb.id
                for la, lb in zip(ta.locals, tb.locals):
                    assert la.existence == lb.existence
                    assert np.array_equal(la.density.mean, lb.density.mean)
                    assert np.array_equal(la.density.cov, lb.density.cov)
            np.testing.assert_array_equal(back.log_weights, d.log_weights)

    def test_rejects_unknown_format(self):
        with pytest.raises(ContractViolationError):
            parse_pmbm("format: something-else\n")


class TestInvariantChecks:
    def test_unnormalised_weights_rejected(self):
        dens = GaussianDensity([0.0], [[1.0]])
        track = Track(0, (BernoulliComponent(0.5, dens),))
        with pytest.raises(ContractViolationError):
            PmbmDensity(
                ppp=PppIntensity(()),
                tracks=(track,),
                hypotheses=(GlobalHypothesis(math.log(0.5), (0,)),),
            )

    def test_bad_local_index_rejected(self):
        dens = GaussianDensity([0.0], [[1.0]])
        track = Track(0, (BernoulliComponent(0.5, dens),))
        with pytest.raises(ContractViolationError):
            PmbmDensity(
                ppp=PppIntensity(()),
                tracks=(track,),
                hypotheses=(GlobalHypothesis(0.0, (1,)),),
            )

    def test_duplicate_ids_rejected(self):
        dens = GaussianDensity([0.0], [[1.0]])
        t = Track(0, (BernoulliComponent(0.5, dens),))
        with pytest.raises(ContractViolationError):
            PmbmDensity(
                ppp=PppIntensity(()),
                tracks=(t, t),
                hypotheses=(GlobalHypothesis(0.0, (0, 0)),),
            )
