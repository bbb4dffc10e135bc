import numpy as np
import pytest

from pmbtrack.gaussian import GaussianDensity
from pmbtrack.pmbm import (
    BernoulliComponent,
    GlobalHypothesis,
    PmbmDensity,
    PppIntensity,
    PppTerm,
    Track,
)


def random_pd_matrix(rng, n, scale=1.0):
    a = rng.normal(size=(n, n))
    return scale * (a @ a.T + n * np.eye(n))


def random_gaussian(rng, n, spread=5.0, scale=1.0):
    return GaussianDensity(rng.normal(scale=spread, size=n), random_pd_matrix(rng, n, scale))


def random_pmbm(rng, n_tracks=None, n_hyps=None, dim=2, max_locals=3, with_ppp=True):
    """Random well-formed PMBM for property tests (existence bounded away from 0/1)."""
    if n_tracks is None:
        n_tracks = int(rng.integers(1, 5))
    if n_hyps is None:
        n_hyps = int(rng.integers(1, 5))
    tracks = []
    for i in range(n_tracks):
        n_loc = int(rng.integers(1, max_locals + 1))
        locals_ = tuple(
            BernoulliComponent(
                existence=float(rng.uniform(0.05, 0.95)),
                density=random_gaussian(rng, dim),
                assoc_weight_log=float(rng.normal()),
            )
            for _ in range(n_loc)
        )
        tracks.append(Track(id=i, locals=locals_))
    n_combos = int(np.prod([len(t.locals) for t in tracks]))
    n_hyps = min(n_hyps, n_combos)
    raw = rng.uniform(0.1, 1.0, size=n_hyps)
    weights = raw / raw.sum()
    seen = set()
    hyps = []
    for w in weights:
        while True:
            chosen = tuple(int(rng.integers(0, len(t.locals))) for t in tracks)
            if chosen not in seen:
                seen.add(chosen)
                break
        hyps.append(GlobalHypothesis(log_weight=float(np.log(w)), locals_chosen=chosen))
    if with_ppp:
        ppp = PppIntensity(
            terms=tuple(
                PppTerm(weight=float(rng.uniform(0.1, 2.0)), density=random_gaussian(rng, dim))
                for _ in range(int(rng.integers(0, 3)))
            )
        )
    else:
        ppp = PppIntensity(terms=())
    return PmbmDensity(ppp=ppp, tracks=tuple(tracks), hypotheses=tuple(hyps))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
