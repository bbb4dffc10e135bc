"""PMBM-to-PMB projections.

Four reductions of a multi-hypothesis PMBM posterior to a single-hypothesis
PMB:

* ``to_pmb`` — track-oriented marginalisation over each track's local
  hypotheses (the standard PMB approximation).
* ``gnn_pmb`` — keep only the highest-weight global hypothesis.
* ``bp_pmb_update`` — loopy-belief-propagation marginal association update
  producing a PMB directly from a predicted density.
* ``vpmb_project`` — variational projection: coordinate descent on the KLD
  over (per-hypothesis permutations of the Bernoullis, PMB parameters),
  alternating an exact merge for fixed permutations with per-hypothesis
  optimal permutations found by 2-D assignment on Bernoulli-KLD costs.

The merge keeps the PPP unchanged; merged existence is the weighted sum of
the routed locals' existences and the merged density is their moment-matched
mixture, so the expected target count and the first two moments of the
intensity are preserved exactly regardless of the permutations chosen.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import linear_sum_assignment

from .errors import ContractViolationError
from .filtering import SensorModel, _BatchInnovation, _lift_measurement
from .gaussian import GaussianDensity, moment_match
from .pmbm import (
    DIVERGENCE_CAP,
    BernoulliComponent,
    GlobalHypothesis,
    PmbDensity,
    PmbmDensity,
    PppIntensity,
    PppTerm,
    Track,
    is_pmb,
)

__all__ = [
    "PermutationSet",
    "ProjectionReport",
    "merge_bernoullis_under_permutations",
    "optimize_permutations",
    "vpmb_project",
    "to_pmb",
    "gnn_pmb",
    "bp_pmb_update",
    "bp_association_marginals",
]


@dataclass(frozen=True)
class PermutationSet:
    """One permutation of the track slots per global hypothesis.

    ``per_hypothesis[a][i]`` is the input track routed into output slot ``i``
    under hypothesis ``a``.
    """

    per_hypothesis: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "per_hypothesis", tuple(tuple(int(i) for i in p) for p in self.per_hypothesis)
        )
        for p in self.per_hypothesis:
            if sorted(p) != list(range(len(p))):
                raise ContractViolationError(f"{p} is not a permutation")

    @staticmethod
    def identity(n_hypotheses: int, n_tracks: int) -> "PermutationSet":
        return PermutationSet((tuple(range(n_tracks)),) * n_hypotheses)


@dataclass(frozen=True)
class ProjectionReport:
    """Trace of one variational projection: per-iteration assignment costs."""

    iterations_run: int
    cost_trace: tuple[float, ...]
    converged: bool


def _placeholder(dim: int) -> GaussianDensity:
    return GaussianDensity(np.zeros(dim), np.eye(dim))


class _FlatLocals:
    """All local hypotheses of a PMBM stacked for vectorised routing."""

    __slots__ = ("base", "existence", "means", "covs", "log_dets", "chosen")

    def __init__(self, d: PmbmDensity):
        base = []
        offset = 0
        for t in d.tracks:
            base.append(offset)
            offset += len(t.locals)
        self.base = np.asarray(base, dtype=int)
        locs = [loc for t in d.tracks for loc in t.locals]
        self.existence = np.array([loc.existence for loc in locs])
        self.means = np.stack([loc.density.mean for loc in locs]) if locs else np.zeros((0, 1))
        self.covs = np.stack([loc.density.cov for loc in locs]) if locs else np.zeros((0, 1, 1))
        self.log_dets = np.array([loc.density.log_det_cov for loc in locs])
        # chosen[a, i]: flat index of the local hypothesis a selects on track i
        self.chosen = (
            np.array([h.locals_chosen for h in d.hypotheses], dtype=int) + self.base[None, :]
            if d.tracks
            else np.zeros((len(d.hypotheses), 0), dtype=int)
        )


def merge_bernoullis_under_permutations(d: PmbmDensity, perms: PermutationSet) -> PmbDensity:
    """Optimal PMB for fixed permutations: weighted-existence merge per slot.

    Slot ``i`` collects, from each hypothesis ``a`` with weight ``w_a``, the
    local hypothesis the hypothesis selects for track ``perms[a][i]``. The
    merged existence is ``sum_a w_a r_a`` and the merged density is the
    moment-matched mixture with weights ``w_a r_a`` (normalised). Slots whose
    merged existence is zero keep a unit placeholder density. The PPP is
    copied unchanged.
    """
    n = len(d.tracks)
    if len(perms.per_hypothesis) != len(d.hypotheses):
        raise ContractViolationError(
            f"{len(perms.per_hypothesis)} permutations for {len(d.hypotheses)} hypotheses"
        )
    if any(len(p) != n for p in perms.per_hypothesis):
        raise ContractViolationError("permutation length must equal the track count")
    return _merge_flat(d, _FlatLocals(d), np.asarray(perms.per_hypothesis, dtype=int))


def _merge_flat(d: PmbmDensity, flat: _FlatLocals, perm_arr: np.ndarray) -> PmbDensity:
    weights = d.weights
    hyp_range = np.arange(len(d.hypotheses))
    slots = []
    for i in range(len(d.tracks)):
        src = perm_arr[:, i]
        idx = flat.chosen[hyp_range, src]
        wr = weights * flat.existence[idx]
        existence = float(wr.sum())
        if existence > 0.0:
            mix = wr / existence
            mean = mix @ flat.means[idx]
            delta = flat.means[idx] - mean
            cov = np.einsum("h,hij->ij", mix, flat.covs[idx]) + (mix * delta.T) @ delta
            density = GaussianDensity(mean, 0.5 * (cov + cov.T))
        else:
            density = _placeholder(d.tracks[i].locals[0].density.dim)
        slots.append(BernoulliComponent(existence=min(existence, 1.0), density=density))
    tracks = tuple(
        Track(id=d.tracks[i].id, locals=(slots[i],)) for i in range(len(d.tracks))
    )
    return PmbmDensity(
        ppp=d.ppp,
        tracks=tracks,
        hypotheses=(GlobalHypothesis(log_weight=0.0, locals_chosen=(0,) * len(tracks)),),
    )


def to_pmb(d: PmbmDensity) -> PmbDensity:
    """Track-oriented PMB: marginalise each track over its local hypotheses.

    Equals the merge under identity permutations, computed directly by
    accumulating the total hypothesis weight selecting each local.
    """
    weights = d.weights
    slots = []
    for i, track in enumerate(d.tracks):
        local_w = np.zeros(len(track.locals))
        for w, hyp in zip(weights, d.hypotheses):
            local_w[hyp.locals_chosen[i]] += w
        wr = local_w * np.array([loc.existence for loc in track.locals])
        existence = float(wr.sum())
        if existence > 0.0:
            keep = np.flatnonzero(wr > 0)
            density = moment_match(wr[keep] / wr[keep].sum(), [track.locals[k].density for k in keep])
        else:
            density = _placeholder(track.locals[0].density.dim)
        slots.append(BernoulliComponent(existence=min(existence, 1.0), density=density))
    tracks = tuple(Track(id=t.id, locals=(s,)) for t, s in zip(d.tracks, slots))
    return PmbmDensity(
        ppp=d.ppp,
        tracks=tracks,
        hypotheses=(GlobalHypothesis(log_weight=0.0, locals_chosen=(0,) * len(tracks)),),
    )


def _bernoulli_kld_columns(flat: _FlatLocals, q: PmbDensity) -> np.ndarray:
    """Bernoulli KLD from every stacked local hypothesis to every slot of ``q``.

    Vectorised over locals per slot; divergences that are infinite by
    absolute continuity are capped at :data:`DIVERGENCE_CAP`.
    """
    r_f = flat.existence
    n_loc, dim = flat.means.shape
    out = np.empty((n_loc, len(q.tracks)))
    for l, slot_track in enumerate(q.tracks):
        slot = slot_track.locals[0]
        r_q = slot.existence
        if r_q == 0.0:
            out[:, l] = np.where(r_f == 0.0, 0.0, DIVERGENCE_CAP)
            continue
        lq = slot.density.chol
        pq_inv = cho_solve((lq, True), np.eye(dim))
        trace_term = np.einsum("ab,nab->n", pq_inv, flat.covs)
        diff = slot.density.mean - flat.means
        u = solve_triangular(lq, diff.T, lower=True)
        maha = np.sum(u * u, axis=0)
        gkld = 0.5 * (trace_term - (flat.log_dets - slot.density.log_det_cov) - dim + maha)
        if r_q == 1.0:
            out[:, l] = np.where(r_f == 1.0, gkld, DIVERGENCE_CAP)
            continue
        val = np.zeros(n_loc)
        lo = r_f < 1.0
        val[lo] = (1.0 - r_f[lo]) * (np.log1p(-r_f[lo]) - math.log1p(-r_q))
        hi = r_f > 0.0
        val[hi] += r_f[hi] * (np.log(r_f[hi]) - math.log(r_q) + gkld[hi])
        out[:, l] = np.maximum(val, 0.0)
    return out


def _optimize_flat(
    d: PmbmDensity, flat: _FlatLocals, q: PmbDensity
) -> tuple[np.ndarray, float]:
    n = len(d.tracks)
    kld = _bernoulli_kld_columns(flat, q)
    weights = d.weights
    track_ids = np.arange(n)
    perm_arr = np.empty((len(d.hypotheses), n), dtype=int)
    total = 0.0
    for a in range(len(d.hypotheses)):
        sub = kld[flat.chosen[a], :]
        row_ind, col_ind = linear_sum_assignment(sub)
        # the assignment maps track -> slot; the permutation names the track per slot
        perm_arr[a, col_ind] = track_ids[row_ind]
        total += weights[a] * float(sub[row_ind, col_ind].sum())
    return perm_arr, total


def optimize_permutations(d: PmbmDensity, q: PmbDensity) -> tuple[PermutationSet, float]:
    """Optimal per-hypothesis permutations against a PMB, and the weighted cost.

    For each hypothesis the cost matrix pairs its selected local hypotheses
    with the PMB slots through the Bernoulli KLD; the optimal routing is a
    2-D assignment. The returned cost is the hypothesis-weighted sum of the
    per-hypothesis optimal assignment costs.
    """
    n = len(d.tracks)
    if len(q.tracks) != n:
        raise ContractViolationError(f"PMB has {len(q.tracks)} slots for {n} tracks")
    if not is_pmb(q):
        raise ContractViolationError("q must be a PMB (single hypothesis, one local per track)")
    if n == 0:
        return PermutationSet(((),) * len(d.hypotheses)), 0.0
    perm_arr, total = _optimize_flat(d, _FlatLocals(d), q)
    return PermutationSet(tuple(tuple(int(i) for i in p) for p in perm_arr)), total


def vpmb_project(
    d: PmbmDensity, gamma: float, max_iter: int
) -> tuple[PmbDensity, ProjectionReport]:
    """Variational PMB projection by coordinate-descent KLD minimisation.

    Starts from identity permutations, then alternates optimal permutations
    (given the current PMB) with the optimal PMB merge (given the
    permutations). Stops when the weighted assignment cost changes by at
    most ``gamma`` between consecutive iterations, or after ``max_iter``
    iterations. The cost trace is non-increasing. Zero-existence slots are
    dropped from the returned PMB.
    """
    if gamma < 0:
        raise ContractViolationError("convergence threshold must be non-negative")
    if max_iter < 1:
        raise ContractViolationError("max_iter must be at least 1")
    flat = _FlatLocals(d)
    identity = np.tile(np.arange(len(d.tracks)), (len(d.hypotheses), 1))
    q = _merge_flat(d, flat, identity)
    trace: list[float] = []
    previous = None
    converged = False
    for _ in range(max_iter):
        perm_arr, cost = _optimize_flat(d, flat, q)
        trace.append(cost)
        if previous is not None and abs(cost - previous) <= gamma:
            converged = True
            break
        previous = cost
        q = _merge_flat(d, flat, perm_arr)
    report = ProjectionReport(
        iterations_run=len(trace), cost_trace=tuple(trace), converged=converged
    )
    keep = [i for i, t in enumerate(q.tracks) if t.locals[0].existence > 0.0]
    if len(keep) < len(q.tracks):
        q = PmbmDensity(
            ppp=q.ppp,
            tracks=tuple(q.tracks[i] for i in keep),
            hypotheses=(GlobalHypothesis(log_weight=0.0, locals_chosen=(0,) * len(keep)),),
        )
    return q, report


def gnn_pmb(d: PmbmDensity) -> PmbDensity:
    """PMB made of the Bernoullis the highest-weight hypothesis selects.

    Ties go to the lower hypothesis index.
    """
    best = max(range(len(d.hypotheses)), key=lambda i: (d.hypotheses[i].log_weight, -i))
    hyp = d.hypotheses[best]
    tracks = tuple(
        Track(id=t.id, locals=(t.locals[chosen],))
        for t, chosen in zip(d.tracks, hyp.locals_chosen)
    )
    return PmbmDensity(
        ppp=d.ppp,
        tracks=tracks,
        hypotheses=(GlobalHypothesis(log_weight=0.0, locals_chosen=(0,) * len(tracks)),),
    )


def bp_association_marginals(
    miss_weight: np.ndarray,
    det_weight: np.ndarray,
    new_weight: np.ndarray,
    tol: float = 1e-4,
    max_iter: int = 1000,
    damping: float = 0.5,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Marginal association probabilities by loopy sum-product on the
    track-measurement bipartite graph.

    ``miss_weight[i]`` is track i's missed-detection factor, ``det_weight[i, j]``
    its factor for claiming measurement j, ``new_weight[j]`` the factor for
    leaving measurement j to a new track. Flooding (parallel) message updates
    with damping; iteration stops when the largest absolute message change
    drops to ``tol``. Returns (p_missed, p_detection, p_new, converged).
    """
    n, m = det_weight.shape
    if n == 0 or m == 0:
        return (
            np.ones(n),
            np.zeros((n, m)),
            np.ones(m),
            True,
        )
    mu = np.ones((n, m))
    converged = False
    nu = np.zeros((n, m))
    for _ in range(max_iter):
        prd = det_weight * mu
        s_track = miss_weight + prd.sum(axis=1)
        nu = det_weight / (s_track[:, None] - prd)
        s_meas = new_weight + nu.sum(axis=0)
        mu_new = 1.0 / (s_meas[None, :] - nu)
        mu_next = damping * mu + (1.0 - damping) * mu_new
        delta = float(np.max(np.abs(mu_next - mu)))
        mu = mu_next
        if delta <= tol:
            converged = True
            break
    prd = det_weight * mu
    s_track = miss_weight + prd.sum(axis=1)
    nu = det_weight / (s_track[:, None] - prd)
    p_miss = miss_weight / s_track
    p_det = prd / s_track[:, None]
    s_meas = new_weight + nu.sum(axis=0)
    p_new = new_weight / s_meas
    return p_miss, p_det, p_new, converged


def bp_pmb_update(
    d_predicted: PmbmDensity, sensor: SensorModel, measurements
) -> PmbDensity:
    """Measurement update that outputs a PMB via belief-propagation marginals.

    The predicted density is first reduced track-wise to a PMB. No gating is
    applied: every track-measurement pairing keeps its likelihood weight.
    Each output Bernoulli merges the track's missed and per-measurement
    detection children weighted by the BP association marginals; each
    measurement also yields a new track exactly as in the ranked-hypothesis
    update. A warning is issued if message passing hits the iteration cap.
    """
    pmb = to_pmb(d_predicted)
    h, r_noise = sensor.obs, sensor.obs_noise
    n_z = h.shape[0]
    zs = np.array([np.asarray(z, dtype=float).reshape(-1) for z in measurements], dtype=float)
    if zs.size == 0:
        zs = np.zeros((0, n_z))
    m = zs.shape[0]
    n = len(pmb.tracks)
    p_d = sensor.detection_prob
    clutter = sensor.clutter_intensity

    r_prior = np.array([t.locals[0].existence for t in pmb.tracks])
    miss_weight = 1.0 - r_prior * p_d
    det_weight = np.zeros((n, m))
    batch = None
    if n and m and p_d > 0:
        batch = _BatchInnovation(
            np.stack([t.locals[0].density.mean for t in pmb.tracks]),
            np.stack([t.locals[0].density.cov for t in pmb.tracks]),
            h,
            r_noise,
        )
        _, loglik, innov = batch.maha_loglik(zs)
        det_weight = r_prior[:, None] * p_d * np.exp(loglik)

    # New-track quantities from the full (ungated) PPP posterior.
    new_existence = np.zeros(m)
    new_density: list[GaussianDensity] = []
    new_weight = np.full(m, clutter)
    if m:
        terms = [t for t in pmb.ppp.terms if t.weight > 0]
        if terms and p_d > 0:
            ppp_batch = _BatchInnovation(
                np.stack([t.density.mean for t in terms]),
                np.stack([t.density.cov for t in terms]),
                h,
                r_noise,
            )
            _, ppp_loglik, ppp_innov = ppp_batch.maha_loglik(zs)
            log_w = np.log([t.weight for t in terms])
        for j in range(m):
            if terms and p_d > 0:
                log_terms = log_w + ppp_loglik[:, j]
                top = float(log_terms.max())
                lin = np.exp(log_terms - top)
                e_j = p_d * math.exp(top) * float(lin.sum())
                weights = lin / lin.sum()
                mix_means = ppp_batch.means + np.einsum(
                    "gij,gj->gi", ppp_batch.gain, ppp_innov[:, j]
                )
                mean = weights @ mix_means
                cov = np.einsum("g,gij->ij", weights, ppp_batch.cov_post) + np.einsum(
                    "g,gi,gj->ij", weights, mix_means - mean, mix_means - mean
                )
                new_density.append(GaussianDensity(mean, 0.5 * (cov + cov.T)))
            else:
                e_j = 0.0
                new_density.append(_lift_measurement(zs[j], h))
            new_weight[j] += e_j
            new_existence[j] = e_j / new_weight[j] if new_weight[j] > 0 else 0.0

    p_miss, p_det, p_new, converged = bp_association_marginals(
        miss_weight, det_weight, new_weight
    )
    if not converged:
        warnings.warn("belief propagation hit its iteration cap before converging")

    out: list[BernoulliComponent] = []
    ids: list[int] = []
    for i, track in enumerate(pmb.tracks):
        loc = track.locals[0]
        r_missed = loc.existence * (1.0 - p_d) / (1.0 - loc.existence * p_d)
        weights = [p_miss[i] * r_missed]
        comps = [loc.density]
        # Detection children with negligible marginal mass cannot move the
        # merged moments at the tolerances used anywhere downstream.
        floor = 1e-12 * max(float(p_det[i].max()) if m else 0.0, p_miss[i], 1e-300)
        for j in range(m):
            if p_det[i, j] > floor:
                weights.append(p_det[i, j])
                comps.append(batch.posterior(i, innov[i, j]))
        existence = float(np.sum(weights))
        if existence > 0:
            arr = np.asarray(weights)
            density = moment_match(arr / arr.sum(), comps)
        else:
            density = loc.density
        out.append(BernoulliComponent(min(existence, 1.0), density))
        ids.append(track.id)
    next_id = max((t.id for t in pmb.tracks), default=-1) + 1
    for j in range(m):
        out.append(BernoulliComponent(float(p_new[j] * new_existence[j]), new_density[j]))
        ids.append(next_id + j)

    ppp = PppIntensity(tuple(PppTerm((1.0 - p_d) * t.weight, t.density) for t in pmb.ppp.terms))
    tracks = tuple(Track(id=i, locals=(b,)) for i, b in zip(ids, out))
    return PmbmDensity(
        ppp=ppp,
        tracks=tracks,
        hypotheses=(GlobalHypothesis(log_weight=0.0, locals_chosen=(0,) * len(tracks)),),
    )
