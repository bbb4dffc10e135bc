"""Point-target PMBM filtering recursion.

Prediction pushes the PPP and every local hypothesis through the dynamics
and scales by the survival probability. The update creates, per measurement,
a new track (first detection of an undetected target, or clutter) and, per
prior local hypothesis, a missed-detection child plus one detection child
per gated measurement. Global hypotheses for the posterior are generated per
parent hypothesis with Murty's ranked assignments on a cost matrix of
negative log weight-factor ratios, the track-oriented construction: the
missed/nonexistence factors are folded into a per-parent constant so an
assignment's cost equals the negative log of its child weight up to that
constant.

The per-local Kalman algebra is batched across all local hypotheses of a
step (shared H and R), which is where a dense update spends its time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assignment import murty_kbest
from .errors import ContractViolationError, NumericalError
from .gaussian import GaussianDensity, LinearGaussianModel
from .pmbm import (
    BernoulliComponent,
    GlobalHypothesis,
    PmbmDensity,
    PppIntensity,
    PppTerm,
    Track,
    normalized_hypotheses,
    prune_and_cap,
)

__all__ = ["BirthModel", "SensorModel", "FilterThresholds", "predict", "update", "step"]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class BirthModel:
    """PPP birth intensity: weighted Gaussian terms appended at prediction."""

    terms: tuple[PppTerm, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if any(t.weight <= 0 for t in self.terms):
            raise ContractViolationError("birth weights must be positive")


@dataclass(frozen=True, eq=False)
class SensorModel:
    """Detection, clutter, and measurement model of the sensor."""

    detection_prob: float
    clutter_rate: float
    clutter_region_area: float
    obs: np.ndarray
    obs_noise: np.ndarray
    gate_threshold: float

    def __post_init__(self):
        if not 0.0 <= self.detection_prob <= 1.0:
            raise ContractViolationError("detection probability must lie in [0, 1]")
        if self.clutter_rate < 0 or self.clutter_region_area <= 0:
            raise ContractViolationError("clutter rate must be >= 0 over a positive area")
        if self.gate_threshold <= 0:
            raise ContractViolationError("gate threshold must be positive")
        object.__setattr__(self, "obs", np.atleast_2d(np.asarray(self.obs, dtype=float)))
        object.__setattr__(self, "obs_noise", np.atleast_2d(np.asarray(self.obs_noise, dtype=float)))

    @property
    def clutter_intensity(self) -> float:
        """Clutter intensity at any point of the region (uniform clutter)."""
        return self.clutter_rate / self.clutter_region_area


@dataclass(frozen=True)
class FilterThresholds:
    ppp_weight_min: float = 1e-5
    existence_min: float = 1e-5
    max_hypotheses: int = 200


def _batch_predict(means: np.ndarray, covs: np.ndarray, dyn: LinearGaussianModel):
    """Kalman-predict a stack of Gaussians; returns means, covs, Cholesky factors."""
    f, q = dyn.transition, dyn.process_noise
    means2 = means @ f.T
    covs2 = np.einsum("ij,njk,lk->nil", f, covs, f) + q
    covs2 = 0.5 * (covs2 + covs2.transpose(0, 2, 1))
    try:
        chols = np.linalg.cholesky(covs2)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("predicted covariance lost positive definiteness") from exc
    return means2, covs2, chols


def predict(
    d: PmbmDensity, dyn: LinearGaussianModel, survival: float, birth: BirthModel
) -> PmbmDensity:
    """One prediction step: survival-scaled propagation plus PPP birth."""
    if not 0.0 <= survival <= 1.0:
        raise ContractViolationError("survival probability must lie in [0, 1]")
    n_x = dyn.state_dim
    for t in d.ppp.terms:
        if t.density.dim != n_x:
            raise ContractViolationError("PPP term dimension does not match the dynamics")

    ppp_terms: list[PppTerm] = []
    if d.ppp.terms:
        means = np.stack([t.density.mean for t in d.ppp.terms])
        covs = np.stack([t.density.cov for t in d.ppp.terms])
        means2, covs2, chols = _batch_predict(means, covs, dyn)
        ppp_terms = [
            PppTerm(
                weight=survival * t.weight,
                density=GaussianDensity._from_validated(means2[b], covs2[b], chols[b]),
            )
            for b, t in enumerate(d.ppp.terms)
        ]
    ppp_terms.extend(birth.terms)

    tracks: list[Track] = []
    all_locals = [loc for t in d.tracks for loc in t.locals]
    if all_locals:
        means = np.stack([loc.density.mean for loc in all_locals])
        covs = np.stack([loc.density.cov for loc in all_locals])
        means2, covs2, chols = _batch_predict(means, covs, dyn)
        flat = 0
        for t in d.tracks:
            locs = []
            for loc in t.locals:
                locs.append(
                    BernoulliComponent(
                        existence=survival * loc.existence,
                        density=GaussianDensity._from_validated(
                            means2[flat], covs2[flat], chols[flat]
                        ),
                        assoc_weight_log=loc.assoc_weight_log,
                    )
                )
                flat += 1
            tracks.append(Track(id=t.id, locals=tuple(locs)))
    return PmbmDensity(
        ppp=PppIntensity(tuple(ppp_terms)), tracks=tuple(tracks), hypotheses=d.hypotheses
    )


class _BatchInnovation:
    """Innovation statistics for a stack of Gaussians sharing one (H, R)."""

    __slots__ = ("means", "s_inv", "gain", "cov_post", "chol_post", "z_pred", "log_norm")

    def __init__(self, means: np.ndarray, covs: np.ndarray, h: np.ndarray, r: np.ndarray):
        n_z = h.shape[0]
        s = np.einsum("ai,nij,bj->nab", h, covs, h) + r
        s = 0.5 * (s + s.transpose(0, 2, 1))
        if n_z == 1:
            det = s[:, 0, 0]
            if np.any(det <= 0):
                raise NumericalError("singular innovation covariance in update")
            s_inv = (1.0 / det)[:, None, None]
            log_det = np.log(det)
        elif n_z == 2:
            a, b, c = s[:, 0, 0], s[:, 0, 1], s[:, 1, 1]
            det = a * c - b * b
            if np.any(det <= 0) or np.any(a <= 0):
                raise NumericalError("singular innovation covariance in update")
            s_inv = np.empty_like(s)
            s_inv[:, 0, 0] = c / det
            s_inv[:, 1, 1] = a / det
            s_inv[:, 0, 1] = s_inv[:, 1, 0] = -b / det
            log_det = np.log(det)
        else:
            try:
                np.linalg.cholesky(s)
            except np.linalg.LinAlgError as exc:
                raise NumericalError("singular innovation covariance in update") from exc
            s_inv = np.linalg.inv(s)
            log_det = np.linalg.slogdet(s)[1]
        pht = covs @ h.T
        self.means = means
        self.s_inv = s_inv
        self.gain = pht @ s_inv
        cov_post = covs - self.gain @ pht.transpose(0, 2, 1)
        cov_post = 0.5 * (cov_post + cov_post.transpose(0, 2, 1))
        self.cov_post = cov_post
        try:
            self.chol_post = np.linalg.cholesky(cov_post)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("updated covariance lost positive definiteness") from exc
        self.z_pred = means @ h.T
        self.log_norm = -0.5 * (n_z * _LOG_2PI + log_det)

    def maha_loglik(self, zs: np.ndarray):
        """Squared Mahalanobis distances and log likelihoods, shape (L, m)."""
        innov = zs[None, :, :] - self.z_pred[:, None, :]
        tmp = np.einsum("nij,nmj->nmi", self.s_inv, innov)
        maha = np.einsum("nmi,nmi->nm", innov, tmp)
        return maha, self.log_norm[:, None] - 0.5 * maha, innov

    def posterior(self, idx: int, innov_row: np.ndarray) -> GaussianDensity:
        mean = self.means[idx] + self.gain[idx] @ innov_row
        return GaussianDensity._from_validated(mean, self.cov_post[idx], self.chol_post[idx])


class _InnovationModel:
    """Single-density innovation quantities (thin wrapper over the batch form)."""

    __slots__ = ("_batch",)

    def __init__(self, density: GaussianDensity, h: np.ndarray, r: np.ndarray):
        self._batch = _BatchInnovation(density.mean[None, :], density.cov[None, :, :], h, r)

    @property
    def cov_post(self) -> np.ndarray:
        return self._batch.cov_post[0]

    def mahalanobis_and_loglik(self, zs: np.ndarray):
        maha, loglik, _ = self._batch.maha_loglik(np.atleast_2d(zs))
        return maha[0], loglik[0]

    def posterior_mean(self, base_mean: np.ndarray, z: np.ndarray) -> np.ndarray:
        return base_mean + self._batch.gain[0] @ (z - self._batch.z_pred[0])


def _lift_measurement(z: np.ndarray, h: np.ndarray) -> GaussianDensity:
    """Arbitrary valid density for zero-existence placeholders, anchored at z."""
    mean = np.linalg.pinv(h) @ z
    return GaussianDensity(mean, np.eye(h.shape[1]))


def update(
    d: PmbmDensity, sensor: SensorModel, measurements, max_hyp: int
) -> PmbmDensity:
    """One measurement update with gating and ranked hypothesis generation.

    The Murty budget is split across parent hypotheses proportionally to
    their weights (ceil, at least one child each); duplicates are merged and
    weights renormalised. Gating uses the squared Mahalanobis innovation
    distance per local hypothesis, for track and PPP pairings alike. An
    updated track lists, per prior local hypothesis, its missed-detection
    child followed by the detection children in ascending measurement order.
    """
    if max_hyp < 1:
        raise ContractViolationError("max_hyp must be at least 1")
    h, r_noise = sensor.obs, sensor.obs_noise
    n_z = h.shape[0]
    zs = np.array([np.asarray(z, dtype=float).reshape(-1) for z in measurements], dtype=float)
    if zs.size == 0:
        zs = np.zeros((0, n_z))
    if zs.shape[1] != n_z:
        raise ContractViolationError(f"measurements have dimension {zs.shape[1]}, expected {n_z}")
    m = zs.shape[0]
    n_tracks = len(d.tracks)
    p_d = sensor.detection_prob
    log_pd = math.log(p_d) if p_d > 0 else -math.inf
    clutter = sensor.clutter_intensity
    log_clutter = math.log(clutter) if clutter > 0 else -math.inf

    # --- Undetected targets stay undetected: PPP thinned by (1 - pD). ---
    ppp_updated = PppIntensity(
        tuple(PppTerm((1.0 - p_d) * t.weight, t.density) for t in d.ppp.terms)
    )

    # --- New tracks: one per measurement, from the gated PPP posterior. ---
    new_tracks: list[Track] = []
    log_w_new = np.full(m, log_clutter)
    next_id = max((t.id for t in d.tracks), default=-1) + 1
    if m:
        n_ppp = len(d.ppp.terms)
        if n_ppp and p_d > 0:
            ppp_w = np.array([t.weight for t in d.ppp.terms])
            batch = _BatchInnovation(
                np.stack([t.density.mean for t in d.ppp.terms]),
                np.stack([t.density.cov for t in d.ppp.terms]),
                h,
                r_noise,
            )
            maha, loglik, innov = batch.maha_loglik(zs)
            gate = (maha <= sensor.gate_threshold) & (ppp_w > 0)[:, None]
        for j in range(m):
            gated = np.flatnonzero(gate[:, j]) if n_ppp and p_d > 0 else np.empty(0, int)
            if gated.size:
                log_terms = np.log(ppp_w[gated]) + loglik[gated, j]
                top = float(log_terms.max())
                lin = np.exp(log_terms - top)
                log_e = log_pd + top + math.log(float(lin.sum()))
                log_w_new[j] = np.logaddexp(log_e, log_clutter)
                existence = math.exp(log_e - log_w_new[j])
                weights = lin / lin.sum()
                mix_means = batch.means[gated] + np.einsum(
                    "gij,gj->gi", batch.gain[gated], innov[gated, j]
                )
                mean = weights @ mix_means
                cov = np.einsum(
                    "g,gij->ij", weights, batch.cov_post[gated]
                ) + np.einsum("g,gi,gj->ij", weights, mix_means - mean, mix_means - mean)
                density = GaussianDensity(mean, 0.5 * (cov + cov.T))
            else:
                density = _lift_measurement(zs[j], h)
                existence = 0.0
            new_tracks.append(
                Track(
                    id=next_id + j,
                    locals=(
                        BernoulliComponent(0.0, density, 0.0),
                        BernoulliComponent(existence, density, float(log_w_new[j])),
                    ),
                )
            )

    # --- Prior tracks: missed child plus one detection child per gated z. ---
    prior_locals = [loc for t in d.tracks for loc in t.locals]
    n_loc = len(prior_locals)
    r_prior = np.array([loc.existence for loc in prior_locals])
    gate = np.zeros((n_loc, m), dtype=bool)
    if n_loc and m and p_d > 0:
        batch = _BatchInnovation(
            np.stack([loc.density.mean for loc in prior_locals]),
            np.stack([loc.density.cov for loc in prior_locals]),
            h,
            r_noise,
        )
        maha, loglik, innov = batch.maha_loglik(zs)
        gate = (maha <= sensor.gate_threshold) & (r_prior > 0)[:, None]

    updated_tracks: list[Track] = []
    local_offset: list[list[int]] = []  # [track][prior local] -> child base index
    gated_js: list[list[np.ndarray]] = []  # [track][prior local] -> gated measurement ids
    det_pos: list[list[dict[int, int]]] = []  # measurement id -> position among gated
    det_cost: list[list[np.ndarray]] = []  # matching -log(w_det / w_miss) entries
    flat = 0
    for track in d.tracks:
        children: list[BernoulliComponent] = []
        offsets: list[int] = []
        track_gates: list[np.ndarray] = []
        track_pos: list[dict[int, int]] = []
        track_costs: list[np.ndarray] = []
        for loc in track.locals:
            offsets.append(len(children))
            r = loc.existence
            log_w_miss = math.log1p(-r * p_d)
            r_missed = r * (1.0 - p_d) / (1.0 - r * p_d)
            children.append(BernoulliComponent(r_missed, loc.density, log_w_miss))
            gated = np.flatnonzero(gate[flat])
            if gated.size:
                log_w_det = math.log(r) + log_pd + loglik[flat, gated]
                children.extend(
                    BernoulliComponent(1.0, batch.posterior(flat, innov[flat, j]), float(lw))
                    for j, lw in zip(gated, log_w_det)
                )
                track_costs.append(-(log_w_det - log_w_miss))
            else:
                track_costs.append(np.empty(0))
            track_gates.append(gated)
            track_pos.append({int(j): pos for pos, j in enumerate(gated)})
            flat += 1
        updated_tracks.append(Track(id=track.id, locals=tuple(children)))
        local_offset.append(offsets)
        gated_js.append(track_gates)
        det_pos.append(track_pos)
        det_cost.append(track_costs)

    # --- Ranked child hypotheses per parent. ---
    children_log_w: dict[tuple[int, ...], float] = {}
    order: list[tuple[int, ...]] = []
    new_col_cost = -log_w_new  # cost of assigning measurement j to its own new track
    meas_range = np.arange(m)
    for parent in d.hypotheses:
        chosen = parent.locals_chosen
        base = parent.log_weight + sum(
            updated_tracks[i].locals[local_offset[i][chosen[i]]].assoc_weight_log
            for i in range(n_tracks)
        )
        cost = np.full((m, n_tracks + m), np.inf)
        for i in range(n_tracks):
            cost[gated_js[i][chosen[i]], i] = det_cost[i][chosen[i]]
        cost[meas_range, n_tracks + meas_range] = new_col_cost

        # Measurements gated to no track are forced onto their own new track;
        # solve the ranked assignment on the remaining rows only.
        has_track_option = np.isfinite(cost[:, :n_tracks]).any(axis=1) if m else np.zeros(0, bool)
        live_rows = np.flatnonzero(has_track_option)
        forced_rows = np.flatnonzero(~has_track_option)
        forced_cost = float(new_col_cost[forced_rows].sum())
        live_track_cols = (
            np.flatnonzero(np.isfinite(cost[live_rows][:, :n_tracks]).any(axis=0))
            if live_rows.size
            else np.empty(0, dtype=int)
        )
        live_cols = np.concatenate([live_track_cols, n_tracks + live_rows])
        reduced = cost[np.ix_(live_rows, live_cols)]

        k_parent = math.ceil(max_hyp * parent.weight)
        base_child = [local_offset[i][chosen[i]] for i in range(n_tracks)] + [0] * m
        for j in forced_rows:
            base_child[n_tracks + j] = 1
        for assignment in murty_kbest(reduced, max(k_parent, 1)):
            child = list(base_child)
            for row_pos, col_pos in enumerate(assignment.mapping):
                j = int(live_rows[row_pos])
                col = int(live_cols[col_pos])
                if col >= n_tracks:
                    child[col] = 1
                else:
                    child[col] = (
                        local_offset[col][chosen[col]] + 1 + det_pos[col][chosen[col]][j]
                    )
            log_w = base - forced_cost - assignment.cost
            key = tuple(child)
            if key in children_log_w:
                children_log_w[key] = np.logaddexp(children_log_w[key], log_w)
            else:
                children_log_w[key] = log_w
                order.append(key)

    hypotheses = normalized_hypotheses(
        GlobalHypothesis(log_weight=children_log_w[key], locals_chosen=key) for key in order
    )
    return PmbmDensity(
        ppp=ppp_updated,
        tracks=tuple(updated_tracks) + tuple(new_tracks),
        hypotheses=hypotheses,
    )


def step(
    d: PmbmDensity,
    dyn: LinearGaussianModel,
    survival: float,
    birth: BirthModel,
    sensor: SensorModel,
    measurements,
    thresholds: FilterThresholds,
) -> PmbmDensity:
    """predict -> update -> prune_and_cap composition for one time step."""
    predicted = predict(d, dyn, survival, birth)
    updated = update(predicted, sensor, measurements, thresholds.max_hypotheses)
    return prune_and_cap(
        updated, thresholds.ppp_weight_min, thresholds.existence_min, thresholds.max_hypotheses
    )
