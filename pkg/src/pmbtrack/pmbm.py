"""Poisson multi-Bernoulli mixture data model and housekeeping.

A PMBM is the union of an independent Poisson point process (undetected
targets) and a multi-Bernoulli mixture over data-association hypotheses.
Each track holds the local hypotheses (Bernoulli components) of one
potential target; a global hypothesis selects one local hypothesis per
track. A PMB is the special case of a single global hypothesis with one
local hypothesis per track.

Global-hypothesis weights are stored in the log domain and normalised with
log-sum-exp: weight products underflow over long runs otherwise. All values
are immutable snapshots; every operation returns a new density.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ContractViolationError
from .gaussian import GaussianDensity, gaussian_kld

__all__ = [
    "PppTerm",
    "PppIntensity",
    "BernoulliComponent",
    "Track",
    "GlobalHypothesis",
    "PmbmDensity",
    "PmbDensity",
    "DIVERGENCE_CAP",
    "bernoulli_kld",
    "compute_phd",
    "prune_and_cap",
    "estimate_targets",
    "empty_pmbm",
    "make_pmb",
    "is_pmb",
    "serialize_pmbm",
    "parse_pmbm",
]

# Finite stand-in for an infinite divergence (absolute-continuity failure);
# large enough that any pairing carrying it loses every assignment.
DIVERGENCE_CAP = 1e9

_WEIGHT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PppTerm:
    weight: float
    density: GaussianDensity

    def __post_init__(self):
        if not (self.weight >= 0.0):
            raise ContractViolationError(f"PPP term weight must be >= 0, got {self.weight}")


@dataclass(frozen=True, eq=False)
class PppIntensity:
    """Weighted Gaussian-mixture intensity of the undetected-target process."""

    terms: tuple[PppTerm, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def value_at(self, x) -> float:
        return sum(t.weight * math.exp(t.density.log_pdf(x)) for t in self.terms)


@dataclass(frozen=True, eq=False)
class BernoulliComponent:
    """One local hypothesis of a track: existence probability and state density.

    ``assoc_weight_log`` is the log of the weight factor this local hypothesis
    acquired in the update that created it.
    """

    existence: float
    density: GaussianDensity
    assoc_weight_log: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.existence <= 1.0):
            raise ContractViolationError(f"existence must lie in [0, 1], got {self.existence}")


@dataclass(frozen=True, eq=False)
class Track:
    """A potential target: its local hypotheses plus a stable identifier."""

    id: int
    locals: tuple[BernoulliComponent, ...]

    def __post_init__(self):
        object.__setattr__(self, "locals", tuple(self.locals))
        if not self.locals:
            raise ContractViolationError(f"track {self.id} has no local hypotheses")


@dataclass(frozen=True, eq=False)
class GlobalHypothesis:
    """A consistent selection of one local hypothesis per track, with log weight."""

    log_weight: float
    locals_chosen: tuple[int, ...]

    def __post_init__(self):
        if type(self.locals_chosen) is not tuple:
            object.__setattr__(self, "locals_chosen", tuple(int(i) for i in self.locals_chosen))
        if not math.isfinite(self.log_weight) or self.log_weight > 1e-9:
            raise ContractViolationError(f"hypothesis log weight {self.log_weight} out of range")

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)


@dataclass(frozen=True, eq=False)
class PmbmDensity:
    ppp: PppIntensity
    tracks: tuple[Track, ...]
    hypotheses: tuple[GlobalHypothesis, ...]

    def __post_init__(self):
        object.__setattr__(self, "tracks", tuple(self.tracks))
        object.__setattr__(self, "hypotheses", tuple(self.hypotheses))
        if not self.hypotheses:
            raise ContractViolationError("a PMBM needs at least one global hypothesis")
        ids = [t.id for t in self.tracks]
        if len(set(ids)) != len(ids):
            raise ContractViolationError(f"track ids are not unique: {ids}")
        n = len(self.tracks)
        if any(len(h.locals_chosen) != n for h in self.hypotheses):
            raise ContractViolationError("hypothesis length does not match the track count")
        if n:
            chosen = np.array([h.locals_chosen for h in self.hypotheses])
            counts = np.array([len(t.locals) for t in self.tracks])
            if np.any(chosen < 0) or np.any(chosen >= counts):
                raise ContractViolationError("hypothesis selects a local hypothesis out of range")
        total = logsumexp(np.array([h.log_weight for h in self.hypotheses]))
        if abs(total) > _WEIGHT_TOL:
            raise ContractViolationError(
                f"hypothesis weights sum to {math.exp(total)}, expected 1"
            )

    @property
    def log_weights(self) -> np.ndarray:
        return np.array([h.log_weight for h in self.hypotheses])

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


# A PMB is a PMBM with one global hypothesis and one local hypothesis per track.
PmbDensity = PmbmDensity


def empty_pmbm() -> PmbmDensity:
    """PMBM describing 'no targets': empty PPP, no tracks, one vacuous hypothesis."""
    return PmbmDensity(
        ppp=PppIntensity(()),
        tracks=(),
        hypotheses=(GlobalHypothesis(log_weight=0.0, locals_chosen=()),),
    )


def make_pmb(ppp: PppIntensity, components, ids=None) -> PmbDensity:
    """Single-hypothesis PMBM from one Bernoulli component per track."""
    components = tuple(components)
    if ids is None:
        ids = range(len(components))
    tracks = tuple(Track(id=i, locals=(c,)) for i, c in zip(ids, components))
    return PmbmDensity(
        ppp=ppp,
        tracks=tracks,
        hypotheses=(GlobalHypothesis(log_weight=0.0, locals_chosen=(0,) * len(tracks)),),
    )


def is_pmb(d: PmbmDensity) -> bool:
    return len(d.hypotheses) == 1 and all(len(t.locals) == 1 for t in d.tracks)


def normalized_hypotheses(hyps) -> tuple[GlobalHypothesis, ...]:
    """Rescale hypothesis log weights to sum to one (log-sum-exp)."""
    hyps = tuple(hyps)
    if not hyps:
        raise ContractViolationError("cannot normalise an empty hypothesis set")
    total = logsumexp([h.log_weight for h in hyps])
    return tuple(
        GlobalHypothesis(log_weight=h.log_weight - total, locals_chosen=h.locals_chosen)
        for h in hyps
    )


def bernoulli_kld(f: BernoulliComponent, q: BernoulliComponent) -> float:
    """KLD between Bernoulli set densities D(f || q).

    Returns :data:`DIVERGENCE_CAP` instead of infinity when absolute
    continuity fails (f has mass where q has none), so downstream assignment
    matrices stay finite while such pairings are effectively forbidden.
    """
    rf, rq = f.existence, q.existence
    if not 0.0 <= rq <= 1.0:
        raise ContractViolationError(f"existence of q must lie in [0, 1], got {rq}")
    if rq == 0.0:
        return 0.0 if rf == 0.0 else DIVERGENCE_CAP
    if rq == 1.0:
        if rf == 1.0:
            return gaussian_kld(f.density, q.density)
        return DIVERGENCE_CAP
    value = 0.0
    if rf < 1.0:
        value += (1.0 - rf) * math.log((1.0 - rf) / (1.0 - rq))
    if rf > 0.0:
        value += rf * (math.log(rf / rq) + gaussian_kld(f.density, q.density))
    return max(value, 0.0)


def compute_phd(d: PmbmDensity, x) -> float:
    """Probability hypothesis density (first-moment intensity) at a point.

    Sum of the PPP intensity and, over global hypotheses, the weighted
    existence-scaled single-target densities the hypothesis selects.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    value = d.ppp.value_at(x)
    for hyp in d.hypotheses:
        w = hyp.weight
        for track, chosen in zip(d.tracks, hyp.locals_chosen):
            local = track.locals[chosen]
            if local.existence > 0.0:
                value += w * local.existence * math.exp(local.density.log_pdf(x))
    return value


def _merge_duplicate_hypotheses(hyps) -> list[GlobalHypothesis]:
    by_selection: dict[tuple[int, ...], float] = {}
    order: list[tuple[int, ...]] = []
    for h in hyps:
        key = h.locals_chosen
        if key in by_selection:
            by_selection[key] = np.logaddexp(by_selection[key], h.log_weight)
        else:
            by_selection[key] = h.log_weight
            order.append(key)
    return [GlobalHypothesis(log_weight=by_selection[k], locals_chosen=k) for k in order]


def prune_and_cap(
    d: PmbmDensity, gamma_ppp: float, gamma_bern: float, max_hyp: int
) -> PmbmDensity:
    """Threshold the PPP and Bernoulli components and cap the hypothesis set.

    PPP terms below ``gamma_ppp`` are dropped. Local hypotheses with
    existence below ``gamma_bern`` are kept as explicit zero-existence
    entries so hypothesis index vectors stay valid. Hypotheses beyond the
    ``max_hyp`` highest-weight ones are removed; local hypotheses and tracks
    no longer referenced (or nonexistent under every survivor) are dropped
    and indices remapped. Weights are renormalised. Idempotent.
    """
    if gamma_ppp < 0 or gamma_bern < 0:
        raise ContractViolationError("pruning thresholds must be non-negative")
    if max_hyp < 1:
        raise ContractViolationError("max_hyp must be at least 1: cannot remove all hypotheses")

    ppp = PppIntensity(tuple(t for t in d.ppp.terms if t.weight >= gamma_ppp))

    tracks = [
        Track(
            id=t.id,
            locals=tuple(
                BernoulliComponent(0.0, loc.density, loc.assoc_weight_log)
                if loc.existence < gamma_bern
                else loc
                for loc in t.locals
            ),
        )
        for t in d.tracks
    ]

    hyps = _merge_duplicate_hypotheses(d.hypotheses)
    hyps.sort(key=lambda h: (-h.log_weight, h.locals_chosen))
    hyps = hyps[:max_hyp]

    # Compact: keep only locals some survivor references; drop tracks whose
    # selected local is nonexistent under every survivor.
    referenced = [sorted({h.locals_chosen[i] for h in hyps}) for i in range(len(tracks))]
    keep_track = [
        any(tracks[i].locals[c].existence > 0.0 for c in referenced[i])
        for i in range(len(tracks))
    ]
    remap = [
        {old: new for new, old in enumerate(referenced[i])} if keep_track[i] else None
        for i in range(len(tracks))
    ]
    new_tracks = tuple(
        Track(id=tracks[i].id, locals=tuple(tracks[i].locals[c] for c in referenced[i]))
        for i in range(len(tracks))
        if keep_track[i]
    )
    new_hyps = [
        GlobalHypothesis(
            log_weight=h.log_weight,
            locals_chosen=tuple(
                remap[i][h.locals_chosen[i]] for i in range(len(tracks)) if keep_track[i]
            ),
        )
        for h in hyps
    ]
    new_hyps = _merge_duplicate_hypotheses(new_hyps)
    return PmbmDensity(ppp=ppp, tracks=new_tracks, hypotheses=normalized_hypotheses(new_hyps))


def estimate_targets(d: PmbmDensity, threshold: float) -> list[np.ndarray]:
    """Means of the Bernoullis the highest-weight hypothesis selects with
    existence above the threshold."""
    if not 0.0 < threshold < 1.0:
        raise ContractViolationError(f"estimation threshold must lie in (0, 1), got {threshold}")
    best = max(range(len(d.hypotheses)), key=lambda i: (d.hypotheses[i].log_weight, -i))
    hyp = d.hypotheses[best]
    out = []
    for track, chosen in zip(d.tracks, hyp.locals_chosen):
        local = track.locals[chosen]
        if local.existence > threshold:
            out.append(local.density.mean.copy())
    return out


# ---------------------------------------------------------------------------
# Text serialisation (golden-file regression format)
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _fmt_vector(v: np.ndarray) -> str:
    return "[" + ", ".join(_fmt(x) for x in v) + "]"


def _fmt_matrix(m: np.ndarray) -> str:
    return "[" + ", ".join(_fmt_vector(row) for row in m) + "]"


def serialize_pmbm(d: PmbmDensity) -> str:
    """Self-describing key-value text form, fixed field order, 17 significant digits."""
    lines = ["format: pmbm-text-v1", f"n_ppp_terms: {len(d.ppp.terms)}"]
    for i, term in enumerate(d.ppp.terms):
        lines.append(f"ppp_term.{i}.weight: {_fmt(term.weight)}")
        lines.append(f"ppp_term.{i}.mean: {_fmt_vector(term.density.mean)}")
        lines.append(f"ppp_term.{i}.cov: {_fmt_matrix(term.density.cov)}")
    lines.append(f"n_tracks: {len(d.tracks)}")
    for i, track in enumerate(d.tracks):
        lines.append(f"track.{i}.id: {track.id}")
        lines.append(f"track.{i}.n_locals: {len(track.locals)}")
        for j, loc in enumerate(track.locals):
            lines.append(f"track.{i}.local.{j}.existence: {_fmt(loc.existence)}")
            lines.append(f"track.{i}.local.{j}.assoc_weight_log: {_fmt(loc.assoc_weight_log)}")
            lines.append(f"track.{i}.local.{j}.mean: {_fmt_vector(loc.density.mean)}")
            lines.append(f"track.{i}.local.{j}.cov: {_fmt_matrix(loc.density.cov)}")
    lines.append(f"n_hypotheses: {len(d.hypotheses)}")
    for i, hyp in enumerate(d.hypotheses):
        lines.append(f"hypothesis.{i}.log_weight: {_fmt(hyp.log_weight)}")
        lines.append(
            f"hypothesis.{i}.locals_chosen: [" + ", ".join(str(c) for c in hyp.locals_chosen) + "]"
        )
    return "\n".join(lines) + "\n"


def parse_pmbm(text: str) -> PmbmDensity:
    """Inverse of :func:`serialize_pmbm`."""
    fields: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    if fields.get("format") != "pmbm-text-v1":
        raise ContractViolationError(f"unrecognised serialisation format: {fields.get('format')}")

    def lit(key):
        return ast.literal_eval(fields[key])

    terms = tuple(
        PppTerm(
            weight=float(fields[f"ppp_term.{i}.weight"]),
            density=GaussianDensity(lit(f"ppp_term.{i}.mean"), lit(f"ppp_term.{i}.cov")),
        )
        for i in range(int(fields["n_ppp_terms"]))
    )
    tracks = []
    for i in range(int(fields["n_tracks"])):
        locs = tuple(
            BernoulliComponent(
                existence=float(fields[f"track.{i}.local.{j}.existence"]),
                density=GaussianDensity(
                    lit(f"track.{i}.local.{j}.mean"), lit(f"track.{i}.local.{j}.cov")
                ),
                assoc_weight_log=float(fields[f"track.{i}.local.{j}.assoc_weight_log"]),
            )
            for j in range(int(fields[f"track.{i}.n_locals"]))
        )
        tracks.append(Track(id=int(fields[f"track.{i}.id"]), locals=locs))
    hyps = tuple(
        GlobalHypothesis(
            log_weight=float(fields[f"hypothesis.{i}.log_weight"]),
            locals_chosen=tuple(lit(f"hypothesis.{i}.locals_chosen")),
        )
        for i in range(int(fields["n_hypotheses"]))
    )
    return PmbmDensity(ppp=PppIntensity(terms), tracks=tuple(tracks), hypotheses=hyps)
