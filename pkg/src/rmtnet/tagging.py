"""Community typing, RMT roles, play-style labels and power-law fitting."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import zeta
from sklearn.base import BaseEstimator

from .errors import DegenerateSamples, TooFewSamples
from .features import ClusteringResult, CommunityFeatures

log = logging.getLogger(__name__)


class CommunityType(str, Enum):
    GIANT_CONSUMER = "GiantConsumer"
    LARGE_STAR = "LargeStar"
    SMALL_STAR = "SmallStar"
    CHAIN = "Chain"
    OUTCAST = "Outcast"


class Role(str, Enum):
    PROVIDER = "Provider"
    CONSUMER = "Consumer"
    FILTERED = "Filtered"


ROLE_OF_TYPE = {
    CommunityType.GIANT_CONSUMER: Role.CONSUMER,
    CommunityType.LARGE_STAR: Role.PROVIDER,
    CommunityType.SMALL_STAR: Role.PROVIDER,
    CommunityType.CHAIN: Role.PROVIDER,
    CommunityType.OUTCAST: Role.FILTERED,
}

# report order, matching the usual Type 1..5 numbering
TYPE_ORDER = (
    CommunityType.GIANT_CONSUMER,
    CommunityType.LARGE_STAR,
    CommunityType.SMALL_STAR,
    CommunityType.CHAIN,
    CommunityType.OUTCAST,
)

PLAY_STYLES = ("Fisher", "Genuine", "Hard core", "Light", "Party", "Shop host", "Worker")
UNKNOWN_STYLE = "Unknown"

# zero-based columns of the sixteen play features
_PARTY, _OBTAINED, _SPENT, _FISHING, _SHOPPING = 7, 12, 13, 14, 15


# --------------------------------------------------------------------------- #
# power law
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    x_min: int
    n_tail: int
    ks: float

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "x_min": self.x_min, "n_tail": self.n_tail, "ks": self.ks}


def _mle_alpha(tail: np.ndarray, x_min: int) -> float:
    """Exact discrete maximum-likelihood exponent for ``p(x) = x^-a / zeta(a, x_min)``."""
    n = len(tail)
    log_sum = float(np.log(tail).sum())
    # the continuous-correction estimate is a good centre for the bracket
    approx = 1.0 + n / float(np.log(tail / (x_min - 0.5)).sum())
    hi = max(6.0, 2.0 * approx)

    def nll(a):
        return n * np.log(zeta(a, x_min)) + a * log_sum

    res = minimize_scalar(nll, bounds=(1.0 + 1e-6, hi), method="bounded", options={"xatol": 1e-10})
    return float(res.x)


def _ks_distance(tail: np.ndarray, alpha: float, x_min: int) -> float:
    values, counts = np.unique(tail, return_counts=True)
    empirical = np.cumsum(counts) / len(tail)
    model = 1.0 - zeta(alpha, values + 1) / zeta(alpha, x_min)
    # the CDF is a step function: compare just below each step as well
    below_emp = np.concatenate([[0.0], empirical[:-1]])
    below_mod = 1.0 - zeta(alpha, values) / zeta(alpha, x_min)
    return float(max(np.abs(empirical - model).max(), np.abs(below_emp - below_mod).max()))


def fit_power_law(samples: Iterable[int], min_tail: int = 50) -> PowerLawFit:
    """Fit a discrete power law to positive integer samples.

    For every candidate ``x_min`` that leaves at least ``min_tail`` samples in
    the tail, the exponent is the exact discrete MLE; the candidate with the
    smallest Kolmogorov-Smirnov distance between the empirical and fitted tail
    CDFs wins.
    """
    x = np.asarray(list(samples), dtype=np.int64)
    if len(x) < min_tail:
        raise TooFewSamples(f"need at least {min_tail} samples, got {len(x)}")
    if np.any(x < 1):
        raise ValueError("power-law samples must be positive integers")
    if np.all(x == x[0]):
        raise DegenerateSamples("all samples are equal")
    x = np.sort(x)
    best: PowerLawFit | None = None
    for x_min in np.unique(x):
        tail = x[np.searchsorted(x, x_min):]
        if len(tail) < min_tail:
            break
        if tail[-1] == tail[0]:
            break
        alpha = _mle_alpha(tail.astype(np.float64), int(x_min))
        ks = _ks_distance(tail, alpha, int(x_min))
        if best is None or ks < best.ks:
            best = PowerLawFit(alpha, int(x_min), len(tail), ks)
    if best is None:
        raise DegenerateSamples("no candidate x_min leaves a non-degenerate tail")
    return best


# --------------------------------------------------------------------------- #
# play styles
# --------------------------------------------------------------------------- #


def label_play_styles(result: ClusteringResult, centroids: np.ndarray | None = None) -> dict[int, str]:
    """Name user clusters from their standardised centroids.

    Rules run in priority order and each style is used at most once:
    Fisher (highest fishing), Shop host (highest shopping), Party (highest
    party count), Worker (highest money obtained minus money spent), Hard
    core (highest mean z), Light (lowest mean z); anything left is Genuine.
    The "highest" rules only fire on a positive score. Ties go to the lower
    cluster id.
    """
    C = np.asarray(result.centroids if centroids is None else centroids, dtype=np.float64)
    remaining = list(range(len(C)))
    styles: dict[int, str] = {}
    activity = C.mean(axis=1)
    rules = [
        ("Fisher", C[:, _FISHING]),
        ("Shop host", C[:, _SHOPPING]),
        ("Party", C[:, _PARTY]),
        ("Worker", C[:, _OBTAINED] - C[:, _SPENT]),
        ("Hard core", activity),
    ]
    for name, score in rules:
        if not remaining:
            break
        pick = max(remaining, key=lambda c: (score[c], -c))
        if score[pick] > 0:
            styles[pick] = name
            remaining.remove(pick)
    if remaining:
        pick = min(remaining, key=lambda c: (activity[c], c))
        styles[pick] = "Light"
        remaining.remove(pick)
    for c in remaining:
        styles[c] = "Genuine"
    return styles


def style_composition(members: Iterable[str], user_styles: Mapping[str, str]) -> dict[str, float]:
    """Fraction of members per play style; members without play data count as Unknown."""
    counts = {s: 0 for s in PLAY_STYLES}
    counts[UNKNOWN_STYLE] = 0
    total = 0
    for m in members:
        counts[user_styles.get(m, UNKNOWN_STYLE)] += 1
        total += 1
    if total == 0:
        return {s: 0.0 for s in counts}
    return {s: c / total for s, c in counts.items()}


# --------------------------------------------------------------------------- #
# community typing
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class TaggingThresholds:
    """Structural cut-offs for the five community types (all overridable from config)."""

    giant_min_share: float = 0.05
    giant_alpha_min: float = 2.0
    giant_alpha_max: float = 3.5
    power_law_min_tail: int = 50
    chain_max_mean_degree: float = 2.5
    chain_min_diameter_ratio: float = 1.0 / 3.0
    chain_min_assortativity: float = 0.2
    large_star_min_size: int = 50
    large_star_max_assortativity: float = -0.7
    large_star_min_std_ratio: float = 3.0
    small_star_max_assortativity: float = -0.5

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "TaggingThresholds":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise KeyError(f"unknown tagging threshold(s): {sorted(unknown)}")
        base = cls()
        kwargs = {k: type(getattr(base, k))(v) for k, v in values.items()}
        return replace(base, **kwargs)


@dataclass
class CommunityProfile:
    community_id: int
    members: tuple[str, ...]
    features: CommunityFeatures
    degrees: tuple[int, ...] = ()
    styles: dict[str, float] = field(default_factory=dict)
    cluster_id: int | None = None
    type: CommunityType | None = None
    role: Role | None = None
    power_law: PowerLawFit | None = None
    reason: str = ""

    @property
    def size(self) -> int:
        return self.features.size

    def as_dict(self) -> dict:
        return {
            "community": self.community_id,
            "size": self.size,
            "type": self.type.value if self.type else None,
            "role": self.role.value if self.role else None,
            "cluster": self.cluster_id,
            "features": self.features.as_dict(),
            "styles": self.styles,
            "power_law": self.power_law.as_dict() if self.power_law else None,
            "reason": self.reason,
        }


def classify_profile(
    profile: CommunityProfile,
    total_nodes: int,
    thresholds: TaggingThresholds = TaggingThresholds(),
) -> tuple[CommunityType, PowerLawFit | None, str]:
    """Apply the type rules to one community; the first matching rule wins."""
    t = thresholds
    f = profile.features
    fit = None
    if total_nodes > 0 and f.size >= t.giant_min_share * total_nodes:
        try:
            fit = fit_power_law(profile.degrees, min_tail=t.power_law_min_tail)
        except (TooFewSamples, DegenerateSamples) as exc:
            log.debug("community %s: no power-law fit (%s)", profile.community_id, exc)
        if fit is not None and t.giant_alpha_min <= fit.alpha <= t.giant_alpha_max:
            return CommunityType.GIANT_CONSUMER, fit, f"size share and power-law alpha={fit.alpha:.3f}"
    if (
        f.degree_mean <= t.chain_max_mean_degree
        and f.diameter >= t.chain_min_diameter_ratio * f.size
        and f.assortativity >= t.chain_min_assortativity
    ):
        return CommunityType.CHAIN, fit, "low degree, long diameter, assortative"
    if (
        f.size >= t.large_star_min_size
        and f.assortativity <= t.large_star_max_assortativity
        and f.degree_std >= t.large_star_min_std_ratio * f.degree_mean
    ):
        return CommunityType.LARGE_STAR, fit, "large, disassortative, centralised degrees"
    if f.size < t.large_star_min_size and f.assortativity <= t.small_star_max_assortativity:
        return CommunityType.SMALL_STAR, fit, "small and disassortative"
    return CommunityType.OUTCAST, fit, "no structural rule matched"


def classify_communities(
    profiles: Sequence[CommunityProfile],
    cluster_result: ClusteringResult | None = None,
    total_node_count: int | None = None,
    thresholds: TaggingThresholds = TaggingThresholds(),
) -> list[CommunityProfile]:
    """Attach type, role and k-means cluster id to every profile (in place, also returned)."""
    total = total_node_count if total_node_count is not None else sum(p.size for p in profiles)
    large_outcasts = 0
    for i, p in enumerate(profiles):
        ctype, fit, reason = classify_profile(p, total, thresholds)
        p.type = ctype
        p.role = ROLE_OF_TYPE[ctype]
        p.power_law = fit
        p.reason = reason
        if cluster_result is not None:
            p.cluster_id = int(cluster_result.assignments[i])
        if ctype is CommunityType.OUTCAST and p.size >= thresholds.large_star_min_size:
            large_outcasts += 1
    if large_outcasts:
        log.warning("%d large communities matched no structural rule and were filtered as Outcast", large_outcasts)
    return list(profiles)


class CommunityTyper(BaseEstimator):
    """Rule-based typer with the thresholds exposed as estimator parameters."""

    def __init__(self, thresholds: TaggingThresholds = TaggingThresholds()):
        self.thresholds = thresholds

    def fit(self, X=None, y=None):
        return self

    def predict(self, profiles: Sequence[CommunityProfile], total_node_count: int | None = None) -> list[CommunityType]:
        total = total_node_count if total_node_count is not None else sum(p.size for p in profiles)
        return [classify_profile(p, total, self.thresholds)[0] for p in profiles]


# --------------------------------------------------------------------------- #
# ban rates
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class BanRate:
    members: int
    banned: int

    @property
    def rate(self) -> float:
        return self.banned / self.members if self.members else 0.0


def ban_rate_report(
    profiles: Iterable[CommunityProfile],
    banned: Mapping[str, bool],
) -> dict[CommunityType, BanRate]:
    """Share of community members flagged as banned, per community type.

    ``banned`` maps user id to flag; users absent from it count as not banned.
    """
    profiles = list(profiles)
    if not any(banned.values()):
        log.warning("no ban flags present in the play log; all ban rates are 0")
    tally = {t: [0, 0] for t in TYPE_ORDER}
    for p in profiles:
        if p.type is None:
            raise ValueError("profiles must be classified before computing ban rates")
        slot = tally[p.type]
        slot[0] += len(p.members)
        slot[1] += sum(1 for m in p.members if banned.get(m, False))
    return {t: BanRate(*tally[t]) for t in TYPE_ORDER}
