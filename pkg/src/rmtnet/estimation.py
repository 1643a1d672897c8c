"""Inter-community trade extraction and RMT volume, correlation and market-size estimates."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import LengthMismatch, NoData, NoPriceData, ZeroVariance
from .ingest import WEEK_SECONDS, MarketRecord, TradeEvent
from .tagging import CommunityProfile, CommunityType, Role

log = logging.getLogger(__name__)


class EventCategory(str, Enum):
    INTRA = "Intra"
    INTER = "Inter"
    INTER_RMT = "InterRMT"


@dataclass(frozen=True)
class CategorizedTrade:
    """A trade plus the communities of its endpoints.

    ``category`` is the most specific label: InterRMT trades are also Inter
    trades, which :attr:`is_inter` reports.
    """

    event: TradeEvent
    week_index: int
    source_community: int
    target_community: int
    category: EventCategory
    provider_node: str | None = None
    provider_community: int | None = None

    @property
    def is_inter(self) -> bool:
        return self.category is not EventCategory.INTRA

    @property
    def is_rmt(self) -> bool:
        return self.category is EventCategory.INTER_RMT


def _role_map(profiles: Iterable[CommunityProfile] | Mapping[int, Role]) -> dict[int, Role]:
    if isinstance(profiles, Mapping):
        return dict(profiles)
    out = {}
    for p in profiles:
        if p.role is None:
            raise ValueError(f"community {p.community_id} has no role; classify it first")
        out[p.community_id] = p.role
    return out


def categorize_trades(
    events: Iterable[TradeEvent],
    assignment: Mapping[str, int],
    profiles: Iterable[CommunityProfile] | Mapping[int, Role],
    week_index: int = 0,
) -> list[CategorizedTrade]:
    """Label each trade Intra, Inter or InterRMT.

    Warehouse deposits and withdrawals are categorised through the
    warehouse node's own community, exactly like direct trades.
    """
    roles = _role_map(profiles)
    out = []
    for e in events:
        try:
            cs, ct = assignment[e.source_id], assignment[e.target_id]
        except KeyError as exc:
            raise ValueError(f"trade endpoint {exc.args[0]!r} is not in the partition") from None
        if cs == ct:
            out.append(CategorizedTrade(e, week_index, cs, ct, EventCategory.INTRA))
            continue
        rs, rt = roles.get(cs), roles.get(ct)
        if rs is Role.PROVIDER and rt is Role.CONSUMER:
            out.append(CategorizedTrade(e, week_index, cs, ct, EventCategory.INTER_RMT, e.source_id, cs))
        elif rs is Role.CONSUMER and rt is Role.PROVIDER:
            out.append(CategorizedTrade(e, week_index, cs, ct, EventCategory.INTER_RMT, e.target_id, ct))
        else:
            out.append(CategorizedTrade(e, week_index, cs, ct, EventCategory.INTER))
    return out


@dataclass
class InterCommunityNetwork:
    """Communities as nodes; one edge per ordered community pair with cross trades."""

    types: dict[int, CommunityType | None]
    roles: dict[int, Role | None]
    edges: dict[tuple[int, int], tuple[int, int]]
    week_index: int = 0

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def total_count(self) -> int:
        return sum(c for c, _ in self.edges.values())

    def rmt_edges(self) -> dict[tuple[int, int], tuple[int, int]]:
        pairs = {(Role.PROVIDER, Role.CONSUMER), (Role.CONSUMER, Role.PROVIDER)}
        return {k: v for k, v in self.edges.items() if (self.roles.get(k[0]), self.roles.get(k[1])) in pairs}

    def as_dict(self) -> dict:
        return {
            "week": self.week_index,
            "nodes": [
                {
                    "community": c,
                    "type": t.value if t else None,
                    "role": self.roles[c].value if self.roles.get(c) else None,
                }
                for c, t in sorted(self.types.items())
            ],
            "edges": [
                {"source": a, "target": b, "count": n, "money": m}
                for (a, b), (n, m) in sorted(self.edges.items())
            ],
        }


def build_inter_community_network(
    categorized: Iterable[CategorizedTrade],
    profiles: Iterable[CommunityProfile] = (),
    week_index: int = 0,
) -> InterCommunityNetwork:
    profiles = list(profiles)
    acc: dict[tuple[int, int], list[int]] = defaultdict(lambda: [0, 0])
    for t in categorized:
        if not t.is_inter:
            continue
        slot = acc[(t.source_community, t.target_community)]
        slot[0] += 1
        slot[1] += t.event.money_value
    return InterCommunityNetwork(
        types={p.community_id: p.type for p in profiles},
        roles={p.community_id: p.role for p in profiles},
        edges={k: (v[0], v[1]) for k, v in sorted(acc.items())},
        week_index=week_index,
    )


# --------------------------------------------------------------------------- #
# weekly series
# --------------------------------------------------------------------------- #


SERIES_KEYS = ("total", "intra", "inter", "inter_rmt")


@dataclass
class WeeklySeries:
    counts: dict[str, np.ndarray]
    money: dict[str, np.ndarray]

    @property
    def n_weeks(self) -> int:
        return len(self.counts["total"])

    def as_dict(self) -> dict:
        return {
            "counts": {k: v.astype(int).tolist() for k, v in self.counts.items()},
            "money": {k: v.astype(int).tolist() for k, v in self.money.items()},
        }


def weekly_series(categorized: Iterable[CategorizedTrade], n_weeks: int | None = None) -> WeeklySeries:
    """Per-week counts and money by category; Inter includes InterRMT."""
    categorized = list(categorized)
    last = max((t.week_index for t in categorized), default=-1) + 1
    n = max(last, n_weeks or 0)
    counts = {k: np.zeros(n, dtype=np.int64) for k in SERIES_KEYS}
    money = {k: np.zeros(n, dtype=np.int64) for k in SERIES_KEYS}
    for t in categorized:
        w, m = t.week_index, t.event.money_value
        keys = ["total", "inter" if t.is_inter else "intra"]
        if t.is_rmt:
            keys.append("inter_rmt")
        for k in keys:
            counts[k][w] += 1
            money[k][w] += m
    return WeeklySeries(counts, money)


def market_weekly_counts(records: Iterable[MarketRecord], epoch: int, n_weeks: int) -> tuple[np.ndarray, np.ndarray]:
    """Weekly record counts and listed volumes; records outside the window are ignored."""
    counts = np.zeros(n_weeks, dtype=np.int64)
    volume = np.zeros(n_weeks, dtype=np.float64)
    for r in records:
        if r.completion_time < epoch:
            continue
        w = (r.completion_time - epoch) // WEEK_SECONDS
        if w < n_weeks:
            counts[w] += 1
            volume[w] += r.trade_volume
    return counts, volume


# --------------------------------------------------------------------------- #
# correlation
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    p_value: float
    n: int
    method: str = "t"

    def as_dict(self) -> dict:
        return {"rho": self.rho, "p_value": self.p_value, "n": self.n, "method": self.method}


def _rho(a: np.ndarray, b: np.ndarray) -> float:
    da, db = a - a.mean(), b - b.mean()
    return float(np.clip((da @ db) / np.sqrt((da @ da) * (db @ db)), -1.0, 1.0))


def pearson_correlation(a, b, *, permutations: int = 0, seed: int = 0) -> CorrelationResult:
    """Pearson rho with a two-sided p-value.

    By default p comes from the t statistic with n-2 degrees of freedom. With
    ``permutations > 0`` a permutation test is used instead, which is the
    safer choice for short series.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"series lengths differ: {a.shape} vs {b.shape}")
    n = len(a)
    if n < 3:
        raise ValueError("correlation needs at least 3 points")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise ZeroVariance("a series is constant")
    rho = _rho(a, b)
    if permutations > 0:
        rng = np.random.default_rng(seed)
        hits = sum(abs(_rho(a, rng.permutation(b))) >= abs(rho) - 1e-12 for _ in range(permutations))
        return CorrelationResult(rho, (hits + 1) / (permutations + 1), n, "permutation")
    if abs(rho) >= 1.0:
        return CorrelationResult(rho, 0.0, n)
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    p = float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 2)))
    return CorrelationResult(rho, p, n)


# --------------------------------------------------------------------------- #
# volumes
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class VolumeSummary:
    n: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float
    std: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def volume_summary(values) -> VolumeSummary:
    """Five-number summary (linear-interpolation quantiles) plus mean and population std."""
    x = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64)
    if x.size == 0:
        raise NoData("no volumes to summarise")
    q = np.quantile(x, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return VolumeSummary(int(x.size), *map(float, q), float(x.mean()), float(x.std()))


def median_normalize(website, estimated) -> tuple[np.ndarray, float]:
    """Scale website volumes so their median equals the in-game estimate's median."""
    web = np.asarray(website, dtype=np.float64)
    est = np.asarray(estimated, dtype=np.float64)
    if web.size == 0 or est.size == 0:
        raise NoData("both volume lists must be non-empty")
    web_median = float(np.median(web))
    if web_median <= 0:
        raise ValueError("website median volume must be positive")
    scale = float(np.median(est)) / web_median
    return web * scale, scale


# --------------------------------------------------------------------------- #
# market size
# --------------------------------------------------------------------------- #


@dataclass
class MarketSizeEstimate:
    weekly_price: np.ndarray
    weekly_cash: np.ndarray
    seller_cash: dict[str, float] = field(default_factory=dict)
    seller_weekly_cash: dict[tuple[str, int], float] = field(default_factory=dict)

    @property
    def total_cash(self) -> float:
        return float(self.weekly_cash.sum())

    def seller_shares(self) -> dict[str, float]:
        total = sum(self.seller_cash.values())
        if total <= 0:
            return {s: 0.0 for s in self.seller_cash}
        return {s: c / total for s, c in self.seller_cash.items()}

    def as_dict(self) -> dict:
        weekly_sales = list(self.seller_weekly_cash.values())
        return {
            "total_cash": self.total_cash,
            "weekly_price": self.weekly_price.tolist(),
            "weekly_cash": self.weekly_cash.tolist(),
            "n_sellers": len(self.seller_cash),
            "seller_weekly_sales": volume_summary(weekly_sales).as_dict() if weekly_sales else None,
        }


def weekly_prices(records: Iterable[MarketRecord], epoch: int, n_weeks: int) -> np.ndarray:
    """Mean unit price per week, carrying the last known price over gap weeks.

    Weeks before the first priced week take that first price.
    """
    sums = np.zeros(n_weeks)
    counts = np.zeros(n_weeks)
    for r in records:
        if r.completion_time < epoch:
            continue
        w = (r.completion_time - epoch) // WEEK_SECONDS
        if w < n_weeks:
            sums[w] += r.unit_price
            counts[w] += 1
    if not counts.any():
        raise NoPriceData("no market records fall inside the analysed weeks")
    price = np.full(n_weeks, np.nan)
    have = counts > 0
    price[have] = sums[have] / counts[have]
    last = price[np.argmax(have)]
    for w in range(n_weeks):
        if np.isnan(price[w]):
            price[w] = last
        else:
            last = price[w]
    return price


def market_size_estimate(
    rmt_weekly_money,
    records: Iterable[MarketRecord],
    epoch: int,
    categorized: Iterable[CategorizedTrade] = (),
) -> MarketSizeEstimate:
    """Convert weekly InterRMT game-money volume into cash using market prices.

    When categorised trades are given, cash is also attributed to the
    provider-side node of every InterRMT trade.
    """
    money = np.asarray(rmt_weekly_money, dtype=np.float64)
    records = list(records)
    if not records:
        raise NoPriceData("no market records")
    price = weekly_prices(records, epoch, len(money))
    seller_cash: dict[str, float] = defaultdict(float)
    seller_weekly: dict[tuple[str, int], float] = defaultdict(float)
    for t in categorized:
        if t.is_rmt and t.week_index < len(price):
            cash = t.event.money_value * price[t.week_index]
            seller_cash[t.provider_node] += cash
            seller_weekly[(t.provider_node, t.week_index)] += cash
    return MarketSizeEstimate(
        price,
        money * price,
        dict(sorted(seller_cash.items())),
        dict(sorted(seller_weekly.items())),
    )


# --------------------------------------------------------------------------- #
# concentration
# --------------------------------------------------------------------------- #


def herfindahl(volumes: Iterable[float]) -> float:
    v = np.asarray([x for x in volumes if x > 0], dtype=np.float64)
    if v.size == 0:
        return 0.0
    s = v / v.sum()
    return float(s @ s)


def provider_volumes(categorized: Iterable[CategorizedTrade]) -> dict[int, int]:
    """InterRMT money per provider community."""
    acc: dict[int, int] = defaultdict(int)
    for t in categorized:
        if t.is_rmt:
            acc[t.provider_community] += t.event.money_value
    return dict(sorted(acc.items()))


@dataclass(frozen=True)
class ConcentrationPoint:
    week_index: int
    provider_count: int
    provider_sizes: tuple[int, ...]
    hhi: float

    def as_dict(self) -> dict:
        return {
            "week": self.week_index,
            "provider_count": self.provider_count,
            "provider_sizes": list(self.provider_sizes),
            "hhi": self.hhi,
        }


def temporal_concentration(
    weekly_volumes: Sequence[Mapping[int, float]],
    weekly_sizes: Sequence[Mapping[int, int]] | None = None,
    week_indices: Sequence[int] | None = None,
) -> list[ConcentrationPoint]:
    """Per-week provider count, sizes (largest first) and HHI of provider-side InterRMT volume.

    Only providers with positive volume in a week count as active that week.
    """
    weeks = list(week_indices) if week_indices is not None else list(range(len(weekly_volumes)))
    out = []
    for i, vols in enumerate(weekly_volumes):
        active = [c for c, v in vols.items() if v > 0]
        sizes = weekly_sizes[i] if weekly_sizes is not None else {}
        out.append(
            ConcentrationPoint(
                weeks[i],
                len(active),
                tuple(sorted((int(sizes.get(c, 0)) for c in active), reverse=True)),
                herfindahl(vols[c] for c in active),
            )
        )
    return out


def phase_summary(points: Sequence[ConcentrationPoint], phase_weeks: Sequence[int]) -> list[dict]:
    """Mean HHI and provider count over consecutive phases of the given lengths."""
    if sum(phase_weeks) > len(points):
        raise ValueError("phase schedule is longer than the concentration series")
    out, start = [], 0
    for length in phase_weeks:
        chunk = points[start:start + length]
        start += length
        out.append(
            {
                "weeks": [p.week_index for p in chunk],
                "mean_hhi": float(np.mean([p.hhi for p in chunk])) if chunk else 0.0,
                "mean_provider_count": float(np.mean([p.provider_count for p in chunk])) if chunk else 0.0,
            }
        )
    return out


def category_share(series: WeeklySeries, key: str = "inter_rmt") -> float:
    total = int(series.counts["total"].sum())
    return float(series.counts[key].sum()) / total if total else 0.0
