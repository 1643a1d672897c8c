"""Synthetic game economy with planted gold-farming groups, chain rings and RMT sales.

The generator is the ground-truth oracle for the detection pipeline. Every
node carries a class label and a planted group, every trade an RMT flag, and
each RMT sale may surface as a listing in the external market records.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.metrics import normalized_mutual_info_score

from .errors import ConfigInvalid
from .ingest import (
    WEEK_SECONDS,
    MarketRecord,
    PlayActivityRecord,
    TradeEvent,
    TradeKind,
    write_market_records,
    write_play_log,
    write_trade_log,
)
from .tagging import CommunityType

NODE_CLASSES = ("normal", "farmer", "banker", "merchant", "chain-member", "outcast", "warehouse")

DEFAULT_BANS = {
    "normal": 0.10,
    "farmer": 0.60,
    "banker": 0.50,
    "merchant": 0.40,
    "chain-member": 0.20,
    "outcast": 0.07,
    "warehouse": 0.0,
}

# play-style mix per node class; style names match the user-cluster labels
STYLE_MIX = {
    "normal": {"Genuine": 0.47, "Light": 0.22, "Shop host": 0.14, "Fisher": 0.13,
               "Party": 0.025, "Worker": 0.01, "Hard core": 0.005},
    "farmer": {"Light": 0.85, "Worker": 0.15},
    "banker": {"Shop host": 1.0},
    "merchant": {"Shop host": 1.0},
    "chain-member": {"Shop host": 1.0},
    "outcast": {"Genuine": 0.32, "Light": 0.26, "Shop host": 0.21, "Fisher": 0.17, "Party": 0.04},
}

# weekly means of the sixteen play features per style (see ingest.PLAY_FEATURE_NAMES)
_BASE = np.array([60e3, 5, 5e5, 5, 5, 300, 5, 5, 5, 10, 1e6, 1e6, 2e6, 2e6, 3e3, 3e3])
_STYLE_TEMPLATES = {
    "Genuine": _BASE,
    "Hard core": _BASE * np.array([5, 1.4, 10, 6, 10, 10, 8, 4, 10, 5, 10, 10, 10, 10, 1.5, 1.5]),
    "Light": _BASE * np.array([0.12, 0.4, 0.1, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.2, 0.1, 0.1, 0.1, 0.05, 0.1, 0.1]),
    "Fisher": _BASE * np.array([2, 1.2, 0.5, 0.5, 0.2, 0.3, 0.2, 0.3, 0.5, 0.5, 0.5, 0.5, 0.8, 0.5, 60, 0.5]),
    "Party": _BASE * np.array([2, 1.2, 3, 3, 2, 2, 5, 12, 1, 1, 1, 1, 1.5, 1.5, 0.3, 0.3]),
    "Shop host": _BASE * np.array([5, 1.4, 0.05, 0.1, 0.05, 0.05, 0.05, 0.1, 0.2, 8, 5, 5, 0.3, 0.5, 0.1, 100]),
    "Worker": _BASE * np.array([3, 1.3, 2, 2, 0.2, 15, 0.5, 0.2, 0.3, 0.5, 0.5, 2, 25, 0.05, 0.1, 0.1]),
}


@dataclass(frozen=True)
class MarketPhase:
    """A stretch of weeks with a given share of providers active and sale concentration.

    Sales are split across active providers with weight ``size ** concentration``;
    when ``active_fraction < 1`` only the largest providers keep selling. The
    others still trade internally, so the network itself stays comparable.
    """

    weeks: int
    active_fraction: float = 1.0
    concentration: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    weeks: int = 4
    epoch: int = 1_483_228_800  # 2017-01-01T00:00:00Z

    # consumer population: shifted-linear preferential attachment, exponent 3 + offset / m
    n_normal: int = 2600
    attachment_edges: int = 3
    attachment_offset: float = -0.75
    giant_trades: tuple[int, int] = (1, 4)
    n_warehouses: int = 20
    warehouse_share: float = 0.03

    # gold-farming groups: farmers feed a banker, some through merchants
    n_large_stars: int = 19
    large_star_farmers: tuple[int, int] = (100, 900)
    n_small_stars: int = 700
    small_star_farmers: tuple[int, int] = (4, 25)
    merchant_share: float = 0.1
    merchants_per_group: tuple[int, int] = (1, 3)
    farmer_deliveries: tuple[int, int] = (2, 6)

    # chain rings rotate inventories once a member hits the weekly shop limit
    n_chains: int = 100
    chain_length: tuple[int, int] = (16, 48)
    chain_relay_fraction: float = 0.25
    shop_events: tuple[int, int] = (60, 160)
    shop_limit: int = 40

    n_outcast_groups: int = 470

    # RMT sales and the external market
    rmt_share: float = 0.05
    demand_sigma: float = 0.3
    sale_money_median: float = 12e6
    intra_money_median: float = 1.5e6
    delivery_money_median: float = 2e6
    handoff_money_median: float = 50e6
    money_sigma: float = 1.2
    listing_probability: float = 0.3
    market_noise: float = 0.3
    volume_inflation: float = 2.5
    base_price: float = 5e-6
    background_listings: float = 20.0
    server_id: str = "S1"

    ban_probability: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_BANS))
    phases: tuple[MarketPhase, ...] = ()

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def bad(msg):
            raise ConfigInvalid(msg)

        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)) and not isinstance(v, bool) and v < 0 and f.name != "attachment_offset":
                bad(f"{f.name} must be non-negative, got {v}")
            if isinstance(v, tuple) and len(v) == 2 and all(isinstance(x, int) for x in v):
                if v[0] > v[1] or v[0] < 1:
                    bad(f"{f.name} must be a range lo <= hi with lo >= 1, got {v}")
        if self.weeks < 1:
            bad("weeks must be at least 1")
        if not 0 < self.rmt_share < 1:
            bad("rmt_share must lie in (0, 1)")
        if self.attachment_edges < 1 or self.n_normal <= self.attachment_edges:
            bad("n_normal must exceed attachment_edges >= 1")
        if not -self.attachment_edges < self.attachment_offset:
            bad("attachment_offset must exceed -attachment_edges")
        for name in ("warehouse_share", "merchant_share", "listing_probability", "chain_relay_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                bad(f"{name} must lie in [0, 1]")
        if self.chain_length[0] < 3:
            bad("chain rings need at least 3 members")
        if self.base_price <= 0 or self.volume_inflation <= 0:
            bad("base_price and volume_inflation must be positive")
        unknown = set(self.ban_probability) - set(NODE_CLASSES)
        if unknown:
            bad(f"unknown node classes in ban_probability: {sorted(unknown)}")
        if any(not 0 <= p <= 1 for p in self.ban_probability.values()):
            bad("ban probabilities must lie in [0, 1]")
        if self.phases:
            if sum(p.weeks for p in self.phases) != self.weeks:
                bad("phase lengths must add up to weeks")
            for p in self.phases:
                if p.weeks < 1 or not 0 < p.active_fraction <= 1 or p.concentration < 0:
                    bad(f"invalid market phase {p}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object], base: "ScenarioConfig | None" = None) -> "ScenarioConfig":
        """Build a config from plain (TOML/JSON) values, on top of ``base`` if given."""
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigInvalid(f"unknown scenario key(s): {sorted(unknown)}")
        kwargs = {}
        for k, v in values.items():
            if k == "phases":
                try:
                    v = tuple(p if isinstance(p, MarketPhase) else MarketPhase(**p) for p in v)
                except TypeError as exc:
                    raise ConfigInvalid(f"invalid phase entry: {exc}") from None
            elif k == "ban_probability":
                v = {**DEFAULT_BANS, **v}
            elif isinstance(v, list):
                v = tuple(v)
            kwargs[k] = v
        try:
            return replace(base, **kwargs) if base is not None else cls(**kwargs)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from None

    def as_dict(self) -> dict:
        d = asdict(self)
        d["ban_probability"] = dict(sorted(self.ban_probability.items()))
        return d

    def week_phases(self) -> list[MarketPhase]:
        if not self.phases:
            return [MarketPhase(self.weeks)] * self.weeks
        return [p for p in self.phases for _ in range(p.weeks)]


# Smaller presets keep the consumer graph at roughly a quarter of the weekly
# trade weight, as at paper scale; a consumer graph that dominates the weight
# gets split by modularity maximisation.
PRESETS: dict[str, ScenarioConfig] = {
    # roughly the weekly network size of a large game server
    "paper-scale": ScenarioConfig(),
    # a year of weekly data on a smaller server; market listings follow planted sales
    "coupled-market": ScenarioConfig(
        weeks=52,
        n_normal=500,
        n_warehouses=4,
        n_large_stars=2,
        large_star_farmers=(60, 100),
        n_small_stars=100,
        small_star_farmers=(4, 12),
        farmer_deliveries=(6, 14),
        n_chains=8,
        chain_length=(16, 32),
        n_outcast_groups=30,
        demand_sigma=0.35,
        background_listings=5.0,
    ),
    # competitive market consolidating into a few very large providers
    "maturing-market": ScenarioConfig(
        weeks=12,
        n_normal=600,
        n_warehouses=5,
        n_large_stars=6,
        large_star_farmers=(60, 300),
        n_small_stars=80,
        small_star_farmers=(4, 12),
        farmer_deliveries=(6, 14),
        n_chains=10,
        chain_length=(16, 32),
        n_outcast_groups=40,
        phases=(
            MarketPhase(4, 1.0, 0.0),
            MarketPhase(4, 0.4, 1.0),
            MarketPhase(4, 0.1, 2.0),
        ),
    ),
    "small": ScenarioConfig(
        weeks=3,
        n_normal=400,
        n_warehouses=3,
        n_large_stars=2,
        large_star_farmers=(60, 90),
        n_small_stars=80,
        small_star_farmers=(4, 12),
        farmer_deliveries=(6, 14),
        n_chains=4,
        chain_length=(16, 24),
        n_outcast_groups=12,
        background_listings=3.0,
    ),
}


def preset(name: str, **overrides) -> ScenarioConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ConfigInvalid(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    if not overrides:
        return base
    try:
        return replace(base, **overrides)
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from None


# --------------------------------------------------------------------------- #
# ground truth
# --------------------------------------------------------------------------- #


@dataclass
class PlantedGroup:
    group_id: int
    type: CommunityType
    members: list[str]
    sellers: list[str] = field(default_factory=list)

    @property
    def provider(self) -> bool:
        return bool(self.sellers)


@dataclass
class GroundTruth:
    node_class: dict[str, str]
    node_group: dict[str, int]
    group_type: dict[int, CommunityType]
    event_rmt: list[bool]
    weeks: int
    epoch: int
    phase_weeks: list[int] = field(default_factory=list)

    def rmt_share(self) -> float:
        return sum(self.event_rmt) / len(self.event_rmt) if self.event_rmt else 0.0


@dataclass
class Scenario:
    config: ScenarioConfig
    trades: list[TradeEvent]
    play: list[PlayActivityRecord]
    market: list[MarketRecord]
    truth: GroundTruth


# --------------------------------------------------------------------------- #
# generation
# --------------------------------------------------------------------------- #


def _pa_edges(n: int, m: int, offset: float, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Undirected preferential attachment with attachment weight ``k + offset``.

    Starts from a clique on ``m + 1`` nodes. Sampling is proportional to
    degree from the endpoint list, thinned by ``(k + offset) / k``.
    """
    edges = [(i, j) for i in range(m + 1) for j in range(i + 1, m + 1)]
    ends = [x for e in edges for x in e]
    deg = [m] * (m + 1) + [0] * (n - m - 1)
    for v in range(m + 1, n):
        chosen: set[int] = set()
        while len(chosen) < m:
            u = ends[int(rng.integers(len(ends)))]
            if u in chosen:
                continue
            if offset < 0 and rng.random() * deg[u] >= deg[u] + offset:
                continue
            chosen.add(u)
        for u in sorted(chosen):
            edges.append((u, v))
            ends += (u, v)
            deg[u] += 1
            deg[v] += 1
    return edges


def _lognormal(rng, median: float, sigma: float, size=None):
    return np.exp(np.log(median) + sigma * rng.standard_normal(size))


def _randint(rng, bounds: tuple[int, int], size=None):
    return rng.integers(bounds[0], bounds[1] + 1, size=size)


class _Builder:
    """Accumulates planted topology and weekly trade templates."""

    def __init__(self, cfg: ScenarioConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.node_class: dict[str, str] = {}
        self.node_group: dict[str, int] = {}
        self.groups: list[PlantedGroup] = []
        # per group: list of (src, dst, kind, events_low, events_high, money_median)
        self.links: dict[int, list[tuple]] = {}

    def _group(self, ctype: CommunityType) -> PlantedGroup:
        g = PlantedGroup(len(self.groups), ctype, [])
        self.groups.append(g)
        self.links[g.group_id] = []
        return g

    def _add(self, g: PlantedGroup, node: str, cls: str) -> str:
        self.node_class[node] = cls
        self.node_group[node] = g.group_id
        g.members.append(node)
        return node

    def giant(self) -> PlantedGroup:
        cfg = self.cfg
        g = self._group(CommunityType.GIANT_CONSUMER)
        names = [self._add(g, f"N{i:05d}", "normal") for i in range(cfg.n_normal)]
        houses = [self._add(g, f"W{i:03d}", "warehouse") for i in range(cfg.n_warehouses)]
        clan = self.rng.integers(len(houses), size=len(names)) if houses else None
        for a, b in _pa_edges(cfg.n_normal, cfg.attachment_edges, cfg.attachment_offset, self.rng):
            if self.rng.random() < 0.5:
                a, b = b, a
            house = houses[clan[a]] if houses else None
            self.links[g.group_id].append(("giant", names[a], names[b], house))
        return g

    def star(self, k: int, n_farmers: int, large: bool) -> PlantedGroup:
        cfg = self.cfg
        g = self._group(CommunityType.LARGE_STAR if large else CommunityType.SMALL_STAR)
        tag = "L" if large else "S"
        banker = self._add(g, f"B{tag}{k:03d}", "banker")
        g.sellers = [banker]
        links = self.links[g.group_id]
        merchants = []
        if large and cfg.merchant_share > 0:
            merchants = [
                self._add(g, f"M{tag}{k:03d}_{j}", "merchant")
                for j in range(int(_randint(self.rng, cfg.merchants_per_group)))
            ]
        for j in range(n_farmers):
            farmer = self._add(g, f"F{tag}{k:03d}_{j:03d}", "farmer")
            if merchants and self.rng.random() < cfg.merchant_share:
                links.append(("deliver", farmer, merchants[int(self.rng.integers(len(merchants)))]))
            else:
                links.append(("deliver", farmer, banker))
        for m in merchants:
            links.append(("deliver", m, banker))
        return g

    def chain(self, k: int, length: int) -> PlantedGroup:
        cfg = self.cfg
        g = self._group(CommunityType.CHAIN)
        ring = [self._add(g, f"C{k:03d}_{j:02d}", "chain-member") for j in range(length)]
        links = self.links[g.group_id]
        for j in range(length):
            links.append(("handoff", ring[j], ring[(j + 1) % length]))
        n_relay = int(round(cfg.chain_relay_fraction * length))
        relays = [self._add(g, f"C{k:03d}_r{j:02d}", "chain-member") for j in range(n_relay)]
        for j, r in enumerate(relays):
            links.append(("handoff", ring[j], r))
            if j + 1 < n_relay:
                links.append(("handoff", r, relays[j + 1]))
        g.sellers = list(ring)
        return g

    def outcast(self, k: int) -> PlantedGroup:
        g = self._group(CommunityType.OUTCAST)
        size = 2 if self.rng.random() < 0.6 else 3
        nodes = [self._add(g, f"O{k:04d}_{j}", "outcast") for j in range(size)]
        links = self.links[g.group_id]
        links.append(("friend", nodes[0], nodes[1]))
        if size == 3:
            # a closed triangle, so no member looks like a hub
            links += [("friend", nodes[1], nodes[2]), ("friend", nodes[2], nodes[0])]
        return g


def _week_events(
    b: _Builder,
    active: Sequence[PlantedGroup],
    week: int,
    shop_counts: dict[str, int],
    rng: np.random.Generator,
) -> list[tuple]:
    """Non-RMT trades of one week as ``(ts, src, dst, kind, item, qty, money, rmt)`` rows."""
    cfg = b.cfg
    rows: list[tuple] = []
    start = cfg.epoch + week * WEEK_SECONDS

    def emit(src, dst, kind, item, money):
        rows.append((start + int(rng.integers(WEEK_SECONDS)), src, dst, kind, item,
                     int(rng.integers(1, 10)), int(money), False))

    for g in active:
        for link in b.links[g.group_id]:
            tag = link[0]
            if tag == "giant":
                _, a, c, house = link
                for _ in range(int(_randint(rng, cfg.giant_trades))):
                    money = _lognormal(rng, cfg.intra_money_median, cfg.money_sigma)
                    item = f"item{int(rng.integers(50)):02d}"
                    if house is not None and rng.random() < cfg.warehouse_share:
                        emit(a, house, TradeKind.WAREHOUSE_DEPOSIT, item, money)
                        emit(house, c, TradeKind.WAREHOUSE_WITHDRAW, item, money)
                    else:
                        emit(a, c, TradeKind.DIRECT, item, money)
            elif tag == "deliver":
                for _ in range(int(_randint(rng, cfg.farmer_deliveries))):
                    emit(link[1], link[2], TradeKind.DIRECT, "loot",
                         _lognormal(rng, cfg.delivery_money_median, cfg.money_sigma))
            elif tag == "handoff":
                # one full-inventory hand-off per shop_limit shop events of the sender
                for _ in range(max(1, shop_counts[link[1]] // cfg.shop_limit)):
                    emit(link[1], link[2], TradeKind.DIRECT, "inventory",
                         _lognormal(rng, cfg.handoff_money_median, cfg.money_sigma))
            else:
                for _ in range(int(rng.integers(1, 4))):
                    emit(link[1], link[2], TradeKind.DIRECT, f"item{int(rng.integers(50)):02d}",
                         _lognormal(rng, cfg.intra_money_median, cfg.money_sigma))
    return rows


def _play_records(b: _Builder, weeks: int, rng) -> tuple[list[PlayActivityRecord], dict[str, bool]]:
    cfg = b.cfg
    nodes = sorted(n for n, c in b.node_class.items() if c != "warehouse")
    banned = {}
    user_style = {}
    for n in nodes:
        cls = b.node_class[n]
        mix = STYLE_MIX[cls]
        names = sorted(mix)
        p = np.array([mix[s] for s in names])
        user_style[n] = names[int(rng.choice(len(names), p=p / p.sum()))]
        banned[n] = bool(rng.random() < cfg.ban_probability.get(cls, 0.0))
    records = []
    for w in range(weeks):
        for n in nodes:
            t = _STYLE_TEMPLATES[user_style[n]]
            x = t * np.exp(0.4 * rng.standard_normal(len(t)))
            x[0] = min(x[0], WEEK_SECONDS)
            x[1] = float(min(7, max(1, round(x[1]))))
            feats = tuple(float(round(v, 1)) if i != 1 else v for i, v in enumerate(x))
            records.append(PlayActivityRecord(n, w, feats, banned[n]))
    return records, banned


def generate_scenario(config: ScenarioConfig) -> Scenario:
    """Generate trade, play and market logs with ground truth; deterministic per seed."""
    cfg = config
    cfg.validate()
    # independent streams, so e.g. changing the demand model leaves trades untouched
    rng, trade_rng, sale_rng, play_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(4)
    )
    b = _Builder(cfg, rng)
    giant = b.giant()
    for k in range(cfg.n_large_stars):
        b.star(k, int(_randint(rng, cfg.large_star_farmers)), large=True)
    for k in range(cfg.n_small_stars):
        b.star(k, int(_randint(rng, cfg.small_star_farmers)), large=False)
    for k in range(cfg.n_chains):
        b.chain(k, int(_randint(rng, cfg.chain_length)))
    for k in range(cfg.n_outcast_groups):
        b.outcast(k)

    providers = [g for g in b.groups if g.provider]
    by_size = sorted(providers, key=lambda g: (-len(g.members), g.group_id))
    # buyers are drawn by degree among players with at least 2m partners: a
    # weakly tied buyer of several providers would bridge them into one community
    buyers = [m for m in giant.members if b.node_class[m] == "normal"]
    buyer_degree = np.zeros(len(buyers))
    slot = {m: i for i, m in enumerate(buyers)}
    for link in b.links[giant.group_id]:
        buyer_degree[slot[link[1]]] += 1
        buyer_degree[slot[link[2]]] += 1
    buyer_degree[buyer_degree < 2 * cfg.attachment_edges] = 0
    buyer_p = buyer_degree / buyer_degree.sum() if buyers else buyer_degree

    # providers squeezed out of the market keep farming but stop selling
    phases = cfg.week_phases()
    week_providers: list[list[PlantedGroup]] = []
    for phase in phases:
        keep = max(1, math.ceil(phase.active_fraction * len(by_size))) if by_size else 0
        week_providers.append(sorted(by_size[:keep], key=lambda g: g.group_id))

    weekly_rows = []
    for w in range(cfg.weeks):
        shop = {n: int(_randint(trade_rng, cfg.shop_events)) for n, c in b.node_class.items() if c == "chain-member"}
        weekly_rows.append(_week_events(b, b.groups, w, shop, trade_rng))

    # sales are sized so RMT trades make up rmt_share of all trades on average,
    # independently of the other trades, so only demand drives their weekly count
    demand = np.exp(cfg.demand_sigma * sale_rng.standard_normal(cfg.weeks))
    demand /= demand.mean()
    base = cfg.rmt_share / (1 - cfg.rmt_share) * np.mean([len(r) for r in weekly_rows])
    listings = []
    for w in range(cfg.weeks):
        live = week_providers[w]
        if not live or not buyers:
            continue
        conc = phases[w].concentration
        weight = np.array([len(g.members) ** conc for g in live], dtype=np.float64)
        weight /= weight.sum()
        n_sales = int(round(base * demand[w]))
        start = cfg.epoch + w * WEEK_SECONDS
        picks = sale_rng.choice(len(live), size=n_sales, p=weight)
        buyer_picks = sale_rng.choice(len(buyers), size=n_sales, p=buyer_p)
        for gi, bi in zip(picks, buyer_picks):
            buyer = buyers[int(bi)]
            g = live[int(gi)]
            seller = g.sellers[int(sale_rng.integers(len(g.sellers)))]
            ts = start + int(sale_rng.integers(WEEK_SECONDS))
            money = int(_lognormal(sale_rng, cfg.sale_money_median, cfg.money_sigma))
            weekly_rows[w].append((ts, seller, buyer, TradeKind.DIRECT, "money", 1, money, True))
            if sale_rng.random() < cfg.listing_probability:
                lag = int(round((2 * sale_rng.random() - 1) * cfg.market_noise * 2 * 86400))
                listings.append(_listing(cfg, sale_rng, ts + lag, money))
        for _ in range(int(sale_rng.poisson(cfg.background_listings))):
            ts = start + int(sale_rng.integers(WEEK_SECONDS))
            listings.append(_listing(cfg, sale_rng, ts, _lognormal(sale_rng, cfg.sale_money_median, cfg.money_sigma)))

    rows = sorted(
        (r for week in weekly_rows for r in week),
        key=lambda r: (r[0], r[1], r[2], r[3].value, r[4], r[5], r[6]),
    )
    trades = [TradeEvent(ts, s, d, k, item, q, m) for ts, s, d, k, item, q, m, _ in rows]
    flags = [r[7] for r in rows]
    listings.sort(key=lambda r: (r.completion_time, r.unit_price, r.trade_volume))

    play, _ = _play_records(b, cfg.weeks, play_rng)
    truth = GroundTruth(
        node_class=dict(sorted(b.node_class.items())),
        node_group=dict(sorted(b.node_group.items())),
        group_type={g.group_id: g.type for g in b.groups},
        event_rmt=flags,
        weeks=cfg.weeks,
        epoch=cfg.epoch,
        phase_weeks=[p.weeks for p in cfg.phases],
    )
    return Scenario(cfg, trades, play, listings, truth)


def _listing(cfg: ScenarioConfig, rng, ts: int, money: float) -> MarketRecord:
    volume = money * cfg.volume_inflation * math.exp(cfg.market_noise * rng.standard_normal())
    price = cfg.base_price * math.exp(0.1 * rng.standard_normal())
    return MarketRecord(float(f"{price:.6g}"), float(max(1, round(volume))), cfg.server_id, int(ts))


# --------------------------------------------------------------------------- #
# files
# --------------------------------------------------------------------------- #

TRADE_FILE = "trades"
PLAY_FILE = "play"
MARKET_FILE = "market"


def write_scenario(scenario: Scenario, out_dir: str | Path, format: str = "csv") -> dict[str, Path]:
    """Write logs plus ``truth.csv``, ``truth_events.csv`` and ``truth_meta.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if format == "csv" else "jsonl"
    paths = {
        "trades": out / f"{TRADE_FILE}.{ext}",
        "play": out / f"{PLAY_FILE}.{ext}",
        "market": out / f"{MARKET_FILE}.{ext}",
        "truth": out / "truth.csv",
        "truth_events": out / "truth_events.csv",
        "truth_meta": out / "truth_meta.json",
    }
    with open(paths["trades"], "w", newline="") as fh:
        write_trade_log(scenario.trades, fh, format)
    with open(paths["play"], "w", newline="") as fh:
        write_play_log(scenario.play, fh, format)
    with open(paths["market"], "w", newline="") as fh:
        write_market_records(scenario.market, fh, format)
    t = scenario.truth
    with open(paths["truth"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "class", "community", "type"])
        for node, cls in t.node_class.items():
            gid = t.node_group[node]
            w.writerow([node, cls, gid, t.group_type[gid].value])
    with open(paths["truth_events"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["event_index", "rmt"])
        for i, flag in enumerate(t.event_rmt):
            w.writerow([i, int(flag)])
    meta = {
        "weeks": t.weeks,
        "epoch": t.epoch,
        "phase_weeks": t.phase_weeks,
        "planted_rmt_share": t.rmt_share(),
        "config": scenario.config.as_dict(),
    }
    paths["truth_meta"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return paths


def load_truth(directory: str | Path) -> GroundTruth:
    d = Path(directory)
    try:
        meta = json.loads((d / "truth_meta.json").read_text())
        node_class, node_group, group_type = {}, {}, {}
        with open(d / "truth.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                gid = int(row["community"])
                node_class[row["node"]] = row["class"]
                node_group[row["node"]] = gid
                group_type[gid] = CommunityType(row["type"])
        with open(d / "truth_events.csv", newline="") as fh:
            flags = [row["rmt"] == "1" for row in csv.DictReader(fh)]
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigInvalid(f"cannot read ground truth from {d}: {exc}") from None
    return GroundTruth(node_class, node_group, group_type, flags, meta["weeks"], meta["epoch"], meta.get("phase_weeks", []))


# --------------------------------------------------------------------------- #
# evaluation
# --------------------------------------------------------------------------- #

STAR_TYPES = frozenset({CommunityType.LARGE_STAR, CommunityType.SMALL_STAR})


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    tp: int
    n_predicted: int
    n_actual: int

    @property
    def f1(self) -> float:
        s = self.precision + self.recall
        return 2 * self.precision * self.recall / s if s else 0.0

    @classmethod
    def from_counts(cls, tp_pred: int, n_pred: int, tp_actual: int, n_actual: int) -> "PRF":
        # with no predictions there is nothing to be wrong about; with nothing planted, nothing to miss
        p = tp_pred / n_pred if n_pred else (1.0 if n_actual == 0 else 0.0)
        r = tp_actual / n_actual if n_actual else 1.0
        return cls(p, r, tp_actual, n_pred, n_actual)

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "n_predicted": self.n_predicted, "n_actual": self.n_actual}


@dataclass
class DetectionMetrics:
    per_type: dict[str, PRF]
    rmt_events: PRF
    nmi: float
    weeks: list[int]

    def as_dict(self) -> dict:
        return {
            "weeks": self.weeks,
            "nmi": self.nmi,
            "per_type": {k: v.as_dict() for k, v in self.per_type.items()},
            "rmt_events": self.rmt_events.as_dict(),
        }


def _match(members_by_comm: Mapping[int, list[str]], node_group: Mapping[str, int]) -> dict[int, int]:
    """Planted group with the largest overlap for every predicted community (ties: lower id)."""
    out = {}
    for c, members in members_by_comm.items():
        counts: dict[int, int] = {}
        for m in members:
            g = node_group.get(m)
            if g is not None:
                counts[g] = counts.get(g, 0) + 1
        if counts:
            out[c] = min(counts, key=lambda g: (-counts[g], g))
    return out


def evaluate_detection(
    week_assignments: Mapping[int, Mapping[str, int]],
    week_types: Mapping[int, Mapping[int, CommunityType]],
    predicted_rmt: Mapping[int, bool],
    truth: GroundTruth,
) -> DetectionMetrics:
    """Score predicted communities, types and RMT flags against the planted truth.

    A planted group counts as recovered for a type in a week when some
    predicted community whose best-overlap group is that group carries the
    type. Precision is the share of predicted communities of a type whose
    matched group has that type. ``predicted_rmt`` maps trade-log positions
    to the predicted InterRMT flag; only positions present are scored.
    """
    categories: dict[str, set[CommunityType]] = {
        t.value: {t} for t in CommunityType
    }
    categories["Star"] = set(STAR_TYPES)
    categories["Provider"] = set(STAR_TYPES) | {CommunityType.CHAIN}
    tallies = {k: [0, 0, 0, 0] for k in categories}  # tp_pred, n_pred, tp_actual, n_actual
    nmis = []
    for w in sorted(week_assignments):
        assignment = week_assignments[w]
        types = week_types[w]
        by_comm: dict[int, list[str]] = {}
        for node, c in assignment.items():
            by_comm.setdefault(c, []).append(node)
        matched = _match(by_comm, truth.node_group)
        present = {truth.node_group[n] for n in assignment if n in truth.node_group}
        for name, wanted in categories.items():
            pred = [c for c in by_comm if types.get(c) in wanted]
            tally = tallies[name]
            tally[1] += len(pred)
            tally[0] += sum(1 for c in pred if c in matched and truth.group_type[matched[c]] in wanted)
            actual = [g for g in present if truth.group_type[g] in wanted]
            hit = {matched[c] for c in pred if c in matched}
            tally[3] += len(actual)
            tally[2] += sum(1 for g in actual if g in hit)
        nodes = [n for n in sorted(assignment) if n in truth.node_group]
        if nodes:
            nmis.append(normalized_mutual_info_score(
                [truth.node_group[n] for n in nodes], [assignment[n] for n in nodes]
            ))
    per_type = {k: PRF.from_counts(*v) for k, v in tallies.items()}
    idx = sorted(predicted_rmt)
    pred_pos = sum(1 for i in idx if predicted_rmt[i])
    true_pos = sum(1 for i in idx if predicted_rmt[i] and truth.event_rmt[i])
    actual = sum(1 for i in idx if truth.event_rmt[i])
    rmt = PRF(
        true_pos / pred_pos if pred_pos else (1.0 if actual == 0 else 0.0),
        true_pos / actual if actual else 1.0,
        true_pos,
        pred_pos,
        actual,
    )
    return DetectionMetrics(per_type, rmt, float(np.mean(nmis)) if nmis else 0.0, sorted(week_assignments))
