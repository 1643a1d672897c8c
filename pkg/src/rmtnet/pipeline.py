"""The five-phase analysis: networks, communities, clusters, typing and RMT estimation."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .community import CommunityPartition, compare_algorithms, get_detector
from .config import PipelineConfig
from .errors import NoData, PipelineInvariantError, RmtError
from .estimation import (
    CategorizedTrade,
    EventCategory,
    InterCommunityNetwork,
    build_inter_community_network,
    categorize_trades,
    category_share,
    market_size_estimate,
    market_weekly_counts,
    median_normalize,
    pearson_correlation,
    phase_summary,
    provider_volumes,
    temporal_concentration,
    volume_summary,
    weekly_series,
)
from .features import (
    COMMUNITY_FEATURE_NAMES,
    ClusteringResult,
    _features_of,
    cluster_communities,
    cluster_users,
    induced_subgraphs,
    user_features,
)
from .graph import TradeNetwork, build_trading_network, modularity, summarize, write_graphml
from .ingest import (
    PLAY_FEATURE_NAMES,
    WEEK_SECONDS,
    MarketRecord,
    PlayActivityRecord,
    TradeEvent,
    WeeklyBatch,
    window_indices,
)
from .tagging import (
    PLAY_STYLES,
    TYPE_ORDER,
    UNKNOWN_STYLE,
    CommunityProfile,
    Role,
    ban_rate_report,
    classify_communities,
    label_play_styles,
    style_composition,
)

log = logging.getLogger(__name__)

REPORT_VERSION = 1


@dataclass
class UserStyles:
    styles: dict[str, str]
    banned: dict[str, bool]
    clustering: ClusteringResult | None = None
    cluster_styles: dict[int, str] = field(default_factory=dict)
    n_users: int = 0


@dataclass
class WeekResult:
    week_index: int
    network: TradeNetwork
    event_indices: list[int]
    summary: dict | None = None
    partition: CommunityPartition | None = None
    profiles: list[CommunityProfile] = field(default_factory=list)
    clustering: ClusteringResult | None = None
    categorized: list[CategorizedTrade] = field(default_factory=list)
    inter: InterCommunityNetwork | None = None


@dataclass
class PipelineResult:
    config: PipelineConfig
    weeks: list[WeekResult]
    users: UserStyles
    report: dict


# --------------------------------------------------------------------------- #
# phase 3 input: play styles
# --------------------------------------------------------------------------- #


def analyse_play_styles(
    records: Sequence[PlayActivityRecord],
    weeks: Sequence[int] | None,
    k: int = 7,
    seed: int = 0,
    n_init: int = 10,
) -> UserStyles:
    """Cluster users on summed play features and name the clusters."""
    banned: dict[str, bool] = {}
    for r in records:
        banned[r.user_id] = banned.get(r.user_id, False) or r.banned
    feats = user_features(records, weeks)
    if not feats:
        return UserStyles({}, banned)
    k = min(k, len(feats))
    result = cluster_users(feats, k=k, seed=seed, n_init=n_init)
    names = label_play_styles(result)
    styles = {u.user_id: names[int(c)] for u, c in zip(feats, result.assignments)}
    return UserStyles(styles, banned, result, names, len(feats))


# --------------------------------------------------------------------------- #
# per-week phases
# --------------------------------------------------------------------------- #


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise PipelineInvariantError(message)


def process_week(
    week_index: int,
    events: Sequence[TradeEvent],
    event_indices: Sequence[int],
    user_styles: dict[str, str],
    config: PipelineConfig,
) -> WeekResult:
    """Phases 1, 2 and 4 for one week, plus the per-week part of phase 5."""
    net = build_trading_network(WeeklyBatch(week_index, list(events)))
    res = WeekResult(week_index, net, list(event_indices))
    if net.n_edges == 0:
        log.info("week %d has no trades", week_index)
        return res
    det = config.detection
    if det.summary:
        res.summary = summarize(net).as_dict()
    partition = get_detector(det.algorithm, det.seed, det.resolution, det.weighted)(net)
    _check(set(partition.assignment) == set(net.nodes), f"week {week_index}: partition does not cover the network")
    q = modularity(net, partition.assignment, det.resolution, det.weighted)
    _check(abs(q - partition.modularity) <= 1e-9, f"week {week_index}: reported Q differs from recomputed Q")
    res.partition = partition

    subs = induced_subgraphs(net, partition.assignment)
    profiles = []
    for c, sub in enumerate(subs):
        profiles.append(
            CommunityProfile(
                community_id=c,
                members=tuple(sub.nodes),
                features=_features_of(sub),
                degrees=tuple(int(d) for d in sub.degree),
                styles=style_composition(sub.nodes, user_styles),
            )
        )
    cl = config.clustering
    k = min(cl.community_k, len(profiles))
    if k < cl.community_k:
        log.warning("week %d: only %d communities, clustering with k=%d", week_index, len(profiles), k)
    res.clustering = cluster_communities([p.features for p in profiles], k=k, seed=cl.seed, n_init=cl.n_init)
    classify_communities(profiles, res.clustering, net.n_nodes, config.tagging)
    res.profiles = profiles

    res.categorized = categorize_trades(events, partition.assignment, profiles, week_index)
    n_inter = sum(1 for t in res.categorized if t.is_inter)
    res.inter = build_inter_community_network(res.categorized, profiles, week_index)
    _check(res.inter.total_count() == n_inter, f"week {week_index}: inter-community counts do not reconcile")
    return res


def _process_week_star(args):
    return process_week(*args)


# --------------------------------------------------------------------------- #
# driver
# --------------------------------------------------------------------------- #


def run_pipeline(
    trades: Sequence[TradeEvent],
    play: Sequence[PlayActivityRecord] = (),
    market: Sequence[MarketRecord] = (),
    config: PipelineConfig | None = None,
    weeks: Sequence[int] | None = None,
    jobs: int = 1,
) -> PipelineResult:
    """Run all five phases and assemble the report.

    ``weeks`` restricts the analysis to the given week indices (default: the
    config's list, or every week). ``jobs > 1`` processes weeks in worker
    processes; results do not depend on it.
    """
    config = config or PipelineConfig()
    win = config.windowing
    trades = list(trades)
    per_week = window_indices(trades, win.epoch, win.n_weeks or None)
    n_weeks = len(per_week)
    selected = sorted(set(weeks if weeks is not None else (win.weeks or range(n_weeks))))
    missing = [w for w in selected if w >= n_weeks]
    if missing:
        raise NoData(f"week(s) {missing} lie beyond the data ({n_weeks} weeks)")
    if not selected:
        raise NoData("no weeks to analyse")

    cl = config.clustering
    users = analyse_play_styles(play, selected, cl.user_k, cl.seed, cl.n_init)

    tasks = [(w, [trades[i] for i in per_week[w]], per_week[w], users.styles, config) for w in selected]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_process_week_star, tasks))
    else:
        results = [_process_week_star(t) for t in tasks]

    report = build_report(results, users, list(market), config, n_weeks)
    return PipelineResult(config, results, users, report)


# --------------------------------------------------------------------------- #
# report
# --------------------------------------------------------------------------- #


def _phase1(results: list[WeekResult], config: PipelineConfig) -> dict:
    out = {
        "weeks": [
            {
                "week": r.week_index,
                "node_count": r.network.n_nodes,
                "edge_count": r.network.n_edges,
                "event_count": len(r.event_indices),
                "summary": r.summary,
            }
            for r in results
        ],
    }
    algos = [config.detection.algorithm] + [a for a in config.detection.compare if a != config.detection.algorithm]
    if config.detection.compare:
        rows = compare_algorithms([r.network for r in results], algos, seed=config.detection.seed)
        out["algorithm_comparison"] = [row.__dict__ for row in rows]
    qs = [r.partition.modularity for r in results if r.partition]
    out["modularity"] = {
        "algorithm": config.detection.algorithm,
        "min": min(qs) if qs else None,
        "mean": float(np.mean(qs)) if qs else None,
        "max": max(qs) if qs else None,
    }
    return out


def _phase2(results: list[WeekResult]) -> dict:
    weeks = []
    for r in results:
        if r.clustering is None:
            weeks.append({"week": r.week_index, "n_communities": 0})
            continue
        c = r.clustering
        clusters = []
        for j in range(c.k):
            members = [p for p in r.profiles if p.cluster_id == j]
            type_counts = {t.value: sum(1 for p in members if p.type is t) for t in TYPE_ORDER}
            clusters.append(
                {
                    "cluster": j,
                    "communities": len(members),
                    "nodes": sum(p.size for p in members),
                    "centroid_z": dict(zip(COMMUNITY_FEATURE_NAMES, c.centroids[j].tolist())),
                    "types": type_counts,
                }
            )
        weeks.append(
            {
                "week": r.week_index,
                "n_communities": len(r.profiles),
                "modularity": r.partition.modularity,
                "k": c.k,
                "inertia": c.inertia,
                "clusters": clusters,
            }
        )
    return {"weeks": weeks}


def _phase3(results: list[WeekResult], users: UserStyles) -> dict:
    out: dict = {"n_users": users.n_users}
    if users.clustering is not None:
        c = users.clustering
        out["clusters"] = [
            {
                "cluster": j,
                "style": users.cluster_styles[j],
                "users": int(c.sizes()[j]),
                "centroid_z": dict(zip(PLAY_FEATURE_NAMES, c.centroids[j].tolist())),
            }
            for j in range(c.k)
        ]
    # member-weighted style mix per community type, pooled over weeks
    mix = {}
    for t in TYPE_ORDER:
        members = [m for r in results for p in r.profiles if p.type is t for m in p.members]
        mix[t.value] = style_composition(members, users.styles) if members else None
    out["style_composition_by_type"] = mix
    out["styles"] = list(PLAY_STYLES) + [UNKNOWN_STYLE]
    return out


def _phase4(results: list[WeekResult], users: UserStyles) -> dict:
    weeks = []
    for r in results:
        counts = {t.value: 0 for t in TYPE_ORDER}
        members = {t.value: 0 for t in TYPE_ORDER}
        for p in r.profiles:
            counts[p.type.value] += 1
            members[p.type.value] += p.size
        giant = [p for p in r.profiles if p.power_law is not None and p.type.value == "GiantConsumer"]
        weeks.append(
            {
                "week": r.week_index,
                "communities": counts,
                "members": members,
                "giant_power_law": giant[0].power_law.as_dict() if giant else None,
            }
        )
    profiles = [p for r in results for p in r.profiles]
    bans = ban_rate_report(profiles, users.banned) if profiles else {}
    return {
        "weeks": weeks,
        "ban_rates": {
            t.value: {"members": b.members, "banned": b.banned, "rate": b.rate} for t, b in bans.items()
        },
    }


def _correlation(a, b, permutations: int) -> dict:
    try:
        return pearson_correlation(a, b, permutations=permutations).as_dict()
    except (RmtError, ValueError) as exc:
        return {"rho": None, "p_value": None, "n": len(a), "error": str(exc)}


def _phase5(results: list[WeekResult], market: list[MarketRecord], config: PipelineConfig, n_weeks: int) -> dict:
    epoch = config.windowing.epoch
    weeks = [r.week_index for r in results]
    categorized = [t for r in results for t in r.categorized]
    full = weekly_series(categorized, n_weeks)
    pick = np.array(weeks, dtype=np.int64)
    counts = {k: v[pick] for k, v in full.counts.items()}
    money = {k: v[pick] for k, v in full.money.items()}

    out: dict = {
        "weeks": weeks,
        "series": {
            "counts": {k: v.tolist() for k, v in counts.items()},
            "money": {k: v.tolist() for k, v in money.items()},
        },
        "shares": {
            "intra": category_share(full, "intra"),
            "inter": category_share(full, "inter"),
            "inter_rmt": category_share(full, "inter_rmt"),
        },
        "inter_community_edges": {str(r.week_index): r.inter.n_edges if r.inter else 0 for r in results},
    }

    volumes = {}
    for cat, key in ((EventCategory.INTRA, "intra"), (None, "inter"), (EventCategory.INTER_RMT, "inter_rmt")):
        if cat is None:
            vals = [t.event.money_value for t in categorized if t.is_inter]
        else:
            vals = [t.event.money_value for t in categorized if t.category is cat]
        volumes[key] = volume_summary(vals).as_dict() if vals else None

    perm = config.estimation.permutations
    if market:
        m_counts, _ = market_weekly_counts(market, epoch, n_weeks)
        m_counts = m_counts[pick]
        out["market_weekly_counts"] = m_counts.tolist()
        out["correlation"] = {
            "intra": _correlation(counts["intra"], m_counts, perm),
            "inter": _correlation(counts["inter"], m_counts, perm),
            "inter_rmt": _correlation(counts["inter_rmt"], m_counts, perm),
        }
        wanted = set(weeks)
        site = [r.trade_volume for r in market
                if r.completion_time >= epoch and (r.completion_time - epoch) // WEEK_SECONDS in wanted]
        volumes["website"] = volume_summary(site).as_dict() if site else None
        rmt_vals = [t.event.money_value for t in categorized if t.is_rmt]
        if site and rmt_vals:
            scaled, scale = median_normalize(site, rmt_vals)
            out["median_normalization"] = {"scale": scale, "website_scaled": volume_summary(scaled).as_dict()}
        try:
            size = market_size_estimate(full.money["inter_rmt"], market, epoch, categorized)
            d = size.as_dict()
            d["weekly_price"] = [d["weekly_price"][w] for w in weeks]
            d["weekly_cash"] = [d["weekly_cash"][w] for w in weeks]
            d["total_cash"] = float(sum(d["weekly_cash"]))
            out["market_size"] = d
        except RmtError as exc:
            out["market_size"] = {"error": str(exc)}
    else:
        out["correlation"] = None
        out["market_size"] = {"error": "no market records"}
    out["volumes"] = volumes

    vols = [provider_volumes(r.categorized) for r in results]
    sizes = [{p.community_id: p.size for p in r.profiles if p.role is Role.PROVIDER} for r in results]
    points = temporal_concentration(vols, sizes, weeks)
    out["concentration"] = [p.as_dict() for p in points]
    if config.estimation.phase_weeks:
        try:
            out["concentration_phases"] = phase_summary(points, config.estimation.phase_weeks)
        except ValueError as exc:
            out["concentration_phases"] = {"error": str(exc)}
    return out


def build_report(
    results: list[WeekResult],
    users: UserStyles,
    market: list[MarketRecord],
    config: PipelineConfig,
    n_weeks: int,
) -> dict:
    return {
        "version": REPORT_VERSION,
        "weeks": [r.week_index for r in results],
        "phase1_network": _phase1(results, config),
        "phase2_community_clusters": _phase2(results),
        "phase3_play_styles": _phase3(results, users),
        "phase4_tagging": _phase4(results, users),
        "phase5_estimation": _phase5(results, market, config, n_weeks),
    }


# --------------------------------------------------------------------------- #
# files
# --------------------------------------------------------------------------- #


def dump_report(report: dict, stamp: str | None = None) -> str:
    """Serialise deterministically; ``generated_at`` only appears when a stamp is given."""
    if stamp is not None:
        report = {**report, "generated_at": stamp}
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_outputs(
    result: PipelineResult,
    out_dir: str | Path,
    format: str = "json",
    graphml: bool = True,
    stamp: str | None = None,
) -> dict[str, Path]:
    """Write the report, the per-node and per-event tables, and per-week GraphML.

    Every file is written to a temporary name first and renamed into place.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.json"}
    _atomic_write(paths["report"], dump_report(result.report, stamp))

    node_rows, event_rows, profile_rows = [], [], []
    for r in result.weeks:
        if r.partition is None:
            continue
        types = {p.community_id: p for p in r.profiles}
        for node in r.network.nodes:
            p = types[r.partition.assignment[node]]
            node_rows.append((r.week_index, node, p.community_id, p.type.value, p.role.value))
        for idx, t in zip(r.event_indices, r.categorized):
            event_rows.append((idx, r.week_index, t.category.value))
        for p in r.profiles:
            f = p.features.as_vector()
            profile_rows.append(
                (r.week_index, p.community_id, p.type.value, p.role.value, p.cluster_id,
                 *[repr(float(x)) for x in f],
                 p.power_law.alpha if p.power_law else "")
            )
    event_rows.sort()
    tables = {
        "communities": (("week", "node", "community", "type", "role"), node_rows),
        "events": (("event_index", "week", "category"), event_rows),
        "profiles": (("week", "community", "type", "role", "cluster", *COMMUNITY_FEATURE_NAMES, "alpha"), profile_rows),
    }
    for name, (header, rows) in tables.items():
        paths[name] = out / f"{name}.csv"
        _atomic_write(paths[name], _csv_text(header, rows))

    series = result.report["phase5_estimation"]["series"]
    weeks = result.report["weeks"]
    keys = sorted(series["counts"])
    rows = [
        (w, *[series["counts"][k][i] for k in keys], *[series["money"][k][i] for k in keys])
        for i, w in enumerate(weeks)
    ]
    header = ("week", *[f"count_{k}" for k in keys], *[f"money_{k}" for k in keys])
    if format == "csv":
        paths["weekly_series"] = out / "weekly_series.csv"
        _atomic_write(paths["weekly_series"], _csv_text(header, rows))
    else:
        paths["weekly_series"] = out / "weekly_series.json"
        _atomic_write(paths["weekly_series"], json.dumps(series, indent=2, sort_keys=True) + "\n")

    if graphml:
        gdir = out / "graphs"
        gdir.mkdir(exist_ok=True)
        for r in result.weeks:
            attrs = node_attributes(r)
            path = gdir / f"week_{r.week_index:03d}.graphml"
            buf = io.StringIO()
            write_graphml(r.network, buf, attrs)
            _atomic_write(path, buf.getvalue())
            paths[f"graph_{r.week_index}"] = path
    return paths


def node_attributes(r: WeekResult) -> dict[str, dict[str, object]]:
    if r.partition is None:
        return {}
    profiles = {p.community_id: p for p in r.profiles}
    out = {}
    for node, c in r.partition.assignment.items():
        p = profiles[c]
        out[node] = {"community": c, "type": p.type.value, "rmt_role": p.role.value}
    return out
