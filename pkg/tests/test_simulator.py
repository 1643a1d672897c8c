import io
from collections import Counter

import numpy as np
import pytest

from rmtnet.errors import ConfigInvalid
from rmtnet.estimation import market_weekly_counts
from rmtnet.graph import TradeNetwork, degree_assortativity, diameter
from rmtnet.ingest import (
    WEEK_SECONDS,
    check_warehouse_roles,
    parse_market_records,
    parse_play_log,
    parse_trade_log,
    window_weekly,
    write_market_records,
    write_play_log,
    write_trade_log,
)
from rmtnet.simulator import (
    MarketPhase,
    ScenarioConfig,
    evaluate_detection,
    generate_scenario,
    load_truth,
    preset,
    write_scenario,
)
from rmtnet.tagging import CommunityType

TINY = dict(n_normal=50, n_warehouses=0, n_large_stars=0, n_small_stars=0, n_chains=0, n_outcast_groups=0)


@pytest.fixture(scope="module")
def small():
    return generate_scenario(preset("small"))


def test_same_seed_same_logs(small):
    again = generate_scenario(preset("small"))
    assert again.trades == small.trades and again.play == small.play and again.market == small.market
    other = generate_scenario(preset("small", seed=1))
    assert other.trades != small.trades


def test_logs_round_trip_through_ingest(small):
    for writer, parser, records in (
        (write_trade_log, parse_trade_log, small.trades),
        (write_play_log, parse_play_log, small.play),
        (write_market_records, parse_market_records, small.market),
    ):
        for fmt in ("csv", "jsonl"):
            buf = io.StringIO()
            writer(records, buf, fmt)
            parsed = parser(buf.getvalue(), fmt)
            assert parsed.errors == []
            assert len(parsed.records) == len(records)
    assert check_warehouse_roles(small.trades) == []
    batches = window_weekly(small.trades, small.config.epoch)
    assert len(batches) == small.config.weeks


def test_every_event_labelled(small):
    t = small.truth
    assert len(t.event_rmt) == len(small.trades)
    assert set(t.node_group) == set(t.node_class)
    assert 0.03 <= t.rmt_share() <= 0.07


def test_single_small_star():
    sc = generate_scenario(
        preset("small", **{**TINY, "n_small_stars": 1}, small_star_farmers=(10, 10), merchant_share=0.0, weeks=1)
    )
    (star,) = [g for g, t in sc.truth.group_type.items() if t is CommunityType.SMALL_STAR]
    classes = Counter(c for n, c in sc.truth.node_class.items() if sc.truth.node_group[n] == star)
    assert classes == {"farmer": 10, "banker": 1}


def test_chain_ring_is_long_and_assortative():
    sc = generate_scenario(preset("small", **{**TINY, "n_chains": 1}, chain_length=(12, 12), weeks=12))
    (ring,) = [g for g, t in sc.truth.group_type.items() if t is CommunityType.CHAIN]
    members = {n for n, g in sc.truth.node_group.items() if g == ring}
    net = TradeNetwork.from_edges(
        [(e.source_id, e.target_id) for e in sc.trades if e.source_id in members and e.target_id in members]
    )
    assert diameter(net) >= 4
    assert degree_assortativity(net) > 0


@pytest.mark.parametrize("seed", range(3))
def test_market_follows_planted_sales_without_noise(seed):
    cfg = preset("coupled-market", seed=seed, weeks=20, market_noise=0.0, background_listings=0.0)
    sc = generate_scenario(cfg)
    planted = np.zeros(cfg.weeks)
    for e, flag in zip(sc.trades, sc.truth.event_rmt):
        if flag:
            planted[(e.timestamp - cfg.epoch) // WEEK_SECONDS] += e.money_value
    _, listed = market_weekly_counts(sc.market, cfg.epoch, cfg.weeks)
    assert np.corrcoef(planted, listed)[0, 1] >= 0.8


# --------------------------------------------------------------------------- #
# config validation
# --------------------------------------------------------------------------- #


@pytest.mark.parametrize(
    "bad",
    [
        {"weeks": 0},
        {"rmt_share": 1.0},
        {"n_small_stars": -1},
        {"chain_length": (10, 5)},
        {"chain_length": (2, 2)},
        {"ban_probability": {"wizard": 0.5}},
        {"phases": (MarketPhase(2),)},
    ],
)
def test_invalid_configs(bad):
    with pytest.raises(ConfigInvalid):
        ScenarioConfig(**bad)


def test_from_mapping():
    cfg = ScenarioConfig.from_mapping({"weeks": 2, "chain_length": [5, 9], "phases": [{"weeks": 2}]})
    assert cfg.chain_length == (5, 9) and cfg.phases == (MarketPhase(2),)
    with pytest.raises(ConfigInvalid):
        ScenarioConfig.from_mapping({"colour": "red"})
    with pytest.raises(ConfigInvalid):
        preset("nope")


# --------------------------------------------------------------------------- #
# files and evaluation
# --------------------------------------------------------------------------- #


def test_truth_files_round_trip(small, tmp_path):
    paths = write_scenario(small, tmp_path)
    assert all(p.exists() for p in paths.values())
    truth = load_truth(tmp_path)
    assert truth.node_group == small.truth.node_group
    assert truth.group_type == small.truth.group_type
    assert truth.event_rmt == small.truth.event_rmt
    with pytest.raises(ConfigInvalid):
        load_truth(tmp_path / "missing")


def _truth_prediction(truth, weeks=(0,)):
    assignment = dict(truth.node_group)
    return (
        {w: assignment for w in weeks},
        {w: dict(truth.group_type) for w in weeks},
    )


def test_perfect_prediction_scores_one(small):
    t = small.truth
    assignments, types = _truth_prediction(t)
    m = evaluate_detection(assignments, types, dict(enumerate(t.event_rmt)), t)
    assert m.nmi == pytest.approx(1.0)
    assert m.rmt_events.precision == m.rmt_events.recall == 1.0
    for prf in m.per_type.values():
        assert prf.precision == prf.recall == 1.0


def test_all_outcast_has_zero_provider_recall(small):
    t = small.truth
    assignments, _ = _truth_prediction(t)
    types = {0: {g: CommunityType.OUTCAST for g in t.group_type}}
    m = evaluate_detection(assignments, types, {}, t)
    assert m.per_type["Provider"].recall == 0.0
    assert m.per_type["Outcast"].recall == 1.0


def test_random_flags_precision_near_base_rate(small):
    t = small.truth
    rng = np.random.default_rng(0)
    flags = {i: bool(rng.random() < 0.5) for i in range(len(t.event_rmt))}
    assignments, types = _truth_prediction(t)
    m = evaluate_detection(assignments, types, flags, t)
    assert m.rmt_events.precision == pytest.approx(t.rmt_share(), abs=0.01)
