import logging

import numpy as np
import pytest

import oracles
from rmtnet.errors import DegenerateSamples, TooFewSamples
from rmtnet.features import ClusteringResult, CommunityFeatures, community_features
from rmtnet.graph import TradeNetwork
from rmtnet.tagging import (
    PLAY_STYLES,
    ROLE_OF_TYPE,
    CommunityProfile,
    CommunityType,
    CommunityTyper,
    Role,
    TaggingThresholds,
    ban_rate_report,
    classify_communities,
    classify_profile,
    fit_power_law,
    label_play_styles,
    style_composition,
)

# --------------------------------------------------------------------------- #
# power law
# --------------------------------------------------------------------------- #


@pytest.mark.parametrize("alpha", [2.2, 2.75, 3.2])
def test_power_law_recovers_exponent(alpha):
    fit = fit_power_law(oracles.power_law_samples(alpha, 10_000, seed=1))
    assert abs(fit.alpha - alpha) <= 0.1
    assert fit.alpha > 1 and fit.x_min >= 1 and fit.n_tail >= 50


def test_power_law_errors():
    with pytest.raises(DegenerateSamples):
        fit_power_law([4] * 100)
    with pytest.raises(TooFewSamples):
        fit_power_law([1, 2, 3])
    with pytest.raises(ValueError):
        fit_power_law([0] + [1, 2] * 40)


def test_power_law_ks_is_the_minimum_over_candidates():
    samples = oracles.power_law_samples(2.5, 2000, seed=5)
    best = fit_power_law(samples)
    floor = fit_power_law([x for x in samples if x >= best.x_min])
    assert floor.ks == pytest.approx(best.ks) and floor.alpha == pytest.approx(best.alpha)


# --------------------------------------------------------------------------- #
# play styles
# --------------------------------------------------------------------------- #


def _centroids(*rows):
    C = np.zeros((len(rows), 16))
    for i, row in enumerate(rows):
        for col, value in row.items():
            C[i, col] = value
    return ClusteringResult(np.arange(len(rows)), C, 0.0, len(rows), 0, 1)


def test_fisher_and_light():
    styles = label_play_styles(_centroids({14: 3.0}, {}))
    assert styles == {0: "Fisher", 1: "Light"}


def test_all_zero_centroid_is_light():
    assert label_play_styles(_centroids({})) == {0: "Light"}


def test_full_rule_table():
    result = _centroids(
        {0: 1.0, 1: 1.0, 2: 1.0},  # hard core
        {15: 2.0},  # shop host
        {14: 2.0},  # fisher
        {7: 2.0},  # party
        {12: 2.0, 13: -1.0},  # worker
        {0: -1.0, 1: -1.0},  # light
        {0: 0.01},  # leftover
    )
    styles = label_play_styles(result)
    assert styles == {0: "Hard core", 1: "Shop host", 2: "Fisher", 3: "Party", 4: "Worker", 5: "Light", 6: "Genuine"}
    assert sorted(styles.values()) == sorted(PLAY_STYLES)


def test_tie_goes_to_lower_cluster_id():
    styles = label_play_styles(_centroids({14: 2.0}, {14: 2.0}))
    assert styles[0] == "Fisher" and styles[1] != "Fisher"


def test_style_composition_includes_unknown():
    comp = style_composition(["a", "b", "c", "d"], {"a": "Fisher", "b": "Fisher", "c": "Light"})
    assert comp["Fisher"] == 0.5 and comp["Light"] == 0.25 and comp["Unknown"] == 0.25
    assert sum(comp.values()) == pytest.approx(1.0, abs=1e-9)


# --------------------------------------------------------------------------- #
# classification rules
# --------------------------------------------------------------------------- #


def _profile(cid=0, *, size, degree_mean=1.0, degree_std=0.0, assortativity=0.0, diameter=1, degrees=()):
    f = CommunityFeatures(size, degree_mean, degree_std, 0.0, 0.0, assortativity, 0.0, diameter)
    return CommunityProfile(cid, tuple(f"m{cid}_{i}" for i in range(size)), f, tuple(degrees))


def test_large_star_example():
    p = _profile(size=120, degree_mean=2.0, degree_std=22.0, assortativity=-0.92, diameter=2)
    assert classify_profile(p, total_nodes=10_000)[0] is CommunityType.LARGE_STAR


def test_chain_example():
    p = _profile(size=40, degree_mean=2.0, assortativity=0.6, diameter=18)
    assert classify_profile(p, total_nodes=10_000)[0] is CommunityType.CHAIN


def test_giant_example():
    degrees = oracles.power_law_samples(2.75, 1200, seed=2)
    p = _profile(size=1200, degree_mean=float(np.mean(degrees)), degree_std=float(np.std(degrees)), degrees=degrees)
    ctype, fit, _ = classify_profile(p, total_nodes=10_000)
    assert ctype is CommunityType.GIANT_CONSUMER and 2.0 <= fit.alpha <= 3.5
    # the same community below the 5% share is not a giant
    assert classify_profile(p, total_nodes=30_000)[0] is not CommunityType.GIANT_CONSUMER


def test_small_star_and_outcast():
    assert classify_profile(_profile(size=8, assortativity=-0.8), 1000)[0] is CommunityType.SMALL_STAR
    assert classify_profile(_profile(size=2, assortativity=0.0), 1000)[0] is CommunityType.OUTCAST


def test_thresholds_override():
    p = _profile(size=8, assortativity=-0.4)
    assert classify_profile(p, 1000)[0] is CommunityType.OUTCAST
    loose = TaggingThresholds.from_mapping({"small_star_max_assortativity": -0.3})
    assert classify_profile(p, 1000, loose)[0] is CommunityType.SMALL_STAR
    with pytest.raises(KeyError):
        TaggingThresholds.from_mapping({"nope": 1})


def test_roles_follow_types():
    assert {t: ROLE_OF_TYPE[t] for t in CommunityType} == {
        CommunityType.GIANT_CONSUMER: Role.CONSUMER,
        CommunityType.LARGE_STAR: Role.PROVIDER,
        CommunityType.SMALL_STAR: Role.PROVIDER,
        CommunityType.CHAIN: Role.PROVIDER,
        CommunityType.OUTCAST: Role.FILTERED,
    }


def test_classify_communities_attaches_everything(caplog):
    profiles = [
        _profile(0, size=8, assortativity=-0.8),
        _profile(1, size=60, assortativity=0.0, degree_mean=3.0),
    ]
    clusters = ClusteringResult(np.array([1, 0]), np.zeros((2, 8)), 0.0, 2, 0, 1)
    with caplog.at_level(logging.WARNING):
        out = classify_communities(profiles, clusters, total_node_count=5000)
    assert [p.type for p in out] == [CommunityType.SMALL_STAR, CommunityType.OUTCAST]
    assert [p.role for p in out] == [Role.PROVIDER, Role.FILTERED]
    assert [p.cluster_id for p in out] == [1, 0]
    assert "matched no structural rule" in caplog.text
    assert CommunityTyper().fit().predict(profiles, 5000) == [p.type for p in out]


def _types_of(net, labels):
    feats = community_features(net, labels)
    profiles = []
    for c, f in enumerate(feats):
        members = tuple(sorted(v for v in net.nodes if labels[v] == c))
        sub = net.subgraph(members)
        profiles.append(CommunityProfile(c, members, f, tuple(sub.degree.tolist())))
    classify_communities(profiles, total_node_count=net.n_nodes)
    return {m: p.type for p in profiles for m in p.members}


def test_classification_is_invariant_to_relabeling():
    rng = np.random.default_rng(0)
    edges = [("hub", f"leaf{i}") for i in range(12)]
    edges += [(f"ring{i}", f"ring{(i + 1) % 15}") for i in range(15)]
    edges += [(f"x{i}", f"x{j}") for i in range(6) for j in range(i + 1, 6) if rng.random() < 0.5]
    net = TradeNetwork.from_edges(edges)
    labels = {v: 0 if v.startswith(("hub", "leaf")) else 1 if v.startswith("ring") else 2 for v in net.nodes}
    before = _types_of(net, labels)
    rename = {v: f"z{i:03d}" for i, v in enumerate(rng.permutation(net.nodes))}
    renamed = TradeNetwork.from_edges([(rename[a], rename[b]) for a, b in edges])
    after = _types_of(renamed, {rename[v]: c for v, c in labels.items()})
    assert before == {v: after[rename[v]] for v in before}
    assert before["hub"] is CommunityType.SMALL_STAR


# --------------------------------------------------------------------------- #
# ban rates
# --------------------------------------------------------------------------- #


def _typed(cid, ctype, members):
    p = _profile(cid, size=len(members))
    p.members, p.type = tuple(members), ctype
    return p


def test_ban_rates():
    profiles = [
        _typed(0, CommunityType.CHAIN, ["a", "b"]),
        _typed(1, CommunityType.GIANT_CONSUMER, ["c", "d", "e", "f"]),
    ]
    rates = ban_rate_report(profiles, {"a": True, "b": True, "c": True})
    assert rates[CommunityType.CHAIN].rate == 1.0
    assert rates[CommunityType.GIANT_CONSUMER].rate == 0.25
    assert rates[CommunityType.LARGE_STAR].members == 0 and rates[CommunityType.LARGE_STAR].rate == 0.0


def test_ban_rates_without_flags_warn(caplog):
    with caplog.at_level(logging.WARNING):
        rates = ban_rate_report([_typed(0, CommunityType.CHAIN, ["a"])], {})
    assert all(r.rate == 0 for r in rates.values())
    assert "no ban flags" in caplog.text


def test_ban_rates_need_types():
    with pytest.raises(ValueError):
        ban_rate_report([_profile(size=2)], {"m0_0": True})
