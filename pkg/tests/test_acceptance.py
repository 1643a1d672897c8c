"""The ten acceptance criteria, one test each.

Each test is tagged with ``criterion(n, title)``; the conftest hook prints a
PASS/FAIL line per criterion at the end of the run.
"""

import hashlib
import io
import logging
import time

import numpy as np
import pytest
from sklearn.metrics import normalized_mutual_info_score

import oracles
from rmtnet import graph
from rmtnet.community import detect_fastgreedy, detect_multilevel
from rmtnet.config import PipelineConfig
from rmtnet.estimation import median_normalize
from rmtnet.graph import TradeNetwork
from rmtnet.ingest import write_market_records, write_play_log, write_trade_log
from rmtnet.pipeline import dump_report, run_pipeline
from rmtnet.simulator import generate_scenario, preset
from rmtnet.tagging import CommunityType, fit_power_law

PROVIDER_TYPES = ("LargeStar", "SmallStar", "Chain")


@pytest.mark.criterion(1, "metric oracles on 200 random graphs")
def test_criterion_01_metric_oracles(acceptance_detail):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    for _ in range(200):
        n = int(rng.integers(2, 61))
        net = oracles.random_network(rng, n, p=float(rng.uniform(0.01, 0.15)))
        assert graph.betweenness_array(net).tolist() == pytest.approx(oracles.betweenness(net), abs=1e-9)
        assert graph.diameter(net) == oracles.diameter(net)
        assert graph.clustering_coefficient(net) == pytest.approx(oracles.clustering(net), abs=1e-9)
        expected = oracles.assortativity(net)
        got = graph.degree_assortativity(net)
        assert (got is None) == (expected is None)
        if expected is not None:
            assert got == pytest.approx(expected, abs=1e-9)
        labels = {name: int(rng.integers(0, 4)) for name in net.nodes}
        assert graph.modularity(net, labels) == pytest.approx(oracles.modularity(net, labels), abs=1e-9)
    elapsed = time.perf_counter() - start
    acceptance_detail(f"{elapsed:.1f}s")
    assert elapsed < 30


def _two_block(seed: int, n: int = 50, p_in: float = 0.3, p_out: float = 0.01):
    rng = np.random.default_rng(seed)
    truth = {f"v{i:03d}": i // n for i in range(2 * n)}
    edges = []
    for i in range(2 * n):
        for j in range(i + 1, 2 * n):
            if rng.random() < (p_in if i // n == j // n else p_out):
                edges.append((f"v{i:03d}", f"v{j:03d}") if rng.random() < 0.5 else (f"v{j:03d}", f"v{i:03d}"))
    return TradeNetwork.from_edges(edges, isolated=truth), truth


def _star_chain_clique(leaves: int = 12, ring: int = 10, clique: int = 8):
    truth, edges = {"s00": 0}, []
    for i in range(1, leaves + 1):
        edges.append(("s00", f"s{i:02d}"))
        truth[f"s{i:02d}"] = 0
    for i in range(ring):
        edges.append((f"c{i:02d}", f"c{(i + 1) % ring:02d}"))
        truth[f"c{i:02d}"] = 1
    for i in range(clique):
        truth[f"k{i:02d}"] = 2
        edges.extend((f"k{i:02d}", f"k{j:02d}") for j in range(i + 1, clique))
    # bridges leave from the hub, the ring and the clique, never from a star leaf
    edges += [("s00", "c00"), ("c05", "k00"), ("k01", "s00")]
    return TradeNetwork.from_edges(edges), truth


@pytest.mark.criterion(2, "planted community recovery, NMI >= 0.95 and exact Q")
def test_criterion_02_community_recovery(acceptance_detail):
    cases = [(f"two-block seed {s}", *_two_block(s)) for s in range(10)]
    cases.append(("star+chain+clique", *_star_chain_clique()))
    misses = []
    for label, net, truth in cases:
        for partition in (detect_multilevel(net, seed=0), detect_fastgreedy(net)):
            assert partition.modularity == pytest.approx(graph.modularity(net, partition.assignment), abs=1e-9)
            assert partition.modularity == pytest.approx(oracles.modularity(net, partition.assignment), abs=1e-9)
            score = normalized_mutual_info_score(
                [truth[v] for v in net.nodes], [partition.assignment[v] for v in net.nodes]
            )
            if score < 0.95:
                misses.append(f"{partition.algorithm} on {label}: NMI {score:.3f}")
    acceptance_detail("; ".join(misses) if misses else f"{len(cases)} graphs, both algorithms")
    assert not misses


@pytest.mark.criterion(3, "typing precision/recall at paper scale, giant found, < 2 min")
def test_criterion_03_typing_accuracy(paper_run, acceptance_detail):
    m = paper_run.metrics.per_type
    star, chain = m["Star"], m["Chain"]
    truth = paper_run.scenario.truth
    giant = next(g for g, t in truth.group_type.items() if t is CommunityType.GIANT_CONSUMER)
    giant_types = []
    for r in paper_run.result.weeks:
        overlap = {}
        for node, c in r.partition.assignment.items():
            if truth.node_group.get(node) == giant:
                overlap[c] = overlap.get(c, 0) + 1
        best = max(overlap, key=overlap.get)
        giant_types.append(next(p.type for p in r.profiles if p.community_id == best))
    acceptance_detail(
        f"star P {star.precision:.3f} R {star.recall:.3f}, chain P {chain.precision:.3f} R {chain.recall:.3f}, "
        f"pipeline {paper_run.seconds:.0f}s"
    )
    assert star.precision >= 0.9 and star.recall >= 0.9
    assert chain.precision >= 0.9 and chain.recall >= 0.9
    assert m["GiantConsumer"].recall == 1.0
    assert all(t is CommunityType.GIANT_CONSUMER for t in giant_types)
    assert paper_run.seconds < 120


@pytest.mark.criterion(4, "power-law exponent within 0.1 of 2.75")
def test_criterion_04_power_law(acceptance_detail):
    samples = oracles.power_law_samples(2.75, 10_000, seed=0)
    fit = fit_power_law(samples)
    acceptance_detail(f"alpha {fit.alpha:.3f}, x_min {fit.x_min}")
    assert abs(fit.alpha - 2.75) <= 0.1


@pytest.mark.criterion(5, "InterRMT share within 2pp of 5%")
def test_criterion_05_rmt_share(paper_run, acceptance_detail):
    share = paper_run.report["phase5_estimation"]["shares"]["inter_rmt"]
    acceptance_detail(f"share {share:.4f}")
    assert abs(share - 0.05) <= 0.02


@pytest.mark.criterion(6, "InterRMT tracks the market, Intra does not")
def test_criterion_06_correlation(coupled_run, acceptance_detail):
    corr = coupled_run.report["phase5_estimation"]["correlation"]
    rmt, intra = corr["inter_rmt"], corr["intra"]
    acceptance_detail(
        f"InterRMT rho {rmt['rho']:.3f} p {rmt['p_value']:.1e}; Intra rho {intra['rho']:.3f} p {intra['p_value']:.3f}"
    )
    assert rmt["rho"] >= 0.4 and rmt["p_value"] < 0.01
    assert intra["p_value"] >= 0.05


@pytest.mark.criterion(7, "median normalisation scale 0.4 on the 12M / 30M fixture")
def test_criterion_07_median_normalization(acceptance_detail):
    website = [10_000_000, 30_000_000, 90_000_000]
    estimated = [1_000_000, 12_000_000, 50_000_000]
    scaled, scale = median_normalize(website, estimated)
    acceptance_detail(f"scale {scale!r}")
    assert scale == 0.4
    assert np.median(scaled) == 12_000_000


@pytest.mark.criterion(8, "HHI rises phase over phase, provider count falls")
def test_criterion_08_monopolization(maturing_run, acceptance_detail):
    phases = maturing_run.report["phase5_estimation"]["concentration_phases"]
    hhi = [p["mean_hhi"] for p in phases]
    counts = [p["mean_provider_count"] for p in phases]
    acceptance_detail(f"HHI {[round(h, 3) for h in hhi]}, providers {counts}")
    assert len(phases) == 3
    assert hhi[0] < hhi[1] < hhi[2]
    assert counts[-1] < counts[0]


@pytest.mark.criterion(9, "provider ban rates above the consumer ban rate")
def test_criterion_09_ban_rates(paper_run, acceptance_detail):
    rates = {k: v["rate"] for k, v in paper_run.report["phase4_tagging"]["ban_rates"].items()}
    acceptance_detail(", ".join(f"{k} {rates[k]:.3f}" for k in ("GiantConsumer", *PROVIDER_TYPES)))
    for t in PROVIDER_TYPES:
        assert rates[t] > rates["GiantConsumer"]


def _log_digest(scenario) -> str:
    h = hashlib.sha256()
    for writer, records in (
        (write_trade_log, scenario.trades),
        (write_play_log, scenario.play),
        (write_market_records, scenario.market),
    ):
        buf = io.StringIO()
        writer(records, buf, "csv")
        h.update(buf.getvalue().encode())
    return h.hexdigest()


@pytest.mark.criterion(10, "identical config and seed give identical logs and reports")
def test_criterion_10_determinism(paper_run, acceptance_detail):
    again = generate_scenario(preset("paper-scale"))
    assert _log_digest(again) == _log_digest(paper_run.scenario)

    config = preset("small", seed=3)
    reports = []
    logging.disable(logging.WARNING)
    try:
        for jobs in (1, 2):
            sc = generate_scenario(config)
            result = run_pipeline(sc.trades, sc.play, sc.market, PipelineConfig(), jobs=jobs)
            reports.append(dump_report(result.report))
    finally:
        logging.disable(logging.NOTSET)
    acceptance_detail("paper-scale logs and small-scenario reports (1 and 2 jobs) byte-identical")
    assert reports[0] == reports[1]
