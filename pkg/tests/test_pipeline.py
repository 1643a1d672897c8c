import csv
import json
import xml.etree.ElementTree as ET

import pytest

from rmtnet.config import PipelineConfig
from rmtnet.errors import NoData
from rmtnet.pipeline import dump_report, run_pipeline, write_outputs

PHASES = ("phase1_network", "phase2_community_clusters", "phase3_play_styles", "phase4_tagging", "phase5_estimation")


def test_report_sections(small_run):
    report = small_run.report
    assert set(PHASES) <= set(report) and "generated_at" not in report
    assert report["weeks"] == [0, 1, 2]
    p5 = report["phase5_estimation"]
    assert p5["shares"]["intra"] + p5["shares"]["inter"] == pytest.approx(1.0)
    assert p5["correlation"]["inter_rmt"]["n"] == 3
    assert p5["market_size"]["total_cash"] > 0
    assert set(report["phase4_tagging"]["ban_rates"]) == {"GiantConsumer", "LargeStar", "SmallStar", "Chain", "Outcast"}


def test_small_scenario_is_recovered(small_run):
    m = small_run.metrics
    assert m.nmi > 0.95
    assert m.per_type["Provider"].precision >= 0.9 and m.per_type["Provider"].recall >= 0.9
    assert m.rmt_events.precision >= 0.9 and m.rmt_events.recall >= 0.9


def test_every_event_categorised_once(small_run):
    indices = [i for r in small_run.result.weeks for i in r.event_indices]
    assert sorted(indices) == list(range(len(small_run.scenario.trades)))
    for r in small_run.result.weeks:
        assert len(r.categorized) == len(r.event_indices)


def test_generated_at_is_the_only_difference(small_run):
    plain = dump_report(small_run.report)
    stamped = json.loads(dump_report(small_run.report, "2026-01-01T00:00:00Z"))
    assert stamped.pop("generated_at") == "2026-01-01T00:00:00Z"
    assert json.dumps(stamped, indent=2, sort_keys=True) + "\n" == plain


def test_week_selection(small_run):
    sc = small_run.scenario
    result = run_pipeline(sc.trades, sc.play, sc.market, weeks=[1])
    assert [r.week_index for r in result.weeks] == [1]
    assert result.report["phase5_estimation"]["weeks"] == [1]
    week1 = next(r for r in small_run.result.weeks if r.week_index == 1)
    assert result.weeks[0].partition == week1.partition
    with pytest.raises(NoData):
        run_pipeline(sc.trades, weeks=[7])


def test_without_play_or_market(small_run):
    sc = small_run.scenario
    result = run_pipeline(sc.trades, config=PipelineConfig(), weeks=[0])
    p5 = result.report["phase5_estimation"]
    assert p5["correlation"] is None and "error" in p5["market_size"]
    comp = result.report["phase3_play_styles"]["style_composition_by_type"]
    assert all(mix is None or mix["Unknown"] == 1.0 for mix in comp.values())


def test_output_files(small_run, tmp_path):
    paths = write_outputs(small_run.result, tmp_path, format="csv", stamp="now")
    assert json.loads(paths["report"].read_text())["generated_at"] == "now"
    with open(paths["events"], newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(small_run.scenario.trades)
    assert {r["category"] for r in rows} <= {"Intra", "Inter", "InterRMT"}
    with open(paths["weekly_series"], newline="") as fh:
        assert len(list(csv.DictReader(fh))) == 3
    root = ET.parse(paths["graph_0"]).getroot()
    assert root.tag.endswith("graphml")
