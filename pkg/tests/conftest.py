import logging
import time

import pytest

from rmtnet.config import EstimationConfig, PipelineConfig
from rmtnet.pipeline import run_pipeline
from rmtnet.simulator import evaluate_detection, generate_scenario, preset

_outcomes: dict[int, tuple[str, str, str]] = {}
_details: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _outcomes[number] = (status, title, item.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_outcomes):
        status, title, _ = _outcomes[number]
        line = f"criterion {number:>2}: {status}  {title}"
        if number in _details:
            line += f"  [{_details[number]}]"
        tr.write_line(line)


@pytest.fixture
def acceptance_detail(request):
    """Attach a short measurement to the acceptance summary line of this test."""
    marker = request.node.get_closest_marker("criterion")

    def note(text: str) -> None:
        if marker is not None:
            _details[marker.args[0]] = text

    return note


class Run:
    """A generated scenario, the pipeline result on it and its detection metrics."""

    def __init__(self, name: str, **overrides):
        logging.disable(logging.WARNING)
        try:
            self.config = preset(name, **overrides)
            self.scenario = generate_scenario(self.config)
            phases = tuple(self.scenario.truth.phase_weeks)
            pipeline_config = PipelineConfig(estimation=EstimationConfig(phase_weeks=phases))
            start = time.perf_counter()
            self.result = run_pipeline(self.scenario.trades, self.scenario.play, self.scenario.market, pipeline_config)
            self.seconds = time.perf_counter() - start
        finally:
            logging.disable(logging.NOTSET)
        weeks = self.result.weeks
        self.metrics = evaluate_detection(
            {r.week_index: r.partition.assignment for r in weeks},
            {r.week_index: {p.community_id: p.type for p in r.profiles} for r in weeks},
            {i: t.is_rmt for r in weeks for i, t in zip(r.event_indices, r.categorized)},
            self.scenario.truth,
        )

    @property
    def report(self) -> dict:
        return self.result.report


@pytest.fixture(scope="session")
def small_run():
    return Run("small")


@pytest.fixture(scope="session")
def paper_run():
    return Run("paper-scale")


@pytest.fixture(scope="session")
def coupled_run():
    return Run("coupled-market")


@pytest.fixture(scope="session")
def maturing_run():
    return Run("maturing-market")
