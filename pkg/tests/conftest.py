import json
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

from bgload.cloudsim import SimConfig, batch_simulate, build_cloud  # noqa: E402
from bgload.corpus import DEMO_CLOUD, SyntheticProfile, demo_description, generate_synthetic_corpus  # noqa: E402
from bgload.evaluation import Corpus  # noqa: E402
from bgload.metrics import build_error_cache  # noqa: E402
from bgload.traces import enumerate_fragments, fragment_duration  # noqa: E402
from bgload.workflow import SectionShape, build_plan, parse_workflow_description  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def frozen():
    return json.loads((DATA / "oracle_values.json").read_text())


@pytest.fixture(scope="session")
def demo_desc():
    return parse_workflow_description(demo_description())


@pytest.fixture(scope="session")
def demo_plan(demo_desc):
    return build_plan(demo_desc)


@pytest.fixture(scope="session")
def small_world(demo_desc, demo_plan):
    """A 2000-job periodic archive with 150 consecutive fragments simulated."""
    archive = generate_synthetic_corpus(3, SyntheticProfile(n_jobs=2000))
    cloud = build_cloud(DEMO_CLOUD.replace("count=2", "count=3"))
    refs = enumerate_fragments(archive, fragment_duration(sum(demo_plan.r_ex)))[200:350]
    log = batch_simulate(demo_desc, demo_plan, cloud, refs, archive, SimConfig())
    shape = SectionShape.from_plan(demo_plan)
    cache = build_error_cache(demo_plan, log, shape)
    return {
        "archive": archive, "cloud": cloud, "refs": refs, "log": log,
        "shape": shape, "cache": cache, "corpus": Corpus(demo_plan, log, cache),
    }


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; the summary hook prints them in order."""

    def record(number: int, ok: bool, detail: str) -> None:
        _CRITERIA[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
        print(_CRITERIA[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
