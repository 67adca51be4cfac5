import json
from pathlib import Path

import pytest

from flowcensor.scenario import Scenario, load_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="session")
def running() -> Scenario:
    return load_scenario(SCENARIOS / "running.json")


@pytest.fixture(scope="session")
def intervals() -> Scenario:
    return load_scenario(SCENARIOS / "intervals.json")


@pytest.fixture(scope="session")
def running_doc() -> dict:
    return json.loads((SCENARIOS / "running.json").read_text())


def scenario_with(doc: dict, programs: dict[str, str], tmp_path: Path) -> Scenario:
    """Materialize a scenario variant with inline program sources."""
    doc = dict(doc)
    doc["programs"] = {}
    for name, source in programs.items():
        src = tmp_path / f"{name}.med"
        src.write_text(source)
        doc["programs"][name] = src.name
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(doc))
    return load_scenario(path)


RUNNING_DOC_MIN = {
    "name": "mini",
    "schema": {
        "key": {"attribute": "ID", "value": "id"},
        "attributes": [
            {"name": "A", "domain": ["a1", "a2"]},
            {"name": "B", "domain": ["b1", "b2"]},
            {"name": "C", "domain": ["c1", "c2", "c3", "c4"]},
        ],
    },
    "policy": [],
    "hierarchy": {"attributes": {"C": {"node": "gC", "children": ["c1", "c2", "c3", "c4"]}}},
    "args": [],
}
