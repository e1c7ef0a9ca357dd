from pathlib import Path

import pytest

from ppconsensus import paper_scenario, simulate
from ppconsensus.scenario_file import paper_scenario_text

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def paper():
    return paper_scenario()


@pytest.fixture(scope="session")
def paper_traj(paper):
    return simulate(paper)


@pytest.fixture
def paper_text():
    return paper_scenario_text()


@pytest.fixture
def data_dir():
    return DATA
