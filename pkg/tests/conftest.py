from pathlib import Path

import pytest

from models import QuboInstance, SpectrumReport
from services.qubo import load_instance

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale acceptance tests")


def pytest_collection_modifyitems(config: pytest.Config, items) -> None:
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def qubo_n4() -> QuboInstance:
    return load_instance(FIXTURES / "qubo_n4.json")


@pytest.fixture
def qubo_n2() -> QuboInstance:
    return load_instance(FIXTURES / "qubo_n2.json")


@pytest.fixture
def spectrum_n4() -> SpectrumReport:
    return SpectrumReport.model_validate_json((FIXTURES / "qubo_n4.spectrum.json").read_text(encoding="utf-8"))
