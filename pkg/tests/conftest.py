import json
from pathlib import Path

import pytest

from app.settings import solverSettings
from app.solver.data.Decomposition import TargetMoments
from app.solver.data.Distribution import AtomicDistribution


# conftest.py is a magic pytest file for fixtures that is imported automatically

def load_json(json_path: Path):
    assert json_path.exists()

    with json_path.open("r") as encoded_obj:
        return encoded_obj.read()


@pytest.fixture
def gh3():
    return AtomicDistribution.model_validate_json(load_json(Path("./tests/res/in/dist_gh3.json")))


@pytest.fixture
def binary():
    return AtomicDistribution.model_validate_json(load_json(Path("./tests/res/in/dist_binary.json")))


@pytest.fixture
def exponential_target():
    return TargetMoments.model_validate_json(load_json(Path("./tests/res/in/target_exponential.json")))


@pytest.fixture
def eta_expected():
    return json.loads(load_json(Path("./tests/res/out/eta_expected.json")))


@pytest.fixture
def restore_settings():
    saved = solverSettings.model_dump()
    yield solverSettings
    for key, value in saved.items():
        setattr(solverSettings, key, value)
