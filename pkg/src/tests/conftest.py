import pytest
from fastapi.testclient import TestClient

from src.app import app
from src.routes.truth_eval import get_backend
from src.services.oracle import MockBackend
from src.services.synth import generate_fixture, write_fixture

MOCK_TABLE = {
    ("E1", "genre_comedy"): 0.9,
    ("E1", "kind_novel"): 0.2,
}


@pytest.fixture(scope="module")
def backend():
    return MockBackend(MOCK_TABLE, default=0.5)


@pytest.fixture(scope="module")
def client(backend):
    app.dependency_overrides[get_backend] = lambda: backend

    yield TestClient(app)

    app.dependency_overrides.clear()


@pytest.fixture(scope="session")
def fixture():
    return generate_fixture(seed=13, n_entities=240, queries_per_template=12)


@pytest.fixture(scope="session")
def fixture_dir(fixture, tmp_path_factory):
    directory = tmp_path_factory.mktemp("synth")
    write_fixture(fixture, directory)
    return directory


@pytest.fixture
def prompt_body():
    return {
        "entity_title": "The Princess Bride",
        "predicate": "The Princess Bride is a comedy book",
        "suffix": "Is this predicate True or False?",
        "entity_id": "E1",
        "predicate_id": "genre_comedy",
    }
