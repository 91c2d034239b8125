import pathlib

import pytest

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


@pytest.fixture
def running_example() -> str:
    return fixture_text("running_example.sql")


@pytest.fixture
def running_model(running_example):
    from schemaplan import load_model

    return load_model(running_example)
