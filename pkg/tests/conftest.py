from pathlib import Path

import pytest

from gdatalog.schema import Schema

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def temp_schema() -> Schema:
    return Schema.of(Temp=[("RoomNo", "integer"), ("Time", "string"), ("°C", "real")])
