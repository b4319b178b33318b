"""
Shared fixtures: small hand-drawn worlds, bundled scenarios and an
in-memory SQLite journal
"""
import json
from pathlib import Path

import pytest
from sqlalchemy import create_engine, event
from sqlalchemy.orm import sessionmaker

import models  # noqa: F401  registers the journal table
from models.base import Base
from services.world import parse_ascii_map

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def room(width: int, height: int, base=(1, 1), fill=None):
    """Walled rectangle of free cells; ``fill`` maps (row, col) to a map character"""
    fill = dict(fill or {})
    fill[base] = "B"
    lines = []
    for r in range(height):
        row = []
        for c in range(width):
            if r in (0, height - 1) or c in (0, width - 1):
                row.append("#")
            else:
                row.append(fill.get((r, c), "."))
        lines.append("".join(row))
    return lines


@pytest.fixture
def open_world():
    """10 x 10 cell room at 0.25 m, base in the corner"""
    return parse_ascii_map(room(10, 10))


@pytest.fixture
def corridor_world():
    """2 m wide, 15 m long corridor at 0.25 m cells"""
    return parse_ascii_map(room(62, 10, base=(4, 1)))


@pytest.fixture
def scenario_path():
    def _path(name: str) -> Path:
        return SCENARIO_DIR / f"{name}.json"

    return _path


@pytest.fixture
def scenario_data(scenario_path):
    def _load(name: str) -> dict:
        return json.loads(scenario_path(name).read_text())

    return _load


@pytest.fixture(scope="session")
def journal_engine():
    """In-memory SQLite engine holding the journal schema"""
    engine = create_engine("sqlite:///:memory:", echo=False)

    # pysqlite's own transaction handling breaks SAVEPOINT; let SQLAlchemy
    # emit BEGIN itself so the per-test rollback below really isolates tests
    @event.listens_for(engine, "connect")
    def _disable_pysqlite_begin(dbapi_connection, connection_record):
        dbapi_connection.isolation_level = None

    @event.listens_for(engine, "begin")
    def _emit_begin(conn):
        conn.exec_driver_sql("BEGIN")

    Base.metadata.create_all(engine)
    yield engine
    Base.metadata.drop_all(engine)
    engine.dispose()


@pytest.fixture(scope="function")
def journal_db(journal_engine):
    """
    Journal session with automatic rollback
    Each test uses its own transaction which is rolled back
    """
    connection = journal_engine.connect()
    transaction = connection.begin()
    SessionClass = sessionmaker(bind=connection, join_transaction_mode="create_savepoint")
    session = SessionClass()

    try:
        yield session
    finally:
        session.close()
        transaction.rollback()
        connection.close()
