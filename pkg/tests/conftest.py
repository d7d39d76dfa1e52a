"""Shared fixtures: the frozen registry and the incumbent snapshot store."""

from __future__ import annotations

import pytest
from hypothesis import settings

import fixture_tables as tables
from hubtrends.registry import Registry
from hubtrends.store import InMemoryStore

settings.register_profile("suite", deadline=None, max_examples=100)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def registry_path(tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("registry") / "registry.csv"
    path.write_text(tables.registry_csv_text(), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="session")
def registry(registry_path) -> Registry:
    loaded, report = Registry.load(registry_path)
    assert report.ok, [str(issue) for issue in report.errors]
    return loaded


@pytest.fixture()
def incumbent_store() -> InMemoryStore:
    """Snapshot store holding every incumbent's growth path to its lifetime total."""
    store = InMemoryStore()
    for model_id, lifetime in tables.incumbent_lifetimes().items():
        store.add_series(tables.lifetime_series(model_id, float(lifetime)))
    return store
