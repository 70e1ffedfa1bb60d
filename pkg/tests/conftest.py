import pytest

from mixsweep import analysis, space, surrogate


@pytest.fixture(scope="session")
def all_setups():
    return space.enumerate_all()


@pytest.fixture(scope="session")
def surrogate_results(all_setups):
    """Noiseless default-fixture dataset over the full grid, ingested."""
    records = surrogate.generate_dataset(all_setups, surrogate.SurrogateParams())
    return analysis.ingest(records, all_setups)
