from pathlib import Path

import pytest

from ttlscout.fingerprints import builtin_set
from ttlscout.ingest import DeviceRecord

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fps():
    return builtin_set()


@pytest.fixture
def data_dir():
    return DATA_DIR


def make_record(
    address="203.0.113.1",
    matched_port=102,
    origin_query="6ES7",
    tags=(),
    org="",
    raw_banner="",
    all_ports=(),
    hardware_models=frozenset(),
):
    return DeviceRecord(
        address=address,
        matched_port=matched_port,
        origin_query=origin_query,
        tags=frozenset(tags),
        org=org,
        raw_banner=raw_banner,
        all_ports=frozenset(all_ports),
        hardware_models=hardware_models,
    )


@pytest.fixture
def record_factory():
    return make_record
