import datetime as dt
import pathlib

import numpy as np
import pytest

from schemas import FleetConfig, SLOTS_PER_DAY, ServerClass, day_start_minute
from telemetry.series import DaySlice, LoadSeries

# a Monday
MONDAY = dt.date(2021, 3, 1)


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help="run region-scale tests")


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: region-scale run, needs --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow', default=False):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope='session')
def resources():
    return pathlib.Path(__file__).parent.parent / 'resources'


@pytest.fixture
def monday():
    return MONDAY


@pytest.fixture
def make_series():
    """
    Builds a series from a (days x 288) grid starting at ``first_day``;
    the default backup window sits on the day after the grid.
    """
    def make(matrix, server_id='s1', first_day=MONDAY, backup_slot=0, backup_minutes=60):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        backup_day = first_day + dt.timedelta(days=matrix.shape[0])
        start = day_start_minute(backup_day) + backup_slot * 5
        return LoadSeries.from_day_matrix(server_id, first_day, matrix, start, start + backup_minutes)

    return make


@pytest.fixture
def make_slice():
    def make(values, server_id='s1', day=MONDAY):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 0:
            values = np.full(SLOTS_PER_DAY, float(values))
        return DaySlice(server_id, day, values)

    return make


@pytest.fixture
def valley_day():
    """a day at 60 with a 40-point deep valley over slots 100..111 (08:20 to 09:20)"""
    values = np.full(SLOTS_PER_DAY, 60.0)
    values[100:112] = 20.0
    return values


@pytest.fixture
def fleet_config():
    def make(mix, server_count=20, **kwargs):
        return FleetConfig(
            server_count=server_count,
            class_mix={ServerClass(k): v for k, v in mix.items()},
            **kwargs,
        )

    return make
