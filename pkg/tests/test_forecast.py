import datetime as dt

import numpy as np
import pytest

from exception import InsufficientHistoryError
from forecast.forecasters import (
    FORECASTERS,
    Forecaster,
    forecast,
    register_forecaster,
    required_history,
    select_forecaster,
)
from schemas import ForecasterKind, ForecasterSpec, SLOTS_PER_DAY, ServerClass
from telemetry.series import LoadSeries


def spec(kind, **parameters):
    return ForecasterSpec(kind=kind.value, parameters=parameters)


def day_rows(n_days):
    """day i is a flat line at i + 1"""
    return np.repeat(np.arange(1.0, n_days + 1)[:, None], SLOTS_PER_DAY, axis=1)


def target(monday, n_days):
    return monday + dt.timedelta(days=n_days)


def test_prev_day_copies_yesterday(make_series, monday):
    matrix = np.random.default_rng(0).uniform(0, 100, (3, SLOTS_PER_DAY))
    series = make_series(matrix)

    result = forecast(spec(ForecasterKind.PREV_DAY), series, target(monday, 3))

    assert np.array_equal(result.predicted.slots, matrix[-1])
    assert result.predicted.day == target(monday, 3)
    assert result.history_span == (monday + dt.timedelta(days=2), monday + dt.timedelta(days=2))


def test_prev_equiv_day_copies_last_week(make_series, monday):
    series = make_series(day_rows(14))

    result = forecast(spec(ForecasterKind.PREV_EQUIV_DAY), series, target(monday, 14))

    assert np.all(result.predicted.slots == 8.0)


def test_prev_week_average(make_series, monday):
    series = make_series(day_rows(10))

    result = forecast(spec(ForecasterKind.PREV_WEEK_AVERAGE), series, target(monday, 10))

    # days 4..10
    assert np.allclose(result.predicted.slots, 7.0)


def test_prev_week_average_skips_absent_slots(make_series, monday):
    matrix = day_rows(7)
    matrix[0, :] = np.nan
    matrix[0, 0] = 1.0

    result = forecast(spec(ForecasterKind.PREV_WEEK_AVERAGE), make_series(matrix), target(monday, 7))

    present = matrix[~np.isnan(matrix)]
    assert np.allclose(result.predicted.slots, present.mean())


def test_seasonal_naive_averages_whole_weeks(make_series, monday):
    series = make_series(day_rows(22))

    result = forecast(spec(ForecasterKind.SEASONAL_NAIVE, period_days=7), series, target(monday, 22))

    # target is day 23; same weekday on days 16, 9 and 2
    assert np.allclose(result.predicted.slots, (16 + 9 + 2) / 3)
    assert result.history_span[0] == target(monday, 22) - dt.timedelta(days=21)


def test_seasonal_naive_max_seasons(make_series, monday):
    series = make_series(day_rows(22))

    result = forecast(spec(ForecasterKind.SEASONAL_NAIVE, period_days=7, max_seasons=2), series, target(monday, 22))

    assert np.allclose(result.predicted.slots, (16 + 9) / 2)


def test_seasonal_naive_with_unit_period_is_a_running_mean(make_series, monday):
    series = make_series(day_rows(4))

    result = forecast(spec(ForecasterKind.SEASONAL_NAIVE, period_days=1), series, target(monday, 4))

    assert np.allclose(result.predicted.slots, 2.5)


def test_seasonal_naive_slotwise_gaps(make_series, monday):
    matrix = day_rows(14)
    matrix[0, :10] = np.nan
    matrix[7, 5:10] = np.nan

    result = forecast(spec(ForecasterKind.SEASONAL_NAIVE), make_series(matrix), target(monday, 14))

    slots = result.predicted.slots
    assert np.allclose(slots[:5], 8.0)
    assert np.all(np.isnan(slots[5:10]))
    assert np.allclose(slots[10:], 4.5)


@pytest.mark.parametrize('kind, parameters, days', [
    (ForecasterKind.PREV_DAY, {}, 1),
    (ForecasterKind.PREV_EQUIV_DAY, {}, 7),
    (ForecasterKind.PREV_WEEK_AVERAGE, {}, 7),
    (ForecasterKind.SEASONAL_NAIVE, {'period_days': 7}, 7),
    (ForecasterKind.SEASONAL_NAIVE, {'period_days': 3}, 3),
])
def test_required_history(kind, parameters, days):
    assert required_history(spec(kind, **parameters)) == days


@pytest.mark.parametrize('kind', list(ForecasterKind))
def test_short_history_fails(make_series, monday, kind):
    series = make_series(day_rows(3))
    parameters = {'period_days': 7} if kind == ForecasterKind.SEASONAL_NAIVE else {}
    wanted = spec(kind, **parameters)

    if required_history(wanted) <= 3:
        forecast(wanted, series, target(monday, 3))
        return
    with pytest.raises(InsufficientHistoryError) as e:
        forecast(wanted, series, target(monday, 3))
    assert e.value.missing_days
    assert all(day < monday for day in e.value.missing_days)


def test_missing_days_named(make_series, monday):
    matrix = day_rows(7)
    matrix[3] = np.nan
    series = make_series(matrix)

    with pytest.raises(InsufficientHistoryError) as e:
        forecast(spec(ForecasterKind.PREV_WEEK_AVERAGE), series, target(monday, 7))

    assert e.value.missing_days == (monday + dt.timedelta(days=3),)


def test_empty_series_fails(monday):
    series = LoadSeries('s1', [], [], 0, 60)

    with pytest.raises(InsufficientHistoryError):
        forecast(spec(ForecasterKind.PREV_DAY), series, monday)


def test_no_lookahead(make_series, monday):
    rng = np.random.default_rng(21)
    matrix = rng.uniform(0, 100, (16, SLOTS_PER_DAY))
    changed = matrix.copy()
    changed[14:] = rng.uniform(0, 100, (2, SLOTS_PER_DAY))
    day = target(monday, 14)

    for kind in ForecasterKind:
        wanted = spec(kind)
        before = forecast(wanted, make_series(matrix), day)
        after = forecast(wanted, make_series(changed), day)
        assert np.array_equal(before.predicted.slots, after.predicted.slots)


def test_forecast_json(make_series, monday):
    series = make_series(day_rows(14))

    payload = forecast(spec(ForecasterKind.SEASONAL_NAIVE, period_days=7), series, target(monday, 14)).to_json()

    assert payload['forecaster'] == 'SeasonalNaive(period_days=7)'
    assert payload['target_day'] == '2021-03-15'
    assert len(payload['predicted']) == SLOTS_PER_DAY


@pytest.mark.parametrize('server_class, kind', [
    (ServerClass.STABLE, ForecasterKind.PREV_WEEK_AVERAGE),
    (ServerClass.DAILY_PATTERN, ForecasterKind.PREV_DAY),
    (ServerClass.WEEKLY_PATTERN, ForecasterKind.PREV_EQUIV_DAY),
    (ServerClass.NO_PATTERN, ForecasterKind.SEASONAL_NAIVE),
    (ServerClass.SHORT_LIVED, ForecasterKind.PREV_DAY),
])
def test_select_forecaster(server_class, kind):
    assert select_forecaster(server_class).kind == kind.value


def test_seasonal_naive_defaults_to_a_week():
    assert ForecasterSpec(kind='SeasonalNaive').parameters == {'period_days': 7}


@pytest.mark.parametrize('kind, parameters', [
    ('Oracle', {}),
    ('PersistentPrevDay', {'period_days': 1}),
    ('SeasonalNaive', {'period_days': 0}),
    ('SeasonalNaive', {'period_days': 2.5}),
    ('SeasonalNaive', {'max_seasons': 0}),
    ('SeasonalNaive', {'lag': 3}),
])
def test_bad_forecaster_specs(kind, parameters):
    with pytest.raises(ValueError):
        ForecasterSpec(kind=kind, parameters=parameters)


def test_registry_is_extensible(make_series, monday):
    @register_forecaster('Flat')
    class Flat(Forecaster):
        def required_lags(self):
            return [1]

        def predict(self, history):
            return np.full(SLOTS_PER_DAY, 42.0)

    try:
        result = forecast(ForecasterSpec(kind='Flat'), make_series(day_rows(2)), target(monday, 2))
        assert np.all(result.predicted.slots == 42.0)
        with pytest.raises(ValueError):
            register_forecaster('Flat')(Flat)
    finally:
        FORECASTERS.pop('Flat')
