"""
next-day load forecasters: persistent variants, previous-week average and a seasonal naive baseline
"""
import abc
import datetime as dt
import logging
import typing

import numpy as np

from exception import InsufficientHistoryError
from schemas import ForecasterKind, ForecasterSpec, ServerClass, SLOTS_PER_DAY
from telemetry.series import DaySlice, LoadSeries

logger = logging.getLogger(__name__)

FORECASTERS: typing.Dict[str, typing.Type["Forecaster"]] = {}


def register_forecaster(kind: str):
    def wrapper(cls):
        if kind in FORECASTERS:
            raise ValueError(f"forecaster {kind!r} is already registered by {FORECASTERS[kind].__name__}")
        cls.kind = kind
        FORECASTERS[kind] = cls
        return cls

    return wrapper


def _slotwise_mean(rows: np.ndarray) -> np.ndarray:
    """mean over present values per slot; NaN where a slot is absent in every row"""
    counts = np.count_nonzero(~np.isnan(rows), axis=0)
    sums = np.nansum(rows, axis=0)
    result = np.full(rows.shape[1], np.nan)
    np.divide(sums, counts, out=result, where=counts > 0)
    return result


class Forecaster(abc.ABC):
    """
    A forecaster maps the days right before a target day onto the target's 288 slots.
    It gets a (days x 288) history grid whose last row is the day before the target.
    """
    kind: str = None

    def __init__(self, **parameters):
        self.parameters = parameters

    def __repr__(self):
        return '<%s %s parameters=%r>' % (self.__class__.__name__, id(self), self.parameters)

    @classmethod
    def validate_parameters(cls, parameters: dict) -> dict:
        if parameters:
            raise ValueError(f"{cls.kind} takes no parameters, got {sorted(parameters)}")
        return parameters

    @abc.abstractmethod
    def required_lags(self) -> typing.List[int]:
        """days before the target that must carry samples"""

    def history_days(self, available_days: int) -> int:
        """how many days before the target to hand to ``predict``"""
        return max(self.required_lags())

    @abc.abstractmethod
    def predict(self, history: np.ndarray) -> np.ndarray:
        pass


@register_forecaster(ForecasterKind.PREV_DAY.value)
class PersistentPrevDay(Forecaster):
    def required_lags(self):
        return [1]

    def predict(self, history):
        return history[-1].copy()


@register_forecaster(ForecasterKind.PREV_EQUIV_DAY.value)
class PersistentPrevEquivDay(Forecaster):
    def required_lags(self):
        return [7]

    def predict(self, history):
        return history[-7].copy()


@register_forecaster(ForecasterKind.PREV_WEEK_AVERAGE.value)
class PrevWeekAverage(Forecaster):
    def required_lags(self):
        return list(range(1, 8))

    def predict(self, history):
        week = history[-7:]
        return np.full(SLOTS_PER_DAY, np.nanmean(week))


@register_forecaster(ForecasterKind.SEASONAL_NAIVE.value)
class SeasonalNaive(Forecaster):
    """
    Slot-wise mean of the days one, two, ... periods before the target,
    as far back as the history goes (or ``max_seasons`` periods).
    """

    @classmethod
    def validate_parameters(cls, parameters):
        unknown = set(parameters) - {'period_days', 'max_seasons'}
        if unknown:
            raise ValueError(f"{cls.kind}: unknown parameters {sorted(unknown)}")
        period = parameters.get('period_days', 7)
        if not isinstance(period, int) or isinstance(period, bool) or period < 1:
            raise ValueError(f"{cls.kind}: period_days must be an integer >= 1, got {period!r}")
        seasons = parameters.get('max_seasons')
        if seasons is not None and (not isinstance(seasons, int) or isinstance(seasons, bool) or seasons < 1):
            raise ValueError(f"{cls.kind}: max_seasons must be an integer >= 1, got {seasons!r}")
        result = {'period_days': period}
        if seasons is not None:
            result['max_seasons'] = seasons
        return result

    @property
    def period(self) -> int:
        return self.parameters['period_days']

    def required_lags(self):
        return [self.period]

    def history_days(self, available_days):
        seasons = max(available_days // self.period, 1)
        if self.parameters.get('max_seasons') is not None:
            seasons = min(seasons, self.parameters['max_seasons'])
        return seasons * self.period

    def predict(self, history):
        seasons = history[::-1][self.period - 1::self.period]
        return _slotwise_mean(seasons)


def build(spec: ForecasterSpec) -> Forecaster:
    return FORECASTERS[spec.kind](**spec.parameters)


def required_history(spec: ForecasterSpec) -> int:
    return max(build(spec).required_lags())


class ForecastResult:
    __slots__ = ('server_id', 'target_day', 'predicted', 'forecaster', 'history_span')

    def __init__(self, server_id: str, target_day: dt.date, predicted: DaySlice, forecaster: ForecasterSpec,
                 history_span: typing.Tuple[dt.date, dt.date]):
        if predicted.day != target_day:
            raise ValueError(f"prediction for {predicted.day} does not cover target day {target_day}")
        self.server_id = server_id
        self.target_day = target_day
        self.predicted = predicted
        self.forecaster = forecaster
        self.history_span = history_span

    def __repr__(self):
        return '<%s %s server_id=%r, target_day=%r, forecaster=%r>' % (
            self.__class__.__name__, id(self), self.server_id, self.target_day, self.forecaster.identity())

    def to_json(self) -> dict:
        return {
            'server_id': self.server_id,
            'target_day': self.target_day.isoformat(),
            'forecaster': self.forecaster.identity(),
            'history_start': self.history_span[0].isoformat(),
            'history_end': self.history_span[1].isoformat(),
            'predicted': self.predicted.to_list(),
        }


def forecast(spec: ForecasterSpec, series: LoadSeries, target_day: dt.date) -> ForecastResult:
    """
    Forecasts ``target_day`` from the samples strictly before it.
    """
    forecaster = build(spec)
    available = (target_day - series.first_day).days if len(series) else 0
    required = forecaster.required_lags()
    n_days = max(forecaster.history_days(max(available, 0)), max(required))
    first_day = target_day - dt.timedelta(days=n_days)

    history = series.day_matrix(first_day, n_days)
    sampled = ~np.all(np.isnan(history), axis=1)
    missing = sorted(target_day - dt.timedelta(days=lag) for lag in required if not sampled[n_days - lag])
    if missing:
        raise InsufficientHistoryError(
            f"{series.server_id}: {spec.identity()} for {target_day} lacks samples on "
            f"{', '.join(map(str, missing))}", missing)

    predicted = DaySlice(series.server_id, target_day, forecaster.predict(history))
    return ForecastResult(series.server_id, target_day, predicted, spec,
                          (first_day, target_day - dt.timedelta(days=1)))


CLASS_FORECASTERS = {
    ServerClass.STABLE: ForecasterKind.PREV_WEEK_AVERAGE,
    ServerClass.DAILY_PATTERN: ForecasterKind.PREV_DAY,
    ServerClass.WEEKLY_PATTERN: ForecasterKind.PREV_EQUIV_DAY,
    ServerClass.NO_PATTERN: ForecasterKind.SEASONAL_NAIVE,
    ServerClass.SHORT_LIVED: ForecasterKind.PREV_DAY,
}


def select_forecaster(server_class: ServerClass) -> ForecasterSpec:
    kind = CLASS_FORECASTERS[ServerClass(server_class)]
    parameters = {'period_days': 7} if kind == ForecasterKind.SEASONAL_NAIVE else {}
    return ForecasterSpec(kind=kind.value, parameters=parameters)
