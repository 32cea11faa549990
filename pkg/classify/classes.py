"""
server taxonomy: short-lived, stable, daily pattern, weekly pattern, no pattern
"""
import datetime as dt
import enum
import logging
import typing

import numpy as np

from classify.accuracy import TOLERANCE, is_accurate_ratio, ratio_rows
from exception import NotEvaluableError
from schemas import (
    DEFAULT_BOUND,
    ClassificationResult,
    ErrorBound,
    ServerClass,
    SLOTS_PER_DAY,
    day_start_minute,
)
from telemetry.series import EVALUABLE_COVERAGE, LoadSeries

logger = logging.getLogger(__name__)

LONG_LIVED_DAYS = 21
STABILITY_DAYS = 7
STDDEV_RECENT_DAYS = 3


class Lifespan(str, enum.Enum):
    SHORT_LIVED = "ShortLived"
    LONG_LIVED = "LongLived"


class Interval(typing.NamedTuple):
    """consecutive days, both ends inclusive"""
    start: dt.date
    end: dt.date

    @classmethod
    def ending(cls, as_of: dt.date, days: int = STABILITY_DAYS) -> "Interval":
        return cls(as_of - dt.timedelta(days=days - 1), as_of)

    @property
    def days(self) -> int:
        return (self.end - self.start).days + 1


def lifespan_class(series: LoadSeries, as_of: dt.date) -> Lifespan:
    if not len(series):
        raise ValueError(f"{series.server_id}: lifespan of a server without samples")
    if (as_of - series.first_day).days > LONG_LIVED_DAYS:
        return Lifespan.LONG_LIVED
    return Lifespan.SHORT_LIVED


def _evaluable_days(series: LoadSeries, first_day: dt.date, n_days: int, coverage: float) -> np.ndarray:
    matrix = series.day_matrix(first_day, n_days)
    covered = np.count_nonzero(~np.isnan(matrix), axis=1) / SLOTS_PER_DAY
    short = np.flatnonzero(covered < coverage - TOLERANCE)
    if short.size:
        days = [first_day + dt.timedelta(days=int(i)) for i in short]
        raise NotEvaluableError(
            f"{series.server_id}: days below {coverage:.0%} coverage: {', '.join(map(str, days))}", days)
    return matrix


def stable_ratios(series, interval: Interval, bound=DEFAULT_BOUND, coverage=EVALUABLE_COVERAGE) -> np.ndarray:
    """per-day bucket ratios of the interval mean predicting each interval day"""
    matrix = _evaluable_days(series, interval.start, interval.days, coverage)
    mean = np.nanmean(matrix)
    return ratio_rows(np.full_like(matrix, mean), matrix, bound)


def daily_ratios(series, interval: Interval, bound=DEFAULT_BOUND, coverage=EVALUABLE_COVERAGE) -> np.ndarray:
    """per-day bucket ratios of day d - 1 predicting day d"""
    matrix = _evaluable_days(series, interval.start - dt.timedelta(days=1), interval.days + 1, coverage)
    return ratio_rows(matrix[:-1], matrix[1:], bound)


def weekly_ratios(series, interval: Interval, bound=DEFAULT_BOUND, coverage=EVALUABLE_COVERAGE) -> np.ndarray:
    """per-day bucket ratios of day d - 7 predicting day d"""
    matrix = _evaluable_days(series, interval.start - dt.timedelta(days=7), interval.days + 7, coverage)
    return ratio_rows(matrix[:-7], matrix[7:], bound)


def _all_accurate(ratios: np.ndarray) -> bool:
    return all(is_accurate_ratio(r) for r in ratios)


def is_stable(series: LoadSeries, interval: Interval, bound: ErrorBound = DEFAULT_BOUND,
              coverage: float = EVALUABLE_COVERAGE) -> bool:
    return _all_accurate(stable_ratios(series, interval, bound, coverage))


def has_daily_pattern(series: LoadSeries, interval: Interval, bound: ErrorBound = DEFAULT_BOUND,
                      coverage: float = EVALUABLE_COVERAGE) -> bool:
    return _all_accurate(daily_ratios(series, interval, bound, coverage))


def has_weekly_pattern(series: LoadSeries, interval: Interval, bound: ErrorBound = DEFAULT_BOUND,
                       coverage: float = EVALUABLE_COVERAGE) -> bool:
    # weekly needs every day from d - 7 on, which covers the daily clause's d - 1 as well
    weekly = weekly_ratios(series, interval, bound, coverage)
    if has_daily_pattern(series, interval, bound, coverage):
        return False
    return _all_accurate(weekly)


def _stats(ratios: np.ndarray) -> typing.Dict[str, float]:
    return {'min': round(float(np.min(ratios)), 6), 'mean': round(float(np.mean(ratios)), 6)}


def classify_server(
        series: LoadSeries,
        interval: Interval,
        bound: ErrorBound = DEFAULT_BOUND,
        coverage: float = EVALUABLE_COVERAGE,
) -> ClassificationResult:
    """
    First match wins: ShortLived, Stable, DailyPattern, WeeklyPattern, NoPattern.
    Days under the coverage threshold leave the server unclassifiable for the interval.
    """
    result = dict(server_id=series.server_id, interval_start=interval.start, interval_end=interval.end)
    if not len(series):
        return ClassificationResult(**result, unclassifiable="no samples")

    if lifespan_class(series, interval.end) == Lifespan.SHORT_LIVED:
        return ClassificationResult(**result, server_class=ServerClass.SHORT_LIVED)

    stats = dict()
    checks = (
        (ServerClass.STABLE, 'stable', stable_ratios),
        (ServerClass.DAILY_PATTERN, 'daily', daily_ratios),
        (ServerClass.WEEKLY_PATTERN, 'weekly', weekly_ratios),
    )
    server_class = ServerClass.NO_PATTERN
    try:
        for candidate, name, ratios_of in checks:
            ratios = ratios_of(series, interval, bound, coverage)
            stats[name] = _stats(ratios)
            if _all_accurate(ratios):
                server_class = candidate
                break
    except NotEvaluableError as e:
        logger.debug(f'{series.server_id} unclassifiable: {e}')
        return ClassificationResult(**result, unclassifiable=str(e), bucket_ratio_stats=stats)

    return ClassificationResult(**result, server_class=server_class, bucket_ratio_stats=stats)


def stable_by_stddev(series: LoadSeries, as_of: dt.date, variation: str = "range") -> bool:
    """
    Stable iff the variation of the last three days ending at ``as_of`` does not exceed one
    population standard deviation of every sample supplied up to the end of ``as_of``.

    ``variation`` is ``range`` (max - min) or ``step`` (largest change between consecutive samples).
    """
    if variation not in ("range", "step"):
        raise ValueError(f"unknown variation {variation!r}, expected 'range' or 'step'")

    recent_start = as_of - dt.timedelta(days=STDDEV_RECENT_DAYS - 1)
    end = day_start_minute(as_of + dt.timedelta(days=1))
    matrix = series.day_matrix(recent_start, STDDEV_RECENT_DAYS)
    empty = [recent_start + dt.timedelta(days=i) for i in range(STDDEV_RECENT_DAYS)
             if np.all(np.isnan(matrix[i]))]
    if empty:
        raise NotEvaluableError(
            f"{series.server_id}: needs samples on each of the {STDDEV_RECENT_DAYS} days ending {as_of}", empty)

    period = series.cpu[:np.searchsorted(series.timestamps, end)]
    recent = matrix[~np.isnan(matrix)]
    if variation == "range":
        spread = float(recent.max() - recent.min())
    else:
        spread = float(np.abs(np.diff(recent)).max()) if recent.size > 1 else 0.0
    return spread <= float(np.std(period)) + TOLERANCE
