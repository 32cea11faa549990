"""
lowest-load (LL) windows, their correctness and the three-week predictability rule
"""
import datetime as dt
import logging
import typing

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from classify.accuracy import TOLERANCE, bucket_ratio, is_accurate_ratio
from exception import EmptyWindowError, InsufficientHistoryError, NotEvaluableError, UndefinedRatioError
from forecast.forecasters import forecast
from lowload.metrics import day_error_metrics
from schemas import (
    DEFAULT_BOUND,
    BackupDuration,
    ErrorBound,
    ForecasterSpec,
    PredictabilityRecord,
    SLOTS_PER_DAY,
    Window,
)
from telemetry.series import EVALUABLE_COVERAGE, DaySlice, LoadSeries, coverage, slice_day

logger = logging.getLogger(__name__)

PREDICTABILITY_DAYS = 21


class WindowVerdict(typing.NamedTuple):
    correct: bool
    predicted_window: Window
    true_window: Window
    gap: float


class WindowAccuracy(typing.NamedTuple):
    accurate: bool
    ratio: float


def check_evaluable(day: DaySlice, threshold: float = EVALUABLE_COVERAGE) -> None:
    covered = coverage(day)
    if covered < threshold - TOLERANCE:
        raise NotEvaluableError(
            f"{day.server_id} on {day.day}: coverage {covered:.3f} below {threshold}", [day.day])


def window_means(slots: np.ndarray, length: int) -> np.ndarray:
    """
    Mean of present values for every window start 0..288 - length; +inf where a window is all absent.
    """
    view = sliding_window_view(slots, length)
    counts = np.count_nonzero(~np.isnan(view), axis=1)
    sums = np.nansum(view, axis=1)
    means = np.full(counts.shape, np.inf)
    np.divide(sums, counts, out=means, where=counts > 0)
    return means


def ll_window(day: DaySlice, b: BackupDuration, coverage_threshold: float = EVALUABLE_COVERAGE) -> Window:
    """
    The window of length ``b`` with the lowest mean load; the earliest one on ties.
    """
    check_evaluable(day, coverage_threshold)
    if b.slots > SLOTS_PER_DAY:
        raise ValueError(f"backup of {b.minutes} minutes does not fit in a day")
    start = int(np.argmin(window_means(day.slots, b.slots)))
    return Window(start_slot=start, length_slots=b.slots)


def window_avg(day: DaySlice, w: Window) -> float:
    values = day.window_values(w)
    present = values[~np.isnan(values)]
    if not present.size:
        raise EmptyWindowError(f"{day.server_id} on {day.day}: no samples within {w}")
    return float(present.sum() / present.size)


def ll_window_correct(
        predicted_day: DaySlice,
        actual_day: DaySlice,
        b: BackupDuration,
        bound: ErrorBound = DEFAULT_BOUND,
        coverage_threshold: float = EVALUABLE_COVERAGE,
) -> WindowVerdict:
    """
    The predicted window is correct when the true load in it exceeds the true LL window's by at most ``bound.over``.
    """
    predicted_window = ll_window(predicted_day, b, coverage_threshold)
    true_window = ll_window(actual_day, b, coverage_threshold)
    try:
        gap = window_avg(actual_day, predicted_window) - window_avg(actual_day, true_window)
    except EmptyWindowError as e:
        raise NotEvaluableError(str(e), [actual_day.day]) from e
    return WindowVerdict(gap <= bound.over + TOLERANCE, predicted_window, true_window, gap)


def load_accurate_in_window(
        predicted_day: DaySlice,
        actual_day: DaySlice,
        w: Window,
        bound: ErrorBound = DEFAULT_BOUND,
) -> WindowAccuracy:
    ratio = bucket_ratio(predicted_day, actual_day, bound, window=w)
    return WindowAccuracy(is_accurate_ratio(ratio), ratio)


def evaluate_server_day(
        predicted_day: DaySlice,
        actual_day: DaySlice,
        b: BackupDuration,
        bound: ErrorBound = DEFAULT_BOUND,
        coverage_threshold: float = EVALUABLE_COVERAGE,
) -> PredictabilityRecord:
    server_id, day = actual_day.server_id, actual_day.day
    try:
        check_evaluable(predicted_day, coverage_threshold)
        check_evaluable(actual_day, coverage_threshold)
        verdict = ll_window_correct(predicted_day, actual_day, b, bound, coverage_threshold)
        accuracy = load_accurate_in_window(predicted_day, actual_day, verdict.predicted_window, bound)
    except (NotEvaluableError, UndefinedRatioError) as e:
        return PredictabilityRecord(server_id=server_id, day=day, evaluable=False, reason=str(e))

    return PredictabilityRecord(
        server_id=server_id,
        day=day,
        ll_window_correct=verdict.correct,
        load_accurate=accuracy.accurate,
        predicted_window=verdict.predicted_window,
        true_window=verdict.true_window,
        bucket_ratio_in_window=round(accuracy.ratio, 6),
        window_gap=round(verdict.gap, 6),
        error_metrics=day_error_metrics(predicted_day, actual_day),
    )


def is_predictable(
        records: typing.Iterable[PredictabilityRecord],
        as_of: typing.Optional[dt.date] = None,
        span_days: int = PREDICTABILITY_DAYS,
) -> bool:
    """
    Predictable iff there is one record for each of the ``span_days`` days ending at ``as_of``
    (the latest record day by default) and each of them is evaluable with both flags set.
    """
    records = list(records)
    if not records:
        return False
    as_of = as_of or max(r.day for r in records)
    first = as_of - dt.timedelta(days=span_days - 1)
    span = dict()
    for record in records:
        if first <= record.day <= as_of:
            if record.day in span:
                raise ValueError(f"{record.server_id}: more than one record for {record.day}")
            span[record.day] = record
    return len(span) == span_days and all(r.passed for r in span.values())


def evaluate_history(
        series: LoadSeries,
        spec: ForecasterSpec,
        backup_day: dt.date,
        b: BackupDuration,
        bound: ErrorBound = DEFAULT_BOUND,
        coverage_threshold: float = EVALUABLE_COVERAGE,
        span_days: int = PREDICTABILITY_DAYS,
) -> typing.List[PredictabilityRecord]:
    """
    Forecasts and evaluates each of the ``span_days`` days before ``backup_day`` on which the server existed.
    """
    if not len(series):
        return []
    records = list()
    for offset in range(span_days, 0, -1):
        day = backup_day - dt.timedelta(days=offset)
        if day < series.first_day:
            continue
        try:
            predicted = forecast(spec, series, day).predicted
        except InsufficientHistoryError as e:
            records.append(PredictabilityRecord(server_id=series.server_id, day=day, evaluable=False, reason=str(e)))
            continue
        records.append(evaluate_server_day(predicted, slice_day(series, day), b, bound, coverage_threshold))
    return records
