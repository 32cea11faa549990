"""
forecast error metrics and fleet accuracy summaries
"""
import typing

import numpy as np

from exception import UndefinedMetricError
from schemas import AccuracySummary, ErrorMetrics, PredictabilityRecord
from telemetry.series import DaySlice


def _pair(forecast, actual, min_length: int) -> typing.Tuple[np.ndarray, np.ndarray]:
    forecast = np.asarray(forecast, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if forecast.shape != actual.shape or forecast.ndim != 1:
        raise ValueError(f"forecast and actual must be equally long sequences, got {forecast.shape} and {actual.shape}")
    if forecast.size < min_length:
        raise ValueError(f"need at least {min_length} values, got {forecast.size}")
    return forecast, actual


def error(forecast, actual) -> np.ndarray:
    forecast, actual = _pair(forecast, actual, 1)
    return forecast - actual


def mean_nrmse(forecast, actual) -> float:
    """root mean squared error over the mean of the truth"""
    e = error(forecast, actual)
    scale = float(np.mean(actual))
    if scale == 0.0:
        raise UndefinedMetricError("mean NRMSE is undefined for a zero-mean truth")
    return float(np.sqrt(np.mean(e ** 2)) / scale)


def mase(forecast, actual) -> float:
    """mean absolute error over the mean absolute one-step change of the truth"""
    forecast, actual = _pair(forecast, actual, 2)
    scale = float(np.mean(np.abs(np.diff(actual))))
    if scale == 0.0:
        raise UndefinedMetricError("MASE is undefined for a constant truth")
    return float(np.mean(np.abs(forecast - actual)) / scale)


def error_metrics(forecast, actual) -> ErrorMetrics:
    return ErrorMetrics(mean_nrmse=mean_nrmse(forecast, actual), mase=mase(forecast, actual))


def day_error_metrics(predicted: DaySlice, actual: DaySlice) -> typing.Optional[ErrorMetrics]:
    """
    Mean NRMSE and MASE over the slots present in both days, MASE scaled by steps between those slots;
    None when either metric is undefined for the day.
    """
    both = predicted.present & actual.present
    try:
        metrics = error_metrics(predicted.slots[both], actual.slots[both])
    except ValueError:
        return None
    return ErrorMetrics(mean_nrmse=round(metrics.mean_nrmse, 6), mase=round(metrics.mase, 6))


def _mean(values: typing.List[float]) -> typing.Optional[float]:
    return round(float(np.mean(values)), 6) if values else None


def _pct(part: int, whole: int) -> float:
    return round(100.0 * part / whole, 6) if whole else 0.0


def summarize_records(
        records: typing.Iterable[PredictabilityRecord],
        predictable: typing.Mapping[str, bool],
        long_lived: typing.Iterable[str],
) -> AccuracySummary:
    """
    Share of correctly chosen windows and of accurate in-window loads among evaluable records,
    and share of predictable servers among long-lived ones.
    Error metrics are averaged over the evaluable records that carry them.
    """
    evaluable = [r for r in records if r.evaluable]
    scored = [r.error_metrics for r in evaluable if r.error_metrics is not None]
    long_lived = set(long_lived)
    predictable_servers = sum(1 for server_id in long_lived if predictable.get(server_id, False))
    return AccuracySummary(
        pct_windows_correct=_pct(sum(r.ll_window_correct for r in evaluable), len(evaluable)),
        pct_windows_accurate=_pct(sum(r.load_accurate for r in evaluable), len(evaluable)),
        pct_predictable=_pct(predictable_servers, len(long_lived)),
        evaluable_records=len(evaluable),
        long_lived_servers=len(long_lived),
        predictable_servers=predictable_servers,
        mean_nrmse=_mean([m.mean_nrmse for m in scored]),
        mase=_mean([m.mase for m in scored]),
    )
