"""
bucket ratio: share of predicted points inside the asymmetric error bound of the truth
"""
import typing

import numpy as np

from exception import UndefinedRatioError
from schemas import DEFAULT_BOUND, ErrorBound, Window
from telemetry.series import DaySlice

# absolute slack on bound edges and on the accuracy threshold
TOLERANCE = 1e-9
ACCURACY_THRESHOLD = 90.0


def in_bound(deviation: np.ndarray, bound: ErrorBound = DEFAULT_BOUND) -> np.ndarray:
    """deviation = predicted - actual; both edges inclusive"""
    return (deviation >= bound.under - TOLERANCE) & (deviation <= bound.over + TOLERANCE)


def ratio_rows(predicted: np.ndarray, actual: np.ndarray, bound: ErrorBound = DEFAULT_BOUND) -> np.ndarray:
    """
    Bucket ratio per row of two equally shaped (rows x slots) grids; NaN where a row has no co-present slot.
    """
    predicted, actual = np.atleast_2d(predicted), np.atleast_2d(actual)
    both = ~np.isnan(predicted) & ~np.isnan(actual)
    with np.errstate(invalid='ignore'):
        hits = in_bound(predicted - actual, bound) & both
    counts = both.sum(axis=1)
    ratios = np.full(counts.shape, np.nan)
    np.divide(100.0 * hits.sum(axis=1), counts, out=ratios, where=counts > 0)
    return ratios


def is_accurate_ratio(ratio: float) -> bool:
    return bool(ratio >= ACCURACY_THRESHOLD - TOLERANCE)


def bucket_ratio(
        predicted: DaySlice,
        actual: DaySlice,
        bound: ErrorBound = DEFAULT_BOUND,
        window: typing.Optional[Window] = None,
) -> float:
    predicted_slots, actual_slots = predicted.slots, actual.slots
    if window is not None:
        predicted_slots, actual_slots = predicted.window_values(window), actual.window_values(window)

    ratio = ratio_rows(predicted_slots, actual_slots, bound)[0]
    if np.isnan(ratio):
        raise UndefinedRatioError(
            f"no co-present slots between prediction and truth of {actual.server_id} on {actual.day}"
            + (f" within {window}" if window is not None else ""))
    return float(ratio)


def is_accurate(predicted: DaySlice, actual: DaySlice, bound: ErrorBound = DEFAULT_BOUND) -> bool:
    return is_accurate_ratio(bucket_ratio(predicted, actual, bound))
