"""
impact of the chosen backup windows measured on the true load of the backup day
"""
import logging
import typing

import numpy as np
from tabulate import tabulate

from exception import EmptyWindowError
from lowload.windows import window_avg
from schemas import (
    DEFAULT_BOUND,
    BackupSchedule,
    ErrorBound,
    ImpactReport,
    ImpactSummary,
    ServerClass,
    Window,
)
from telemetry.series import DaySlice

logger = logging.getLogger(__name__)

BUSY_THRESHOLD = 60.0
MOVED_AND_BETTER = 'moved_and_better'
DEFAULT_ALREADY_GOOD = 'default_already_good'
PREDICTED_WORSE = 'predicted_worse'
CATEGORIES = (MOVED_AND_BETTER, DEFAULT_ALREADY_GOOD, PREDICTED_WORSE)
PEAK_BANDS = tuple(f'{low}-{low + 10}' for low in range(0, 100, 10))


def categorize(default_avg: float, chosen_avg: float, moved: bool, bound: ErrorBound = DEFAULT_BOUND) -> str:
    if chosen_avg - default_avg > bound.over:
        return PREDICTED_WORSE
    if moved and default_avg - chosen_avg > bound.over:
        return MOVED_AND_BETTER
    return DEFAULT_ALREADY_GOOD


def _summary(categories: typing.List[str], excluded: int) -> ImpactSummary:
    n = len(categories)
    shares = {c: (round(categories.count(c) / n, 6) if n else 0.0) for c in CATEGORIES}
    return ImpactSummary(servers=n, excluded_missing_actuals=excluded, **shares)


def peak_load_distribution(slices: typing.Iterable[DaySlice]) -> typing.Dict[str, float]:
    """percentage of servers per 10-point band of their peak load"""
    peaks = [float(np.nanmax(s.slots)) for s in slices if s.present.any()]
    counts = dict.fromkeys(PEAK_BANDS, 0)
    for peak in peaks:
        counts[PEAK_BANDS[min(int(peak // 10), len(PEAK_BANDS) - 1)]] += 1
    return {band: (round(100.0 * n / len(peaks), 6) if peaks else 0.0) for band, n in counts.items()}


def impact_report(
        schedules: typing.Iterable[BackupSchedule],
        actual_next_day: typing.Mapping[str, DaySlice],
        defaults: typing.Mapping[str, Window],
        busy_threshold: float = BUSY_THRESHOLD,
        bound: ErrorBound = DEFAULT_BOUND,
        classes: typing.Optional[typing.Mapping[str, typing.Optional[ServerClass]]] = None,
) -> ImpactReport:
    """
    Compares the true load of the default and the chosen window of every scheduled server.
    Servers without actuals for their backup day are left out and counted.
    """
    classes = classes or {}
    overall, busy = list(), list()
    by_class = dict()
    excluded = 0
    excluded_by_class = dict()
    reported = list()

    for schedule in schedules:
        server_class = classes.get(schedule.server_id)
        class_key = server_class.value if server_class is not None else 'Unclassified'
        by_class.setdefault(class_key, [])
        excluded_by_class.setdefault(class_key, 0)

        actual = actual_next_day.get(schedule.server_id)
        default = defaults.get(schedule.server_id, schedule.window)
        if actual is None or actual.day != schedule.backup_day:
            excluded += 1
            excluded_by_class[class_key] += 1
            continue
        try:
            default_avg = window_avg(actual, default)
            chosen_avg = window_avg(actual, schedule.window)
        except EmptyWindowError as e:
            logger.debug(f'{schedule.server_id} left out of the impact report: {e}')
            excluded += 1
            excluded_by_class[class_key] += 1
            continue

        category = categorize(default_avg, chosen_avg, schedule.window != default, bound)
        overall.append(category)
        by_class[class_key].append(category)
        reported.append(actual)
        if float(np.nanmax(actual.slots)) > busy_threshold:
            busy.append(category)

    report = ImpactReport(
        busy_threshold=busy_threshold,
        overall=_summary(overall, excluded),
        # busy status is unknown without actuals
        busy=_summary(busy, 0),
        by_class={k: _summary(v, excluded_by_class[k]) for k, v in sorted(by_class.items())},
        peak_load_distribution=peak_load_distribution(reported),
    )
    logger.info(f'impact over {report.overall.servers} servers, {excluded} without actuals')
    return report


def render_impact(report: ImpactReport) -> str:
    rows = [('all', report.overall), (f'busy (peak > {report.busy_threshold:g}%)', report.busy)]
    rows.extend(report.by_class.items())
    table = tabulate(
        [
            (name, s.servers, 100 * s.moved_and_better, 100 * s.default_already_good, 100 * s.predicted_worse,
             s.excluded_missing_actuals)
            for name, s in rows
        ],
        headers=('servers', 'n', 'moved & better %', 'default good %', 'predicted worse %', 'no actuals'),
        floatfmt='.1f',
    )
    peaks = tabulate(
        [(band, share) for band, share in report.peak_load_distribution.items()],
        headers=('peak load band', 'servers %'),
        floatfmt='.1f',
    )
    return f'{table}\n\n{peaks}'
