"""
next-day backup scheduling: predicted LL window for predictable servers, default window otherwise
"""
import datetime as dt
import logging
import typing

from exception import NotEvaluableError, SchedulingError
from forecast.forecasters import ForecastResult
from lowload.windows import is_predictable, ll_window, window_avg
from schemas import (
    BackupDuration,
    BackupSchedule,
    BackupSource,
    DueEntry,
    FleetDueList,
    PredictabilityRecord,
    SchedulingFailure,
    Window,
)
from telemetry.series import EVALUABLE_COVERAGE, LoadSeries

logger = logging.getLogger(__name__)


class ScheduleOutcome(typing.NamedTuple):
    schedules: typing.List[BackupSchedule]
    failures: typing.List[SchedulingFailure]


def build_due_list(
        series: typing.Iterable[LoadSeries],
        backup_minutes: int = 60,
) -> typing.Tuple[FleetDueList, typing.Dict[str, Window]]:
    """
    Every server is due on the UTC day its default backup starts; returns the due list and default windows.
    """
    duration = BackupDuration(minutes=backup_minutes)
    entries, defaults = dict(), dict()
    for s in series:
        if s.server_id in entries:
            raise ValueError(f"server {s.server_id} is listed twice")
        entries[s.server_id] = DueEntry(backup_day=s.backup_day, duration=duration)
        defaults[s.server_id] = s.default_window
    return FleetDueList(entries=entries), defaults


def schedule_server(
        server_id: str,
        entry: DueEntry,
        forecast: typing.Optional[ForecastResult],
        records: typing.Sequence[PredictabilityRecord],
        default: typing.Optional[Window],
        coverage_threshold: float = EVALUABLE_COVERAGE,
) -> BackupSchedule:
    as_of = entry.backup_day - dt.timedelta(days=1)
    if forecast is not None and forecast.target_day == entry.backup_day and is_predictable(records, as_of):
        try:
            window = ll_window(forecast.predicted, entry.duration, coverage_threshold)
            return BackupSchedule(
                server_id=server_id,
                backup_day=entry.backup_day,
                window=window,
                source=BackupSource.PREDICTED,
                expected_avg_load=round(window_avg(forecast.predicted, window), 6),
            )
        except NotEvaluableError as e:
            logger.debug(f'{server_id}: falling back to the default window, {e}')

    if default is None:
        raise SchedulingError(server_id, "neither a usable forecast nor a default window")
    return BackupSchedule(server_id=server_id, backup_day=entry.backup_day, window=default, source=BackupSource.DEFAULT)


def schedule_backups(
        due: FleetDueList,
        forecasts: typing.Mapping[str, ForecastResult],
        history: typing.Mapping[str, typing.Sequence[PredictabilityRecord]],
        defaults: typing.Mapping[str, Window],
        coverage_threshold: float = EVALUABLE_COVERAGE,
) -> ScheduleOutcome:
    """
    One schedule or one failure per due server, both sorted by server_id.
    """
    schedules, failures = list(), list()
    for server_id, entry in due:
        try:
            schedules.append(schedule_server(
                server_id, entry, forecasts.get(server_id), history.get(server_id, ()),
                defaults.get(server_id), coverage_threshold,
            ))
        except SchedulingError as e:
            logger.warning(str(e))
            failures.append(SchedulingFailure(server_id=server_id, reason=e.reason))
    return ScheduleOutcome(schedules, failures)
