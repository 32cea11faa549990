"""
summary of a completed run: accuracy percentages, class distribution and, given actuals, the backup impact
"""
import datetime as dt
import json
import logging
import pathlib
import typing

from tabulate import tabulate

from exception import RunNotFoundError
from lowload.windows import window_avg
from pipeline.runner import LATEST, MANIFEST
from scheduler.impact import BUSY_THRESHOLD, impact_report, render_impact
from schemas import (
    BackupSchedule,
    BackupSource,
    ErrorBound,
    RunManifest,
    SLOT_MINUTES,
    ServerClass,
    Window,
    day_start_minute,
)
from telemetry.series import DaySlice, parse_telemetry, slice_day

logger = logging.getLogger(__name__)


def _read_jsonl(path: pathlib.Path) -> typing.List[dict]:
    with open(path, encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


def resolve_run(results_dir, run_id: typing.Optional[str] = None) -> pathlib.Path:
    results_dir = pathlib.Path(results_dir)
    if run_id is None:
        latest = results_dir / LATEST
        if not latest.exists():
            raise RunNotFoundError(f"no run recorded in {results_dir}")
        run_id = latest.read_text(encoding='utf-8').strip()
    run_dir = results_dir / run_id
    if not (run_dir / MANIFEST).exists():
        raise RunNotFoundError(f"run {run_id} not found in {results_dir}")
    manifest = RunManifest.parse_file(run_dir / MANIFEST)
    if manifest.exit_code != 0 or not (run_dir / 'metrics.json').exists():
        raise RunNotFoundError(f"run {run_id} did not complete: {'; '.join(manifest.failures) or 'no metrics'}")
    return run_dir


def _schedules(run_dir: pathlib.Path) -> typing.List[BackupSchedule]:
    predicted = {row['server_id']: row for row in _read_jsonl(run_dir / 'forecasts.jsonl')}
    schedules = list()
    for row in _read_jsonl(run_dir / 'schedules.jsonl'):
        day = dt.date.fromisoformat(row['backup_day'])
        offset = row['start_minute_utc'] - day_start_minute(day)
        window = Window(start_slot=offset // SLOT_MINUTES, length_slots=row['duration_min'] // SLOT_MINUTES)
        expected = None
        if row['source'] == BackupSource.PREDICTED.value:
            forecast = predicted[row['server_id']]
            expected = window_avg(DaySlice.from_values(row['server_id'], day, forecast['predicted']), window)
        schedules.append(BackupSchedule(
            server_id=row['server_id'],
            backup_day=day,
            window=window,
            source=BackupSource(row['source']),
            expected_avg_load=expected,
        ))
    return schedules


def _defaults(run_dir: pathlib.Path) -> typing.Dict[str, Window]:
    return {
        row['server_id']: Window(start_slot=row['default_start_slot'], length_slots=row['default_length_slots'])
        for row in _read_jsonl(run_dir / 'due.jsonl')
    }


def _classes(run_dir: pathlib.Path) -> typing.Dict[str, typing.Optional[ServerClass]]:
    return {
        row['server_id']: ServerClass(row['class']) if row.get('class') else None
        for row in _read_jsonl(run_dir / 'classes.jsonl')
    }


def render_accuracy(metrics: dict) -> str:
    overall = metrics['overall']
    accuracy = tabulate(
        [
            ('correctly chosen LL windows %', overall['pct_windows_correct']),
            ('accurate in-window load %', overall['pct_windows_accurate']),
            ('predictable long-lived servers %', overall['pct_predictable']),
            ('mean NRMSE', overall.get('mean_nrmse')),
            ('MASE', overall.get('mase')),
        ],
        headers=('metric', 'value'),
        floatfmt='.2f',
    )
    total = sum(metrics['class_distribution'].values()) or 1
    classes = tabulate(
        [
            (name, n, 100.0 * n / total,
             metrics['by_class'][name]['pct_windows_correct'], metrics['by_class'][name]['pct_windows_accurate'])
            for name, n in metrics['class_distribution'].items()
        ],
        headers=('class', 'servers', 'share %', 'windows correct %', 'windows accurate %'),
        floatfmt='.2f',
    )
    return f'{accuracy}\n\n{classes}'


def report(results_dir, actuals_path=None, run_id: typing.Optional[str] = None,
           busy_threshold: float = BUSY_THRESHOLD) -> dict:
    """
    Prints and writes ``report.json`` next to the run's artifacts; returns its content.
    """
    run_dir = resolve_run(results_dir, run_id)
    with open(run_dir / 'metrics.json', encoding='utf-8') as f:
        metrics = json.load(f)

    summary = {
        'run_id': run_dir.name,
        'accuracy': metrics['overall'],
        'by_class': metrics['by_class'],
        'class_distribution': metrics['class_distribution'],
        'impact': None,
    }
    text = render_accuracy(metrics)

    if actuals_path is not None:
        schedules = _schedules(run_dir)
        actuals = {s.server_id: s for s in parse_telemetry(actuals_path)}
        backup_days = {s.server_id: s.backup_day for s in schedules}
        slices = {
            server_id: slice_day(series, backup_days[server_id])
            for server_id, series in actuals.items() if server_id in backup_days
        }
        impact = impact_report(
            schedules, slices, _defaults(run_dir), busy_threshold,
            ErrorBound.parse(metrics['bound']), _classes(run_dir),
        )
        summary['impact'] = json.loads(impact.json())
        text = f'{text}\n\n{render_impact(impact)}'

    with open(run_dir / 'report.json', 'w', encoding='utf-8') as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write('\n')
    print(text)
    logger.info(f'report of {run_dir.name} written to {run_dir / "report.json"}')
    return summary
