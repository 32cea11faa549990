"""
the weekly run: validate, parse, classify, forecast, evaluate, schedule and persist one region's telemetry
"""
import contextlib
import datetime as dt
import hashlib
import itertools as it
import json
import logging
import math
import pathlib
import typing

import more_itertools as mit
from joblib.parallel import Parallel, delayed

from classify.classes import Interval, Lifespan, classify_server, lifespan_class
from exception import InsufficientHistoryError, LowLoadException, StageError, ValidationFailedError
from forecast.forecasters import ForecastResult, forecast, select_forecaster
from lowload.metrics import summarize_records
from lowload.windows import evaluate_history, is_predictable
from schemas import (
    BackupDuration,
    BackupSource,
    ClassificationResult,
    ErrorBound,
    FleetDueList,
    ForecasterSpec,
    PipelineConfig,
    PredictabilityRecord,
    RunManifest,
    StageEntry,
    Verdict,
)
from scheduler.backups import build_due_list, schedule_backups
from telemetry.series import LoadSeries, parse_telemetry
from telemetry.validation import DEFAULT_SCHEMA, load_schema, validate

logger = logging.getLogger(__name__)

VERSION = '1.0.0'
AUTO_FORECASTER = 'auto'
LATEST = 'LATEST'
MANIFEST = 'manifest.json'
MIN_BATCH_SIZE = 1

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION_FAILURE = 2


def _now() -> dt.datetime:
    return dt.datetime.now(dt.timezone.utc)


def file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


def backend(parallelism: int) -> Parallel:
    if parallelism == 1:
        return Parallel(n_jobs=1, backend='sequential')
    return Parallel(n_jobs=parallelism, backend='loky')


def fan_out(function, items: typing.Sequence, parallelism: int, **kwargs) -> typing.List:
    """
    Runs ``function(batch, **kwargs)`` over batches of ``items`` on a bounded pool
    and concatenates the per-batch result lists in input order.
    """
    if not items:
        return []
    batch_size = max(int(math.ceil(len(items) / parallelism)), MIN_BATCH_SIZE)
    results = backend(parallelism)(
        delayed(function)(batch, **kwargs) for batch in mit.chunked(items, batch_size)
    )
    return list(it.chain.from_iterable(results))


def classify_batch(batch, bound: ErrorBound, coverage: float) -> typing.List[ClassificationResult]:
    return [
        classify_server(series, Interval.ending(backup_day - dt.timedelta(days=1)), bound, coverage)
        for series, backup_day in batch
    ]


def forecast_batch(batch) -> typing.List[typing.Tuple[str, typing.Optional[ForecastResult], typing.Optional[str]]]:
    result = list()
    for series, spec, target_day in batch:
        try:
            result.append((series.server_id, forecast(spec, series, target_day), None))
        except InsufficientHistoryError as e:
            result.append((series.server_id, None, str(e)))
    return result


def evaluate_batch(batch, b: BackupDuration, bound: ErrorBound, coverage: float):
    return [
        (series.server_id, evaluate_history(series, spec, backup_day, b, bound, coverage))
        for series, spec, backup_day in batch
    ]


class StageLog:
    def __init__(self):
        self.entries: typing.List[StageEntry] = []

    @contextlib.contextmanager
    def stage(self, name: str):
        counts = dict()
        started = _now()
        try:
            yield counts
        except Exception as e:
            self.entries.append(StageEntry(name=name, started_at=started, finished_at=_now(),
                                           status='failed', counts=counts, error=str(e)))
            if isinstance(e, StageError):
                raise
            raise StageError(name, str(e)) from e
        self.entries.append(StageEntry(name=name, started_at=started, finished_at=_now(),
                                       status='completed', counts=counts))
        logger.info(json.dumps({'stage': name, **counts}))


def _write_json(path: pathlib.Path, payload) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')


def _write_jsonl(path: pathlib.Path, rows: typing.Iterable[dict]) -> int:
    n = 0
    with open(path, 'w', encoding='utf-8') as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True))
            f.write('\n')
            n += 1
    return n


def _model_dict(model) -> dict:
    return json.loads(model.json(by_alias=True))


def run_id(config: PipelineConfig, digest: str) -> str:
    return f"{config.region}-{_now().strftime('%Y%m%dT%H%M%S%fZ')}-{digest[:12]}"


def forecaster_identity(config: PipelineConfig) -> str:
    if config.forecaster == AUTO_FORECASTER:
        return AUTO_FORECASTER
    return ForecasterSpec(kind=config.forecaster, parameters=config.forecaster_parameters).identity()


def _class_key(result: ClassificationResult) -> str:
    return result.server_class.value if result.classified else 'Unclassifiable'


def accuracy_metrics(
        classes: typing.Mapping[str, ClassificationResult],
        records: typing.Mapping[str, typing.List[PredictabilityRecord]],
        predictable: typing.Mapping[str, bool],
        long_lived: typing.AbstractSet[str],
) -> dict:
    """
    Long-lived servers count towards the predictable share whether or not they could be classified.
    """
    def summary(server_ids):
        server_ids = sorted(server_ids)
        long_lived_ids = [s for s in server_ids if s in long_lived]
        return _model_dict(summarize_records(
            it.chain.from_iterable(records.get(s, ()) for s in server_ids), predictable, long_lived_ids))

    by_class = dict()
    for server_id, result in classes.items():
        by_class.setdefault(_class_key(result), []).append(server_id)
    return {
        'overall': summary(classes),
        'by_class': {k: summary(v) for k, v in sorted(by_class.items())},
        'class_distribution': {k: len(v) for k, v in sorted(by_class.items())},
    }


def long_lived_servers(series: typing.Iterable[LoadSeries], due: FleetDueList) -> typing.Set[str]:
    return {
        s.server_id for s in series
        if s.server_id in due.entries and len(s)
        and lifespan_class(s, due.entries[s.server_id].backup_day - dt.timedelta(days=1)) == Lifespan.LONG_LIVED
    }


def run(config: PipelineConfig) -> RunManifest:
    """
    Executes every stage, persisting each stage's artifacts under ``<results_dir>/<run_id>/`` as it completes.
    A failed stage ends the run; the manifest keeps the stages up to and including it.
    """
    digest = file_digest(config.input_path)
    rid = run_id(config, digest)
    out = pathlib.Path(config.results_dir) / rid
    out.mkdir(parents=True, exist_ok=False)
    logger.info(json.dumps({'run': rid, 'input': str(config.input_path), 'parallel': config.parallelism}))

    stages = StageLog()
    failures = list()
    exit_code = EXIT_OK
    try:
        with stages.stage('validate') as counts:
            schema = load_schema(config.schema_path) if config.schema_path else DEFAULT_SCHEMA
            report = validate(config.input_path, schema)
            _write_json(out / 'validation.json', _model_dict(report))
            counts.update(anomalies=len(report.anomalies))
            if report.verdict == Verdict.FAIL:
                raise ValidationFailedError(f"{len(report.anomalies)} anomalies in {config.input_path}")

        with stages.stage('parse') as counts:
            series: typing.List[LoadSeries] = parse_telemetry(config.input_path)
            by_id = {s.server_id: s for s in series}
            counts.update(servers=len(series), samples=sum(len(s) for s in series))

        with stages.stage('due') as counts:
            due, defaults = build_due_list(series, config.backup_minutes)
            counts.update(due=_write_jsonl(out / 'due.jsonl', (
                {
                    'server_id': server_id,
                    'backup_day': entry.backup_day.isoformat(),
                    'duration_min': entry.duration.minutes,
                    'default_start_slot': defaults[server_id].start_slot,
                    'default_length_slots': defaults[server_id].length_slots,
                }
                for server_id, entry in due
            )))

        with stages.stage('classify') as counts:
            classified = fan_out(
                classify_batch,
                [(by_id[server_id], entry.backup_day) for server_id, entry in due],
                config.parallelism, bound=config.bound, coverage=config.coverage,
            )
            classes = {c.server_id: c for c in classified}
            _write_jsonl(out / 'classes.jsonl', (_model_dict(c) for c in classified))
            counts.update(servers=len(classified), unclassifiable=sum(not c.classified for c in classified))

        specs = {
            server_id: (select_forecaster(result.server_class) if config.forecaster == AUTO_FORECASTER
                        else ForecasterSpec(kind=config.forecaster, parameters=config.forecaster_parameters))
            for server_id, result in classes.items() if result.classified
        }

        with stages.stage('forecast') as counts:
            produced = fan_out(
                forecast_batch,
                [(by_id[s], specs[s], due.entries[s].backup_day) for s in sorted(specs)],
                config.parallelism,
            )
            forecasts = {server_id: f for server_id, f, _ in produced if f is not None}
            for server_id, _, reason in produced:
                if reason is not None:
                    logger.debug(f'{server_id}: no forecast, {reason}')
            _write_jsonl(out / 'forecasts.jsonl', (forecasts[s].to_json() for s in sorted(forecasts)))
            counts.update(servers=len(specs), forecasts=len(forecasts),
                          insufficient_history=len(produced) - len(forecasts))

        with stages.stage('evaluate') as counts:
            evaluated = fan_out(
                evaluate_batch,
                [(by_id[s], specs[s], due.entries[s].backup_day) for s in sorted(specs)],
                config.parallelism,
                b=BackupDuration(minutes=config.backup_minutes), bound=config.bound, coverage=config.coverage,
            )
            records = dict(evaluated)
            predictable = {
                s: is_predictable(r, due.entries[s].backup_day - dt.timedelta(days=1)) for s, r in records.items()
            }
            counts.update(
                records=_write_jsonl(out / 'records.jsonl', (
                    _model_dict(r) for s in sorted(records) for r in records[s])),
                predictable=sum(predictable.values()),
            )

        with stages.stage('schedule') as counts:
            schedule_counts = counts
            outcome = schedule_backups(due, forecasts, records, defaults, config.coverage)
            _write_jsonl(out / 'schedules.jsonl', (s.export() for s in outcome.schedules))
            _write_jsonl(out / 'scheduling_errors.jsonl', (_model_dict(f) for f in outcome.failures))
            failures.extend(f'{f.server_id}: {f.reason}' for f in outcome.failures)
            counts.update(
                predicted=sum(s.source == BackupSource.PREDICTED for s in outcome.schedules),
                default=sum(s.source == BackupSource.DEFAULT for s in outcome.schedules),
                failures=len(outcome.failures),
            )

        with stages.stage('persist') as counts:
            metrics = accuracy_metrics(classes, records, predictable, long_lived_servers(series, due))
            metrics.update(
                forecaster=forecaster_identity(config),
                bound=str(config.bound),
                backup_minutes=config.backup_minutes,
                coverage=config.coverage,
                schedules=schedule_counts,
            )
            _write_json(out / 'metrics.json', metrics)
            counts.update(files=len(list(out.iterdir())))

    except ValidationFailedError as e:
        logger.error(str(e))
        failures.append(str(e))
        exit_code = EXIT_VALIDATION_FAILURE
    except LowLoadException as e:
        logger.exception(f'run {rid} failed')
        failures.append(str(e))
        exit_code = EXIT_FAILURE

    manifest = RunManifest(
        run_id=rid,
        region=config.region,
        input_digest=digest,
        forecaster=forecaster_identity(config),
        version=VERSION,
        stages=stages.entries,
        failures=failures,
        exit_code=exit_code,
    )
    _write_json(out / MANIFEST, _model_dict(manifest))
    (pathlib.Path(config.results_dir) / LATEST).write_text(f'{rid}\n', encoding='utf-8')
    logger.info(json.dumps({'run': rid, 'exit_code': exit_code, 'failures': len(failures)}))
    return manifest
