"""
schema inference and schema/bound/gap anomaly detection over the raw telemetry CSV
"""
import csv
import json
import logging
import typing
from collections import defaultdict

import numpy as np
import pandas as pd
from pandas.api.types import union_categoricals

from exception import SchemaInferenceError, TelemetryParseError
from schemas import (
    Anomaly,
    AnomalyKind,
    ColumnSpec,
    ColumnType,
    SchemaSpec,
    SLOT_MINUTES,
    ValidationReport,
)
from telemetry.series import COLUMNS

logger = logging.getLogger(__name__)

CHUNK_ROWS = 1_000_000
# never appears in the telemetry; makes pandas hand over whole lines
LINE_SEPARATOR = '\x1f'

DEFAULT_SCHEMA = SchemaSpec(columns=[
    ColumnSpec(name='server_id', type=ColumnType.STRING),
    ColumnSpec(name='timestamp_min', type=ColumnType.INTEGER, min=0, multiple_of=SLOT_MINUTES),
    ColumnSpec(name='avg_cpu_pct', type=ColumnType.REAL, min=0.0, max=100.0),
    ColumnSpec(name='default_backup_start_min', type=ColumnType.INTEGER, min=0),
    ColumnSpec(name='default_backup_end_min', type=ColumnType.INTEGER, min=0),
])


def _read_header(path) -> typing.Optional[typing.List[str]]:
    try:
        with open(path, encoding='utf-8', newline='') as f:
            line = f.readline()
    except (OSError, UnicodeDecodeError) as e:
        raise TelemetryParseError(f"can't read telemetry {path}: {e}") from e
    line = line.rstrip('\r\n')
    return line.split(',') if line else None


def _iter_lines(path) -> typing.Iterator[typing.Tuple[np.ndarray, pd.Series]]:
    """
    Yields (file line numbers, raw lines) chunks of the data rows.
    """
    try:
        reader = pd.read_csv(
            path,
            sep=LINE_SEPARATOR,
            header=None,
            names=['line'],
            skiprows=1,
            dtype=str,
            skip_blank_lines=False,
            keep_default_na=False,
            quoting=csv.QUOTE_NONE,
            encoding='utf-8',
            chunksize=CHUNK_ROWS,
        )
        for chunk in reader:
            yield chunk.index.to_numpy() + 2, chunk['line'].fillna('').str.rstrip('\r')
    except pd.errors.EmptyDataError:
        return


def _split(lines: pd.Series, n_columns: int) -> pd.DataFrame:
    fields = lines.str.split(',', expand=True)
    return fields.reindex(columns=range(n_columns))


def _column_problems(column: ColumnSpec, raw: pd.Series) -> typing.Iterator[typing.Tuple[AnomalyKind, pd.Series]]:
    """
    Yields (anomaly kind, message series) pairs; a message series holds only offending rows.
    """
    name = column.name
    empty = raw == ''
    if column.required:
        yield AnomalyKind.SCHEMA, raw[empty].map(lambda _: f'{name}: empty value')
    if column.type == ColumnType.STRING:
        return

    present = raw[~empty]
    values = pd.to_numeric(present, errors='coerce')
    not_number = values.isna()
    yield AnomalyKind.SCHEMA, present[not_number].map(lambda v: f'{name}: {v!r} is not a number')

    raw, values = present[~not_number], values[~not_number]
    checks = list()
    if column.type == ColumnType.INTEGER:
        checks.append((AnomalyKind.SCHEMA, values % 1 != 0, 'is not an integer'))
    if column.multiple_of is not None:
        checks.append((AnomalyKind.SCHEMA, values % column.multiple_of != 0,
                       f'is not a multiple of {column.multiple_of}'))
    if column.min is not None:
        checks.append((AnomalyKind.BOUND, values < column.min, f'below min {column.min:g}'))
    if column.max is not None:
        checks.append((AnomalyKind.BOUND, values > column.max, f'above max {column.max:g}'))

    for kind, mask, text in checks:
        yield kind, raw[mask].map(lambda v: f'{name}: {v} {text}')


def _gap_anomalies(server_ids, timestamps, rows) -> typing.List[Anomaly]:
    if not server_ids:
        return []
    servers = union_categoricals(server_ids)
    codes = servers.codes.astype(np.int64)
    timestamps = np.concatenate(timestamps)
    rows = np.concatenate(rows)

    order = np.lexsort((timestamps, codes))
    codes, timestamps, rows = codes[order], timestamps[order], rows[order]
    steps = np.diff(timestamps)
    gaps = np.flatnonzero((codes[1:] == codes[:-1]) & (steps > SLOT_MINUTES)) + 1

    return [
        Anomaly(
            kind=AnomalyKind.GAP,
            row=int(rows[i]),
            message=f'{servers.categories[codes[i]]}: {int(steps[i - 1])} minutes since previous sample',
        )
        for i in gaps
    ]


def validate(path, spec: SchemaSpec) -> ValidationReport:
    """
    Checks every row of ``path`` against ``spec``; each offending row is reported once
    (schema problems take precedence over bound problems in the row's kind).
    Gaps between consecutive samples of a server are reported as warnings.
    """
    n_columns = len(spec.columns)
    anomalies = list()

    header = _read_header(path)
    if header != spec.names:
        anomalies.append(Anomaly(kind=AnomalyKind.SCHEMA, row=1,
                                 message=f'header {header} does not match schema columns {spec.names}'))

    track_gaps = {'server_id', 'timestamp_min'} <= set(spec.names) and \
        spec.columns[spec.names.index('timestamp_min')].type != ColumnType.STRING
    server_ids, timestamps, gap_rows = list(), list(), list()
    rows_checked = 0

    for rows, lines in _iter_lines(path):
        rows_checked += len(rows)
        problems = defaultdict(list)

        field_counts = lines.str.count(',') + 1
        wrong_count = (field_counts != n_columns).to_numpy()
        for row, count in zip(rows[wrong_count], field_counts[wrong_count]):
            problems[int(row)].append((AnomalyKind.SCHEMA, f'expected {n_columns} fields, got {count}'))

        good_rows = rows[~wrong_count]
        fields = _split(lines[~wrong_count], n_columns)
        fields.index = good_rows
        for position, column in enumerate(spec.columns):
            for kind, messages in _column_problems(column, fields[position]):
                for row, message in messages.items():
                    problems[int(row)].append((kind, message))

        for row, found in problems.items():
            kinds = {kind for kind, _ in found}
            kind = AnomalyKind.SCHEMA if AnomalyKind.SCHEMA in kinds else AnomalyKind.BOUND
            anomalies.append(Anomaly(kind=kind, row=row, message='; '.join(message for _, message in found)))

        if track_gaps and len(good_rows):
            # every row with a readable timestamp counts, out-of-bound values included
            stamps = pd.to_numeric(fields[spec.names.index('timestamp_min')], errors='coerce').to_numpy(np.float64)
            known = ~np.isnan(stamps)
            server_ids.append(pd.Categorical(fields[spec.names.index('server_id')].to_numpy()[known]))
            timestamps.append(stamps[known])
            gap_rows.append(good_rows[known])

    if track_gaps:
        anomalies.extend(_gap_anomalies(server_ids, timestamps, gap_rows))

    report = ValidationReport.from_anomalies(anomalies)
    logger.info(json.dumps({
        'validated': str(path),
        'rows': rows_checked,
        'verdict': report.verdict.value,
        **{kind.value: report.count(kind) for kind in AnomalyKind},
    }))
    return report


def _infer_column(name: str, raw: pd.Series) -> ColumnSpec:
    empty = raw == ''
    required = not bool(empty.any())
    values = pd.to_numeric(raw[~empty], errors='coerce')
    if values.empty or values.isna().any():
        return ColumnSpec(name=name, type=ColumnType.STRING, required=required)

    integral = bool((values % 1 == 0).all())
    multiple_of = None
    if integral:
        distinct = np.unique(values.to_numpy(np.int64))
        # one observed value says nothing about a step
        if distinct.size > 1:
            divisor = int(np.gcd.reduce(distinct))
            multiple_of = divisor if divisor > 1 else None
    low, high = values.min(), values.max()
    return ColumnSpec(
        name=name,
        type=ColumnType.INTEGER if integral else ColumnType.REAL,
        min=float(low),
        max=float(high),
        multiple_of=multiple_of,
        required=required,
    )


def infer_schema(path) -> SchemaSpec:
    """
    Deduces column types, min/max bounds and the common divisor of integer columns from the observed data.
    """
    header = _read_header(path)
    if not header:
        raise SchemaInferenceError(f"{path} is empty")

    n_columns = len(header)
    chunks = list()
    for rows, lines in _iter_lines(path):
        field_counts = (lines.str.count(',') + 1).to_numpy()
        broken = np.flatnonzero(field_counts != n_columns)
        if broken.size:
            raise SchemaInferenceError(
                f"{path} is not parseable: row {int(rows[broken[0]])} has {field_counts[broken[0]]} fields, "
                f"header has {n_columns}")
        chunks.append(_split(lines, n_columns))

    if not chunks or not sum(len(chunk) for chunk in chunks):
        raise SchemaInferenceError(f"{path} has no rows to infer a schema from")

    fields = pd.concat(chunks, ignore_index=True)
    spec = SchemaSpec(columns=[_infer_column(name, fields[i]) for i, name in enumerate(header)])
    logger.info(f'inferred schema of {path}: {spec.names}')
    return spec


def save_schema(spec: SchemaSpec, path) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        f.write(spec.json(indent=2))
        f.write('\n')


def load_schema(path) -> SchemaSpec:
    return SchemaSpec.parse_file(path)


__all__ = ('DEFAULT_SCHEMA', 'COLUMNS', 'infer_schema', 'validate', 'save_schema', 'load_schema')
