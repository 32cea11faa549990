import numpy as np
import pytest

from exception import SchemaInferenceError
from schemas import AnomalyKind, ColumnSpec, ColumnType, SchemaSpec, Verdict
from telemetry.validation import DEFAULT_SCHEMA, infer_schema, load_schema, save_schema, validate

HEADER = 'server_id,timestamp_min,avg_cpu_pct,default_backup_start_min,default_backup_end_min'


def write_csv(path, rows, header=HEADER):
    path.write_text('\n'.join([header, *rows]) + '\n', encoding='utf-8')
    return path


@pytest.fixture
def clean_rows():
    return [f's{i % 3},{5 * (i // 3)},{(7 * i) % 100}.25,1440,1500' for i in range(30)]


def test_clean_file_passes(tmp_path, clean_rows):
    report = validate(write_csv(tmp_path / 'load.csv', clean_rows), DEFAULT_SCHEMA)

    assert report.verdict == Verdict.PASS
    assert report.anomalies == []


def test_bound_anomaly(tmp_path, clean_rows):
    clean_rows[4] = 's1,5,120,1440,1500'

    report = validate(write_csv(tmp_path / 'load.csv', clean_rows), DEFAULT_SCHEMA)

    assert report.verdict == Verdict.FAIL
    assert [(a.kind, a.row) for a in report.anomalies] == [(AnomalyKind.BOUND, 6)]


def test_missing_column(tmp_path, clean_rows):
    clean_rows[0] = 's0,0,10.5,1440'

    report = validate(write_csv(tmp_path / 'load.csv', clean_rows), DEFAULT_SCHEMA)

    assert report.verdict == Verdict.FAIL
    assert [(a.kind, a.row) for a in report.anomalies] == [(AnomalyKind.SCHEMA, 2)]


def test_each_row_reported_once(tmp_path, clean_rows):
    # wrong type and out of bounds in one row
    clean_rows[2] = 's2,abc,150,1440,1500'

    report = validate(write_csv(tmp_path / 'load.csv', clean_rows), DEFAULT_SCHEMA)

    assert len(report.anomalies) == 1
    anomaly = report.anomalies[0]
    assert anomaly.kind == AnomalyKind.SCHEMA
    assert anomaly.row == 4
    assert 'timestamp_min' in anomaly.message and 'avg_cpu_pct' in anomaly.message


def test_header_mismatch(tmp_path, clean_rows):
    report = validate(write_csv(tmp_path / 'load.csv', clean_rows, header=HEADER.replace('avg_', '')), DEFAULT_SCHEMA)

    assert report.verdict == Verdict.FAIL
    assert report.anomalies[0].row == 1


def test_gaps_are_warnings(tmp_path):
    rows = ['s1,0,10,1440,1500', 's1,5,10,1440,1500', 's1,20,10,1440,1500', 's2,0,10,1440,1500']

    report = validate(write_csv(tmp_path / 'load.csv', rows), DEFAULT_SCHEMA)

    assert report.verdict == Verdict.PASS
    assert [(a.kind, a.row) for a in report.anomalies] == [(AnomalyKind.GAP, 4)]


def test_infer_bounds(tmp_path):
    rows = ['s1,0,3,1440,1500', 's1,5,97,1440,1500', 's2,0,50.5,2880,2940']

    spec = infer_schema(write_csv(tmp_path / 'load.csv', rows))

    columns = {c.name: c for c in spec.columns}
    assert spec.names == HEADER.split(',')
    assert columns['server_id'].type == ColumnType.STRING
    assert columns['timestamp_min'].type == ColumnType.INTEGER
    assert columns['avg_cpu_pct'].type == ColumnType.REAL
    assert (columns['avg_cpu_pct'].min, columns['avg_cpu_pct'].max) == (3.0, 97.0)


def test_infer_common_divisor(tmp_path):
    rows = ['s1,0,3,1440,1500', 's1,10,4,2880,1500', 's2,20,5,1440,1500']

    spec = infer_schema(write_csv(tmp_path / 'load.csv', rows))

    assert [c.multiple_of for c in spec.columns] == [None, 10, None, 1440, None]
    assert validate(tmp_path / 'load.csv', spec).verdict == Verdict.PASS


def test_infer_single_row(tmp_path):
    spec = infer_schema(write_csv(tmp_path / 'load.csv', ['s1,10,42,1440,1500']))

    for column in spec.columns[1:]:
        assert column.min == column.max


def test_infer_matches_min_max_oracle(tmp_path):
    rng = np.random.default_rng(11)
    values = np.round(rng.uniform(0, 100, 200), 3)
    rows = [f's{i % 5},{5 * (i // 5)},{v},1440,1500' for i, v in enumerate(values)]

    spec = infer_schema(write_csv(tmp_path / 'load.csv', rows))

    cpu = spec.columns[2]
    low = high = float(rows[0].split(',')[2])
    for row in rows:
        value = float(row.split(',')[2])
        low, high = min(low, value), max(high, value)
    assert cpu.min == pytest.approx(low, rel=1e-12)
    assert cpu.max == pytest.approx(high, rel=1e-12)


def test_infer_empty_file(tmp_path):
    with pytest.raises(SchemaInferenceError):
        infer_schema(write_csv(tmp_path / 'load.csv', []))
    (tmp_path / 'blank.csv').write_text('', encoding='utf-8')
    with pytest.raises(SchemaInferenceError):
        infer_schema(tmp_path / 'blank.csv')


def test_inferred_schema_validates_its_file(tmp_path):
    rng = np.random.default_rng(5)
    rows = [f'srv{i % 4},{5 * i},{rng.uniform(0, 100):.4f},{1440 + i % 4},2000' for i in range(100)]
    rows.append('srv9,500,,1440,2000')
    path = write_csv(tmp_path / 'load.csv', rows)

    report = validate(path, infer_schema(path))

    assert report.verdict == Verdict.PASS
    assert report.count(AnomalyKind.SCHEMA) == report.count(AnomalyKind.BOUND) == 0


def test_schema_file_round_trip(tmp_path):
    spec = SchemaSpec(columns=[
        ColumnSpec(name='a', type=ColumnType.STRING),
        ColumnSpec(name='b', type=ColumnType.REAL, min=0.5, max=2.0),
    ])

    save_schema(spec, tmp_path / 'schema.json')

    assert load_schema(tmp_path / 'schema.json') == spec


def test_schema_bounds_ordered():
    with pytest.raises(ValueError):
        ColumnSpec(name='a', type=ColumnType.REAL, min=2, max=1)


def test_example_telemetry_passes(resources):
    report = validate(resources / 'examples' / 'telemetry.csv', DEFAULT_SCHEMA)

    assert report.verdict == Verdict.PASS
    assert report.anomalies == []
