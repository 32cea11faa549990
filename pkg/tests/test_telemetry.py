import datetime as dt

import numpy as np
import pytest

from exception import TelemetryParseError
from schemas import LoadSample, MINUTES_PER_DAY, SLOTS_PER_DAY, Window, day_start_minute
from telemetry.series import DaySlice, LoadSeries, coverage, parse_telemetry, slice_day, write_telemetry

HEADER = 'server_id,timestamp_min,avg_cpu_pct,default_backup_start_min,default_backup_end_min\n'


def write_csv(path, rows, header=HEADER, newline='\n'):
    path.write_text(header.replace('\n', newline) + ''.join(row + newline for row in rows), encoding='utf-8')
    return path


def test_parse_two_samples(tmp_path):
    path = write_csv(tmp_path / 'load.csv', ['s1,0,10,1440,1500', 's1,5,20,1440,1500'])

    series = parse_telemetry(path)

    assert len(series) == 1
    assert series[0].server_id == 's1'
    assert series[0].samples == [LoadSample(timestamp=0, cpu_pct=10), LoadSample(timestamp=5, cpu_pct=20)]
    assert series[0].default_backup_start == 1440
    assert series[0].default_backup_end == 1500


def test_parse_header_only(tmp_path):
    assert parse_telemetry(write_csv(tmp_path / 'load.csv', [])) == []


def test_parse_interleaved_servers_crlf(tmp_path):
    rng = np.random.default_rng(7)
    rows = list()
    for t in rng.permutation(40):
        server = 's2' if t % 2 else 's1'
        rows.append(f'{server},{5 * int(t)},{int(t)}.5,2880,2940')
    path = write_csv(tmp_path / 'load.csv', rows, newline='\r\n')

    series = parse_telemetry(path)

    # group-then-sort oracle
    expected = dict()
    for row in rows:
        server, t, cpu, _, _ = row.split(',')
        expected.setdefault(server, []).append((int(t), float(cpu)))
    assert [s.server_id for s in series] == ['s1', 's2']
    for s in series:
        assert list(zip(s.timestamps.tolist(), s.cpu.tolist())) == sorted(expected[s.server_id])


@pytest.mark.parametrize('row, line', [
    ('s1,3,10,1440,1500', 3),
    ('s1,10,abc,1440,1500', 3),
    ('s1,10,101,1440,1500', 3),
    ('s1,0,20,1440,1500', 3),
    (',10,20,1440,1500', 3),
    ('s1,10,20,1500,1440', 3),
])
def test_parse_rejects_rows(tmp_path, row, line):
    path = write_csv(tmp_path / 'load.csv', ['s1,0,10,1440,1500', row])

    with pytest.raises(TelemetryParseError) as e:
        parse_telemetry(path)
    assert e.value.row == line


def test_parse_rejects_bad_header(tmp_path):
    path = write_csv(tmp_path / 'load.csv', ['s1,0,10'], header='server,t,cpu\n')

    with pytest.raises(TelemetryParseError):
        parse_telemetry(path)


def test_parse_missing_file(tmp_path):
    with pytest.raises(TelemetryParseError):
        parse_telemetry(tmp_path / 'absent.csv')


def test_round_trip(tmp_path, make_series):
    rng = np.random.default_rng(3)
    matrix = np.round(rng.uniform(0, 100, (3, SLOTS_PER_DAY)), 2)
    matrix[1, 20:40] = np.nan
    fleet = [make_series(matrix, server_id='b'), make_series(matrix[::-1], server_id='a', backup_slot=7)]

    path = tmp_path / 'load.csv'
    write_telemetry(fleet, path)
    parsed = parse_telemetry(path)

    assert parsed == sorted(fleet, key=lambda s: s.server_id)
    write_telemetry(parsed, tmp_path / 'again.csv')
    assert (tmp_path / 'again.csv').read_bytes() == path.read_bytes()


def test_series_invariants():
    with pytest.raises(ValueError):
        LoadSeries('s1', [5, 0], [1, 2], 0, 60)
    with pytest.raises(ValueError):
        LoadSeries('s1', [0, 5], [1, 2], 60, 60)
    with pytest.raises(ValueError):
        LoadSeries('s1', [0, 7], [1, 2], 0, 60)


def test_slice_full_and_empty_day(make_series, monday):
    series = make_series(np.full((1, SLOTS_PER_DAY), 30.0))

    full = slice_day(series, monday)
    empty = slice_day(series, monday + dt.timedelta(days=1))

    assert full.present.all()
    assert coverage(full) == 1.0
    assert not empty.present.any()
    assert coverage(empty) == 0.0


def test_slice_missing_hour(make_series, monday):
    matrix = np.full((1, SLOTS_PER_DAY), 30.0)
    day_start = day_start_minute(monday)
    series = make_series(matrix)
    kept = (series.timestamps < day_start + 60) | (series.timestamps >= day_start + 120)
    gappy = LoadSeries('s1', series.timestamps[kept], series.cpu[kept], series.default_backup_start,
                       series.default_backup_end)

    day = slice_day(gappy, monday)

    # index arithmetic oracle
    expected = np.array([not (60 <= 5 * k < 120) for k in range(SLOTS_PER_DAY)])
    assert np.array_equal(day.present, expected)
    assert coverage(day) == pytest.approx((SLOTS_PER_DAY - 12) / SLOTS_PER_DAY)


def test_half_coverage(make_slice):
    values = np.full(SLOTS_PER_DAY, np.nan)
    values[::2] = 1.0

    assert coverage(make_slice(values)) == 0.5


def test_gap_free_week_has_full_coverage(make_series, monday):
    series = make_series(np.full((7, SLOTS_PER_DAY), 12.5))

    for i in range(7):
        assert coverage(slice_day(series, monday + dt.timedelta(days=i))) == 1.0


def test_day_slice_is_immutable(make_slice):
    day = make_slice(10.0)

    with pytest.raises(ValueError):
        day.slots[0] = 1.0
    with pytest.raises(ValueError):
        DaySlice('s1', day.day, np.full(SLOTS_PER_DAY, 120.0))
    with pytest.raises(ValueError):
        DaySlice('s1', day.day, np.ones(10))


def test_default_window(make_series, monday):
    series = make_series(np.full((1, SLOTS_PER_DAY), 1.0), backup_slot=36, backup_minutes=60)

    assert series.backup_day == monday + dt.timedelta(days=1)
    assert series.default_window == Window(start_slot=36, length_slots=12)


def test_default_window_clipped_at_midnight(monday):
    start = day_start_minute(monday) + MINUTES_PER_DAY - 30
    series = LoadSeries('s1', [0], [1.0], start, start + 60)

    assert series.default_window == Window(start_slot=SLOTS_PER_DAY - 6, length_slots=6)


def test_before_has_no_lookahead(make_series, monday):
    series = make_series(np.full((3, SLOTS_PER_DAY), 5.0))

    cut = series.before(monday + dt.timedelta(days=2))

    assert len(cut) == 2 * SLOTS_PER_DAY
    assert cut.last_day == monday + dt.timedelta(days=1)


def test_example_telemetry(resources, monday):
    series = parse_telemetry(resources / 'examples' / 'telemetry.csv')

    assert [s.server_id for s in series] == ['db-01', 'web-01']
    for s in series:
        assert s.first_day == s.last_day == monday
        assert s.backup_day == monday + dt.timedelta(days=1)
        assert s.default_window == Window(start_slot=24, length_slots=12)
        assert coverage(slice_day(s, monday)) == 1.0
