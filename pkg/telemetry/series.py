"""
per-server CPU telemetry: samples, series, day grids and the input CSV format
"""
import datetime as dt
import logging
import typing

import more_itertools as mit
import numpy as np
import pandas as pd

from exception import TelemetryParseError
from schemas import (
    LoadSample,
    MINUTES_PER_DAY,
    SLOT_MINUTES,
    SLOTS_PER_DAY,
    Window,
    day_start_minute,
    minute_to_day,
)

logger = logging.getLogger(__name__)

COLUMNS = (
    'server_id',
    'timestamp_min',
    'avg_cpu_pct',
    'default_backup_start_min',
    'default_backup_end_min',
)
INTEGER_COLUMNS = ('timestamp_min', 'default_backup_start_min', 'default_backup_end_min')
# share of present slots a server-day needs to take part in evaluation
EVALUABLE_COVERAGE = 0.9
WRITE_BATCH_SERVERS = 250


def _frozen(values: np.ndarray) -> np.ndarray:
    values.flags.writeable = False
    return values


class DaySlice:
    """
    One server-day on the 288-slot grid; slot k covers minutes [5k, 5k + 5) of the UTC day.
    Absent slots are NaN.
    """
    __slots__ = ('server_id', 'day', 'slots')

    def __init__(self, server_id: str, day: dt.date, slots):
        slots = np.array(slots, dtype=np.float64)
        if slots.shape != (SLOTS_PER_DAY,):
            raise ValueError(f"a day slice needs {SLOTS_PER_DAY} slots, got shape {slots.shape}")
        present = slots[~np.isnan(slots)]
        if present.size and (present.min() < 0.0 or present.max() > 100.0):
            raise ValueError(f"slot values of {server_id} on {day} must lie in [0, 100]")
        self.server_id = server_id
        self.day = day
        self.slots = _frozen(slots)

    def __repr__(self):
        return '<%s %s server_id=%r, day=%r, coverage=%.3f>' % (
            self.__class__.__name__, id(self), self.server_id, self.day, coverage(self))

    def __eq__(self, other):
        if not isinstance(other, DaySlice):
            return NotImplemented
        return (self.server_id, self.day) == (other.server_id, other.day) and \
            np.array_equal(self.slots, other.slots, equal_nan=True)

    @classmethod
    def constant(cls, server_id: str, day: dt.date, value: float) -> "DaySlice":
        return cls(server_id, day, np.full(SLOTS_PER_DAY, float(value)))

    @classmethod
    def from_values(cls, server_id: str, day: dt.date, values: typing.Sequence[typing.Optional[float]]):
        return cls(server_id, day, [np.nan if v is None else v for v in values])

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.slots)

    def window_values(self, window: Window) -> np.ndarray:
        return self.slots[window.start_slot:window.end_slot]

    def to_list(self) -> typing.List[typing.Optional[float]]:
        return [None if np.isnan(v) else float(v) for v in self.slots]


class LoadSeries:
    """
    Timestamped 5-minute average CPU samples of one server plus its default backup window.
    Timestamps are minutes since the Unix epoch, strictly increasing.
    """
    __slots__ = ('server_id', 'timestamps', 'cpu', 'default_backup_start', 'default_backup_end')

    def __init__(self, server_id, timestamps, cpu, default_backup_start, default_backup_end):
        timestamps = np.array(timestamps, dtype=np.int64)
        cpu = np.array(cpu, dtype=np.float64)
        if timestamps.shape != cpu.shape or timestamps.ndim != 1:
            raise ValueError(f"{server_id}: timestamps and cpu values must be equally long vectors")
        if timestamps.size > 1 and np.any(np.diff(timestamps) <= 0):
            raise ValueError(f"{server_id}: sample timestamps must be strictly increasing")
        if np.any(timestamps % SLOT_MINUTES):
            raise ValueError(f"{server_id}: sample timestamps must be aligned to {SLOT_MINUTES} minutes")
        if cpu.size and (np.isnan(cpu).any() or cpu.min() < 0.0 or cpu.max() > 100.0):
            raise ValueError(f"{server_id}: cpu values must lie in [0, 100]")
        if not default_backup_start < default_backup_end:
            raise ValueError(f"{server_id}: default backup start must precede its end")

        self.server_id = server_id
        self.timestamps = _frozen(timestamps)
        self.cpu = _frozen(cpu)
        self.default_backup_start = int(default_backup_start)
        self.default_backup_end = int(default_backup_end)

    def __repr__(self):
        return '<%s %s server_id=%r, samples=%r, first_day=%r, last_day=%r>' % (
            self.__class__.__name__, id(self), self.server_id, len(self), self.first_day, self.last_day)

    def __len__(self):
        return int(self.timestamps.size)

    def __eq__(self, other):
        if not isinstance(other, LoadSeries):
            return NotImplemented
        return (
            self.server_id == other.server_id
            and self.default_backup_start == other.default_backup_start
            and self.default_backup_end == other.default_backup_end
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.cpu, other.cpu)
        )

    def __setstate__(self, state):
        _, slots = state
        for name, value in slots.items():
            if isinstance(value, np.ndarray):
                value = _frozen(value)
            object.__setattr__(self, name, value)

    @classmethod
    def from_day_matrix(cls, server_id, first_day: dt.date, matrix, default_backup_start, default_backup_end):
        """
        Builds a series from a (days x 288) grid; NaN slots become missing samples.
        """
        flat = np.asarray(matrix, dtype=np.float64).reshape(-1)
        offsets = np.flatnonzero(~np.isnan(flat))
        timestamps = day_start_minute(first_day) + offsets * SLOT_MINUTES
        return cls(server_id, timestamps, flat[offsets], default_backup_start, default_backup_end)

    @property
    def samples(self) -> typing.List[LoadSample]:
        return [LoadSample(timestamp=int(t), cpu_pct=float(c)) for t, c in zip(self.timestamps, self.cpu)]

    @property
    def first_day(self) -> typing.Optional[dt.date]:
        return minute_to_day(self.timestamps[0]) if len(self) else None

    @property
    def last_day(self) -> typing.Optional[dt.date]:
        return minute_to_day(self.timestamps[-1]) if len(self) else None

    @property
    def backup_day(self) -> dt.date:
        return minute_to_day(self.default_backup_start)

    @property
    def default_window(self) -> Window:
        """
        The default backup window on its own day; a window crossing midnight is clipped to the day.
        """
        offset = self.default_backup_start % MINUTES_PER_DAY
        start_slot = offset // SLOT_MINUTES
        end = min(self.default_backup_end - self.default_backup_start + offset, MINUTES_PER_DAY)
        length = max(-(-(end - start_slot * SLOT_MINUTES) // SLOT_MINUTES), 1)
        return Window(start_slot=start_slot, length_slots=min(length, SLOTS_PER_DAY - start_slot))

    def day_matrix(self, first_day: dt.date, n_days: int) -> np.ndarray:
        """
        Samples of ``n_days`` consecutive days starting at ``first_day`` as a (n_days x 288) grid.
        """
        matrix = np.full(n_days * SLOTS_PER_DAY, np.nan)
        start = day_start_minute(first_day)
        lo, hi = np.searchsorted(self.timestamps, [start, start + n_days * MINUTES_PER_DAY])
        offsets = (self.timestamps[lo:hi] - start) // SLOT_MINUTES
        matrix[offsets] = self.cpu[lo:hi]
        return matrix.reshape(n_days, SLOTS_PER_DAY)

    def before(self, day: dt.date) -> "LoadSeries":
        """samples strictly before the start of ``day``"""
        stop = np.searchsorted(self.timestamps, day_start_minute(day))
        return LoadSeries(self.server_id, self.timestamps[:stop], self.cpu[:stop],
                          self.default_backup_start, self.default_backup_end)


def slice_day(series: LoadSeries, day: dt.date) -> DaySlice:
    return DaySlice(series.server_id, day, series.day_matrix(day, 1)[0])


def coverage(day_slice: DaySlice) -> float:
    return float(np.count_nonzero(day_slice.present)) / SLOTS_PER_DAY


def _read_frame(path) -> pd.DataFrame:
    try:
        return pd.read_csv(
            path,
            dtype={'server_id': 'category'},
            skip_blank_lines=False,
            keep_default_na=False,
            na_values=[''],
            encoding='utf-8',
        )
    except pd.errors.EmptyDataError as e:
        raise TelemetryParseError(f"{path} has no header") from e
    except pd.errors.ParserError as e:
        raise TelemetryParseError(f"malformed telemetry {path}: {e}") from e
    except (OSError, UnicodeDecodeError) as e:
        raise TelemetryParseError(f"can't read telemetry {path}: {e}") from e


def _first_row(mask, rows) -> int:
    return int(rows[np.flatnonzero(np.asarray(mask))[0]])


def parse_telemetry(path) -> typing.List[LoadSeries]:
    """
    Parses the telemetry CSV into one LoadSeries per server, ordered by server_id.

    Row numbers in errors are file line numbers (the header is line 1).
    """
    frame = _read_frame(path)
    if tuple(frame.columns) != COLUMNS:
        raise TelemetryParseError(f"unexpected header {list(frame.columns)}, expected {list(COLUMNS)}", row=1)
    if frame.empty:
        logger.info(f'{path}: header only, no series')
        return []

    rows = frame.index.to_numpy() + 2

    missing_id = frame['server_id'].isna().to_numpy()
    if missing_id.any():
        raise TelemetryParseError("missing server_id", row=_first_row(missing_id, rows))

    for column in COLUMNS[1:]:
        values = pd.to_numeric(frame[column], errors='coerce')
        broken = values.isna().to_numpy()
        if broken.any():
            row = _first_row(broken, rows)
            raise TelemetryParseError(f"{column} is not a number: {frame[column].iloc[row - 2]!r}", row=row)
        if column in INTEGER_COLUMNS:
            fractional = (values % 1 != 0).to_numpy()
            if fractional.any():
                raise TelemetryParseError(f"{column} must be an integer", row=_first_row(fractional, rows))
            values = values.astype(np.int64)
        frame[column] = values

    misaligned = (frame['timestamp_min'] % SLOT_MINUTES != 0).to_numpy()
    if misaligned.any():
        raise TelemetryParseError(f"timestamp not aligned to {SLOT_MINUTES} minutes",
                                  row=_first_row(misaligned, rows))
    out_of_range = ((frame['avg_cpu_pct'] < 0) | (frame['avg_cpu_pct'] > 100)).to_numpy()
    if out_of_range.any():
        raise TelemetryParseError("avg_cpu_pct outside [0, 100]", row=_first_row(out_of_range, rows))
    empty_window = (frame['default_backup_start_min'] >= frame['default_backup_end_min']).to_numpy()
    if empty_window.any():
        raise TelemetryParseError("default backup start must precede its end", row=_first_row(empty_window, rows))

    duplicated = frame.duplicated(['server_id', 'timestamp_min']).to_numpy()
    if duplicated.any():
        raise TelemetryParseError("duplicate timestamp for server", row=_first_row(duplicated, rows))

    server_ids = frame['server_id'].cat.remove_unused_categories()
    frame['server_id'] = server_ids.cat.reorder_categories(sorted(server_ids.cat.categories))
    frame['row'] = rows
    frame = frame.sort_values(['server_id', 'timestamp_min'], kind='mergesort')

    codes = frame['server_id'].cat.codes.to_numpy()
    bounds = np.flatnonzero(np.diff(codes)) + 1
    starts = np.concatenate([[0], bounds])
    stops = np.concatenate([bounds, [len(frame)]])

    timestamps = frame['timestamp_min'].to_numpy()
    cpu = frame['avg_cpu_pct'].to_numpy(dtype=np.float64)
    backup_start = frame['default_backup_start_min'].to_numpy()
    backup_end = frame['default_backup_end_min'].to_numpy()
    frame_rows = frame['row'].to_numpy()
    categories = frame['server_id'].cat.categories

    result = list()
    for code, start, stop in zip(codes[starts], starts, stops):
        server_id = str(categories[code])
        window_start, window_end = backup_start[start:stop], backup_end[start:stop]
        inconsistent = (window_start != window_start[0]) | (window_end != window_end[0])
        if inconsistent.any():
            raise TelemetryParseError(f"inconsistent default backup window for {server_id}",
                                      row=int(frame_rows[start:stop][inconsistent][0]))
        result.append(LoadSeries(
            server_id, timestamps[start:stop], cpu[start:stop], window_start[0], window_end[0]
        ))

    logger.info(f'parsed {len(frame)} samples of {len(result)} servers from {path}')
    return result


def series_frame(series: typing.Iterable[LoadSeries]) -> pd.DataFrame:
    frames = list()
    for s in sorted(series, key=lambda e: e.server_id):
        frames.append(pd.DataFrame({
            'server_id': np.repeat(s.server_id, len(s)),
            'timestamp_min': s.timestamps,
            'avg_cpu_pct': s.cpu,
            'default_backup_start_min': np.repeat(s.default_backup_start, len(s)).astype(np.int64),
            'default_backup_end_min': np.repeat(s.default_backup_end, len(s)).astype(np.int64),
        }))
    if not frames:
        return pd.DataFrame({column: [] for column in COLUMNS})
    return pd.concat(frames, ignore_index=True)


def write_telemetry(series: typing.Iterable[LoadSeries], path, batch_servers: int = WRITE_BATCH_SERVERS) -> None:
    """
    Writes series in the input CSV format, ordered by server_id then timestamp, a batch of servers at a time.
    """
    ordered = sorted(series, key=lambda s: s.server_id)
    written = 0
    with open(path, 'w', encoding='utf-8', newline='') as f:
        if not ordered:
            series_frame([]).to_csv(f, index=False)
        for i, batch in enumerate(mit.chunked(ordered, batch_servers)):
            frame = series_frame(batch)
            frame.to_csv(f, index=False, header=i == 0)
            written += len(frame)
    logger.info(f'wrote {written} samples of {len(ordered)} servers to {path}')
