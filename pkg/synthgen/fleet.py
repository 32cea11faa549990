"""
deterministic synthetic fleets with ground-truth server classes
"""
import datetime as dt
import json
import logging
import pathlib
import typing

import numpy as np

from exception import ImpossibleMixError
from lowload.windows import window_means
from schemas import (
    FleetConfig,
    MINUTES_PER_DAY,
    SLOT_MINUTES,
    SLOTS_PER_DAY,
    ServerClass,
    day_start_minute,
)
from telemetry.series import LoadSeries, write_telemetry

logger = logging.getLogger(__name__)

LONG_LIVED_CLASSES = (
    ServerClass.STABLE,
    ServerClass.DAILY_PATTERN,
    ServerClass.WEEKLY_PATTERN,
    ServerClass.NO_PATTERN,
)
# a long-lived server needs more than 21 days between its first sample and the classification day
MIN_LONG_LIVED_DAYS = 22
MAX_SHORT_LIVED_DAYS = 20
RAMP_MINUTES = 30
BUSY_RISE = 25.0
BUSY_MINUTES = 480
WEEKLY_PEAK = 45.0
WEEKLY_PEAK_HOURS = 6
WALK_STEP = 4.0
# long-lived classes whose peak sits far above their valley and whose forecast finds the valley again
PLANTABLE_CLASSES = (ServerClass.DAILY_PATTERN,)

SLOT_MINUTE = np.arange(SLOTS_PER_DAY) * SLOT_MINUTES


class SyntheticFleet:
    """
    History telemetry of every server, the true load of the held-out backup day and the class labels.
    """
    __slots__ = ('config', 'history', 'actuals', 'labels', 'backup_day')

    def __init__(self, config: FleetConfig, history: typing.List[LoadSeries], actuals: typing.List[LoadSeries],
                 labels: typing.Dict[str, ServerClass], backup_day: dt.date):
        self.config = config
        self.history = history
        self.actuals = actuals
        self.labels = labels
        self.backup_day = backup_day

    def __repr__(self):
        return '<%s %s servers=%r, backup_day=%r>' % (
            self.__class__.__name__, id(self), len(self.history), self.backup_day)

    @staticmethod
    def sidecar_paths(path) -> typing.Tuple[pathlib.Path, pathlib.Path]:
        path = pathlib.Path(path)
        return path.with_name(f'{path.stem}.actuals.csv'), path.with_name(f'{path.stem}.labels.json')

    def write(self, path) -> None:
        actuals_path, labels_path = self.sidecar_paths(path)
        write_telemetry(self.history, path)
        write_telemetry(self.actuals, actuals_path)
        with open(labels_path, 'w', encoding='utf-8') as f:
            json.dump({k: v.value for k, v in sorted(self.labels.items())}, f, indent=2, sort_keys=True)
            f.write('\n')


def class_counts(mix: typing.Mapping[ServerClass, float], server_count: int) -> typing.Dict[ServerClass, int]:
    """largest remainder apportionment of ``server_count`` over the mix"""
    order = [c for c in ServerClass if c in mix]
    quotas = {c: mix[c] * server_count for c in order}
    counts = {c: int(np.floor(quotas[c])) for c in order}
    left = server_count - sum(counts.values())
    by_remainder = sorted(order, key=lambda c: (-(quotas[c] - counts[c]), order.index(c)))
    for c in by_remainder[:left]:
        counts[c] += 1
    return counts


def _circular_distance(center: float) -> np.ndarray:
    d = np.abs(SLOT_MINUTE - center % MINUTES_PER_DAY)
    return np.minimum(d, MINUTES_PER_DAY - d)


def _plateau(center: float, width: float, ramp: float = RAMP_MINUTES) -> np.ndarray:
    """1 within width/2 of ``center`` (wrapping midnight), falling linearly to 0 over ``ramp`` minutes"""
    d = _circular_distance(center)
    return np.clip((width / 2 + ramp - d) / ramp, 0.0, 1.0)


def _stable(rng, n_days, days, config):
    level = rng.uniform(10.0, 80.0)
    return np.full((n_days, SLOTS_PER_DAY), level)


def _daily(rng, n_days, days, config):
    valley = config.valley
    base = rng.uniform(40.0, 55.0)
    jitter = rng.integers(-valley.jitter_minutes, valley.jitter_minutes + 1) if valley.jitter_minutes else 0
    valley_center = (valley.center_minute + jitter) // SLOT_MINUTES * SLOT_MINUTES
    depth = min(valley.depth, base - 5.0)
    curve = base \
        - depth * _plateau(valley_center, valley.width_minutes) \
        + BUSY_RISE * _plateau(valley_center + MINUTES_PER_DAY // 2, BUSY_MINUTES)
    return np.tile(curve, (n_days, 1))


def _weekly(rng, n_days, days, config):
    base = rng.uniform(15.0, 30.0)
    grid = np.full((n_days, SLOTS_PER_DAY), base)
    peak_slots = WEEKLY_PEAK_HOURS * 60 // SLOT_MINUTES
    for i, day in enumerate(days):
        start = (day.weekday() * 3 % 24) * 60 // SLOT_MINUTES
        grid[i, start:start + peak_slots] += WEEKLY_PEAK
    return grid


def _no_pattern(rng, n_days, days, config):
    walk = rng.uniform(20.0, 80.0) + np.cumsum(rng.normal(0.0, WALK_STEP, n_days * SLOTS_PER_DAY))
    folded = np.mod(walk, 200.0)
    return np.where(folded > 100.0, 200.0 - folded, folded).reshape(n_days, SLOTS_PER_DAY)


TEMPLATES = {
    ServerClass.STABLE: _stable,
    ServerClass.DAILY_PATTERN: _daily,
    ServerClass.WEEKLY_PATTERN: _weekly,
    ServerClass.NO_PATTERN: _no_pattern,
    ServerClass.SHORT_LIVED: _daily,
}


def _default_start_slot(backup_day_load: np.ndarray, backup_slots: int, on_peak: bool) -> int:
    means = window_means(backup_day_load, backup_slots)
    return int(np.argmax(means) if on_peak else np.argmin(means))


def generate_fleet(config: FleetConfig) -> SyntheticFleet:
    """
    Builds ``config.weeks`` weeks of history plus the following backup day for every server.
    The same seed always yields the same fleet.
    """
    history_days = config.weeks * 7
    long_lived = [c for c in LONG_LIVED_CLASSES if config.class_mix.get(c, 0.0) > 0.0]
    if long_lived and history_days < MIN_LONG_LIVED_DAYS + 1:
        raise ImpossibleMixError(
            f"{', '.join(c.value for c in long_lived)} servers need more than {MIN_LONG_LIVED_DAYS} days "
            f"of history, {config.weeks} weeks give {history_days}")

    rng = np.random.default_rng(config.seed)
    counts = class_counts(config.class_mix, config.server_count)
    classes = np.array([c for c in ServerClass if c in counts for _ in range(counts[c])], dtype=object)
    classes = classes[rng.permutation(len(classes))]
    pool = [i for i, c in enumerate(classes) if c in PLANTABLE_CLASSES]
    n_planted = int(round(config.default_on_peak_fraction * config.server_count))
    if n_planted > len(pool):
        raise ImpossibleMixError(
            f"{n_planted} defaults on the peak need as many {', '.join(c.value for c in PLANTABLE_CLASSES)} "
            f"servers, the mix gives {len(pool)}")
    planted = {pool[j] for j in rng.choice(len(pool), n_planted, replace=False).tolist()}

    start_day = config.start_day
    backup_day = start_day + dt.timedelta(days=history_days)
    n_days = history_days + 1
    days = [start_day + dt.timedelta(days=i) for i in range(n_days)]
    backup_slots = config.backup_minutes // SLOT_MINUTES
    half_noise = config.noise_amplitude / 2
    width = len(str(config.server_count - 1))

    history, actuals, labels = list(), list(), dict()
    for i, server_class in enumerate(classes):
        server_id = f'srv-{i:0{width}d}'
        template = np.round(TEMPLATES[server_class](rng, n_days, days, config), 2)
        load = template
        if server_class != ServerClass.NO_PATTERN and half_noise:
            # half-width noise keeps two days of one template within the amplitude of each other
            load = template + np.round(rng.uniform(-half_noise, half_noise, template.shape), 2)
        load = np.round(np.clip(load, 0.0, 100.0), 2)

        first = 0
        if server_class == ServerClass.SHORT_LIVED:
            first = history_days - int(rng.integers(1, min(MAX_SHORT_LIVED_DAYS, history_days) + 1))
        start_slot = _default_start_slot(template[-1], backup_slots, i in planted)
        default_start = day_start_minute(backup_day) + start_slot * SLOT_MINUTES
        default_end = default_start + config.backup_minutes

        history.append(LoadSeries.from_day_matrix(
            server_id, days[first], load[first:history_days], default_start, default_end))
        actuals.append(LoadSeries.from_day_matrix(server_id, backup_day, load[-1:], default_start, default_end))
        labels[server_id] = server_class

    logger.info(json.dumps({
        'generated': config.server_count,
        'backup_day': backup_day.isoformat(),
        **{c.value: n for c, n in counts.items()},
    }))
    return SyntheticFleet(config, history, actuals, labels, backup_day)
