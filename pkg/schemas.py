import datetime as dt
import enum
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Extra, Field, root_validator, validator

SLOT_MINUTES = 5
MINUTES_PER_DAY = 1440
SLOTS_PER_DAY = MINUTES_PER_DAY // SLOT_MINUTES
EPOCH = dt.date(1970, 1, 1)


def day_start_minute(day: dt.date) -> int:
    return (day - EPOCH).days * MINUTES_PER_DAY


def minute_to_day(minute: int) -> dt.date:
    return EPOCH + dt.timedelta(days=int(minute) // MINUTES_PER_DAY)


class Frozen(BaseModel):
    class Config:
        extra = Extra.forbid
        allow_mutation = False


class LoadSample(Frozen):
    timestamp: int
    cpu_pct: float = Field(..., ge=0.0, le=100.0)

    @validator("timestamp")
    def check_alignment(cls, timestamp: int) -> int:
        if timestamp % SLOT_MINUTES:
            raise ValueError(f"timestamp {timestamp} is not aligned to {SLOT_MINUTES} minutes")
        return timestamp


class ErrorBound(Frozen):
    over: float = Field(10.0, ge=0.0)
    under: float = Field(-5.0, le=0.0)

    @classmethod
    def parse(cls, text: str) -> "ErrorBound":
        """
        Parses the CLI notation ``+10:-5`` (over first, under second).
        """
        try:
            over, under = text.split(":")
            return cls(over=float(over), under=float(under))
        except ValueError as e:
            raise ValueError(f"invalid error bound {text!r}, expected e.g. +10:-5") from e

    def __str__(self):
        return f"+{self.over:g}:{self.under:g}"


DEFAULT_BOUND = ErrorBound()


class ServerClass(str, enum.Enum):
    SHORT_LIVED = "ShortLived"
    STABLE = "Stable"
    DAILY_PATTERN = "DailyPattern"
    WEEKLY_PATTERN = "WeeklyPattern"
    NO_PATTERN = "NoPattern"


class Window(Frozen):
    start_slot: int = Field(..., ge=0, lt=SLOTS_PER_DAY)
    length_slots: int = Field(..., gt=0)

    @root_validator(skip_on_failure=True)
    def check_fits_day(cls, values):
        if values["start_slot"] + values["length_slots"] > SLOTS_PER_DAY:
            raise ValueError(f"window {values} does not fit within a day")
        return values

    @property
    def end_slot(self) -> int:
        return self.start_slot + self.length_slots

    @property
    def start_minute(self) -> int:
        """minute of the day the window starts at"""
        return self.start_slot * SLOT_MINUTES

    @property
    def minutes(self) -> int:
        return self.length_slots * SLOT_MINUTES

    def start_timestamp(self, day: dt.date) -> int:
        return day_start_minute(day) + self.start_minute


class BackupDuration(Frozen):
    minutes: int = Field(60, ge=SLOT_MINUTES, le=MINUTES_PER_DAY)

    @validator("minutes")
    def check_granularity(cls, minutes: int) -> int:
        if minutes % SLOT_MINUTES:
            raise ValueError(f"backup duration must be a multiple of {SLOT_MINUTES} minutes")
        return minutes

    @property
    def slots(self) -> int:
        return self.minutes // SLOT_MINUTES


class ColumnType(str, enum.Enum):
    STRING = "string"
    INTEGER = "integer"
    REAL = "real"


class ColumnSpec(Frozen):
    name: str = Field(..., min_length=1)
    type: ColumnType
    min: Optional[float] = None
    max: Optional[float] = None
    multiple_of: Optional[int] = Field(None, gt=0)
    required: bool = True

    @root_validator(skip_on_failure=True)
    def check_bounds(cls, values):
        low, high = values.get("min"), values.get("max")
        if low is not None and high is not None and low > high:
            raise ValueError(f"column {values['name']}: min {low} > max {high}")
        return values


class SchemaSpec(Frozen):
    columns: List[ColumnSpec]

    @validator("columns")
    def check_unique(cls, columns: List[ColumnSpec]) -> List[ColumnSpec]:
        names = [column.name for column in columns]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate column names in {names}")
        return columns

    @property
    def names(self) -> List[str]:
        return [column.name for column in self.columns]


class AnomalyKind(str, enum.Enum):
    SCHEMA = "schema"
    BOUND = "bound"
    GAP = "gap"


class Verdict(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"


class Anomaly(Frozen):
    kind: AnomalyKind
    row: int
    message: str


class ValidationReport(Frozen):
    verdict: Verdict
    anomalies: List[Anomaly]

    @classmethod
    def from_anomalies(cls, anomalies: List[Anomaly]) -> "ValidationReport":
        failing = any(anomaly.kind != AnomalyKind.GAP for anomaly in anomalies)
        ordered = sorted(anomalies, key=lambda a: (a.row, a.kind.value))
        return cls(verdict=Verdict.FAIL if failing else Verdict.PASS, anomalies=ordered)

    def count(self, kind: AnomalyKind) -> int:
        return sum(1 for anomaly in self.anomalies if anomaly.kind == kind)


class ForecasterKind(str, enum.Enum):
    PREV_DAY = "PersistentPrevDay"
    PREV_EQUIV_DAY = "PersistentPrevEquivDay"
    PREV_WEEK_AVERAGE = "PrevWeekAverage"
    SEASONAL_NAIVE = "SeasonalNaive"


class ForecasterSpec(Frozen):
    kind: str
    parameters: Dict[str, Any] = {}

    @root_validator(skip_on_failure=True)
    def check_parameters(cls, values):
        # registry lives next to the implementations
        from forecast.forecasters import FORECASTERS

        kind = values["kind"]
        if kind not in FORECASTERS:
            raise ValueError(f"unknown forecaster {kind!r}, known = {sorted(FORECASTERS)}")
        values["parameters"] = FORECASTERS[kind].validate_parameters(dict(values["parameters"]))
        return values

    def identity(self) -> str:
        if not self.parameters:
            return self.kind
        args = ",".join(f"{k}={v}" for k, v in sorted(self.parameters.items()))
        return f"{self.kind}({args})"


class ClassificationResult(Frozen):
    server_id: str
    interval_start: dt.date
    interval_end: dt.date
    server_class: Optional[ServerClass] = Field(None, alias="class")
    unclassifiable: Optional[str] = None
    bucket_ratio_stats: Dict[str, Dict[str, float]] = {}

    class Config:
        allow_population_by_field_name = True

    @property
    def classified(self) -> bool:
        return self.server_class is not None


class ErrorMetrics(Frozen):
    mean_nrmse: float = Field(..., ge=0.0)
    mase: float = Field(..., ge=0.0)

    @root_validator(skip_on_failure=True)
    def check_finite(cls, values):
        if not all(math.isfinite(v) for v in values.values()):
            raise ValueError(f"metrics must be finite: {values}")
        return values


class PredictabilityRecord(Frozen):
    server_id: str
    day: dt.date
    evaluable: bool = True
    ll_window_correct: bool = False
    load_accurate: bool = False
    predicted_window: Optional[Window] = None
    true_window: Optional[Window] = None
    bucket_ratio_in_window: Optional[float] = None
    window_gap: Optional[float] = None
    error_metrics: Optional[ErrorMetrics] = None
    reason: Optional[str] = None

    @root_validator(skip_on_failure=True)
    def check_windows(cls, values):
        predicted, true = values.get("predicted_window"), values.get("true_window")
        if predicted is not None and true is not None and predicted.length_slots != true.length_slots:
            raise ValueError("predicted and true windows must have equal length")
        if values["evaluable"] and (predicted is None or true is None):
            raise ValueError("an evaluable record needs both windows")
        return values

    @property
    def passed(self) -> bool:
        return self.evaluable and self.ll_window_correct and self.load_accurate


class AccuracySummary(Frozen):
    pct_windows_correct: float
    pct_windows_accurate: float
    pct_predictable: float
    evaluable_records: int
    long_lived_servers: int
    predictable_servers: int
    mean_nrmse: Optional[float] = None
    mase: Optional[float] = None


class BackupSource(str, enum.Enum):
    PREDICTED = "Predicted"
    DEFAULT = "Default"


class BackupSchedule(Frozen):
    server_id: str
    backup_day: dt.date
    window: Window
    source: BackupSource
    expected_avg_load: Optional[float] = None

    @root_validator(skip_on_failure=True)
    def check_expected_load(cls, values):
        if values["source"] == BackupSource.PREDICTED and values.get("expected_avg_load") is None:
            raise ValueError("a predicted schedule carries its expected average load")
        return values

    def export(self) -> Dict[str, Any]:
        return {
            "server_id": self.server_id,
            "backup_day": self.backup_day.isoformat(),
            "start_minute_utc": self.window.start_timestamp(self.backup_day),
            "duration_min": self.window.minutes,
            "source": self.source.value,
        }


class DueEntry(Frozen):
    backup_day: dt.date
    duration: BackupDuration = BackupDuration()


class FleetDueList(Frozen):
    entries: Dict[str, DueEntry]

    def __iter__(self):
        return iter(sorted(self.entries.items()))

    def __len__(self):
        return len(self.entries)


class SchedulingFailure(Frozen):
    server_id: str
    reason: str


class ImpactSummary(Frozen):
    servers: int
    excluded_missing_actuals: int
    moved_and_better: float
    default_already_good: float
    predicted_worse: float


class ImpactReport(Frozen):
    busy_threshold: float
    overall: ImpactSummary
    busy: ImpactSummary
    by_class: Dict[str, ImpactSummary] = {}
    peak_load_distribution: Dict[str, float] = {}


class ValleySpec(Frozen):
    depth: float = Field(35.0, ge=0.0)
    width_minutes: int = Field(120, ge=SLOT_MINUTES, le=MINUTES_PER_DAY // 2)
    center_minute: int = Field(180, ge=0, lt=MINUTES_PER_DAY)
    jitter_minutes: int = Field(240, ge=0, le=MINUTES_PER_DAY // 2)


class FleetConfig(Frozen):
    server_count: int = Field(..., gt=0)
    class_mix: Dict[ServerClass, float]
    weeks: int = Field(4, gt=0)
    noise_amplitude: float = Field(4.0, ge=0.0)
    valley: ValleySpec = ValleySpec()
    seed: int = 0
    start_day: dt.date = dt.date(2020, 1, 6)
    backup_minutes: int = Field(60, ge=SLOT_MINUTES, le=MINUTES_PER_DAY)
    default_on_peak_fraction: float = Field(0.0, ge=0.0, le=1.0)

    @validator("class_mix")
    def check_mix(cls, mix: Dict[ServerClass, float]) -> Dict[ServerClass, float]:
        if any(not 0.0 <= fraction <= 1.0 for fraction in mix.values()):
            raise ValueError(f"class fractions must lie in [0, 1]: {mix}")
        if abs(sum(mix.values()) - 1.0) > 1e-9:
            raise ValueError(f"class fractions must sum to 1, got {sum(mix.values())}")
        return mix


class PipelineConfig(Frozen):
    input_path: Path
    results_dir: Path
    forecaster: str = ForecasterKind.PREV_DAY.value
    forecaster_parameters: Dict[str, Any] = {}
    bound: ErrorBound = DEFAULT_BOUND
    backup_minutes: int = 60
    coverage: float = Field(0.9, gt=0.0, le=1.0)
    parallelism: int = Field(1, ge=1)
    region: str = Field("local", min_length=1)
    schema_path: Optional[Path] = None

    @validator("backup_minutes")
    def check_backup_minutes(cls, minutes: int) -> int:
        return BackupDuration(minutes=minutes).minutes

    @root_validator(skip_on_failure=True)
    def check_forecaster(cls, values):
        if values["forecaster"] != "auto":
            ForecasterSpec(kind=values["forecaster"], parameters=values["forecaster_parameters"])
        return values


class StageEntry(Frozen):
    name: str
    started_at: dt.datetime
    finished_at: dt.datetime
    status: str
    counts: Dict[str, int] = {}
    error: Optional[str] = None


class RunManifest(Frozen):
    run_id: str
    region: str
    input_digest: str
    forecaster: str
    version: str
    stages: List[StageEntry]
    failures: List[str] = []
    exit_code: int = 0
