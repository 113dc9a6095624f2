"""Cohort ingestion and preprocessing.

Turns raw per-stay observations into fixed 30x26 hourly grids partitioned
by ICU, with inclusion filtering, hourly aggregation, imputation and
patient-level stratified fold assignment.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .schema import FeatureSchema, ICU_NAMES, N_HOURS, SchemaError, default_schema

EXCLUDED_ICUS = {"NICU", "PICU"}  # neonatal / pediatric


class CohortError(ValueError):
    pass


@dataclass(frozen=True)
class RawObservation:
    stay_id: str
    feature: str
    hour_offset: float  # fractional hours since admission, >= 0
    value: float


@dataclass
class PatientStay:
    stay_id: str
    patient_id: str
    icu_id: str
    stay_index: int  # admission order for the patient, 1 = first
    length_of_stay: float  # hours
    grid: np.ndarray  # (30, F)
    observed: np.ndarray  # (30, F) bool, True where a measurement exists
    sepsis_onset_hour: float | None = None
    imputed: bool = False

    @property
    def septic(self) -> bool:
        return self.sepsis_onset_hour is not None


@dataclass
class CohortPartition:
    schema: FeatureSchema
    stays_by_icu: dict[str, list[PatientStay]]
    # icu -> patient_id -> fold index, populated by make_splits
    folds: dict[str, dict[str, int]] = field(default_factory=dict)
    n_folds: int = 0

    @property
    def icus(self) -> list[str]:
        return list(self.stays_by_icu)

    def all_stays(self) -> list[PatientStay]:
        return [s for stays in self.stays_by_icu.values() for s in stays]

    def n_patients(self) -> int:
        return len(self.all_stays())

    def train_test_stays(self, icu: str, fold: int):
        """Stays of one ICU split by fold membership (test = the fold)."""
        if not self.folds:
            raise CohortError("partition has no folds; call make_splits first")
        assign = self.folds[icu]
        train = [s for s in self.stays_by_icu[icu] if assign[s.patient_id] != fold]
        test = [s for s in self.stays_by_icu[icu] if assign[s.patient_id] == fold]
        return train, test


def apply_inclusion(stays: list[PatientStay]) -> list[PatientStay]:
    """Keep first-stay-per-patient, length >= 30h, adult ICU stays.

    Total filter: never raises, preserves relative order. Idempotent.
    """
    first_stay: dict[str, int] = {}
    for s in stays:
        if s.patient_id not in first_stay or s.stay_index < first_stay[s.patient_id]:
            first_stay[s.patient_id] = s.stay_index
    kept = []
    for s in stays:
        if s.stay_index != first_stay[s.patient_id]:
            continue
        if s.length_of_stay < N_HOURS:
            continue
        if s.icu_id in EXCLUDED_ICUS or s.icu_id not in ICU_NAMES:
            continue
        kept.append(s)
    return kept


def hourly_aggregate(
    observations: list[RawObservation], schema: FeatureSchema | None = None
):
    """Aggregate raw observations onto the 30-hour grid.

    Within each 1-hour bucket the most recent measurement wins; identical
    timestamps are broken by input order (later record wins). Observations
    at or past hour 30 are ignored.

    Returns (grid, observed) of shape (30, F); unobserved cells are nan.
    """
    schema = schema or default_schema()
    grid = np.full((N_HOURS, schema.n_features), np.nan)
    observed = np.zeros((N_HOURS, schema.n_features), dtype=bool)
    best_ts = np.full((N_HOURS, schema.n_features), -np.inf)
    for obs in observations:
        if obs.feature not in schema:
            raise SchemaError(f"rejected observation: unknown feature {obs.feature!r}")
        if obs.hour_offset < 0:
            raise CohortError(
                f"negative hour_offset {obs.hour_offset} for stay {obs.stay_id}"
            )
        if obs.hour_offset >= N_HOURS:
            continue
        h = int(obs.hour_offset)
        f = schema.index(obs.feature)
        if obs.hour_offset >= best_ts[h, f]:  # >= : file order breaks ties
            best_ts[h, f] = obs.hour_offset
            grid[h, f] = obs.value
            observed[h, f] = True
    return grid, observed


def impute(grid: np.ndarray, observed: np.ndarray, training_means: np.ndarray):
    """Fill missing cells: linear interpolation inside, nearest value at the
    edges, per-feature training mean for fully missing columns.

    Observed cells are never altered. Returns a new complete grid.
    """
    n_hours, n_features = grid.shape
    if training_means.shape != (n_features,):
        raise CohortError("training_means length does not match feature count")
    out = grid.copy()
    hours = np.arange(n_hours)
    for f in range(n_features):
        col_obs = observed[:, f]
        if not col_obs.any():
            if not np.isfinite(training_means[f]):
                raise CohortError(
                    f"feature column {f} fully missing and no training mean available"
                )
            out[:, f] = training_means[f]
            continue
        if col_obs.all():
            continue
        # np.interp does linear interpolation inside and constant
        # (nearest-value) extension outside the observed range.
        out[~col_obs, f] = np.interp(
            hours[~col_obs], hours[col_obs], grid[col_obs, f]
        )
    return out


def training_feature_means(stays: list[PatientStay]) -> np.ndarray:
    """Per-feature mean over observed cells of the given (training) stays."""
    if not stays:
        raise CohortError("cannot compute feature means from an empty training split")
    n_features = stays[0].grid.shape[1]
    total = np.zeros(n_features)
    count = np.zeros(n_features)
    for s in stays:
        obs = s.observed
        total += np.where(obs, s.grid, 0.0).sum(axis=0)
        count += obs.sum(axis=0)
    means = np.full(n_features, np.nan)
    nonzero = count > 0
    means[nonzero] = total[nonzero] / count[nonzero]
    return means


def impute_stay(stay: PatientStay, training_means: np.ndarray) -> PatientStay:
    return replace(
        stay, grid=impute(stay.grid, stay.observed, training_means), imputed=True
    )


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

STATIC_HEADER = [
    "stay_id", "patient_id", "icu", "stay_index", "los_hours",
    "gender", "ethnicity", "age", "height", "weight", "diabetes",
]
TIMESERIES_HEADER = ["stay_id", "hour_offset", "feature", "value"]
LABELS_HEADER = ["stay_id", "sepsis_onset_hour"]


def _read_rows(path, expected_header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortError(f"{path}: empty file") from None
        if header != expected_header:
            raise CohortError(
                f"{path}: bad header {header}; expected {expected_header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise CohortError(f"{path}:{lineno}: expected "
                                  f"{len(expected_header)} fields, got {len(row)}")
            yield lineno, row


def ingest_csv(static_path, timeseries_path, labels_path) -> CohortPartition:
    """Parse, validate, filter, aggregate and partition the three CSVs.

    Output grids are pre-imputation (missing cells nan). Deterministic
    given the input files.
    """
    schema = default_schema()

    candidates: dict[str, PatientStay] = {}
    static_values: dict[str, dict[str, float]] = {}
    order: list[str] = []
    for lineno, row in _read_rows(static_path, STATIC_HEADER):
        rec = dict(zip(STATIC_HEADER, row))
        sid = rec["stay_id"]
        if sid in candidates:
            raise CohortError(f"{static_path}:{lineno}: duplicate stay_id {sid!r}")
        try:
            stay = PatientStay(
                stay_id=sid,
                patient_id=rec["patient_id"],
                icu_id=rec["icu"],
                stay_index=int(rec["stay_index"]),
                length_of_stay=float(rec["los_hours"]),
                grid=np.empty(0),
                observed=np.empty(0),
            )
            static_values[sid] = {
                "gender": schema["gender"].encode(rec["gender"]),
                "ethnicity": schema["ethnicity"].encode(rec["ethnicity"]),
                "age": float(rec["age"]),
                "height": float(rec["height"]),
                "weight": float(rec["weight"]),
                "diabetes": float(int(rec["diabetes"])),
            }
        except (ValueError, SchemaError) as exc:
            raise CohortError(f"{static_path}:{lineno}: {exc}") from None
        candidates[sid] = stay
        order.append(sid)

    obs_by_stay: dict[str, list[RawObservation]] = {sid: [] for sid in candidates}
    for lineno, row in _read_rows(timeseries_path, TIMESERIES_HEADER):
        sid, hour, feature, value = row
        if sid not in candidates:
            raise CohortError(
                f"{timeseries_path}:{lineno}: unknown stay_id {sid!r}"
            )
        if feature not in schema:
            raise CohortError(
                f"{timeseries_path}:{lineno}: unknown feature {feature!r}"
            )
        try:
            obs = RawObservation(sid, feature, float(hour), float(value))
        except ValueError as exc:
            raise CohortError(f"{timeseries_path}:{lineno}: {exc}") from None
        if obs.hour_offset < 0:
            raise CohortError(
                f"{timeseries_path}:{lineno}: negative hour_offset {obs.hour_offset}"
            )
        obs_by_stay[sid].append(obs)

    onset_hours: dict[str, float] = {}
    for lineno, row in _read_rows(labels_path, LABELS_HEADER):
        sid, onset = row
        if sid not in candidates:
            raise CohortError(f"{labels_path}:{lineno}: unknown stay_id {sid!r}")
        if onset.strip() == "":
            continue
        onset_hour = float(onset)
        if not (0.0 < onset_hour <= N_HOURS):
            raise CohortError(
                f"{labels_path}:{lineno}: sepsis_onset_hour {onset_hour} "
                f"outside (0, {N_HOURS}]"
            )
        onset_hours[sid] = onset_hour

    stays = []
    for sid in order:
        stay = candidates[sid]
        grid, observed = hourly_aggregate(obs_by_stay[sid], schema)
        for name, value in static_values[sid].items():
            f = schema.index(name)
            grid[:, f] = value
            observed[:, f] = True
        stay.grid = grid
        stay.observed = observed
        stay.sepsis_onset_hour = onset_hours.get(sid)
        stays.append(stay)

    kept = apply_inclusion(stays)
    by_icu: dict[str, list[PatientStay]] = {icu: [] for icu in ICU_NAMES}
    for s in kept:
        by_icu[s.icu_id].append(s)
    return CohortPartition(schema=schema, stays_by_icu=by_icu)


def make_splits(
    partition: CohortPartition, test_fraction: float, n_folds: int, seed: int
) -> CohortPartition:
    """Assign patient-level stratified folds per ICU, deterministically.

    Fold k's test set is 1/n_folds of patients; positives are dealt
    round-robin so per-fold prevalence is within one patient of perfect
    stratification.
    """
    if not (0.0 < test_fraction < 1.0):
        raise CohortError(f"test_fraction {test_fraction} outside (0, 1)")
    if n_folds < 2:
        raise CohortError(f"n_folds must be >= 2, got {n_folds}")
    rng = np.random.default_rng([seed, 0xF01D])
    folds: dict[str, dict[str, int]] = {}
    for icu, stays in partition.stays_by_icu.items():
        if not stays:
            folds[icu] = {}
            continue
        if len(stays) < n_folds:
            raise CohortError(
                f"ICU {icu} has {len(stays)} patients, fewer than {n_folds} folds"
            )
        pos = sorted(s.patient_id for s in stays if s.septic)
        neg = sorted(s.patient_id for s in stays if not s.septic)
        rng.shuffle(pos)
        rng.shuffle(neg)
        assign: dict[str, int] = {}
        for i, pid in enumerate(pos):
            assign[pid] = i % n_folds
        for i, pid in enumerate(neg):
            # continue the round-robin so fold sizes stay balanced
            assign[pid] = (len(pos) + i) % n_folds
        folds[icu] = assign
    return CohortPartition(
        schema=partition.schema,
        stays_by_icu=partition.stays_by_icu,
        folds=folds,
        n_folds=n_folds,
    )


@dataclass(frozen=True)
class Normalization:
    """Per-feature z-score statistics from a (per-client) training split."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, stays: list[PatientStay]) -> "Normalization":
        if not stays:
            raise CohortError("cannot fit normalization on an empty split")
        data = np.stack([s.grid for s in stays])  # (N, 30, F)
        mean = data.mean(axis=(0, 1))
        std = data.std(axis=(0, 1))
        std = np.where(std < 1e-8, 1.0, std)
        return cls(mean=mean, std=std)

    def apply(self, grid: np.ndarray) -> np.ndarray:
        return (grid - self.mean) / self.std
