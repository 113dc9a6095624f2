"""Seeded synthetic cohort generator.

Produces cohorts matching the CSV ingestion schema so the full pipeline
runs without access-gated data. Septic patients receive a planted drift
in a subset of vital features that ramps up towards onset, so windows
close to onset are genuinely easier than distant ones, and each ICU gets
its own mean shift to emulate client heterogeneity.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .cohort import CohortPartition, PatientStay
from .schema import ICU_NAMES, N_HOURS, default_schema

# Table-derived per-ICU patient counts scaled to desk size (x0.1).
DEFAULT_COUNTS = {
    "MICU/SICU": 550,
    "TSICU": 606,
    "CVICU": 346,
    "MICU": 438,
    "NSICU": 351,
    "SICU": 400,
    "CCU": 171,
}

# Baseline (mean, sd) per time-varying feature, loosely physiological.
FEATURE_BASELINES = {
    "platelet": (250.0, 80.0),
    "leukocytes": (9.0, 3.0),
    "po2": (95.0, 15.0),
    "fio2": (0.45, 0.12),
    "lactate": (1.6, 0.7),
    "creatinine": (1.1, 0.5),
    "bilirubin": (0.9, 0.5),
    "gcs": (13.0, 2.5),
    "crp": (40.0, 25.0),
    "diastolic_bp": (70.0, 10.0),
    "systolic_bp": (120.0, 15.0),
    "mean_bp": (85.0, 12.0),
    "resp_rate": (17.0, 4.0),
    "temperature": (37.0, 0.6),
    "spo2": (96.0, 2.5),
    "urine_output": (80.0, 30.0),
    "glucose": (130.0, 35.0),
    "heart_rate": (85.0, 15.0),
    "sofa": (3.0, 2.0),
}

# Vital features carrying the planted pre-onset drift.
SIGNAL_FEATURES = (
    "heart_rate", "resp_rate", "temperature", "lactate",
    "leukocytes", "creatinine", "sofa",
)

# Heterogeneity: scale of the per-ICU mean offset, in units of feature sd.
# CVICU and NSICU are deliberately dissimilar from the rest.
DEFAULT_SHIFTS = {
    "MICU/SICU": 0.15,
    "TSICU": 0.2,
    "CVICU": 0.9,
    "MICU": 0.1,
    "NSICU": 1.0,
    "SICU": 0.2,
    "CCU": 0.3,
}


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    counts: dict = field(default_factory=lambda: dict(DEFAULT_COUNTS))
    prevalence: float = 0.3
    shifts: dict = field(default_factory=lambda: dict(DEFAULT_SHIFTS))
    missingness: float = 0.15
    seed: int = 42
    signal_amp: float = 2.4  # drift size at onset, in units of feature sd
    signal_lead: float = 26.0  # hours before onset at which the ramp starts
    signal_base: float = 0.12  # fraction of signal_amp present from hour 0
    onset_bias: float = 3.0  # >1 skews onset hours late; 1.0 = uniform
    amp_jitter: float = 0.7  # per-stay amp factor ~ U(1-j, 1+j)
    slow_frac: float = 0.0  # fraction of septic stays that are slow burners
    slow_level: float = 0.25  # their flat drift, as a fraction of signal_amp
    sign_flip_p: float = 0.5  # per-feature drift inversion chance (slow burners)
    noise_scale: float = 1.25  # AR(1) noise multiplier (0 = noise-free)
    ar_rho: float = 0.85

    def validate(self) -> None:
        if not self.counts:
            raise SynthError("counts must not be empty")
        for icu, n in self.counts.items():
            if icu not in ICU_NAMES:
                raise SynthError(f"unknown ICU {icu!r}")
            if n < 1:
                raise SynthError(f"count for {icu} must be >= 1, got {n}")
        if not (0.0 < self.prevalence < 1.0):
            raise SynthError(f"prevalence {self.prevalence} outside (0, 1)")
        if not (0.0 <= self.missingness < 1.0):
            raise SynthError(f"missingness {self.missingness} outside [0, 1)")
        if self.signal_lead <= 0:
            raise SynthError("signal_lead must be positive")
        if not (0.0 <= self.signal_base <= 1.0):
            raise SynthError(f"signal_base {self.signal_base} outside [0, 1]")
        if self.onset_bias <= 0:
            raise SynthError(f"onset_bias {self.onset_bias} must be positive")
        if not (0.0 <= self.amp_jitter < 1.0):
            raise SynthError(f"amp_jitter {self.amp_jitter} outside [0, 1)")
        if not (0.0 <= self.slow_frac < 1.0):
            raise SynthError(f"slow_frac {self.slow_frac} outside [0, 1)")
        if not (0.0 <= self.slow_level <= 1.0):
            raise SynthError(f"slow_level {self.slow_level} outside [0, 1]")
        if not (0.0 <= self.sign_flip_p <= 1.0):
            raise SynthError(
                f"sign_flip_p {self.sign_flip_p} outside [0, 1]")


def signal_drift(hour: float, onset: float, lead: float) -> float:
    """Fraction of the full drift present at a given hour: a linear ramp
    from 0 at (onset - lead) to 1 at onset, clipped to [0, 1]."""
    return float(np.clip((hour - (onset - lead)) / lead, 0.0, 1.0))


def generate_cohort(config: SynthConfig) -> CohortPartition:
    """Deterministic synthetic CohortPartition (pre-imputation)."""
    config.validate()
    schema = default_schema()
    ts_names = list(FEATURE_BASELINES)
    sig_idx = [ts_names.index(n) for n in SIGNAL_FEATURES]
    mu = np.array([FEATURE_BASELINES[n][0] for n in ts_names])
    sd = np.array([FEATURE_BASELINES[n][1] for n in ts_names])
    ts_cols = np.array([schema.index(n) for n in ts_names])
    vent_col = schema.index("mech_vent")

    stays_by_icu: dict[str, list[PatientStay]] = {icu: [] for icu in ICU_NAMES}
    for icu_idx, icu in enumerate(ICU_NAMES):
        n = config.counts.get(icu, 0)
        if n == 0:
            continue
        rng = np.random.default_rng([config.seed, icu_idx])
        shift_scale = config.shifts.get(icu, 0.0)
        # fixed per-ICU offset direction, stable under the master seed
        shift = rng.standard_normal(len(ts_names)) * shift_scale * sd
        for i in range(n):
            septic = rng.random() < config.prevalence
            onset_u = rng.random()
            if septic:
                # inverse-CDF of p(o) ∝ ((o-6)/24)^(bias-1): bias 1 is
                # uniform, larger values concentrate onsets late in the stay
                onset = 6.0 + 24.0 * onset_u ** (1.0 / config.onset_bias)
            else:
                onset = None
            if onset is not None and onset <= 6.0:
                onset = 6.0 + 1e-6  # open interval (6, 30]

            hours = np.arange(N_HOURS)
            # AR(1) series per feature around the shifted baseline
            eps = rng.standard_normal((N_HOURS, len(ts_names)))
            series = np.empty_like(eps)
            rho = config.ar_rho
            series[0] = eps[0]
            for h in range(1, N_HOURS):
                series[h] = rho * series[h - 1] + np.sqrt(1 - rho**2) * eps[h]
            values = mu + shift + config.noise_scale * sd * series
            if septic:
                # weak constant elevation from admission plus a ramp
                # towards onset: far-from-onset windows carry a subtle
                # signal, near-onset windows a strong one
                ramp = np.clip((hours - (onset - config.signal_lead))
                               / config.signal_lead, 0.0, 1.0)
                signs = np.ones(len(sig_idx))
                if rng.random() < config.slow_frac:
                    # slow burner: flat moderate drift from admission that
                    # never develops the sharp pre-onset ramp, with a
                    # patient-specific mix of elevated and depressed vitals
                    level = np.full_like(ramp, config.slow_level)
                    signs = np.where(
                        rng.random(len(sig_idx)) < config.sign_flip_p,
                        -1.0, 1.0)
                else:
                    level = (config.signal_base
                             + (1.0 - config.signal_base) * ramp)
                # per-stay amplitude factor tied to the onset draw: patients
                # who decompensate early in the stay also express the drift
                # weakly, so their few pre-onset windows are the hard cases
                factor = 1.0 + config.amp_jitter * (2.0 * onset_u - 1.0)
                values[:, sig_idx] += (factor * config.signal_amp
                                       * sd[sig_idx] * signs * level[:, None])

            grid = np.full((N_HOURS, schema.n_features), np.nan)
            observed = np.zeros((N_HOURS, schema.n_features), dtype=bool)
            keep = rng.random((N_HOURS, len(ts_names))) >= config.missingness
            grid[:, ts_cols] = np.where(keep, values, np.nan)
            observed[:, ts_cols] = keep
            # mechanical ventilation: constant per stay, recorded hourly
            vent = float(rng.random() < 0.3)
            keep_vent = rng.random(N_HOURS) >= config.missingness
            grid[:, vent_col] = np.where(keep_vent, vent, np.nan)
            observed[:, vent_col] = keep_vent

            static = {
                "gender": float(rng.integers(0, 2)),
                "ethnicity": float(rng.integers(0, 6)),
                "age": float(np.clip(rng.normal(65, 15), 18, 100)),
                "height": float(rng.normal(170, 10)),
                "weight": float(np.clip(rng.normal(80, 15), 40, 200)),
                "diabetes": float(rng.random() < 0.25),
            }
            for name, value in static.items():
                col = schema.index(name)
                grid[:, col] = value
                observed[:, col] = True

            stays_by_icu[icu].append(PatientStay(
                stay_id=f"s{icu_idx}_{i:05d}",
                patient_id=f"p{icu_idx}_{i:05d}",
                icu_id=icu,
                stay_index=1,
                length_of_stay=float(30.0 + rng.exponential(40.0)),
                grid=grid,
                observed=observed,
                sepsis_onset_hour=onset,
            ))
    return CohortPartition(schema=schema, stays_by_icu=stays_by_icu)


def export_csv(partition: CohortPartition, out_dir) -> dict[str, str]:
    """Write static/timeseries/labels CSVs; round-trips through ingest_csv.

    Only observed cells are emitted as observations (at mid-bucket hour
    offsets), so the re-ingested missingness mask matches exactly.
    """
    os.makedirs(out_dir, exist_ok=True)
    schema = partition.schema
    ts_specs = [f for f in schema.features
                if f.name not in ("gender", "ethnicity", "age", "height",
                                  "weight", "diabetes")]
    paths = {
        "static": os.path.join(out_dir, "static.csv"),
        "timeseries": os.path.join(out_dir, "timeseries.csv"),
        "labels": os.path.join(out_dir, "labels.csv"),
    }
    stays = partition.all_stays()
    with open(paths["static"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stay_id", "patient_id", "icu", "stay_index", "los_hours",
                    "gender", "ethnicity", "age", "height", "weight", "diabetes"])
        for s in stays:
            w.writerow([
                s.stay_id, s.patient_id, s.icu_id, s.stay_index,
                repr(s.length_of_stay),
                schema["gender"].decode(s.grid[0, schema.index("gender")]),
                schema["ethnicity"].decode(s.grid[0, schema.index("ethnicity")]),
                repr(float(s.grid[0, schema.index("age")])),
                repr(float(s.grid[0, schema.index("height")])),
                repr(float(s.grid[0, schema.index("weight")])),
                int(round(s.grid[0, schema.index("diabetes")])),
            ])
    with open(paths["timeseries"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stay_id", "hour_offset", "feature", "value"])
        for s in stays:
            for spec in ts_specs:
                col = schema.index(spec.name)
                for h in range(s.grid.shape[0]):
                    if s.observed[h, col]:
                        w.writerow([s.stay_id, repr(h + 0.5), spec.name,
                                    repr(float(s.grid[h, col]))])
    with open(paths["labels"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stay_id", "sepsis_onset_hour"])
        for s in stays:
            onset = "" if s.sepsis_onset_hour is None else repr(s.sepsis_onset_hour)
            w.writerow([s.stay_id, onset])
    return paths
