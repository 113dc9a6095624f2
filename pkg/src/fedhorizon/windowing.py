"""Variable-horizon sliding-window sample construction.

Each stay yields 6-hour input windows sliding one hour at a time, each
labeled with whether sepsis onset occurs within the remaining prediction
horizon (hours to the 30h deadline).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohort import PatientStay
from .schema import INPUT_WINDOW, MAX_HORIZON, N_HOURS


class WindowingError(ValueError):
    pass


@dataclass
class Sample:
    features: np.ndarray  # (6, F) or (6, F+1) with time channel
    window_start: int  # t in [0, 24]
    horizon: int  # 25 - t, hours to the labeling deadline
    label: int  # 1 iff sepsis onset ahead of the window
    patient_id: str
    icu_id: str


def make_windows(stay: PatientStay, time_channel: bool = True) -> list[Sample]:
    """Slide a 6h window over the stay grid and emit labeled samples.

    Non-septic stays yield all 25 windows with label 0. Septic stays yield
    only windows whose input data lies entirely before onset (the window's
    last hour bucket [t+5, t+6) must end strictly before the onset hour),
    all with label 1; onset at or inside a window excludes it to avoid
    label leakage. Septic stays with very early onset may yield nothing.
    """
    if not stay.imputed or np.isnan(stay.grid).any():
        raise WindowingError(f"stay {stay.stay_id}: grid must be imputed first")
    onset = stay.sepsis_onset_hour
    samples = []
    for t in range(N_HOURS - INPUT_WINDOW + 1):  # t = 0..24
        if onset is not None and not (t + INPUT_WINDOW < onset):
            break
        window = stay.grid[t : t + INPUT_WINDOW, :]
        if time_channel:
            tcol = np.full((INPUT_WINDOW, 1), t / (N_HOURS - INPUT_WINDOW))
            window = np.concatenate([window, tcol], axis=1)
        samples.append(
            Sample(
                features=window,
                window_start=t,
                horizon=MAX_HORIZON - t,
                label=0 if onset is None else 1,
                patient_id=stay.patient_id,
                icu_id=stay.icu_id,
            )
        )
    return samples


def filter_horizon(samples: list[Sample], horizon: int) -> list[Sample]:
    """Samples at exactly the given prediction horizon (fixed-window mode)."""
    if not (1 <= horizon <= MAX_HORIZON):
        raise WindowingError(f"horizon {horizon} outside [1, {MAX_HORIZON}]")
    return [s for s in samples if s.horizon == horizon]


def as_arrays(samples: list[Sample]):
    """Stack samples into (X, y) arrays for training."""
    if not samples:
        raise WindowingError("no samples to stack")
    X = np.stack([s.features for s in samples]).astype(np.float64)
    y = np.array([s.label for s in samples], dtype=np.float64)
    return X, y
