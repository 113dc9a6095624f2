import numpy as np
import pytest

from fedhorizon.cohort import PatientStay
from fedhorizon.schema import N_HOURS, default_schema


@pytest.fixture(scope="session")
def schema():
    return default_schema()


def make_stay(stay_id="s1", patient_id=None, icu="MICU", stay_index=1,
              los=45.0, onset=None, fill=0.0, imputed=True, n_features=26):
    grid = np.full((N_HOURS, n_features), fill, dtype=float)
    observed = np.ones((N_HOURS, n_features), dtype=bool)
    return PatientStay(
        stay_id=stay_id,
        patient_id=patient_id or f"pat_{stay_id}",
        icu_id=icu,
        stay_index=stay_index,
        length_of_stay=los,
        grid=grid,
        observed=observed,
        sepsis_onset_hour=onset,
        imputed=imputed,
    )
