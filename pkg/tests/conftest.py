import numpy as np
import pytest

from hivproj.mlt import CalibrationMatrix, calibrate_mlt
from hivproj.synthetic import synthetic_calibration_columns, synthetic_mlt_truth


def make_matrix(noise_sd=0.0, master_seed=0):
    truth = synthetic_mlt_truth()
    log_mx, e0, prev = synthetic_calibration_columns(truth, noise_sd=noise_sd,
                                                     master_seed=master_seed)
    n = log_mx.shape[1]
    matrix = CalibrationMatrix(
        log_mx=log_mx,
        countries=tuple(f"C{i % 12:03d}" for i in range(n)),
        period_starts=np.array([1970 + 5 * (i % 9) for i in range(n)]),
        e0_female=e0,
        prevalence=prev,
    )
    return truth, matrix


@pytest.fixture(scope="session")
def mlt_truth_and_matrix():
    return make_matrix()


@pytest.fixture(scope="session")
def mlt_basis(mlt_truth_and_matrix):
    _, matrix = mlt_truth_and_matrix
    return calibrate_mlt(matrix)


@pytest.fixture(scope="session")
def noisy_mlt_matrix():
    return make_matrix(noise_sd=0.02, master_seed=7)[1]
