import pytest

from fedcohort import compute_reference, make_logistic, make_quadratic


@pytest.fixture(scope="session")
def quad_problem():
    return make_quadratic(d=6, M=4, kappa=100.0, seed=1)


@pytest.fixture(scope="session")
def logi_problem():
    return make_logistic(d=8, M=4, N=12, seed=3, kappa=100.0)


@pytest.fixture(scope="session")
def quad_reference(quad_problem):
    return compute_reference(quad_problem)


@pytest.fixture(scope="session")
def logi_reference(logi_problem):
    return compute_reference(logi_problem)
