import numpy as np
import pytest

from survcf import GeneratorConfig, draw_coefficients, fit_cox, generate_synthetic


def synthetic(n, d, seed, b=None):
    b = draw_coefficients(d, seed) if b is None else np.asarray(b, dtype=float)
    return generate_synthetic(GeneratorConfig(n=n, d=d, b=tuple(b), seed=seed)), b


@pytest.fixture(scope="session")
def cox_d2():
    data, b = synthetic(300, 2, seed=11)
    model, report = fit_cox(data)
    assert report.converged
    return data, model


@pytest.fixture(scope="session")
def cox_d5():
    data, b = synthetic(400, 5, seed=12)
    model, _ = fit_cox(data)
    return data, model
