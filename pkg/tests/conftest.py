import numpy as np
import pytest

from hybridbo.benchmarks import get_benchmark
from hybridbo.gp import GpPosterior, TrainingSet


@pytest.fixture(scope="session")
def illustrative():
    return get_benchmark("illustrative")


@pytest.fixture(scope="session")
def flash():
    # coarse reference-optimum grid keeps the suite fast; the full campaign
    # scripts use the default 2000x2000 grid
    return get_benchmark("flash", f_star_grid=(200, 200))


def _records(benchmark, n, seed=0):
    from hybridbo.sampling import latin_hypercube

    rng = np.random.default_rng(seed)
    U = latin_hypercube(n, benchmark.u_lower, benchmark.u_upper, np.random.default_rng(seed))
    return [benchmark.run_trial(i, u, rng) for i, u in enumerate(U)]


@pytest.fixture(scope="session")
def illustrative_gp(illustrative):
    """GP on 8 space-filling trials of the univariate benchmark."""
    records = _records(illustrative, 8)
    data = TrainingSet(
        np.array([r.gp_input for r in records]),
        np.array([r.gp_label for r in records]),
        standardize_mask=illustrative.gp_standardize_mask,
    )
    gp = GpPosterior.fit(data, 5, np.random.default_rng(1))
    return gp, records


@pytest.fixture(scope="session")
def flash_gp(flash):
    """GP on 10 space-filling trials of the flash benchmark."""
    records = _records(flash, 10)
    data = TrainingSet(
        np.array([r.gp_input for r in records]),
        np.array([r.gp_label for r in records]),
        standardize_mask=flash.gp_standardize_mask,
    )
    gp = GpPosterior.fit(data, 5, np.random.default_rng(1))
    return gp, records
