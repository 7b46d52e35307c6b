import time
import warnings

import numpy as np
import pytest

from robdict import geometry as geo
from robdict import problems as pb
from registry import SETUP_SECONDS, VERDICTS

HEAT_SEED = 0


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(VERDICTS):
        ok, detail = VERDICTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")


@pytest.fixture
def verdict():
    """Record one acceptance verdict, then assert it."""
    def record(name, ok, detail):
        VERDICTS[name] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, detail
    return record


@pytest.fixture(scope="session")
def heat_split():
    """Desk-scale heat data: 1000 samples on 2000 nodes, shuffled 500/500."""
    t = time.perf_counter()
    s = pb.generate_heat1d_dataset(1000, 2000, HEAT_SEED)
    split = pb.split_snapshot_set(s, 500, HEAT_SEED)
    SETUP_SECONDS["heat_split"] = time.perf_counter() - t
    return split


@pytest.fixture(scope="session")
def heat_matrices(heat_split):
    train, test = heat_split
    t = time.perf_counter()
    with warnings.catch_warnings():
        # lambda1, L and u0 are constant over the dataset
        warnings.simplefilter("ignore", RuntimeWarning)
        scaler = geo.ParameterScaler.fit(pb.parameter_vectors(train))
        D = {m: geo.dissimilarity_matrix(train, m) for m in
             ("sine", "euclid_solution", "euclid_parameter")}
        cross = {m: geo.cross_dissimilarity(test, train, m, scaler=scaler) for m in D}
    SETUP_SECONDS["heat_matrices"] = time.perf_counter() - t
    return D, cross


@pytest.fixture(scope="session")
def small_heat():
    s = pb.generate_heat1d_dataset(60, 101, 3)
    return pb.split_snapshot_set(s, 40, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
