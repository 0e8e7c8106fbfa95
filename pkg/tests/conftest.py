import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("kst", deadline=None, max_examples=40)
settings.load_profile("kst")


@pytest.fixture(scope="session")
def circle_basis():
    """Kernel basis from N=4000 rotation samples (tau=0.01, omega=1), option 1."""
    from kst.kernel import SnapshotSet, compute_basis
    from _oracles import circle_samples

    a, X = circle_samples()
    basis, scans = compute_basis(SnapshotSet(X, 0.01), 21, option=1)
    return a, basis, scans


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
