import math

import numpy as np
import pytest

from fourier_accountant import AtomicPLD, build_pld, rr_outputs


def random_pld(rng, n_atoms=None, spread=3.0, delta_inf=None):
    n_atoms = n_atoms or int(rng.integers(1, 12))
    s = rng.uniform(-spread, spread, n_atoms)
    w = rng.dirichlet(np.ones(n_atoms))
    d = rng.uniform(0, 0.2) if delta_inf is None else delta_inf
    return AtomicPLD(s, w * (1 - d), d)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def rr75():
    return build_pld(*rr_outputs(0.75))


@pytest.fixture
def ln3():
    return math.log(3.0)


# acceptance criteria report one line each; see test_acceptance.py
CRITERIA = {}


def record_criterion(number, ok, detail):
    prev = CRITERIA.get(number)
    ok = bool(ok) and (prev is None or prev[0])
    details = detail if prev is None else f"{prev[1]}; {detail}"
    CRITERIA[number] = (ok, details)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
