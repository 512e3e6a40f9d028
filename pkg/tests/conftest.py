import numpy as np
import pytest

from ahhorizons.adssch import FamilyEvaluator, make_params
from ahhorizons.gluing import build_spec, glued_profile, junction_grid, select_taus
from ahhorizons.solver import MollifierSpec, defect, mollify, solve_bvp


@pytest.fixture(scope="session")
def family():
    cache = {}

    def get(M):
        if M not in cache:
            cache[M] = FamilyEvaluator(make_params(M))
        return cache[M]

    return get


@pytest.fixture(scope="session")
def glued(family):
    cache = {}

    def get(M, rho_max=10.0, n=2001):
        key = (M, rho_max, n)
        if key not in cache:
            ev = family(M)
            tau1, tau2 = select_taus(ev.params, ev)
            spec = build_spec(ev.params, tau1, tau2, ev)
            cache[key] = glued_profile(ev, spec, junction_grid(spec, rho_max, n))
        return cache[key]

    return get


@pytest.fixture(scope="session")
def solved(glued):
    cache = {}

    def get(M, eps, method="newton"):
        key = (M, eps, method)
        if key not in cache:
            psi = glued(M)
            f_eps = mollify(defect(psi), MollifierSpec(eps, psi.spec.tau2))
            cache[key] = solve_bvp(f_eps, psi, method=method)
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from test_acceptance import ACCEPTANCE_KEY

    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
