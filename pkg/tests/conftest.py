import pytest

from formation_isac import beamform, control
from formation_isac.config import ScenarioDoc
from formation_isac.experiments import build_scenario


@pytest.fixture(scope="session")
def desk_doc():
    return ScenarioDoc()


@pytest.fixture(scope="session")
def nominal_derived():
    return control.derive_lqr_terms(ScenarioDoc().control.build())


@pytest.fixture(scope="session")
def desk_scn(desk_doc, nominal_derived):
    """N_s = 12, K = 2, N = 8, J = 8 at 30 dBm and Gamma_th = 0 dBm."""
    return build_scenario(desk_doc, derived=nominal_derived)


@pytest.fixture(scope="session")
def desk_solution(desk_scn):
    return beamform.optimize(desk_scn)
