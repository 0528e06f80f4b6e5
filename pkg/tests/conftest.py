"""
🧪 Fixtures compartidas
El proyecto usa layout plano: la raíz del repositorio va en sys.path.
"""
import sys
from pathlib import Path

import pytest
from scipy.stats import poisson, skellam

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from tools.particle_models import ModelKind, make_params  # noqa: E402


@pytest.fixture
def asep_params():
    return make_params(ModelKind.ASEP, p=0.7)


@pytest.fixture
def push_params():
    return make_params(ModelKind.PUSH, p=0.6, mu=0.5)


@pytest.fixture
def asap_params():
    return make_params(ModelKind.ASAP, p=0.7, mu=0.4)


@pytest.fixture
def azrp_params():
    return make_params(ModelKind.AZRP, p=0.6)


@pytest.fixture
def model_params(asep_params, push_params, asap_params, azrp_params):
    return {
        ModelKind.ASEP: asep_params,
        ModelKind.PUSH: push_params,
        ModelKind.ASAP: asap_params,
        ModelKind.AZRP: azrp_params,
    }


def walk_probability(m: int, t: float, p: float, q: float) -> float:
    """P(x(t) - y = m) de un paseo con tasas p (derecha) y q (izquierda), p + q = 1"""
    if q == 0.0:
        return float(poisson.pmf(m, p * t))
    if p == 0.0:
        return float(poisson.pmf(-m, q * t))
    return float(skellam.pmf(m, p * t, q * t))


@pytest.fixture
def walk():
    return walk_probability
