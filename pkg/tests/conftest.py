import numpy as np
import pytest

from ducctk.determinants import Determinant
from ducctk.operators import (
    BARE_VACUUM,
    AntiHermitianGenerator,
    FermiVacuum,
    NormalOrderedOperator,
    antisymmetrize_two_body,
)

FIXTURES = __import__("pathlib").Path(__file__).parent / "fixtures"


def random_hermitian_operator(n, rng, scale=1.0, vacuum=BARE_VACUUM, scalar=None):
    h = rng.normal(scale=scale, size=(n, n))
    h = 0.5 * (h + h.T)
    raw = rng.normal(scale=scale, size=(n, n, n, n))
    v = antisymmetrize_two_body(raw)
    v = 0.5 * (v + v.transpose(2, 3, 0, 1))
    s = rng.normal() if scalar is None else scalar
    return NormalOrderedOperator(n, vacuum, s, h, v)


def random_antihermitian_generator(n, rng, scale=1.0, vacuum=BARE_VACUUM):
    h = rng.normal(scale=scale, size=(n, n))
    h = 0.5 * (h - h.T)
    raw = rng.normal(scale=scale, size=(n, n, n, n))
    v = antisymmetrize_two_body(raw)
    v = 0.5 * (v - v.transpose(2, 3, 0, 1))
    return AntiHermitianGenerator(n, vacuum, h, v)


def random_reference(n, rng, n_electrons=None):
    """Random determinant over n spin orbitals (n even)."""
    k = n // 2
    if n_electrons is None:
        n_electrons = int(rng.integers(1, n))
    spins = rng.permutation(n)[:n_electrons]
    alpha = beta = 0
    for p in spins:
        if p % 2 == 0:
            alpha |= 1 << (p // 2)
        else:
            beta |= 1 << (p // 2)
    return Determinant(alpha, beta)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
