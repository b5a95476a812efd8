import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jcberry import core
from jcberry.core import StateVector, SubspaceVector


def _random_state(rng, n_max):
    v = rng.normal(size=core.dimension(n_max)) + 1j * rng.normal(size=core.dimension(n_max))
    return StateVector(v / np.linalg.norm(v), n_max)


def test_basis_smallest_space():
    labels = core.make_basis(0)
    assert [str(b) for b in labels] == ["|g,0>", "|e,0>", "|f,0>"]


def test_basis_counts_and_order():
    b1 = core.make_basis(1)
    assert len(b1) == 6 and str(b1[-1]) == "|f,1>"
    b4 = core.make_basis(4)
    assert len(b4) == 15
    assert list(b4) == sorted(b4)
    assert all(lab.index == i for i, lab in enumerate(b4))


def test_basis_rejects_negative_cutoff():
    with pytest.raises(ValueError):
        core.make_basis(-1)


def test_pair_indices_are_adjacent():
    for n in range(5):
        i, j = core.pair_indices(n)
        assert core.make_basis(n + 1)[i] == core.label("f", n)
        assert core.make_basis(n + 1)[j] == core.label("g", n + 1)
        assert j == i + 1


def test_inner_product_examples():
    g0 = StateVector.basis(1, "g", 0)
    f0 = StateVector.basis(1, "f", 0)
    assert core.inner_product(g0, g0) == 1
    assert core.inner_product(g0, f0) == 0
    psi = StateVector.from_dict(1, {("g", 0): 1, ("f", 0): 1}).normalize()
    assert core.inner_product(psi, f0) == pytest.approx(1 / math.sqrt(2), abs=1e-15)


def test_inner_product_is_conjugate_linear_in_first_argument():
    rng = np.random.default_rng(1)
    a, b = _random_state(rng, 2), _random_state(rng, 2)
    c = 0.3 - 0.7j
    lhs = core.inner_product(StateVector(c * a.amplitudes, 2), b)
    assert lhs == pytest.approx(np.conj(c) * core.inner_product(a, b), abs=1e-14)
    assert core.inner_product(a, a).imag == 0 and core.inner_product(a, a).real > 0


def test_inner_product_dimension_mismatch():
    with pytest.raises(core.DimensionError):
        core.inner_product(StateVector.basis(1, "g", 0), StateVector.basis(2, "g", 0))


def test_state_vector_wrong_length():
    with pytest.raises(core.DimensionError):
        StateVector(np.ones(5), 1)


def test_embed_examples():
    s = core.embed_subspace(SubspaceVector([1, 0], 0), 1)
    assert s.amplitude("f", 0) == 1 and s.norm() == 1
    s = core.embed_subspace(SubspaceVector([0, 1], 2), 3)
    assert s.amplitude("g", 3) == 1


def test_embed_out_of_range():
    with pytest.raises(IndexError):
        core.embed_subspace(SubspaceVector([1, 0], 2), 2)
    with pytest.raises(IndexError):
        core.project_subspace(StateVector.basis(2, "g", 0), 2)


@settings(max_examples=50, deadline=None)
@given(
    st.integers(0, 4),
    st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1),
)
def test_embed_project_round_trip(n, a, b, c, d):
    v = np.array([a + 1j * b, c + 1j * d])
    if np.linalg.norm(v) < 1e-6:
        v = np.array([1.0, 0.0])
    v = SubspaceVector(v / np.linalg.norm(v), n)
    back = core.project_subspace(core.embed_subspace(v, n + 1), n)
    assert np.array_equal(back.amplitudes, v.amplitudes)
    assert abs(v.norm() - 1) < 1e-12


def test_population_examples():
    assert core.population(StateVector.basis(2, "f", 0), "f") == 1
    psi = StateVector.from_dict(1, {("e", 0): 1, ("f", 0): 1}).normalize()
    assert core.population(psi, "e") == pytest.approx(0.5, abs=1e-15)
    assert core.population(psi, ("f", 0)) == pytest.approx(0.5, abs=1e-15)
    assert core.population(psi, core.Level.g) == 0


def test_populations_sum_to_one():
    rng = np.random.default_rng(7)
    for _ in range(20):
        s = _random_state(rng, 3)
        pops = core.level_populations(s)
        assert sum(pops.values()) == pytest.approx(1.0, abs=1e-12)
        assert all(0 <= p <= 1 for p in pops.values())


def test_normalize_precision():
    rng = np.random.default_rng(3)
    for _ in range(20):
        v = StateVector(rng.normal(size=9) * 1e3 + 1j * rng.normal(size=9), 2).normalize()
        assert abs(v.norm() - 1) < 1e-12


def test_state_is_immutable():
    s = StateVector.basis(1, "g", 0)
    with pytest.raises(ValueError):
        s.amplitudes[0] = 2


def test_norm_preserved_by_random_unitary():
    rng = np.random.default_rng(11)
    m = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    q, _ = np.linalg.qr(m)
    s = _random_state(rng, 2)
    out = StateVector(q @ s.amplitudes, 2)
    assert abs(out.norm() - s.norm()) < 1e-9
    assert core.unitarity_error(q) < 1e-12


def test_hermiticity_helper():
    assert core.is_hermitian(np.array([[1, 2j], [-2j, 0]]))
    assert not core.is_hermitian(np.array([[1, 2j], [2j, 0]]))
