import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from qtbo import hilbert as hb
from qtbo.hilbert import DensityMatrix, Operator, ShapeError, SpaceShape
from qtbo.lindblad import LindbladModel, dissipator, evolve, liouvillian, rhs

from .conftest import random_density, random_matrix

GAMMA = 0.7


def amplitude_damping(gamma=GAMMA, h=None):
    h = h if h is not None else 0.0 * hb.sigma_z()
    return LindbladModel(h, (np.sqrt(gamma) * hb.sigma_minus(),))


def excited():
    return hb.basis(2, 0).projector()


def random_model(d, n_jumps, rng):
    m = random_matrix(d, rng)
    h = Operator(SpaceShape((d,)), 0.5 * (m + m.conj().T))
    jumps = tuple(Operator(SpaceShape((d,)), 0.4 * random_matrix(d, rng)) for _ in range(n_jumps))
    return LindbladModel(h, jumps)


def liouvillian_oracle(model, rho0, t):
    """exp(t * superoperator) acting on the row-major vectorization."""
    d = model.shape.dim
    return (expm(t * liouvillian(model)) @ rho0.matrix.reshape(-1)).reshape(d, d)


def test_model_validation():
    with pytest.raises(ValueError):
        LindbladModel(hb.sigma_minus())
    with pytest.raises(ShapeError):
        LindbladModel(hb.sigma_z(), (hb.destroy(3),))


def test_dissipator_examples(rng):
    rho = random_density((3,), rng)
    np.testing.assert_array_equal(dissipator(LindbladModel(hb.number(3)), rho).matrix, 0)
    out = dissipator(amplitude_damping(), excited()).matrix
    np.testing.assert_allclose(out, GAMMA * np.diag([-1.0, 1.0]), atol=1e-15)
    m = random_model(4, 2, rng)
    assert abs(np.trace(dissipator(m, random_density((4,), rng)).matrix)) < 1e-12
    with pytest.raises(ShapeError):
        dissipator(m, rho)


def test_rhs_examples(rng):
    rho = random_density((3,), rng)
    zero = LindbladModel(Operator(SpaceShape((3,)), np.zeros((3, 3))))
    np.testing.assert_array_equal(rhs(zero, rho).matrix, 0)
    h = hb.number(3) + 0.2 * (hb.destroy(3) + hb.create(3))
    closed = LindbladModel(h)
    np.testing.assert_allclose(rhs(closed, rho).matrix, -1j * (h.matrix @ rho.matrix - rho.matrix @ h.matrix))
    np.testing.assert_allclose(rhs(amplitude_damping(), excited()).matrix, GAMMA * np.diag([-1.0, 1.0]))
    assert abs(np.trace(rhs(random_model(3, 2, rng), rho).matrix)) < 1e-12


def test_liouvillian_matches_rhs(rng):
    m = random_model(3, 2, rng)
    rho = random_density((3,), rng)
    np.testing.assert_allclose(liouvillian(m) @ rho.matrix.reshape(-1), rhs(m, rho).matrix.reshape(-1), atol=1e-12)


def test_evolve_zero_generator_is_constant(rng):
    rho = random_density((3,), rng)
    zero = LindbladModel(Operator(SpaceShape((3,)), np.zeros((3, 3))))
    times, states = evolve(zero, rho, 0.01, 1.0, 10)
    assert len(states) == 11
    for s in states:
        np.testing.assert_allclose(s.matrix, rho.matrix, atol=1e-15)


def test_evolve_amplitude_damping_closed_form():
    times, states = evolve(amplitude_damping(), excited(), 1e-3, 5.0, 50)
    pe = np.array([s.matrix[0, 0].real for s in states])
    np.testing.assert_allclose(pe, np.exp(-GAMMA * times), atol=1e-6)


def test_evolve_matches_liouvillian_exponential_two_level():
    model = amplitude_damping(h=0.8 * hb.sigma_x() + 0.3 * hb.sigma_z())
    rho0 = DensityMatrix(SpaceShape((2,)), [[0.6, 0.2 - 0.1j], [0.2 + 0.1j, 0.4]])
    times, states = evolve(model, rho0, 1e-3, 3.0, 100)
    err = max(np.max(np.abs(s.matrix - liouvillian_oracle(model, rho0, t))) for t, s in zip(times, states))
    assert err <= 1e-8


def test_evolve_rejects_bad_steps(rng):
    with pytest.raises(ValueError):
        evolve(amplitude_damping(), excited(), 0.0, 1.0)
    with pytest.raises(ValueError):
        evolve(amplitude_damping(), excited(), 0.1, 0.01)


def test_re_hermitized_and_trace_conserved(rng):
    m = random_model(4, 3, rng)
    times, states = evolve(m, random_density((4,), rng), 1e-3, 2.0, 20)
    for s in states:
        assert s.hermiticity_error() <= 1e-9
        assert abs(s.trace() - 1) <= 1e-8


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 3.0))
def test_jump_scaling_is_quadratic(seed, s):
    rng = np.random.default_rng(seed)
    m = random_model(3, 2, rng)
    rho = random_density((3,), rng)
    # the two sides round differently, so compare at relative precision
    lhs = dissipator(m.scaled(s), rho).matrix
    rhs_ = s**2 * dissipator(m, rho).matrix
    np.testing.assert_allclose(lhs, rhs_, rtol=1e-12, atol=1e-14 * s**2)


def test_jump_scaling_exact_for_power_of_two(rng):
    m = random_model(3, 2, rng)
    rho = random_density((3,), rng)
    np.testing.assert_array_equal(dissipator(m.scaled(2.0), rho).matrix, 4.0 * dissipator(m, rho).matrix)
