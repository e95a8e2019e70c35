import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detlab.geometry import ModalFunction, make_domain
from detlab.potential import (
    PotentialError,
    apply,
    factorize,
    kernel_matrix,
    make_potential,
    random_potential,
    zero_potential,
)

DISK = make_domain("disk", 4, 24)
BALL = make_domain("ball-radial", 0, 24)


def weighted(V):
    """Grid matrix of V in orthonormal coordinates of the weighted L2 space."""
    w = np.broadcast_to(V.domain.sphere_area * V.domain.measure, V.psi.shape[1:]).ravel()
    s = np.sqrt(w)
    return s[:, None] * kernel_matrix(V) / s[None, :]


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31 - 1), st.booleans())
def test_trace_norm_matches_dense_svd(rank, seed, sa):
    for dom in (DISK, BALL):
        V = random_potential(dom, rank, np.random.default_rng(seed), self_adjoint=sa)
        dense = np.sum(np.linalg.svd(weighted(V), compute_uv=False))
        assert V.trace_norm == pytest.approx(dense, rel=1e-9)
        assert V.trace() == pytest.approx(np.trace(kernel_matrix(V)), rel=1e-10, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False))
def test_apply_is_linear_and_matches_kernel(seed, c):
    rng = np.random.default_rng(seed)
    V = random_potential(DISK, 3, rng)
    f = rng.normal(size=(DISK.n_modes, 24)) + 1j * rng.normal(size=(DISK.n_modes, 24))
    g = rng.normal(size=(DISK.n_modes, 24))
    lhs = apply(V, f + c * g)
    assert np.allclose(lhs, apply(V, f) + c * apply(V, g), atol=1e-10)
    assert np.allclose(apply(V, f).ravel(), kernel_matrix(V) @ f.ravel(), atol=1e-10)
    assert np.allclose(factorize(V).apply(f), kernel_matrix(V) @ f.ravel(), atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_self_adjoint_detection(rank, seed):
    rng = np.random.default_rng(seed)
    V = random_potential(DISK, rank, rng, self_adjoint=True)
    m = weighted(V)
    assert V.self_adjoint and np.allclose(m, m.conj().T, atol=1e-12 * V.trace_norm)
    W = random_potential(DISK, rank, rng, self_adjoint=False)
    assert not W.self_adjoint


def test_dependent_factors_still_self_adjoint():
    f = ModalFunction.from_modes({0: [1.0, 0.5]}, envelope=1.0)
    g = ModalFunction.from_modes({0: [2.0, 1.0]}, envelope=1.0)
    # 1 f<f,.> + 2 g<g,.> with g = 2f is 9 f<f,.>
    V = make_potential([1.0, 2.0], [f, g], [f, g], DISK)
    assert V.self_adjoint
    assert V.trace_norm == pytest.approx(9.0 * DISK.inner(f.samples(DISK), f.samples(DISK)).real, rel=1e-10)


def test_zero_potential():
    V = zero_potential(DISK)
    assert V.trace_norm == 0.0 and V.self_adjoint
    assert np.all(apply(V, np.ones((DISK.n_modes, 24))) == 0)


def test_validation():
    f = ModalFunction.from_modes({0: [1.0]})
    with pytest.raises(PotentialError):
        make_potential([], [], [], DISK)
    with pytest.raises(PotentialError):
        make_potential([1.0], [f, f], [f], DISK)
    with pytest.raises(PotentialError):
        make_potential([1.0], [ModalFunction.from_modes({1: [1.0]})], [f], BALL)
    with pytest.raises(PotentialError):
        make_potential([1.0], [ModalFunction.from_modes({9: [1.0]})], [f], DISK)
    with pytest.raises(PotentialError):
        make_potential(np.ones(65), [f] * 65, [f] * 65, DISK)
    with pytest.raises(PotentialError):
        apply(make_potential([1.0], [f], [f], DISK), np.ones((2, 2)))
