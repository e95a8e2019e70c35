import numpy as np
import pytest
import scipy.special as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from detlab.determinants import (
    ROUTES,
    boundary_operator,
    bs_det_interior,
    det_swap_property,
    dirichlet_chain_verify,
    dtn_perturbed,
    grid_bs_det,
    neumann_chain_verify,
    nystrom_bs_det,
    perturbed_resolvent_apply,
    reduction,
)
from detlab.geometry import ModalFunction, free_resolvent_fields, make_domain
from detlab.potential import make_potential, random_potential, zero_potential

DISK = make_domain("disk", 6, 32)
BALL = make_domain("ball-radial", 0, 32)


@pytest.fixture(scope="module")
def pot():
    return random_potential(DISK, 3, np.random.default_rng(11), self_adjoint=False)


def test_boundary_operator_rank_bound(pot):
    T = boundary_operator(DISK, pot, -1.0)
    assert T.rank_bound == 3 and T.assembly_route in ROUTES
    assert T.numerical_rank() == 3
    assert np.sum(T.singular_values() > 1e-10 * T.singular_values()[0]) <= T.rank_bound


def test_zero_potential_is_trivial():
    V = zero_potential(DISK)
    assert bs_det_interior(DISK, "dirichlet", V, -1.0) == 1.0
    rep = dirichlet_chain_verify(DISK, V, -1 + 1j)
    for v in rep.quantities.values():
        assert v == pytest.approx(1.0, abs=1e-13)
    assert np.all(boundary_operator(DISK, V, -1.0).modal == 0)


@pytest.mark.parametrize("bc", ["dirichlet", "neumann"])
def test_perturbed_resolvent_solves_second_resolvent_equation(pot, bc):
    z = -1.3 + 0.4j
    f = ModalFunction.from_modes({0: [1.0, -0.2], 2: [0.4j]}, envelope=0.7)
    u = perturbed_resolvent_apply(DISK, bc, pot, z, f)
    g0f = free_resolvent_fields(DISK, z, [f])[bc][0]
    fields = reduction(DISK, pot, z).fields[bc]
    # u + G0 V u = G0 f, with G0 V u = sum_j kappa_j <phi_j, u> G0 psi_j
    c = pot.couplings * pot.coordinates(u.values)
    g0vu = sum(cj * fj.values for cj, fj in zip(c, fields))
    assert np.max(np.abs(u.values + g0vu - g0f.values)) < 1e-11 * np.max(np.abs(g0f.values))


def test_mode_local_selection_rule():
    f = ModalFunction.from_modes({2: [1.0, 0.5]}, envelope=1.0)
    V = make_potential([1.2], [f], [f], DISK)
    modal = boundary_operator(DISK, V, -1.0).modal
    i = DISK.mode_index(2)
    off = modal.copy()
    off[i, i] = 0
    assert abs(modal[i, i]) > 1e-6 and np.max(np.abs(off)) < 1e-14


def test_mode_local_matches_bessel_transform():
    # rank one, mode 0: det(I + kappa <phi, G0_D phi>) with G0_D phi known in closed form at z=-1
    f = ModalFunction.from_modes({0: [1.0]}, envelope=0.0)
    V = make_potential([0.7], [f], [f], make_domain("disk", 0, 64))
    dom = V.domain
    # G0_D 1 = 1 - I0(r) / I0(1) for z = -1; <1, G0_D 1> = 2 pi (1/2 - I1(1)/I0(1))
    pair = 2 * np.pi * (0.5 - sps.iv(1, 1.0) / sps.iv(0, 1.0))
    assert bs_det_interior(dom, "dirichlet", V, -1.0) == pytest.approx(1 + 0.7 * pair, rel=1e-11)


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 2), st.floats(0.2, 2))
def test_conjugation_symmetry(seed, x, y):
    V = random_potential(DISK, 2, np.random.default_rng(seed), self_adjoint=True)
    z = complex(x, y)
    for verify in (dirichlet_chain_verify, neumann_chain_verify):
        a, b = verify(DISK, V, z), verify(DISK, V, np.conj(z))
        if a.flags or b.flags:
            continue
        for k in a.quantities:
            assert abs(b.quantities[k] - np.conj(a.quantities[k])) < 1e-9 * max(1, abs(a.quantities[k]))


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_chains_and_routes_random(seed):
    rng = np.random.default_rng(seed)
    for dom in (DISK, BALL):
        V = random_potential(dom, int(rng.integers(1, 4)), rng)
        z = -1.0 + 0.5j
        rd, rn = dirichlet_chain_verify(dom, V, z), neumann_chain_verify(dom, V, z)
        if rd.flags or rn.flags:
            continue
        assert rd.max_residual() < 1e-8 and rn.max_residual() < 1e-8
        assert rd.quantities["lhs_ratio"] * rn.quantities["lhs_ratio"] == pytest.approx(1.0, rel=1e-10)
        assert dtn_perturbed(dom, V, z).route_residual < 1e-9


def test_eigenvalue_proximity_is_flagged():
    z = sps.jn_zeros(0, 1)[0] ** 2  # first free Dirichlet eigenvalue of the disk
    f = ModalFunction.from_modes({0: [1.0]}, envelope=1.0)
    V = make_potential([0.5], [f], [f], DISK)
    rep = dirichlet_chain_verify(DISK, V, complex(z, 1e-14))
    assert rep.excluded
    assert any(s.startswith("eigenvalue-proximity") for s in rep.flags)


def test_nystrom_full_grid_equals_reduced(pot):
    full, reduced = grid_bs_det(DISK, "dirichlet", pot, -1.0, 24)
    assert full == pytest.approx(reduced, rel=1e-12)


def test_nystrom_orders():
    f = ModalFunction.from_modes({0: [1.0, 0.0, -0.3], 1: [0.5]}, envelope=1.0)
    V = make_potential([1.5], [f], [f], DISK)
    exact = bs_det_interior(DISK, "dirichlet", V, -1.0)
    plain = [abs(nystrom_bs_det(DISK, "dirichlet", V, -1.0, n, subtract=False) - exact) for n in (16, 32)]
    sub = [abs(nystrom_bs_det(DISK, "dirichlet", V, -1.0, n) - exact) for n in (16, 32)]
    assert 3 < plain[0] / plain[1] < 5  # diagonal kink: second order
    assert sub[0] / sub[1] > 10  # subtraction: fourth order
    with pytest.raises(ValueError):
        nystrom_bs_det(DISK, "dirichlet", V, -1.0, 16, n_angular=2)


def test_det_swap_property():
    stats = det_swap_property(trials=50, seed=3)
    assert stats.trials == 50 and stats.max_deviation < 1e-10
    a = [np.ones((4, 1))]
    b = [np.full((1, 4), 0.25)]
    explicit = det_swap_property(a, b)
    assert explicit.max_deviation < 1e-15


def test_domain_mismatch_rejected(pot):
    with pytest.raises(ValueError):
        bs_det_interior(make_domain("disk", 6, 32), "dirichlet", pot, -1.0)


def test_determinants_independent_of_factorization():
    f = ModalFunction.from_modes({0: [1.0, 0.4], 1: [0.3j]}, envelope=0.9)
    g = ModalFunction.from_modes({0: [0.5], -1: [1.0, -0.2]}, envelope=1.2)
    kappa = 1.7 - 0.4j
    a = make_potential([kappa], [f], [g], DISK)
    # kappa absorbed into the left factor, and the same operator split into two terms
    fk = ModalFunction({n: (kappa * c, env) for n, (c, env) in f.terms.items()})
    b = make_potential([1.0], [fk], [g], DISK)
    c = make_potential([0.25 * kappa, 0.75 * kappa], [f, f], [g, g], DISK)
    z = -1.0 + 0.5j
    ref = dirichlet_chain_verify(DISK, a, z).quantities
    for other in (b, c):
        q = dirichlet_chain_verify(DISK, other, z).quantities
        for k in ref:
            assert q[k] == pytest.approx(ref[k], rel=1e-11)
        assert bs_det_interior(DISK, "neumann", other, z) == pytest.approx(
            bs_det_interior(DISK, "neumann", a, z), rel=1e-11)
