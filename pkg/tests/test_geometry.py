import numpy as np
import pytest
import scipy.sparse as spm
import scipy.sparse.linalg as spla
import scipy.special as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from detlab.flags import collect_flags
from detlab.geometry import (
    GeometryError,
    ModalFunction,
    boundary_trace_kernels,
    free_dtn_mode,
    free_ntd_mode,
    free_resolvent_fields,
    green_kernel,
    make_domain,
    radial_solutions,
    solve_helmholtz_bvp,
)
from detlab.numerics import principal_sqrt


@pytest.fixture(scope="module")
def disk():
    return make_domain("disk", 8, 48)


@pytest.fixture(scope="module")
def ball():
    return make_domain("ball-radial", 0, 48)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 8), st.floats(-6, 6), st.floats(0.2, 4))
def test_disk_dtn_matches_bessel(n, x, y):
    dom = make_domain("disk", 8, 16)
    z = complex(x, y)
    k = principal_sqrt(z)
    ref = -k * sps.jvp(n, k) / sps.jv(n, k)
    assert abs(free_dtn_mode(dom, n, z) - ref) < 1e-9 * max(1, abs(ref))
    assert free_dtn_mode(dom, -n, z) == pytest.approx(free_dtn_mode(dom, n, z), rel=1e-13)


@pytest.mark.parametrize("z", [-1.0, -4 + 2j, 3 + 1j])
def test_ball_dtn_closed_form(ball, z):
    k = principal_sqrt(z)
    # u = sin(k r) / r gives u'(1) / u(1) = k cot k - 1
    ref = 1.0 - k / np.tan(k)
    assert free_dtn_mode(ball, 0, z) == pytest.approx(ref, rel=1e-10)
    assert free_ntd_mode(ball, 0, z) == pytest.approx(-1 / ref, rel=1e-10)


def fd_dirichlet_mode(n, z, f, m=1600):
    """Second-order flux-form finite differences for
    -(1/r)(r u')' + n^2 u / r^2 - z u = f on (0, 1), u(0) = u(1) = 0 (n != 0)."""
    h = 1.0 / m
    r = h * np.arange(1, m)
    rp, rm = r + h / 2, r - h / 2
    main = (rp + rm) / (r * h * h) + n * n / r**2 - z
    lo = -rm[1:] / (r[1:] * h * h)
    up = -rp[:-1] / (r[:-1] * h * h)
    a = spm.diags([lo, main, up], [-1, 0, 1], format="csc").astype(complex)
    return r, spla.spsolve(a, f(r).astype(complex))


@pytest.mark.parametrize("n", [1, 2])
def test_free_resolvent_against_finite_differences(disk, n):
    z = -1.0
    fn = ModalFunction.from_modes({n: [1.0, 0.0, -0.5]}, envelope=1.0)
    field = free_resolvent_fields(disk, z, [fn])["dirichlet"][0]
    got = field.values[disk.mode_index(n)]
    errs = []
    for m in (400, 1600):
        r, u = fd_dirichlet_mode(n, z, lambda s: fn.profile(n, s), m)
        errs.append(np.max(np.abs(got - np.interp(disk.nodes, r, u))) / np.max(np.abs(u)))
    # the oracle is second order, so the gap must shrink like h^2
    assert errs[1] < 1e-4 and errs[0] / errs[1] > 10
    assert abs(field.trace[disk.mode_index(n)]) < 1e-12


def test_green_kernel_symmetry_and_boundary(disk):
    rng = np.random.default_rng(3)
    x = np.column_stack([rng.uniform(0.1, 0.9, 6), rng.uniform(0, 2 * np.pi, 6)])
    xp = np.column_stack([rng.uniform(0.1, 0.9, 6), rng.uniform(0, 2 * np.pi, 6)])
    z = -2.0
    with collect_flags():
        _check_green_symmetry(disk, x, xp, z)


def _check_green_symmetry(disk, x, xp, z):
    for bc in ("dirichlet", "neumann"):
        g = green_kernel(disk, bc, z, x, xp)
        assert np.allclose(g, green_kernel(disk, bc, z, xp, x), rtol=1e-12)
        assert np.max(np.abs(g.imag)) < 1e-12 * np.max(np.abs(g))
    near = np.column_stack([np.full(6, 1 - 1e-7), xp[:, 1]])
    assert np.max(np.abs(green_kernel(disk, "dirichlet", z, x, near))) < 1e-5
    with pytest.raises(GeometryError):
        green_kernel(disk, "dirichlet", z, x, x)


def test_green_kernel_flags_truncation():
    dom = make_domain("disk", 2, 16)
    with collect_flags() as flags:
        green_kernel(dom, "dirichlet", -1.0, np.array([0.5, 0.0]), np.array([0.5, 0.01]))
    assert any(f.startswith("truncation") for f in flags)


def test_helmholtz_bvp_traces(disk):
    z = -1 + 0.5j
    u = solve_helmholtz_bvp(disk, "dirichlet", {3: 1.0, -1: 2j}, z)
    assert u.trace[disk.mode_index(3)] == pytest.approx(1.0)
    assert u.normal[disk.mode_index(3)] == pytest.approx(-free_dtn_mode(disk, 3, z))
    v = solve_helmholtz_bvp(disk, "neumann", {0: 1.0}, z)
    assert v.normal[disk.mode_index(0)] == pytest.approx(1.0)
    assert v.trace[disk.mode_index(0)] == pytest.approx(free_ntd_mode(disk, 0, z))
    with pytest.raises(GeometryError):
        solve_helmholtz_bvp(disk, "robin", {0: 1.0}, z)


def test_boundary_trace_kernel_matches_modal_normal_trace(disk):
    z = -1.5
    f = ModalFunction.from_modes({1: [1.0, 0.3], -2: [0.5j]}, envelope=0.8)
    a_d, _ = boundary_trace_kernels(disk, z, 24)
    grid = disk.interior_grid(24)
    samples = f.evaluate(grid.nodes[:, 0], grid.nodes[:, 1])
    field = free_resolvent_fields(disk, z, [f])["dirichlet"][0]
    theta = disk.boundary_grid.nodes
    modal = np.exp(1j * np.outer(theta, disk.modes)) @ field.normal
    assert np.max(np.abs(a_d.entries @ samples - modal)) < 1e-10 * np.max(np.abs(modal))


def test_radial_solution_pair(disk):
    pair = radial_solutions(disk, 2, "dirichlet", -1.0)
    assert pair.wronskian_norm != 0
    assert abs(pair.matched_boundary[0]) < 1e-12


def test_domain_validation():
    with pytest.raises(GeometryError):
        make_domain("torus", 4, 8)
    with pytest.raises(GeometryError):
        make_domain("disk", 4, 8, n_boundary=8)
    with pytest.raises(GeometryError):
        make_domain("ball-radial", 0, 8).mode_index(1)
