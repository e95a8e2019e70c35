"""Unit disk and unit ball (spherically symmetric sector).

Everything is separated into angular modes. A function on the disk is stored
as its plain ``exp(i n theta)`` coefficients ``f_n(r)`` for ``|n| <= N``;
on the ball only ``l = 0`` is kept. With ``|S|`` the area of the unit sphere
(``2 pi`` or ``4 pi``) and ``mu = r**(d-1) dr``, inner products read

    <f, g> = |S| sum_n  int conj(f_n) g_n mu .

Radial equations are integrated in scaled form. For a mode with angular
index ``l`` the regular solution is ``u = r**l h`` with

    h'' + (c/r) h' + z h = 0,   c = 2 l + d - 1,   h(0) = 1,

which is smooth and of unit size for every ``l``. The branch fixed by the
boundary condition at ``r = 1`` is ``v = r**(-p) k`` with ``p = l + d - 2``,
integrated inward.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np
from scipy.integrate import solve_ivp

from .flags import EigenvalueProximity, TruncationFlag, raise_flag
from .numerics import (
    NumericsError,
    OperatorMatrix,
    QuadratureGrid,
    as_spectral_point,
    circle_rule,
    gauss_interval,
)

KINDS = ("disk", "ball-radial")
BOUNDARY_CONDITIONS = ("dirichlet", "neumann")

EPS_START = 1e-8
ODE_RTOL = 1e-12
ODE_ATOL = 1e-15
WRONSKIAN_TOL = 1e-12
TRUNCATION_TOL = 1e-10


class GeometryError(ValueError):
    pass


def _check_bc(bc: str) -> str:
    if bc not in BOUNDARY_CONDITIONS:
        raise GeometryError(f"unknown boundary condition {bc!r}")
    return bc


@dataclass(frozen=True, eq=False)
class ModalDomain:
    """Disk with modes ``|n| <= mode_cutoff`` or the radial sector of the ball.

    ``radial_grid`` is a plain rule on ``(0, 1)``; the ``r**(d-1)`` factor is
    applied through :attr:`measure`.
    """

    kind: str
    mode_cutoff: int
    radial_grid: QuadratureGrid
    boundary_grid: QuadratureGrid

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GeometryError(f"unknown domain kind {self.kind!r}")
        if self.mode_cutoff < 0:
            raise GeometryError("mode_cutoff must be >= 0")
        r = self.radial_grid.nodes
        if r.ndim != 1 or np.any(r <= 0.0) or np.any(r >= 1.0):
            raise GeometryError("radial nodes must lie strictly inside (0, 1)")
        if np.any(np.diff(r) <= 0.0):
            raise GeometryError("radial nodes must be increasing")

    @property
    def dim(self) -> int:
        return 2 if self.kind == "disk" else 3

    @property
    def sphere_area(self) -> float:
        return 2.0 * np.pi if self.kind == "disk" else 4.0 * np.pi

    @property
    def modes(self) -> np.ndarray:
        if self.kind == "ball-radial":
            return np.array([0])
        return np.arange(-self.mode_cutoff, self.mode_cutoff + 1)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def mode_index(self, n: int) -> int:
        if self.kind == "ball-radial":
            if n != 0:
                raise GeometryError("ball-radial domains carry only the l = 0 mode")
            return 0
        if abs(n) > self.mode_cutoff:
            raise GeometryError(f"mode {n} exceeds the cutoff {self.mode_cutoff}")
        return int(n) + self.mode_cutoff

    @property
    def nodes(self) -> np.ndarray:
        return self.radial_grid.nodes

    @functools.cached_property
    def measure(self) -> np.ndarray:
        r = self.radial_grid.nodes
        return self.radial_grid.weights * r ** (self.dim - 1)

    def inner(self, f, g) -> complex:
        """``<f, g>`` for modal samples of shape ``(n_modes, n_radial)``."""
        return complex(self.sphere_area * np.sum(np.conj(f) * g * self.measure))

    def interior_grid(self, n_angular: int | None = None) -> QuadratureGrid:
        """Polar (disk) or radial (ball) product grid carrying full weights."""
        if self.kind == "ball-radial":
            return QuadratureGrid(self.nodes, self.sphere_area * self.measure, "radial-ball")
        ang = circle_rule(n_angular or len(self.boundary_grid))
        rr, tt = np.meshgrid(self.nodes, ang.nodes, indexing="ij")
        ww = np.outer(self.measure, ang.weights)
        return QuadratureGrid(np.column_stack([rr.ravel(), tt.ravel()]), ww.ravel(), "disk")


def make_domain(kind: str, mode_cutoff: int = 24, n_radial: int = 64, n_boundary: int | None = None) -> ModalDomain:
    """Standard domain: Gauss-Legendre radial rule, equispaced boundary rule.

    ``n_boundary`` defaults to ``2 * mode_cutoff + 1``, the smallest count for
    which the boundary rule integrates products of admissible modes exactly.
    """
    if kind not in KINDS:
        raise GeometryError(f"unknown domain kind {kind!r}")
    if n_radial < 2:
        raise GeometryError("n_radial must be at least 2")
    radial = gauss_interval(n_radial, 0.0, 1.0)
    if kind == "ball-radial":
        boundary = QuadratureGrid(np.array([0.0]), np.array([4.0 * np.pi]), "circle")
        return ModalDomain(kind, 0, radial, boundary)
    nb = n_boundary or 2 * mode_cutoff + 1
    if nb <= 2 * mode_cutoff:
        raise GeometryError("n_boundary must exceed 2 * mode_cutoff")
    return ModalDomain(kind, mode_cutoff, radial, circle_rule(nb))


def _ell(domain: ModalDomain, n: int) -> int:
    domain.mode_index(n)
    return abs(int(n))


# ---------------------------------------------------------------- functions


@dataclass(frozen=True, eq=False)
class ModalFunction:
    """A function given per mode as ``r**|n| * poly_n(r) * exp(-a_n r**2)``.

    ``terms`` maps a mode to ``(coefficients, a)`` with coefficients in
    ascending powers of ``r``.
    """

    terms: Mapping[int, tuple[np.ndarray, float]]

    def __post_init__(self):
        clean = {}
        for n, (coef, a) in self.terms.items():
            c = np.atleast_1d(np.asarray(coef, dtype=complex))
            if c.ndim != 1 or len(c) == 0:
                raise GeometryError(f"mode {n}: coefficients must be a nonempty list")
            if not np.all(np.isfinite(c)) or not np.isfinite(a):
                raise GeometryError(f"mode {n}: coefficients must be finite")
            if np.any(c != 0):
                c.setflags(write=False)
                clean[int(n)] = (c, float(a))
        object.__setattr__(self, "terms", dict(sorted(clean.items())))

    @classmethod
    def from_modes(cls, modes: Mapping[int, object], envelope: float = 0.0) -> "ModalFunction":
        return cls({n: (c, envelope) for n, c in modes.items()})

    @property
    def modes(self) -> list[int]:
        return list(self.terms)

    @property
    def max_mode(self) -> int:
        return max((abs(n) for n in self.terms), default=0)

    def scaled(self, n: int, r) -> np.ndarray:
        """``f_n(r) / r**|n|``."""
        r = np.asarray(r, dtype=float)
        if n not in self.terms:
            return np.zeros_like(r, dtype=complex)
        coef, a = self.terms[n]
        return np.polynomial.polynomial.polyval(r, coef) * np.exp(-a * r * r)

    def profile(self, n: int, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return r ** abs(n) * self.scaled(n, r)

    def samples(self, domain: ModalDomain) -> np.ndarray:
        """Modal samples on the domain's radial nodes, shape ``(n_modes, n_radial)``."""
        out = np.zeros((domain.n_modes, len(domain.nodes)), dtype=complex)
        for n in self.terms:
            out[domain.mode_index(n)] = self.profile(n, domain.nodes)
        return out

    def conjugate_pairing(self) -> "ModalFunction":
        """The complex conjugate function: mode ``n`` maps to ``-n``."""
        return ModalFunction({-n: (np.conj(c), a) for n, (c, a) in self.terms.items()})

    def evaluate(self, r, theta=0.0) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        total = np.zeros(np.broadcast(r, theta).shape, dtype=complex)
        for n in self.terms:
            total = total + self.profile(n, r) * np.exp(1j * n * theta)
        return total


@dataclass(frozen=True, eq=False)
class SolutionField:
    """Modal samples of an interior field plus its boundary traces.

    ``values[i_mode, i_node]`` on the radial nodes; ``trace`` and ``normal``
    hold the value and outward radial derivative at ``r = 1`` per mode.
    """

    domain: ModalDomain
    values: np.ndarray
    trace: np.ndarray
    normal: np.ndarray

    def __add__(self, other: "SolutionField") -> "SolutionField":
        return SolutionField(self.domain, self.values + other.values, self.trace + other.trace,
                             self.normal + other.normal)

    def __sub__(self, other: "SolutionField") -> "SolutionField":
        return self + other.scale(-1.0)

    def scale(self, c: complex) -> "SolutionField":
        return SolutionField(self.domain, c * self.values, c * self.trace, c * self.normal)

    @staticmethod
    def combine(fields, coeffs) -> "SolutionField":
        fields = list(fields)
        out = fields[0].scale(coeffs[0])
        for f, c in zip(fields[1:], coeffs[1:]):
            out = out + f.scale(c)
        return out


# ---------------------------------------------------------------- radial ODEs


def _integrate_outward(c, src_coef, src_env, z, r_eval):
    """Integrate ``y'' + (c/r) y' + z y = -s(r)`` from ``EPS_START`` to the
    sorted points ``r_eval`` for a batch of channels.

    ``s`` for channel ``j`` is ``polyval(r, src_coef[j]) * exp(-src_env[j] r^2)``;
    channels with a zero source start from the regular value ``y(0) = 1``.
    Returns values and derivatives of shape ``(n_channels, len(r_eval))``.
    """
    c = np.asarray(c, dtype=float)
    coef = np.asarray(src_coef, dtype=complex)
    env = np.asarray(src_env, dtype=float)
    homog = ~np.any(coef != 0, axis=1)
    m = len(c)
    powers = np.arange(coef.shape[1])

    def source(r):
        return (coef @ (r**powers)) * np.exp(-env * r * r)

    def rhs(r, y):
        val, der = y[:m], y[m:]
        return np.concatenate([der, -(c / r) * der - z * val - source(r)])

    e = EPS_START
    s0 = source(0.0)
    y0_val = np.where(homog, 1.0 - z * e * e / (2.0 * (c + 1.0)), -s0 * e * e / (2.0 * (c + 1.0)))
    y0_der = np.where(homog, -z * e / (c + 1.0), -s0 * e / (c + 1.0))
    y0 = np.concatenate([y0_val, y0_der]).astype(complex)
    sol = solve_ivp(rhs, (e, float(r_eval[-1])), y0, method="DOP853", t_eval=r_eval,
                    rtol=ODE_RTOL, atol=ODE_ATOL)
    if not sol.success:
        raise GeometryError(f"radial integration failed: {sol.message}")
    return sol.y[:m], sol.y[m:]


def _integrate_inward(ells, dim, z, start_val, start_der, r_eval):
    """Branch fixed at ``r = 1`` by ``(v(1), v'(1))``, sampled at ``r_eval``
    (descending). Returns the smooth factor ``k = r**p v`` and ``k'``."""
    ells = np.asarray(ells, dtype=float)
    p = ells + dim - 2
    coeff = 3.0 - dim - 2.0 * ells
    m = len(ells)

    def rhs(r, y):
        k, dk = y[:m], y[m:]
        return np.concatenate([dk, -(coeff / r) * dk - z * k])

    k1 = np.asarray(start_val, dtype=complex) * np.ones(m)
    dk1 = np.asarray(start_der, dtype=complex) + p * k1
    t_eval = np.asarray(r_eval, dtype=float)
    sol = solve_ivp(rhs, (1.0, float(t_eval[-1])), np.concatenate([k1, dk1]), method="DOP853",
                    t_eval=t_eval, rtol=ODE_RTOL, atol=ODE_ATOL)
    if not sol.success:
        raise GeometryError(f"radial integration failed: {sol.message}")
    return sol.y[:m], sol.y[m:]


def _matched_start(bc: str):
    return (0.0, 1.0) if bc == "dirichlet" else (1.0, 0.0)


class _FreeModes(NamedTuple):
    ells: np.ndarray
    h: np.ndarray  # scaled regular branch at the nodes, one row per ell
    h1: np.ndarray
    dh1: np.ndarray


@functools.lru_cache(maxsize=32)
def _free_modes(domain: ModalDomain, z: complex) -> _FreeModes:
    ells = np.unique(np.abs(domain.modes))
    c = 2.0 * ells + domain.dim - 1
    r_eval = np.append(domain.nodes, 1.0)
    zero = np.zeros((len(ells), 1))
    val, der = _integrate_outward(c, zero, zero[:, 0], z, r_eval)
    return _FreeModes(ells, val[:, :-1], val[:, -1], der[:, -1])


def _regular_boundary(domain, z, ell):
    """``(u(1), u'(1))`` of the regular branch normalized by ``h(0) = 1``."""
    fm = _free_modes(domain, complex(z))
    i = int(np.searchsorted(fm.ells, ell))
    return fm.h1[i], ell * fm.h1[i] + fm.dh1[i]


class RadialSolutionPair(NamedTuple):
    """Regular and boundary-matched radial solutions of one mode.

    ``regular`` and ``matched`` are samples on the domain's radial nodes;
    ``wronskian_norm`` is ``r**(d-1) (u v' - u' v)``, which is independent of
    ``r``. ``regular_boundary`` and ``matched_boundary`` hold value and
    derivative at ``r = 1``.
    """

    mode: int
    bc: str
    regular: np.ndarray
    matched: np.ndarray
    wronskian_norm: complex
    regular_boundary: tuple[complex, complex]
    matched_boundary: tuple[complex, complex]


def radial_solutions(domain: ModalDomain, mode: int, bc: str, z) -> RadialSolutionPair:
    _check_bc(bc)
    sp = as_spectral_point(z)
    ell = _ell(domain, mode)
    fm = _free_modes(domain, sp.z)
    i = int(np.searchsorted(fm.ells, ell))
    r = domain.nodes
    regular = r**ell * fm.h[i]
    u1, du1 = _regular_boundary(domain, sp.z, ell)
    v1, dv1 = _matched_start(bc)
    k, _ = _integrate_inward([ell], domain.dim, sp.z, v1, dv1, r[::-1])
    v = k[0, ::-1] * r ** (-(ell + domain.dim - 2.0))
    w = u1 * dv1 - du1 * v1
    if abs(w) < WRONSKIAN_TOL:
        raise_flag(EigenvalueProximity, f"{bc} wronskian {abs(w):.2e} for mode {mode} at z = {sp.z}")
    return RadialSolutionPair(int(mode), bc, regular, v, complex(w), (u1, du1),
                              (complex(v1), complex(dv1)))


def radial_branches(domain: ModalDomain, bc: str, z, r):
    """Smooth factors of both radial branches at the points ``r``.

    Returns ``(ells, h, k, wr)``: ``u = r**l h`` is the regular branch,
    ``v = r**(-p) k`` the branch meeting the boundary condition and ``wr`` the
    Wronskian norm, one row per distinct ``|n|``.
    """
    _check_bc(bc)
    sp = as_spectral_point(z)
    r = np.asarray(r, dtype=float)
    ells = np.unique(np.abs(domain.modes))
    c = 2.0 * ells + domain.dim - 1
    zero = np.zeros((len(ells), 1))
    rs, inv = np.unique(r.ravel(), return_inverse=True)
    if rs[0] <= 0.0 or rs[-1] >= 1.0:
        raise GeometryError("radial points must lie strictly inside (0, 1)")
    hv, hd = _integrate_outward(c, zero, zero[:, 0], sp.z, np.append(rs, 1.0))
    u1 = hv[:, -1]
    du1 = ells * u1 + hd[:, -1]
    v1, dv1 = _matched_start(bc)
    k, _ = _integrate_inward(ells, domain.dim, sp.z, v1, dv1, rs[::-1])
    wr = u1 * dv1 - du1 * v1
    if np.any(np.abs(wr) < WRONSKIAN_TOL):
        raise_flag(EigenvalueProximity, f"{bc} wronskian below {WRONSKIAN_TOL:g} at z = {sp.z}")
    return ells, hv[:, :-1][:, inv], k[:, ::-1][:, inv], wr


def _green_from_branches(ell, dim, r_lo, r_hi, h_lo, k_hi, wr):
    return -((r_lo / r_hi) ** ell) * r_hi ** (2.0 - dim) * h_lo * k_hi / wr


def radial_green_matrix(domain: ModalDomain, bc: str, z, r=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-|n| radial kernels ``g(r_i, r_k)`` on the points ``r``.

    Returns ``(ells, g)`` with ``g[j]`` the matrix for ``ells[j]``.
    The diagonal is included: each modal kernel is continuous there.
    """
    r = domain.nodes if r is None else np.asarray(r, dtype=float)
    ells, h, k, wr = radial_branches(domain, bc, z, r)
    below = r[:, None] <= r[None, :]
    idx = np.arange(len(r))
    ilo = np.where(below, idx[:, None], idx[None, :])
    ihi = np.where(below, idx[None, :], idx[:, None])
    out = np.empty((len(ells), len(r), len(r)), dtype=complex)
    for j, ell in enumerate(ells):
        out[j] = _green_from_branches(ell, domain.dim, r[ilo], r[ihi], h[j][ilo], k[j][ihi], wr[j])
    return ells, out


def radial_green_row_integrals(domain: ModalDomain, bc: str, z, r, panel_nodes: int = 48) -> tuple[np.ndarray, np.ndarray]:
    """``int_0^1 g(r_i, s) s**(d-1) ds`` for each point ``r_i`` and each ``|n|``.

    The integrand is smooth on either side of ``s = r_i``, so a Gauss panel on
    each side gives these to near machine precision.
    """
    r = np.asarray(r, dtype=float)
    x, w = np.polynomial.legendre.leggauss(panel_nodes)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    left = r[:, None] * x[None, :]
    right = r[:, None] + (1.0 - r[:, None]) * x[None, :]
    pts = np.concatenate([r, left.ravel(), right.ravel()])
    ells, h, k, wr = radial_branches(domain, bc, z, pts)
    n = len(r)
    m = left.size
    out = np.empty((len(ells), n), dtype=complex)
    for j, ell in enumerate(ells):
        h_r, k_r = h[j, :n], k[j, :n]
        h_l = h[j, n:n + m].reshape(left.shape)
        k_rt = k[j, n + m:].reshape(right.shape)
        g_l = _green_from_branches(ell, domain.dim, left, r[:, None], h_l, k_r[:, None], wr[j])
        g_r = _green_from_branches(ell, domain.dim, r[:, None], right, h_r[:, None], k_rt, wr[j])
        il = (g_l * left ** (domain.dim - 1)) @ w * r
        ir = (g_r * right ** (domain.dim - 1)) @ w * (1.0 - r)
        out[j] = il + ir
    return ells, out


def green_kernel(domain: ModalDomain, bc: str, z, x, xp) -> np.ndarray:
    """Truncated modal Green function ``(H0 - z)^{-1}(x, x')``.

    Points are ``(r, theta)`` pairs for the disk and radii for the ball.
    Arrays of points broadcast; coincident points are rejected.
    """
    _check_bc(bc)
    sp = as_spectral_point(z)
    if domain.kind == "disk":
        x = np.asarray(x, dtype=float)
        xp = np.asarray(xp, dtype=float)
        r, th = x[..., 0], x[..., 1]
        rp, thp = xp[..., 0], xp[..., 1]
    else:
        r = np.asarray(x, dtype=float)
        rp = np.asarray(xp, dtype=float)
        th = thp = np.zeros(())
    r, rp, th, thp = np.broadcast_arrays(r, rp, th, thp)
    if np.any((r == rp) & (np.mod(th - thp, 2 * np.pi) == 0)):
        raise GeometryError("green_kernel is not evaluated on the diagonal")
    if np.any((r <= 0) | (r >= 1) | (rp <= 0) | (rp >= 1)):
        raise GeometryError("points must lie strictly inside the domain")
    pts = np.unique(np.concatenate([r.ravel(), rp.ravel()]))
    ells, g = radial_green_matrix(domain, bc, sp, pts)
    ia = np.searchsorted(pts, r)
    ib = np.searchsorted(pts, rp)
    total = np.zeros(r.shape, dtype=complex)
    last = np.zeros(r.shape, dtype=complex)
    for n in domain.modes:
        j = int(np.searchsorted(ells, abs(n)))
        term = np.exp(1j * n * (th - thp)) * g[j][ia, ib] / domain.sphere_area
        total = total + term
        if abs(n) == domain.mode_cutoff:
            last = last + term
    if domain.kind == "disk" and np.max(np.abs(last), initial=0.0) > TRUNCATION_TOL:
        raise_flag(TruncationFlag, f"last mode contributes {np.max(np.abs(last)):.2e}")
    return total


# ---------------------------------------------------------------- boundary maps


def free_dtn_mode(domain: ModalDomain, mode: int, z) -> complex:
    """Eigenvalue of the free Dirichlet-to-Neumann map on ``exp(i n theta)``.

    The map sends Dirichlet data to minus the outward normal derivative.
    """
    sp = as_spectral_point(z)
    u1, du1 = _regular_boundary(domain, sp.z, _ell(domain, mode))
    if abs(u1) < WRONSKIAN_TOL:
        raise_flag(EigenvalueProximity, f"z = {sp.z} is at a Dirichlet eigenvalue (mode {mode})")
    return complex(-du1 / u1)


def free_ntd_mode(domain: ModalDomain, mode: int, z) -> complex:
    """Eigenvalue of the free Neumann-to-Dirichlet map; equals ``-1/free_dtn_mode``."""
    sp = as_spectral_point(z)
    u1, du1 = _regular_boundary(domain, sp.z, _ell(domain, mode))
    if abs(du1) < WRONSKIAN_TOL:
        raise_flag(EigenvalueProximity, f"z = {sp.z} is at a Neumann eigenvalue (mode {mode})")
    return complex(u1 / du1)


def boundary_trace_kernels(domain: ModalDomain, z, n_angular: int | None = None):
    """Sampled kernels ``A_D`` (boundary x interior) and ``B_N`` (interior x boundary).

    ``A_D(xi, x') = d/dn_xi G0_D(xi, x')`` and ``B_N(x, xi') = G0_N(x, xi')``.
    Entries are kernel values times the column quadrature weight, so a matrix
    product with samples applies the integral operator. Interior rows are
    ordered radius-major as in :func:`numerics.disk_rule`.
    """
    sp = as_spectral_point(z)
    grid = domain.interior_grid(n_angular)
    bgrid = domain.boundary_grid
    if domain.kind == "disk":
        r, th = grid.nodes[:, 0], grid.nodes[:, 1]
    else:
        r, th = grid.nodes, np.zeros(len(grid))
    fm = _free_modes(domain, sp.z)
    n_rad = len(domain.nodes)
    ridx = np.repeat(np.arange(n_rad), len(grid) // n_rad)
    a = np.zeros((len(bgrid), len(grid)), dtype=complex)
    b = np.zeros((len(grid), len(bgrid)), dtype=complex)
    for n in domain.modes:
        ell = abs(int(n))
        j = int(np.searchsorted(fm.ells, ell))
        u_nodes = (domain.nodes**ell * fm.h[j])[ridx]
        u1, du1 = _regular_boundary(domain, sp.z, ell)
        phase = np.exp(1j * n * (bgrid.nodes[:, None] - th[None, :]))
        a += phase * (-u_nodes / u1)[None, :] / domain.sphere_area
        b += phase.T * (u_nodes / du1)[:, None] / domain.sphere_area
    a_mat = OperatorMatrix(a * grid.weights[None, :], bgrid, grid, symmetrized=False)
    b_mat = OperatorMatrix(b * bgrid.weights[None, :], grid, bgrid, symmetrized=False)
    return a_mat, b_mat


def _modal_data(domain: ModalDomain, data) -> np.ndarray:
    if isinstance(data, Mapping):
        out = np.zeros(domain.n_modes, dtype=complex)
        for n, v in data.items():
            out[domain.mode_index(int(n))] = v
        return out
    arr = np.asarray(data, dtype=complex)
    if arr.shape != (domain.n_modes,):
        raise GeometryError(f"boundary data must have {domain.n_modes} modal coefficients")
    return arr


def solve_helmholtz_bvp(domain: ModalDomain, bc: str, boundary_data, z) -> SolutionField:
    """Solve ``(-Delta - z) u = 0`` with Dirichlet value or outward normal
    derivative prescribed by ``boundary_data`` (modal coefficients or a
    ``{mode: coefficient}`` mapping)."""
    _check_bc(bc)
    sp = as_spectral_point(z)
    data = _modal_data(domain, boundary_data)
    fm = _free_modes(domain, sp.z)
    values = np.zeros((domain.n_modes, len(domain.nodes)), dtype=complex)
    trace = np.zeros(domain.n_modes, dtype=complex)
    normal = np.zeros(domain.n_modes, dtype=complex)
    for i, n in enumerate(domain.modes):
        if data[i] == 0:
            continue
        ell = abs(int(n))
        j = int(np.searchsorted(fm.ells, ell))
        u1, du1 = _regular_boundary(domain, sp.z, ell)
        denom = u1 if bc == "dirichlet" else du1
        if abs(denom) < WRONSKIAN_TOL:
            raise_flag(EigenvalueProximity, f"{bc} eigenvalue proximity in mode {n} at z = {sp.z}")
        c = data[i] / denom
        values[i] = c * domain.nodes**ell * fm.h[j]
        trace[i] = c * u1
        normal[i] = c * du1
    return SolutionField(domain, values, trace, normal)


def free_resolvent_fields(domain: ModalDomain, z, functions) -> dict[str, list[SolutionField]]:
    """``(H0_D - z)^{-1} f`` and ``(H0_N - z)^{-1} f`` for each ModalFunction.

    One outward integration per call carries the regular branch and a
    particular solution per (mode, function); the boundary condition is then
    met by adding a multiple of the regular branch.
    """
    sp = as_spectral_point(z)
    functions = list(functions)
    if domain.kind == "ball-radial" and any(f.modes not in ([], [0]) for f in functions):
        raise GeometryError("ball-radial domains accept only l = 0 functions")
    for f in functions:
        if f.max_mode > domain.mode_cutoff:
            raise GeometryError(f"function mode {f.max_mode} exceeds the cutoff {domain.mode_cutoff}")
    chans = sorted({(n, k) for k, f in enumerate(functions) for n in f.modes})
    ells = np.unique(np.abs([n for n, _ in chans])) if chans else np.array([], dtype=int)
    deg = max((len(functions[k].terms[n][0]) for n, k in chans), default=1)
    m_h = len(ells)
    m = m_h + len(chans)
    c = np.empty(m)
    coef = np.zeros((m, deg), dtype=complex)
    env = np.zeros(m)
    c[:m_h] = 2.0 * ells + domain.dim - 1
    for q, (n, k) in enumerate(chans):
        cf, a = functions[k].terms[n]
        c[m_h + q] = 2.0 * abs(n) + domain.dim - 1
        coef[m_h + q, : len(cf)] = cf
        env[m_h + q] = a
    out = {bc: [] for bc in BOUNDARY_CONDITIONS}
    empty = np.zeros((domain.n_modes, len(domain.nodes)), dtype=complex)
    shape_b = np.zeros(domain.n_modes, dtype=complex)
    fields = {bc: [[empty.copy(), shape_b.copy(), shape_b.copy()] for _ in functions]
              for bc in BOUNDARY_CONDITIONS}
    if m:
        r_eval = np.append(domain.nodes, 1.0)
        val, der = _integrate_outward(c, coef, env, sp.z, r_eval)
        for q, (n, k) in enumerate(chans):
            ell = abs(n)
            jh = int(np.searchsorted(ells, ell))
            h, h1, dh1 = val[jh, :-1], val[jh, -1], der[jh, -1]
            w, w1, dw1 = val[m_h + q, :-1], val[m_h + q, -1], der[m_h + q, -1]
            i = domain.mode_index(n)
            for bc in BOUNDARY_CONDITIONS:
                if bc == "dirichlet":
                    denom = h1
                    num = w1
                else:
                    denom = dh1 + ell * h1
                    num = dw1 + ell * w1
                if abs(denom) < WRONSKIAN_TOL:
                    raise_flag(EigenvalueProximity, f"{bc} eigenvalue proximity in mode {n} at z = {sp.z}")
                cc = -num / denom
                fv, tr, nr = fields[bc][k]
                fv[i] = domain.nodes**ell * (w + cc * h)
                tr[i] = w1 + cc * h1
                nr[i] = (dw1 + cc * dh1) + ell * (w1 + cc * h1)
    for bc in BOUNDARY_CONDITIONS:
        out[bc] = [SolutionField(domain, *f) for f in fields[bc]]
    return out


def solve_schrodinger_bvp(domain: ModalDomain, bc: str, V, boundary_data, z) -> SolutionField:
    """Boundary value problem for ``-Delta + V - z`` with a finite-rank ``V``.

    Computed as ``u0 - (H_bc - z)^{-1} V u0`` with ``u0`` the free solution.
    """
    from .determinants import factor_resolvent

    u0 = solve_helmholtz_bvp(domain, bc, boundary_data, z)
    coords = V.coordinates(u0.values)
    return u0 - factor_resolvent(domain, bc, V, z, V.couplings * coords)
