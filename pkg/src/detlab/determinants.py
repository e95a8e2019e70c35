"""Birman-Schwinger determinants, perturbed resolvents and boundary operators
for finite-rank potentials on modal domains.

Every quantity is reduced to ``r x r`` or modal boundary matrices. With
``Psi``/``Phi`` the factor columns and ``K = diag(kappa)``:

* ``P_bc[j, k] = <phi_j, G0_bc psi_k>`` and ``det(I + u G0 v) = det(I_r + P K)``;
* ``(H_bc - z)^{-1} Psi = G0_bc Psi (I + K P_bc)^{-1}``;
* boundary modes are the plain ``exp(i n theta)``; a boundary matrix ``T``
  acts on coefficient vectors.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .flags import EigenvalueProximity, collect_flags, raise_flag
from .geometry import (
    ModalDomain,
    ModalFunction,
    SolutionField,
    _free_modes,
    _regular_boundary,
    free_resolvent_fields,
    radial_green_matrix,
    radial_green_row_integrals,
    solve_schrodinger_bvp,
)
from .numerics import (
    NearSingularError,
    OperatorMatrix,
    as_spectral_point,
    det_I_plus,
    gauss_interval,
    solve_I_plus,
)
from .potential import FiniteRankPotential
from .reports import IdentityReport

DET_TOL = 1e-12
RANK_TOL = 1e-10
ROUTES = ("difference_form", "product_form", "boundary_sandwich")


class _Reduction(NamedTuple):
    fields: dict  # bc -> list of SolutionField, G0_bc psi_k
    P: dict  # bc -> (r, r)
    a0: np.ndarray  # (n_modes, r): outward normal trace of G0_D psi_k
    beta: np.ndarray  # (r, n_modes): <phi_j, G0_N(., xi) e_m>
    delta: np.ndarray  # (r, n_modes): <phi_j, dn' G0_D(., xi) e_m>
    lam_d: np.ndarray
    lam_n: np.ndarray


@functools.lru_cache(maxsize=32)
def _reduce(domain: ModalDomain, V: FiniteRankPotential, z: complex) -> _Reduction:
    if V.domain is not domain:
        raise ValueError("potential was built on a different domain")
    fields = free_resolvent_fields(domain, z, V.left_factors)
    P = {bc: np.array([V.coordinates(f.values) for f in fl]).T for bc, fl in fields.items()}
    a0 = np.array([f.normal for f in fields["dirichlet"]]).T
    fm = _free_modes(domain, z)
    n_modes = domain.n_modes
    u_over_du = np.zeros((n_modes, len(domain.nodes)), dtype=complex)
    u_over_u = np.zeros_like(u_over_du)
    lam_d = np.zeros(n_modes, dtype=complex)
    lam_n = np.zeros(n_modes, dtype=complex)
    for i, n in enumerate(domain.modes):
        ell = abs(int(n))
        j = int(np.searchsorted(fm.ells, ell))
        u = domain.nodes**ell * fm.h[j]
        u1, du1 = _regular_boundary(domain, z, ell)
        if abs(u1) < DET_TOL or abs(du1) < DET_TOL:
            raise_flag(EigenvalueProximity, f"free eigenvalue proximity in mode {n} at z = {z}")
        u_over_du[i] = u / du1
        u_over_u[i] = u / u1
        lam_d[i] = -du1 / u1
        lam_n[i] = u1 / du1
    w = domain.sphere_area * domain.measure
    beta = np.einsum("jnr,nr->jn", np.conj(V.phi), u_over_du * w)
    delta = -np.einsum("jnr,nr->jn", np.conj(V.phi), u_over_u * w)
    return _Reduction(fields, P, a0, beta, delta, lam_d, lam_n)


def reduction(domain: ModalDomain, V: FiniteRankPotential, z) -> _Reduction:
    return _reduce(domain, V, as_spectral_point(z).z)


def _det(matrix) -> complex:
    res = det_I_plus(matrix)
    if res.singular or abs(res.value) < DET_TOL:
        raise_flag(EigenvalueProximity, f"|det| = {abs(res.value):.2e} below {DET_TOL:g}")
    return res.value


def bs_det_interior(domain: ModalDomain, bc: str, V: FiniteRankPotential, z) -> complex:
    """``det(I + u (H0_bc - z)^{-1} v)`` as ``det(I_r + P K)``."""
    red = reduction(domain, V, z)
    return _det(red.P[bc] * V.couplings[None, :])


def _solve(matrix, rhs):
    """Solve ``(I + matrix) x = rhs``; flag instead of failing near singularity."""
    try:
        return solve_I_plus(matrix, rhs)
    except NearSingularError as exc:
        raise_flag(EigenvalueProximity, f"reduced system near singular ({exc})")
        return np.linalg.lstsq(np.eye(len(matrix)) + matrix, rhs, rcond=None)[0]


def factor_resolvent(domain: ModalDomain, bc: str, V: FiniteRankPotential, z, coeffs) -> SolutionField:
    """``(H_bc - z)^{-1} sum_j c_j psi_j`` for the coefficient vector ``coeffs``."""
    red = reduction(domain, V, z)
    k = V.couplings
    c = np.asarray(coeffs, dtype=complex)
    x = _solve(k[:, None] * red.P[bc], c)
    return SolutionField.combine(red.fields[bc], x)


def perturbed_resolvent_apply(domain: ModalDomain, bc: str, V: FiniteRankPotential, z,
                              f: ModalFunction) -> SolutionField:
    """``(H_bc - z)^{-1} f = G0 f - R Psi K Phi^* G0 f`` for a ModalFunction ``f``."""
    sp = as_spectral_point(z)
    g0f = free_resolvent_fields(domain, sp.z, [f])[bc][0]
    red = reduction(domain, V, sp.z)
    if abs(det_I_plus(V.couplings[:, None] * red.P[bc]).value) < DET_TOL:
        raise_flag(EigenvalueProximity, f"z = {sp.z} is near a perturbed {bc} eigenvalue")
    coords = V.coordinates(g0f.values)
    return g0f - factor_resolvent(domain, bc, V, sp.z, V.couplings * coords)


# ---------------------------------------------------------------- boundary


@dataclass(frozen=True, eq=False)
class BoundaryOperator:
    """An operator on ``L^2(boundary)`` held both modally and on the boundary grid.

    ``modal[n, m]`` is the coefficient of ``exp(i n theta)`` in the image of
    ``exp(i m theta)``; ``matrix`` is its weight-symmetrized kernel on the
    boundary nodes.
    """

    modal: np.ndarray
    matrix: OperatorMatrix
    rank_bound: int
    assembly_route: str

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix.entries, compute_uv=False)

    def numerical_rank(self, tol: float = RANK_TOL) -> int:
        s = self.singular_values()
        if len(s) == 0 or s[0] == 0.0:
            return 0
        return int(np.sum(s > tol * s[0]))


def boundary_matrix(domain: ModalDomain, modal: np.ndarray) -> OperatorMatrix:
    """Grid form ``S_pq = sqrt(w_p) T(xi_p, xi_q) sqrt(w_q)`` of a modal operator.

    ``T(xi, xi') = sum_nm T_nm e_n(xi) conj(e_m(xi')) / |S|``. When the
    boundary rule resolves all mode products, ``det(I + S) = det(I + T)``.
    """
    grid = domain.boundary_grid
    e = np.exp(1j * np.outer(grid.nodes, domain.modes))
    kernel = e @ modal @ e.conj().T / domain.sphere_area
    return OperatorMatrix.from_kernel(kernel, grid, grid)


def _boundary(domain, modal, rank, route) -> BoundaryOperator:
    if route not in ROUTES:
        raise ValueError(f"unknown assembly route {route!r}")
    return BoundaryOperator(modal, boundary_matrix(domain, modal), rank, route)


def boundary_operator(domain: ModalDomain, V: FiniteRankPotential, z) -> BoundaryOperator:
    """``T = d_n (H_D - z)^{-1} V G0_N(z; ., xi')``, of rank at most ``r``.

    Columns ``a_j`` are normal traces of the perturbed Dirichlet resolvent on
    each ``psi_j``; rows pair ``phi_j`` with the free Neumann kernel.
    """
    red = reduction(domain, V, z)
    r = V.rank
    a = np.array([factor_resolvent(domain, "dirichlet", V, z, e).normal for e in np.eye(r)]).T
    modal = a @ (V.couplings[:, None] * red.beta)
    return _boundary(domain, modal, r, "boundary_sandwich")


class DtnPair(NamedTuple):
    difference: BoundaryOperator  # M0_D - M_D
    ratio: BoundaryOperator  # M_D M0_D^{-1}
    route_residual: float


def dtn_perturbed(domain: ModalDomain, V: FiniteRankPotential, z) -> DtnPair:
    """Perturbed Dirichlet-to-Neumann map in difference and product form.

    The two are assembled from different pairings (``delta`` against the
    normal derivative of ``G0_D``, ``beta`` against ``G0_N``) and reconciled
    through ``difference = (I - ratio) M0_D``.
    """
    red = reduction(domain, V, z)
    r = V.rank
    a = np.array([factor_resolvent(domain, "dirichlet", V, z, e).normal for e in np.eye(r)]).T
    diff = a @ (V.couplings[:, None] * red.delta)
    correction = a @ (V.couplings[:, None] * red.beta)
    ratio = np.eye(domain.n_modes) - correction
    recon = (np.eye(domain.n_modes) - ratio) * red.lam_d[None, :]
    resid = float(np.max(np.abs(diff - recon), initial=0.0) / max(np.max(np.abs(diff), initial=0.0), 1.0))
    return DtnPair(_boundary(domain, diff, r, "difference_form"),
                   _boundary(domain, ratio, domain.n_modes, "product_form"), resid)


def perturbed_dtn_matrix(domain: ModalDomain, V: FiniteRankPotential, z) -> np.ndarray:
    """Modal matrix of ``M_D``: minus the normal trace of the Schrodinger solution
    with Dirichlet data ``exp(i m theta)``, column by column."""
    cols = []
    for i in range(domain.n_modes):
        data = np.zeros(domain.n_modes, dtype=complex)
        data[i] = 1.0
        cols.append(-solve_schrodinger_bvp(domain, "dirichlet", V, data, z).normal)
    return np.array(cols).T


def perturbed_ntd_matrix(domain: ModalDomain, V: FiniteRankPotential, z) -> np.ndarray:
    """Modal matrix of ``M_N``: trace of the Schrodinger solution with outward
    normal derivative ``exp(i m theta)``."""
    cols = []
    for i in range(domain.n_modes):
        data = np.zeros(domain.n_modes, dtype=complex)
        data[i] = 1.0
        cols.append(solve_schrodinger_bvp(domain, "neumann", V, data, z).trace)
    return np.array(cols).T


def _resolution(domain: ModalDomain) -> dict:
    return {"n_radial": len(domain.nodes), "mode_cutoff": domain.mode_cutoff,
            "n_boundary": len(domain.boundary_grid)}


def _with_nystrom(rep, domain, V, z, nystrom, name):
    if nystrom is None:
        return
    n_rad, n_ang = nystrom
    d_ = nystrom_bs_det(domain, "dirichlet", V, z, n_rad, n_ang)
    n_ = nystrom_bs_det(domain, "neumann", V, z, n_rad, n_ang)
    rep.quantities[name] = n_ / d_ if name == "nystrom_lhs_ratio" else d_ / n_
    rep.add_pairwise(("lhs_ratio", name), "oracle_route")
    rep.resolution.update({"nystrom_radial": n_rad, "nystrom_angular": n_ang})


def dirichlet_chain_verify(domain: ModalDomain, V: FiniteRankPotential, z,
                           nystrom: tuple[int, int] | None = None) -> IdentityReport:
    """Interior ratio ``det_N / det_D``, ``det(I - T)`` on the boundary grid and
    ``det(M_D M0_D^{-1})`` from the Schrodinger boundary value problem."""
    sp = as_spectral_point(z)
    rep = IdentityReport("dirichlet-chain", sp.z, resolution=_resolution(domain))
    with collect_flags() as flags:
        q = rep.quantities
        q["lhs_ratio"] = bs_det_interior(domain, "neumann", V, sp) / bs_det_interior(domain, "dirichlet", V, sp)
        T = boundary_operator(domain, V, sp)
        q["boundary_det"] = _det(-T.matrix.entries)
        red = reduction(domain, V, sp)
        m_d = perturbed_dtn_matrix(domain, V, sp)
        q["dtn_det"] = _det(m_d / red.lam_d[None, :] - np.eye(domain.n_modes))
        rep.add_pairwise(("lhs_ratio", "boundary_det", "dtn_det"), "exact_route")
        _with_nystrom(rep, domain, V, sp, nystrom, "nystrom_lhs_ratio")
    rep.flags = flags
    return rep


def neumann_boundary_operator(domain: ModalDomain, V: FiniteRankPotential, z) -> BoundaryOperator:
    """``S = d_n G0_D V (H_N - z)^{-1}(., xi')``, the Neumann-side analog of ``T``."""
    red = reduction(domain, V, z)
    k = V.couplings
    coords = _solve(red.P["neumann"] * k[None, :], red.beta)  # <phi, R_N gamma^* e_m>
    modal = red.a0 @ (k[:, None] * coords)
    return _boundary(domain, modal, V.rank, "boundary_sandwich")


def neumann_chain_verify(domain: ModalDomain, V: FiniteRankPotential, z,
                         nystrom: tuple[int, int] | None = None) -> IdentityReport:
    """Reciprocal chain: ``det_D / det_N``, ``det(I + S)`` and ``det(M0_N^{-1} M_N)``."""
    sp = as_spectral_point(z)
    rep = IdentityReport("neumann-chain", sp.z, resolution=_resolution(domain))
    with collect_flags() as flags:
        q = rep.quantities
        q["lhs_ratio"] = bs_det_interior(domain, "dirichlet", V, sp) / bs_det_interior(domain, "neumann", V, sp)
        S = neumann_boundary_operator(domain, V, sp)
        q["boundary_det"] = _det(S.matrix.entries)
        red = reduction(domain, V, sp)
        m_n = perturbed_ntd_matrix(domain, V, sp)
        q["neumann_variant_det"] = _det(m_n / red.lam_n[:, None] - np.eye(domain.n_modes))
        rep.add_pairwise(("lhs_ratio", "boundary_det", "neumann_variant_det"), "exact_route")
        _with_nystrom(rep, domain, V, sp, nystrom, "nystrom_inverse_ratio")
    rep.flags = flags
    return rep


# ---------------------------------------------------------------- oracles


def nystrom_matrices(domain: ModalDomain, bc: str, V: FiniteRankPotential, z, n_radial: int,
                     subtract: bool = True):
    """Nyström form of ``P_bc`` on a fresh ``n_radial``-node Gauss rule.

    Each modal kernel has a derivative jump on its diagonal, which caps the
    plain rule at second order. With ``subtract`` the rows use
    ``int g(r_i, s) (f(s) - f(r_i)) + f(r_i) int g(r_i, s)``, the row integral
    being evaluated separately; this lifts the rule to fourth order.

    Returns ``(P, blocks, psi, phi, w)`` where ``blocks`` are the per-mode
    matrices (column weights included) on the new nodes.
    """
    sp = as_spectral_point(z)
    grid = gauss_interval(n_radial, 0.0, 1.0)
    r = grid.nodes
    w = grid.weights * r ** (domain.dim - 1)
    ells, g = radial_green_matrix(domain, bc, sp, r)
    blocks_l = g * w[None, None, :]
    if subtract:
        _, rows = radial_green_row_integrals(domain, bc, sp, r)
        idx = np.arange(n_radial)
        blocks_l[:, idx, idx] += rows - blocks_l.sum(axis=2)
    modes = domain.modes
    psi = np.array([[f.profile(int(n), r) for n in modes] for f in V.left_factors])
    phi = np.array([[f.profile(int(n), r) for n in modes] for f in V.right_factors])
    blocks = blocks_l[np.searchsorted(ells, np.abs(modes))]
    g_psi = np.einsum("nab,jnb->jna", blocks, psi)
    P = domain.sphere_area * np.einsum("jna,kna->jk", np.conj(phi), g_psi * w)
    return P, blocks, psi, phi, w


def nystrom_bs_det(domain: ModalDomain, bc: str, V: FiniteRankPotential, z,
                   n_radial: int, n_angular: int | None = None, subtract: bool = True) -> complex:
    """Full-grid Nyström Birman-Schwinger determinant on a polar ``n_radial x
    n_angular`` grid.

    The equispaced angular rule integrates products of admissible modes
    exactly when ``n_angular > 2 * max factor mode``, so the polar determinant
    equals the product over angular modes of radial Nyström blocks; that form
    is what is evaluated, reduced to ``r x r`` through the determinant swap.
    """
    if n_angular is not None and domain.kind == "disk":
        top = max(max(f.max_mode for f in V.left_factors), max(f.max_mode for f in V.right_factors))
        if n_angular <= 2 * top:
            raise ValueError(f"n_angular = {n_angular} does not resolve factor modes up to {top}")
    P, *_ = nystrom_matrices(domain, bc, V, z, n_radial, subtract)
    return det_I_plus(P * V.couplings[None, :]).value


def grid_bs_det(domain: ModalDomain, bc: str, V: FiniteRankPotential, z, n_radial: int,
                subtract: bool = True) -> tuple[complex, complex]:
    """The same Nyström determinant two ways: on the full modal grid
    ``det(I + G V)`` and reduced ``det(I_r + P K)``."""
    P, blocks, psi, phi, w = nystrom_matrices(domain, bc, V, z, n_radial, subtract)
    n_modes, n = domain.n_modes, len(w)
    G = np.zeros((n_modes * n, n_modes * n), dtype=complex)
    for i in range(n_modes):
        G[i * n:(i + 1) * n, i * n:(i + 1) * n] = blocks[i]
    u_map = (np.conj(phi) * (domain.sphere_area * w)).reshape(V.rank, -1)
    v_map = (psi.reshape(V.rank, -1) * V.couplings[:, None]).T
    full = det_I_plus(G @ v_map @ u_map).value
    return full, det_I_plus(P * V.couplings[None, :]).value


class SwapStats(NamedTuple):
    trials: int
    max_deviation: float
    deviations: np.ndarray


def det_swap_property(a_factors=None, b_factors=None, trials: int = 200, seed: int = 0,
                      max_rank: int = 5, max_grid: int = 200) -> SwapStats:
    """Compare ``det(I - AB)`` (grid size) with ``det(I - BA)`` (rank size).

    With explicit factor lists the pairs are used as given; otherwise random
    complex ``A`` (grid x r) and ``B`` (r x grid) are drawn from ``seed``.
    """
    if a_factors is not None:
        pairs = list(zip(a_factors, b_factors))
    else:
        rng = np.random.default_rng(seed)
        pairs = []
        for _ in range(trials):
            r = int(rng.integers(1, max_rank + 1))
            m = int(rng.integers(r, max_grid + 1))
            a = (rng.normal(size=(m, r)) + 1j * rng.normal(size=(m, r))) / np.sqrt(m)
            b = rng.normal(size=(r, m)) + 1j * rng.normal(size=(r, m))
            pairs.append((a, b))
    dev = []
    for a, b in pairs:
        a = np.asarray(a, dtype=complex)
        b = np.asarray(b, dtype=complex)
        big = det_I_plus(-(a @ b)).value
        small = det_I_plus(-(b @ a)).value
        dev.append(abs(big - small) / max(abs(big), 1.0))
    dev = np.array(dev)
    return SwapStats(len(dev), float(dev.max(initial=0.0)), dev)
