"""Finite-rank nonlocal potentials ``V f = sum_j kappa_j <phi_j, f> psi_j``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import ModalDomain, ModalFunction

MAX_RANK = 64
SELF_ADJOINT_TOL = 1e-12


class PotentialError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FiniteRankPotential:
    """``psi_j`` are the left factors, ``phi_j`` the right factors.

    Factor samples on the domain grid are cached in ``psi`` and ``phi`` with
    shape ``(rank, n_modes, n_radial)``.
    """

    domain: ModalDomain
    couplings: np.ndarray
    left_factors: tuple[ModalFunction, ...]
    right_factors: tuple[ModalFunction, ...]
    psi: np.ndarray
    phi: np.ndarray
    trace_norm: float
    self_adjoint: bool

    @property
    def rank(self) -> int:
        return len(self.couplings)

    def coordinates(self, f) -> np.ndarray:
        """``(<phi_j, f>)_j`` for modal samples ``f``."""
        d = self.domain
        f = _as_samples(d, f)
        return d.sphere_area * np.einsum("jnr,nr->j", np.conj(self.phi), f * d.measure)

    def apply_coefficients(self, f) -> np.ndarray:
        return np.einsum("j,jnr->nr", self.couplings * self.coordinates(f), self.psi)

    def trace(self) -> complex:
        d = self.domain
        g = d.sphere_area * np.einsum("jnr,jnr->j", np.conj(self.phi), self.psi * d.measure)
        return complex(np.sum(self.couplings * g))


def _as_samples(domain: ModalDomain, f) -> np.ndarray:
    if isinstance(f, ModalFunction):
        return f.samples(domain)
    arr = np.asarray(f, dtype=complex)
    if arr.shape != (domain.n_modes, len(domain.nodes)):
        raise PotentialError(
            f"grid function has shape {arr.shape}, expected {(domain.n_modes, len(domain.nodes))}"
        )
    return arr


def _r_factor(domain, cols) -> np.ndarray:
    """``R`` of a QR factorization of the factors in the weighted L2 inner
    product, so that ``R^* R`` is their Gram matrix. Unlike an eigen square
    root of the Gram matrix this stays accurate when the factors are dependent."""
    w = np.sqrt(domain.sphere_area * domain.measure)
    a = (cols * w).reshape(len(cols), -1).T
    return np.linalg.qr(a, mode="r")


def make_potential(couplings, left_factors, right_factors, domain: ModalDomain) -> FiniteRankPotential:
    kappa = np.atleast_1d(np.asarray(couplings, dtype=complex))
    left = tuple(left_factors)
    right = tuple(right_factors)
    r = len(kappa)
    if r < 1 or r > MAX_RANK:
        raise PotentialError(f"rank must be between 1 and {MAX_RANK}, got {r}")
    if len(left) != r or len(right) != r:
        raise PotentialError("need one left and one right factor per coupling")
    for f in left + right:
        if not isinstance(f, ModalFunction):
            raise PotentialError("factors must be ModalFunction instances")
        if domain.kind == "ball-radial" and any(n != 0 for n in f.modes):
            raise PotentialError("ball-radial potentials accept only l = 0 factors")
        if f.max_mode > domain.mode_cutoff:
            raise PotentialError(
                f"factor mode {f.max_mode} exceeds the domain cutoff {domain.mode_cutoff}"
            )
    psi = np.array([f.samples(domain) for f in left])
    phi = np.array([f.samples(domain) for f in right])
    for name, arr in (("left", psi), ("right", phi)):
        norms = np.sqrt(np.real(np.einsum("jnr,jnr->j", np.conj(arr), arr * domain.measure)))
        if np.any(norms == 0.0):
            raise PotentialError(f"{name} factor {int(np.argmin(norms))} has zero norm")
    # nuclear norm of Psi K Phi^* = Q_psi (R_psi K R_phi^*) Q_phi^*
    core = _r_factor(domain, psi) @ np.diag(kappa) @ _r_factor(domain, phi).conj().T
    trace_norm = float(np.sum(np.linalg.svd(core, compute_uv=False)))
    # V = Z E Z^* with Z = [Psi, Phi] = Q R; V is self-adjoint iff R (E - E^*) R^* = 0
    e = np.zeros((2 * r, 2 * r), dtype=complex)
    e[:r, r:] = np.diag(kappa)
    rz = _r_factor(domain, np.concatenate([psi, phi]))
    defect = np.linalg.norm(rz @ (e - e.conj().T) @ rz.conj().T, 2)
    self_adjoint = bool(defect <= SELF_ADJOINT_TOL * max(trace_norm, 1e-300))
    psi.setflags(write=False)
    phi.setflags(write=False)
    kappa.setflags(write=False)
    return FiniteRankPotential(domain, kappa, left, right, psi, phi, trace_norm, self_adjoint)


def apply(V: FiniteRankPotential, f) -> np.ndarray:
    """``V f`` as modal samples on the domain grid."""
    return V.apply_coefficients(f)


class FactorPair(NamedTuple):
    """``V = v_map @ u_map`` through ``C^r``.

    ``u_map`` has shape ``(r, n_modes * n_radial)`` (quadrature weights
    included); ``v_map`` has shape ``(n_modes * n_radial, r)``.
    """

    u_map: np.ndarray
    v_map: np.ndarray

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.v_map @ (self.u_map @ np.ravel(f))


def factorize(V: FiniteRankPotential) -> FactorPair:
    d = V.domain
    w = np.broadcast_to(d.sphere_area * d.measure, V.phi.shape[1:])
    u_map = (np.conj(V.phi) * w).reshape(V.rank, -1)
    v_map = (V.psi.reshape(V.rank, -1) * V.couplings[:, None]).T
    return FactorPair(u_map, v_map)


def kernel_matrix(V: FiniteRankPotential) -> np.ndarray:
    """Dense grid matrix of ``V`` acting on flattened modal samples."""
    fp = factorize(V)
    return fp.v_map @ fp.u_map


def zero_potential(domain: ModalDomain) -> FiniteRankPotential:
    one = ModalFunction.from_modes({0: [1.0]})
    return make_potential([0.0], [one], [one], domain)


def random_potential(domain: ModalDomain, rank: int, rng: np.random.Generator,
                     self_adjoint: bool = False, max_mode: int = 2, degree: int = 3,
                     scale: float = 0.5) -> FiniteRankPotential:
    """Random smooth factors with Gaussian envelopes, for property tests."""
    top = 0 if domain.kind == "ball-radial" else min(max_mode, domain.mode_cutoff)

    def factor():
        modes = {}
        for n in range(-top, top + 1):
            modes[n] = rng.normal(size=degree) + 1j * rng.normal(size=degree)
        return ModalFunction.from_modes(modes, envelope=float(rng.uniform(0.5, 2.0)))

    left = [factor() for _ in range(rank)]
    if self_adjoint:
        right = left
        kappa = scale * rng.normal(size=rank)
    else:
        right = [factor() for _ in range(rank)]
        kappa = scale * (rng.normal(size=rank) + 1j * rng.normal(size=rank))
    return make_potential(kappa, left, right, domain)
