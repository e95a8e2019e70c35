"""Half-line Schrödinger engine for local potentials.

Volterra solutions (regular pair and Jost solution), Wronskians, Weyl-Titchmarsh
m-functions, free half-line Green kernels, Nyström Birman-Schwinger
determinants, and the Jost-Pais and ratio identity checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .flags import ConvergenceFlag, EigenvalueProximity, TruncationFlag, collect_flags, raise_flag
from .numerics import SpectralPoint, as_spectral_point, composite_gauss, det_I_plus
from .reports import IdentityReport

BOUNDARY_CONDITIONS = ("dirichlet", "neumann")

DEFAULT_STEP = 0.01
EIGEN_TOL = 1e-13
TAIL_TOL = 1e-12


class HalflineError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LocalPotential:
    """Multiplication potential on ``[0, inf)``.

    ``evaluator`` must be vectorized. ``breakpoints`` lists interior points
    where the potential jumps; solvers put grid nodes there.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    support_bound: float
    breakpoints: tuple = ()
    l1_norm_estimate: float = field(default=-1.0)
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.support_bound > 0:
            raise HalflineError("support_bound must be positive")
        bps = tuple(sorted(float(b) for b in self.breakpoints if 0.0 < b < self.support_bound))
        object.__setattr__(self, "breakpoints", bps)
        vals = self(np.linspace(0.0, self.support_bound, 257))
        if not np.all(np.isfinite(vals)):
            raise HalflineError("potential is not finite on [0, support_bound]")
        est = self._l1_quadrature()
        if self.l1_norm_estimate < est:
            object.__setattr__(self, "l1_norm_estimate", est)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=complex)

    def _l1_quadrature(self) -> float:
        g = composite_gauss((0.0, *self.breakpoints, self.support_bound), 400)
        return float(np.dot(g.weights, np.abs(self(g.nodes))))

    def limit(self, x, side: int) -> np.ndarray:
        """One-sided values ``V(x+)`` (side=+1) or ``V(x-)`` (side=-1)."""
        x = np.asarray(x, dtype=float)
        return self(np.nextafter(x, np.inf if side > 0 else -np.inf))

    @property
    def is_real(self) -> bool:
        g = composite_gauss((0.0, *self.breakpoints, self.support_bound), 64)
        return bool(np.all(self(g.nodes).imag == 0.0))


def square_well(depth: float, width: float) -> LocalPotential:
    """``V(x) = depth`` on ``[0, width]``, zero beyond."""
    depth = complex(depth)
    width = float(width)

    def ev(x):
        return np.where(x <= width, depth, 0.0).astype(complex)

    return LocalPotential(
        ev, width, breakpoints=(), name="square-well",
        params={"V0": depth, "a": width},
    )


def exponential_potential(strength: float, decay: float) -> LocalPotential:
    """``V(x) = strength * exp(-decay * x)``, cut where it drops below 1e-14."""
    strength = complex(strength)
    decay = float(decay)
    if decay <= 0:
        raise HalflineError("decay must be positive")
    bound = max(math.log(max(abs(strength), 1e-300) / 1e-14), 1.0) / decay
    return LocalPotential(
        lambda x: strength * np.exp(-decay * x), bound,
        name="exponential", params={"V0": strength, "alpha": decay},
    )


def gaussian_potential(strength: float, width: float) -> LocalPotential:
    """``V(x) = strength * exp(-(x / width)**2)``."""
    strength = complex(strength)
    width = float(width)
    bound = width * math.sqrt(max(math.log(max(abs(strength), 1e-300) / 1e-14), 1.0))
    return LocalPotential(
        lambda x: strength * np.exp(-((x / width) ** 2)), bound,
        name="gaussian", params={"V0": strength, "width": width},
    )


def zero_potential() -> LocalPotential:
    return LocalPotential(lambda x: np.zeros_like(x, dtype=complex), 1.0, name="zero")


POTENTIALS = {
    "square-well": (square_well, ("V0", "a")),
    "exponential": (exponential_potential, ("V0", "alpha")),
    "gaussian": (gaussian_potential, ("V0", "width")),
    "zero": (zero_potential, ()),
}


def make_local_potential(name: str, **params) -> LocalPotential:
    try:
        factory, keys = POTENTIALS[name]
    except KeyError:
        raise HalflineError(f"unknown potential {name!r}; known: {sorted(POTENTIALS)}") from None
    missing = [k for k in keys if k not in params]
    extra = [k for k in params if k not in keys]
    if missing or extra:
        raise HalflineError(f"potential {name!r} takes parameters {list(keys)}")
    return factory(*(params[k] for k in keys))


def square_well_jost(depth: complex, width: float, z) -> tuple[complex, complex]:
    """Closed-form ``(f(z, 0), f'(z, 0))`` for a square well, by matching
    ``exp(i k x)`` to trigonometric solutions at ``x = width``."""
    k = as_spectral_point(z).root
    kap = SpectralPoint(as_spectral_point(z).z - depth).root
    a = float(width)
    phase = np.exp(1j * k * a)
    if kap == 0:
        return phase * (1 - 1j * k * a), phase * 1j * k
    f0 = phase * (np.cos(kap * a) - 1j * k / kap * np.sin(kap * a))
    fp = phase * (kap * np.sin(kap * a) + 1j * k * np.cos(kap * a))
    return complex(f0), complex(fp)


@dataclass(frozen=True, eq=False)
class SolutionSample:
    """A solution of ``-psi'' + V psi = z psi`` and its derivative on a grid."""

    x: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray

    def __post_init__(self):
        if not (len(self.x) == len(self.values) == len(self.derivatives)):
            raise HalflineError("solution sample columns differ in length")

    def index_of(self, x: float) -> int:
        idx = np.flatnonzero(self.x == x)
        if len(idx) == 0:
            raise HalflineError(f"x = {x!r} is not a grid node (no interpolation)")
        return int(idx[0])


def default_x_grid(V: LocalPotential, z, step: float = DEFAULT_STEP, x_max: float | None = None):
    """Grid on ``[0, X_max]`` through every breakpoint and ``support_bound``.

    ``X_max = max(L_V + 10 / Im k, L_V + 5)`` unless given.
    """
    k = as_spectral_point(z).root
    L = V.support_bound
    if x_max is None:
        x_max = L + 5.0 if k.imag <= 0 else max(L + 10.0 / k.imag, L + 5.0)
    pts = sorted({0.0, *V.breakpoints, L, float(x_max)})
    pieces = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        m = max(1, int(math.ceil((hi - lo) / step)))
        pieces.append(np.linspace(lo, hi, m + 1)[:-1])
    pieces.append([pts[-1]])
    return np.concatenate(pieces)


def _refine(x: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return x
    t = np.arange(factor) / factor
    fine = (x[:-1, None] + np.diff(x)[:, None] * t[None, :]).ravel()
    return np.append(fine, x[-1])


def _potential_weights(V: LocalPotential, x: np.ndarray) -> np.ndarray:
    """Trapezoid weights times ``V``, using the one-sided limit on each side
    of a node so a jump on a node gives the composite rule."""
    h = np.diff(x)
    left = np.concatenate([[0.0], h])
    right = np.concatenate([h, [0.0]])
    return 0.5 * (V.limit(x, -1) * left + V.limit(x, +1) * right)


def _march_forward(V, k, x, init):
    """Trapezoid marching of the forward Volterra equation on ``x``.

    ``init = (a, b)`` selects the free solution ``a cos(kx) + b sin(kx)/k``.
    Returns values and derivatives.
    """
    n = len(x)
    vw = _potential_weights(V, x)
    a, b = init
    free = a * np.cos(k * x) + b * np.sin(k * x) / k
    free_d = -a * k * np.sin(k * x) + b * np.cos(k * x)
    psi = np.empty(n, dtype=complex)
    dpsi = np.empty(n, dtype=complex)
    psi[0], dpsi[0] = free[0], free_d[0]
    src = np.zeros(n, dtype=complex)
    src[0] = vw[0] * psi[0]
    act = np.flatnonzero(vw)
    for i in range(1, n):
        # only nodes where the potential weight is nonzero feed the sums
        lo = act[: np.searchsorted(act, i)]
        d = k * (x[i] - x[lo])
        # the k == i kernel term vanishes, so the step is explicit
        psi[i] = free[i] + np.dot(np.sin(d) / k, src[lo])
        last = V.limit(x[i], -1) * 0.5 * (x[i] - x[i - 1]) * psi[i]
        dpsi[i] = free_d[i] + np.dot(np.cos(d), src[lo]) + last
        src[i] = vw[i] * psi[i]
    return psi, dpsi


def _march_backward(V, k, x):
    """Trapezoid marching of the Jost Volterra equation from ``x[-1]`` inward."""
    n = len(x)
    vw = _potential_weights(V, x)
    free = np.exp(1j * k * x)
    f = np.empty(n, dtype=complex)
    df = np.empty(n, dtype=complex)
    f[-1] = free[-1]
    df[-1] = 1j * k * free[-1]
    src = np.zeros(n, dtype=complex)
    src[-1] = vw[-1] * f[-1]
    act = np.flatnonzero(vw)
    # beyond the last weighted node the solution is the free wave
    start = n - 2
    if len(act) and act[-1] < n - 1:
        start = act[-1]
        f[start + 1 :] = free[start + 1 :]
        df[start + 1 :] = 1j * k * free[start + 1 :]
    elif not len(act):
        f[:], df[:] = free, 1j * k * free
        return f, df
    for i in range(start, -1, -1):
        hi = act[np.searchsorted(act, i, side="right") :]
        d = k * (x[i] - x[hi])
        f[i] = free[i] - np.dot(np.sin(d) / k, src[hi])
        first = V.limit(x[i], +1) * 0.5 * (x[i + 1] - x[i]) * f[i]
        df[i] = 1j * k * free[i] - np.dot(np.cos(d), src[hi]) - first
        src[i] = vw[i] * f[i]
    return f, df


def _romberg(solver, x, levels: int = 3):
    """Run ``solver`` on ``x`` refined by 1, 2, 4, ... and eliminate the
    ``h**2`` and ``h**4`` error terms at the coarse nodes."""
    tables = []
    for j in range(levels):
        f = 2**j
        vals, ders = solver(_refine(x, f))
        tables.append((vals[::f], ders[::f]))
    for m in range(1, levels):
        c = 4.0**m
        tables = [
            ((c * hv - lv) / (c - 1), (c * hd - ld) / (c - 1))
            for (lv, ld), (hv, hd) in zip(tables[:-1], tables[1:])
        ]
    return tables[0]


def _check_grid(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise HalflineError("x_grid needs at least two points")
    if np.any(np.diff(x) <= 0) or x[0] < 0:
        raise HalflineError("x_grid must be increasing and nonnegative")
    return x


def regular_solutions(V: LocalPotential, z, x_grid=None) -> tuple[SolutionSample, SolutionSample]:
    """``(phi, theta)`` with ``phi(0)=0, phi'(0)=1`` and ``theta(0)=1, theta'(0)=0``.

    Composite-trapezoid marching of the forward Volterra equations with two
    Richardson levels.
    """
    sp = as_spectral_point(z)
    if sp.z == 0:
        raise HalflineError("regular_solutions needs z != 0")
    x = _check_grid(default_x_grid(V, sp) if x_grid is None else x_grid)
    if x[0] != 0.0:
        raise HalflineError("x_grid for the regular solutions must start at 0")
    k = sp.root
    phi = _romberg(lambda g: _march_forward(V, k, g, (0.0, 1.0)), x)
    theta = _romberg(lambda g: _march_forward(V, k, g, (1.0, 0.0)), x)
    _check_contraction(V, k, x, phi[0])
    return SolutionSample(x, *phi), SolutionSample(x, *theta)


def _check_contraction(V, k, x, vals):
    if not np.all(np.isfinite(vals)):
        raise_flag(ConvergenceFlag, "Volterra marching produced non-finite values")


def jost_solution(V: LocalPotential, z, x_grid=None) -> SolutionSample:
    """Jost solution ``f(z, .)``, marched backward from ``X_max = x_grid[-1]``
    where it is set to ``exp(i k x)``."""
    sp = as_spectral_point(z)
    if sp.z == 0:
        raise HalflineError("jost_solution needs z != 0")
    x = _check_grid(default_x_grid(V, sp) if x_grid is None else x_grid)
    if abs(V(x[-1])) > TAIL_TOL:
        raise_flag(TruncationFlag, f"|V(X_max)| = {abs(V(x[-1])):.2e} > {TAIL_TOL:g}; X_max too small")
    k = sp.root
    vals, ders = _romberg(lambda g: _march_backward(V, k, g), x)
    if not np.all(np.isfinite(vals)):
        raise_flag(ConvergenceFlag, "Jost marching produced non-finite values")
    return SolutionSample(x, vals, ders)


def wronskian(f: SolutionSample, g: SolutionSample, x: float) -> complex:
    """``f(x) g'(x) - f'(x) g(x)`` at a node common to both samples."""
    i = f.index_of(x)
    j = g.index_of(x)
    return complex(f.values[i] * g.derivatives[j] - f.derivatives[i] * g.values[j])


class MFunctions(NamedTuple):
    m0_D: complex
    m0_N: complex
    m_D: complex
    m_N: complex


def m_functions(V: LocalPotential, z, jost: SolutionSample | None = None) -> MFunctions:
    """Free and perturbed Dirichlet/Neumann Weyl-Titchmarsh functions."""
    sp = as_spectral_point(z)
    k = sp.root
    f = jost_solution(V, sp) if jost is None else jost
    i0 = f.index_of(0.0)
    f0, fp0 = f.values[i0], f.derivatives[i0]
    if abs(f0) < EIGEN_TOL:
        raise_flag(EigenvalueProximity, f"f(z,0) = {abs(f0):.1e}: Dirichlet eigenvalue at z = {sp.z}")
        m_d = complex("nan")
    else:
        m_d = fp0 / f0
    if abs(fp0) < EIGEN_TOL:
        raise_flag(EigenvalueProximity, f"f'(z,0) = {abs(fp0):.1e}: Neumann eigenvalue at z = {sp.z}")
        m_n = complex("nan")
    else:
        m_n = -f0 / fp0
    return MFunctions(1j * k, 1j / k, complex(m_d), complex(m_n))


def halfline_green(bc: str, z, x, xp) -> np.ndarray:
    """Kernel of ``(H0 - z)^{-1}`` on the half-line with a Dirichlet or
    Neumann condition at 0 (vectorized over ``x``, ``xp``)."""
    sp = as_spectral_point(z)
    if sp.on_cut:
        raise HalflineError("halfline_green needs z off [0, inf)")
    k = sp.root
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    lo = np.minimum(x, xp)
    hi = np.maximum(x, xp)
    out = np.exp(1j * k * hi) / k
    if bc == "dirichlet":
        return np.sin(k * lo) * out
    if bc == "neumann":
        return 1j * np.cos(k * lo) * out
    raise HalflineError(f"unknown boundary condition {bc!r}")


def nystrom_grid(V: LocalPotential, L: float, n: int):
    """Composite Gauss nodes on the part of ``[0, L]`` where ``V`` lives.

    Nodes where the potential vanishes identically only add identity rows
    to ``I + u G v``, so none are spent beyond ``support_bound``.
    """
    top = min(L, V.support_bound)
    return composite_gauss((0.0, *[b for b in V.breakpoints if b < top], top), n)


def bs_determinant_halfline(bc: str, V: LocalPotential, z, L: float = 30.0, n: int = 2000) -> complex:
    """Nyström ``det(I + u (H0 - z)^{-1} v)`` with ``u = exp(i arg V)|V|^(1/2)``,
    ``v = |V|^(1/2)``."""
    if bc not in BOUNDARY_CONDITIONS:
        raise HalflineError(f"unknown boundary condition {bc!r}")
    if n < 16:
        raise HalflineError("n must be at least 16")
    if L < V.support_bound and abs(V(L)) > TAIL_TOL:
        raise_flag(TruncationFlag, f"|V(L)| = {abs(V(L)):.2e} > {TAIL_TOL:g} at L = {L}")
    sp = as_spectral_point(z)
    if sp.root.imag <= 0:
        raise HalflineError("bs_determinant_halfline needs Im(z^(1/2)) > 0")
    grid = nystrom_grid(V, L, n)
    vals = V(grid.nodes)
    mag = np.sqrt(np.abs(vals))
    u = np.exp(1j * np.angle(vals)) * mag
    sw = np.sqrt(grid.weights)
    G = halfline_green(bc, sp, grid.nodes[:, None], grid.nodes[None, :])
    K = (sw * u)[:, None] * G * (sw * mag)[None, :]
    res = det_I_plus(K)
    if res.singular:
        raise_flag(EigenvalueProximity, "zero pivot in the Nyström determinant")
    return res.value


def jost_pais_check(V: LocalPotential, z, L: float = 30.0, n: int = 2000) -> IdentityReport:
    """Compare both Nyström determinants with the Jost-function expressions."""
    sp = as_spectral_point(z)
    with collect_flags() as flags:
        f = jost_solution(V, sp)
        i0 = f.index_of(0.0)
        rep = IdentityReport("jost-pais-1d", sp.z, resolution={"n_interval": n, "L": float(L)})
        q = rep.quantities
        q["det_dirichlet"] = bs_determinant_halfline("dirichlet", V, sp, L, n)
        q["jost_value"] = complex(f.values[i0])
        q["det_neumann"] = bs_determinant_halfline("neumann", V, sp, L, n)
        q["jost_derivative_ratio"] = complex(f.derivatives[i0] / (1j * sp.root))
        rep.add_pairwise(("det_dirichlet", "jost_value"), "oracle_route")
        rep.add_pairwise(("det_neumann", "jost_derivative_ratio"), "oracle_route")
    rep.flags = flags
    return rep


RATIO_NAMES = ("det_ratio", "jost_ratio", "m_dirichlet_ratio", "m_neumann_ratio")


def ratio_identity_check(V: LocalPotential, z, L: float = 30.0, n: int = 2000) -> IdentityReport:
    """The four expressions for ``det_N / det_D`` and their pairwise residuals.

    ``det_ratio`` is the Nyström route; the other three come from the Jost
    solution and m-functions.
    """
    sp = as_spectral_point(z)
    with collect_flags() as flags:
        f = jost_solution(V, sp)
        i0 = f.index_of(0.0)
        f0, fp0 = f.values[i0], f.derivatives[i0]
        m = m_functions(V, sp, jost=f)
        rep = IdentityReport("ratio-1d", sp.z, resolution={"n_interval": n, "L": float(L)})
        q = rep.quantities
        if abs(f0) < EIGEN_TOL:
            raise_flag(EigenvalueProximity, "ratio undefined at a Dirichlet eigenvalue")
        d_n = bs_determinant_halfline("neumann", V, sp, L, n)
        d_d = bs_determinant_halfline("dirichlet", V, sp, L, n)
        q["det_ratio"] = d_n / d_d
        q["jost_ratio"] = complex(fp0 / (1j * sp.root * f0))
        q["m_dirichlet_ratio"] = m.m_D / m.m0_D
        q["m_neumann_ratio"] = m.m0_N / m.m_N
        rep.add_pairwise(RATIO_NAMES[1:], "exact_route")
        for other in RATIO_NAMES[1:]:
            rep.add_pairwise(("det_ratio", other), "oracle_route")
    rep.flags = flags
    return rep
