"""Complex-arithmetic foundation: branch-correct roots, quadrature rules,
dense determinants and solves, and a series Bessel function."""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import mpmath
import numpy as np
import scipy.linalg as sla

GEOMETRIES = ("interval", "circle", "disk", "radial-ball")

BESSEL_MAX_ARG = 60.0
BESSEL_MAX_ORDER = 40


class NumericsError(ValueError):
    """Invalid input to a numerics-core routine."""


class NearSingularError(ArithmeticError):
    """Raised when ``I + A`` is too ill-conditioned to solve reliably."""

    def __init__(self, condition: float, threshold: float):
        super().__init__(f"condition estimate {condition:.3e} exceeds {threshold:.1e}")
        self.condition = condition
        self.threshold = threshold


def principal_sqrt(z: complex) -> complex:
    """Square root with nonnegative imaginary part.

    On the cut ``[0, inf)`` the positive real root is returned, i.e. the limit
    from the upper half-plane. A negative-zero imaginary part is ignored.
    """
    z = complex(z)
    if z.imag == 0.0:
        if z.real >= 0.0:
            return complex(math.sqrt(z.real), 0.0)
        return complex(0.0, math.sqrt(-z.real))
    w = cmath.sqrt(z)
    if w.imag < 0.0:
        w = -w
    return w


@dataclass(frozen=True)
class SpectralPoint:
    """Spectral parameter ``z`` together with its root ``z**(1/2)`` (Im >= 0)."""

    z: complex
    root: complex = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "z", complex(self.z))
        object.__setattr__(self, "root", principal_sqrt(self.z))

    @property
    def on_cut(self) -> bool:
        return self.z.imag == 0.0 and self.z.real >= 0.0

    def conjugate(self) -> "SpectralPoint":
        return SpectralPoint(self.z.conjugate())


def as_spectral_point(z) -> SpectralPoint:
    return z if isinstance(z, SpectralPoint) else SpectralPoint(complex(z))


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Nodes and positive weights of a quadrature rule.

    ``nodes`` is 1-D for interval, circle and radial-ball rules; for the disk
    it has shape ``(N, 2)`` holding ``(r, theta)`` pairs.
    """

    nodes: np.ndarray
    weights: np.ndarray
    geometry: str

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise NumericsError(f"unknown geometry {self.geometry!r}")
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if len(nodes) != len(weights):
            raise NumericsError("node count and weight count differ")
        if np.any(weights <= 0.0):
            raise NumericsError("quadrature weights must be strictly positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, values) -> complex:
        return complex(np.dot(self.weights, values))


def gauss_interval(n: int, a: float, b: float) -> QuadratureGrid:
    """Gauss-Legendre rule with ``n`` nodes on ``[a, b]`` (exact to degree 2n-1)."""
    if n < 1:
        raise NumericsError("gauss_interval needs n >= 1")
    if not a < b:
        raise NumericsError("gauss_interval needs a < b")
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return QuadratureGrid(half * x + 0.5 * (a + b), half * w, "interval")


def composite_gauss(breakpoints, n: int) -> QuadratureGrid:
    """Gauss-Legendre panels between consecutive breakpoints.

    The ``n`` nodes are shared out in proportion to panel length, at least one
    node per panel.
    """
    pts = np.unique(np.asarray(breakpoints, dtype=float))
    if len(pts) < 2:
        raise NumericsError("composite_gauss needs at least two distinct breakpoints")
    lengths = np.diff(pts)
    if n < len(lengths):
        raise NumericsError("fewer nodes than panels")
    counts = np.maximum(1, np.floor(n * lengths / lengths.sum()).astype(int))
    # hand the rounding remainder to the longest panels
    for i in np.argsort(-lengths)[: n - counts.sum()]:
        counts[i] += 1
    nodes, weights = [], []
    for lo, hi, m in zip(pts[:-1], pts[1:], counts):
        g = gauss_interval(int(m), lo, hi)
        nodes.append(g.nodes)
        weights.append(g.weights)
    return QuadratureGrid(np.concatenate(nodes), np.concatenate(weights), "interval")


def circle_rule(n: int) -> QuadratureGrid:
    """Equispaced trapezoid rule on the unit circle, weights ``2*pi/n``."""
    if n < 1:
        raise NumericsError("circle_rule needs n >= 1")
    theta = 2.0 * np.pi * np.arange(n) / n
    return QuadratureGrid(theta, np.full(n, 2.0 * np.pi / n), "circle")


def disk_rule(n_radial: int, n_angular: int) -> QuadratureGrid:
    """Polar product rule on the unit disk; weights include the ``r`` Jacobian."""
    radial = gauss_interval(n_radial, 0.0, 1.0)
    ang = circle_rule(n_angular)
    rr, tt = np.meshgrid(radial.nodes, ang.nodes, indexing="ij")
    ww = np.outer(radial.weights * radial.nodes, ang.weights)
    return QuadratureGrid(np.column_stack([rr.ravel(), tt.ravel()]), ww.ravel(), "disk")


def radial_ball_rule(n_radial: int) -> QuadratureGrid:
    """Radial rule for spherically symmetric functions on the unit ball.

    Weights carry the full ``4*pi*r**2`` measure.
    """
    radial = gauss_interval(n_radial, 0.0, 1.0)
    return QuadratureGrid(
        radial.nodes, 4.0 * np.pi * radial.weights * radial.nodes**2, "radial-ball"
    )


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense matrix of a discretized kernel and the grids it acts between.

    With ``symmetrized`` set the entries are ``sqrt(w_i) K(x_i, y_j) sqrt(w_j)``,
    so ``det(I + entries)`` is the Nyström approximation of the Fredholm
    determinant.
    """

    entries: np.ndarray
    row_grid: QuadratureGrid | None = None
    col_grid: QuadratureGrid | None = None
    symmetrized: bool = True

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.ndim != 2:
            raise NumericsError("operator matrix must be two-dimensional")
        if self.row_grid is not None and entries.shape[0] != len(self.row_grid):
            raise NumericsError("row count does not match row grid")
        if self.col_grid is not None and entries.shape[1] != len(self.col_grid):
            raise NumericsError("column count does not match column grid")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_kernel(cls, kernel, row_grid: QuadratureGrid, col_grid: QuadratureGrid):
        """Weight-symmetrize a kernel sampled as ``kernel[i, j] = K(x_i, y_j)``."""
        k = np.asarray(kernel, dtype=complex)
        sr = np.sqrt(row_grid.weights)
        sc = np.sqrt(col_grid.weights)
        return cls(sr[:, None] * k * sc[None, :], row_grid, col_grid, True)

    @property
    def shape(self):
        return self.entries.shape


class DetResult(NamedTuple):
    value: complex
    singular: bool


def _entries(A) -> np.ndarray:
    if isinstance(A, OperatorMatrix):
        return A.entries
    return np.asarray(A, dtype=complex)


def det_I_plus(A) -> DetResult:
    """``det(I + A)`` from a partially pivoted LU factorization.

    An exactly zero pivot gives ``DetResult(0, singular=True)`` instead of an
    exception.
    """
    a = _entries(A)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NumericsError("det_I_plus needs a square matrix")
    n = a.shape[0]
    if n == 0:
        return DetResult(1.0 + 0.0j, False)
    m = np.eye(n, dtype=complex) + a
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(m, check_finite=True)
    diag = np.diag(lu)
    if np.any(diag == 0.0):
        return DetResult(0.0j, True)
    sign = -1.0 if np.count_nonzero(piv != np.arange(n)) % 2 else 1.0
    return DetResult(complex(sign * np.prod(diag)), False)


def solve_I_plus(A, b, cond_threshold: float = 1e12) -> np.ndarray:
    """Solve ``(I + A) x = b``; raise :class:`NearSingularError` when the
    1-norm condition estimate exceeds ``cond_threshold``."""
    a = _entries(A)
    n = a.shape[0]
    m = np.eye(n, dtype=complex) + a
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(m)
    anorm = np.linalg.norm(m, 1)
    rcond = _rcond_from_lu(lu, piv, anorm)
    cond = math.inf if rcond == 0.0 else 1.0 / rcond
    if cond > cond_threshold:
        raise NearSingularError(cond, cond_threshold)
    return sla.lu_solve((lu, piv), np.asarray(b, dtype=complex))


def _rcond_from_lu(lu, piv, anorm: float) -> float:
    if anorm == 0.0 or np.any(np.diag(lu) == 0.0):
        return 0.0
    (gecon,) = sla.get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0:
        return 0.0
    return float(rcond)


def bessel_j(order: int, w: complex) -> complex:
    """Bessel function ``J_order(w)`` from its ascending series.

    Partial sums are accumulated at a working precision raised by the digits
    lost to cancellation (at most ``|w| / ln 10``), so the returned double is
    good to ~1e-15 relative across ``|w| <= 60``, ``0 <= order <= 40``.
    """
    if int(order) != order or order < 0 or order > BESSEL_MAX_ORDER:
        raise NumericsError(f"bessel_j order must be an integer in [0, {BESSEL_MAX_ORDER}]")
    w = complex(w)
    if abs(w) > BESSEL_MAX_ARG:
        raise NumericsError(f"|w| = {abs(w):.3g} outside the validated envelope {BESSEL_MAX_ARG}")
    n = int(order)
    if w == 0:
        return 1.0 + 0j if n == 0 else 0j
    extra = int(abs(w) / math.log(10.0)) + 10
    with mpmath.workdps(17 + extra):
        half = mpmath.mpc(w.real, w.imag) / 2
        q = -half * half
        term = half**n / mpmath.factorial(n)
        total = term
        k = 0
        while True:
            k += 1
            term = term * q / (k * (k + n))
            total += term
            if k * k > abs(q) and abs(term) <= abs(total) * mpmath.mpf(10) ** (-(17 + extra)):
                break
        return complex(total)
