"""Adaptive internal-model regulator: gain design and controller vector field.

Controller (output feedback, it only sees e)::

    u      = xi_1 + v,             v = -k e
    xi'    = A xi + phi(xi_1) + Omega(xi_1) theta_hat + H(X, xi_1) v - M(X) dzv(theta_hat)
    theta' = beta(X, xi_1) v - dzv(theta_hat)
    X'     = F X + G Omega(xi_1)

with M(X) = [0; X], beta^T = C A M(X) + C Omega and H = M(X) beta + K.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .exceptions import DomainError
from .model import ImmersionData, ParamBox, SystemDims, canonical_AC
from .numerics import solve_lyapunov

DEFAULT_LAMBDA = 10.0
DEFAULT_K = 10.0
ELL_FACTOR = 1.1


def default_roots(d: int) -> tuple:
    return tuple(-float(i) for i in range(1, d))


def poly_to_b(roots: Sequence[float]) -> np.ndarray:
    """``b = (1, b_2, ..., b_d)``: coefficients of the monic polynomial with these roots."""
    roots = np.asarray(roots, dtype=float).ravel()
    if roots.size and not np.all(roots < 0):
        raise DomainError(f"roots must be negative, got {roots}")
    if roots.size > 1:
        gaps = np.abs(roots[:, None] - roots[None, :]) + np.eye(roots.size)
        if np.min(gaps) < 1e-12:
            raise DomainError(f"roots must be pairwise distinct, got {roots}")
    return np.poly(roots) if roots.size else np.ones(1)


def build_F_G(b, d: int, q: int | None = None):
    """Companion-like Hurwitz F ((d-1)x(d-1)) and G ((d-1)x d) built from b.

    ``q`` is accepted for signature symmetry with the state shapes; F and G
    do not depend on it.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (d,) or b[0] != 1.0:
        raise DomainError(f"b must have length {d} and b[0] = 1")
    if d < 2:
        raise DomainError("F and G need d >= 2")
    m = d - 1
    F = np.zeros((m, m))
    F[:, 0] = -b[1:]
    F[:-1, 1:] += np.eye(m - 1)
    G = np.hstack([-b[1:, None], np.eye(m)])
    return F, G


def compute_K(b, lam: float, d: int) -> np.ndarray:
    """``K = A b + lam b`` for the upper shift A."""
    b = np.asarray(b, dtype=float)
    A, _ = canonical_AC(d)
    return A @ b + lam * b


def dead_zone(x, ell: float):
    """C^1 odd dead zone: 0 on ``|x| <= ell``, identity on ``|x| >= ell + 1``.

    Cubic Hermite blend in between (value and slope 0 at ell, value ell+1
    and slope 1 at ell+1).
    """
    if not ell > 0:
        raise DomainError("dead-zone amplitude must be positive")
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    s = np.clip(a - ell, 0.0, 1.0)
    blend = (3.0 * s * s - 2.0 * s ** 3) * (ell + 1.0) + (s ** 3 - s * s)
    out = np.where(a >= ell + 1.0, x, np.sign(x) * blend)
    return out if out.ndim else float(out)


def dead_zone_slope(x, ell: float):
    a = np.abs(np.asarray(x, dtype=float))
    s = np.clip(a - ell, 0.0, 1.0)
    out = np.where(a >= ell + 1.0, 1.0, (6.0 * s - 6.0 * s * s) * (ell + 1.0) + 3.0 * s * s - 2.0 * s)
    return out if out.ndim else float(out)


def dzv(v, ell: float) -> np.ndarray:
    return np.asarray(dead_zone(np.asarray(v, dtype=float), ell), dtype=float).reshape(np.shape(v))


def M_of(X) -> np.ndarray:
    """``M(X) = [0-row; X]``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.vstack([np.zeros((1, X.shape[1])), X])


def beta_map(X, xi1: float, omega) -> np.ndarray:
    """Adaptation regressor: row 1 of X plus row 1 of Omega(xi1).

    ``omega`` is either a callable ``y -> (d, q)`` or an already evaluated matrix.
    """
    Om = np.asarray(omega(xi1) if callable(omega) else omega, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        return Om[0].copy()
    return X[0] + Om[0]


def H_map(X, xi1: float, K, omega) -> np.ndarray:
    """``H = M(X) beta + K``."""
    beta = beta_map(X, xi1, omega)
    return M_of(X) @ beta + np.asarray(K, dtype=float)


@dataclass(frozen=True)
class RegulatorGains:
    """Design knobs.

    ``k = 0`` is accepted so the stabilizer can be switched off for
    comparison runs; everything else must be strictly positive.
    """

    roots: tuple
    lam: float = DEFAULT_LAMBDA
    k: float = DEFAULT_K
    ell: float = 1.0
    blend: float = 1.0

    def __post_init__(self):
        roots = tuple(float(r) for r in np.atleast_1d(np.asarray(self.roots, dtype=float)))
        object.__setattr__(self, "roots", roots)
        poly_to_b(roots)
        if not self.lam > 0:
            raise DomainError(f"lambda must be positive, got {self.lam}")
        if not self.k >= 0:
            raise DomainError(f"k must be non-negative, got {self.k}")
        if not self.ell > 0:
            raise DomainError(f"dead-zone amplitude must be positive, got {self.ell}")
        if self.blend != 1.0:
            raise DomainError("the dead-zone blend width is fixed at 1")

    def with_gains(self, lam: float | None = None, k: float | None = None) -> "RegulatorGains":
        return replace(self, lam=self.lam if lam is None else lam, k=self.k if k is None else k)


def default_ell(im: ImmersionData, box: ParamBox, points_per_axis: int = 9,
                factor: float = ELL_FACTOR) -> float:
    """``factor`` times the largest ``|theta(rho)|`` on a grid over the box."""
    grid = box.grid(points_per_axis)
    norms = [np.linalg.norm(im.theta(r)) for r in grid]
    return factor * float(max(norms))


@dataclass(frozen=True)
class RegulatorDesign:
    """All constant matrices of the controller, derived once from the gains.

    ``h_shift`` is added to H; it is zero in any legitimate design and
    exists so tests can corrupt the controller on purpose.
    """

    dims: SystemDims
    gains: RegulatorGains
    A: np.ndarray
    b: np.ndarray
    F: np.ndarray
    G: np.ndarray
    K: np.ndarray
    P: np.ndarray
    h_shift: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_gains(cls, gains: RegulatorGains, dims: SystemDims) -> "RegulatorDesign":
        d = dims.d
        if len(gains.roots) != d - 1:
            raise DomainError(f"need {d - 1} roots for d={d}, got {len(gains.roots)}")
        b = poly_to_b(gains.roots)
        A, _ = canonical_AC(d)
        F, G = build_F_G(b, d, dims.q)
        K = compute_K(b, gains.lam, d)
        P = solve_lyapunov(F)
        return cls(dims, gains, A, b, F, G, K, P, np.zeros(d))

    def corrupted(self, h_shift) -> "RegulatorDesign":
        return replace(self, h_shift=np.asarray(h_shift, dtype=float))

    @property
    def b_hat(self) -> np.ndarray:
        return -self.b[1:]


@dataclass(frozen=True)
class RegulatorState:
    xi: np.ndarray
    theta_hat: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        for name in ("xi", "theta_hat", "X"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"regulator state {name} is not finite")
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, dims: SystemDims) -> "RegulatorState":
        return cls(np.zeros(dims.d), np.zeros(dims.q), np.zeros((dims.d - 1, dims.q)))

    def pack(self) -> np.ndarray:
        return np.concatenate([self.xi, self.theta_hat, self.X.ravel()])

    @classmethod
    def unpack(cls, vec, dims: SystemDims) -> "RegulatorState":
        vec = np.asarray(vec, dtype=float)
        d, q = dims.d, dims.q
        expected = d + q + (d - 1) * q
        if vec.shape != (expected,):
            raise DomainError(f"regulator vector must have length {expected}")
        return cls(vec[:d], vec[d:d + q], vec[d + q:].reshape(d - 1, q))


def regulator_rhs(xi, theta_hat, X, e: float, design: RegulatorDesign, im: ImmersionData):
    """Array form of :func:`regulator_derivative`: ``(u, xi', theta_hat', X')``."""
    g = design.gains
    v = -g.k * e
    xi1 = float(xi[0])
    u = xi1 + v
    phi = im.phi_c(xi1)
    Om = im.omega_c(xi1)
    MX = M_of(X)
    beta = X[0] + Om[0]
    H = MX @ beta + design.K + design.h_shift
    dz = dzv(theta_hat, g.ell)
    dxi = design.A @ xi + phi + Om @ theta_hat + H * v - MX @ dz
    dth = beta * v - dz
    dX = design.F @ X + design.G @ Om
    return u, dxi, dth, dX


def regulator_derivative(rs: RegulatorState, e: float, design: RegulatorDesign,
                         im: ImmersionData):
    """Control ``u`` and the time derivative of the controller state."""
    u, dxi, dth, dX = regulator_rhs(rs.xi, rs.theta_hat, rs.X, e, design, im)
    return u, RegulatorState(dxi, dth, dX)
