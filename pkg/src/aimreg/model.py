"""Plant, exosystem and immersion data; the built-in forced Van der Pol example.

A plant is

    z' = f0(rho, w, z) + f1(rho, w, z, e) e
    e' = q(rho, w, z, e) + u

driven by the exosystem

    rho' = s_rho(rho, w, z, e) e        (zero for a constant-parameter exosystem)
    w'   = s(rho, w) + s_w(rho, w, z, e) e

and the steady-state input c = -q(rho, w, z, 0) is assumed to be the output of
a system linearizable by output injection, ``tau' = A tau + phi(y) +
Omega(y) theta(rho)``, ``y = C tau``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .exceptions import DomainError


@dataclass(frozen=True)
class SystemDims:
    n: int  # plant state z
    p: int  # uncertain parameters rho
    s: int  # exosystem state w
    d: int  # internal model
    q: int  # adapted parameters

    def __post_init__(self):
        for name in ("n", "p", "s", "d", "q"):
            if getattr(self, name) < 1:
                raise DomainError(f"dimension {name} must be >= 1")


@dataclass(frozen=True)
class ParamBox:
    """Componentwise bounds on the uncertain parameter vector."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DomainError("bounds must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DomainError("parameter box must be compact (finite bounds)")
        if np.any(lo > hi):
            raise DomainError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, rho) -> bool:
        rho = np.asarray(rho, dtype=float)
        return bool(np.all(rho >= self.lower) and np.all(rho <= self.upper))

    def corners(self) -> np.ndarray:
        p = self.lower.size
        idx = (np.arange(2 ** p)[:, None] >> np.arange(p)) & 1
        return np.where(idx == 1, self.upper, self.lower)

    def grid(self, points_per_axis: int) -> np.ndarray:
        axes = [np.linspace(a, b, points_per_axis) for a, b in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class PlantModel:
    """Vector fields of the controlled plant and its exosystem.

    ``s_rho`` and ``s_w`` are the optional e-dependent exosystem couplings;
    when left as ``None`` the parameters are constant and w is autonomous.
    """

    dims: SystemDims
    f0: Callable
    f1: Callable
    qfun: Callable
    sfun: Callable
    s_rho: Optional[Callable] = None
    s_w: Optional[Callable] = None
    name: str = "plant"
    # tag of a compiled closed-loop kernel reproducing these fields, with its parameters
    kernel: Optional[str] = None
    kernel_params: tuple = ()

    @property
    def coupled(self) -> bool:
        return self.s_rho is not None or self.s_w is not None

    def c(self, rho, w, z) -> float:
        """Steady-state input that keeps e identically zero."""
        return -float(self.qfun(rho, w, z, 0.0))

    def exo_field(self, rho, w, z, e):
        """(rho', w') including the optional couplings."""
        drho = np.zeros(self.dims.p)
        dw = np.asarray(self.sfun(rho, w), dtype=float)
        if self.s_rho is not None:
            drho = np.asarray(self.s_rho(rho, w, z, e), dtype=float) * e
        if self.s_w is not None:
            dw = dw + np.asarray(self.s_w(rho, w, z, e), dtype=float) * e
        return drho, dw

    def zero_dynamics(self, point):
        """Augmented zero dynamics (rho' = 0, w' = s, z' = f0) at ``col(rho, w, z)``."""
        rho, w, z = self.split(point)
        return np.concatenate([np.zeros(self.dims.p), self.sfun(rho, w), self.f0(rho, w, z)])

    def split(self, point):
        p, s = self.dims.p, self.dims.s
        point = np.asarray(point, dtype=float)
        return point[:p], point[p:p + s], point[p + s:]

    def with_couplings(self, s_rho=None, s_w=None) -> "PlantModel":
        # arbitrary couplings are not known to any compiled kernel
        return replace(self, s_rho=s_rho, s_w=s_w, kernel=None, kernel_params=())


def canonical_AC(d: int):
    """Upper shift matrix A and C = (1, 0, ..., 0)."""
    if d < 1:
        raise DomainError("d must be >= 1")
    A = np.diag(np.ones(d - 1), 1) if d > 1 else np.zeros((1, 1))
    C = np.zeros((1, d))
    C[0, 0] = 1.0
    return A, C


def clamp_injection(y, Y: float, blend_width: float):
    """Saturate the output-injection argument outside ``[-Y, Y]``.

    Identity on ``|y| <= Y``; on ``Y < |y| < Y + blend_width`` the cubic
    Hermite blend from (value Y, slope 1) to (value Y + blend_width/2,
    slope 0), whose cubic coefficient vanishes so it is the quadratic
    ``Y + w (s - s^2/2)``; constant beyond. C^1 and non-decreasing.
    """
    if not Y > 0 or not blend_width > 0:
        raise DomainError("Y and blend_width must be positive")
    y = np.asarray(y, dtype=float)
    a = np.abs(y)
    s = np.clip((a - Y) / blend_width, 0.0, 1.0)
    blended = Y + blend_width * (s - 0.5 * s * s)
    out = np.where(a <= Y, y, np.sign(y) * blended)
    return out if out.ndim else float(out)


def clamp_injection_slope(y, Y: float, blend_width: float):
    """Derivative of :func:`clamp_injection`."""
    a = np.abs(np.asarray(y, dtype=float))
    s = np.clip((a - Y) / blend_width, 0.0, 1.0)
    out = np.where(a <= Y, 1.0, 1.0 - s)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ImmersionData:
    """Output-injection internal model used by the regulator.

    ``phi`` and ``omega`` are what the controller evaluates; ``theta``,
    ``tau`` and ``c`` are diagnostics that need the unknown parameters and
    are only used by analysis code. ``basis`` records a fixed
    reparametrization ``Omega -> Omega T``, ``theta -> T^{-1} theta``
    (``None`` means identity).
    """

    dims: SystemDims
    phi: Callable
    omega: Callable
    theta: Callable
    tau: Callable
    c: Callable
    sat_radius: float = np.inf
    blend_width: float = 1.0
    basis: Optional[np.ndarray] = field(default=None, repr=False)
    kernel: Optional[str] = None

    def clamp(self, y):
        if not np.isfinite(self.sat_radius):
            return y
        return clamp_injection(y, self.sat_radius, self.blend_width)

    def phi_c(self, y) -> np.ndarray:
        return np.asarray(self.phi(self.clamp(y)), dtype=float)

    def omega_c(self, y) -> np.ndarray:
        return np.asarray(self.omega(self.clamp(y)), dtype=float)

    def with_clamp(self, sat_radius: float, blend_width: float | None = None) -> "ImmersionData":
        if blend_width is None:
            blend_width = 0.1 * sat_radius
        return replace(self, sat_radius=float(sat_radius), blend_width=float(blend_width))

    def reparametrize(self, T) -> "ImmersionData":
        """Same internal model with ``Omega T`` and ``T^{-1} theta``.

        The product ``Omega(y) theta`` is unchanged so the immersion
        identities still hold; the adaptation law sees the regressor ``T^T beta``.
        """
        T = np.asarray(T, dtype=float)
        q = self.dims.q
        if T.shape != (q, q):
            raise DomainError(f"basis must be {q}x{q}")
        if not np.all(np.isfinite(T)) or abs(np.linalg.det(T)) < 1e-300:
            raise DomainError("basis must be invertible")
        omega0, theta0 = self.omega, self.theta
        T_inv = np.linalg.inv(T)

        def omega(y):
            return np.asarray(omega0(y), dtype=float) @ T

        def theta(rho):
            return T_inv @ np.asarray(theta0(rho), dtype=float)

        total = T if self.basis is None else self.basis @ T
        return replace(self, omega=omega, theta=theta, basis=total)


# --- built-in example: forced Van der Pol zero dynamics -------------------

EXAMPLE_BOX = ParamBox(np.array([0.5, 0.2, 0.5]), np.array([3.0, 2.0, 2.0]))
EXAMPLE_DIMS = SystemDims(n=2, p=3, s=2, d=4, q=5)


def _check_rho(rho):
    omega, sigma, mu = (float(v) for v in rho)
    if mu == 0.0:
        raise DomainError("mu must be nonzero")
    return omega, sigma, mu


def _vdp_integral(z1, mu):
    # closed form of int_0^{mu z1} (x^2/mu^2 - 1) dx
    return mu * z1 ** 3 / 3.0 - mu * z1


def example_plant(name: str = "forced-vdp") -> PlantModel:
    """Exosystem + plant of the worked example.

    ``rho = (omega, sigma, mu)``::

        w1' = w2,  w2' = -omega^2 w1
        z1' = z2,  z2' = -sigma z1 - (z1^2 - 1) z2 - w1 + e
        e'  = -mu z1 + u
    """

    def f0(rho, w, z):
        sigma = rho[1]
        z1, z2 = z[0], z[1]
        return np.array([z2, -sigma * z1 - (z1 * z1 - 1.0) * z2 - w[0]])

    def f1(rho, w, z, e):
        return np.array([0.0, 1.0])

    def qfun(rho, w, z, e):
        return -rho[2] * z[0]

    def sfun(rho, w):
        return np.array([w[1], -rho[0] * rho[0] * w[0]])

    return PlantModel(EXAMPLE_DIMS, f0, f1, qfun, sfun, name=name, kernel="forced-vdp",
                      kernel_params=(0.0,))


def example_theta(rho) -> np.ndarray:
    omega, sigma, mu = _check_rho(rho)
    a = 1.0 / (3.0 * mu * mu)
    om2 = omega * omega
    return np.array([a, sigma + om2, om2, om2 * a, om2 * sigma])


def example_tau(rho, w, z) -> np.ndarray:
    omega, sigma, mu = _check_rho(rho)
    om2 = omega * omega
    t1 = mu * z[0]
    t2 = mu * z[1] + _vdp_integral(z[0], mu)
    return np.array([t1, t2, om2 * t1 - mu * w[0], om2 * t2 - mu * w[1]])


def _example_phi(y):
    return np.array([y, 0.0, 0.0, 0.0])


def _example_omega(y):
    y3 = y * y * y
    return np.array([
        [-y3, 0.0, 0.0, 0.0, 0.0],
        [0.0, -y, 0.0, 0.0, 0.0],
        [0.0, 0.0, y, -y3, 0.0],
        [0.0, 0.0, 0.0, 0.0, -y],
    ])


def example_immersion(sat_radius: float = np.inf, blend_width: float | None = None) -> ImmersionData:
    """Output-injection immersion of the example's steady-state input ``mu z1``."""

    def c(rho, w, z):
        return float(rho[2] * z[0])

    im = ImmersionData(EXAMPLE_DIMS, _example_phi, _example_omega, example_theta, example_tau, c,
                       kernel="forced-vdp")
    if np.isfinite(sat_radius):
        im = im.with_clamp(sat_radius, blend_width)
    return im


def build_example(omega: float, sigma: float, mu: float, sat_radius: float = np.inf,
                  blend_width: float | None = None, box: ParamBox = EXAMPLE_BOX,
                  basis=None):
    """Plant, immersion and the true parameter vector of the worked example."""
    rho = np.array([omega, sigma, mu], dtype=float)
    if mu == 0:
        raise DomainError("mu must be nonzero")
    if not (omega > 0 and sigma > 0):
        raise DomainError("omega and sigma must be positive")
    if not box.contains(rho):
        raise DomainError(f"parameters {rho} outside the box [{box.lower}, {box.upper}]")
    im = example_immersion(sat_radius, blend_width)
    if basis is not None:
        im = im.reparametrize(basis)
    return example_plant(), im, rho


def printed_example_immersion() -> ImmersionData:
    """The example's immersion data exactly as typeset in the source article.

    Kept for reference: these formulas do not satisfy the immersion identity
    (see ``tests/test_model.py``); :func:`example_immersion` is the corrected one.
    """
    dims = SystemDims(n=2, p=3, s=2, d=4, q=4)

    def theta(rho):
        omega, sigma, mu = _check_rho(rho)
        om2 = omega * omega
        return np.array([1.0 / mu, sigma, -om2 + sigma, -om2 * om2 - om2 * sigma])

    def tau(rho, w, z):
        omega, sigma, mu = _check_rho(rho)
        om2 = omega * omega
        t1 = mu * z[0]
        t2 = mu * z[1] + _vdp_integral(z[0], mu)
        return np.array([t1, t2, mu * w[0] - om2 * t1, mu * w[1] - om2 * t2])

    def omega_fn(y):
        return np.diag([-y ** 3, -y, -y, -y])

    def c(rho, w, z):
        return float(rho[2] * z[0])

    return ImmersionData(dims, _example_phi, omega_fn, theta, tau, c)


def coupled_example_plant(gain: float = 0.1) -> PlantModel:
    """Example plant whose exosystem is driven by e with ``gain`` multipliers."""

    def s_rho(rho, w, z, e):
        return gain * np.ones(3)

    def s_w(rho, w, z, e):
        return gain * np.array([z[0], z[1]])

    plant = example_plant("forced-vdp-coupled").with_couplings(s_rho, s_w)
    return replace(plant, kernel="forced-vdp", kernel_params=(float(gain),))
