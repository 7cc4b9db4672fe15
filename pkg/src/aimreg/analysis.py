"""Numerical checks of the regulator's analytical structure.

Coordinates used here:

* error coordinates ``theta_tilde = theta_hat - theta(rho)``,
  ``eta = xi - M(X) theta_tilde`` (so ``eta_1 = xi_1``);
* normal form, which also removes the v-dependence of the regulator state:
  ``theta_tilde = theta_hat - theta - int_0^e beta(X, xi_1 - K_1 e + K_1 s) ds``,
  ``eta = xi - M(X)(theta_hat - theta) - K e``;
* on the zero-error manifold ``chi = eta - tau(z)`` and
  ``zeta = b_hat chi_1 + chi_2``, where the Lyapunov function is
  ``V = chi_1^2 + zeta^T P zeta + |theta_tilde|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad_vec
from scipy.spatial import cKDTree
from scipy.spatial.distance import directed_hausdorff

from .exceptions import AlgebraMismatch, AssumptionViolation, DomainError, IntegrationError, QuadratureError
from .model import ImmersionData, ParamBox, PlantModel
from .numerics import Trajectory, directional_derivative, simulate
from .regulator import M_of, RegulatorDesign, RegulatorState, dzv
from .simulation import ClosedLoop, StateLayout

DEFAULT_TRANSIENT = 200.0
DEFAULT_CAP = 1e6


# --- coordinate changes -----------------------------------------------------

def to_eta_theta(rs: RegulatorState, rho, im: ImmersionData):
    """``(eta, theta_tilde)`` of a regulator state for the true parameters ``rho``."""
    theta_tilde = rs.theta_hat - im.theta(rho)
    eta = rs.xi - M_of(rs.X) @ theta_tilde
    if eta[0] != rs.xi[0]:
        raise AlgebraMismatch("eta_1 differs from xi_1", "eta", abs(eta[0] - rs.xi[0]))
    return eta, theta_tilde


def from_eta_theta(eta, theta_tilde, X, rho, im: ImmersionData) -> RegulatorState:
    """Inverse of :func:`to_eta_theta` for a given filter state X."""
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    X = np.asarray(X, dtype=float)
    xi = np.asarray(eta, dtype=float) + M_of(X) @ theta_tilde
    return RegulatorState(xi, theta_tilde + im.theta(rho), X)


def beta_integral(X, xi1: float, e: float, K1: float, im: ImmersionData, tol: float = 1e-10) -> np.ndarray:
    """``int_0^e beta(X, xi1 - K1 e + K1 s) ds`` by adaptive quadrature."""
    X = np.asarray(X, dtype=float)
    if e == 0.0:
        return np.zeros(im.dims.q)
    row = X[0]

    def integrand(s):
        return row + im.omega_c(xi1 - K1 * e + K1 * s)[0]

    value, err, info = quad_vec(integrand, 0.0, e, epsabs=tol, epsrel=0.0, full_output=True)
    if not info.success or err > tol:
        raise QuadratureError(f"beta integral did not converge (error estimate {err:.3g})")
    return np.asarray(value, dtype=float)


def to_normal_form(rs: RegulatorState, e: float, rho, design: RegulatorDesign, im: ImmersionData):
    """Normal-form ``(eta, theta_tilde)`` in which the regulator state no longer sees v."""
    theta = im.theta(rho)
    K = design.K
    integral = beta_integral(rs.X, float(rs.xi[0]), float(e), float(K[0]), im)
    theta_tilde = rs.theta_hat - theta - integral
    eta = rs.xi - M_of(rs.X) @ (rs.theta_hat - theta) - K * e
    return eta, theta_tilde


# --- immersion ----------------------------------------------------------------

def augmented_zero_dynamics(plant: PlantModel, rho):
    """Field of ``col(w, z)`` with e = 0 and the parameters frozen at ``rho``."""
    rho = np.asarray(rho, dtype=float)
    s = plant.dims.s

    def field(t, x):
        w, z = x[:s], x[s:]
        return np.concatenate([plant.sfun(rho, w), plant.f0(rho, w, z)])

    return field


def immersion_residual(point, im: ImmersionData, plant: PlantModel, h_rel: float = 1e-5):
    """Residuals ``(r_dyn, r_out)`` of the immersion identities at ``col(rho, w, z)``.

    ``r_dyn`` is the derivative of tau along the zero dynamics minus
    ``A tau + phi(C tau) + Omega(C tau) theta``; ``r_out = c - C tau`` with
    ``c = -q(rho, w, z, 0)`` read from the plant.
    """
    point = np.asarray(point, dtype=float)
    rho, w, z = plant.split(point)
    p = plant.dims.p

    def tau_of(x):
        r, ww, zz = plant.split(x)
        return im.tau(r, ww, zz)

    direction = plant.zero_dynamics(point)
    direction[:p] = 0.0
    lhs = directional_derivative(tau_of, point, direction, h_rel)
    tau = np.asarray(im.tau(rho, w, z), dtype=float)
    y = tau[0]
    d = tau.size
    rhs = np.zeros(d)
    rhs[:-1] = tau[1:]
    rhs = rhs + im.phi_c(y) + im.omega_c(y) @ im.theta(rho)
    r_out = plant.c(rho, w, z) - y
    return lhs - rhs, float(r_out)


@dataclass(frozen=True)
class OmegaLimitSample:
    """Post-transient samples of ``col(w, z)`` for fixed parameters."""

    rho: np.ndarray
    points: np.ndarray
    times: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def full_points(self) -> np.ndarray:
        """Samples as ``col(rho, w, z)`` rows."""
        return np.hstack([np.tile(self.rho, (self.points.shape[0], 1)), self.points])

    def hausdorff(self, other: "OmegaLimitSample") -> float:
        return max(directed_hausdorff(self.points, other.points)[0],
                   directed_hausdorff(other.points, self.points)[0])


def sample_omega_limit(plant: PlantModel, rho, seeds, t_transient: float = DEFAULT_TRANSIENT,
                       t_window: float = 100.0, h: float = 1e-2, n_samples: int = 1000,
                       cap: float = DEFAULT_CAP) -> OmegaLimitSample:
    """Approximate the steady-state locus of the zero dynamics by post-transient sampling.

    ``seeds`` are initial ``col(w, z)`` vectors; each contributes
    ``n_samples // len(seeds)`` equally spaced samples from the window.

    Raises
    ------
    AssumptionViolation
        If any trajectory leaves the ball of radius ``cap``.
    """
    rho = np.asarray(rho, dtype=float)
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    field = augmented_zero_dynamics(plant, rho)
    per_seed = max(1, n_samples // seeds.shape[0])
    n_steps = int(round(t_window / h))
    every = max(1, n_steps // per_seed)

    pts, times = [], []
    for seed in seeds:
        try:
            pre = simulate(field, seed, 0.0, t_transient, h, record_every=10 ** 9)
            if np.max(np.abs(pre.final)) > cap:
                raise AssumptionViolation(f"zero dynamics left the ball of radius {cap:g} from seed {seed}")
            win = simulate(field, pre.final, t_transient, t_transient + t_window, h, record_every=every)
        except IntegrationError as err:
            raise AssumptionViolation(f"zero dynamics diverged from seed {seed} at t={err.t:.4g}") from None
        if np.max(np.abs(win.states)) > cap:
            raise AssumptionViolation(f"zero dynamics left the ball of radius {cap:g} from seed {seed}")
        pts.append(win.states[1:])
        times.append(win.times[1:])
    points = np.vstack(pts)
    return OmegaLimitSample(rho, points, np.concatenate(times), points.min(axis=0), points.max(axis=0))


# --- filter steady state and excitation ------------------------------------

def sigma_map(plant: PlantModel, rho, design: RegulatorDesign, im: ImmersionData, start,
              pre_roll: float, duration: float, h: float = 5e-3, record_every: int = 1) -> Trajectory:
    """Steady-state filter response ``X = sigma(w, z)`` along a zero-dynamics trajectory.

    Integrates ``col(w, z)`` together with ``X' = F X + G Omega(tau_1)`` from
    ``X = 0``; after ``pre_roll`` seconds the contraction of F has erased the
    initial condition. The returned trajectory (time origin kept) covers
    ``[pre_roll, pre_roll + duration]`` with states ``col(w, z, vec(X))``.
    """
    rho = np.asarray(rho, dtype=float)
    s = plant.dims.s
    d, q = im.dims.d, im.dims.q
    base = augmented_zero_dynamics(plant, rho)
    F, G = design.F, design.G
    n_wz = np.asarray(start).size

    def field(t, x):
        wz = x[:n_wz]
        X = x[n_wz:].reshape(d - 1, q)
        y = im.tau(rho, wz[:s], wz[s:])[0]
        return np.concatenate([base(t, wz), (F @ X + G @ im.omega_c(y)).ravel()])

    x0 = np.concatenate([np.asarray(start, dtype=float), np.zeros((d - 1) * q)])
    if pre_roll > 0:
        x0 = simulate(field, x0, 0.0, pre_roll, h, record_every=10 ** 9).final
    return simulate(field, x0, pre_roll, pre_roll + duration, h, record_every=record_every)


def regressor_samples(traj: Trajectory, plant: PlantModel, rho, im: ImmersionData) -> np.ndarray:
    """``gamma = beta(sigma, tau_1)`` (one row per sample) from a :func:`sigma_map` trajectory."""
    rho = np.asarray(rho, dtype=float)
    s, n = plant.dims.s, plant.dims.n
    d, q = im.dims.d, im.dims.q
    rows = []
    for x in traj.states:
        w, z = x[:s], x[s:s + n]
        X = x[s + n:].reshape(d - 1, q)
        y = im.tau(rho, w, z)[0]
        rows.append(X[0] + im.omega_c(y)[0])
    return np.array(rows)


def gram_matrix(gamma, dt: float) -> np.ndarray:
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    return dt * gamma.T @ gamma


def pe_check(gamma, dt: float) -> float:
    """Smallest eigenvalue of ``int gamma gamma^T dt`` (rectangle rule)."""
    G = gram_matrix(gamma, dt)
    return float(np.linalg.eigvalsh(0.5 * (G + G.T))[0])


def whitening_basis(plant: PlantModel, im: ImmersionData, design: RegulatorDesign, rho, start,
                    pre_roll: float = 100.0, window: float = 100.0, h: float = 5e-3) -> np.ndarray:
    """``T = R^{-1/2}`` with R the time-averaged regressor Gram matrix at ``rho``.

    Reparametrizing the immersion by T turns R into the identity at ``rho``,
    which equalizes the convergence rates of the parameter estimates.
    """
    traj = sigma_map(plant, rho, design, im, start, pre_roll, window, h)
    gamma = regressor_samples(traj, plant, rho, im)
    R = gram_matrix(gamma[1:], h) / window
    vals, vecs = np.linalg.eigh(0.5 * (R + R.T))
    if vals[0] <= 0:
        raise AssumptionViolation("regressor Gram matrix is singular; no excitation to whiten")
    return (vecs / np.sqrt(vals)) @ vecs.T


# --- transformed closed loop --------------------------------------------------

class TransformedLoop:
    """Closed loop in error coordinates, integrated independently of the raw loop.

    State ``col(w, z, e, eta, theta_tilde, vec(X))`` for fixed parameters::

        e'           = q(rho, w, z, e) + eta_1 + v
        eta'         = A eta + b beta^T theta_tilde + K v + phi(eta_1) + Omega(eta_1) theta
        theta_tilde' = beta v - dzv(theta_tilde + theta)
        X'           = F X + G Omega(eta_1)
    """

    def __init__(self, plant: PlantModel, im: ImmersionData, design: RegulatorDesign, rho):
        if plant.coupled:
            raise DomainError("error coordinates assume constant parameters")
        self.plant, self.im, self.design = plant, im, design
        self.rho = np.asarray(rho, dtype=float)
        self.theta = im.theta(self.rho)
        m = im.dims
        self.sizes = (m.s, m.n, 1, m.d, m.q, (m.d - 1) * m.q)
        self.offsets = np.cumsum((0,) + self.sizes)

    def split(self, x):
        o = self.offsets
        m = self.im.dims
        return (x[..., o[0]:o[1]], x[..., o[1]:o[2]], x[..., o[2]], x[..., o[3]:o[4]],
                x[..., o[4]:o[5]], x[..., o[5]:o[6]].reshape(x.shape[:-1] + (m.d - 1, m.q)))

    def field(self, t, x):
        w, z, e, eta, tt, X = self.split(x)
        rho, im, des = self.rho, self.im, self.design
        v = -des.gains.k * e
        y = eta[0]
        Om = im.omega_c(y)
        beta = X[0] + Om[0]
        de = float(self.plant.qfun(rho, w, z, e)) + y + v
        deta = np.zeros_like(eta)
        deta[:-1] = eta[1:]
        deta += des.b * (beta @ tt) + des.K * v + im.phi_c(y) + Om @ self.theta
        dtt = beta * v - dzv(tt + self.theta, des.gains.ell)
        dX = des.F @ X + des.G @ Om
        dz = np.asarray(self.plant.f0(rho, w, z), float) + np.asarray(self.plant.f1(rho, w, z, e), float) * e
        return np.concatenate([self.plant.sfun(rho, w), dz, [de], deta, dtt, dX.ravel()])

    def from_raw(self, states) -> np.ndarray:
        """Map raw closed-loop states (rows) into these coordinates."""
        layout = StateLayout(self.im.dims)
        p = layout.split(np.atleast_2d(states))
        tt = p["theta_hat"] - self.theta
        # M(X) theta_tilde for every row
        mx = np.einsum("nij,nj->ni", p["X"], tt)
        eta = p["xi"].copy()
        eta[:, 1:] -= mx
        return np.hstack([p["w"], p["z"], p["e"][:, None], eta, tt, p["X"].reshape(len(eta), -1)])

    def channel_names(self):
        names = []
        for label, width in zip(("w", "z", "e", "eta", "theta_tilde", "X"), self.sizes):
            names += [label] if width == 1 else [f"{label}[{i}]" for i in range(width)]
        return names


@dataclass(frozen=True)
class OracleReport:
    max_deviation: float
    channel: str
    per_step: np.ndarray = field(repr=False)
    first_exceed_time: float | None = None
    reference: Trajectory | None = field(default=None, repr=False)


def cross_coordinate_oracle(loop: ClosedLoop, x0, horizon: float = 10.0, h: float = 1e-3,
                            tol: float = 1e-6, raise_on_fail: bool = True,
                            reference: Trajectory | None = None) -> OracleReport:
    """Compare the raw closed loop, mapped to error coordinates, with the error-coordinate system.

    The raw loop is integrated in its own coordinates; the transformed system
    is integrated separately from the mapped initial state. ``reference``
    lets a caller reuse a transformed-system run (it does not depend on H).

    Raises
    ------
    AlgebraMismatch
        When ``raise_on_fail`` and the deviation exceeds ``tol``; names the
        channel that first crossed it.
    """
    layout = loop.layout
    rho = layout.split(np.asarray(x0, float))["rho"]
    tl = TransformedLoop(loop.plant, loop.im, loop.design, rho)
    raw = loop.simulate(x0, horizon, h)
    mapped = tl.from_raw(raw.states)
    if reference is None:
        reference = simulate(tl.field, mapped[0], 0.0, horizon, h)
    if reference.states.shape != mapped.shape:
        raise ValueError("reference trajectory does not match the raw run")
    dev = np.abs(mapped - reference.states)
    per_step = dev.max(axis=1)
    worst = int(np.argmax(dev.max(axis=0)))
    names = tl.channel_names()
    exceed = np.nonzero(per_step > tol)[0]
    first_time = None
    channel = names[worst]
    if exceed.size:
        i = exceed[0]
        first_time = float(raw.times[i])
        channel = names[int(np.argmax(dev[i]))]
    report = OracleReport(float(per_step.max()), channel, per_step, first_time, reference)
    if raise_on_fail and exceed.size:
        raise AlgebraMismatch(
            f"raw and transformed loops diverge at t={first_time:.4g} in {channel}",
            channel, report.max_deviation)
    return report


# --- zero-error dynamics and Lyapunov function -------------------------------

class ZeroErrorLoop:
    """Error-coordinate loop constrained to e = 0 by ``v = -(q(rho,w,z,0) + eta_1)``.

    State ``col(w, z, eta, theta_tilde, vec(X))``.
    """

    def __init__(self, plant: PlantModel, im: ImmersionData, design: RegulatorDesign, rho):
        self.plant, self.im, self.design = plant, im, design
        self.rho = np.asarray(rho, dtype=float)
        self.theta = im.theta(self.rho)
        m = im.dims
        self.sizes = (m.s, m.n, m.d, m.q, (m.d - 1) * m.q)
        self.offsets = np.cumsum((0,) + self.sizes)

    def split(self, x):
        o = self.offsets
        m = self.im.dims
        return (x[..., o[0]:o[1]], x[..., o[1]:o[2]], x[..., o[2]:o[3]], x[..., o[3]:o[4]],
                x[..., o[4]:o[5]].reshape(x.shape[:-1] + (m.d - 1, m.q)))

    def field(self, t, x):
        w, z, eta, tt, X = self.split(x)
        rho, im, des = self.rho, self.im, self.design
        y = eta[0]
        v = -(float(self.plant.qfun(rho, w, z, 0.0)) + y)
        Om = im.omega_c(y)
        beta = X[0] + Om[0]
        deta = np.zeros_like(eta)
        deta[:-1] = eta[1:]
        deta += des.b * (beta @ tt) + des.K * v + im.phi_c(y) + Om @ self.theta
        dtt = beta * v - dzv(tt + self.theta, des.gains.ell)
        dX = des.F @ X + des.G @ Om
        return np.concatenate([self.plant.sfun(rho, w), self.plant.f0(rho, w, z), deta, dtt, dX.ravel()])

    def initial_state(self, w, z, chi, theta_tilde, X=None) -> np.ndarray:
        """State with ``eta = tau(z) + chi``."""
        m = self.im.dims
        eta = self.im.tau(self.rho, w, z) + np.asarray(chi, dtype=float)
        X = np.zeros((m.d - 1, m.q)) if X is None else np.asarray(X, dtype=float)
        return np.concatenate([w, z, eta, theta_tilde, X.ravel()])

    def lyapunov_coordinates(self, states):
        """Per-row ``(chi_1, zeta, theta_tilde)``."""
        states = np.atleast_2d(states)
        w, z, eta, tt, _ = self.split(states)
        tau = np.array([self.im.tau(self.rho, ww, zz) for ww, zz in zip(w, z)])
        chi = eta - tau
        zeta = self.design.b_hat[None, :] * chi[:, :1] + chi[:, 1:]
        return chi[:, 0], zeta, tt


def lyapunov_series(chi1, zeta, theta_tilde, P) -> np.ndarray:
    """``V = chi_1^2 + zeta^T P zeta + |theta_tilde|^2`` row by row."""
    chi1 = np.atleast_1d(np.asarray(chi1, dtype=float))
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    tt = np.atleast_2d(np.asarray(theta_tilde, dtype=float))
    return chi1 ** 2 + np.einsum("ni,ij,nj->n", zeta, np.asarray(P, float), zeta) + np.sum(tt ** 2, axis=1)


def lyapunov_increases(V, tol: float = 1e-8) -> np.ndarray:
    """Indices i with ``V[i+1] - V[i] > tol``."""
    return np.nonzero(np.diff(np.asarray(V, dtype=float)) > tol)[0]


def delta_term(chi1, tau1, theta, im: ImmersionData, as_printed: bool = False) -> np.ndarray:
    """Mismatch term of the chi dynamics, which vanishes at ``chi_1 = 0``.

    ``as_printed=True`` returns the variant with the roles of chi_1 and tau_1
    exchanged in the subtracted terms (it vanishes at ``tau_1 = 0`` instead).
    """
    theta = np.asarray(theta, dtype=float)
    ref = chi1 if as_printed else tau1
    y = chi1 + tau1
    return im.phi_c(y) - im.phi_c(ref) + (im.omega_c(y) - im.omega_c(ref)) @ theta


# --- dead-zone inequalities ---------------------------------------------------

def dead_zone_sign_violations(im: ImmersionData, box: ParamBox, ell: float, n: int,
                              rng: np.random.Generator, scale: float | None = None) -> int:
    """Count samples with ``theta_tilde^T dzv(theta_tilde + theta) < 0``."""
    q = im.dims.q
    scale = 3.0 * (ell + 1.0) if scale is None else scale
    rhos = box.lower + rng.random((n, box.lower.size)) * (box.upper - box.lower)
    thetas = np.array([im.theta(r) for r in rhos])
    tt = rng.uniform(-scale, scale, size=(n, q))
    vals = np.sum(tt * dzv(tt + thetas, ell), axis=1)
    return int(np.count_nonzero(vals < 0))


def dead_zone_ratio_min(im: ImmersionData, box: ParamBox, ell: float, n: int,
                        rng: np.random.Generator, delta: float | None = None,
                        radius_factor: float = 4.0) -> float:
    """Minimum of ``2 theta_tilde^T dzv(theta_tilde + theta) / |theta_tilde|^2`` over ``|theta_tilde| >= delta``.

    Defaults to ``delta = sqrt(q)(2 ell + 1) + 0.1``; norms are drawn
    uniformly in ``[delta, radius_factor * delta]``.
    """
    q = im.dims.q
    if delta is None:
        delta = np.sqrt(q) * (2.0 * ell + 1.0) + 0.1
    rhos = box.lower + rng.random((n, box.lower.size)) * (box.upper - box.lower)
    thetas = np.array([im.theta(r) for r in rhos])
    dirs = rng.standard_normal((n, q))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = rng.uniform(delta, radius_factor * delta, size=n)
    tt = dirs * radii[:, None]
    ratio = 2.0 * np.sum(tt * dzv(tt + thetas, ell), axis=1) / radii ** 2
    return float(ratio.min())


# --- attractivity and clamp calibration --------------------------------------

def fit_exponential_envelope(times, dist, floor: float = 1e-12):
    """Fit ``dist(t) <= M exp(-a t)``: slope from a log-linear fit, M from the worst sample."""
    times = np.asarray(times, dtype=float)
    dist = np.maximum(np.asarray(dist, dtype=float), floor)
    keep = dist > 10 * floor
    if np.count_nonzero(keep) < 2:
        return 0.0, 0.0
    slope, _ = np.polyfit(times[keep], np.log(dist[keep]), 1)
    a = max(-slope, 0.0)
    M = float(np.max(dist * np.exp(a * times)))
    return M, float(a)


def attractivity_probe(plant: PlantModel, rho, attractor: OmegaLimitSample, start, perturbation,
                       horizon: float = 30.0, h: float = 1e-2):
    """Distance of a perturbed trajectory to the sampled attractor, plus the fitted ``(M, a)``.

    The exosystem part of the perturbation should be zero so the
    trajectory approaches the same steady-state locus.
    """
    field = augmented_zero_dynamics(plant, rho)
    traj = simulate(field, np.asarray(start, float) + np.asarray(perturbation, float), 0.0, horizon, h)
    dist, _ = cKDTree(attractor.points).query(traj.states)
    M, a = fit_exponential_envelope(traj.times, dist)
    return traj.times, dist, M, a


@lru_cache(maxsize=32)
def _max_abs_c(plant: PlantModel, rho: tuple, w0: tuple, z0: tuple, t_transient: float,
               t_window: float, h: float) -> float:
    sample = sample_omega_limit(plant, np.array(rho), [np.concatenate([w0, z0])], t_transient,
                                t_window, h, n_samples=20000)
    s = plant.dims.s
    vals = [abs(plant.c(np.array(rho), p[:s], p[s:])) for p in sample.points]
    return float(max(vals))


def calibrate_clamp_radius(plant: PlantModel, box: ParamBox, w0, z0, factor: float = 1.25,
                           t_transient: float = 200.0, t_window: float = 100.0, h: float = 1e-2) -> float:
    """``factor`` times the largest steady-state ``|c|`` over the box corners and centre."""
    rhos = np.vstack([box.corners(), box.center[None, :]])
    worst = max(_max_abs_c(plant, tuple(r), tuple(np.asarray(w0, float)), tuple(np.asarray(z0, float)),
                           t_transient, t_window, h) for r in rhos)
    return factor * worst


# --- report -------------------------------------------------------------------

@dataclass(frozen=True)
class DiagnosticsReport:
    """Scalar diagnostics of one run plus the per-time V series."""

    times: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    immersion_max_dyn: float
    immersion_max_out: float
    pe_min_eig: float
    dead_zone_violations: int
    max_state_norm: float
    sup_e_window: float
    settling_time: float

    def __post_init__(self):
        for name in ("immersion_max_dyn", "immersion_max_out", "pe_min_eig", "max_state_norm",
                     "sup_e_window"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"diagnostic {name} is not finite")

    def as_dict(self) -> dict:
        return {
            "immersion_max_dyn": self.immersion_max_dyn,
            "immersion_max_out": self.immersion_max_out,
            "pe_min_eig": self.pe_min_eig,
            "dead_zone_violations": self.dead_zone_violations,
            "max_state_norm": self.max_state_norm,
            "sup_e_window": self.sup_e_window,
            "settling_time": self.settling_time,
        }


def settling_time(times, e, eps: float) -> float:
    """First time after which ``|e| <= eps`` for the rest of the record (inf if never)."""
    e = np.abs(np.asarray(e, dtype=float))
    bad = np.nonzero(e > eps)[0]
    if bad.size == 0:
        return float(times[0])
    if bad[-1] == len(e) - 1:
        return float("inf")
    return float(times[bad[-1] + 1])
