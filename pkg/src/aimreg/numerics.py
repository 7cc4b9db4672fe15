"""Small dense numerics: fixed-step RK4, trajectories, finite differences, Lyapunov solves."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .exceptions import DomainError, IntegrationError

DEFAULT_STEP = 1e-3
DEFAULT_H_REL = 1e-5


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped record of a simulation.

    ``states`` has one row per entry of ``times``; ``channels`` maps a name to
    a 1-D array of the same length (derived scalars such as e, u, V).
    """

    times: np.ndarray
    states: np.ndarray
    channels: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states.reshape(len(times), -1)
        if states.shape[0] != times.shape[0]:
            raise ValueError("states and times have different lengths")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        chans = {}
        for name, values in self.channels.items():
            values = np.asarray(values, dtype=float)
            if values.shape != times.shape:
                raise ValueError(f"channel {name!r} has {values.shape[0]} samples, expected {times.shape[0]}")
            chans[name] = values
        times.setflags(write=False)
        states.setflags(write=False)
        for values in chans.values():
            values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "channels", chans)

    def __len__(self):
        return self.times.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def channel(self, name: str) -> np.ndarray:
        return self.channels[name]

    def window(self, t_start: float, t_stop: float = np.inf) -> "Trajectory":
        """Sub-trajectory with ``t_start <= t <= t_stop``."""
        mask = (self.times >= t_start) & (self.times <= t_stop)
        return Trajectory(
            self.times[mask],
            self.states[mask],
            {k: v[mask] for k, v in self.channels.items()},
        )

    def with_channels(self, extra: Mapping[str, np.ndarray]) -> "Trajectory":
        chans = dict(self.channels)
        chans.update(extra)
        return Trajectory(self.times, self.states, chans)


def rk4_step(field: Callable, x: np.ndarray, t: float, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``x' = field(t, x)``."""
    if not h > 0:
        raise DomainError(f"step must be positive, got {h}")
    k1 = field(t, x)
    k2 = field(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = field(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = field(t + h, x + h * k3)
    x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_new)):
        raise IntegrationError("non-finite derivative", t, np.array(x, copy=True))
    return x_new


def simulate(
    field: Callable,
    x0,
    t0: float,
    t1: float,
    h: float = DEFAULT_STEP,
    recorder: Callable | None = None,
    record_every: int = 1,
) -> Trajectory:
    """Integrate ``x' = field(t, x)`` from ``t0`` to ``t1`` with fixed-step RK4.

    The last step is shortened so the trajectory lands exactly on ``t1``.
    ``recorder(t, x)`` may return a mapping of named scalars that become
    trajectory channels. Every ``record_every``-th step is stored, plus the
    initial and final points.

    Raises
    ------
    IntegrationError
        With the partial trajectory attached in ``partial``.
    """
    if not t1 > t0:
        raise DomainError(f"need t1 > t0, got [{t0}, {t1}]")
    if not h > 0:
        raise DomainError(f"step must be positive, got {h}")
    if record_every < 1:
        raise DomainError("record_every must be >= 1")

    x = np.array(x0, dtype=float)
    n_full = int(np.floor((t1 - t0) / h))
    # guard against a sliver of a step from floating point
    if t0 + n_full * h > t1 - 1e-12 * max(1.0, abs(t1)):
        n_full -= 1
    n_full = max(n_full, 0)
    steps = [h] * n_full
    last = t1 - (t0 + n_full * h)
    steps.append(last)

    times = [t0]
    states = [x.copy()]
    rows = [dict(recorder(t0, x))] if recorder is not None else None
    t = t0
    n = len(steps)
    for i, step in enumerate(steps):
        try:
            x = rk4_step(field, x, t, step)
        except IntegrationError as err:
            partial = _assemble(times, states, rows)
            raise IntegrationError("integration failed", err.t, err.x, partial) from None
        t = t1 if i == n - 1 else t0 + (i + 1) * h
        if (i + 1) % record_every == 0 or i == n - 1:
            times.append(t)
            states.append(x.copy())
            if rows is not None:
                rows.append(dict(recorder(t, x)))
    return _assemble(times, states, rows)


def _assemble(times, states, rows) -> Trajectory:
    channels = {}
    if rows:
        for key in rows[0]:
            channels[key] = np.array([r[key] for r in rows], dtype=float)
    return Trajectory(np.array(times), np.array(states), channels)


def directional_derivative(fn: Callable, x, direction, h_rel: float = DEFAULT_H_REL) -> np.ndarray:
    """Central-difference derivative of ``fn`` at ``x`` along ``direction``.

    The step is ``h_rel * max(1, |x|)``; the error is O(step**2).
    """
    x = np.asarray(x, dtype=float)
    direction = np.asarray(direction, dtype=float)
    h = h_rel * max(1.0, float(np.linalg.norm(x)))
    plus = np.asarray(fn(x + h * direction), dtype=float)
    minus = np.asarray(fn(x - h * direction), dtype=float)
    return (plus - minus) / (2.0 * h)


def is_hurwitz(F) -> bool:
    return bool(np.all(np.linalg.eigvals(np.atleast_2d(F)).real < 0))


def solve_lyapunov(F) -> np.ndarray:
    """Solve ``P F + F^T P = -I`` for symmetric positive definite ``P``.

    Direct dense solve of the Kronecker-vectorized system; meant for the
    small matrices that appear here.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise DomainError(f"F must be square, got shape {F.shape}")
    eig = np.linalg.eigvals(F)
    worst = eig[np.argmax(eig.real)]
    if worst.real >= 0:
        raise DomainError(f"F is not Hurwitz: eigenvalue {worst:.6g} has non-negative real part")
    m = F.shape[0]
    eye = np.eye(m)
    # column-major vec: vec(P F) = (F^T kron I) vec(P), vec(F^T P) = (I kron F^T) vec(P)
    L = np.kron(F.T, eye) + np.kron(eye, F.T)
    vec_p = np.linalg.solve(L, -eye.reshape(-1, order="F"))
    P = vec_p.reshape(m, m, order="F")
    return 0.5 * (P + P.T)
