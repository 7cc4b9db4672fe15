"""Closed loop of plant, exosystem and regulator in the original coordinates.

The full state is laid out as ``col(rho, w, z, e, xi, theta_hat, vec(X))``
with X stored row-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import IntegrationError
from .model import ImmersionData, PlantModel, SystemDims
from .numerics import DEFAULT_STEP, Trajectory, simulate
from .regulator import RegulatorDesign, RegulatorState, regulator_rhs


@dataclass(frozen=True)
class StateLayout:
    dims: SystemDims

    @property
    def size(self) -> int:
        m = self.dims
        return m.p + m.s + m.n + 1 + m.d + m.q + (m.d - 1) * m.q

    def slices(self) -> dict:
        m = self.dims
        bounds = {}
        pos = 0
        for name, width in (("rho", m.p), ("w", m.s), ("z", m.n), ("e", 1), ("xi", m.d),
                            ("theta_hat", m.q), ("X", (m.d - 1) * m.q)):
            bounds[name] = slice(pos, pos + width)
            pos += width
        return bounds

    def split(self, x) -> dict:
        x = np.asarray(x)
        parts = {name: x[..., sl] for name, sl in self.slices().items()}
        parts["e"] = parts["e"][..., 0]
        parts["X"] = parts["X"].reshape(x.shape[:-1] + (self.dims.d - 1, self.dims.q))
        return parts

    def pack(self, rho, w, z, e, rs: RegulatorState) -> np.ndarray:
        return np.concatenate([np.asarray(rho, float), np.asarray(w, float), np.asarray(z, float),
                               [float(e)], rs.pack()])

    def regulator_state(self, x) -> RegulatorState:
        parts = self.split(x)
        return RegulatorState(parts["xi"], parts["theta_hat"], parts["X"])


@dataclass(frozen=True)
class ClosedLoop:
    """Plant + exosystem + adaptive regulator with ``v = -k e``."""

    plant: PlantModel
    im: ImmersionData
    design: RegulatorDesign

    def __post_init__(self):
        if self.plant.dims != self.im.dims and (self.plant.dims.n, self.plant.dims.p, self.plant.dims.s) != (
                self.im.dims.n, self.im.dims.p, self.im.dims.s):
            raise ValueError("plant and immersion dimensions disagree")

    @property
    def layout(self) -> StateLayout:
        return StateLayout(self.im.dims)

    def field(self, t: float, x: np.ndarray) -> np.ndarray:
        p = self.layout.split(x)
        rho, w, z, e = p["rho"], p["w"], p["z"], float(p["e"])
        u, dxi, dth, dX = regulator_rhs(p["xi"], p["theta_hat"], p["X"], e, self.design, self.im)
        drho, dw = self.plant.exo_field(rho, w, z, e)
        dz = np.asarray(self.plant.f0(rho, w, z), dtype=float) + np.asarray(self.plant.f1(rho, w, z, e), dtype=float) * e
        de = float(self.plant.qfun(rho, w, z, e)) + u
        return np.concatenate([drho, dw, dz, [de], dxi, dth, dX.ravel()])

    def control(self, x) -> np.ndarray:
        p = self.layout.split(x)
        return p["xi"][..., 0] - self.design.gains.k * p["e"]

    def has_kernel(self) -> bool:
        return (self.plant.kernel == "forced-vdp" and self.im.kernel == "forced-vdp")

    def simulate(self, x0, horizon: float, h: float = DEFAULT_STEP, record_every: int = 1,
                 t0: float = 0.0, compiled: bool | None = None) -> Trajectory:
        """Integrate from ``t0`` to ``t0 + horizon``; channels ``e`` and ``u``.

        ``compiled=None`` uses the compiled kernel when one matches the plant
        and immersion, ``False`` forces the generic path.
        """
        use_kernel = self.has_kernel() if compiled is None else compiled
        if use_kernel:
            if not self.has_kernel():
                raise ValueError("no compiled kernel for this plant")
            traj = self._simulate_kernel(np.asarray(x0, float), t0, t0 + horizon, h, record_every)
        else:
            traj = simulate(self.field, x0, t0, t0 + horizon, h, record_every=record_every)
        return self.add_channels(traj)

    def add_channels(self, traj: Trajectory) -> Trajectory:
        e = self.layout.split(traj.states)["e"]
        return traj.with_channels({"e": e, "u": self.control(traj.states)})

    def _simulate_kernel(self, x0, t0, t1, h, record_every) -> Trajectory:
        from . import _kernels

        n_full = int(np.floor((t1 - t0) / h))
        if t0 + n_full * h > t1 - 1e-12 * max(1.0, abs(t1)):
            n_full -= 1
        n_full = max(n_full, 0)
        last = t1 - (t0 + n_full * h)
        im = self.im
        T = np.eye(im.dims.q) if im.basis is None else np.ascontiguousarray(im.basis, dtype=float)
        Y = float(im.sat_radius) if np.isfinite(im.sat_radius) else -1.0
        H0 = self.design.K + self.design.h_shift
        gain = float(self.plant.kernel_params[0]) if self.plant.kernel_params else 0.0
        times, states, failed = _kernels.run(
            x0, float(t0), float(h), n_full, float(last), int(record_every), T,
            self.design.F, np.ascontiguousarray(self.design.G), H0, float(self.design.gains.k),
            float(self.design.gains.ell), Y, float(im.blend_width), gain)
        traj = Trajectory(times, states)
        if failed >= 0:
            raise IntegrationError("integration failed", failed, states[-1].copy(), self.add_channels(traj))
        return traj
