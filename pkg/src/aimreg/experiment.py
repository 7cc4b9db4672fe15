"""Closed-loop experiments on the built-in example: single runs, grid sweeps, gain tuning."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .analysis import (
    DiagnosticsReport,
    calibrate_clamp_radius,
    immersion_residual,
    lyapunov_increases,
    lyapunov_series,
    pe_check,
    settling_time,
    sigma_map,
    whitening_basis,
)
from .config import ExperimentConfig, dump_config
from .exceptions import IntegrationError
from .model import ParamBox, coupled_example_plant, example_immersion, example_plant
from .numerics import Trajectory
from .regulator import RegulatorDesign, RegulatorGains, RegulatorState, default_ell, dzv
from .simulation import ClosedLoop

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_INTEGRATION = 2
EXIT_CONFIG = 3

TUNE_CAP = 2 ** 10
IMMERSION_SAMPLES = 200


@lru_cache(maxsize=8)
def _calibration(lower: tuple, upper: tuple, w0: tuple, z0: tuple, sat_factor: float,
                 roots: tuple, whiten: bool):
    """Clamp radius and whitening basis; neither uses the true parameters."""
    box = ParamBox(np.array(lower), np.array(upper))
    plant = example_plant()
    Y = calibrate_clamp_radius(plant, box, w0, z0, factor=sat_factor)
    if not whiten:
        return Y, None
    im = example_immersion()
    design = RegulatorDesign.from_gains(RegulatorGains(roots, ell=1.0), im.dims)
    T = whitening_basis(plant, im, design, box.center, np.concatenate([w0, z0]))
    return Y, T


@dataclass(frozen=True)
class Setup:
    loop: ClosedLoop
    rho: np.ndarray
    box: ParamBox
    x0: np.ndarray


def build_setup(cfg: ExperimentConfig) -> Setup:
    box = ParamBox(np.array(cfg.box_lower), np.array(cfg.box_upper))
    Y_auto, T = _calibration(tuple(cfg.box_lower), tuple(cfg.box_upper), tuple(cfg.w0), tuple(cfg.z0),
                             cfg.sat_factor, tuple(cfg.roots), cfg.whiten)
    Y = Y_auto if cfg.sat_radius is None else cfg.sat_radius
    im = example_immersion(Y, cfg.blend_fraction * Y)
    if T is not None:
        im = im.reparametrize(T)
    ell = default_ell(im, box) if cfg.ell is None else cfg.ell
    gains = RegulatorGains(tuple(cfg.roots), cfg.lam, cfg.k, ell)
    design = RegulatorDesign.from_gains(gains, im.dims)
    plant = coupled_example_plant(cfg.coupling_gain) if cfg.system == "forced-vdp-coupled" else example_plant()
    loop = ClosedLoop(plant, im, design)
    rho = cfg.rho
    if cfg.start == "invariant":
        x0 = invariant_start(loop, rho, np.concatenate([cfg.w0, cfg.z0]))
    else:
        dims = im.dims
        xi0 = np.zeros(dims.d) if cfg.xi0 is None else np.array(cfg.xi0)
        th0 = np.zeros(dims.q) if cfg.theta_hat0 is None else np.array(cfg.theta_hat0)
        rs = RegulatorState(xi0, th0, np.zeros((dims.d - 1, dims.q)))
        x0 = loop.layout.pack(rho, cfg.w0, cfg.z0, cfg.e0, rs)
    return Setup(loop, rho, box, x0)


def invariant_start(loop: ClosedLoop, rho, start, pre_roll: float = 200.0, h: float = 5e-3) -> np.ndarray:
    """State on the steady-state graph: e = 0, theta_hat = theta, xi = tau(z), X = sigma(w, z)."""
    plant, im = loop.plant, loop.im
    traj = sigma_map(plant, rho, loop.design, im, start, pre_roll, h, h, record_every=1)
    s, n = plant.dims.s, plant.dims.n
    x = traj.final
    w, z = x[:s], x[s:s + n]
    X = x[s + n:].reshape(im.dims.d - 1, im.dims.q)
    rs = RegulatorState(im.tau(rho, w, z), im.theta(rho), X)
    return loop.layout.pack(rho, w, z, 0.0, rs)


@dataclass(frozen=True)
class RunSummary:
    lam: float
    k: float
    omega: float
    sigma: float
    mu: float
    exit_code: int
    status: str
    t_end: float
    sup_e_window: float
    settling_time: float
    theta_tilde_initial: float
    theta_tilde_final: float
    theta_tilde_ratio: float
    max_state_norm: float
    bound_ratio: float
    pe_min_eig: float
    v_increases: int

    @property
    def passed(self) -> bool:
        return self.exit_code == EXIT_OK

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ExperimentResult:
    trajectory: Trajectory
    report: DiagnosticsReport | None
    summary: RunSummary
    channels: dict = field(default_factory=dict, repr=False)


def _block_bound_ratio(loop: ClosedLoop, traj: Trajectory, transient: float) -> float:
    """Largest ratio of whole-run to initial-transient maximum norm over the state blocks."""
    parts = loop.layout.split(traj.states)
    early = traj.times <= transient
    worst = 0.0
    for name, block in parts.items():
        block = np.asarray(block).reshape(len(traj.times), -1)
        norms = np.linalg.norm(block, axis=1)
        ref = norms[early].max()
        top = norms.max()
        if top == 0.0:
            continue
        worst = max(worst, top / ref if ref > 0 else np.inf)
    return float(worst)


def run_channels(loop: ClosedLoop, traj: Trajectory) -> dict:
    """Per-sample diagnostic channels: theta_tilde norm and V."""
    layout = loop.layout
    parts = layout.split(traj.states)
    im, design = loop.im, loop.design
    rho, w, z = parts["rho"], parts["w"], parts["z"]
    theta = np.array([im.theta(r) for r in rho])
    tt = parts["theta_hat"] - theta
    eta = parts["xi"].copy()
    eta[:, 1:] -= np.einsum("nij,nj->ni", parts["X"], tt)
    tau = np.array([im.tau(r, ww, zz) for r, ww, zz in zip(rho, w, z)])
    chi = eta - tau
    zeta = design.b_hat[None, :] * chi[:, :1] + chi[:, 1:]
    V = lyapunov_series(chi[:, 0], zeta, tt, design.P)
    return {"theta_tilde_norm": np.linalg.norm(tt, axis=1), "V": V}


def _diagnostics(cfg: ExperimentConfig, loop: ClosedLoop, traj: Trajectory, chans: dict) -> DiagnosticsReport:
    layout = loop.layout
    parts = layout.split(traj.states)
    im, plant, design = loop.im, loop.plant, loop.design
    t_win = traj.times[-1] - cfg.window_fraction * (traj.times[-1] - traj.times[0])
    win = traj.times >= t_win
    idx = np.nonzero(win)[0]
    pick = idx[np.linspace(0, idx.size - 1, min(IMMERSION_SAMPLES, idx.size)).astype(int)]
    points = np.hstack([parts["rho"], parts["w"], parts["z"]])[pick]
    res = [immersion_residual(p, im, plant) for p in points]
    r_dyn = max(float(np.max(np.abs(r))) for r, _ in res)
    r_out = max(abs(o) for _, o in res)
    X, xi1 = parts["X"][win], parts["xi"][win, 0]
    gamma = np.array([x[0] + im.omega_c(y)[0] for x, y in zip(X, xi1)])
    dt = cfg.h * cfg.record_every
    pe = pe_check(gamma, dt)
    theta = np.array([im.theta(r) for r in parts["rho"]])
    tt = parts["theta_hat"] - theta
    dz_bad = int(np.count_nonzero(np.sum(tt * dzv(parts["theta_hat"], design.gains.ell), axis=1) < 0))
    e = parts["e"]
    return DiagnosticsReport(
        times=traj.times,
        V=chans["V"],
        immersion_max_dyn=r_dyn,
        immersion_max_out=r_out,
        pe_min_eig=pe,
        dead_zone_violations=dz_bad,
        max_state_norm=float(np.max(np.linalg.norm(traj.states, axis=1))),
        sup_e_window=float(np.max(np.abs(e[win]))),
        settling_time=settling_time(traj.times, e, cfg.epsilon),
    )


def run_experiment(cfg: ExperimentConfig, out_dir=None, outputs: str = "full") -> ExperimentResult:
    """Simulate one closed-loop run and evaluate it.

    ``outputs`` is ``"full"`` (trajectory, diagnostics, summary, plot
    script, matrices, config), ``"summary"`` or ``"none"``. The exit code in
    the summary is 0 when ``|e| <= epsilon`` on the final window and every
    state block stays within ``bound_factor`` times its initial-transient
    maximum, 1 when either threshold fails, 2 when integration fails.
    """
    cfg.validate()
    setup = build_setup(cfg)
    loop = setup.loop
    gains = loop.design.gains
    theta0 = np.linalg.norm(setup.x0[loop.layout.slices()["theta_hat"]] - loop.im.theta(setup.rho))
    log.info("run lambda=%g k=%g rho=%s", gains.lam, gains.k, setup.rho)
    try:
        traj = loop.simulate(setup.x0, cfg.horizon, cfg.h, cfg.record_every)
    except IntegrationError as err:
        traj = err.partial
        chans = run_channels(loop, traj)
        summary = RunSummary(
            gains.lam, gains.k, *map(float, setup.rho), EXIT_INTEGRATION, "integration-failure",
            float(err.t), np.inf, np.inf, float(theta0), np.inf, np.inf, np.inf, np.inf, np.nan, -1)
        result = ExperimentResult(traj, None, summary, chans)
        if out_dir is not None and outputs != "none":
            write_outputs(result, cfg, loop, Path(out_dir), outputs)
        return result

    chans = run_channels(loop, traj)
    report = _diagnostics(cfg, loop, traj, chans)
    bound = _block_bound_ratio(loop, traj, cfg.transient)
    win = traj.times >= traj.times[-1] - cfg.window_fraction * cfg.horizon
    v_inc = int(lyapunov_increases(chans["V"][win]).size)
    regulated = report.sup_e_window <= cfg.epsilon
    bounded = bound <= cfg.bound_factor
    code = EXIT_OK if regulated and bounded else EXIT_THRESHOLD
    status = "ok" if code == EXIT_OK else ("unregulated" if not regulated else "unbounded")
    tt = chans["theta_tilde_norm"]
    summary = RunSummary(
        gains.lam, gains.k, *map(float, setup.rho), code, status, float(traj.times[-1]),
        report.sup_e_window, report.settling_time, float(tt[0]), float(tt[-1]),
        float(tt[-1] / tt[0]) if tt[0] > 0 else 0.0, report.max_state_norm, bound,
        report.pe_min_eig, v_inc)
    result = ExperimentResult(traj, report, summary, chans)
    if out_dir is not None and outputs != "none":
        write_outputs(result, cfg, loop, Path(out_dir), outputs)
    return result


# --- output files -------------------------------------------------------------

def state_names(loop: ClosedLoop) -> list:
    dims = loop.im.dims
    names = [f"rho[{i}]" for i in range(dims.p)] + [f"w[{i}]" for i in range(dims.s)]
    names += [f"z[{i}]" for i in range(dims.n)] + ["e_state"]
    names += [f"xi[{i}]" for i in range(dims.d)] + [f"theta_hat[{i}]" for i in range(dims.q)]
    names += [f"X[{i}.{j}]" for i in range(dims.d - 1) for j in range(dims.q)]
    return names


def write_csv(path, times, columns: dict) -> None:
    """CSV with a header row, ``t`` first, 17 significant digits."""
    data = np.column_stack([np.asarray(times, float)] + [np.asarray(v, float) for v in columns.values()])
    header = ",".join(["t"] + list(columns))
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")


def read_csv(path):
    """Inverse of :func:`write_csv`: ``(times, {name: column})``."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], {name: data[:, i + 1] for i, name in enumerate(header[1:])}


def write_summary(path, values: dict) -> None:
    lines = []
    for key, val in values.items():
        lines.append(f"{key} = {repr(float(val)) if isinstance(val, (float, np.floating)) else val}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_summary(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            key, val = (s.strip() for s in line.split("=", 1))
            out[key] = val
    return out


PLOT_TEMPLATE = """# gnuplot script; run with: gnuplot -persist plot.gp
set datafile separator ','
set key autotitle columnhead
set multiplot layout 3,1
set ylabel 'e'
plot 'trajectory.csv' using 1:2 with lines
set ylabel '|theta_tilde|'
plot 'diagnostics.csv' using 1:4 with lines
set ylabel 'V'
set logscale y
plot 'diagnostics.csv' using 1:2 with lines
unset multiplot
"""


def write_outputs(result: ExperimentResult, cfg: ExperimentConfig, loop: ClosedLoop, out_dir: Path,
                  outputs: str = "full") -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    values = result.summary.as_dict()
    if result.report is not None:
        values.update({f"diag_{k}": v for k, v in result.report.as_dict().items()})
    write_summary(out_dir / "summary.txt", values)
    if outputs != "full":
        return
    traj = result.trajectory
    cols = {"e": traj.channel("e"), "u": traj.channel("u")}
    cols.update(zip(state_names(loop), traj.states.T))
    write_csv(out_dir / "trajectory.csv", traj.times, cols)
    write_csv(out_dir / "diagnostics.csv", traj.times, {
        "V": result.channels["V"],
        "abs_e": np.abs(traj.channel("e")),
        "theta_tilde_norm": result.channels["theta_tilde_norm"],
    })
    (out_dir / "plot.gp").write_text(PLOT_TEMPLATE)
    write_matrices(out_dir / "matrices.csv", loop)
    (out_dir / "config.ini").write_text(dump_config(cfg))


def write_matrices(path, loop: ClosedLoop) -> None:
    des = loop.design
    mats = {"A": des.A, "b": des.b, "F": des.F, "G": des.G, "K": des.K, "P": des.P}
    if loop.im.basis is not None:
        mats["T"] = loop.im.basis
    with open(path, "w") as fh:
        fh.write("matrix,row,col,value\n")
        for name, mat in mats.items():
            mat = np.atleast_2d(mat)
            for (i, j), v in np.ndenumerate(mat):
                fh.write(f"{name},{i},{j},{v:.17g}\n")


# --- sweeps -------------------------------------------------------------------

def _sweep_point(args):
    cfg, out_dir = args
    try:
        result = run_experiment(cfg, out_dir, outputs="summary" if out_dir is not None else "none")
        return result.summary
    except Exception as err:  # recorded per row; the sweep carries on
        log.warning("sweep point failed: %s", err)
        return RunSummary(cfg.lam, cfg.k, cfg.omega, cfg.sigma, cfg.mu, EXIT_INTEGRATION,
                          f"error: {type(err).__name__}", 0.0, np.inf, np.inf, np.nan, np.inf,
                          np.inf, np.inf, np.inf, np.nan, -1)


@dataclass(frozen=True)
class SweepResult:
    rows: list
    best: tuple | None

    def passing(self) -> set:
        """(lambda, k) pairs that passed at every parameter point."""
        by_gain: dict = {}
        for r in self.rows:
            by_gain.setdefault((r.lam, r.k), []).append(r.passed)
        return {g for g, ok in by_gain.items() if all(ok)}


def sweep_points(cfg: ExperimentConfig) -> list:
    box = ParamBox(np.array(cfg.box_lower), np.array(cfg.box_upper))
    rhos = box.corners() if cfg.sweep_corners else cfg.rho[None, :]
    points = []
    for lam in cfg.sweep_lambda:
        for k in cfg.sweep_k:
            for rho in rhos:
                points.append(cfg.override(lam=float(lam), k=float(k), omega=float(rho[0]),
                                           sigma=float(rho[1]), mu=float(rho[2])))
    return points


def run_sweep(cfg: ExperimentConfig, out_dir=None) -> SweepResult:
    """One run per grid point; the best pair is the passing one with the smallest ``lambda + k``."""
    points = sweep_points(cfg)
    jobs = []
    for i, pt in enumerate(points):
        sub = None if out_dir is None else Path(out_dir) / f"point_{i:03d}_lam{pt.lam:g}_k{pt.k:g}"
        jobs.append((pt, sub))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    result = SweepResult(rows, None)
    ok = sorted(result.passing(), key=lambda g: (g[0] + g[1], g[0]))
    result = SweepResult(rows, ok[0] if ok else None)
    if out_dir is not None:
        write_sweep_table(Path(out_dir) / "sweep.csv", rows)
    return result


def write_sweep_table(path, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    keys = list(rows[0].as_dict())
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for r in rows:
            vals = []
            for v in r.as_dict().values():
                vals.append(f"{v:.17g}" if isinstance(v, float) else str(v))
            fh.write(",".join(vals) + "\n")


def upward_closed(passing: set, lams, ks) -> bool:
    """True if every grid pair that dominates a passing pair also passes."""
    for lam, k in passing:
        for l2 in lams:
            for k2 in ks:
                if l2 >= lam and k2 >= k and (l2, k2) not in passing:
                    return False
    return True


def auto_tune(cfg: ExperimentConfig, cap: int = TUNE_CAP):
    """Double k, then lambda, from the configured values until a run passes.

    Returns ``(lam, k, summaries)``; ``lam`` and ``k`` are ``None`` if no
    pair up to ``cap`` times the starting values passes.
    """
    if not (cfg.lam > 0 and cfg.k > 0):
        raise ValueError("auto-tuning needs positive starting gains")
    tried = []
    lam = cfg.lam
    while lam <= cap * cfg.lam:
        k = cfg.k
        while k <= cap * cfg.k:
            summary = run_experiment(cfg.override(lam=lam, k=k), outputs="none").summary
            tried.append(summary)
            if summary.passed:
                return lam, k, tried
            k *= 2.0
        lam *= 2.0
    return None, None, tried
