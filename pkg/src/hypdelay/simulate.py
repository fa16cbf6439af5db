"""Time-domain simulation of the transport system closed by delayed boundary feedback.

The inflow is ``z(t, 0) = L(x_t)`` where ``x(t) = z(t, ell)`` is the outflow
trace and ``x_t`` its history over ``[t - r, t]``.  Along characteristics the
solution is explicit, so each step only needs

* the outflow trace, which is either the free evolution of the initial state
  (before the first characteristic from x=0 arrives) or
  ``e^{xi_i(ell)} u_i(t - tau_i(ell))``;
* the next inflow ``u(t) = L(x_t)``.

The only discretisation is sampling ``x`` and ``u`` every ``dt`` and
interpolating ``u`` linearly in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .measure import HistorySegment, StieltjesMeasure, delay_apply
from .transport import GridFunction, TransportSystem, boundary_input_propagate, sampled_signal, semigroup_apply


class ConfigError(ValueError):
    """Simulation or solver configuration is inadmissible."""


class UnsupportedConfiguration(ConfigError):
    """Configuration the solvers deliberately do not handle."""


@dataclass(frozen=True)
class SimConfig:
    dt: float
    t_end: float
    grid_nodes: int = 257
    p: float = 2.0
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be > 0")
        if self.t_end < self.dt:
            raise ConfigError("t_end must be >= dt")
        if self.grid_nodes < 2:
            raise ConfigError("grid_nodes must be >= 2")
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        object.__setattr__(self, "snapshot_times", tuple(float(s) for s in self.snapshot_times))


@dataclass
class Trajectory:
    times: np.ndarray
    norm_state: np.ndarray
    norm_history: np.ndarray
    norm_total: np.ndarray
    trace: np.ndarray
    inputs: np.ndarray
    snapshots: dict[float, GridFunction] = field(default_factory=dict)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])


def lp_norm(values: np.ndarray, dx: float, p: float) -> float:
    """``(sum_i int |f_i|^p)^(1/p)`` by the trapezoid rule for samples ``(K, n)``."""
    a = np.abs(np.asarray(values, dtype=float)) ** p
    integral = dx * (a.sum(axis=0) - 0.5 * (a[0] + a[-1])).sum()
    return float(integral ** (1.0 / p))


def history_norm(h: HistorySegment, p: float) -> float:
    if h.seam is None or h.seam == 0:
        return lp_norm(h.samples, h.dt, p)
    # split at the seam so the panel ending there uses the left limit
    left = np.vstack((h.samples[: h.seam], h.seam_left[None, :]))
    right = h.samples[h.seam:]
    total = lp_norm(left, h.dt, p) ** p
    if right.shape[0] > 1:
        total += lp_norm(right, h.dt, p) ** p
    return float(total ** (1.0 / p))


def norm_Xp(state: GridFunction, history: HistorySegment, p: float = 2.0) -> tuple[float, float, float]:
    """State-space norm ``||z||_{L^p(0,ell)} + ||x_t||_{L^p(-r,0)}`` and its two parts."""
    if p < 1:
        raise ConfigError("p must be >= 1")
    dx = state.ell / (state.values.shape[0] - 1)
    nz = lp_norm(state.values, dx, p)
    nh = history_norm(history, p)
    return nz, nh, nz + nh


def reconstruct_state(
    sys: TransportSystem,
    t: float,
    f: GridFunction,
    u_signal,
    nodes: int,
    exponent: str = "relative",
) -> GridFunction:
    """``z(t, .)`` from the initial state and the inflow history.

    Where the inflow has reached ``x`` (``t >= tau_i(x)``) the boundary part
    wins, so the tie belongs to the boundary branch.
    """
    free = semigroup_apply(sys, t, f, exponent=exponent, nodes=nodes).values
    forced = boundary_input_propagate(sys, t, u_signal, nodes).values
    x = np.linspace(0.0, sys.ell, nodes)
    arrived = np.stack([t >= sys.tau(i, x) for i in range(sys.n)], axis=1)
    return GridFunction(sys.ell, np.where(arrived, forced, free))


def effective_dt(sys: TransportSystem, m: StieltjesMeasure, dt: float) -> float:
    """Largest step ``<= dt`` that divides the delay span, after checking the resolution guard."""
    if dt > m.delay / 4 + 1e-15 or dt > sys.min_tau / 4 + 1e-15:
        raise ConfigError(
            f"dt={dt} violates the resolution guard dt <= min(r, min tau_i(ell)) / 4 "
            f"= {min(m.delay, sys.min_tau) / 4}"
        )
    return m.delay / math.ceil(m.delay / dt - 1e-9)


def _check_inputs(sys, m, f, phi):
    if m.has_atom_at_zero:
        raise UnsupportedConfiguration("an atom at theta=0 makes the boundary condition implicit")
    if m.dimension != sys.n or f.dimension != sys.n or phi.dimension != sys.n:
        raise ConfigError("dimensions of system, measure, initial state and history must agree")
    if abs(f.ell - sys.ell) > 1e-12 * max(1.0, sys.ell):
        raise ConfigError("initial state is not defined on [0, ell]")
    if abs(phi.delay - m.delay) > 1e-9 * max(1.0, m.delay):
        raise ConfigError("initial history does not span the delay window")


def simulate(
    sys: TransportSystem,
    m: StieltjesMeasure,
    f: GridFunction,
    phi: HistorySegment,
    cfg: SimConfig,
    exponent: str = "relative",
) -> Trajectory:
    """Run the closed loop from ``(f, phi)`` up to ``cfg.t_end``.

    The step is shrunk, if needed, so that ``r / dt`` is an integer; history
    windows then sit exactly on stored samples and no interpolation of the
    trace is needed when applying the delay operator.
    """
    _check_inputs(sys, m, f, phi)
    dt = effective_dt(sys, m, cfg.dt)
    n, nodes, p = sys.n, cfg.grid_nodes, cfg.p
    K = int(round(m.delay / dt))
    steps = int(math.ceil(cfg.t_end / dt - 1e-9))
    times = dt * np.arange(steps + 1)

    thetas = -m.delay + dt * np.arange(K + 1)
    phi_grid = phi(thetas)

    # outflow trace while the initial state is still leaving the domain
    early = np.zeros((steps + 1, n))
    for i in range(n):
        alive = times < sys.tau_ell[i]
        if np.any(alive):
            foot = sys.tau_inv(i, sys.tau_ell[i] - times[alive])
            xi_foot = sys.xi(i, foot)
            gain = np.exp(sys.xi_ell[i] - xi_foot) if exponent == "relative" else np.exp(xi_foot)
            early[alive, i] = gain * f.channel(i, foot)
    lag = sys.tau_ell / dt
    lag = np.where(np.abs(lag - np.round(lag)) < 1e-9, np.round(lag), lag)
    lag_lo = np.floor(lag).astype(int)
    lag_w = lag - lag_lo
    growth = np.exp(sys.xi_ell)
    channels = np.arange(n)

    trace = np.zeros((steps + 1, n))
    inputs = np.zeros((steps + 1, n))
    norm_state = np.zeros(steps + 1)
    norm_history = np.zeros(steps + 1)
    x_nodes = np.linspace(0.0, sys.ell, nodes)
    dx = sys.ell / (nodes - 1)
    tau_nodes = np.stack([sys.tau(i, x_nodes) for i in range(n)], axis=1)
    xi_nodes = np.exp(np.stack([sys.xi(i, x_nodes) for i in range(n)], axis=1))

    for k in range(steps + 1):
        t = times[k]
        # u(t - tau_i) = (1 - w) u[k - lag_lo] + w u[k - lag_lo - 1]
        hi = np.maximum(k - lag_lo, 0)
        lo = np.maximum(hi - 1, 0)
        forced = growth * ((1 - lag_w) * inputs[hi, channels] + lag_w * inputs[lo, channels])
        trace[k] = np.where(t >= sys.tau_ell - 1e-12, forced, early[k])

        window = _window(m.delay, trace, phi_grid, k, K)
        inputs[k] = delay_apply(m, window)

        state = _state_at(k, t, dt, inputs, tau_nodes, xi_nodes, sys, f, nodes, exponent)
        norm_state[k] = lp_norm(state, dx, p)
        norm_history[k] = history_norm(window, p)

    snapshots = {}
    u_signal = sampled_signal(0.0, dt, inputs)
    for ts in cfg.snapshot_times:
        if not 0 <= ts <= times[-1] + 1e-12:
            raise ConfigError(f"snapshot time {ts} outside [0, {times[-1]}]")
        snapshots[ts] = reconstruct_state(sys, ts, f, u_signal, nodes, exponent)

    return Trajectory(
        times=times,
        norm_state=norm_state,
        norm_history=norm_history,
        norm_total=norm_state + norm_history,
        trace=trace,
        inputs=inputs,
        snapshots=snapshots,
    )


def _window(delay, trace, phi_grid, k, K) -> HistorySegment:
    """History ``x_t`` at step ``k``: node ``j`` is time ``(k - K + j) dt``."""
    start = k - K
    if start >= 0:
        return HistorySegment(delay, trace[start: k + 1])
    seam = -start
    samples = np.vstack((phi_grid[K - seam: K], trace[: k + 1]))
    return HistorySegment(delay, samples, seam=seam, seam_left=phi_grid[K])


def _state_at(k, t, dt, inputs, tau_nodes, xi_nodes, sys, f, nodes, exponent) -> np.ndarray:
    """``z(t_k, .)`` on the output grid, using inputs stored up to step ``k``."""
    pos = (t - tau_nodes) / dt
    arrived = pos >= -1e-9
    pos = np.clip(pos, 0.0, k)
    i0 = np.minimum(np.floor(pos + 1e-9).astype(int), max(k - 1, 0))
    w = np.clip(pos - i0, 0.0, 1.0)
    cols = np.broadcast_to(np.arange(sys.n), pos.shape)
    u_lo = inputs[i0, cols]
    u_hi = inputs[np.minimum(i0 + 1, k), cols]
    forced = xi_nodes * ((1 - w) * u_lo + w * u_hi)
    if np.all(arrived):
        return forced
    free = semigroup_apply(sys, t, f, exponent=exponent, nodes=nodes).values
    return np.where(arrived, forced, free)


def decay_rate(traj: Trajectory, window: tuple[float, float] | None = None) -> float:
    """Least-squares slope of ``log(norm_total)`` over ``window``.

    Defaults to ``[t_end / 4, t_end]``.  Returns ``-inf`` when the norm hits
    exactly zero inside the window (finite-time extinction).
    """
    if window is None:
        window = (traj.t_end / 4, traj.t_end)
    a, b = window
    sel = (traj.times >= a - 1e-12) & (traj.times <= b + 1e-12)
    if sel.sum() < 10:
        raise ValueError(f"need at least 10 samples in window [{a}, {b}], got {int(sel.sum())}")
    y = traj.norm_total[sel]
    if np.any(y <= 0):
        return -math.inf
    slope, _ = np.polyfit(traj.times[sel], np.log(y), 1)
    return float(slope)
