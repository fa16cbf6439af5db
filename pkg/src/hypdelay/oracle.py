"""Independent references: an explicit upwind solver and scalar closed forms.

Nothing here uses the characteristics machinery of :mod:`hypdelay.simulate`;
the upwind scheme only shares the delay operator, which it applies to its own
discrete outflow history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measure import HistorySegment, StieltjesMeasure, delay_apply
from .simulate import ConfigError, Trajectory, UnsupportedConfiguration, history_norm, lp_norm
from .transport import GridFunction, TransportSystem


@dataclass(frozen=True)
class OracleConfig:
    cells: int
    cfl: float
    t_end: float
    p: float = 2.0
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self):
        if self.cells < 16:
            raise ConfigError("oracle needs at least 16 cells")
        if not 0 < self.cfl <= 1:
            raise ConfigError(f"CFL number must lie in (0, 1], got {self.cfl}")
        if not self.t_end > 0:
            raise ConfigError("t_end must be > 0")


def upwind_simulate(
    sys: TransportSystem,
    m: StieltjesMeasure,
    f: GridFunction,
    phi: HistorySegment,
    cfg: OracleConfig,
) -> Trajectory:
    """First-order upwind solution on ``cfg.cells`` uniform cells.

    Coefficients at node ``j`` are taken from the cell ``(x_{j-1}, x_j)``, the
    upwind side.  The inflow node is reset every step to ``L`` applied to the
    linearly interpolated outflow record (``phi`` before time 0).
    """
    if m.has_atom_at_zero:
        raise UnsupportedConfiguration("an atom at theta=0 makes the boundary condition implicit")
    n, M = sys.n, cfg.cells
    dx = sys.ell / M
    x = np.linspace(0.0, sys.ell, M + 1)
    mid = np.concatenate(([0.5 * dx], 0.5 * (x[:-1] + x[1:])))
    v = np.stack([sp(mid) for sp in sys.speeds], axis=1)
    k = np.stack([kk(mid) for kk in sys.reactions], axis=1)
    dt = cfg.cfl * dx / v.max()
    steps = int(math.ceil(cfg.t_end / dt - 1e-9))
    nu = v * dt / dx
    if np.any(1 - nu + dt * k < 0):
        raise ConfigError("time step too large for the reaction terms: scheme would lose positivity")

    K = int(math.ceil(m.delay / dt))
    offsets = -m.delay + (m.delay / K) * np.arange(K + 1)

    z = np.stack([f.channel(i, x) for i in range(n)], axis=1)
    times = dt * np.arange(steps + 1)
    trace = np.zeros((steps + 1, n))
    inputs = np.zeros((steps + 1, n))
    norm_state = np.zeros(steps + 1)
    norm_history = np.zeros(steps + 1)
    snap_want = sorted(cfg.snapshot_times)
    snapshots: dict[float, GridFunction] = {}
    prev = z.copy()

    def history(kk):
        s = times[kk] + offsets
        past = s < 0
        vals = np.empty((K + 1, n))
        if np.any(past):
            vals[past] = phi(np.maximum(s[past], -m.delay))
        if np.any(~past):
            vals[~past] = np.stack(
                [np.interp(s[~past], times[: kk + 1], trace[: kk + 1, i]) for i in range(n)], axis=1
            )
        return HistorySegment(m.delay, vals)

    for step in range(steps + 1):
        if step > 0:
            prev = z
            z = z.copy()
            z[1:] = prev[1:] - nu[1:] * (prev[1:] - prev[:-1]) + dt * k[1:] * prev[1:]
        trace[step] = z[-1]
        h = history(step)
        inputs[step] = delay_apply(m, h)
        if step > 0:
            z[0] = inputs[step]
        norm_state[step] = lp_norm(z, dx, cfg.p)
        norm_history[step] = history_norm(h, cfg.p)
        while snap_want and snap_want[0] <= times[step] + 1e-12:
            ts = snap_want.pop(0)
            if step == 0:
                snapshots[ts] = GridFunction(sys.ell, z.copy())
            else:
                w = (ts - times[step - 1]) / dt
                snapshots[ts] = GridFunction(sys.ell, (1 - w) * prev + w * z)

    return Trajectory(
        times=times,
        norm_state=norm_state,
        norm_history=norm_history,
        norm_total=norm_state + norm_history,
        trace=trace,
        inputs=inputs,
        snapshots=snapshots,
    )


def scalar_root_closed_form(xi_ell: float, tau_ell: float, gamma: float, r: float) -> float:
    """Real root of ``1 - gamma e^{xi_ell - λ(tau_ell + r)}``."""
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    return (xi_ell + math.log(gamma)) / (tau_ell + r)


@dataclass(frozen=True)
class ScalarModes:
    """Exact solution of a scalar point-delay loop built from characteristic modes.

    For ``L(φ) = gamma φ(-r)`` every root ``λ`` of the characteristic equation
    gives the solution ``z(t, x) = e^{λ(t - tau(x)) + xi(x)}``.  This class sums
    the real root and ``weight * Re`` of the ``k = 1`` root; for
    ``|weight| < 1`` the data are positive and infinitely smooth, including
    across the inflow boundary and the history seam.
    """

    sys: TransportSystem
    gamma: float
    r: float
    weight: float = 0.3

    @property
    def roots(self) -> tuple[complex, complex]:
        s = scalar_root_closed_form(float(self.sys.xi_ell[0]), float(self.sys.tau_ell[0]), self.gamma, self.r)
        period = 2 * math.pi / (float(self.sys.tau_ell[0]) + self.r)
        return complex(s, 0.0), complex(s, period)

    def state(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        tau, xi = self.sys.tau(0, x), self.sys.xi(0, x)
        l0, l1 = self.roots
        return np.real(
            np.exp(l0 * (t - tau) + xi) + self.weight * np.exp(l1 * (t - tau) + xi)
        )

    def trace(self, t) -> np.ndarray:
        return self.state(t, self.sys.ell) if np.ndim(t) == 0 else np.array([self.state(s, self.sys.ell) for s in t])

    def initial_state(self, nodes: int) -> GridFunction:
        x = np.linspace(0.0, self.sys.ell, nodes)
        return GridFunction(self.sys.ell, self.state(0.0, x)[:, None])

    def initial_history(self, dt: float) -> HistorySegment:
        return HistorySegment.from_function(lambda th: [float(self.state(th, self.sys.ell))], self.r, dt)

    def measure(self) -> StieltjesMeasure:
        return StieltjesMeasure.point_mass([[self.gamma]], -self.r)
