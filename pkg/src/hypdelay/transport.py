"""Closed-form objects for the positive transport system on [0, ell].

Each channel ``i`` obeys ``dz_i/dt + v_i(x) dz_i/dx = k_i(x) z_i`` with
piecewise-constant speed ``v_i > 0`` and reaction ``k_i``.  With travel time
``tau_i(x) = int_0^x 1/v_i`` and growth ``xi_i(x) = int_0^x k_i/v_i`` both
piecewise linear, the characteristics, the free semigroup, the Dirichlet
operator and the transfer function are all explicit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measure import DomainError

_EDGE_EPS = 1e-12


@dataclass(frozen=True)
class PiecewiseConstant:
    """Function on ``[0, ends[-1]]`` equal to ``values[j]`` on ``(ends[j-1], ends[j]]``."""

    ends: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        ends = tuple(float(e) for e in self.ends)
        values = tuple(float(v) for v in self.values)
        if len(ends) != len(values) or not ends:
            raise DomainError("piecewise function needs one value per breakpoint")
        if ends[0] <= 0 or any(b <= a for a, b in zip(ends, ends[1:])):
            raise DomainError("breakpoints must be positive and strictly increasing")
        object.__setattr__(self, "ends", ends)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value: float, ell: float) -> "PiecewiseConstant":
        return cls((ell,), (value,))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.ends, x, side="left"), 0, len(self.ends) - 1)
        return np.asarray(self.values)[idx]


@dataclass(frozen=True)
class Boundary:
    """Backward characteristic left the domain through x=0 at time ``t_exit``."""

    t_exit: float


class TransportSystem:
    """Immutable channel geometry; all derived quantities are computed once."""

    def __init__(self, ell: float, speeds, reactions=None):
        if not ell > 0:
            raise DomainError(f"ell must be > 0, got {ell}")
        speeds = tuple(speeds)
        n = len(speeds)
        if n < 1:
            raise DomainError("need at least one channel")
        if reactions is None:
            reactions = tuple(PiecewiseConstant.constant(0.0, ell) for _ in range(n))
        reactions = tuple(reactions)
        if len(reactions) != n:
            raise DomainError("speeds and reactions must have one entry per channel")
        for pc in speeds + reactions:
            if abs(pc.ends[-1] - ell) > 1e-12 * max(1.0, ell):
                raise DomainError(f"piecewise function must end at ell={ell}, ends at {pc.ends[-1]}")
        if min(min(v.values) for v in speeds) <= 0:
            raise DomainError("speeds must be strictly positive")
        self.ell = float(ell)
        self.n = n
        self.speeds = speeds
        self.reactions = reactions

        knots, taus, xis = [], [], []
        for v, k in zip(speeds, reactions):
            x = np.unique(np.concatenate(([0.0], v.ends[:-1], k.ends[:-1], [ell])))
            mid = 0.5 * (x[:-1] + x[1:])
            dx = np.diff(x)
            vc, kc = v(mid), k(mid)
            knots.append(x)
            taus.append(np.concatenate(([0.0], np.cumsum(dx / vc))))
            xis.append(np.concatenate(([0.0], np.cumsum(dx * kc / vc))))
        self._knots = tuple(knots)
        self._tau = tuple(taus)
        self._xi = tuple(xis)
        self.tau_ell = np.array([t[-1] for t in taus])
        self.xi_ell = np.array([x[-1] for x in xis])
        self.Xi = np.diag(np.exp(self.xi_ell))
        self.k_star = max(max(abs(val) for val in k.values) for k in reactions)
        self.nu = min(min(v.values) for v in speeds)

    @classmethod
    def uniform(cls, ell: float, speeds, reactions=None) -> "TransportSystem":
        """Channels with constant speed and reaction."""
        speeds = np.atleast_1d(speeds)
        reactions = np.zeros_like(speeds, dtype=float) if reactions is None else np.atleast_1d(reactions)
        return cls(
            ell,
            [PiecewiseConstant.constant(v, ell) for v in speeds],
            [PiecewiseConstant.constant(k, ell) for k in reactions],
        )

    def __repr__(self):
        return f"TransportSystem(n={self.n}, ell={self.ell}, tau_ell={self.tau_ell.tolist()})"

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < -_EDGE_EPS) or np.any(x > self.ell + _EDGE_EPS):
            raise DomainError(f"position outside [0, {self.ell}]")
        return np.clip(x, 0.0, self.ell)

    def tau(self, i: int, x):
        return np.interp(self._check_x(x), self._knots[i], self._tau[i])

    def xi(self, i: int, x):
        return np.interp(self._check_x(x), self._knots[i], self._xi[i])

    def tau_inv(self, i: int, s):
        s = np.asarray(s, dtype=float)
        return np.interp(s, self._tau[i], self._knots[i])

    @property
    def max_tau(self) -> float:
        return float(self.tau_ell.max())

    @property
    def min_tau(self) -> float:
        return float(self.tau_ell.min())


@dataclass(frozen=True)
class GridFunction:
    """Values on the uniform grid ``0 = x_0 < ... < x_N = ell``, piecewise linear in between."""

    ell: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] < 2:
            raise DomainError("grid function needs at least two nodes")
        if not np.all(np.isfinite(v)):
            raise DomainError("grid values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, fn, ell: float, nodes: int) -> "GridFunction":
        x = np.linspace(0.0, ell, nodes)
        return cls(ell, np.array([np.atleast_1d(fn(xx)) for xx in x], dtype=float))

    @classmethod
    def constant(cls, value, ell: float, nodes: int) -> "GridFunction":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(ell, np.tile(v, (nodes, 1)))

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.ell, self.values.shape[0])

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    def channel(self, i: int, x):
        return np.interp(x, self.nodes, self.values[:, i])


def characteristic_foot(sys: TransportSystem, i: int, x: float, t: float):
    """Follow the characteristic through ``(t, x)`` back to time 0.

    Returns the foot position, or :class:`Boundary` with the time at which the
    characteristic entered through x=0.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    s = float(sys.tau(i, x))
    # a characteristic arriving exactly at t belongs to the inflow
    if t < s:
        return float(sys.tau_inv(i, s - t))
    return Boundary(t - s)


def semigroup_apply(
    sys: TransportSystem,
    t: float,
    f: GridFunction,
    exponent: str = "relative",
    nodes: int | None = None,
) -> GridFunction:
    """Free evolution (zero inflow) of ``f`` over time ``t``.

    ``exponent="relative"`` uses the integrating factor ``e^{xi(x) - xi(foot)}``
    along the characteristic.  ``exponent="foot"`` uses ``e^{xi(foot)}`` instead;
    it exists only so that cross-checks can show it disagrees with the PDE.
    The result lives on ``f``'s grid unless ``nodes`` asks for another one.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    if exponent not in ("relative", "foot"):
        raise ValueError(f"unknown exponent convention {exponent!r}")
    x = f.nodes if nodes is None else np.linspace(0.0, f.ell, nodes)
    out = np.zeros((x.size, sys.n))
    for i in range(sys.n):
        tx = sys.tau(i, x)
        alive = (t < tx) | (t == 0)
        if not np.any(alive):
            continue
        foot = sys.tau_inv(i, tx[alive] - t)
        xi_foot = sys.xi(i, foot)
        gain = np.exp(sys.xi(i, x[alive]) - xi_foot) if exponent == "relative" else np.exp(xi_foot)
        out[alive, i] = gain * f.channel(i, foot)
    return GridFunction(f.ell, out)


def dirichlet_apply(sys: TransportSystem, lam: complex, d, nodes: int) -> GridFunction:
    """Stationary solution ``e^{xi_i(x) - lam tau_i(x)} d_i`` with inflow ``d``."""
    d = np.asarray(d, dtype=complex).reshape(sys.n)
    x = np.linspace(0.0, sys.ell, nodes)
    out = np.empty((nodes, sys.n), dtype=complex)
    for i in range(sys.n):
        out[:, i] = np.exp(sys.xi(i, x)) * np.exp(-lam * sys.tau(i, x)) * d[i]
    return GridFunction(sys.ell, out)


def transfer_H(sys: TransportSystem, lam) -> np.ndarray:
    """Diagonal transfer matrix ``diag(e^{xi_i(ell) - lam tau_i(ell)})``; broadcasts over ``lam``."""
    lam = np.asarray(lam, dtype=complex)
    # factored so that lam=0 reproduces Xi bit for bit
    diag = np.exp(sys.xi_ell) * np.exp(-lam[..., None] * sys.tau_ell)
    out = np.zeros(lam.shape + (sys.n, sys.n), dtype=complex)
    idx = np.arange(sys.n)
    out[..., idx, idx] = diag
    return out


def sampled_signal(t0: float, dt: float, values: np.ndarray):
    """Linear interpolant of ``values[k]`` at times ``t0 + k*dt``, as ``g(s) -> (..., n)``."""
    values = np.asarray(values, dtype=float)
    last = values.shape[0] - 1

    def g(s):
        pos = (np.asarray(s, dtype=float) - t0) / dt
        pos = np.clip(pos, 0.0, last)
        i0 = np.minimum(np.floor(pos).astype(int), max(last - 1, 0))
        w = (pos - i0)[..., None]
        hi = values[np.minimum(i0 + 1, last)]
        return (1 - w) * values[i0] + w * hi

    return g


def boundary_input_propagate(sys: TransportSystem, t: float, g, nodes: int) -> GridFunction:
    """State produced by inflow ``g`` on ``[0, t]`` starting from zero.

    ``g`` maps an array of times to an array of shape ``(..., n)``.  Channel
    ``i`` at ``x`` carries ``e^{xi_i(x)} g_i(t - tau_i(x))`` once the signal has
    arrived, zero before.
    """
    x = np.linspace(0.0, sys.ell, nodes)
    out = np.zeros((nodes, sys.n))
    for i in range(sys.n):
        tx = sys.tau(i, x)
        arrived = t >= tx
        if np.any(arrived):
            out[arrived, i] = np.exp(sys.xi(i, x[arrived])) * g(t - tx[arrived])[..., i]
    return GridFunction(sys.ell, out)


def io_gain_bound(sys: TransportSystem) -> float:
    """Upper bound ``e^{ell k_* / nu}`` on the input-output gain."""
    return float(np.exp(sys.ell * sys.k_star / sys.nu))
