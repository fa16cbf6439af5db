"""Matrix-valued Stieltjes measures on a delay window [-r, 0].

A measure is a finite set of atoms plus densities of the form
``matrix * exp(rate * theta)`` on sub-intervals.  Both shapes have closed-form
Laplace transforms, and together they cover point delays and distributed
(exponentially weighted) delays.

Matrix norms are the operator norm induced by the max-norm on R^n, i.e. the
maximum absolute row sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EDGE_EPS = 1e-12


class DomainError(ValueError):
    """Argument outside the domain on which an operation is defined."""


def matrix_norm(a: np.ndarray) -> float:
    return float(np.abs(np.asarray(a)).sum(axis=-1).max()) if np.size(a) else 0.0


@dataclass(frozen=True)
class Atom:
    theta: float
    weight: np.ndarray


@dataclass(frozen=True)
class DensityPiece:
    """``matrix * exp(rate * theta)`` on ``[start, stop]``."""

    start: float
    stop: float
    matrix: np.ndarray
    rate: float = 0.0

    def at(self, theta):
        """Density values at ``theta`` (scalar or 1-D array), shape ``(..., n, n)``."""
        theta = np.asarray(theta, dtype=float)
        return np.exp(self.rate * theta)[..., None, None] * self.matrix


@dataclass(frozen=True)
class StieltjesMeasure:
    delay: float
    dimension: int
    atoms: tuple[Atom, ...] = ()
    densities: tuple[DensityPiece, ...] = ()

    def __post_init__(self):
        r, n = self.delay, self.dimension
        if not r > 0:
            raise DomainError(f"delay span must be > 0, got {r}")
        if n < 1:
            raise DomainError(f"dimension must be >= 1, got {n}")
        atoms = []
        for a in self.atoms:
            w = np.array(a.weight, dtype=float).reshape(n, n)
            if not -r - _EDGE_EPS <= a.theta <= _EDGE_EPS:
                raise DomainError(f"atom at theta={a.theta} outside [{-r}, 0]")
            atoms.append(Atom(float(min(max(a.theta, -r), 0.0)), w))
        pieces = []
        for p in self.densities:
            if not (-r - _EDGE_EPS <= p.start < p.stop <= _EDGE_EPS):
                raise DomainError(f"density interval [{p.start}, {p.stop}] invalid in [{-r}, 0]")
            m = np.array(p.matrix, dtype=float).reshape(n, n)
            pieces.append(DensityPiece(max(p.start, -r), min(p.stop, 0.0), m, float(p.rate)))
        pieces.sort(key=lambda p: p.start)
        for left, right in zip(pieces, pieces[1:]):
            if right.start < left.stop - _EDGE_EPS:
                raise DomainError("density intervals overlap")
        object.__setattr__(self, "atoms", tuple(atoms))
        object.__setattr__(self, "densities", tuple(pieces))

    @classmethod
    def point_mass(cls, weight, theta: float, delay: float | None = None) -> "StieltjesMeasure":
        w = np.atleast_2d(np.asarray(weight, dtype=float))
        return cls(delay if delay is not None else -theta, w.shape[0], (Atom(theta, w),))

    @classmethod
    def zero(cls, delay: float, dimension: int) -> "StieltjesMeasure":
        return cls(delay, dimension)

    def scaled(self, c: float) -> "StieltjesMeasure":
        return StieltjesMeasure(
            self.delay,
            self.dimension,
            tuple(Atom(a.theta, c * a.weight) for a in self.atoms),
            tuple(DensityPiece(p.start, p.stop, c * p.matrix, p.rate) for p in self.densities),
        )

    @property
    def has_atom_at_zero(self) -> bool:
        return any(a.theta == 0.0 and np.any(a.weight != 0) for a in self.atoms)


@dataclass(frozen=True)
class HistorySegment:
    """Samples of an R^n-valued function on a uniform grid over ``[-r, 0]``.

    Evaluation is by linear interpolation.  ``seam`` optionally marks a grid
    node carrying a jump: the stored sample is the value from the right and
    ``seam_left`` the limit from the left.
    """

    delay: float
    samples: np.ndarray
    seam: int | None = None
    seam_left: np.ndarray | None = field(default=None)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.shape[0] < 2:
            raise DomainError("history needs at least two samples")
        if not np.all(np.isfinite(s)):
            raise DomainError("history samples must be finite")
        object.__setattr__(self, "samples", s)
        if self.seam is not None:
            object.__setattr__(self, "seam_left", np.asarray(self.seam_left, dtype=float).reshape(s.shape[1]))

    @classmethod
    def constant(cls, value, delay: float, dt: float) -> "HistorySegment":
        k = int(round(delay / dt))
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(delay, np.tile(v, (k + 1, 1)))

    @classmethod
    def from_function(cls, fn, delay: float, dt: float) -> "HistorySegment":
        """Sample ``fn(theta) -> R^n`` on the grid."""
        k = int(round(delay / dt))
        thetas = np.linspace(-delay, 0.0, k + 1)
        return cls(delay, np.array([np.atleast_1d(fn(t)) for t in thetas], dtype=float))

    @property
    def dt(self) -> float:
        return self.delay / (self.samples.shape[0] - 1)

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.delay, 0.0, self.samples.shape[0])

    def __call__(self, theta, side: str = "right") -> np.ndarray:
        """Evaluate at ``theta`` (scalar or 1-D array); returns ``(..., n)``.

        ``side="left"`` returns left limits, which differ from the samples only
        at the seam node.
        """
        theta = np.asarray(theta, dtype=float)
        if np.any(theta < -self.delay - _EDGE_EPS) or np.any(theta > _EDGE_EPS):
            raise DomainError("history evaluated outside [-r, 0]")
        k = self.samples.shape[0] - 1
        pos = np.clip((theta + self.delay) / self.dt, 0.0, k)
        i0 = np.minimum(np.floor(pos).astype(int), k - 1)
        w = (pos - i0)[..., None]
        lo = self.samples[i0]
        hi = self.samples[i0 + 1]
        if self.seam is not None:
            # panels ending at the seam use the left limit
            hi = np.where((i0 + 1 == self.seam)[..., None], self.seam_left, hi)
            at_seam = np.isclose(pos, self.seam, rtol=0, atol=1e-9)[..., None]
            lo_val = (1 - w) * lo + w * hi
            right = self.samples[self.seam]
            pick = right if side == "right" else self.seam_left
            return np.where(at_seam, pick, lo_val)
        return (1 - w) * lo + w * hi


def _check_interval(m: StieltjesMeasure, a: float, b: float) -> None:
    if not (-m.delay - _EDGE_EPS <= a <= b <= _EDGE_EPS):
        raise DomainError(f"interval [{a}, {b}] not inside [{-m.delay}, 0]")


def total_variation(m: StieltjesMeasure, a: float, b: float) -> float:
    """Variation of the measure over ``(a, b]``.

    Atoms count when ``a < theta <= b``; an atom at ``-r`` is counted when
    ``a == -r`` so that the variation over the whole window includes it.
    """
    _check_interval(m, a, b)
    at_left_end = a <= -m.delay + _EDGE_EPS
    total = 0.0
    for atom in m.atoms:
        if (a < atom.theta or (at_left_end and atom.theta <= a + _EDGE_EPS)) and atom.theta <= b:
            total += matrix_norm(atom.weight)
    for p in m.densities:
        lo, hi = max(a, p.start), min(b, p.stop)
        if hi <= lo:
            continue
        total += matrix_norm(p.matrix) * _exp_integral(p.rate, lo, hi)
    return total


def _exp_integral(c, lo: float, hi: float):
    """Integral of ``exp(c * theta)`` over ``[lo, hi]``; ``c`` may be complex or an array."""
    c = np.asarray(c)
    small = np.abs(c * (hi - lo)) < 1e-300
    safe_c = np.where(small, 1.0, c)
    val = np.exp(c * lo) * np.expm1(c * (hi - lo)) / safe_c
    out = np.where(small, hi - lo, val)
    return out if out.ndim else out[()]


def delay_apply(m: StieltjesMeasure, h: HistorySegment) -> np.ndarray:
    """Apply the delay operator ``L(h) = int dη(θ) h(θ)``.

    Atoms act by point evaluation; densities are integrated by the composite
    trapezoid rule on the history grid, split at the interval endpoints and at
    the seam.
    """
    if h.dimension != m.dimension:
        raise DomainError(f"history dimension {h.dimension} != measure dimension {m.dimension}")
    if abs(h.delay - m.delay) > 1e-9 * max(1.0, m.delay):
        raise DomainError("history span does not match measure delay")
    out = np.zeros(m.dimension)
    for atom in m.atoms:
        out += atom.weight @ h(atom.theta)
    if not m.densities:
        return out
    grid = h.nodes
    for p in m.densities:
        inner = grid[(grid > p.start + _EDGE_EPS) & (grid < p.stop - _EDGE_EPS)]
        pts = np.concatenate(([p.start], inner, [p.stop]))
        dens = p.at(pts)
        f_right = np.einsum("kij,kj->ki", dens, h(pts, side="right"))
        f_left = np.einsum("kij,kj->ki", dens, h(pts, side="left"))
        widths = np.diff(pts)[:, None]
        out += (0.5 * widths * (f_right[:-1] + f_left[1:])).sum(axis=0)
    return out


def laplace_stieltjes(m: StieltjesMeasure, lam) -> np.ndarray:
    """``M(λ) = int dη(θ) e^{λθ}`` in closed form.

    ``lam`` may be a scalar or an array; the result has shape ``lam.shape + (n, n)``.
    """
    lam = np.asarray(lam, dtype=complex)
    n = m.dimension
    out = np.zeros(lam.shape + (n, n), dtype=complex)
    for atom in m.atoms:
        out += np.exp(lam * atom.theta)[..., None, None] * atom.weight
    for p in m.densities:
        out += np.asarray(_exp_integral(lam + p.rate, p.start, p.stop))[..., None, None] * p.matrix
    return out


def is_positive(m: StieltjesMeasure) -> bool:
    return all(np.all(a.weight >= 0) for a in m.atoms) and all(np.all(p.matrix >= 0) for p in m.densities)
