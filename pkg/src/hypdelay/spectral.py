"""Stability certificate and characteristic roots.

For a positive measure the closed loop is uniformly exponentially stable iff
the Perron root of ``Xi @ M(0)`` is below one, where ``Xi`` is the transfer
matrix at zero and ``M(0)`` the total mass of the measure.  The free transport
semigroup is nilpotent, so its spectral bound is ``-inf`` and plays no role.

Characteristic roots are the zeros of ``det(I - H(λ) M(λ))``; they are counted
with the argument principle on rectangles and polished by Newton's method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .measure import DomainError, StieltjesMeasure, is_positive, laplace_stieltjes, total_variation
from .transport import TransportSystem, io_gain_bound, transfer_H

MARGINAL_TOL = 1e-9


class BoundaryHitError(RuntimeError):
    """The characteristic function vanishes (numerically) on a contour."""


@dataclass(frozen=True)
class PerronResult:
    r: float
    lower: float
    upper: float
    converged: bool = True
    iterations: int = 0

    def __iter__(self):
        return iter((self.r, self.lower, self.upper))


def perron_radius(M, tol: float = 1e-10, max_iter: int = 100_000) -> PerronResult:
    """Perron root of a nonnegative matrix with Collatz–Wielandt bounds.

    Iterates on ``M + I``, which has the same Perron vector and is primitive
    whenever ``M`` is irreducible, so imprimitive matrices converge too.  For an
    iterate ``x >= 0`` the smallest ratio ``(Mx)_i / x_i`` over the support of
    ``x`` is a lower bound; when ``x > 0`` the largest ratio is an upper bound.
    The best bounds seen are kept.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError("expected a square matrix")
    if np.any(M < 0):
        raise DomainError("perron_radius needs an entrywise nonnegative matrix")
    n = M.shape[0]
    if not np.any(M):
        return PerronResult(0.0, 0.0, 0.0, iterations=0)
    shifted = M + np.eye(n)
    x = np.ones(n)
    best_lo, best_hi = 0.0, math.inf
    it = 0
    for it in range(1, max_iter + 1):
        y = M @ x
        support = x > 0
        ratios = y[support] / x[support]
        best_lo = max(best_lo, float(ratios.min()))
        if np.all(support):
            best_hi = min(best_hi, float(ratios.max()))
        if best_hi - best_lo <= tol * max(best_hi, 0.0):
            break
        if it % 500 == 0:
            # slow mixing (nearly equal diagonal blocks): eigenvector-seeded bounds often close the gap
            best_lo, best_hi = _eigvec_bounds(M, best_lo, best_hi)
            if best_hi - best_lo <= tol * max(best_hi, 0.0):
                break
        x = shifted @ x
        x /= x.max()
        # components this small only stall the ratios (reducible M); x >= 0 keeps the lower bound valid
        x[x < 1e-200] = 0.0
    else:
        # defective or reducible: seed the bounds with perturbed eigenvectors
        best_lo, best_hi = _eigvec_bounds(M, best_lo, best_hi)
        converged = best_hi - best_lo <= tol * max(best_hi, 0.0)
        r = 0.5 * (best_lo + best_hi) if math.isfinite(best_hi) else best_lo
        return PerronResult(r, best_lo, best_hi, converged=converged, iterations=it)
    return PerronResult(0.5 * (best_lo + best_hi), best_lo, best_hi, iterations=it)


def _eigvec_bounds(M: np.ndarray, lo: float, hi: float) -> tuple[float, float]:
    w, v = np.linalg.eig(M)
    vec = np.abs(v[:, int(np.argmax(w.real))])
    vec /= vec.max()
    for delta in 10.0 ** -np.arange(2, 16):
        x = vec + delta
        ratios = (M @ x) / x
        lo, hi = max(lo, float(ratios.min())), min(hi, float(ratios.max()))
        x = np.where(vec > 1e-12, vec, 0.0)
        if x.max() > 0:
            support = x > 0
            lo = max(lo, float(((M @ x)[support] / x[support]).min()))
    return lo, hi


@dataclass
class StabilityReport:
    r_value: float | None
    cw_lower: float | None
    cw_upper: float | None
    verdict: str
    rightmost_root: complex | None = None
    wellposed_margin: tuple[float, float] | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        root = self.rightmost_root
        wp = self.wellposed_margin
        return {
            "r": self.r_value,
            "lower": self.cw_lower,
            "upper": self.cw_upper,
            "verdict": self.verdict,
            "rightmost_root": None if root is None else {"re": root.real, "im": root.imag},
            "wellposed": None if wp is None else {"alpha0": wp[0], "margin": wp[1]},
            "notes": list(self.notes),
        }


def verdict_for(r: float, tol: float = MARGINAL_TOL) -> str:
    if abs(r - 1.0) <= tol:
        return "marginal"
    return "stable" if r < 1.0 else "unstable"


def loop_gain_at_zero(sys: TransportSystem, m: StieltjesMeasure) -> np.ndarray:
    """``Xi @ M(0)``; real and nonnegative for a positive measure."""
    return sys.Xi @ laplace_stieltjes(m, 0.0).real


def certify(
    sys: TransportSystem,
    m: StieltjesMeasure,
    tol: float = MARGINAL_TOL,
    with_root: bool = False,
    search: dict | None = None,
) -> StabilityReport:
    if m.dimension != sys.n:
        raise DomainError("measure and system dimensions differ")
    if not is_positive(m):
        return StabilityReport(
            None, None, None, "indeterminate",
            notes=["measure is not positive: the spectral-radius criterion does not apply"],
        )
    pr = perron_radius(loop_gain_at_zero(sys, m))
    notes = ["free transport semigroup is nilpotent: spectral bound -inf, verdict set by r(Xi M(0)) vs 1"]
    if not pr.converged:
        notes.append(f"power iteration did not close the bracket after {pr.iterations} iterations")
    report = StabilityReport(pr.r, pr.lower, pr.upper, verdict_for(pr.r, tol), notes=notes)
    alpha0, margin = wellposedness_margin(sys, m)
    report.wellposed_margin = None if alpha0 is None else (alpha0, margin)
    if alpha0 is None:
        notes.append("no alpha0 with Var(eta; -alpha0, 0) * nu0 < 1 found")
    if with_root:
        try:
            root = rightmost_root(sys, m, **(search or {}))
        except BoundaryHitError as exc:
            notes.append(f"root search failed: {exc}")
        else:
            report.rightmost_root = root.value
            if root.flag:
                notes.append(f"rightmost root: {root.flag}")
            notes.append("root search covers a bounded strip: it bounds the spectral abscissa from below")
    return report


def characteristic_value(sys: TransportSystem, m: StieltjesMeasure, lam):
    """``det(I - H(λ) M(λ))``; vectorised over ``lam``."""
    lam = np.asarray(lam, dtype=complex)
    loop = transfer_H(sys, lam) @ laplace_stieltjes(m, lam)
    return np.linalg.det(np.eye(sys.n) - loop)


def _winding(sys, m, corners, base_spacing: float, max_depth: int = 30) -> int:
    """Winding number of Δ around the closed polygon ``corners``."""
    total = 0.0
    for za, zb in zip(corners, corners[1:] + corners[:1]):
        count = max(8, int(math.ceil(abs(zb - za) / base_spacing)))
        z = za + (zb - za) * np.linspace(0.0, 1.0, count + 1)
        f = characteristic_value(sys, m, z)
        if np.any(np.abs(f) < 1e-12):
            raise BoundaryHitError("characteristic function vanishes on the contour; perturb the rectangle")
        total += _accumulate(sys, m, z, f, max_depth)
    w = total / (2 * math.pi)
    k = round(w)
    if abs(w - k) > 1e-3:
        raise BoundaryHitError(f"winding number {w:.6f} is not close to an integer")
    return int(k)


def _accumulate(sys, m, z, f, depth) -> float:
    """Sum of argument increments along the sampled path, refining coarse segments.

    Coarse segments are split eightfold, all at once per level.
    """
    za, zb, fa, fb = z[:-1], z[1:], f[:-1], f[1:]
    inner_t = np.linspace(0.0, 1.0, 9)[1:-1]
    total = 0.0
    for level in range(depth + 1):
        dphi = np.angle(fb / fa)
        # near a cluster of roots the phase can turn by ~2π between samples and alias to ~0;
        # demanding |Δf| < |f|/2 at both ends keeps each chord well away from the origin
        coarse = (np.abs(dphi) >= math.pi / 2) | (np.abs(fb - fa) >= 0.5 * np.minimum(np.abs(fa), np.abs(fb)))
        total += float(dphi[~coarse].sum())
        if not np.any(coarse):
            return total
        if level == depth:
            raise BoundaryHitError("argument increments did not resolve; contour too close to a root")
        a, b = za[coarse], zb[coarse]
        inner = a[:, None] + (b - a)[:, None] * inner_t
        f_inner = characteristic_value(sys, m, inner)
        if np.any(np.abs(f_inner) < 1e-12):
            raise BoundaryHitError("characteristic function vanishes on the contour; perturb the rectangle")
        pts = np.concatenate((a[:, None], inner, b[:, None]), axis=1)
        vals = np.concatenate((fa[coarse][:, None], f_inner, fb[coarse][:, None]), axis=1)
        za, zb = pts[:, :-1].ravel(), pts[:, 1:].ravel()
        fa, fb = vals[:, :-1].ravel(), vals[:, 1:].ravel()
    return total


def _spacing(sys: TransportSystem, m: StieltjesMeasure) -> float:
    # every entry of H M is a sum of e^{λ(θ - tau_i)}; the determinant rotates at most n times as fast
    rate = sys.n * (sys.max_tau + m.delay)
    return math.pi / (4 * rate)


def count_roots(sys: TransportSystem, m: StieltjesMeasure, rect) -> int:
    """Zeros of Δ, with multiplicity, inside ``rect = (re_lo, re_hi, im_lo, im_hi)``."""
    a, b, c, d = (float(v) for v in rect)
    if not (a < b and c < d):
        raise ValueError(f"degenerate rectangle {rect}")
    corners = [complex(a, c), complex(b, c), complex(b, d), complex(a, d)]
    return _winding(sys, m, corners, _spacing(sys, m))


@dataclass(frozen=True)
class RootEstimate:
    value: complex | None
    flag: str | None = None


def _count_perturbed(sys, m, rect, scale: float, left_only: bool = False) -> tuple[int, tuple]:
    """count_roots, nudging the rectangle off a root if the contour hits one."""
    a, b, c, d = rect
    for attempt in range(6):
        try:
            return count_roots(sys, m, (a, b, c, d)), (a, b, c, d)
        except BoundaryHitError:
            eps = scale * 1e-5 * (1.618 ** attempt)
            a -= eps
            if not left_only:
                b, c, d = b + 0.7 * eps, c - 0.3 * eps, d + 0.9 * eps
    raise BoundaryHitError(f"could not find a root-free contour near {rect}")


def upper_root_bound(sys: TransportSystem, m: StieltjesMeasure) -> float:
    """No root has real part above this value.

    For ``Re λ = σ >= 0``, ``||H(λ) M(λ)|| <= max_i e^{xi_i - σ tau_i} Var(η)`` in
    the max-norm operator norm; beyond the returned abscissa the loop gain is
    below one and ``I - H M`` is invertible.
    """
    var = total_variation(m, -m.delay, 0.0)
    if var == 0:
        return 0.0
    return max(0.0, float(np.max((sys.xi_ell + math.log(var)) / sys.tau_ell)))


def rightmost_root(
    sys: TransportSystem,
    m: StieltjesMeasure,
    a: float | None = None,
    b: float | None = None,
    imag_cap: float | None = None,
    tol: float = 1e-10,
) -> RootEstimate:
    """Root of Δ with the largest real part inside ``[a, b] x [-Y, Y]``.

    Bisects on the abscissa ``σ`` with root counts over ``[σ, b] x [-Y, Y]``,
    then isolates a root in the last strip by bisecting the imaginary range and
    polishes it with Newton's method.  Returns ``RootEstimate(None)`` when the
    strip over ``[a, b]`` holds no root.
    """
    if b is None:
        b = upper_root_bound(sys, m) + 0.5
    if a is None:
        a = b - 10.0
    if not a < b:
        raise ValueError("need a < b")
    period = math.pi / (sys.min_tau + m.delay)
    Y = float(imag_cap) if imag_cap is not None else period
    scale = max(1.0, b - a)

    # keep the imaginary edges off the real axis, where real roots live
    total, (a, b, c, d) = _count_perturbed(sys, m, (a, b, -Y - 1e-3, Y + 2e-3), scale)
    if total == 0:
        return RootEstimate(None)

    # invariant: the strip [lo, b] holds a root, [hi, b] holds none
    lo, hi = a, b
    while hi - lo > 1e-4 * scale:
        mid = lo + (0.5 + 0.0137) * (hi - lo)
        cnt, rect = _count_perturbed(sys, m, (mid, b, c, d), scale, left_only=True)
        if cnt > 0:
            lo = rect[0]
        else:
            hi = rect[0]

    left, right = lo - 1e-4 * scale, hi + 1e-4 * scale
    while d - c > 1e-3:
        mid = c + (0.5 + 0.0137) * (d - c)
        try:
            upper = count_roots(sys, m, (left, right, mid, d))
        except BoundaryHitError:
            mid += 1e-5 * (d - c)
            upper = count_roots(sys, m, (left, right, mid, d))
        if upper > 0:
            c = mid
        else:
            d = mid
    return _newton(sys, m, complex(0.5 * (lo + hi), 0.5 * (c + d)), tol)


def _newton(sys, m, z0: complex, tol: float, max_iter: int = 50) -> RootEstimate:
    z = z0
    for _ in range(max_iter):
        f = complex(characteristic_value(sys, m, z))
        h = 1e-7 * (1 + abs(z))
        df = complex(characteristic_value(sys, m, z + h) - characteristic_value(sys, m, z - h)) / (2 * h)
        if df == 0:
            break
        step = f / df
        z -= step
        if abs(step) < tol * (1 + abs(z)):
            if abs(z - z0) > 1e-2 * (1 + abs(z0)):
                return RootEstimate(z0, "Newton wandered away from the isolated strip")
            return RootEstimate(z)
    return RootEstimate(z0, "Newton did not converge; returning the strip midpoint")


def wellposedness_margin(sys: TransportSystem, m: StieltjesMeasure) -> tuple[float | None, float | None]:
    """First ``α = r 2^{-j}`` (``j = 0..40``) with ``Var(η; -α, 0) ν0 < 1``.

    ``ν0`` is the input-output gain bound of the transport part.  Returns
    ``(α0, Var(η; -α0, 0) ν0)``, or ``(None, None)`` if no such ``α`` exists.
    """
    nu0 = io_gain_bound(sys)
    for j in range(41):
        alpha = m.delay * 2.0 ** -j
        product = total_variation(m, -alpha, 0.0) * nu0
        if product < 1:
            return alpha, product
    return None, None


def locate_roots(
    sys: TransportSystem,
    m: StieltjesMeasure,
    rect,
    min_size: float = 1e-3,
    tol: float = 1e-12,
) -> list[RootEstimate]:
    """All roots inside ``rect``, by recursive splitting and Newton polishing.

    A sub-rectangle holding exactly one root is split until it is smaller than
    ``min_size``, then its centre seeds Newton.  Results are sorted by
    imaginary then real part.
    """
    found: list[RootEstimate] = []
    scale = max(1.0, rect[1] - rect[0], rect[3] - rect[2])
    count, rect = _count_perturbed(sys, m, tuple(float(v) for v in rect), scale)
    stack = [(rect, count)]
    while stack:
        (a, b, c, d), cnt = stack.pop()
        if cnt == 0:
            continue
        if max(b - a, d - c) < min_size:
            est = _newton(sys, m, complex(0.5 * (a + b), 0.5 * (c + d)), tol)
            found.extend([est] * cnt)
            continue
        if b - a >= d - c:
            cut = a + (0.5 + 0.0113) * (b - a)
            left, right = _split(sys, m, (a, cut, c, d), (cut, b, c, d), cnt, scale, axis=0)
        else:
            cut = c + (0.5 + 0.0113) * (d - c)
            left, right = _split(sys, m, (a, b, c, cut), (a, b, cut, d), cnt, scale, axis=1)
        stack.extend([left, right])
    found.sort(key=lambda e: (round(e.value.imag, 9), round(e.value.real, 9)))
    return found


def _split(sys, m, first, second, total, scale, axis):
    """Count roots in two halves sharing an edge; the shared edge moves if it hits a root."""
    for attempt in range(6):
        try:
            n1 = count_roots(sys, m, first)
            return (first, n1), (second, total - n1)
        except BoundaryHitError:
            shift = scale * 1e-5 * (1.618 ** attempt)
            if axis == 0:
                first = (first[0], first[1] + shift, first[2], first[3])
                second = (first[1], second[1], second[2], second[3])
            else:
                first = (first[0], first[1], first[2], first[3] + shift)
                second = (second[0], second[1], first[3], second[3])
    raise BoundaryHitError("could not split rectangle away from roots")
