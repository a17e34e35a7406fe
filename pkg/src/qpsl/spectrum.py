"""Spectrum-side computations: integrated density of states, rotation-number
curves, gap detection with labels, and gap-size exponent reports.

The IDS is realized by Sturm-sequence eigenvalue counting on Dirichlet
truncations of the operator (boundary contamination is O(1/N) and absorbed
into tolerances); the rotation number comes from the projective cocycle
iteration.  The two are tied by N(E) = 1 - 2 rho(E).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diophantine import dist_to_integers
from .errors import QpslError
from .fourier import Potential

__all__ = [
    "IdsCurve", "RotationCurve", "GapRecord",
    "finite_ids", "ids_curve", "rotation_curve", "detect_gaps",
    "gap_bounds_check",
]


def _potential_values(V, thetas):
    if V is None:
        return np.zeros_like(np.asarray(thetas, float))
    if isinstance(V, Potential):
        return V.sample(thetas)
    return np.asarray(V(thetas))


def _sturm_counts(diag, energies):
    """Number of eigenvalues < E of tridiag(1, diag, 1), vectorized over E."""
    E = np.atleast_1d(np.asarray(energies, float))
    d = np.empty_like(E)
    d[:] = diag[0] - E
    tiny = 1e-300
    count = (d < 0).astype(int)
    for i in range(1, len(diag)):
        d = diag[i] - E - 1.0 / np.where(np.abs(d) < tiny, np.copysign(tiny, d), d)
        count += d < 0
    return count


def finite_ids(V, alpha, theta, N, E):
    """Fraction of eigenvalues <= E of the (2N+1)-site Dirichlet truncation
    with phases theta + m alpha, m = -N..N."""
    if N < 10:
        raise QpslError("N must be >= 10")
    alpha = np.atleast_1d(np.asarray(alpha, float))
    theta = np.atleast_1d(np.asarray(theta, float))
    m = np.arange(-N, N + 1)
    pts = theta[None, :] + 2 * math.pi * m[:, None] * alpha[None, :]
    diag = _potential_values(V, pts if pts.shape[1] > 1 else pts[:, 0])
    counts = _sturm_counts(diag, E)
    out = counts / (2 * N + 1)
    return float(out[0]) if np.isscalar(E) else out


@dataclass
class IdsCurve:
    energies: np.ndarray
    values: np.ndarray
    truncation: int
    phases: np.ndarray

    def monotone(self, slack=0.0):
        return bool(np.all(np.diff(self.values) >= -slack))


def ids_curve(V, alpha, energies, N=1000, phases=4, seed=0):
    """Phase-averaged finite-volume IDS on an energy grid."""
    rng = np.random.default_rng(seed)
    alpha = np.atleast_1d(np.asarray(alpha, float))
    th = rng.uniform(0, 2 * math.pi, size=(phases, alpha.size))
    energies = np.asarray(energies, float)
    acc = np.zeros_like(energies)
    for p in range(phases):
        acc += np.asarray(finite_ids(V, alpha, th[p], N, energies))
    return IdsCurve(energies=energies, values=acc / phases, truncation=N, phases=th)


@dataclass
class RotationCurve:
    energies: np.ndarray
    rho: np.ndarray
    dispersion: np.ndarray
    iters: int
    samples: int

    def monotone_nonincreasing(self, slack=1e-4):
        return bool(np.all(np.diff(self.rho) <= slack))


def rotation_curve(V, alpha, energies, iters=100_000, samples=3, seed=0):
    """rho(E) on a sorted grid by oscillation counting.

    The solution recursion u_{k+1} = (E - V) u_k - u_{k-1} changes sign twice
    per full projective turn, so rho = (sign changes) / (2 iters) in [0, 1/2];
    this count is branch-free (no angle unwrapping) and exact up to the
    endpoint term O(1/iters).
    """
    energies = np.asarray(energies, float)
    if np.any(np.diff(energies) < 0):
        raise QpslError("energy grid must be sorted")
    alpha = np.atleast_1d(np.asarray(alpha, float))
    rng = np.random.default_rng(seed)
    thetas = rng.uniform(0, 2 * math.pi, size=(samples, alpha.size))
    nE = energies.size
    u_prev = np.full((nE, samples), 0.3)
    u_cur = np.ones((nE, samples))
    count = np.zeros((nE, samples))
    th = thetas.copy()
    step = 2 * math.pi * alpha
    E = energies[:, None]
    for k in range(iters):
        vals = _potential_values(V, th if alpha.size > 1 else th[:, 0])
        u_next = (E - vals[None, :]) * u_cur - u_prev
        count += (u_cur * u_next < 0) | (u_next == 0)
        u_prev, u_cur = u_cur, u_next
        if (k + 1) % 64 == 0:
            scale = np.maximum(np.abs(u_cur), np.abs(u_prev))
            scale = np.where(scale == 0, 1.0, scale)
            u_prev /= scale
            u_cur /= scale
        th = th + step[None, :]
    per = count / (2.0 * iters)
    rho = per.mean(axis=1)
    disp = per.max(axis=1) - per.min(axis=1)
    return RotationCurve(energies=energies, rho=rho, dispersion=disp,
                         iters=iters, samples=samples)


@dataclass
class GapRecord:
    label: tuple
    E_minus: float
    E_plus: float
    length: float
    rho_locked: float
    zeta_estimate: float = None
    bound_window: dict = field(default_factory=dict)

    def as_dict(self):
        return {"label": list(self.label), "E_minus": self.E_minus,
                "E_plus": self.E_plus, "length": self.length,
                "rho_locked": self.rho_locked,
                "zeta_estimate": self.zeta_estimate,
                "bound_window": self.bound_window}


def _lock_distance(rho, label, alpha):
    return dist_to_integers(2.0 * rho - float(np.dot(label, alpha)))


def detect_gaps(curve: RotationCurve, alpha, labels, tol=1e-3, rho_fn=None,
                min_plateau=3, refine_bisections=40, refine_tol=None):
    """Find maximal plateaus where 2 rho(E) locks onto <n, alpha> mod 1.

    ``labels`` is a list of candidate lattice vectors (ints for d=1); both
    signs are tried.  Edges are refined on the lock condition when ``rho_fn``
    (sorted energy array -> rho array) is supplied; otherwise the plateau's
    grid bounds are reported.  A minimum plateau width rejects numerical
    flats.  ``refine_tol`` tightens the lock tolerance during refinement (the
    rotation number departs from the lock like sqrt(E - edge), so a tolerance
    t leaves an O(t^2) edge bias; it defaults to tol).
    """
    refine_tol = tol if refine_tol is None else refine_tol
    alpha = np.atleast_1d(np.asarray(alpha, float))
    cands = []
    for n in labels:
        n = (int(n),) if np.isscalar(n) else tuple(int(c) for c in n)
        for s in (1, -1):
            cand = tuple(s * c for c in n)
            if cand not in cands:
                cands.append(cand)

    E = curve.energies
    best_label = [None] * E.size
    for i, r in enumerate(curve.rho):
        dists = [( _lock_distance(r, n, alpha), n) for n in cands]
        dmin, nmin = min(dists, key=lambda t: t[0])
        if dmin < tol:
            best_label[i] = nmin

    records = []
    i = 0
    while i < E.size:
        if best_label[i] is None:
            i += 1
            continue
        j = i
        while j + 1 < E.size and best_label[j + 1] == best_label[i]:
            j += 1
        if j - i + 1 >= min_plateau:
            n = best_label[i]
            lo, hi = E[i], E[j]
            if rho_fn is not None:
                anchor = 0.5 * (E[i] + E[j])
                lo = _refine_edge(rho_fn, n, alpha, refine_tol, anchor,
                                  E[i - 1] if i > 0 else E[i],
                                  refine_bisections)
                hi = _refine_edge(rho_fn, n, alpha, refine_tol, anchor,
                                  E[j + 1] if j + 1 < E.size else E[j],
                                  refine_bisections)
            lock = dist_to_integers(float(np.dot(n, alpha)) / 2.0)
            records.append(GapRecord(label=n, E_minus=float(lo), E_plus=float(hi),
                                     length=float(hi - lo), rho_locked=lock))
        i = j + 1
    return records


def _refine_edge(rho_fn, label, alpha, tol, anchor, E_out, budget):
    """Locate the lock boundary between the plateau interior (``anchor``,
    reliably locked) and an unlocked energy beyond the edge.

    ``rho_fn`` must accept a sorted array of energies and return the matching
    rho array; each refinement stage is a single vectorized evaluation of a
    local grid, repeated until the bracket shrinks below the equivalent of
    ``budget`` bisections.
    """
    if E_out == anchor:
        return float(anchor)
    lo, hi = float(anchor), float(E_out)   # lo: locked side, hi: unlocked side
    width_target = abs(E_out - anchor) * 0.5 ** budget
    pts = 33
    for _ in range(12):
        if abs(hi - lo) <= width_target:
            break
        grid = np.linspace(lo, hi, pts)    # may run downward
        asc = np.sort(grid)
        rho_asc = np.asarray(rho_fn(asc))
        rho = np.empty_like(rho_asc)
        rho[np.argsort(grid, kind="stable")] = rho_asc
        locked = np.array([_lock_distance(r, label, alpha) < tol for r in rho])
        if locked.all():
            lo = float(grid[-1])
            break
        k = int(np.argmin(locked))         # first unlocked index from lo
        if k == 0:
            break                          # plateau interior already unlocked
        lo, hi = float(grid[k - 1]), float(grid[k])
    return lo


def gap_bounds_check(gap: GapRecord, k, tau, strict=False):
    """Exponent ratio r = log|I| / log|n| against the window
    [-11k/10 - 6 tau, -9k/10 + 56 tau]; informational unless strict."""
    n_norm = max(abs(c) for c in gap.label)
    if n_norm < 2 or gap.length <= 0:
        return {"r": None, "window": None, "inside": None,
                "note": "degenerate label or empty gap"}
    r = math.log(gap.length) / math.log(n_norm)
    lo = -11.0 * k / 10.0 - 6.0 * tau
    hi = -9.0 * k / 10.0 + 56.0 * tau
    inside = lo <= r <= hi
    if strict and not inside:
        raise QpslError(f"gap exponent {r:.3f} outside [{lo:.3f}, {hi:.3f}]")
    return {"r": r, "window": [lo, hi], "inside": inside,
            "window_nonempty": lo <= hi}
