"""SL(2,R) / SU(1,1) matrix utilities and quasi-periodic cocycle dynamics.

A cocycle is a pair (alpha, A): the torus rotation theta -> theta + 2*pi*alpha
(alpha in cycles) skew-extended by A(theta) acting on R^2.  Rotation numbers
are reported in cycles, so gap locking reads 2*rho = <n, alpha> mod 1.

SU(1,1) is the isomorphic image of SL(2,R) under the unitary

    M = (1 + i)^(-1) [[1, -i], [1, i]],

and su(1,1) elements are parametrized as [[i*a, b], [conj(b), -i*a]] with a
real and b complex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainMismatch,
    NotElliptic,
    NotUnipotent,
    QpslError,
    SingularConjugator,
)
from .fourier import FourierSeries, Potential

__all__ = [
    "M_CONJ", "M_CONJ_INV",
    "to_su11", "from_su11", "check_sl2", "check_su11",
    "su11_exp", "su11_log", "rot_su11", "frame_rotation_su11",
    "parabolic_normalize", "diagonalize_su11", "rotation_matrix",
    "QpCocycle", "schrodinger_cocycle", "transfer_product", "conjugate",
    "RotationResult", "rotation_number", "lyapunov_exponent",
    "UhReport", "uh_test",
]

M_CONJ = np.array([[1.0, -1.0j], [1.0, 1.0j]], complex) / (1.0 + 1.0j)
M_CONJ_INV = np.linalg.inv(M_CONJ)

_I2 = np.eye(2)


def rotation_matrix(phi):
    """R_phi: rotation by the angle 2*pi*phi (phi in cycles)."""
    c, s = math.cos(2 * math.pi * phi), math.sin(2 * math.pi * phi)
    return np.array([[c, -s], [s, c]])


def to_su11(A):
    """M A M^{-1}; maps SL(2,R) onto SU(1,1)."""
    return M_CONJ @ np.asarray(A, complex) @ M_CONJ_INV


def from_su11(B):
    """M^{-1} B M; real for genuine SU(1,1) input."""
    return M_CONJ_INV @ np.asarray(B, complex) @ M_CONJ


def check_sl2(A, tol=1e-10):
    A = np.asarray(A)
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    err = abs(det - 1.0) + float(np.max(np.abs(np.imag(np.asarray(A, complex)))))
    return err <= tol, err


def check_su11(A, tol=1e-10):
    A = np.asarray(A, complex)
    err = max(abs(A[1, 1] - np.conj(A[0, 0])), abs(A[1, 0] - np.conj(A[0, 1])))
    err = max(err, abs(abs(A[0, 0]) ** 2 - abs(A[0, 1]) ** 2 - 1.0))
    return err <= tol, err


def su11_element(a, b):
    """su(1,1) element [[i a, b], [conj b, -i a]], a real, b complex."""
    return np.array([[1j * a, b], [np.conj(b), -1j * a]], complex)


def su11_exp(C):
    """Closed-form exponential of C = [[i a, b], [conj b, -i a]].

    With lam = sqrt(|b|^2 - a^2) (principal branch; imaginary lam turns the
    hyperbolic functions trigonometric) the result is
    [[cosh lam + i a sinhc, b sinhc], [conj(b) sinhc, cosh lam - i a sinhc]]
    where sinhc = sinh(lam)/lam.
    """
    C = np.asarray(C, complex)
    a = C[0, 0].imag
    b = C[0, 1]
    disc = complex(abs(b) ** 2 - a * a)
    lam = np.sqrt(disc)
    if abs(lam) < 1e-8:
        l2 = disc
        ch = 1.0 + l2 / 2.0 + l2 * l2 / 24.0
        sc = 1.0 + l2 / 6.0 + l2 * l2 / 120.0
    else:
        ch = np.cosh(lam)
        sc = np.sinh(lam) / lam
    return np.array([[ch + 1j * a * sc, b * sc],
                     [np.conj(b) * sc, ch - 1j * a * sc]], complex)


def su11_log(A, max_angle=math.pi - 1e-9):
    """Inverse of :func:`su11_exp` on its injectivity domain.

    cosh(lam) is the real part of the diagonal; elliptic branches use
    lam = i*arccos, hyperbolic branches arccosh.  Raises when the rotation
    angle reaches pi (log not single-valued there).
    """
    A = np.asarray(A, complex)
    ok, err = check_su11(A, tol=1e-6)
    if not ok:
        raise QpslError(f"matrix is not SU(1,1) (residual {err:.3e})")
    ch = A[0, 0].real
    if ch >= 1.0:
        lam = math.acosh(min(ch, 1e300))
        sc = math.sinh(lam) / lam if lam > 1e-8 else 1.0 + lam * lam / 6.0
    else:
        theta = math.acos(max(ch, -1.0))
        if theta >= max_angle:
            raise QpslError(f"rotation angle {theta:.6f} outside log injectivity radius")
        sc = math.sin(theta) / theta if theta > 1e-8 else 1.0 - theta * theta / 6.0
    a = A[0, 0].imag / sc
    b = A[0, 1] / sc
    return su11_element(a, b)


def _j_signed_angle(A, sign):
    A = np.asarray(A, complex)
    re = A[0, 0].real
    if re >= 1.0:
        return 0.0
    if re <= -1.0:
        return 0.5
    w, vecs = np.linalg.eig(A)
    for k in (0, 1):
        v = vecs[:, k]
        jn = abs(v[0]) ** 2 - abs(v[1]) ** 2
        if sign * jn > 0:
            return (float(np.angle(w[k])) / (2 * math.pi)) % 1.0
    # numerically parabolic: J-norms vanish
    return 0.0 if re > 0 else 0.5


def rot_su11(A):
    """Rotation number of a constant SU(1,1) matrix, in cycles in [0, 1),
    oriented to match the measured projective rotation of the SL(2,R)
    preimage (the negative-J-norm eigenvalue); trace >= 2 gives 0 and
    trace <= -2 gives 1/2."""
    return _j_signed_angle(A, -1.0)


def frame_rotation_su11(A):
    """Angle (cycles) of the first diagonal entry after SU(1,1)
    diagonalization: the positive-J-norm eigenvalue.  Equals minus
    :func:`rot_su11` mod 1 for elliptic matrices."""
    return _j_signed_angle(A, +1.0)


@dataclass
class ParabolicForm:
    phi: float      # rotation parameter, cycles
    zeta: float     # signed off-diagonal entry of the normal form
    residual: float


def parabolic_normalize(A, tol=1e-8):
    """Rotation-conjugate the unipotent M^{-1} A M into [[1, zeta], [0, 1]].

    A must be SU(1,1) with spectrum {1} (real part of the diagonal equal to 1
    within tol).  The nilpotent part of M^{-1} A M has Frobenius norm 2|b|,
    and rotations preserve it, so |zeta| = 2|b| = 2|Im a|; the sign follows
    sign(Im a).  Returns phi (cycles), zeta and the conjugation residual.
    """
    A = np.asarray(A, complex)
    ok, err = check_su11(A, tol=1e-6)
    if not ok:
        raise QpslError(f"matrix is not SU(1,1) (residual {err:.3e})")
    a = A[0, 0]
    if abs(a.real - 1.0) > tol:
        raise NotUnipotent(f"Re(a) = {a.real:.6g} is not 1 within {tol:.1e}")
    G = from_su11(A)
    if np.max(np.abs(G.imag)) > 1e-9:
        raise QpslError("conjugated matrix is not real")
    G = G.real
    N = G - _I2
    scale = float(np.linalg.norm(N))
    if scale < 1e-14:
        return ParabolicForm(phi=0.0, zeta=0.0, residual=scale)
    if abs(N[0, 0]) + abs(N[0, 1]) >= abs(N[1, 0]) + abs(N[1, 1]):
        k = np.array([N[0, 1], -N[0, 0]])
    else:
        k = np.array([N[1, 1], -N[1, 0]])
    k = k / np.linalg.norm(k)
    kperp = np.array([-k[1], k[0]])
    zeta = float(k @ (N @ kperp))
    phi = math.atan2(k[1], k[0]) / (2 * math.pi) % 1.0
    R = rotation_matrix(phi)
    residual = float(np.max(np.abs(R.T @ G @ R - np.array([[1.0, zeta], [0.0, 1.0]]))))
    return ParabolicForm(phi=phi, zeta=zeta, residual=residual)


def diagonalize_su11(A, tol=1e-9):
    """P in SU(1,1) with P A P^{-1} = diag(e^{i rho}, e^{-i rho}), rho in radians.

    Requires A elliptic (|Re a| < 1).  Returns (P, rho) where rho in (0, 2*pi)
    is the angle of the eigenvalue whose eigenvector has positive J-norm.
    """
    A = np.asarray(A, complex)
    re = A[0, 0].real
    if abs(re) >= 1.0 - 1e-12:
        raise NotElliptic(f"Re(a) = {re:.6g}, matrix is not elliptic")
    w, vecs = np.linalg.eig(A)
    for k in (0, 1):
        v = vecs[:, k]
        jn = abs(v[0]) ** 2 - abs(v[1]) ** 2
        if jn > tol * 1e-3:
            u = v / math.sqrt(jn)
            p, q = u[0], np.conj(u[1])
            Pinv = np.array([[p, q], [np.conj(q), np.conj(p)]], complex)
            P = np.array([[np.conj(p), -q], [-np.conj(q), p]], complex)
            rho = float(np.angle(w[k])) % (2 * math.pi)
            D = P @ A @ Pinv
            res = float(np.max(np.abs(D - np.diag([np.exp(1j * rho), np.exp(-1j * rho)]))))
            if res > 1e-8 * max(1.0, float(np.max(np.abs(A)))):
                raise NotElliptic(f"diagonalization residual {res:.3e}")
            return P, rho
    raise NotElliptic("no eigenvector with positive J-norm (parabolic or hyperbolic)")


# ---------------------------------------------------------------------------
# cocycles


@dataclass
class QpCocycle:
    """(alpha, A): alpha in cycles; A constant, FourierSeries, or callable.

    Callable maps must accept a batch of points with shape (m, d) and return
    (m, 2, 2).  ``halved`` marks maps on the doubled torus.
    """

    alpha: np.ndarray
    kind: str
    data: object
    halved: bool = False
    V: object = None
    E: float = None

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, float))

    @property
    def d(self):
        return self.alpha.size

    @property
    def step(self):
        return 2 * math.pi * self.alpha

    def matrix(self, theta):
        theta = np.atleast_1d(np.asarray(theta, float))
        return self.matrix_batch(theta[None, :])[0]

    def matrix_batch(self, thetas):
        thetas = np.asarray(thetas, float)
        if thetas.ndim == 1:
            thetas = thetas[:, None]
        if thetas.shape[1] != self.d:
            raise DomainMismatch(f"points have dimension {thetas.shape[1]}, cocycle d={self.d}")
        m = thetas.shape[0]
        if self.kind == "constant":
            return np.broadcast_to(self.data, (m, 2, 2)).copy()
        if self.kind == "series":
            return self.data.sample(thetas)
        return np.asarray(self.data(thetas))

    @staticmethod
    def constant(alpha, A):
        return QpCocycle(alpha=np.atleast_1d(np.asarray(alpha, float)),
                         kind="constant", data=np.asarray(A))


def schrodinger_cocycle(V, E, alpha=None):
    """Cocycle of the operator at energy E: A(theta) = [[E - V(theta), -1], [1, 0]].

    V may be None/0, a Potential, a scalar FourierSeries, or a callable
    returning values for a batch of points.  The frequency defaults to the
    label set's when V carries one.
    """
    if alpha is None and isinstance(V, Potential) and V.label_set is not None:
        alpha = V.label_set.frequency.floats()

    def v_values(thetas):
        if V is None:
            return np.zeros(thetas.shape[0])
        if isinstance(V, Potential):
            return V.sample(thetas if thetas.shape[1] > 1 else thetas[:, 0])
        if isinstance(V, FourierSeries):
            return V.sample(thetas, real=True)
        return np.asarray(V(thetas))

    def sampler(thetas):
        thetas = np.asarray(thetas, float)
        vals = v_values(thetas)
        m = thetas.shape[0]
        out = np.zeros((m, 2, 2))
        out[:, 0, 0] = E - vals
        out[:, 0, 1] = -1.0
        out[:, 1, 0] = 1.0
        return out

    if V is None or (np.isscalar(V) and V == 0):
        c = QpCocycle(alpha=np.zeros(1) if alpha is None else alpha, kind="constant",
                      data=np.array([[E, -1.0], [1.0, 0.0]]), V=None, E=E)
        return c
    return QpCocycle(alpha=np.zeros(1) if alpha is None else alpha, kind="callable",
                     data=sampler, V=V, E=E)


def with_frequency(c: QpCocycle, alpha):
    c.alpha = np.atleast_1d(np.asarray(alpha, float))
    return c


def transfer_product(c: QpCocycle, theta, n):
    """n-step transfer matrix: ordered product of cocycle maps along the orbit.

    n >= 0 multiplies A(theta + (n-1) step) ... A(theta); n < 0 uses the
    inverse-product convention, so S_{-n}(theta) = S_n(theta - n*step)^{-1}.
    """
    theta = np.atleast_1d(np.asarray(theta, float))
    step = c.step
    out = np.eye(2)
    if n >= 0:
        for k in range(n):
            out = c.matrix(theta + k * step) @ out
        return out
    for k in range(n, 0):
        A = c.matrix(theta + k * step)
        out = out @ np.linalg.inv(A)
    return out


def _inv2_batch(mats):
    det = mats[:, 0, 0] * mats[:, 1, 1] - mats[:, 0, 1] * mats[:, 1, 0]
    out = np.empty_like(mats)
    out[:, 0, 0] = mats[:, 1, 1]
    out[:, 1, 1] = mats[:, 0, 0]
    out[:, 0, 1] = -mats[:, 0, 1]
    out[:, 1, 0] = -mats[:, 1, 0]
    return out / det[:, None, None]


def conjugate(c: QpCocycle, Z, probes=16, tol=1e-8, seed=0):
    """Cocycle (alpha, Z(theta + step)^{-1} A(theta) Z(theta)).

    This is the fixed orientation for conjugations throughout the package;
    the opposite one corresponds to replacing Z by its inverse.  Z may be a
    matrix FourierSeries (possibly on the doubled torus) or a batch callable.
    """
    if isinstance(Z, FourierSeries):
        z_eval = lambda th: Z.sample(th)
        halved = Z.halved or c.halved
    else:
        z_eval = lambda th: np.asarray(Z(th))
        halved = c.halved
    rng = np.random.default_rng(seed)
    period = 2 * math.pi * (2.0 if halved else 1.0)
    pts = rng.uniform(0, period, size=(probes, c.d))
    dets = np.linalg.det(z_eval(pts))
    if np.min(np.abs(dets)) < tol:
        raise SingularConjugator(f"min |det Z| = {np.min(np.abs(dets)):.3e} at probes")

    step = c.step

    def sampler(thetas):
        thetas = np.asarray(thetas, float)
        Zs = z_eval(thetas)
        Zs_fwd = z_eval(thetas + step[None, :])
        A = c.matrix_batch(thetas)
        return np.einsum("mij,mjk,mkl->mil", _inv2_batch(Zs_fwd), A, Zs)

    return QpCocycle(alpha=c.alpha.copy(), kind="callable", data=sampler, halved=halved)


# ---------------------------------------------------------------------------
# rotation number and Lyapunov exponent


@dataclass
class RotationResult:
    rho: float
    iters: int
    samples: int
    dispersion: float
    converged: bool
    per_sample: np.ndarray = field(repr=False, default=None)

    @property
    def folded(self):
        """rho reported in [0, 1/2] using the orientation symmetry."""
        return min(self.rho, 1.0 - self.rho)


def _circular_mean(vals):
    z = np.mean(np.exp(2j * np.pi * np.asarray(vals)))
    return float(np.angle(z) / (2 * np.pi)) % 1.0


def _circular_spread(vals):
    vals = np.asarray(vals)
    worst = 0.0
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            d = abs(vals[i] - vals[j]) % 1.0
            worst = max(worst, min(d, 1.0 - d))
    return worst


def rotation_number(c: QpCocycle, iters=100_000, phase_samples=3, seed=0,
                    dispersion_bound=None, theta0=None):
    """Fibered rotation number by Birkhoff averaging of the projective lift.

    The lift increment is the principal angle advance of a tracked direction,
    so the result is defined mod 1; the dispersion across phase samples is the
    convergence certificate (``converged`` is False when it exceeds
    ``dispersion_bound``).  The cocycle map must be homotopic to the identity
    for the mod-1 class to be frequency-independent; Schrodinger cocycles are.
    """
    rng = np.random.default_rng(seed)
    period = 2 * math.pi * (2.0 if c.halved else 1.0)
    if theta0 is not None:
        thetas = np.atleast_2d(np.asarray(theta0, float)).copy()
        phase_samples = thetas.shape[0]
    else:
        thetas = rng.uniform(0, period, size=(phase_samples, c.d))
    psi = np.zeros(phase_samples)
    total = np.zeros(phase_samples)
    step = c.step

    structured = c.V is not None or (c.kind == "constant" and c.E is not None)
    if structured:
        # oscillation counting: the solution recursion changes sign twice per
        # projective turn, so the count is a branch-free lift of the rotation
        E = c.E
        V = c.V
        u_prev = np.full(phase_samples, 0.3)
        u_cur = np.ones(phase_samples)
        count = np.zeros(phase_samples)
        for k in range(iters):
            if V is None:
                vals = 0.0
            elif isinstance(V, Potential):
                vals = V.sample(thetas if c.d > 1 else thetas[:, 0])
            elif isinstance(V, FourierSeries):
                vals = V.sample(thetas, real=True)
            else:
                vals = np.asarray(V(thetas))
            u_next = (E - vals) * u_cur - u_prev
            count += (u_cur * u_next < 0) | (u_next == 0)
            u_prev, u_cur = u_cur, u_next
            if (k + 1) % 64 == 0:
                scale = np.maximum(np.abs(u_cur), np.abs(u_prev))
                scale = np.where(scale == 0, 1.0, scale)
                u_prev /= scale
                u_cur /= scale
            thetas = thetas + step[None, :]
        per = count / (2.0 * iters)
        rho = float(np.mean(per))
        disp = float(np.max(per) - np.min(per)) if phase_samples > 1 else 0.0
        bound = dispersion_bound if dispersion_bound is not None else math.inf
        return RotationResult(rho=rho, iters=iters, samples=phase_samples,
                              dispersion=disp, converged=disp <= bound,
                              per_sample=per)
    else:
        for _ in range(iters):
            A = c.matrix_batch(thetas)
            if np.iscomplexobj(A):
                A = A.real
            x, y = np.cos(psi), np.sin(psi)
            u1 = A[:, 0, 0] * x + A[:, 0, 1] * y
            u2 = A[:, 1, 0] * x + A[:, 1, 1] * y
            psi_new = np.arctan2(u2, u1)
            delta = (psi_new - psi + math.pi) % (2 * math.pi) - math.pi
            total += delta
            psi = psi_new
            thetas = thetas + step[None, :]

    per = (total / (2 * math.pi * iters)) % 1.0
    rho = _circular_mean(per)
    disp = _circular_spread(per) if phase_samples > 1 else 0.0
    bound = dispersion_bound if dispersion_bound is not None else math.inf
    return RotationResult(rho=rho, iters=iters, samples=phase_samples,
                          dispersion=disp, converged=disp <= bound, per_sample=per)


def lyapunov_exponent(c: QpCocycle, iters=50_000, phase_samples=3, seed=0,
                      renorm_every=16):
    """Top Lyapunov exponent by renormalized vector iteration (>= 0 for
    SL(2,R) cocycles up to statistical noise)."""
    rng = np.random.default_rng(seed)
    period = 2 * math.pi * (2.0 if c.halved else 1.0)
    thetas = rng.uniform(0, period, size=(phase_samples, c.d))
    v = np.tile(np.array([[1.0], [0.7]]).T, (phase_samples, 1))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    acc = np.zeros(phase_samples)
    step = c.step
    for k in range(iters):
        A = c.matrix_batch(thetas)
        if np.iscomplexobj(A):
            A = A.real
        v = np.einsum("mij,mj->mi", A, v)
        if (k + 1) % renorm_every == 0:
            nrm = np.linalg.norm(v, axis=1)
            acc += np.log(nrm)
            v /= nrm[:, None]
        thetas = thetas + step[None, :]
    nrm = np.linalg.norm(v, axis=1)
    acc += np.log(nrm)
    return float(np.mean(acc / iters))


# ---------------------------------------------------------------------------
# uniform hyperbolicity


@dataclass
class UhReport:
    verdict: str          # 'hyperbolic' | 'not' | 'inconclusive'
    margin: float
    sigma_min: float = None
    sigma_max: float = None
    cone_half_angle: float = None

    @property
    def hyperbolic(self):
        return self.verdict == "hyperbolic"


def _proj_angle(v):
    return np.arctan2(v[..., 1], v[..., 0]) % math.pi


def _proj_dist(a, b):
    d = np.abs(a - b) % math.pi
    return np.minimum(d, math.pi - d)


def uh_test(c: QpCocycle, horizon=256, grid=128):
    """Decide uniform hyperbolicity.

    Constant cocycles use the exact trace criterion (margin |tr| - 2).
    Otherwise a finite-window unstable direction field is built on a theta
    grid and a cone around it is checked for strict invariance under one
    cocycle step; projective maps of SL(2,R) send arcs to arcs, so checking
    the two cone edges and the center is exact for the sampled points.
    Returns 'inconclusive' when neither certificate fires.
    """
    if c.kind == "constant":
        tr = float(np.trace(np.asarray(c.data, complex)).real)
        margin = abs(tr) - 2.0
        return UhReport(verdict="hyperbolic" if margin > 0 else "not", margin=margin)

    period = 2 * math.pi * (2.0 if c.halved else 1.0)
    if c.d == 1:
        pts = np.linspace(0.0, period, grid, endpoint=False)[:, None]
    else:
        per_dim = max(4, int(round(grid ** (1.0 / c.d))))
        axes = [np.linspace(0.0, period, per_dim, endpoint=False)] * c.d
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
    step = c.step

    def window_products(base_pts, window):
        """Transfer matrices over `window` steps ending at each base point."""
        out = np.broadcast_to(np.eye(2), (base_pts.shape[0], 2, 2)).copy()
        for k in range(1, window + 1):
            A = c.matrix_batch(base_pts - k * step[None, :])
            if np.iscomplexobj(A):
                A = A.real
            out = np.einsum("mij,mjk->mik", out, A)
        return out

    def unstable_field(base_pts, window):
        prods = window_products(base_pts, window)
        U, S, _ = np.linalg.svd(prods)
        return U[:, :, 0], S[:, 0]

    u_full, s_full = unstable_field(pts, horizon)
    u_half, _ = unstable_field(pts, max(1, horizon // 2))
    smax, smin = float(np.max(s_full)), float(np.min(s_full))
    if smax < 2.0:
        return UhReport(verdict="not", margin=smax - 2.0,
                        sigma_min=smin, sigma_max=smax)

    stable_dirs = float(np.max(_proj_dist(_proj_angle(u_full), _proj_angle(u_half))))
    if stable_dirs > math.pi / 6:
        # finite-window unstable directions do not converge: no dominated
        # splitting at this horizon (elliptic behavior)
        return UhReport(verdict="not", margin=-stable_dirs,
                        sigma_min=smin, sigma_max=smax)

    # cone contraction is checked for the horizon-step block map: weakly
    # hyperbolic cocycles only contract cones over long blocks
    fwd = np.broadcast_to(np.eye(2), (pts.shape[0], 2, 2)).copy()
    for k in range(horizon):
        A = c.matrix_batch(pts + k * step[None, :])
        if np.iscomplexobj(A):
            A = A.real
        fwd = np.einsum("mij,mjk->mik", A, fwd)
    u_next, _ = unstable_field(pts + horizon * step[None, :], horizon)
    ang = _proj_angle(u_full)
    ang_next = _proj_angle(u_next)

    for phi in (math.pi / 8, math.pi / 16, math.pi / 32, math.pi / 64, math.pi / 256):
        worst = -math.inf
        ok = True
        for sgn in (-1.0, 0.0, 1.0):
            edge = ang + sgn * phi
            v = np.stack([np.cos(edge), np.sin(edge)], axis=1)
            img = np.einsum("mij,mj->mi", fwd, v)
            dist = _proj_dist(_proj_angle(img), ang_next)
            lim = phi / 2
            if np.max(dist) >= lim:
                ok = False
                break
            worst = max(worst, float(np.max(dist)))
        if ok and smin >= 2.0 and stable_dirs < phi:
            return UhReport(verdict="hyperbolic", margin=phi - worst,
                            sigma_min=smin, sigma_max=smax, cone_half_angle=phi)
    return UhReport(verdict="inconclusive", margin=0.0,
                    sigma_min=smin, sigma_max=smax)
