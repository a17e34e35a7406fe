"""KAM machinery: classification, homological solve, Newton removal, steps."""

import math

import numpy as np
import pytest

from qpsl.cocycle import (
    frame_rotation_su11,
    rot_su11,
    su11_element,
    su11_exp,
    to_su11,
)
from qpsl.diophantine import dist_to_integers
from qpsl.errors import SmallDivisor, StateInvalid, TargetNotLocked
from qpsl.fourier import FourierSeries
from qpsl.kam import (
    KamParams,
    KamState,
    ModeRule,
    Su11Series,
    classify_resonance,
    compute_diagnostics,
    divisor_u,
    divisor_w,
    kam_step,
    remove_nonresonant,
    run_reducibility,
    solve_homological,
)

GOLD = 0.6180339887498949


def _params(**kw):
    defaults = dict(gamma=0.5, tau=1.5, k_exponent=2.0, schedule=None,
                    max_degree=96, grid_size=1024, window_cap=24,
                    conj_residual_tol=1e-9, seed=0)
    defaults.update(kw)
    return KamParams(**defaults)


def _random_su11_series(rng, degree=8, modes=10, amp=1e-3, nonzero_only=False):
    F = Su11Series.zero(1)
    for _ in range(modes):
        n = int(rng.integers(-degree, degree + 1))
        if not (nonzero_only and n == 0):
            F.w[(n,)] = amp * (rng.normal() + 1j * rng.normal())
        m = int(rng.integers(-degree, degree + 1))
        if nonzero_only and m == 0:
            m = 1
        c = amp * (rng.normal() + 1j * rng.normal())
        F.u[(m,)] = F.u[(m,)] + c
        F.u[(-m,)] = F.u[(-m,)] + np.conj(c)
    return F


def _state(A, f, params, pending=(), alpha=GOLD):
    from qpsl.cocycle import to_su11 as _t
    W_mat = to_su11(np.array([[0.0, 0.0], [1.0, 0.0]]))
    W0 = Su11Series.constant(1, W_mat[0, 0].imag, W_mat[0, 1])
    ident = FourierSeries(1, halved=True, kind="matrix")
    ident[(0,)] = np.eye(2, dtype=complex)
    return KamState(j=0, A=A, f=f, pending=list(pending), W=W0,
                    D=ident.copy(), Dinv=ident.copy(),
                    alpha=np.array([alpha]), n_tilde=(0,),
                    sigma0=float(np.linalg.norm(A, 2)))


# ---------------------------------------------------------------------------
# classification


def test_classify_nr_at_zero_rho():
    cls = classify_resonance(0.0, [GOLD], N=10, threshold=0.01)
    assert cls.case == "NR"


def test_classify_rs_quarter():
    cls = classify_resonance(0.25, [GOLD], N=10, threshold=0.05)
    assert cls.case == "RS"
    assert cls.site == (4,)
    expected = dist_to_integers(0.5 - 4 * GOLD)
    assert cls.distance == pytest.approx(expected, abs=1e-12)
    assert abs(cls.distance - 0.028) < 1e-3


def test_classify_nr_tight_threshold():
    cls = classify_resonance(0.25, [GOLD], N=10, threshold=0.02)
    assert cls.case == "NR"


def test_classify_from_matrix():
    A = np.diag([np.exp(2j * np.pi * 0.25), np.exp(-2j * np.pi * 0.25)])
    cls = classify_resonance(A, [GOLD], N=10, threshold=0.05)
    assert cls.case == "RS"
    assert abs(cls.site[0]) == 4


# ---------------------------------------------------------------------------
# homological equation


def test_solve_homological_zero():
    Y = solve_homological(np.diag([np.exp(0.4j), np.exp(-0.4j)]),
                          Su11Series.zero(1), [GOLD])
    assert Y.is_zero()


def test_solve_homological_single_mode_oracle():
    sigma = 0.13
    A = np.diag([np.exp(2j * np.pi * sigma), np.exp(-2j * np.pi * sigma)])
    F = Su11Series.zero(1)
    w = 0.7 - 0.2j
    F.w[(5,)] = w
    Y = solve_homological(A, F, [GOLD])
    expected = -w / (np.exp(2j * np.pi * (5 * GOLD - 2 * sigma)) - 1)
    assert Y.w[(5,)] == pytest.approx(expected, abs=1e-14)


def test_solve_homological_random_residual_and_oracle():
    rng = np.random.default_rng(0)
    sigma = 0.205
    theta = 2 * math.pi * sigma
    A = np.diag([np.exp(1j * theta), np.exp(-1j * theta)])
    pts = np.linspace(0, 2 * math.pi, 256, endpoint=False)[:, None]
    for _ in range(100):
        F = _random_su11_series(rng, degree=50, modes=12, amp=1.0, nonzero_only=True)
        Y = solve_homological(A, F, [GOLD])
        # coefficientwise independent per-mode formula
        for n, v in F.u.coeffs.items():
            assert abs(Y.u[n] + v / divisor_u(n, [GOLD])) < 1e-12 * max(1, abs(v))
        for n, v in F.w.coeffs.items():
            assert abs(Y.w[n] + v / divisor_w(n, [GOLD], sigma)) < 1e-12 * max(1, abs(v))
        # functional residual on a grid
        lhs = (np.einsum("ij,mjk,kl->mil", np.linalg.inv(A),
                         Y.sample(pts + 2 * math.pi * GOLD), A)
               - Y.sample(pts))
        rhs = -F.sample(pts)
        err = np.max(np.abs(lhs - rhs))
        assert err <= 1e-10 * max(1.0, F.norm(0.0))


def test_solve_homological_small_divisor_raised():
    sigma = dist_to_integers(8 * GOLD) / 2  # resonance at n=8 by construction
    A = np.diag([np.exp(2j * np.pi * (4 * GOLD % 1)), 0]).astype(complex)
    A[1, 1] = np.conj(A[0, 0])
    F = Su11Series.zero(1)
    F.w[(8,)] = 1.0
    with pytest.raises(SmallDivisor):
        solve_homological(A, F, [GOLD], floor=1e-2)


# ---------------------------------------------------------------------------
# Newton removal


def test_remove_nonresonant_zero():
    A = to_su11(np.array([[2 * math.cos(2 * math.pi * 0.15), -1.0], [1.0, 0.0]]))
    Y, F_star, rep = remove_nonresonant(A, Su11Series.zero(1), 1e-9, 0.05,
                                        [GOLD], params=_params())
    assert Y.is_zero(1e-300)
    assert F_star.is_zero(1e-300)


def test_remove_nonresonant_residual_random():
    rng = np.random.default_rng(1)
    params = _params()
    A = np.diag([np.exp(2j * np.pi * 0.85), np.exp(-2j * np.pi * 0.85)])
    for _ in range(5):
        F = _random_su11_series(rng, degree=50, modes=8, amp=2e-4)
        rule = ModeRule(alpha=np.array([GOLD]), sigma=0.85, window=56,
                        diag_floor=1e-4, off_floor=1e-4, keep_w_mean=True)
        Y, F_star, rep = remove_nonresonant(A, F, 1e-9, 0.02, [GOLD], rule=rule,
                                            params=_params(max_degree=320,
                                                           grid_size=2048,
                                                           window_cap=56))
        assert rep["residual"] <= 1e-10
        # the non-resonant content of F_star is gone
        nre, _ = rule.split(F_star)
        assert nre.norm(0.02) < 1e-11


def test_remove_nonresonant_quadratic_contraction():
    # acceptance-style: contraction exponent over an amplitude sweep
    rng = np.random.default_rng(2)
    A = np.diag([np.exp(2j * np.pi * 0.85), np.exp(-2j * np.pi * 0.85)])
    base = _random_su11_series(rng, degree=12, modes=6, amp=1.0)
    exponents = []
    for amp in np.geomspace(1e-5, 1e-3, 5):
        F = base.scale(amp)
        Y, F_star, rep = remove_nonresonant(A, F, 1e-9, 0.02, [GOLD],
                                            params=_params())
        s = rep["sweeps"]
        assert len(s) >= 2
        if s[1] > 0:
            exponents.append(math.log(s[1]) / math.log(s[0]))
    assert exponents and min(exponents) >= 1.5


def test_remove_nonresonant_single_mode_second_order():
    # after one sweep the non-resonant residual is O(|F|^2): the ratio
    # |F_1^{nre}| / |F_0^{nre}|^2 stays below a uniform constant on a sweep
    # spanning two decades (here it even contracts cubically)
    A = np.diag([np.exp(2j * np.pi * 0.85), np.exp(-2j * np.pi * 0.85)])
    ratios = []
    for amp in np.geomspace(1e-5, 1e-3, 5):
        F = Su11Series.zero(1)
        F.w[(3,)] = amp
        _, _, rep = remove_nonresonant(A, F, 1e-9, 0.02, [GOLD], params=_params())
        s = rep["sweeps"]
        if len(s) >= 2 and s[1] > 0:
            ratios.append(s[1] / s[0] ** 2)
    assert ratios
    assert max(ratios) <= 1.0


# ---------------------------------------------------------------------------
# one step


def test_kam_step_trivial():
    params = _params()
    A = to_su11(np.array([[2 * math.cos(2 * math.pi * 0.17), -1.0], [1.0, 0.0]]))
    st = _state(A, Su11Series.zero(1), params)
    new, rep = kam_step(st, params)
    assert rep.case == "trivial"
    assert np.allclose(new.A, A)
    assert new.stopped


def test_kam_step_nr_synthetic():
    # 2 sigma = 0.309 maximizes the distance to every <n, alpha> with |n| <= 24
    params = _params()
    A = np.diag([np.exp(2j * np.pi * 0.1545), np.exp(-2j * np.pi * 0.1545)])
    f = Su11Series.zero(1)
    f.w[(3,)] = 2e-6
    f.u[(2,)] = 1e-6
    f.u[(-2,)] = 1e-6
    st = _state(A, f, params)
    new, rep = kam_step(st, params)
    assert rep.case == "NR"
    assert rep.residual < 1e-9
    assert rep.norm_after < 1e-2 * rep.norm_before
    # constant part moved only slightly
    assert np.max(np.abs(new.A - A)) < 5e-6


def test_kam_step_rs_synthetic():
    params = _params()
    offset = 1e-5
    sigma = (4 * GOLD / 2 + offset) % 1.0
    theta = 2 * math.pi * sigma
    A = np.diag([np.exp(1j * theta), np.exp(-1j * theta)])
    f = Su11Series.zero(1)
    f.w[(1,)] = 1e-4
    f.w[(4,)] = 2e-4
    st = _state(A, f, params)
    new, rep = kam_step(st, params)
    assert rep.case == "RS"
    assert rep.site == (4,)
    assert rep.residual < 1e-9
    assert new.n_tilde == (4,)
    # the new constant rotates by at most twice the classification threshold
    thr = min(params.threshold(0), 1.0)
    sig_next = frame_rotation_su11(new.A)
    assert min(sig_next, 1 - sig_next) <= 2 * max(thr, offset * 2)


def test_kam_step_rejects_nonelliptic_with_large_perturbation():
    params = _params()
    A = to_su11(np.diag([1.5, 1 / 1.5]))
    f = Su11Series.zero(1)
    f.w[(2,)] = 1e-3
    st = _state(A, f, params)
    with pytest.raises(StateInvalid):
        kam_step(st, params)


# ---------------------------------------------------------------------------
# diagnostics


def test_compute_diagnostics_constant():
    W = Su11Series.constant(1, 0.4, 0.3 - 0.1j)
    out = compute_diagnostics(W, (0,), h=0.1)
    b = abs(0.3 - 0.1j)
    assert out["xi"] == pytest.approx(b)
    assert out["M"] == pytest.approx(b + 0.4)
    assert out["m"] == pytest.approx(0.5 * (b + 0.4))


def test_compute_diagnostics_zero():
    W = Su11Series.zero(1)
    out = compute_diagnostics(W, (0,), h=0.1)
    assert out["xi"] == 0 and out["M"] == 0 and out["m"] == 0


def test_compute_diagnostics_m_monotone_in_ntilde():
    rng = np.random.default_rng(3)
    W = _random_su11_series(rng, degree=6, modes=8, amp=1.0)
    prev = math.inf
    for nt in (0, 2, 5, 9):
        out = compute_diagnostics(W, (nt,), h=0.0)
        assert out["m"] <= prev + 1e-15
        prev = out["m"]


# ---------------------------------------------------------------------------
# full pipeline, constant cases


def test_run_reducibility_free_cocycle_edge():
    res = run_reducibility(None, [GOLD], {"energy": 2.0}, params=_params())
    assert abs(res.zeta) == pytest.approx(2.0, abs=1e-9)
    assert res.conj_residual < 1e-9
    assert res.zeta < 0  # bottom edge of the upper infinite gap
    assert res.label == (0,)


def test_run_reducibility_free_cocycle_lower_edge_sign():
    res = run_reducibility(None, [GOLD], {"energy": -2.0}, params=_params())
    assert abs(res.zeta) == pytest.approx(2.0, abs=1e-9)
    assert res.zeta > 0  # top edge of the lower infinite gap


def test_run_reducibility_interior_not_locked():
    with pytest.raises(TargetNotLocked):
        run_reducibility(None, [GOLD], {"energy": 0.77}, params=_params())


def test_classify_and_solve_d2():
    alpha = np.array([GOLD, math.sqrt(2) - 1])
    # resonance planted at n = (3, -2)
    rho = float(np.dot((3, -2), alpha)) / 2 % 1.0
    cls = classify_resonance(rho, alpha, N=5, threshold=1e-6)
    assert cls.case == "RS"
    assert cls.site == (3, -2)
    # homological solve and functional residual on a 2-torus grid
    sigma = 0.21
    A = np.diag([np.exp(2j * np.pi * sigma), np.exp(-2j * np.pi * sigma)])
    F = Su11Series.zero(2)
    F.w[(2, 1)] = 0.3 - 0.1j
    F.u[(1, -1)] = 0.2 + 0.05j
    F.u[(-1, 1)] = 0.2 - 0.05j
    Y = solve_homological(A, F, alpha)
    g = np.linspace(0, 2 * math.pi, 24, endpoint=False)
    mesh = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    lhs = (np.einsum("ij,mjk,kl->mil", np.linalg.inv(A),
                     Y.sample(mesh + 2 * math.pi * alpha), A) - Y.sample(mesh))
    assert np.max(np.abs(lhs + F.sample(mesh))) < 1e-11


def test_remove_nonresonant_d2():
    alpha = np.array([GOLD, math.sqrt(2) - 1])
    sigma = 0.205
    A = np.diag([np.exp(2j * np.pi * sigma), np.exp(-2j * np.pi * sigma)])
    F = Su11Series.zero(2)
    F.w[(2, 1)] = 2e-4
    F.u[(1, -1)] = 1e-4
    F.u[(-1, 1)] = 1e-4
    params = _params(max_degree=12, grid_size=4096, window_cap=6)
    Y, F_star, rep = remove_nonresonant(A, F, 1e-9, 0.05, alpha, params=params)
    assert rep["residual"] < 1e-10


def test_kam_step_deterministic():
    params = _params()
    offset = 1e-5
    sigma = (4 * GOLD / 2 + offset) % 1.0
    A = np.diag([np.exp(2j * np.pi * sigma), np.exp(-2j * np.pi * sigma)])

    def run_once():
        f = Su11Series.zero(1)
        f.w[(1,)] = 1e-4
        f.w[(4,)] = 2e-4
        st = _state(A, f, params)
        return kam_step(st, params)[1]

    r1, r2 = run_once(), run_once()
    assert r1.as_dict() == r2.as_dict()
