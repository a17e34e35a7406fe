"""IDS, rotation curves, gap detection and labeling."""

import math

import numpy as np
import pytest

from qpsl.diophantine import dist_to_integers
from qpsl.fourier import amo_potential
from qpsl.spectrum import (
    detect_gaps,
    finite_ids,
    gap_bounds_check,
    ids_curve,
    rotation_curve,
)

GOLD = 0.6180339887498949


def test_finite_ids_extremes():
    assert finite_ids(None, [GOLD], [0.3], 100, -10.0) == 0.0
    assert finite_ids(None, [GOLD], [0.3], 100, 10.0) == 1.0


def test_finite_ids_free_half_filling():
    # free tridiagonal eigenvalues are 2 cos(k pi / (2N+2)): symmetric about 0
    N = 500
    val = finite_ids(None, [GOLD], [0.0], N, 0.0)
    assert abs(val - 0.5) <= 2.0 / N
    # closed-form oracle: exact count below E
    k = np.arange(1, 2 * N + 2)
    evals = 2 * np.cos(k * math.pi / (2 * N + 2))
    for E in (-1.0, -0.3, 0.7):
        expect = np.sum(evals < E) / (2 * N + 1)
        got = finite_ids(None, [GOLD], [0.0], N, E)
        assert abs(got - expect) <= 1.5 / N


def test_ids_curve_monotone():
    P = amo_potential(0.5)
    E = np.linspace(-3, 3, 41)
    curve = ids_curve(P, [GOLD], E, N=300, phases=3)
    assert curve.monotone()
    assert curve.values[0] == 0.0
    assert curve.values[-1] == 1.0


def test_rotation_curve_free():
    E = np.linspace(-1.9, 1.9, 21)
    curve = rotation_curve(None, [GOLD], E, iters=30_000, samples=2)
    expect = np.arccos(E / 2) / (2 * math.pi)
    assert np.max(np.abs(curve.rho - expect)) < 1e-3
    assert curve.monotone_nonincreasing(slack=1e-4)


def test_rotation_curve_flat_outside_hull():
    E = np.array([-5.0, 5.0])
    curve = rotation_curve(None, [GOLD], E, iters=5_000, samples=2)
    assert curve.rho[1] < 1e-3                   # rho ~ 0 above the hull
    assert abs(curve.rho[0] - 0.5) < 1e-3        # rho ~ 1/2 below


def test_ids_rotation_identity_amo():
    P = amo_potential(0.5)
    E = np.linspace(-3.2, 3.2, 41)
    rc = rotation_curve(P, [GOLD], E, iters=60_000, samples=3)
    ic = ids_curve(P, [GOLD], E, N=1200, phases=6)
    err = np.max(np.abs(ic.values - (1.0 - 2.0 * rc.rho)))
    assert err < 8e-3


def test_ids_fluctuation_decays_with_truncation():
    P = amo_potential(0.5)
    E = np.linspace(-2.5, 2.5, 11)
    spreads = []
    for N in (200, 800):
        vals = [np.asarray(finite_ids(P, [GOLD], [th], N, E))
                for th in (0.3, 1.7, 2.9, 4.1)]
        spreads.append(float(np.max(np.ptp(np.stack(vals), axis=0))))
    assert spreads[1] < spreads[0]


def test_detect_gaps_free_cocycle_none():
    E = np.linspace(-1.95, 1.95, 101)
    curve = rotation_curve(None, [GOLD], E, iters=20_000, samples=2)
    gaps = detect_gaps(curve, [GOLD], labels=[1, 2, 3], tol=5e-4)
    assert gaps == []


def test_detect_gaps_amo_label_one():
    P = amo_potential(0.5)
    E = np.linspace(-2.6, 2.6, 201)
    curve = rotation_curve(P, [GOLD], E, iters=40_000, samples=2, seed=3)

    def rho_fn(evals):
        return rotation_curve(P, [GOLD], evals, iters=40_000,
                              samples=2, seed=3).rho

    gaps = detect_gaps(curve, [GOLD], labels=[1, 2], tol=2e-3, rho_fn=rho_fn,
                       refine_bisections=10)
    g1 = next(g for g in gaps if abs(g.label[0]) == 1)
    assert g1.length > 0.05
    # the locked value is the distance of <n, alpha>/2 to the integers
    assert g1.rho_locked == pytest.approx(dist_to_integers(GOLD / 2), abs=1e-12)
    # cross-check the edges against an IDS plateau
    ic = ids_curve(P, [GOLD], np.linspace(g1.E_minus - 0.3, g1.E_plus + 0.3, 121),
                   N=2000, phases=4)
    inside = (ic.energies > g1.E_minus + 0.02) & (ic.energies < g1.E_plus - 0.02)
    plateau_vals = ic.values[inside]
    assert plateau_vals.max() - plateau_vals.min() < 5e-3


def test_gap_bounds_check_window():
    from qpsl.spectrum import GapRecord
    k, tau = 2.0, 1.5
    g = GapRecord(label=(16,), E_minus=0.0, E_plus=16.0 ** (-k), length=16.0 ** (-k),
                  rho_locked=0.3)
    rep = gap_bounds_check(g, k, tau)
    assert rep["r"] == pytest.approx(-k)
    lo, hi = rep["window"]
    assert lo == pytest.approx(-11 * k / 10 - 6 * tau)
    assert hi == pytest.approx(-9 * k / 10 + 56 * tau)
    assert rep["window_nonempty"]
    assert rep["inside"]
