"""End-to-end acceptance battery at full size.

Each test records one PASS/FAIL line (shown in the pytest terminal summary and
printed with ``-s``) and then asserts the criterion at its stated tolerance.
Expect a few minutes of runtime, dominated by the resolvent sweep and the
long decay run.
"""

import math

import numpy as np
import pytest

from piezomodal.analysis import decay_fit, log_lambda_grid, resolvent_sweep, spectral_report
from piezomodal.assembly import Grid1D, PiezoSystem
from piezomodal.dynamics import CayleyStepper, ModalState, energy_budget_residual, simulate, smooth_initial_state
from piezomodal.model import DEFAULT_PARAMS, DEFAULT_PROFILE
from piezomodal.oracle import convergence_study, dense_expm_propagate

N = 128
SEED = 20240611


def _record(lines, k, ok, text):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {text}"
    lines[k] = line
    print(line)


@pytest.fixture(scope="module")
def damped():
    return PiezoSystem(DEFAULT_PARAMS, DEFAULT_PROFILE, Grid1D(N))


@pytest.fixture(scope="module")
def spectra(damped):
    return spectral_report(damped, range(33), strict=False)


def test_criterion_1_dissipation_identity(damped, acceptance_lines):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for j in (0, 4, 16, 32):
        op = damped.operator(j)
        U = rng.standard_normal((op.dim, 100)) + 1j * rng.standard_normal((op.dim, 100))
        z = U[N : 2 * N]
        lhs = np.real(np.sum(U.conj() * (op.MA @ U), axis=0))
        rhs = np.real(np.sum(z.conj() * (damped.mats.Dd @ z), axis=0))
        scale = np.real(np.sum(U.conj() * (op.M @ U), axis=0))
        worst = max(worst, float(np.max(np.abs(lhs + rhs) / scale)))
    ok = worst <= 1e-12
    _record(acceptance_lines, 1, ok, f"max |Re(U*MAU) + z*Dd z| / U*MU = {worst:.2e} (tol 1e-12)")
    assert ok


def test_criterion_2_conservation(acceptance_lines):
    system = PiezoSystem(DEFAULT_PARAMS, None, Grid1D(N))
    series = simulate(system, smooth_initial_state(system.grid, 8), T=10.0, dt=1e-3, sample_every=1000)
    rel = abs(series.E[-1] - series.E[0]) / series.E[0]
    ok = rel <= 1e-9
    _record(acceptance_lines, 2, ok, f"|E(10) - E(0)| / E(0) = {rel:.2e} (tol 1e-9)")
    assert ok


def test_criterion_3_energy_budget(damped, acceptance_lines):
    series = simulate(damped, smooth_initial_state(damped.grid, 64), T=10.0, dt=1e-3, sample_every=1)
    assert len(series) == 10_001
    rel = energy_budget_residual(series) / series.E[0]
    ok = rel <= 1e-9
    _record(acceptance_lines, 3, ok, f"max |dE + dt P_mid| / E(0) over 1e4 steps = {rel:.2e} (tol 1e-9)")
    assert ok


def test_criterion_4_spectrum_left_of_axis(spectra, acceptance_lines):
    worst = float(spectra.abscissa.max())
    smallest = float(spectra.min_modulus.min())
    ok = worst < -1e-10 and smallest > 1e-8
    _record(acceptance_lines, 4, ok, f"max_j<=32 Re(sigma) = {worst:.3e} (< -1e-10), min |sigma| = {smallest:.3e}")
    assert ok


def test_criterion_5_oracle_equivalence(acceptance_lines):
    system = PiezoSystem(DEFAULT_PARAMS, DEFAULT_PROFILE, Grid1D(8))
    op = system.operator(0)
    stepper = CayleyStepper(system, 1, 1e-3)
    rng = np.random.default_rng(SEED)
    errs = []
    for _ in range(5):
        U0 = rng.standard_normal(op.dim)
        ref = dense_expm_propagate(op, U0, 1.0)
        x, y = stepper.pack(ModalState.from_modes([U0]))
        for _ in range(1000):
            x, y, _ = stepper.advance(x, y)
        d = stepper.unpack(x, y, 1.0).mode(0) - ref
        errs.append(math.sqrt(d @ (op.M @ d) / (ref @ (op.M @ ref))))
    traj = max(errs)
    order = min(
        convergence_study(DEFAULT_PARAMS, j, m, [16, 32, 64, 128], branch).min_order
        for j in (0, 4)
        for m in range(5)
        for branch in ("minus", "plus")
    )
    ok = traj <= 1e-6 and order >= 1.9
    _record(
        acceptance_lines,
        5,
        ok,
        f"trapezoid vs expm (n=8, t=1, dt=1e-3, 5 random vectors) rel err = {traj:.2e} (tol 1e-6); "
        f"min observed order = {order:.3f} (>= 1.9)",
    )
    assert order >= 1.9
    assert traj <= 1e-6


def test_criterion_6_resolvent_growth(damped, acceptance_lines):
    rep = resolvent_sweep(damped, log_lambda_grid(10.0, 1000.0, 13), method="iterative", strict=False)
    fit = rep.fit
    ok = 1.7 <= fit.exponent <= 2.3 and fit.r2 >= 0.95 and rep.audit_passed
    _record(
        acceptance_lines,
        6,
        ok,
        f"exponent = {fit.exponent:.3f} +- {fit.stderr:.3f} (band [1.7, 2.3]), R^2 = {fit.r2:.3f} (>= 0.95), "
        f"tail audit {'passed' if rep.audit_passed else 'failed'}, sup norm range [{rep.sup_norm.min():.1f}, {rep.sup_norm.max():.1f}]",
    )
    assert rep.audit_passed
    assert fit.r2 >= 0.95
    assert 1.7 <= fit.exponent <= 2.3


def test_criterion_7_polynomial_decay(damped, acceptance_lines):
    init = smooth_initial_state(damped.grid, 64)
    series = simulate(damped, init, T=100.0, dt=1e-3, sample_every=100)
    fit = decay_fit(series, window=(10.0, 100.0))
    mono = series.is_monotone()
    ok = fit.kappa >= 0.9 and mono
    onset = "none" if fit.tail_onset is None else f"t ~ {fit.tail_onset:g}"
    _record(
        acceptance_lines,
        7,
        ok,
        f"kappa = {fit.kappa:.3f} on [10, 100] (>= 0.9), monotone E: {mono}, "
        f"curvature flag: {fit.curvature_flag} (slope change {fit.slope_change:.2f}), tail onset {onset}",
    )
    assert mono
    assert fit.kappa >= 0.9


def test_criterion_8_nonuniform_witness(spectra, acceptance_lines):
    s = dict(zip(spectra.modes.tolist(), spectra.abscissa.tolist()))
    ok = abs(s[32]) < abs(s[4])
    _record(acceptance_lines, 8, ok, f"|s(32)| = {abs(s[32]):.5f} vs |s(4)| = {abs(s[4]):.5f} (need |s(32)| < |s(4)|)")
    assert ok
