import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from piezomodal.assembly import Grid1D, PiezoSystem
from piezomodal.dynamics import (
    CayleyStepper,
    EnergySample,
    ModalState,
    SimulationSeries,
    energy_budget_residual,
    modal_energy,
    project_initial,
    reconstruct_field,
    simulate,
    smooth_initial_state,
    step,
)
from piezomodal.errors import ConfigError, DimensionMismatch, QuadratureUnderResolved
from piezomodal.model import DEFAULT_PARAMS, DEFAULT_PROFILE, basis, xi
from piezomodal.oracle import dense_expm_propagate


@pytest.fixture(scope="module")
def damped():
    return PiezoSystem(DEFAULT_PARAMS, DEFAULT_PROFILE, Grid1D(12))


@pytest.fixture(scope="module")
def undamped():
    return PiezoSystem(DEFAULT_PARAMS, None, Grid1D(12))


def _random_state(rng, J, n):
    return ModalState(*(rng.standard_normal((J, n)) for _ in range(4)))


def test_modal_state_shapes():
    s = ModalState.zeros(3, 5)
    assert (s.J, s.n) == (3, 5)
    assert s.mode(1).shape == (20,)
    assert s.as_matrix().shape == (3, 20)
    back = ModalState.from_modes(s.as_matrix())
    np.testing.assert_array_equal(back.as_matrix(), s.as_matrix())
    with pytest.raises(DimensionMismatch):
        ModalState(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 4)), np.zeros((2, 3)))
    with pytest.raises(DimensionMismatch):
        ModalState.from_modes([np.zeros(7)])


def test_step_matches_dense_cayley(damped):
    dt = 0.01
    rng = np.random.default_rng(1)
    state = _random_state(rng, 3, damped.grid.n)
    new = CayleyStepper(damped, 3, dt).step(state)
    for j in range(3):
        A = damped.operator(j).A
        I = np.eye(A.shape[0])
        ref = np.linalg.solve(I - 0.5 * dt * A, (I + 0.5 * dt * A) @ state.mode(j))
        np.testing.assert_allclose(new.mode(j), ref, atol=1e-11 * np.abs(ref).max())
    assert new.t == pytest.approx(dt)


@given(seed=st.integers(0, 2**32 - 1), dt=st.floats(1e-4, 0.5))
def test_discrete_budget_exact(seed, dt):
    system = PiezoSystem(DEFAULT_PARAMS, DEFAULT_PROFILE, Grid1D(8))
    st_ = CayleyStepper(system, 4, dt)
    x, y = st_.pack(_random_state(np.random.default_rng(seed), 4, 8))
    e0 = st_.packed_energy(x, y)
    x1, y1, y_mid = st_.advance(x, y)
    e1 = st_.packed_energy(x1, y1)
    assert abs(e1 - e0 + dt * st_.packed_power(y_mid)) <= 1e-11 * e0
    np.testing.assert_allclose(y_mid, 0.5 * (y + y1), atol=1e-12 * np.abs(y_mid).max())


@given(seed=st.integers(0, 2**32 - 1))
def test_undamped_step_conserves(seed):
    system = PiezoSystem(DEFAULT_PARAMS, None, Grid1D(8))
    st_ = CayleyStepper(system, 3, 0.05)
    state = _random_state(np.random.default_rng(seed), 3, 8)
    assert st_.energy(st_.step(state)) == pytest.approx(st_.energy(state), rel=1e-12)


def test_modal_energy_independent_path(damped):
    state = _random_state(np.random.default_rng(3), 5, damped.grid.n)
    per_mode = modal_energy(damped, state)
    assert per_mode.shape == (5,)
    assert per_mode.sum() == pytest.approx(CayleyStepper(damped, 5, 0.1).energy(state), rel=1e-12)
    for j in range(5):
        U = state.mode(j)
        assert per_mode[j] == pytest.approx(0.5 * U @ (damped.operator(j).M @ U), rel=1e-12)


def test_power_is_damped_kinetic(damped):
    state = _random_state(np.random.default_rng(4), 2, damped.grid.n)
    z = state.z
    expected = sum(z[j] @ (damped.mats.Dd @ z[j]) for j in range(2))
    assert CayleyStepper(damped, 2, 0.1).power(state) == pytest.approx(expected, rel=1e-12)


def test_simulate_monotone_and_budget(damped):
    init = smooth_initial_state(damped.grid, 6)
    series = simulate(damped, init, T=2.0, dt=1e-2, sample_every=1)
    assert series.is_monotone()
    assert energy_budget_residual(series) <= 1e-12 * series.E[0]
    assert series.E[-1] < series.E[0]
    assert series.metadata["steps"] == 200


def test_simulate_conserves_undamped(undamped):
    init = smooth_initial_state(undamped.grid, 4)
    series = simulate(undamped, init, T=1.0, dt=1e-2, sample_every=10)
    assert np.max(np.abs(series.E - series.E[0])) <= 1e-12 * series.E[0]
    np.testing.assert_array_equal(series.P, 0.0)


def test_sample_count_includes_start_and_end(damped):
    init = smooth_initial_state(damped.grid, 2)
    series = simulate(damped, init, T=1.0, dt=0.1, sample_every=3)
    np.testing.assert_allclose(series.t, [0.0, 0.3, 0.6, 0.9, 1.0])
    assert len(series.samples) == 5
    assert isinstance(series.samples[0], EnergySample)
    assert series.samples[0].t == 0.0


def test_simulate_rejects_bad_input(damped):
    init = smooth_initial_state(damped.grid, 2)
    with pytest.raises(ConfigError):
        simulate(damped, init, T=0.0, dt=0.1)
    with pytest.raises(ConfigError):
        simulate(damped, init, T=1.0, dt=0.1, sample_every=0)
    with pytest.raises(ConfigError):
        CayleyStepper(damped, 2, -1.0)
    with pytest.raises(DimensionMismatch):
        simulate(damped, ModalState.zeros(2, 5), T=1.0, dt=0.1)


def test_snapshots(damped, tmp_path):
    init = smooth_initial_state(damped.grid, 2)
    series = simulate(damped, init, T=0.5, dt=0.1, snapshot_times=(0.0, 0.3))
    assert sorted(series.snapshots) == pytest.approx([0.0, 0.3])
    paths = series.write_snapshots(tmp_path)
    assert len(paths) == 2 and all(p.exists() for p in paths)


def test_step_function_uses_cache(damped):
    state = smooth_initial_state(damped.grid, 3)
    a = step(damped, state, 0.05)
    b = CayleyStepper(damped, 3, 0.05).step(state)
    np.testing.assert_array_equal(a.as_matrix(), b.as_matrix())


def test_csv_roundtrip(tmp_path, damped):
    series = simulate(damped, smooth_initial_state(damped.grid, 2), T=0.3, dt=0.1)
    path = series.to_csv(tmp_path / "s.csv")
    assert path.read_text().splitlines()[0] == "t,E,P"
    back = SimulationSeries.from_csv(path)
    np.testing.assert_array_equal(back.E, series.E)
    np.testing.assert_array_equal(back.t, series.t)
    with pytest.raises(ConfigError):
        energy_budget_residual(back)
    bad = tmp_path / "bad.csv"
    bad.write_text("time,energy\n0,1\n")
    with pytest.raises(ConfigError):
        SimulationSeries.from_csv(bad)


def test_determinism(damped):
    init = smooth_initial_state(damped.grid, 4)
    a = simulate(damped, init, T=0.5, dt=0.01)
    b = simulate(damped, init, T=0.5, dt=0.01)
    np.testing.assert_array_equal(a.E, b.E)
    np.testing.assert_array_equal(a.P, b.P)


def test_second_order_in_dt():
    system = PiezoSystem(DEFAULT_PARAMS, DEFAULT_PROFILE, Grid1D(8))
    op = system.operator(0)
    U0 = np.random.default_rng(7).standard_normal(op.dim)
    ref = dense_expm_propagate(op, U0, 1.0)
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        x, y = CayleyStepper(system, 1, dt).pack(ModalState.from_modes([U0]))
        st_ = CayleyStepper(system, 1, dt)
        for _ in range(int(round(1 / dt))):
            x, y, _ = st_.advance(x, y)
        d = st_.unpack(x, y, 1.0).mode(0) - ref
        errs.append(math.sqrt(d @ (op.M @ d)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_project_initial_recovers_single_mode():
    g = Grid1D(10)
    f = lambda x: x * (2 - x)
    state = project_initial(
        lambda x, y: f(x) * basis(2, y),
        lambda x, y: 0.0 * x * y,
        lambda x, y: np.sin(np.pi * x / 2) * basis(0, y),
        lambda x, y: 0.0 * x * y,
        g,
        J=4,
        K_y=4096,
    )
    np.testing.assert_allclose(state.v[2], f(g.unknowns), atol=1e-6)
    np.testing.assert_allclose(state.v[[0, 1, 3]], 0.0, atol=1e-6)
    np.testing.assert_allclose(state.p[0], np.sin(np.pi * g.unknowns / 2), atol=1e-6)
    np.testing.assert_allclose(state.z, 0.0)


def test_project_initial_underresolved():
    g = Grid1D(4)
    zero = lambda x, y: 0.0 * x * y
    with pytest.raises(QuadratureUnderResolved):
        project_initial(zero, zero, zero, zero, g, J=64, K_y=100)


def test_smooth_initial_state_coefficients():
    g = Grid1D(8)
    s = smooth_initial_state(g, 5, exponent=2.0)
    ratio = s.v[:, -1] / s.v[0, -1]
    np.testing.assert_allclose(ratio, ((1 + xi(0)) / (1 + xi(np.arange(5)))) ** 2)
    np.testing.assert_array_equal(s.q, 0.0)
    with pytest.raises(ConfigError):
        smooth_initial_state(g, 0)


def test_reconstruct_field():
    g = Grid1D(6)
    s = smooth_initial_state(g, 3)
    x, y, v, p = reconstruct_field(s, np.linspace(0, 1, 5))
    assert v.shape == (7, 5) and p.shape == (7, 5)
    np.testing.assert_array_equal(v[0], 0.0)
    np.testing.assert_allclose(v[1:, 2], s.v.T @ basis(np.arange(3), 0.5))
    with pytest.raises(ConfigError):
        reconstruct_field(s, [1.5])
