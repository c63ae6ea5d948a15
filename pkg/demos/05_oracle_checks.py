"""Independent references: the undamped dispersion relation and the matrix exponential."""

import math

import numpy as np

from piezomodal import (
    DEFAULT_PARAMS,
    DEFAULT_PROFILE,
    CayleyStepper,
    Grid1D,
    ModalState,
    PiezoSystem,
    convergence_study,
    dense_expm_propagate,
    dispersion_residual,
    undamped_frequencies,
)

# Separable undamped modes sin(eta_m x) sin(xi_j y) oscillate at two
# frequencies per (j, m), the roots of a quadratic in omega^2.
for j, m in [(0, 0), (1, 0), (0, 3), (5, 5)]:
    r = undamped_frequencies(DEFAULT_PARAMS, j, m)
    res = max(dispersion_residual(DEFAULT_PARAMS, r))
    print(f"(j, m) = ({j}, {m}): omega- = {r.omega_minus:9.4f}, omega+ = {r.omega_plus:9.4f}, residual {res:.1e}")

# Linear elements give second-order frequency errors on both branches.
study = convergence_study(DEFAULT_PARAMS, 0, 2, [16, 32, 64, 128], branch="minus")
print("errors:", np.array2string(study.errors, precision=3), " orders:", np.round(study.orders, 3))

# Trapezoidal steps against exp(tA) on a small grid. The scheme is second
# order in dt, so the gap shrinks fourfold per halving. Its size depends on the
# frequencies present in the data: about t omega^3 dt^2 / 12.
system = PiezoSystem(DEFAULT_PARAMS, DEFAULT_PROFILE, Grid1D(8))
op = system.operator(0)
rng = np.random.default_rng(1)
ev, V = np.linalg.eig(op.A)
data = {
    "random vector": rng.standard_normal(op.dim),
    "slowest eigenmode": np.real(V[:, np.argmin(np.abs(ev))]),
}
print("largest |omega| on this grid:", f"{np.abs(ev.imag).max():.1f}")
for label, U0 in data.items():
    ref = dense_expm_propagate(op, U0, 1.0)
    for dt in (2e-3, 1e-3, 5e-4):
        stepper = CayleyStepper(system, 1, dt)
        x, y = stepper.pack(ModalState.from_modes([U0]))
        for _ in range(int(round(1.0 / dt))):
            x, y, _ = stepper.advance(x, y)
        d = stepper.unpack(x, y, 1.0).mode(0) - ref
        err = math.sqrt(d @ (op.M @ d) / (ref @ (op.M @ ref)))
        print(f"{label:>18s}  dt = {dt:.0e}  relative M-norm error {err:.2e}")
