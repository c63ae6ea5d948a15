"""Where the energy goes: the discrete dissipation identity, mode by mode."""

import numpy as np

from piezomodal import DEFAULT_PARAMS, DEFAULT_PROFILE, Grid1D, PiezoSystem, quadratic_form_terms

# One system object holds the material constants, the damping strip d = 1 on
# (0.3, 0.7) and the x-grid. Operators for each transverse mode j are built on
# demand and cached.
system = PiezoSystem(DEFAULT_PARAMS, DEFAULT_PROFILE, Grid1D(64))
n = system.grid.n
rng = np.random.default_rng(0)

# For any complex state U = (v, z, p, q) the generator loses energy only
# through the damped velocity:  Re <A U, U>_M = -z* Dd z.
print(" j   Re(U*MAU)        -z*Dd z          relative gap")
for j in (0, 3, 10, 40):
    op = system.operator(j)
    U = rng.standard_normal(op.dim) + 1j * rng.standard_normal(op.dim)
    z = U[n : 2 * n]
    lhs = np.real(np.vdot(U, op.MA @ U))
    rhs = -np.real(np.vdot(z, system.mats.Dd @ z))
    gap = abs(lhs - rhs) / np.real(np.vdot(U, op.M @ U))
    print(f"{j:2d}  {lhs: .8e}  {rhs: .8e}  {gap:.1e}")

# The energy splits into four physical pieces: elastic (with the reduced
# stiffness alpha1), kinetic, electric and magnetic.
op = system.operator(0)
U = rng.standard_normal(op.dim)
terms = quadratic_form_terms(op, U)
for name, value in terms.items():
    print(f"{name:>9s}: {value:.6f}")
print(f"    total: {sum(terms.values()):.6f}   U'MU = {U @ (op.M @ U):.6f}")

# Turning the damping off leaves a purely skew generator.
free = PiezoSystem(DEFAULT_PARAMS, None, system.grid).operator(0)
print("undamped: max |Re(U*MAU)| =", abs(np.real(np.vdot(U, free.MA @ U))))
