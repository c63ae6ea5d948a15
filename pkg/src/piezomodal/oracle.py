r"""
Reference computations that do not go through the time stepper.

Undamped dispersion relation
----------------------------
With ``d = 0`` the fields ``v = V s(x, y) cos(omega t)``, ``p = P s(x, y) cos(omega t)``
with ``s = sin(eta_m x) sin(xi_j y)`` and ``eta_m = (2m + 1) pi / 2`` satisfy both
boundary conditions, and ``-Delta s = kappa^2 s`` with ``kappa^2 = xi_j^2 + eta_m^2``.
Substituting into the two field equations gives

.. math::

    (\alpha\kappa^2 - \rho\omega^2) V - \gamma\beta\kappa^2 P = 0, \qquad
    -\gamma\beta\kappa^2 V + (\beta\kappa^2 - \mu\omega^2) P = 0,

whose determinant is the quadratic in ``omega^2``

.. math::

    \rho\mu\,\omega^4 - (\rho\beta + \mu\alpha)\kappa^2\omega^2 + \beta\alpha_1\kappa^4 = 0,

using ``alpha beta - gamma^2 beta^2 = beta alpha1``. The discriminant
``(rho beta - mu alpha)^2 + 4 rho mu gamma^2 beta^2`` is nonnegative, and the
product of the roots ``beta alpha1 kappa^4 / (rho mu)`` is positive, so both
roots are positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .assembly import Grid1D, ModalOperator, build_matrices
from .errors import ConfigError, OverScaleLimit
from .model import PhysicalParams, xi

__all__ = [
    "DispersionRoots",
    "ConvergenceStudy",
    "undamped_frequencies",
    "dispersion_residual",
    "dense_expm_propagate",
    "convergence_study",
    "EXPM_DIM_CAP",
]

EXPM_DIM_CAP = 512
# scaling-and-squaring needs about log2(||At||_1) squarings; beyond this the
# reference is no better than the scheme it is meant to check
_EXPM_NORM_CAP = 2.0**40


@dataclass(frozen=True)
class DispersionRoots:
    j: int
    m: int
    kappa2: float
    omega_plus: float
    omega_minus: float

    @property
    def omega2(self) -> tuple[float, float]:
        return (self.omega_plus**2, self.omega_minus**2)


def undamped_frequencies(params: PhysicalParams, j: int, m: int) -> DispersionRoots:
    """Exact angular frequencies of the undamped product mode ``(j, m)``."""
    if j < 0 or m < 0:
        raise ConfigError("mode indices must be >= 0")
    kappa2 = xi(j) ** 2 + xi(m) ** 2
    a = params.rho * params.mu
    b = (params.rho * params.beta + params.mu * params.alpha) * kappa2
    c = params.beta * params.alpha1 * kappa2**2
    # discriminant in the cancellation-free form
    disc = ((params.rho * params.beta - params.mu * params.alpha) ** 2 + 4.0 * a * (params.gamma * params.beta) ** 2) * kappa2**2
    w_plus = (b + math.sqrt(disc)) / (2.0 * a)
    w_minus = c / (a * w_plus)  # Vieta, avoids cancellation
    return DispersionRoots(j=j, m=m, kappa2=kappa2, omega_plus=math.sqrt(w_plus), omega_minus=math.sqrt(w_minus))


def dispersion_residual(params: PhysicalParams, roots: DispersionRoots) -> tuple[float, float]:
    """Quartic evaluated at both roots, relative to ``rho mu kappa^4``."""
    k2 = roots.kappa2
    scale = params.rho * params.mu * k2**2
    out = []
    for w2 in roots.omega2:
        val = params.rho * params.mu * w2**2 - (params.rho * params.beta + params.mu * params.alpha) * k2 * w2 + params.beta * params.alpha1 * k2**2
        out.append(abs(val) / scale)
    return tuple(out)


def dense_expm_propagate(op: ModalOperator, U0: np.ndarray, t: float) -> np.ndarray:
    """``exp(t A_j) U0`` by scaling and squaring with a diagonal Pade kernel."""
    if op.dim > EXPM_DIM_CAP:
        raise ConfigError(f"dense exponential capped at 4n <= {EXPM_DIM_CAP}, got {op.dim}")
    U0 = np.asarray(U0)
    if t == 0:
        return U0.copy()
    At = op.A * float(t)
    if np.linalg.norm(At, 1) > _EXPM_NORM_CAP:
        raise OverScaleLimit(f"||A t||_1 = {np.linalg.norm(At, 1):.3e} exceeds {_EXPM_NORM_CAP:.1e}")
    return sla.expm(At) @ U0


@dataclass
class ConvergenceStudy:
    n_list: list[int]
    exact: float
    computed: np.ndarray
    errors: np.ndarray
    orders: np.ndarray

    @property
    def min_order(self) -> float:
        return float(np.min(self.orders))


def _undamped_branches(params: PhysicalParams, n: int, j: int) -> dict[str, np.ndarray]:
    """Positive discrete frequencies of the undamped mode ``j``, split by branch.

    The two families interleave once ``m`` grows, so sorting all frequencies
    together mislabels them. Each eigenvector is classified instead by the sign
    of ``Re <v, p>``: from the first field equation ``P/V`` has the sign of
    ``alpha kappa^2 - rho omega^2``, positive on the slow branch and negative on
    the fast one.
    """
    op = ModalOperator(params, build_matrices(Grid1D(n), None), j)
    W, _ = op.orthonormal_form
    # W is real skew: i W is Hermitian and W w = i omega w with omega = -eig(iW)
    vals, vecs = np.linalg.eigh(1j * W)
    omega = -vals
    keep = omega > 0
    U = sla.solve_triangular(op.energy_factor.T, vecs[:, keep], lower=False)
    v, p = U[:n], U[2 * n : 3 * n]
    corr = np.real(np.sum(np.conj(v) * p, axis=0))
    omega = omega[keep]
    return {
        "minus": np.sort(omega[corr > 0]),
        "plus": np.sort(omega[corr < 0]),
    }


def convergence_study(
    params: PhysicalParams,
    j: int,
    m: int,
    n_list,
    branch: str = "minus",
) -> ConvergenceStudy:
    """Discrete-vs-exact error of the undamped frequency ``omega_{+/-}(j, m)`` under
    grid refinement, with observed orders ``log(e_k / e_{k+1}) / log(n_{k+1} / n_k)``."""
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigError("n_list must be strictly increasing with at least 3 entries")
    if branch not in ("minus", "plus"):
        raise ConfigError(f"branch must be 'minus' or 'plus', got {branch!r}")
    if m >= n_list[0]:
        raise ConfigError(f"m={m} is not resolved by the coarsest grid n={n_list[0]}")
    roots = undamped_frequencies(params, j, m)
    exact = roots.omega_minus if branch == "minus" else roots.omega_plus
    if not exact > 0:
        raise ConfigError("reference frequency must be positive")
    computed = []
    for n in n_list:
        family = _undamped_branches(params, n, j)[branch]
        if family.size <= m:
            raise ConfigError(f"grid n={n} resolves only {family.size} {branch} frequencies")
        computed.append(family[m])
    computed = np.array(computed)
    errors = np.abs(computed - exact)
    ratios = np.log(errors[:-1] / errors[1:]) / np.log(np.array(n_list[1:]) / np.array(n_list[:-1]))
    return ConvergenceStudy(n_list=n_list, exact=exact, computed=computed, errors=errors, orders=ratios)
