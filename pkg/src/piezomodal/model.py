r"""
Physical model: material constants, the x-only damping coefficient and the
transverse sine basis.

The coupled system on the unit square is

.. math::

    \rho v_{tt} - \alpha \Delta v + \gamma\beta \Delta p + d(x) v_t = 0, \qquad
    \mu p_{tt} - \beta \Delta p + \gamma\beta \Delta v = 0,

with ``v = p = 0`` on ``{x=0} ∪ {y=0}`` and zero normal derivatives on
``{x=1} ∪ {y=1}``. Because ``d`` depends on ``x`` only, expanding in

.. math::

    e_j(y) = \sqrt{2} \sin(\xi_j y), \qquad \xi_j = (2j + 1)\pi / 2, \quad j \ge 0,

splits the problem into independent one-dimensional problems in ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonPositiveParameter, StiffnessBelowCoupling

__all__ = [
    "PhysicalParams",
    "DampingProfile",
    "ModeIndex",
    "DEFAULT_PARAMS",
    "DEFAULT_PROFILE",
    "validate_params",
    "xi",
    "basis",
    "basis_derivative",
    "damping_eval",
]


@dataclass(frozen=True)
class PhysicalParams:
    """Material constants of the beam.

    ``alpha1 = alpha - gamma**2 * beta`` is the effective elastic stiffness and
    must be positive. Construct through :func:`validate_params` or directly;
    both paths run the same checks.
    """

    rho: float
    alpha: float
    gamma: float
    mu: float
    beta: float
    alpha1: float = field(init=False)

    def __post_init__(self) -> None:
        for name in ("rho", "alpha", "gamma", "mu", "beta"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise NonPositiveParameter(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        for name in ("rho", "alpha", "mu", "beta"):
            if getattr(self, name) <= 0.0:
                raise NonPositiveParameter(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.gamma < 0.0:
            raise NonPositiveParameter(f"gamma must be >= 0, got {self.gamma!r}")
        coupling = self.gamma**2 * self.beta
        if self.alpha <= coupling:
            raise StiffnessBelowCoupling(
                f"alpha={self.alpha} must exceed gamma^2*beta={coupling}"
            )
        object.__setattr__(self, "alpha1", self.alpha - coupling)

    @property
    def max_slowness(self) -> float:
        """Largest of the two uncoupled inverse wave speeds."""
        return max(math.sqrt(self.rho / self.alpha1), math.sqrt(self.mu / self.beta))

    def as_dict(self) -> dict[str, float]:
        return {
            "rho": self.rho,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "mu": self.mu,
            "beta": self.beta,
        }


def validate_params(rho: float, alpha: float, gamma: float, mu: float, beta: float) -> PhysicalParams:
    """Check the five material constants and return them with ``alpha1`` filled in.

    Raises
    ------
    NonPositiveParameter
        If ``rho``, ``alpha``, ``mu`` or ``beta`` is not strictly positive, or
        ``gamma`` is negative.
    StiffnessBelowCoupling
        If ``alpha <= gamma**2 * beta``.
    """
    return PhysicalParams(rho, alpha, gamma, mu, beta)


DEFAULT_PARAMS = PhysicalParams(rho=1.0, alpha=2.0, gamma=0.5, mu=1.0, beta=1.0)


def xi(j):
    """Transverse frequency ``(2j + 1) * pi / 2``; accepts scalars or arrays."""
    j_arr = np.asarray(j)
    if np.any(j_arr < 0):
        raise ConfigError("mode index must be >= 0")
    out = (2 * j_arr + 1) * np.pi / 2
    return float(out) if out.ndim == 0 else out


def basis(j, y):
    """``e_j(y) = sqrt(2) sin(xi_j y)``; broadcasts over ``j`` and ``y``."""
    return np.sqrt(2.0) * np.sin(xi(j) * np.asarray(y, dtype=float))


def basis_derivative(j, y):
    return np.sqrt(2.0) * xi(j) * np.cos(xi(j) * np.asarray(y, dtype=float))


@dataclass(frozen=True)
class ModeIndex:
    j: int

    def __post_init__(self) -> None:
        if int(self.j) != self.j or self.j < 0:
            raise ConfigError(f"mode index must be a nonnegative integer, got {self.j!r}")

    @property
    def xi_j(self) -> float:
        return xi(self.j)


_SHAPES = ("indicator", "smooth-ramp")


@dataclass(frozen=True)
class DampingProfile:
    """Damping coefficient ``d(x)`` supported on ``(a, b)``.

    ``shape="indicator"`` is ``d0`` on ``(a, b)`` and zero elsewhere.
    ``shape="smooth-ramp"`` rises from 0 at ``a`` to ``d0`` at ``a + eps`` with the
    C1 cubic ``3s^2 - 2s^3`` and falls symmetrically inside ``b``.
    """

    a: float = 0.3
    b: float = 0.7
    d0: float = 1.0
    shape: str = "indicator"
    eps: float = 0.0

    def __post_init__(self) -> None:
        a, b, d0, eps = (float(self.a), float(self.b), float(self.d0), float(self.eps))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d0", d0)
        object.__setattr__(self, "eps", eps)
        if not 0.0 < a < b < 1.0:
            raise ConfigError(f"need 0 < a < b < 1, got a={a}, b={b}")
        if not d0 > 0.0:
            raise NonPositiveParameter(f"d0 must be > 0, got {d0}")
        if self.shape not in _SHAPES:
            raise ConfigError(f"shape must be one of {_SHAPES}, got {self.shape!r}")
        if self.shape == "indicator":
            if eps != 0.0:
                raise ConfigError("eps only applies to the smooth-ramp shape")
        elif not 0.0 < eps <= (b - a) / 2:
            raise ConfigError(f"smooth-ramp needs 0 < eps <= (b-a)/2, got eps={eps}")

    @property
    def d_max(self) -> float:
        return self.d0

    def breakpoints(self) -> tuple[float, ...]:
        """Points where ``d`` or one of its pieces changes formula."""
        if self.shape == "indicator":
            return (self.a, self.b)
        return (self.a, self.a + self.eps, self.b - self.eps, self.b)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > self.a) & (x < self.b)
        if self.shape == "indicator":
            out = np.where(inside, self.d0, 0.0)
        else:
            s = np.minimum((x - self.a) / self.eps, (self.b - x) / self.eps)
            s = np.clip(s, 0.0, 1.0)
            out = np.where(inside, self.d0 * s * s * (3.0 - 2.0 * s), 0.0)
        return float(out) if out.ndim == 0 else out

    def as_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "d0": self.d0, "shape": self.shape, "eps": self.eps}


def damping_eval(profile: DampingProfile | None, x):
    """Evaluate ``d(x)``; ``profile=None`` stands for the undamped system."""
    if profile is None:
        x = np.asarray(x, dtype=float)
        return 0.0 if x.ndim == 0 else np.zeros_like(x)
    return profile(x)


DEFAULT_PROFILE = DampingProfile(0.3, 0.7, 1.0)
