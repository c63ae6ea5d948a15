r"""
Time integration of the modal system with the trapezoidal (Cayley) rule.

Each step solves ``(I - dt/2 A_j) U_new = (I + dt/2 A_j) U_old`` for every mode.
With ``tau = dt/2`` and the velocity updates ``z_new = (v_new - v_old)/tau - z_old``
(likewise for ``q``) substituted, the step reduces to the symmetric positive
definite system

.. math::

    \begin{pmatrix} \rho Q + \tau D_d + \tau^2 \alpha S & -\tau^2\gamma\beta S \\
    -\tau^2\gamma\beta S & \mu Q + \tau^2 \beta S \end{pmatrix}
    \begin{pmatrix} v \\ p \end{pmatrix}_{new} = \text{rhs},

which is banded (half-bandwidth 3) once ``v`` and ``p`` are interleaved per
node. All modes are stacked into one banded Cholesky factorization computed
once per ``(system, J, dt)``.

The scheme satisfies, exactly in exact arithmetic,

.. math::

    E^{k+1} - E^k = -dt\, \bar z^\top D_d \bar z, \qquad \bar z = (z^{k+1} + z^k)/2,

with ``E = 1/2 U^T M U`` summed over modes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import trapezoid

from .assembly import Grid1D, PiezoSystem, write_coordinate
from .errors import ConfigError, DimensionMismatch, LinearSolveFailure, QuadratureUnderResolved
from .model import basis, xi

__all__ = [
    "ModalState",
    "EnergySample",
    "SimulationSeries",
    "CayleyStepper",
    "project_initial",
    "smooth_initial_state",
    "modal_energy",
    "step",
    "simulate",
    "energy_budget_residual",
    "reconstruct_field",
]


@dataclass
class ModalState:
    """Nodal coefficients of ``(v, z, p, q)`` for modes ``0 .. J-1``.

    Every field is an array of shape ``(J, n)``; row ``j`` holds the values of the
    ``j``-th transverse coefficient at the unknown nodes ``x_1 .. x_n``.
    """

    v: np.ndarray
    z: np.ndarray
    p: np.ndarray
    q: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        shapes = {np.shape(a) for a in (self.v, self.z, self.p, self.q)}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2:
            raise DimensionMismatch(f"fields must share one (J, n) shape, got {shapes}")

    @property
    def J(self) -> int:
        return self.v.shape[0]

    @property
    def n(self) -> int:
        return self.v.shape[1]

    def mode(self, j: int) -> np.ndarray:
        """Stacked vector ``[v_j, z_j, p_j, q_j]`` of length ``4n``."""
        return np.concatenate([self.v[j], self.z[j], self.p[j], self.q[j]])

    @classmethod
    def from_modes(cls, vectors: Sequence[np.ndarray], t: float = 0.0) -> "ModalState":
        U = np.asarray(vectors)
        if U.ndim != 2 or U.shape[1] % 4:
            raise DimensionMismatch("each modal vector must have length 4n")
        n = U.shape[1] // 4
        return cls(U[:, :n].copy(), U[:, n : 2 * n].copy(), U[:, 2 * n : 3 * n].copy(), U[:, 3 * n :].copy(), t)

    @classmethod
    def zeros(cls, J: int, n: int, t: float = 0.0) -> "ModalState":
        return cls(*(np.zeros((J, n)) for _ in range(4)), t=t)

    def copy(self) -> "ModalState":
        return ModalState(self.v.copy(), self.z.copy(), self.p.copy(), self.q.copy(), self.t)

    def as_matrix(self) -> np.ndarray:
        """``(J, 4n)`` matrix whose rows are the stacked modal vectors."""
        return np.hstack([self.v, self.z, self.p, self.q])


class EnergySample(tuple):
    """``(t, E, P)``: time, total energy and instantaneous dissipated power."""

    __slots__ = ()

    def __new__(cls, t: float, E: float, P: float):
        return super().__new__(cls, (float(t), float(E), float(P)))

    t = property(lambda self: self[0])
    E = property(lambda self: self[1])
    P = property(lambda self: self[2])


@dataclass
class SimulationSeries:
    """Sampled energy history of one run.

    ``work`` is the dissipated energy accumulated from ``t=0`` with the midpoint
    power of every step; it is what :func:`energy_budget_residual` checks against.
    It is ``None`` for series read back from CSV.
    """

    t: np.ndarray
    E: np.ndarray
    P: np.ndarray
    work: np.ndarray | None = None
    snapshots: dict[float, ModalState] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def samples(self) -> list[EnergySample]:
        return [EnergySample(*row) for row in zip(self.t, self.E, self.P)]

    def is_monotone(self, rtol: float = 0.0) -> bool:
        """``E`` non-increasing up to ``rtol * E[0]``."""
        return bool(np.all(np.diff(self.E) <= rtol * self.E[0]))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "E", "P"])
            for t, e, p in zip(self.t, self.E, self.P):
                w.writerow([repr(float(t)), repr(float(e)), repr(float(p))])
        return path

    @classmethod
    def from_csv(cls, path) -> "SimulationSeries":
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [h.strip() for h in header] != ["t", "E", "P"]:
                raise ConfigError(f"{path}: expected header t,E,P, got {header}")
            rows = [[float(x) for x in row] for row in reader if row]
        data = np.array(rows, dtype=float).reshape(-1, 3)
        return cls(t=data[:, 0], E=data[:, 1], P=data[:, 2])

    def write_metadata(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + "\n")
        return path

    def write_snapshots(self, directory, stem: str = "snapshot") -> list[Path]:
        directory = Path(directory)
        out = []
        for k, t in enumerate(sorted(self.snapshots)):
            out.append(write_coordinate(self.snapshots[t].as_matrix(), directory / f"{stem}-{k:03d}.coo"))
        return out


def project_initial(
    v0: Callable,
    v1: Callable,
    p0: Callable,
    p1: Callable,
    grid: Grid1D,
    J: int,
    K_y: int | None = None,
) -> ModalState:
    """Transverse coefficients of initial data given as functions ``f(x, y)``.

    ``v_j(x_i) = int_0^1 v0(x_i, y) e_j(y) dy`` by the composite trapezoid rule on
    ``K_y`` equispaced points; same for ``z, p, q`` from ``v1, p0, p1``. The
    functions must broadcast over arrays.
    """
    if J < 1:
        raise ConfigError(f"need J >= 1 modes, got {J}")
    if K_y is None:
        K_y = max(2048, 4 * J)
    if K_y < 4 * J:
        raise QuadratureUnderResolved(f"K_y={K_y} points cannot resolve {J} modes (need >= {4 * J})")
    x = grid.unknowns[:, None]
    y = np.linspace(0.0, 1.0, K_y)
    E = basis(np.arange(J)[:, None], y[None, :])  # (J, K_y)

    def coeffs(f):
        vals = np.broadcast_to(np.asarray(f(x, y[None, :]), dtype=float), (grid.n, K_y))
        return trapezoid(vals[None, :, :] * E[:, None, :], y, axis=-1)

    return ModalState(coeffs(v0), coeffs(v1), coeffs(p0), coeffs(p1), t=0.0)


def smooth_initial_state(
    grid: Grid1D,
    J: int,
    exponent: float = 2.0,
    amplitude: float = 1.0,
) -> ModalState:
    """Domain-smooth multi-mode data with coefficients ``(1 + xi_j)^-exponent``.

    x-profiles: ``v = x(2 - x)``, ``z = 3x^2 - 2x^3``, ``p = sin(pi x / 2)``, ``q = 0``;
    all vanish at ``x = 0`` and have zero slope at ``x = 1``.
    """
    if J < 1:
        raise ConfigError(f"need J >= 1 modes, got {J}")
    x = grid.unknowns
    c = amplitude * (1.0 + xi(np.arange(J))) ** (-float(exponent))
    v = np.outer(c, x * (2.0 - x))
    z = np.outer(c, 3.0 * x**2 - 2.0 * x**3)
    p = np.outer(c, np.sin(np.pi * x / 2.0))
    return ModalState(v, z, p, np.zeros_like(v))


def _tri(A: sp.spmatrix) -> tuple[np.ndarray, np.ndarray]:
    """Main and first super-diagonal of a symmetric tridiagonal matrix."""
    A = sp.dia_matrix(A)
    return A.diagonal(0).copy(), A.diagonal(1).copy()


def _tri_apply(d0: np.ndarray, d1: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Symmetric tridiagonal matrix times ``X`` of shape ``(n, J)``."""
    Y = d0[:, None] * X
    Y[:-1] += d1[:, None] * X[1:]
    Y[1:] += d1[:, None] * X[:-1]
    return Y


class CayleyStepper:
    """Trapezoidal-rule propagator for modes ``0 .. J-1`` with a fixed ``dt``.

    Internally the state is kept as two interleaved vectors, displacements
    ``x = (v_1, p_1, v_2, p_2, ...)`` and velocities ``y = (z_1, q_1, ...)``, mode
    after mode. The banded Cholesky factor of the condensed step matrix is
    computed once in the constructor; a step costs two sparse products and one
    banded solve for all modes together.
    """

    HALF_BAND = 3

    def __init__(self, system: PiezoSystem, J: int, dt: float):
        if not dt > 0 or not math.isfinite(dt):
            raise ConfigError(f"dt must be positive and finite, got {dt}")
        if J < 1:
            raise ConfigError(f"need J >= 1 modes, got {J}")
        self.system = system
        self.J = int(J)
        self.dt = float(dt)
        self.n = system.grid.n
        prm = system.params
        tau = 0.5 * self.dt
        gb = prm.gamma * prm.beta
        mats = system.mats
        I_J = sp.identity(self.J, format="csr")
        X2 = sp.diags(xi(np.arange(self.J)) ** 2)
        e_vv = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
        e_pp = sp.csr_matrix(np.array([[0.0, 0.0], [0.0, 1.0]]))
        G = sp.csr_matrix(np.array([[prm.alpha, -gb], [-gb, prm.beta]]))

        def per_mode(node_mat, field_mat):
            return sp.kron(node_mat, field_mat)

        inertia = per_mode(prm.rho * mats.Q + tau * mats.Dd, e_vv) + per_mode(prm.mu * mats.Q, e_pp)
        stiff = sp.kron(I_J, per_mode(mats.K, G)) + sp.kron(X2, per_mode(mats.Q, G))
        lhs = (sp.kron(I_J, inertia) + tau * tau * stiff).tocsr()
        self._rhs_x = (sp.kron(I_J, inertia) - tau * tau * stiff).tocsr()
        self._rhs_y = (2.0 * tau * sp.kron(I_J, per_mode(prm.rho * mats.Q, e_vv) + per_mode(prm.mu * mats.Q, e_pp))).tocsr()
        self._gram_x = stiff.tocsr()
        self._gram_y = sp.kron(I_J, per_mode(mats.Q, sp.diags([prm.rho, prm.mu]))).tocsr()
        self._damp_y = sp.kron(I_J, per_mode(mats.Dd, e_vv)).tocsr()
        self._factor = self._factorize(lhs)

    def _factorize(self, lhs: sp.csr_matrix) -> np.ndarray:
        u, N = self.HALF_BAND, lhs.shape[0]
        ab = np.zeros((u + 1, N))
        for off in range(u + 1):
            ab[u - off, off:] = lhs.diagonal(off)
        try:
            return sla.cholesky_banded(ab, lower=False)
        except np.linalg.LinAlgError as exc:
            raise LinearSolveFailure(f"condensed step matrix not SPD for dt={self.dt}") from exc

    def pack(self, state: ModalState) -> tuple[np.ndarray, np.ndarray]:
        """Interleaved ``(x, y)`` vectors of a modal state."""
        self._check(state)
        x = np.stack([state.v, state.p], axis=-1).reshape(-1)
        y = np.stack([state.z, state.q], axis=-1).reshape(-1)
        return x.astype(float), y.astype(float)

    def unpack(self, x: np.ndarray, y: np.ndarray, t: float) -> ModalState:
        X = x.reshape(self.J, self.n, 2)
        Y = y.reshape(self.J, self.n, 2)
        return ModalState(X[:, :, 0].copy(), Y[:, :, 0].copy(), X[:, :, 1].copy(), Y[:, :, 1].copy(), t)

    def advance(self, x: np.ndarray, y: np.ndarray):
        """One step on packed vectors; returns ``(x_new, y_new, y_mid)``."""
        rhs = self._rhs_x @ x + self._rhs_y @ y
        x1 = sla.cho_solve_banded((self._factor, False), rhs, check_finite=False)
        if not np.all(np.isfinite(x1)):
            raise LinearSolveFailure("non-finite solution in Cayley step")
        y_mid = (x1 - x) / self.dt
        return x1, 2.0 * y_mid - y, y_mid

    def _check(self, state: ModalState) -> None:
        if state.J != self.J or state.n != self.n:
            raise DimensionMismatch(f"state has (J, n)={state.v.shape}, stepper expects {(self.J, self.n)}")

    def step(self, state: ModalState) -> ModalState:
        x, y = self.pack(state)
        x1, y1, _ = self.advance(x, y)
        return self.unpack(x1, y1, state.t + self.dt)

    def packed_energy(self, x: np.ndarray, y: np.ndarray) -> float:
        return 0.5 * float(x @ (self._gram_x @ x) + y @ (self._gram_y @ y))

    def packed_power(self, y: np.ndarray) -> float:
        return float(y @ (self._damp_y @ y))

    def energy(self, state: ModalState) -> float:
        return self.packed_energy(*self.pack(state))

    def power(self, state: ModalState) -> float:
        return self.packed_power(self.pack(state)[1])


def modal_energy(system: PiezoSystem, state: ModalState) -> np.ndarray:
    """Per-mode energy ``1/2 U_j^T M_j U_j`` as an array of length ``J``."""
    prm = system.params
    gb = prm.gamma * prm.beta
    K, Q = _tri(system.mats.K), _tri(system.mats.Q)
    x2 = xi(np.arange(state.J)) ** 2
    V, Z, P, Qv = state.v.T, state.z.T, state.p.T, state.q.T
    QV, QP = _tri_apply(*Q, V), _tri_apply(*Q, P)
    SV = _tri_apply(*K, V) + QV * x2
    SP = _tri_apply(*K, P) + QP * x2
    two_e = (
        prm.alpha * np.sum(V * SV, axis=0)
        - 2.0 * gb * np.sum(V * SP, axis=0)
        + prm.beta * np.sum(P * SP, axis=0)
        + prm.rho * np.sum(Z * _tri_apply(*Q, Z), axis=0)
        + prm.mu * np.sum(Qv * _tri_apply(*Q, Qv), axis=0)
    )
    return 0.5 * two_e


_STEPPERS: dict[tuple[int, int, float], CayleyStepper] = {}


def step(system: PiezoSystem, state: ModalState, dt: float) -> ModalState:
    """Advance ``state`` by one trapezoidal step, reusing cached factorizations."""
    key = (id(system), state.J, float(dt))
    stepper = _STEPPERS.get(key)
    if stepper is None or stepper.system is not system:
        stepper = _STEPPERS[key] = CayleyStepper(system, state.J, dt)
    return stepper.step(state)


def simulate(
    system: PiezoSystem,
    initial: ModalState,
    T: float,
    dt: float,
    sample_every: int = 1,
    snapshot_times: Sequence[float] = (),
) -> SimulationSeries:
    """Integrate from ``initial`` up to time ``T`` with the trapezoidal rule.

    Energy and power are sampled at step 0, every ``sample_every`` steps and at
    the final step. The dissipated work ``sum dt * zbar' Dd zbar`` is accumulated
    every step so the discrete energy budget can be audited afterwards.
    """
    if not T > 0:
        raise ConfigError(f"T must be positive, got {T}")
    if sample_every < 1:
        raise ConfigError(f"sample_every must be >= 1, got {sample_every}")
    if initial.n != system.grid.n:
        raise DimensionMismatch(f"state has n={initial.n}, grid has n={system.grid.n}")
    stepper = CayleyStepper(system, initial.J, dt)
    nsteps = int(math.ceil(T / dt - 1e-9))
    snap_steps = {int(round((s - initial.t) / dt)) for s in snapshot_times}

    x, y = stepper.pack(initial)
    ts, Es, Ps, Ws = [initial.t], [stepper.packed_energy(x, y)], [stepper.packed_power(y)], [0.0]
    snapshots: dict[float, ModalState] = {}
    if 0 in snap_steps:
        snapshots[initial.t] = initial.copy()
    work = 0.0
    for k in range(1, nsteps + 1):
        x, y, y_mid = stepper.advance(x, y)
        work += dt * stepper.packed_power(y_mid)
        t = initial.t + k * dt
        if k % sample_every == 0 or k == nsteps:
            ts.append(t)
            Es.append(stepper.packed_energy(x, y))
            Ps.append(stepper.packed_power(y))
            Ws.append(work)
        if k in snap_steps:
            snapshots[t] = stepper.unpack(x, y, t)
    metadata = {
        **system.fingerprint(),
        "dt": dt,
        "T": T,
        "J": initial.J,
        "sample_every": sample_every,
        "steps": nsteps,
    }
    return SimulationSeries(
        t=np.array(ts),
        E=np.array(Es),
        P=np.array(Ps),
        work=np.array(Ws),
        snapshots=snapshots,
        metadata=metadata,
    )


def energy_budget_residual(series: SimulationSeries) -> float:
    """``max_k |E_{k+1} - E_k + W_{k+1} - W_k|`` with ``W`` the accumulated
    midpoint dissipation; zero up to round-off for the trapezoidal rule."""
    if series.work is None:
        raise ConfigError("series carries no midpoint dissipation record (was it read from CSV?)")
    if len(series) < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(series.E) + np.diff(series.work))))


def reconstruct_field(state: ModalState, y_points, x_nodes: np.ndarray | None = None):
    """Sum the truncated expansion on the tensor grid ``x_nodes x y_points``.

    Returns ``(x, y, v, p)`` with ``v`` and ``p`` of shape ``(len(x), len(y))``.
    ``x`` defaults to all grid nodes including ``x = 0``, where the fields vanish.
    """
    y = np.atleast_1d(np.asarray(y_points, dtype=float))
    if np.any((y < 0.0) | (y > 1.0)):
        raise ConfigError("y_points must lie in [0, 1]")
    E = basis(np.arange(state.J)[:, None], y[None, :])  # (J, K)
    v = np.vstack([np.zeros((1, y.size)), state.v.T @ E])
    p = np.vstack([np.zeros((1, y.size)), state.p.T @ E])
    if x_nodes is None:
        x_nodes = np.linspace(0.0, 1.0, state.n + 1)
    return x_nodes, y, v, p
