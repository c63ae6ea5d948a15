r"""
Piecewise-linear Galerkin discretization in ``x`` and the per-mode generator.

For mode ``j`` the unknowns are nodal values of ``(v, z, p, q)`` on the nodes
``x_1, ..., x_n`` (the Dirichlet node ``x_0 = 0`` is eliminated, the Neumann
end ``x_n = 1`` is natural). With stiffness ``K``, mass ``Q``, damping ``Dd``
and ``S = K + xi_j^2 Q`` the semi-discrete system is

.. math::

    v' = z, \quad \rho Q z' = -\alpha S v + \gamma\beta S p - D_d z, \quad
    p' = q, \quad \mu Q q' = -\beta S p + \gamma\beta S v,

i.e. ``B U' = L U`` with ``B = diag(Q, rho Q, Q, mu Q)`` and ``A = B^{-1} L``.
The energy Gram matrix

.. math::

    M = \begin{pmatrix} \alpha S & 0 & -\gamma\beta S & 0 \\ 0 & \rho Q & 0 & 0 \\
        -\gamma\beta S & 0 & \beta S & 0 \\ 0 & 0 & 0 & \mu Q \end{pmatrix}

is the matrix of ``alpha1 v'Sv + rho z'Qz + beta (gamma v - p)'S(gamma v - p) + mu q'Qq``,
and ``M A`` is skew-symmetric up to the block ``-Dd`` in the ``(z, z)`` slot, so
``Re(U* M A U) = -z* Dd z`` holds exactly in exact arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, DimensionMismatch, FactorizationFailure, SingularMass
from .model import DampingProfile, PhysicalParams, xi

__all__ = [
    "Grid1D",
    "OperatorMatrices",
    "ModalOperator",
    "build_matrices",
    "assemble_modal_operator",
    "energy_norm",
    "full_norm",
    "quadratic_form_terms",
    "write_coordinate",
    "read_coordinate",
    "PiezoSystem",
]

# 3-point Gauss-Legendre on [0, 1]
_GAUSS_X = 0.5 + 0.5 * np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
_GAUSS_W = 0.5 * np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid of ``n`` elements on ``[0, 1]``."""

    n: int

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError(f"grid needs n >= 2 elements, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def nodes(self) -> np.ndarray:
        """All ``n + 1`` nodes including the eliminated Dirichlet node."""
        return np.linspace(0.0, 1.0, self.n + 1)

    @property
    def unknowns(self) -> np.ndarray:
        """The ``n`` nodes carrying unknowns, ``x_1 .. x_n``."""
        return self.nodes[1:]


@dataclass(frozen=True)
class OperatorMatrices:
    """Stiffness ``K``, mass ``Q`` and damping ``Dd`` over the unknown nodes (CSR)."""

    grid: Grid1D
    K: sp.csr_matrix
    Q: sp.csr_matrix
    Dd: sp.csr_matrix
    profile: DampingProfile | None = None

    @property
    def n(self) -> int:
        return self.grid.n


def _assemble(n: int, local: np.ndarray) -> sp.csr_matrix:
    """Scatter per-element 2x2 blocks ``local[e]`` into an ``(n+1)^2`` matrix and
    drop the Dirichlet row/column."""
    rows, cols, vals = [], [], []
    e = np.arange(n)
    for a in range(2):
        for b in range(2):
            rows.append(e + a)
            cols.append(e + b)
            vals.append(local[:, a, b])
    full = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n + 1, n + 1),
    ).tocsr()
    return full[1:, 1:].tocsr()


def _damping_local(grid: Grid1D, profile: DampingProfile | None) -> np.ndarray:
    n, h = grid.n, grid.h
    local = np.zeros((n, 2, 2))
    if profile is None:
        return local
    nodes = grid.nodes
    cuts = np.array(profile.breakpoints())
    for e in range(n):
        x0, x1 = nodes[e], nodes[e + 1]
        if x1 <= profile.a or x0 >= profile.b:
            continue
        inner = cuts[(cuts > x0) & (cuts < x1)]
        pts = np.concatenate(([x0], inner, [x1]))
        for lo, hi in zip(pts[:-1], pts[1:]):
            xq = lo + (hi - lo) * _GAUSS_X
            wq = (hi - lo) * _GAUSS_W * profile(xq)
            phi = np.stack([(x1 - xq) / h, (xq - x0) / h])
            local[e] += (phi * wq) @ phi.T
    # the matrix product may round the two off-diagonal entries differently
    return 0.5 * (local + local.transpose(0, 2, 1))


def build_matrices(grid: Grid1D, profile: DampingProfile | None = None) -> OperatorMatrices:
    """Assemble ``K``, ``Q`` and ``Dd`` with hat functions on ``grid``.

    ``K`` and ``Q`` are integrated exactly. ``Dd`` uses 3-point Gauss on every
    element after splitting it at the profile breakpoints, which is exact for
    both supported shapes (the integrand is piecewise polynomial of degree <= 5).
    ``profile=None`` gives ``Dd = 0``.
    """
    n, h = grid.n, grid.h
    k_loc = np.broadcast_to(np.array([[1.0, -1.0], [-1.0, 1.0]]) / h, (n, 2, 2))
    q_loc = np.broadcast_to(np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6.0, (n, 2, 2))
    K = _assemble(n, np.ascontiguousarray(k_loc))
    Q = _assemble(n, np.ascontiguousarray(q_loc))
    Dd = _assemble(n, _damping_local(grid, profile))
    Dd.eliminate_zeros()
    return OperatorMatrices(grid=grid, K=K, Q=Q, Dd=Dd, profile=profile)


class ModalOperator:
    """Discrete generator ``A_j`` of mode ``j`` and its energy Gram matrix ``M_j``.

    The state vector is stacked as ``U = [v, z, p, q]``, each block of length ``n``.
    ``A`` itself is dense (it contains ``Q^{-1}``); the sparse factors ``L``, ``B``
    and ``MA = M A`` are what the solvers use.
    """

    def __init__(self, params: PhysicalParams, mats: OperatorMatrices, j: int):
        self.params = params
        self.mats = mats
        self.j = int(j)
        self.xi = xi(self.j)
        self.n = mats.n
        self.S = (mats.K + self.xi**2 * mats.Q).tocsr()
        try:
            self._q_lu = spla.splu(mats.Q.tocsc())
        except RuntimeError as exc:  # pragma: no cover - only for broken grids
            raise SingularMass(str(exc)) from exc
        if not np.all(np.isfinite(self._q_lu.U.diagonal())) or np.any(self._q_lu.U.diagonal() <= 0):
            raise SingularMass("mass matrix is not positive definite")

    @property
    def dim(self) -> int:
        return 4 * self.n

    @cached_property
    def B(self) -> sp.csr_matrix:
        p, Q = self.params, self.mats.Q
        return sp.block_diag([Q, p.rho * Q, Q, p.mu * Q], format="csr")

    @cached_property
    def L(self) -> sp.csr_matrix:
        p, Q, S, Dd = self.params, self.mats.Q, self.S, self.mats.Dd
        gb = p.gamma * p.beta
        return sp.bmat(
            [
                [None, Q, None, None],
                [-p.alpha * S, -Dd, gb * S, None],
                [None, None, None, Q],
                [gb * S, None, -p.beta * S, None],
            ],
            format="csr",
        )

    @cached_property
    def M(self) -> sp.csr_matrix:
        p, Q, S = self.params, self.mats.Q, self.S
        gb = p.gamma * p.beta
        return sp.bmat(
            [
                [p.alpha * S, None, -gb * S, None],
                [None, p.rho * Q, None, None],
                [-gb * S, None, p.beta * S, None],
                [None, None, None, p.mu * Q],
            ],
            format="csr",
        )

    @cached_property
    def MA(self) -> sp.csr_matrix:
        """``M A`` assembled directly: a skew block matrix plus ``-Dd`` at ``(z, z)``."""
        return (self.skew_part - self.damping_part).tocsr()

    @cached_property
    def skew_part(self) -> sp.csr_matrix:
        p, S = self.params, self.S
        gb = p.gamma * p.beta
        return sp.bmat(
            [
                [None, p.alpha * S, None, -gb * S],
                [-p.alpha * S, None, gb * S, None],
                [None, -gb * S, None, p.beta * S],
                [gb * S, None, -p.beta * S, None],
            ],
            format="csr",
        )

    @cached_property
    def damping_part(self) -> sp.csr_matrix:
        n = self.n
        Z = sp.csr_matrix((n, n))
        return sp.block_diag([Z, self.mats.Dd, Z, Z], format="csr")

    def apply(self, U: np.ndarray) -> np.ndarray:
        """``A @ U`` through a mass solve; ``U`` may be a vector or a column stack."""
        U = np.asarray(U)
        if U.shape[0] != self.dim:
            raise DimensionMismatch(f"expected leading dimension {self.dim}, got {U.shape[0]}")
        n, p = self.n, self.params
        LU = self.L @ U
        out = np.empty(LU.shape, dtype=np.result_type(LU, float))
        out[:n] = U[n : 2 * n]
        out[2 * n : 3 * n] = U[3 * n :]
        out[n : 2 * n] = self._q_solve(LU[n : 2 * n]) / p.rho
        out[3 * n :] = self._q_solve(LU[3 * n :]) / p.mu
        return out

    def _q_solve(self, rhs: np.ndarray) -> np.ndarray:
        if np.iscomplexobj(rhs):
            return self._q_lu.solve(rhs.real) + 1j * self._q_lu.solve(rhs.imag)
        return self._q_lu.solve(rhs)

    @cached_property
    def A(self) -> np.ndarray:
        """Dense ``A = B^{-1} L``."""
        return self.apply(np.eye(self.dim))

    @cached_property
    def energy_factor(self) -> np.ndarray:
        """Dense lower Cholesky factor ``Lc`` with ``M = Lc Lc^T``."""
        try:
            return np.linalg.cholesky(self.M.toarray())
        except np.linalg.LinAlgError as exc:
            raise FactorizationFailure(f"energy Gram of mode {self.j} is not SPD") from exc

    @cached_property
    def orthonormal_form(self) -> tuple[np.ndarray, np.ndarray]:
        """``(W, D)`` with ``Lc^{-1} (M A) Lc^{-T} = W - D``.

        ``W`` is skew-symmetric and ``D`` symmetric positive semidefinite to the last
        bit, so ``A`` is similar to ``W - D`` and the ``M``-norm becomes the
        Euclidean norm in these coordinates.
        """
        Lc = self.energy_factor
        n = self.n
        p = self.params
        gb = p.gamma * p.beta
        S = self.S
        # upper-triangular half of the skew part; W = Y - Y^T
        upper = np.zeros((4 * n, 4 * n))
        Sd = S.toarray()
        upper[:n, n : 2 * n] = p.alpha * Sd
        upper[:n, 3 * n :] = -gb * Sd
        upper[n : 2 * n, 2 * n : 3 * n] = gb * Sd
        upper[2 * n : 3 * n, 3 * n :] = p.beta * Sd
        Y = _congruence(Lc, upper)
        W = Y - Y.T
        D = _congruence(Lc, self.damping_part.toarray())
        D = 0.5 * (D + D.T)
        return W, D

    def describe(self) -> dict:
        return {"j": self.j, "xi": self.xi, "n": self.n}


def _congruence(Lc: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``Lc^{-1} X Lc^{-T}`` by two triangular solves."""
    T = sla.solve_triangular(Lc, X, lower=True)
    return sla.solve_triangular(Lc, T.T, lower=True).T


def assemble_modal_operator(
    params: PhysicalParams,
    profile: DampingProfile | None,
    grid: Grid1D,
    j: int,
    mats: OperatorMatrices | None = None,
) -> ModalOperator:
    """Build the mode-``j`` generator; pass ``mats`` to share assembly across modes."""
    if mats is None:
        mats = build_matrices(grid, profile)
    elif mats.grid != grid:
        raise DimensionMismatch("matrices were assembled on a different grid")
    return ModalOperator(params, mats, j)


def energy_norm(U: np.ndarray, M) -> float:
    """``sqrt(U* M U)`` for a stacked modal vector."""
    U = np.asarray(U)
    if U.ndim != 1 or U.shape[0] != M.shape[0]:
        raise DimensionMismatch(f"state of shape {U.shape} does not match Gram {M.shape}")
    val = np.real(np.vdot(U, M @ U))
    return float(np.sqrt(max(val, 0.0)))


def full_norm(states, grams) -> float:
    """Energy norm of a truncated modal expansion: root of the sum of squared
    per-mode norms."""
    states, grams = list(states), list(grams)
    if len(states) != len(grams):
        raise DimensionMismatch(f"{len(states)} modal states but {len(grams)} Gram matrices")
    shapes = {g.shape for g in grams}
    if len(shapes) > 1:
        raise DimensionMismatch("modes were assembled on different grids")
    return float(np.sqrt(sum(energy_norm(U, M) ** 2 for U, M in zip(states, grams))))


def quadratic_form_terms(op: ModalOperator, U: np.ndarray) -> dict[str, float]:
    """The four energy contributions evaluated term by term (no Gram matrix)."""
    n, p = op.n, op.params
    v, z, pp, q = (U[k * n : (k + 1) * n] for k in range(4))
    w = p.gamma * v - pp

    def form(X, a):
        return float(np.real(np.vdot(a, X @ a)))

    return {
        "elastic": p.alpha1 * form(op.S, v),
        "kinetic": p.rho * form(op.mats.Q, z),
        "electric": p.beta * form(op.S, w),
        "magnetic": p.mu * form(op.mats.Q, q),
    }


def write_coordinate(matrix, path) -> Path:
    """Dump a matrix as ``row col value`` lines (0-based) after a ``# rows cols nnz`` header."""
    coo = sp.coo_matrix(matrix)
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        order = np.lexsort((coo.col, coo.row))
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")
    return path


def read_coordinate(path) -> sp.csr_matrix:
    with Path(path).open() as fh:
        header = fh.readline().lstrip("#").split()
        rows, cols = int(header[0]), int(header[1])
        body = [line.split() for line in fh if line.strip()]
    if not body:
        return sp.csr_matrix((rows, cols))
    data = np.array(body, dtype=float)
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(rows, cols))


class PiezoSystem:
    """Parameters, damping profile and grid bundled with a cache of modal operators.

    ``profile=None`` is the undamped system.
    """

    def __init__(self, params: PhysicalParams, profile: DampingProfile | None, grid: Grid1D):
        self.params = params
        self.profile = profile
        self.grid = grid
        self.mats = build_matrices(grid, profile)
        self._ops: dict[int, ModalOperator] = {}

    def operator(self, j: int) -> ModalOperator:
        op = self._ops.get(j)
        if op is None:
            op = self._ops[j] = ModalOperator(self.params, self.mats, j)
        return op

    def drop_cache(self) -> None:
        self._ops.clear()

    def fingerprint(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "damping": None if self.profile is None else self.profile.as_dict(),
            "grid": {"n": self.grid.n},
        }
