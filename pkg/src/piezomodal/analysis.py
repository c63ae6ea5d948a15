r"""
Spectral and resolvent diagnostics of the modal generators.

All norms are energy norms: for mode ``j`` the state space carries the inner
product ``<U, W>_M = W* M_j U``. With ``M = Lc Lc^T`` the map ``U -> Lc^T U`` is an
isometry onto Euclidean space, under which ``A_j`` becomes ``W - D`` (``W`` skew,
``D`` symmetric PSD). Eigenvalues, resolvent norms and quasimodes are computed in
those coordinates (dense path) or with sparse factorizations of
``i lambda B - L`` (iterative path).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy import stats

from .assembly import ModalOperator, PiezoSystem
from .errors import (
    ConfigError,
    DegenerateFit,
    EigSolveFailure,
    FactorizationFailure,
    ModeCutoffSuspect,
    NumericalFailure,
)
from .model import xi

__all__ = [
    "DENSE_CAP",
    "PowerLawFit",
    "SpectralReport",
    "AbscissaTable",
    "ResolventReport",
    "DecayFitReport",
    "Quasimode",
    "spectrum",
    "spectral_report",
    "abscissa_sweep",
    "resolvent_norm",
    "resolvent_sweep",
    "sweep_modes",
    "quasimode_diagnostics",
    "fit_power_law",
    "decay_fit",
    "log_lambda_grid",
]

DENSE_CAP = 4096
TOL_POS = 1e-10


class UnstableEigenvalue(NumericalFailure):
    """An eigenvalue with real part above the tolerance was found."""


# --------------------------------------------------------------------------- fits


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    stderr: float
    r2: float
    prefactor: float
    npoints: int

    def band(self, z: float = 2.0) -> tuple[float, float]:
        return (self.exponent - z * self.stderr, self.exponent + z * self.stderr)


def fit_power_law(xs, ys) -> PowerLawFit:
    """Least-squares line through ``(log x, log y)``; ``y ~ prefactor * x**exponent``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ConfigError("xs and ys must be 1-D arrays of equal length")
    if x.size < 4:
        raise ConfigError(f"need at least 4 points for a power-law fit, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0) or not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ConfigError("power-law fit needs finite positive data")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0.0:
        raise DegenerateFit("all abscissae coincide")
    res = stats.linregress(lx, ly)
    r2 = 1.0 if np.ptp(ly) == 0.0 else float(res.rvalue**2)
    return PowerLawFit(
        exponent=float(res.slope),
        stderr=float(res.stderr),
        r2=r2,
        prefactor=float(np.exp(res.intercept)),
        npoints=int(x.size),
    )


# ----------------------------------------------------------------------- spectra


def spectrum(op: ModalOperator) -> np.ndarray:
    """All ``4n`` eigenvalues of ``A_j``, sorted by decreasing real part."""
    if op.dim > DENSE_CAP:
        raise ConfigError(f"dense eigen-solve capped at 4n <= {DENSE_CAP}, got {op.dim}")
    W, D = op.orthonormal_form
    try:
        ev = sla.eigvals(W - D, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigSolveFailure(f"eigen-solve failed for mode {op.j}") from exc
    if ev.size != op.dim or not np.all(np.isfinite(ev)):
        raise EigSolveFailure(f"eigen-solve for mode {op.j} returned non-finite values")
    return ev[np.argsort(-ev.real, kind="stable")]


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class SpectralReport:
    modes: np.ndarray
    eigenvalues: dict[int, np.ndarray]
    abscissa: np.ndarray
    min_abs_real: np.ndarray
    min_modulus: np.ndarray
    fingerprint: dict
    tol_pos: float = TOL_POS

    def rows(self) -> list[tuple[int, float, float]]:
        return [(int(j), float(s), float(m)) for j, s, m in zip(self.modes, self.abscissa, self.min_abs_real)]

    def to_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "tol_pos": self.tol_pos,
            "modes": [int(j) for j in self.modes],
            "abscissa": [float(s) for s in self.abscissa],
            "min_abs_real": [float(m) for m in self.min_abs_real],
            "min_modulus": [float(m) for m in self.min_modulus],
            "eigenvalue_count": {str(j): int(ev.size) for j, ev in self.eigenvalues.items()},
        }


def spectral_report(
    system: PiezoSystem,
    modes: Iterable[int],
    tol_pos: float = TOL_POS,
    workers: int = 1,
    strict: bool = True,
) -> SpectralReport:
    """Eigenvalues of ``A_j`` for each requested mode plus per-mode summaries.

    With ``strict`` an eigenvalue with real part above ``tol_pos`` raises
    :class:`UnstableEigenvalue`.
    """
    modes = np.array(sorted(set(int(j) for j in modes)))
    evs = _map(lambda j: spectrum(system.operator(int(j))), list(modes), workers)
    eig = {int(j): ev for j, ev in zip(modes, evs)}
    absc = np.array([ev.real.max() for ev in evs])
    if strict and np.any(absc > tol_pos):
        bad = [int(j) for j, s in zip(modes, absc) if s > tol_pos]
        raise UnstableEigenvalue(f"eigenvalues with Re > {tol_pos} in modes {bad}")
    return SpectralReport(
        modes=modes,
        eigenvalues=eig,
        abscissa=absc,
        min_abs_real=np.array([np.abs(ev.real).min() for ev in evs]),
        min_modulus=np.array([np.abs(ev).min() for ev in evs]),
        fingerprint=system.fingerprint(),
        tol_pos=tol_pos,
    )


@dataclass
class AbscissaTable:
    modes: np.ndarray
    xi: np.ndarray
    abscissa: np.ndarray
    min_abs_real: np.ndarray
    fit: PowerLawFit | None
    """``|s(j)| ~ c xi_j^exponent``; ``None`` when the abscissae are not all negative."""

    @property
    def decay_power(self) -> float | None:
        """``sigma`` in ``s(j) ~ -c xi_j^(-sigma)``."""
        return None if self.fit is None else -self.fit.exponent


def abscissa_sweep(system: PiezoSystem, j_range: Iterable[int], workers: int = 1, strict: bool = True) -> AbscissaTable:
    """Spectral abscissa ``s(j) = max Re sigma(A_j)`` over ``j_range`` and its trend."""
    rep = spectral_report(system, j_range, workers=workers, strict=strict)
    fit = None
    if rep.modes.size >= 4 and np.all(rep.abscissa < 0):
        try:
            fit = fit_power_law(xi(rep.modes), -rep.abscissa)
        except (ConfigError, DegenerateFit):
            fit = None
    return AbscissaTable(
        modes=rep.modes,
        xi=np.atleast_1d(xi(rep.modes)),
        abscissa=rep.abscissa,
        min_abs_real=rep.min_abs_real,
        fit=fit,
    )


# --------------------------------------------------------------------- resolvent


def _dense_shifted(op: ModalOperator, lam: float) -> np.ndarray:
    W, D = op.orthonormal_form
    G = -(W - D).astype(complex)
    G[np.diag_indices_from(G)] += 1j * lam
    return G


def _resolvent_dense(op: ModalOperator, lam: float, vectors: bool = False):
    G = _dense_shifted(op, lam)
    if not vectors:
        s = sla.svdvals(G, check_finite=False)
        return 1.0 / s[-1]
    _, s, Vh = sla.svd(G, check_finite=False)
    w = Vh[-1].conj()
    U = sla.solve_triangular(op.energy_factor.T, w, lower=False)
    return 1.0 / s[-1], U


def _resolvent_iterative(op: ModalOperator, lam: float, vectors: bool = False, tol: float = 1e-10):
    """Largest eigenvalue of ``R^# R`` with ``R = (i lam - A)^{-1}`` and ``R^#`` its
    ``M``-adjoint, by Lanczos on the generalized problem ``R* M R x = theta M x``."""
    B, L, M = op.B.tocsc(), op.L.tocsc(), op.M.tocsc()
    try:
        lu = spla.splu((1j * lam * B - L).tocsc().astype(complex))
        m_lu = spla.splu(M)
    except RuntimeError as exc:
        raise FactorizationFailure(f"sparse factorization failed at lambda={lam}") from exc
    N = op.dim

    def R(x):
        return lu.solve(np.asarray(B @ x, dtype=complex))

    def RH(x):
        return B.T @ lu.solve(np.asarray(x, dtype=complex), trans="H")

    def m_solve(x):
        x = np.asarray(x)
        if np.iscomplexobj(x):
            return m_lu.solve(x.real) + 1j * m_lu.solve(x.imag)
        return m_lu.solve(x)

    T = spla.LinearOperator((N, N), matvec=lambda x: RH(M @ R(x)), dtype=complex)
    Mop = spla.LinearOperator((N, N), matvec=lambda x: M @ x, dtype=complex)
    Minv = spla.LinearOperator((N, N), matvec=m_solve, dtype=complex)
    v0 = np.ones(N, dtype=complex)
    try:
        theta, X = spla.eigsh(T, k=1, M=Mop, Minv=Minv, which="LA", tol=tol, v0=v0, ncv=min(N, 24), maxiter=20 * N)
    except spla.ArpackError as exc:
        raise FactorizationFailure(f"Lanczos did not converge at lambda={lam}") from exc
    norm = math.sqrt(float(theta[0].real))
    if not vectors:
        return norm
    U = R(X[:, 0])
    U = U / math.sqrt(float(np.real(np.vdot(U, M @ U))))
    return norm, U


def resolvent_norm(op: ModalOperator, lam: float, method: str = "auto") -> float:
    """``||(i lam I - A_j)^{-1}||`` in the ``M_j`` operator norm.

    ``method="dense"`` takes the smallest singular value of ``Lc^T (i lam - A) Lc^{-T}``;
    ``"iterative"`` runs Lanczos on sparse LU solves; ``"auto"`` uses dense up to
    ``4n = 256``.
    """
    lam = float(lam)
    if method == "auto":
        method = "dense" if op.dim <= 256 else "iterative"
    if method == "dense":
        if op.dim > DENSE_CAP:
            raise ConfigError(f"dense resolvent capped at 4n <= {DENSE_CAP}")
        return float(_resolvent_dense(op, lam))
    if method == "iterative":
        return float(_resolvent_iterative(op, lam))
    raise ConfigError(f"unknown method {method!r}")


@dataclass
class Quasimode:
    lam: float
    U: np.ndarray
    residual: float
    resolvent_norm: float
    damped_kinetic: float
    damped_displacement: float
    energy: float

    @property
    def damped_fraction(self) -> float:
        return self.damped_kinetic / self.energy


def quasimode_diagnostics(op: ModalOperator, lam: float, method: str = "auto") -> Quasimode:
    """Worst quasimode at ``lam``: the unit-energy ``U`` minimizing
    ``||(i lam - A) U||_M``, with ``z* Dd z`` and ``lam^2 v* Dd v`` evaluated on it."""
    if method == "auto":
        method = "dense" if op.dim <= 256 else "iterative"
    if method == "dense":
        N, U = _resolvent_dense(op, float(lam), vectors=True)
    elif method == "iterative":
        N, U = _resolvent_iterative(op, float(lam), vectors=True)
    else:
        raise ConfigError(f"unknown method {method!r}")
    n = op.n
    Dd = op.mats.Dd
    v, z = U[:n], U[n : 2 * n]
    energy = float(np.real(np.vdot(U, op.M @ U)))
    return Quasimode(
        lam=float(lam),
        U=U,
        residual=1.0 / N,
        resolvent_norm=float(N),
        damped_kinetic=float(np.real(np.vdot(z, Dd @ z))),
        damped_displacement=float(lam**2 * np.real(np.vdot(v, Dd @ v))),
        energy=energy,
    )


def log_lambda_grid(lambda_min: float, lambda_max: float, points: int) -> np.ndarray:
    return np.geomspace(lambda_min, lambda_max, points)


def _check_lambda_grid(lambdas: np.ndarray, min_points: int = 12, min_decades: float = 2.0) -> None:
    if lambdas.ndim != 1 or lambdas.size < min_points:
        raise ConfigError(f"resolvent sweep needs >= {min_points} lambda points, got {lambdas.size}")
    if np.any(lambdas <= 0) or np.any(np.diff(lambdas) <= 0):
        raise ConfigError("lambda grid must be positive and strictly increasing")
    if math.log10(lambdas[-1] / lambdas[0]) < min_decades - 1e-9:
        raise ConfigError(f"lambda grid must span >= {min_decades} decades")


@dataclass
class ResolventReport:
    lambdas: np.ndarray
    sup_norm: np.ndarray
    argmax_mode: np.ndarray
    modes_used: np.ndarray
    tail: list[np.ndarray]
    fit: PowerLawFit
    audit_passed: bool
    fingerprint: dict = field(default_factory=dict)
    per_mode: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def exponent(self) -> float:
        return self.fit.exponent

    def to_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "lambda": [float(x) for x in self.lambdas],
            "sup_resolvent_norm": [float(x) for x in self.sup_norm],
            "argmax_mode": [int(j) for j in self.argmax_mode],
            "modes_used": [int(m) for m in self.modes_used],
            "exponent": self.fit.exponent,
            "exponent_stderr": self.fit.stderr,
            "r2": self.fit.r2,
            "prefactor": self.fit.prefactor,
            "tail_audit_passed": self.audit_passed,
        }


def sweep_modes(
    lambdas: np.ndarray,
    norm_of: Callable[[float, int], float],
    frequency: Callable[[int], float],
    cutoff: Callable[[float], float],
    extra_modes: int = 4,
    j_cap: int | None = None,
    workers: int = 1,
    min_points: int = 12,
    fingerprint: dict | None = None,
    strict: bool = True,
) -> ResolventReport:
    """Supremum over modes of ``norm_of(lam, j)`` for every ``lam``, with a tail audit.

    For each ``lam`` modes are taken in order until ``frequency(j) > cutoff(lam)``,
    then ``extra_modes`` more (never beyond ``j_cap``). The audit requires the
    last three evaluated norms to be strictly decreasing; a failure raises
    :class:`ModeCutoffSuspect` when ``strict``.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    _check_lambda_grid(lambdas, min_points=min_points)
    if extra_modes < 2:
        raise ConfigError("need at least 2 extra modes for the tail audit")
    sups, argmax, used, tails, per_mode = [], [], [], [], []
    ok = True
    for lam in lambdas:
        j_stop = 0
        while frequency(j_stop) <= cutoff(lam):
            j_stop += 1
        last = j_stop + extra_modes - 1
        if j_cap is not None:
            last = min(last, int(j_cap))
        modes = list(range(last + 1))
        vals = np.array(_map(lambda j, lam=lam: norm_of(lam, j), modes, workers))
        k = int(np.argmax(vals))
        sups.append(vals[k])
        argmax.append(k)
        used.append(len(modes))
        per_mode.append(vals)
        tail = vals[-3:]
        tails.append(tail)
        if tail.size < 3 or not np.all(np.diff(tail) < 0):
            ok = False
    fit = fit_power_law(lambdas, sups)
    report = ResolventReport(
        lambdas=lambdas,
        sup_norm=np.array(sups),
        argmax_mode=np.array(argmax),
        modes_used=np.array(used),
        tail=tails,
        fit=fit,
        audit_passed=ok,
        fingerprint=fingerprint or {},
        per_mode=per_mode,
    )
    if strict and not ok:
        raise ModeCutoffSuspect("tail audit failed: norms of the last modes are not decreasing; raise the mode cap")
    return report


def resolvent_sweep(
    system: PiezoSystem,
    lambdas,
    extra_modes: int = 4,
    j_cap: int | None = None,
    method: str = "auto",
    workers: int = 1,
    strict: bool = True,
) -> ResolventReport:
    """``sup_j ||(i lam - A_j)^{-1}||_M`` over a log-spaced ``lam`` grid.

    Modes are included while ``xi_j <= 2 lam max(sqrt(rho/alpha1), sqrt(mu/beta))``
    plus ``extra_modes`` beyond; the growth exponent comes from a log-log fit.
    Operators are assembled on demand and not cached, so memory stays bounded.
    """
    slowness = system.params.max_slowness
    mats, params = system.mats, system.params

    def norm_of(lam: float, j: int) -> float:
        return resolvent_norm(ModalOperator(params, mats, j), lam, method=method)

    report = sweep_modes(
        np.asarray(lambdas, dtype=float),
        norm_of,
        frequency=xi,
        cutoff=lambda lam: 2.0 * lam * slowness,
        extra_modes=extra_modes,
        j_cap=j_cap,
        workers=workers,
        fingerprint=system.fingerprint(),
        strict=strict,
    )
    return report


# ------------------------------------------------------------------------- decay


@dataclass
class DecayFitReport:
    t1: float
    t2: float
    kappa: float
    stderr: float
    r2: float
    slope_change: float
    curvature_flag: bool
    tail_onset: float | None
    local_times: np.ndarray
    local_kappa: np.ndarray

    def to_dict(self) -> dict:
        return {
            "window": [self.t1, self.t2],
            "kappa": self.kappa,
            "kappa_stderr": self.stderr,
            "r2": self.r2,
            "slope_change": self.slope_change,
            "curvature_flag": self.curvature_flag,
            "tail_onset": self.tail_onset,
            "local_times": [float(t) for t in self.local_times],
            "local_kappa": [float(k) for k in self.local_kappa],
        }


def _series_arrays(series) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(series, "t") and hasattr(series, "E"):
        return np.asarray(series.t, dtype=float), np.asarray(series.E, dtype=float)
    t, E = series
    return np.asarray(t, dtype=float), np.asarray(E, dtype=float)


def decay_fit(
    series,
    window: tuple[float, float] = (10.0, 100.0),
    curvature_threshold: float = 0.5,
    onset_factor: float = 2.0,
) -> DecayFitReport:
    """Fit ``E(t) ~ C (1 + t)^-kappa`` on ``window``.

    The shifted clock keeps the model finite at ``t = 0`` and makes an exact
    ``1/(1 + t)`` history fit with ``kappa = 1`` on any window.

    ``slope_change`` is the change of the local log-log slope across the window
    from a quadratic fit; it is flagged when the decay steepens by more than
    ``curvature_threshold``, the signature of an exponential tail. ``tail_onset``
    is the start of the first factor-2 sub-window (scanning the whole series
    from ``t = 1``) whose local exponent exceeds ``onset_factor`` times that of
    the first sub-window.
    """
    t, E = _series_arrays(series)
    t1, t2 = float(window[0]), float(window[1])
    if t1 < 1.0:
        raise ConfigError(f"fit window must start at t >= 1, got {t1}")
    if t2 < 10.0 * t1 * (1 - 1e-12):
        raise ConfigError(f"fit window [{t1}, {t2}] spans less than one decade")
    if t.size == 0 or t1 < t.min() or t2 > t.max() * (1 + 1e-12):
        raise ConfigError(f"fit window [{t1}, {t2}] lies outside the data range [{t.min() if t.size else 'nan'}, {t.max() if t.size else 'nan'}]")
    sel = (t >= t1) & (t <= t2 * (1 + 1e-12))
    if np.any(E[sel] <= 0):
        raise ConfigError("energy must be positive on the fit window")
    fit = fit_power_law(1.0 + t[sel], E[sel])
    lt, lE = np.log1p(t[sel]), np.log(E[sel])
    c2 = np.polyfit(lt, lE, 2)[0]
    slope_change = float(2.0 * c2 * (lt[-1] - lt[0]))

    starts, kappas = [], []
    s = max(1.0, float(t[t > 0].min()) if np.any(t > 0) else 1.0)
    while 2.0 * s <= t.max() * (1 + 1e-12):
        m = (t >= s) & (t <= 2.0 * s) & (E > 0)
        if m.sum() >= 4:
            starts.append(s)
            kappas.append(-fit_power_law(1.0 + t[m], E[m]).exponent)
        s *= 2.0
    onset = None
    if len(kappas) >= 2 and kappas[0] > 0:
        for s0, k in zip(starts[1:], kappas[1:]):
            if k > onset_factor * kappas[0]:
                onset = float(s0)
                break
    return DecayFitReport(
        t1=t1,
        t2=t2,
        kappa=-fit.exponent,
        stderr=fit.stderr,
        r2=fit.r2,
        slope_change=slope_change,
        curvature_flag=bool(slope_change < -curvature_threshold),
        tail_onset=onset,
        local_times=np.array(starts),
        local_kappa=np.array(kappas),
    )
