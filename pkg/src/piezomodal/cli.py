"""
Command-line front end.

``piezomodal [--config PATH] [--out DIR] [--workers N] [--seed N] COMMAND [--section.key VALUE ...]``

Commands are ``simulate``, ``spectrum``, ``resolvent``, ``decay`` and ``check``.
Configuration is a flat INI file; any key can be overridden on the command line
as ``--section.key value``. Every emitted file name carries a prefix of the
SHA-256 of the resolved configuration, and each run writes a JSON run report
(even when it fails). Exit codes: 0 success, 2 configuration error, 3 numerical
or check failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import abscissa_sweep, decay_fit, log_lambda_grid, resolvent_sweep
from .assembly import Grid1D, PiezoSystem
from .dynamics import CayleyStepper, ModalState, SimulationSeries, energy_budget_residual, simulate, smooth_initial_state
from .errors import ConfigError, NumericalFailure, PiezoModalError
from .model import DampingProfile, PhysicalParams
from .oracle import convergence_study, dense_expm_propagate

__all__ = ["RunConfig", "RunReport", "CheckResult", "load_config", "main", "run_checks"]

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 2, 3

# --------------------------------------------------------------------- config

_POS = ("> 0", lambda v: v > 0)
_NONNEG = (">= 0", lambda v: v >= 0)
_ANY = ("any", lambda v: True)

# section -> key -> (type, default, (description, predicate))
SCHEMA: dict[str, dict[str, tuple]] = {
    "params": {
        "rho": (float, 1.0, _POS),
        "alpha": (float, 2.0, _POS),
        "gamma": (float, 0.5, _NONNEG),
        "mu": (float, 1.0, _POS),
        "beta": (float, 1.0, _POS),
    },
    "damping": {
        "a": (float, 0.3, ("in (0, 1)", lambda v: 0 < v < 1)),
        "b": (float, 0.7, ("in (0, 1)", lambda v: 0 < v < 1)),
        "d0": (float, 1.0, _NONNEG),
        "shape": (str, "indicator", ("indicator or smooth-ramp", lambda v: v in ("indicator", "smooth-ramp"))),
        "eps": (float, 0.0, _NONNEG),
    },
    "grid": {
        "n": (int, 128, (">= 2", lambda v: v >= 2)),
    },
    "modes": {
        "J": (int, 64, (">= 1", lambda v: v >= 1)),
        "j_max": (int, 32, (">= 0", lambda v: v >= 0)),
        "data_exponent": (float, 2.0, _NONNEG),
    },
    "time": {
        "dt": (float, 1e-3, _POS),
        "T": (float, 200.0, _POS),
        "sample_every": (int, 100, (">= 1", lambda v: v >= 1)),
    },
    "analysis": {
        "lambda_min": (float, 10.0, _POS),
        "lambda_max": (float, 1000.0, _POS),
        "lambda_points": (int, 13, (">= 1", lambda v: v >= 1)),
        "extra_modes": (int, 4, (">= 2", lambda v: v >= 2)),
        "j_cap": (int, -1, ("-1 (none) or >= 0", lambda v: v >= -1)),
        "method": (str, "auto", ("auto, dense or iterative", lambda v: v in ("auto", "dense", "iterative"))),
        "fit_t1": (float, 10.0, _POS),
        "fit_t2": (float, 100.0, _POS),
        "curvature_threshold": (float, 0.5, _POS),
    },
    "run": {
        "seed": (int, 0, _ANY),
    },
}


def _coerce(section: str, key: str, raw):
    try:
        kind, _, (desc, ok) = SCHEMA[section][key]
    except KeyError:
        raise ConfigError(f"unknown config key '{section}.{key}'") from None
    try:
        if kind is int:
            fval = float(raw)
            if not fval.is_integer():
                raise ValueError
            value = int(fval)
        elif kind is float:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError
        else:
            value = str(raw).strip()
    except (TypeError, ValueError):
        raise ConfigError(f"config key '{section}.{key}': cannot read {raw!r} as {kind.__name__}") from None
    if not ok(value):
        raise ConfigError(f"config key '{section}.{key}' must be {desc}, got {value!r}")
    return value


@dataclass
class RunConfig:
    """Resolved configuration: every key of :data:`SCHEMA` with a checked value."""

    values: dict[str, dict] = field(default_factory=lambda: {s: {k: spec[1] for k, spec in keys.items()} for s, keys in SCHEMA.items()})

    def __getitem__(self, dotted: str):
        section, key = dotted.split(".", 1)
        return self.values[section][key]

    def set(self, dotted: str, raw) -> None:
        if "." not in dotted:
            raise ConfigError(f"config key '{dotted}' must have the form section.key")
        section, key = dotted.split(".", 1)
        self.values[section][key] = _coerce(section, key, raw)

    def as_dict(self) -> dict:
        return {s: dict(v) for s, v in self.values.items()}

    def fingerprint(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # -- derived objects, each naming the offending key on failure

    def params(self) -> PhysicalParams:
        try:
            return PhysicalParams(**self.values["params"])
        except ConfigError as exc:
            raise ConfigError(f"config section 'params' (keys params.alpha, params.gamma, params.beta): {exc}") from exc

    def profile(self) -> DampingProfile | None:
        d = self.values["damping"]
        if d["d0"] == 0.0:
            return None
        try:
            return DampingProfile(a=d["a"], b=d["b"], d0=d["d0"], shape=d["shape"], eps=d["eps"])
        except ConfigError as exc:
            raise ConfigError(f"config section 'damping' (keys damping.a, damping.b, damping.eps): {exc}") from exc

    def grid(self) -> Grid1D:
        return Grid1D(self["grid.n"])

    def system(self) -> PiezoSystem:
        return PiezoSystem(self.params(), self.profile(), self.grid())

    def validate(self) -> "RunConfig":
        self.params()
        self.profile()
        if self["analysis.lambda_max"] <= self["analysis.lambda_min"]:
            raise ConfigError("config key 'analysis.lambda_max' must exceed analysis.lambda_min")
        if self["analysis.fit_t2"] <= self["analysis.fit_t1"]:
            raise ConfigError("config key 'analysis.fit_t2' must exceed analysis.fit_t1")
        return self


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the INI file at ``path``, then dotted ``overrides``."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keys are case sensitive (J vs j_max)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section '{section}'")
            for key, raw in parser.items(section):
                cfg.set(f"{section}.{key}", raw)
    for dotted, raw in (overrides or {}).items():
        cfg.set(dotted, raw)
    return cfg.validate()


# --------------------------------------------------------------------- report


@dataclass
class CheckResult:
    name: str
    status: str  # "pass" | "fail" | "skip"
    value: float | None = None
    tolerance: float | None = None
    detail: str = ""

    @property
    def failed(self) -> bool:
        return self.status == "fail"

    def as_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "value": self.value, "tolerance": self.tolerance, "detail": self.detail}


def _version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


@dataclass
class RunReport:
    command: str
    config: dict
    fingerprint: str
    version: str = field(default_factory=_version)
    timings: dict[str, float] = field(default_factory=dict)
    checks: list[CheckResult] = field(default_factory=list)
    files: list[str] = field(default_factory=list)
    results: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK
    error: str | None = None

    def timed(self, phase: str):
        report = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                report.timings[phase] = report.timings.get(phase, 0.0) + time.perf_counter() - self.t0
                return False

        return _Timer()

    @property
    def failed_checks(self) -> list[str]:
        return [c.name for c in self.checks if c.failed]

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "fingerprint": self.fingerprint,
            "version": self.version,
            "timings": self.timings,
            "checks": [c.as_dict() for c in self.checks],
            "files": self.files,
            "results": self.results,
            "exit_code": self.exit_code,
            "error": self.error,
        }

    def table(self) -> str:
        if not self.checks:
            return ""
        width = max(len(c.name) for c in self.checks)
        lines = []
        for c in self.checks:
            val = "" if c.value is None else f"  value={c.value:.3e}"
            tol = "" if c.tolerance is None else f"  tol={c.tolerance:.1e}"
            extra = f"  ({c.detail})" if c.detail else ""
            lines.append(f"{c.status.upper():4s}  {c.name:<{width}}{val}{tol}{extra}")
        return "\n".join(lines)


class OutputDir:
    """Fingerprint-named files under one directory.

    ``manifest.json`` records the full fingerprint behind every file name, so a
    name reused by a different configuration (a prefix collision) is refused
    instead of overwritten.
    """

    PREFIX = 16

    def __init__(self, root, fingerprint: str, command: str):
        self.root = Path(root)
        self.fingerprint = fingerprint
        self.stem = f"{command}-{fingerprint[: self.PREFIX]}"
        self.written: list[str] = []

    def _manifest(self) -> dict:
        path = self.root / "manifest.json"
        return json.loads(path.read_text()) if path.exists() else {}

    def path(self, suffix: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        name = f"{self.stem}{suffix}"
        manifest = self._manifest()
        owner = manifest.get(name)
        if owner is not None and owner != self.fingerprint:
            raise ConfigError(f"refusing to overwrite {name}: it belongs to fingerprint {owner}")
        manifest[name] = self.fingerprint
        (self.root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        out = self.root / name
        self.written.append(str(out))
        return out

    def write_json(self, suffix: str, payload: dict) -> Path:
        path = self.path(suffix)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path


# ------------------------------------------------------------------------ svg


def loglog_svg(x, y, path, xlabel: str = "x", ylabel: str = "y", fit: tuple[float, float] | None = None, width: int = 480, height: int = 360) -> Path:
    """Minimal log-log line plot; ``fit = (prefactor, exponent)`` adds a dashed power law."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    lx, ly = np.log10(x), np.log10(y)
    left, right, top, bottom = 60, 20, 20, 50
    x0, x1 = math.floor(lx.min()), math.ceil(lx.max())
    y0, y1 = math.floor(ly.min()), math.ceil(ly.max())
    x1 = max(x1, x0 + 1)
    y1 = max(y1, y0 + 1)

    def px(v):
        return left + (v - x0) / (x1 - x0) * (width - left - right)

    def py(v):
        return height - bottom - (v - y0) / (y1 - y0) * (height - top - bottom)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{width - left - right}" height="{height - top - bottom}" fill="none" stroke="black"/>',
    ]
    for d in range(x0, x1 + 1):
        parts.append(f'<line x1="{px(d):.2f}" y1="{top}" x2="{px(d):.2f}" y2="{height - bottom}" stroke="#ddd"/>')
        parts.append(f'<text x="{px(d):.2f}" y="{height - bottom + 16}" font-size="11" text-anchor="middle">1e{d}</text>')
    for d in range(y0, y1 + 1):
        parts.append(f'<line x1="{left}" y1="{py(d):.2f}" x2="{width - right}" y2="{py(d):.2f}" stroke="#ddd"/>')
        parts.append(f'<text x="{left - 6}" y="{py(d) + 4:.2f}" font-size="11" text-anchor="end">1e{d}</text>')
    pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(lx, ly))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>')
    if fit is not None:
        c, k = fit
        fy = np.log10(c) + k * lx
        fpts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(lx, fy))
        parts.append(f'<polyline points="{fpts}" fill="none" stroke="#c0392b" stroke-dasharray="5,4"/>')
        parts.append(f'<text x="{width - right - 4}" y="{top + 14}" font-size="12" text-anchor="end">slope {k:.3f}</text>')
    parts.append(f'<text x="{(left + width - right) / 2:.1f}" y="{height - 12}" font-size="12" text-anchor="middle">{xlabel}</text>')
    parts.append(
        f'<text x="14" y="{(top + height - bottom) / 2:.1f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {(top + height - bottom) / 2:.1f})">{ylabel}</text>'
    )
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n")
    return path


# --------------------------------------------------------------------- checks

DISSIPATION_TOL = 1e-12
CONSERVATION_TOL = 1e-9
BUDGET_TOL = 1e-9
ORACLE_TOL = 1e-6
ORDER_MIN = 1.9
CONVERGENCE_GRIDS = (16, 32, 64, 128)


def check_dissipation(cfg: RunConfig, modes=(0, 4, 16, 32), samples: int = 100, inject_fault: str | None = None) -> CheckResult:
    """``|Re(U* M A U) + z* Dd z| <= tol * U* M U`` over random complex states."""
    system = cfg.system()
    rng = np.random.default_rng(cfg["run.seed"])
    n = system.grid.n
    worst = 0.0
    for j in modes:
        op = system.operator(j)
        MA, M = op.MA, op.M
        Dd = system.mats.Dd
        if inject_fault == "dd":
            Dd = Dd.tolil(copy=True)
            Dd[n // 2, n // 2] += 1.0
            Dd = Dd.tocsr()
        U = rng.standard_normal((op.dim, samples)) + 1j * rng.standard_normal((op.dim, samples))
        z = U[n : 2 * n]
        lhs = np.real(np.sum(np.conj(U) * (MA @ U), axis=0))
        rhs = np.real(np.sum(np.conj(z) * (Dd @ z), axis=0))
        scale = np.real(np.sum(np.conj(U) * (M @ U), axis=0))
        worst = max(worst, float(np.max(np.abs(lhs + rhs) / scale)))
    status = "pass" if worst <= DISSIPATION_TOL else "fail"
    return CheckResult("dissipation_identity", status, worst, DISSIPATION_TOL, f"modes {list(modes)}, {samples} states each")


def check_conservation(cfg: RunConfig, T: float = 10.0, dt: float = 1e-3, J: int = 8) -> CheckResult:
    """Undamped run: ``|E(T) - E(0)| <= tol * E(0)``."""
    system = PiezoSystem(cfg.params(), None, cfg.grid())
    init = smooth_initial_state(system.grid, J, exponent=cfg["modes.data_exponent"])
    series = simulate(system, init, T=T, dt=dt, sample_every=max(1, int(round(T / dt))))
    rel = abs(series.E[-1] - series.E[0]) / series.E[0]
    return CheckResult("conservation_undamped", "pass" if rel <= CONSERVATION_TOL else "fail", float(rel), CONSERVATION_TOL, f"T={T}, dt={dt}, J={J}")


def check_budget(cfg: RunConfig, steps: int = 10_000, dt: float = 1e-3, J: int = 8) -> CheckResult:
    """Damped run: per-sample ``|dE + dt P_mid| <= tol * E(0)``."""
    system = cfg.system()
    init = smooth_initial_state(system.grid, J, exponent=cfg["modes.data_exponent"])
    series = simulate(system, init, T=steps * dt, dt=dt, sample_every=1)
    rel = energy_budget_residual(series) / series.E[0]
    return CheckResult("energy_budget", "pass" if rel <= BUDGET_TOL else "fail", float(rel), BUDGET_TOL, f"{steps} steps, dt={dt}, J={J}")


def oracle_errors(cfg: RunConfig, vectors: int = 5, n: int = 8, t: float = 1.0, dt: float = 1e-3) -> np.ndarray:
    """Relative energy-norm gap between trapezoidal steps and ``expm`` for random data."""
    system = PiezoSystem(cfg.params(), cfg.profile(), Grid1D(n))
    op = system.operator(0)
    stepper = CayleyStepper(system, 1, dt)
    rng = np.random.default_rng(cfg["run.seed"])
    nsteps = int(round(t / dt))
    errs = []
    for _ in range(vectors):
        U0 = rng.standard_normal(op.dim)
        ref = dense_expm_propagate(op, U0, t)
        x, y = stepper.pack(ModalState.from_modes([U0]))
        for _ in range(nsteps):
            x, y, _ = stepper.advance(x, y)
        U = stepper.unpack(x, y, t).mode(0)
        d = U - ref
        errs.append(math.sqrt(d @ (op.M @ d)) / math.sqrt(ref @ (op.M @ ref)))
    return np.array(errs)


def check_oracle(cfg: RunConfig) -> CheckResult:
    errs = oracle_errors(cfg)
    worst = float(errs.max())
    return CheckResult("oracle_equivalence", "pass" if worst <= ORACLE_TOL else "fail", worst, ORACLE_TOL, "n=8, J=1, t=1, dt=1e-3, 5 random vectors")


def check_convergence(cfg: RunConfig, modes=(0, 4), m_max: int = 4) -> CheckResult:
    grids = [g for g in CONVERGENCE_GRIDS if g <= cfg["grid.n"]]
    if len(grids) < 3:
        return CheckResult("convergence_order", "skip", detail=f"grid.n={cfg['grid.n']} leaves {len(grids)} of the refinement levels {list(CONVERGENCE_GRIDS)}; need 3")
    params = PhysicalParams(**cfg.values["params"])
    worst = math.inf
    for j in modes:
        for m in range(m_max + 1):
            for branch in ("minus", "plus"):
                worst = min(worst, convergence_study(params, j, m, grids, branch).min_order)
    status = "pass" if worst >= ORDER_MIN else "fail"
    return CheckResult("convergence_order", status, worst, ORDER_MIN, f"n in {grids}, j in {list(modes)}, m <= {m_max}, both branches")


def run_checks(cfg: RunConfig, report: RunReport | None = None, inject_fault: str | None = None) -> list[CheckResult]:
    """The built-in invariant battery, in a fixed order."""
    battery = [
        ("dissipation", lambda: check_dissipation(cfg, inject_fault=inject_fault)),
        ("conservation", lambda: check_conservation(cfg)),
        ("budget", lambda: check_budget(cfg)),
        ("oracle", lambda: check_oracle(cfg)),
        ("convergence", lambda: check_convergence(cfg)),
    ]
    out = []
    for phase, fn in battery:
        if report is None:
            out.append(fn())
        else:
            with report.timed(phase):
                out.append(fn())
    return out


# ------------------------------------------------------------------- commands


def cmd_simulate(cfg: RunConfig, args, report: RunReport, out: OutputDir) -> None:
    system = cfg.system()
    with report.timed("setup"):
        init = smooth_initial_state(system.grid, cfg["modes.J"], exponent=cfg["modes.data_exponent"])
    with report.timed("simulate"):
        series = simulate(system, init, T=cfg["time.T"], dt=cfg["time.dt"], sample_every=cfg["time.sample_every"])
    series.to_csv(out.path(".csv"))
    series.metadata["config"] = cfg.as_dict()
    series.metadata["data_exponent"] = cfg["modes.data_exponent"]
    series.write_metadata(out.path("-metadata.json"))
    _series_checks(series, system.profile is None, report)
    report.results = {"E0": float(series.E[0]), "E_final": float(series.E[-1]), "samples": len(series)}


def _series_checks(series: SimulationSeries, undamped: bool, report: RunReport) -> None:
    e0 = series.E[0]
    budget = energy_budget_residual(series) / e0
    report.checks.append(CheckResult("energy_budget", "pass" if budget <= BUDGET_TOL else "fail", budget, BUDGET_TOL))
    if undamped:
        drift = float(np.max(np.abs(series.E - e0)) / e0)
        report.checks.append(CheckResult("energy_constant", "pass" if drift <= CONSERVATION_TOL else "fail", drift, CONSERVATION_TOL))
    else:
        rise = float(max(0.0, np.max(np.diff(series.E))) / e0)
        report.checks.append(CheckResult("energy_monotone", "pass" if series.is_monotone() else "fail", rise, 0.0))


def cmd_spectrum(cfg: RunConfig, args, report: RunReport, out: OutputDir) -> None:
    system = cfg.system()
    modes = range(cfg["modes.j_max"] + 1)
    with report.timed("eig"):
        table = abscissa_sweep(system, modes, workers=args.workers, strict=False)
    path = out.path(".csv")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "abscissa", "min_abs_real"])
        for j, s, m in zip(table.modes, table.abscissa, table.min_abs_real):
            w.writerow([int(j), repr(float(s)), repr(float(m))])
    payload = {
        "config": cfg.as_dict(),
        "modes": [int(j) for j in table.modes],
        "xi": [float(x) for x in table.xi],
        "abscissa": [float(s) for s in table.abscissa],
        "min_abs_real": [float(m) for m in table.min_abs_real],
        "decay_power": table.decay_power,
    }
    out.write_json(".json", payload)
    worst = float(table.abscissa.max())
    if system.profile is None:
        spread = float(np.max(np.abs(table.abscissa)))
        report.checks.append(CheckResult("abscissa_zero_undamped", "pass" if spread <= 1e-10 else "fail", spread, 1e-10))
    else:
        report.checks.append(CheckResult("abscissa_negative", "pass" if worst < -1e-10 else "fail", worst, -1e-10))
    report.results = {"max_abscissa": worst, "decay_power": table.decay_power}


def cmd_resolvent(cfg: RunConfig, args, report: RunReport, out: OutputDir) -> None:
    system = cfg.system()
    lambdas = log_lambda_grid(cfg["analysis.lambda_min"], cfg["analysis.lambda_max"], cfg["analysis.lambda_points"])
    j_cap = cfg["analysis.j_cap"]
    try:
        with report.timed("sweep"):
            rep = resolvent_sweep(
                system,
                lambdas,
                extra_modes=cfg["analysis.extra_modes"],
                j_cap=None if j_cap < 0 else j_cap,
                method=cfg["analysis.method"],
                workers=args.workers,
                strict=False,
            )
    except ConfigError as exc:
        raise ConfigError(f"config keys 'analysis.lambda_min', 'analysis.lambda_max', 'analysis.lambda_points': {exc}") from exc
    path = out.path(".csv")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "sup_resolvent_norm", "argmax_mode"])
        for lam, s, j in zip(rep.lambdas, rep.sup_norm, rep.argmax_mode):
            w.writerow([repr(float(lam)), repr(float(s)), int(j)])
    out.write_json(".json", {"config": cfg.as_dict(), **rep.to_dict()})
    loglog_svg(rep.lambdas, rep.sup_norm, out.path(".svg"), "lambda", "sup_j ||(i lambda - A_j)^-1||_M", fit=(rep.fit.prefactor, rep.fit.exponent))
    report.checks.append(
        CheckResult("ModeCutoffSuspect", "pass" if rep.audit_passed else "fail", detail="tail audit: last three mode norms strictly decreasing")
    )
    report.results = {"exponent": rep.fit.exponent, "exponent_stderr": rep.fit.stderr, "r2": rep.fit.r2}


def cmd_decay(cfg: RunConfig, args, report: RunReport, out: OutputDir) -> None:
    if args.series_from_file:
        series = SimulationSeries.from_csv(args.series_from_file)
    else:
        system = cfg.system()
        init = smooth_initial_state(system.grid, cfg["modes.J"], exponent=cfg["modes.data_exponent"])
        with report.timed("simulate"):
            series = simulate(system, init, T=cfg["time.T"], dt=cfg["time.dt"], sample_every=cfg["time.sample_every"])
        series.to_csv(out.path("-series.csv"))
        _series_checks(series, system.profile is None, report)
    try:
        with report.timed("fit"):
            fit = decay_fit(
                series,
                window=(cfg["analysis.fit_t1"], cfg["analysis.fit_t2"]),
                curvature_threshold=cfg["analysis.curvature_threshold"],
            )
    except ConfigError as exc:
        raise ConfigError(f"config keys 'analysis.fit_t1', 'analysis.fit_t2': {exc}") from exc
    out.write_json(".json", {"config": cfg.as_dict(), "source": "file" if args.series_from_file else "simulation", **fit.to_dict()})
    report.results = {"kappa": fit.kappa, "kappa_stderr": fit.stderr, "curvature_flag": fit.curvature_flag, "tail_onset": fit.tail_onset}


def cmd_check(cfg: RunConfig, args, report: RunReport, out: OutputDir) -> None:
    report.checks.extend(run_checks(cfg, report, inject_fault=args.inject_fault))


COMMANDS = {
    "simulate": cmd_simulate,
    "spectrum": cmd_spectrum,
    "resolvent": cmd_resolvent,
    "decay": cmd_decay,
    "check": cmd_check,
}


# ----------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="piezomodal", description="Modal lab for the damped piezoelectric beam with magnetic effect.")
    parser.add_argument("--config", metavar="PATH", help="INI file with sections " + ", ".join(SCHEMA))
    parser.add_argument("--out", metavar="DIR", default="piezomodal-out", help="output directory")
    parser.add_argument("--workers", metavar="N", type=int, default=1, help="threads for mode-parallel maps")
    parser.add_argument("--seed", metavar="N", type=int, default=None, help="seed for randomized checks (run.seed)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("simulate", help="time-step the modal system and record E and P")
    sub.add_parser("spectrum", help="spectral abscissa per mode")
    sub.add_parser("resolvent", help="resolvent growth sweep with SVG plot")
    p_decay = sub.add_parser("decay", help="simulate (or read a series) and fit E ~ t^-kappa")
    p_decay.add_argument("--series-from-file", metavar="CSV", help="fit an existing t,E,P series instead of simulating")
    p_check = sub.add_parser("check", help="run the invariant battery")
    p_check.add_argument("--inject-fault", choices=["dd"], help=argparse.SUPPRESS)
    return parser


def _split_overrides(extra: list[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(f"unrecognized argument '{tok}' (config overrides look like --section.key value)")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            value = next(it, None)
            if value is None:
                raise ConfigError(f"config key '{key}' given without a value")
        overrides[key] = value
    return overrides


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if args.workers < 1:
        print("config error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    # provisional report: a configuration that fails to load is still reported,
    # keyed by a hash of the raw command line
    raw = json.dumps({"argv": list(argv if argv is not None else sys.argv[1:])}, sort_keys=True)
    fp = hashlib.sha256(raw.encode()).hexdigest()
    report = RunReport(command=args.command, config={"unresolved": json.loads(raw)}, fingerprint=fp)
    out = OutputDir(args.out, fp, args.command)
    try:
        overrides = _split_overrides(extra)
        if args.seed is not None:
            overrides["run.seed"] = str(args.seed)
        cfg = load_config(args.config, overrides)
        fp = cfg.fingerprint()
        source = getattr(args, "series_from_file", None)
        if source:
            try:
                digest = hashlib.sha256(Path(source).read_bytes()).hexdigest()
            except OSError as exc:
                raise ConfigError(f"cannot read --series-from-file {source}: {exc}") from exc
            fp = hashlib.sha256(f"{fp}:{digest}".encode()).hexdigest()
        report = RunReport(command=args.command, config=cfg.as_dict(), fingerprint=fp)
        out = OutputDir(args.out, fp, args.command)
        COMMANDS[args.command](cfg, args, report, out)
        if report.failed_checks:
            report.exit_code = EXIT_FAILURE
            report.error = "failed checks: " + ", ".join(report.failed_checks)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        report.exit_code, report.error = EXIT_CONFIG, f"{type(exc).__name__}: {exc}"
    except (NumericalFailure, PiezoModalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        report.exit_code, report.error = EXIT_FAILURE, f"{type(exc).__name__}: {exc}"
        print(f"numerical failure: {report.error}", file=sys.stderr)
    if report.checks:
        print(report.table())
    report.files = list(out.written)
    try:
        report.files.append(str(out.root / f"{out.stem}-report.json"))
        out.write_json("-report.json", report.as_dict())
    except (OSError, ConfigError) as exc:
        print(f"could not write run report: {exc}", file=sys.stderr)
    if report.exit_code == EXIT_FAILURE and report.failed_checks:
        print("check failure: " + ", ".join(report.failed_checks), file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
