"""JSON experiment specifications for the command line runner.

One schema serves every subcommand.  Unknown keys at any level are errors, so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .wave import RunConfig

KINDS = ("run", "sweep", "chart-test", "profile", "decompose", "convergence")


@dataclass(frozen=True)
class DiagnosticOptions:
    """What cmd_run and cmd_sweep measure and the bounds they assert."""

    n_theta: int = 21
    theta_max: float = 1.0
    ray_margin: float = 2.0            # rays must reach r0 + margin * eps within the run
    interface_factor: float = 2.0      # assert sup |x_eps - gamma| <= factor * eps
    energy_tolerance: float = 5e-3     # assert total energy >= c0 - tolerance
    drift_tolerance: float = 1e-12
    deficiency_tolerance: float = 1e-8
    ratio_window: float = 4.0          # sweep ratios must lie in [1/w, w]
    exterior: bool = True
    exterior_horizon: float = 5.0
    exterior_n_y0: int = 201
    zeta_cadence: float = 0.25         # stored slices at least every zeta_cadence * eps
    n_s: int = 8                       # chart times for the curved zeta series
    s_fraction: float = 0.95           # of the admissible s1


@dataclass(frozen=True)
class ChartTestOptions:
    metric: str = "minkowski"
    kappa: float = 1.0
    r0: float = 1.0
    v0: float = 0.0
    rho: float = 0.4
    T: float = 2.0
    n_y0: int | None = None
    n_yn: int | None = None
    tolerance: float = 1e-6
    sigma_tolerance: float = 1e-8
    curvature_tolerance: float | None = None   # defaults to 1e-6 flat, 1e-3 curved
    order_tolerance: float = 0.3


@dataclass(frozen=True)
class ProfileOptions:
    well: str | dict = "quartic"
    s_max: float = 30.0
    ds: float = 0.01
    check_range: float = 8.0
    tanh_tolerance: float = 1e-8


@dataclass(frozen=True)
class DecomposeOptions:
    poly: tuple = ()
    eps: float = 1.0
    u_range: tuple = (-1.5, 1.5)
    n_samples: int = 3001
    expect_eps_kappa: float | None = None
    eps_kappa_tolerance: float = 1e-6
    expect_potential: str | None = None        # "quartic" compares with (1 - u^2)^2 / 2
    potential_tolerance: float = 1e-8


@dataclass(frozen=True)
class ConvergenceOptions:
    levels: int = 3
    window: dict | None = None   # {"tc", "xc", "half_t", "half_x"}; centred on the front if omitted
    expected_order: float = 2.0
    order_tolerance: float = 0.3


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    base: RunConfig | None = None
    sweep_eps: tuple = ()
    output_dir: Path = Path("out")
    diagnostics: DiagnosticOptions = field(default_factory=DiagnosticOptions)
    chart: ChartTestOptions = field(default_factory=ChartTestOptions)
    profile: ProfileOptions = field(default_factory=ProfileOptions)
    decompose: DecomposeOptions = field(default_factory=DecomposeOptions)
    convergence: ConvergenceOptions = field(default_factory=ConvergenceOptions)
    deterministic: bool = True
    assertions: bool = True

    def runs(self):
        """The run configurations this spec asks for, one per eps for a sweep."""
        if self.kind == "sweep":
            return [replace(self.base, eps=e) for e in self.sweep_eps]
        return [self.base]

    def to_dict(self):
        d = {"kind": self.kind, "output_dir": str(self.output_dir),
             "deterministic": self.deterministic, "assertions": self.assertions}
        if self.base is not None:
            d["run"] = self.base.resolved()
        if self.kind == "sweep":
            d["sweep_eps"] = list(self.sweep_eps)
        section = {"run": "diagnostics", "sweep": "diagnostics", "chart-test": "chart",
                   "profile": "profile", "decompose": "decompose",
                   "convergence": "convergence"}[self.kind]
        d[section] = asdict(getattr(self, section))
        return d


_SECTIONS = {"diagnostics": DiagnosticOptions, "chart": ChartTestOptions,
             "profile": ProfileOptions, "decompose": DecomposeOptions,
             "convergence": ConvergenceOptions}
_TOP_KEYS = {"kind", "run", "sweep_eps", "output_dir"} | set(_SECTIONS)
_TUPLES = {"domain", "poly", "u_range"}


def _section(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    values = {k: tuple(v) if k in _TUPLES and isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _run_config(data, eps=None):
    data = dict(data)
    if eps is not None:
        data.setdefault("eps", eps)
    if "eps" not in data:
        raise ConfigError("run.eps is required")
    return _section(RunConfig, data, "run")


def _check_writable(path):
    path = Path(path)
    probe = path
    while not probe.exists():
        probe = probe.parent
    if not probe.is_dir() or not os.access(probe, os.W_OK):
        raise ConfigError(f"output directory {str(path)!r} is not writable")
    return path


def spec_from_dict(data, kind, output_dir=None):
    """Validate a decoded config document for the subcommand ``kind``."""
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    if not isinstance(data, dict):
        raise ConfigError("the config must be a JSON object")
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    if data.get("kind", kind) != kind:
        raise ConfigError(f"config is for {data['kind']!r} but the subcommand is {kind!r}")

    kw = {name: _section(cls, data.get(name, {}), name) for name, cls in _SECTIONS.items()}
    sweep_eps = ()
    if kind == "sweep":
        raw = data.get("sweep_eps")
        if not isinstance(raw, list) or not all(isinstance(e, (int, float)) for e in raw):
            raise ConfigError("sweep_eps must be a list of numbers")
        sweep_eps = tuple(float(e) for e in raw)
        if len(sweep_eps) < 2:
            raise ConfigError(f"a sweep needs at least 2 eps values, got {len(sweep_eps)}")
        if any(not 0.0 < e <= 1.0 for e in sweep_eps):
            raise ConfigError("every sweep eps must lie in (0, 1]")
        if any(b >= a for a, b in zip(sweep_eps, sweep_eps[1:])):
            raise ConfigError("sweep_eps must be strictly decreasing")
    elif "sweep_eps" in data:
        raise ConfigError(f"sweep_eps is only meaningful for a sweep, not {kind!r}")

    base = None
    if kind in ("run", "sweep", "convergence"):
        base = _run_config(data.get("run", {}), sweep_eps[0] if sweep_eps else None)
        if kind == "sweep":
            for e in sweep_eps:          # per-eps validation (dx bounds, eps range)
                replace(base, eps=e)
    elif "run" in data:
        raise ConfigError(f"a 'run' section is not used by {kind!r}")
    if kind == "decompose" and not kw["decompose"].poly:
        raise ConfigError("decompose.poly is required (ascending coefficients)")
    if kind == "convergence" and kw["convergence"].levels < 3:
        raise ConfigError("convergence.levels must be at least 3")

    out = output_dir if output_dir is not None else data.get("output_dir", "out")
    return ExperimentSpec(kind=kind, base=base, sweep_eps=sweep_eps,
                          output_dir=_check_writable(out), **kw)


def load_spec(path, kind, output_dir=None):
    """Read and validate a JSON config file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {str(path)!r} is not valid JSON: {exc}") from exc
    return spec_from_dict(data, kind, output_dir)
