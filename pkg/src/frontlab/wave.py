"""Explicit finite-difference evolution of eps Box_h u + f0(u)/eps + kappa f1(u) = 0 in 1+1 dimensions.

The flat equation reads ``u_tt = u_xx - f0(u)/eps^2 - (kappa/eps) f1(u)``.  For a
static diagonal metric ``h = diag(-a(x)^2, b(x)^2)`` it becomes
``u_tt = (a/b) d_x((a/b) u_x) - a^2 (f0(u)/eps^2 + (kappa/eps) f1(u))``, discretized
in flux form.  Time stepping is the velocity form of the leapfrog scheme.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from . import __version__
from . import nonlinearity as nl
from .chart import build_gamma_param, build_normal_chart, mc_curve, parse_metric
from .errors import (CausticDetected, CFLViolation, ChartCoverage, ConfigError, DomainTooSmall,
                     NaNDetected, NotPositiveDefinite)

MIN_CELLS = 16


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    eps: float
    kappa: float | str = 1.0
    well: str | dict = "quartic"
    metric: str = "minkowski"
    domain: tuple[float, float] = (0.05, 6.0)
    T_final: float = 1.5
    dx: float | None = None
    cfl: float = 0.9
    data: str = "flat"
    r0: float = 1.0
    v0: float = 0.0
    rho: float = 1.0
    chart_rho: float | None = None
    cadence: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple(float(v) for v in self.domain))
        self.validate()

    @property
    def h(self):
        return self.eps / 8.0 if self.dx is None else float(self.dx)

    def validate(self):
        if not (0.0 < self.eps <= 1.0):
            raise ConfigError(f"eps must lie in (0, 1], got {self.eps}")
        if not (0.0 < self.cfl < 1.0):
            raise ConfigError(f"cfl must lie in (0, 1), got {self.cfl}")
        if self.dx is not None and not (0.0 < self.dx <= self.eps / 4.0):
            raise ConfigError(f"dx must lie in (0, eps/4] = (0, {self.eps / 4}], got {self.dx}")
        lo, hi = self.domain
        if not hi > lo:
            raise ConfigError("domain must be [x_min, x_max] with x_max > x_min")
        if self.T_final < 0:
            raise ConfigError("T_final must be nonnegative")
        if self.cadence <= 0:
            raise ConfigError("cadence must be positive")
        if self.data not in ("flat", "curved"):
            raise ConfigError(f"data must be 'flat' or 'curved', got {self.data!r}")
        if self.rho <= 0 or self.r0 <= 0:
            raise ConfigError("rho and r0 must be positive")
        if self.chart_rho is not None and self.chart_rho <= 0:
            raise ConfigError("chart_rho must be positive")
        if not abs(self.v0) < 1.0:
            raise ConfigError(f"v0 must satisfy |v0| < 1 (timelike start), got {self.v0}")
        if not (isinstance(self.kappa, (int, float)) or self.kappa == "builtin"):
            raise ConfigError(f"kappa must be a number or 'builtin', got {self.kappa!r}")
        _well_key(self.well)
        if self.metric != "minkowski":
            m = parse_metric(self.metric)
            if m.diag_coeffs is None:
                raise ConfigError(f"metric {self.metric!r} is not static and diagonal; "
                                  "the solver handles h = diag(-a(x)^2, b(x)^2)")

    def to_dict(self):
        d = asdict(self)
        d["domain"] = list(self.domain)
        return d

    def resolved(self):
        """Dictionary of the configuration with derived values filled in."""
        well, kappa = resolve_well(self)
        d = self.to_dict()
        d.update(dx=self.h, kappa_value=kappa, c0=well.c0, version=__version__)
        return d


def _well_key(spec):
    if spec == "quartic":
        return "quartic"
    if isinstance(spec, dict) and set(spec) <= {"poly", "eps"} and "poly" in spec:
        coeffs = spec["poly"]
        if not (isinstance(coeffs, list) and coeffs and all(isinstance(c, (int, float)) for c in coeffs)):
            raise ConfigError("well.poly must be a nonempty list of numbers (ascending powers)")
        return json.dumps({"poly": [float(c) for c in coeffs], "eps": float(spec.get("eps", 1.0))},
                          sort_keys=True)
    raise ConfigError(f"well must be 'quartic' or {{'poly': [...], 'eps': e}}, got {spec!r}")


@functools.lru_cache(maxsize=32)
def _well_from_key(key):
    if key == "quartic":
        return nl.quartic_well()
    spec = json.loads(key)
    well, _ = nl.decompose(nl.polynomial_nonlinearity(spec["poly"]), spec["eps"], name="poly")
    return well


def well_from_spec(spec):
    """The double well named by a config value: "quartic" or {"poly": [...], "eps": e}."""
    return _well_from_key(_well_key(spec))


def resolve_well(cfg):
    well = well_from_spec(cfg.well)
    if cfg.kappa == "builtin":
        return well, float(well.kappa_builtin or 0.0)
    return well, float(cfg.kappa)


@functools.lru_cache(maxsize=8)
def _profile_for(key):
    return nl.profile(_well_from_key(key))


def resolve_profile(cfg):
    return _profile_for(_well_key(cfg.well))


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldState:
    t: float
    x0: float
    dx: float
    u: np.ndarray = field(repr=False)
    ut: np.ndarray = field(repr=False)
    far_left: float = -1.0
    far_right: float = 1.0

    def __post_init__(self):
        if self.u.shape != self.ut.shape or self.u.ndim != 1:
            raise ValueError("u and ut must be 1D arrays of equal length")
        if self.u.size < MIN_CELLS:
            raise ValueError(f"a state needs at least {MIN_CELLS} cells")

    @property
    def x(self):
        return self.x0 + self.dx * np.arange(self.u.size)

    def far_field_error(self, cells=4):
        """Largest deviation from the far-field constants on the outermost cells."""
        return max(float(np.max(np.abs(self.u[:cells] - self.far_left))),
                   float(np.max(np.abs(self.u[-cells:] - self.far_right))))


def grid_for(cfg):
    lo, hi = cfg.domain
    n = int(round((hi - lo) / cfg.h)) + 1
    if n < MIN_CELLS:
        raise DomainTooSmall(f"domain holds only {n} grid points")
    return lo + cfg.h * np.arange(n)


def _check_band(cfg, centre, halfwidth):
    lo, hi = cfg.domain
    if centre - halfwidth < lo or centre + halfwidth > hi:
        raise DomainTooSmall(f"transition band [{centre - halfwidth:.6g}, {centre + halfwidth:.6g}] "
                             f"does not fit in the domain [{lo}, {hi}]")


def init_flat(cfg):
    """``u = qbar(x - r0)`` with the blended profile, ``u_t = 0``."""
    _check_band(cfg, cfg.r0, 2.0 * cfg.rho / 3.0 + 4 * cfg.h)
    x = grid_for(cfg)
    qbar = nl.blended_profile(resolve_profile(cfg), cfg.eps, cfg.rho)
    u = qbar(x - cfg.r0)
    return FieldState(t=0.0, x0=float(x[0]), dx=cfg.h, u=u, ut=np.zeros_like(u))


def reference_curve(cfg, horizon=None):
    """The curve of prescribed curvature the front should follow (t -> x).

    It starts at ``x = r0`` with coordinate velocity ``v0`` (in units of the local
    light speed ``a/b``) and is integrated over ``|t| <= horizon + 2``.
    """
    _, kappa = resolve_well(cfg)
    metric = parse_metric(cfg.metric)
    a_fn, b_fn = metric.diag_coeffs
    a0, b0 = float(a_fn(cfg.r0)), float(b_fn(cfg.r0))
    vel = cfg.v0 * a0 / b0
    T0 = 1.0 / np.sqrt(a0 ** 2 - (b0 * vel) ** 2)
    pad = 2.0 + (cfg.T_final if horizon is None else horizon)
    return mc_curve(metric, kappa, [0.0, cfg.r0], [T0, T0 * vel], (-pad, pad))


def chart_for(cfg, grid=None, T=None):
    """Normal chart around the reference curve on ``|y^0| <= T``.

    ``T`` defaults to ``T_final + 0.25``.  Points deep on the concave side of a
    curved front have feet far along the curve, so diagnostics that need the whole
    tube at late times should pass a larger ``T``.

    The half-width is ``chart_rho`` when set, otherwise ``2 rho``.  If the default
    width runs into a caustic or loses the energy-tensor bounds, it is pulled in by
    10% steps (starting inside the caustic) as long as the data's transition band
    ``|y^n| < 2 rho / 3`` stays inside.
    """
    metric = parse_metric(cfg.metric)
    T = max(cfg.T_final, 0.1) + 0.25 if T is None else float(T)
    gp = build_gamma_param(metric, reference_curve(cfg, horizon=T), T)
    if cfg.chart_rho is not None:
        return build_normal_chart(metric, gp, cfg.chart_rho, T, grid=grid)
    need = 2.0 * cfg.rho / 3.0
    rho_c = 2.0 * cfg.rho
    while True:
        try:
            return build_normal_chart(metric, gp, rho_c, T, grid=grid)
        except (CausticDetected, NotPositiveDefinite) as exc:
            yn = getattr(exc, "yn", None)
            rho_c = 0.9 * (min(yn, rho_c) if yn is not None else rho_c)
            if rho_c < need:
                raise ChartCoverage(f"no caustic-free chart around the reference curve covers "
                                    f"the transition band |y^n| < {need:.6g}") from exc


def curved_data(cfg, chart):
    """Initial data as functions of x: ``(u0, u1, (x_lo, x_hi))``.

    Inside the chart image of the initial slice, ``u0 = qbar(y^n)`` and ``u1`` is
    chosen so that ``d/dy^0 (u o phi) = 0`` at ``y^0 = 0``; outside it the data are
    the constants -1 (before the slice) and +1 (beyond it) with zero velocity.
    """
    if chart.rho < 2.0 * cfg.rho / 3.0:
        raise ChartCoverage(f"transition band |y^n| < {2 * cfg.rho / 3:.6g} exits the chart "
                            f"(half-width {chart.rho:.6g})")
    yn_fine = np.linspace(-chart.rho, chart.rho, 801)
    Y = np.column_stack([np.zeros_like(yn_fine), yn_fine])
    img, J = chart.jac(Y)
    xs = img[:, 1]
    if np.any(np.abs(img[:, 0]) > 1e-10) or np.any(np.diff(xs) <= 0):
        raise ChartCoverage("initial slice of the chart is not a monotone graph over x")
    inv = CubicSpline(xs, yn_fine)
    d0 = CubicSpline(yn_fine, J[:, :, 0])           # d phi / d y^0 along the slice
    dn1 = CubicSpline(yn_fine, J[:, 1, 1])          # d phi^1 / d y^n along the slice
    qbar = nl.blended_profile(resolve_profile(cfg), cfg.eps, cfg.rho)

    def u0(x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < xs[0], -1.0, 1.0)
        inside = (x >= xs[0]) & (x <= xs[-1])
        out[inside] = qbar(inv(x[inside]))
        return out

    def u1(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = (x >= xs[0]) & (x <= xs[-1])
        yn = inv(x[inside])
        ux = _qbar_derivative(qbar, yn, cfg.eps) / dn1(yn)
        dphi = d0(yn)
        out[inside] = -ux * dphi[:, 1] / dphi[:, 0]
        return out

    return u0, u1, (float(xs[0]), float(xs[-1]))


def init_curved(cfg, chart):
    """Well-prepared data transported through the chart's initial slice."""
    u0, u1, (lo, hi) = curved_data(cfg, chart)
    _check_band(cfg, 0.5 * (lo + hi), 0.5 * (hi - lo) + 4 * cfg.h)
    x = grid_for(cfg)
    return FieldState(t=0.0, x0=float(x[0]), dx=cfg.h, u=u0(x), ut=u1(x))


def _qbar_derivative(qbar, s, eps, h=None):
    h = 1e-3 * eps if h is None else h
    return (-qbar(s + 2 * h) + 8 * qbar(s + h) - 8 * qbar(s - h) + qbar(s - 2 * h)) / (12 * h)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Operator:
    """Spatial part ``u -> u_tt`` of the evolution, with its characteristic speed."""

    eps: float
    kappa: float
    f0: Callable
    f1: Callable
    dx: float
    c_half: np.ndarray | None = None   # a/b at half points (curved)
    c_node: np.ndarray | None = None   # a/b at nodes (curved)
    a2: np.ndarray | None = None       # a^2 at nodes (curved)
    forcing: Callable | None = None

    @property
    def speed(self):
        return 1.0 if self.c_node is None else float(np.max(self.c_node))

    def accel(self, u, t=0.0):
        a = np.zeros_like(u)
        inv2 = 1.0 / (self.dx * self.dx)
        if self.c_half is None:
            a[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) * inv2
        else:
            flux = self.c_half * (u[1:] - u[:-1])
            a[1:-1] = self.c_node[1:-1] * (flux[1:] - flux[:-1]) * inv2
        react = self.f0(u) / (self.eps * self.eps) + (self.kappa / self.eps) * self.f1(u)
        if self.a2 is not None:
            react = self.a2 * react
        a[1:-1] -= react[1:-1]
        if self.forcing is not None:
            a[1:-1] += self.forcing(t)[1:-1]
        return a


def operator_for(cfg, x=None):
    well, kappa = resolve_well(cfg)
    x = grid_for(cfg) if x is None else x
    if cfg.metric == "minkowski":
        return Operator(eps=cfg.eps, kappa=kappa, f0=well.f0, f1=well.f1, dx=cfg.h)
    a_fn, b_fn = parse_metric(cfg.metric).diag_coeffs
    xh = 0.5 * (x[1:] + x[:-1])
    return Operator(eps=cfg.eps, kappa=kappa, f0=well.f0, f1=well.f1, dx=cfg.h,
                    c_half=a_fn(xh) / b_fn(xh), c_node=a_fn(x) / b_fn(x), a2=a_fn(x) ** 2)


def time_step(cfg, op=None):
    """``(dt, stride, n_steps)``.

    ``dt = T_final / n_steps`` with the fewest steps keeping ``dt <= cfl dx / speed``,
    so the final time is hit exactly.  States are stored every ``stride`` steps
    (the cadence rounded to whole steps) and at ``T_final``.
    """
    op = operator_for(cfg) if op is None else op
    if cfg.T_final == 0:
        return 0.0, 0, 0
    n_steps = int(math.ceil(cfg.T_final * op.speed / (cfg.cfl * cfg.h) - 1e-12))
    dt = cfg.T_final / n_steps
    stride = max(1, int(round(cfg.cadence / dt)))
    return dt, stride, n_steps


def step(state, op, dt, acc=None):
    """One velocity-Verlet step; boundary cells stay at the far-field values.

    Returns ``(new_state, acceleration at the new level)`` so the caller can reuse it.
    """
    if dt * op.speed > op.dx * (1.0 + 1e-12):
        raise CFLViolation(f"dt * speed / dx = {dt * op.speed / op.dx:.6g} exceeds 1")
    u, v = state.u, state.ut
    with np.errstate(invalid="ignore", over="ignore"):
        a0 = op.accel(u, state.t) if acc is None else acc
        u1 = u + dt * v + 0.5 * dt * dt * a0
        u1[0], u1[-1] = state.far_left, state.far_right
        a1 = op.accel(u1, state.t + dt)
        v1 = v + 0.5 * dt * (a0 + a1)
    v1[0] = v1[-1] = 0.0
    if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(v1))):
        raise NaNDetected(f"non-finite values after the step to t = {state.t + dt:.6g}")
    return replace(state, t=state.t + dt, u=u1, ut=v1), a1


@dataclass
class Trajectory:
    config: RunConfig
    states: list
    dt: float
    steps: int
    boundary_drift: float = 0.0
    edge_drift: tuple = (0.0, 0.0)
    diagnostics: list = field(default_factory=list)

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    @property
    def x(self):
        return self.states[0].x

    def u_array(self):
        return np.array([s.u for s in self.states])

    def ut_array(self):
        return np.array([s.ut for s in self.states])


def run(cfg, diagnostics: Sequence[Callable] = (), initial=None, chart=None):
    """Evolve from the configured data to ``T_final``, storing states at the cadence.

    ``boundary_drift`` is the largest change of the two clamped boundary cells and
    ``edge_drift`` the largest change of the outermost four cells on each side.
    """
    if initial is None:
        if cfg.data == "flat":
            initial = init_flat(cfg)
        else:
            initial = init_curved(cfg, chart if chart is not None else chart_for(cfg))
    op = operator_for(cfg, initial.x)
    dt, stride, n_steps = time_step(cfg, op)
    state = initial
    traj = Trajectory(config=cfg, states=[state], dt=dt, steps=0)
    for fn in diagnostics:
        traj.diagnostics.append(fn(state))
    left0, right0 = initial.u[:4].copy(), initial.u[-4:].copy()
    bdrift, ldrift, rdrift = 0.0, 0.0, 0.0
    acc = None
    for k in range(1, n_steps + 1):
        state, acc = step(state, op, dt, acc)
        ldrift = max(ldrift, float(np.max(np.abs(state.u[:4] - left0))))
        rdrift = max(rdrift, float(np.max(np.abs(state.u[-4:] - right0))))
        bdrift = max(bdrift, abs(state.u[0] - left0[0]), abs(state.u[-1] - right0[-1]))
        if k % stride == 0 or k == n_steps:
            # pin the stored time to the step grid (no accumulated round-off)
            state = replace(state, t=k * cfg.T_final / n_steps)
            traj.states.append(state)
            for fn in diagnostics:
                traj.diagnostics.append(fn(state))
    traj.steps = n_steps
    traj.boundary_drift = bdrift
    traj.edge_drift = (ldrift, rdrift)
    return traj


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def write_snapshot(state, path, eps, kappa):
    """CSV ``x,u,ut`` plus a JSON sidecar with the time and grid metadata."""
    path = str(path)
    with open(path, "w") as fh:
        fh.write("x,u,ut\n")
        for row in zip(state.x, state.u, state.ut):
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")
    meta = {"t": state.t, "eps": eps, "kappa": kappa, "x0": state.x0, "dx": state.dx,
            "n": int(state.u.size), "far_left": state.far_left, "far_right": state.far_right}
    side = path[:-4] + ".json" if path.endswith(".csv") else path + ".json"
    with open(side, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return side
