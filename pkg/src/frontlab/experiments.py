"""Measurements behind the command line subcommands.

Each ``measure_*`` function takes validated options, does the numerical work and
returns a plain result dictionary with a list of checks.  Nothing here writes
files, so the functions can run in worker processes and be tested directly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import replace

import numpy as np

from . import nonlinearity as nl
from .chart import (block_orders, build_gamma_param, build_normal_chart, eikonal_residual,
                    mc_curve, mean_curvature, parse_metric)
from .diagnostics import (BumpWindow, SpaceTimeField, energy_identity_residual, exterior_energy,
                          l2_distance_to_sign, polar_r_grid, s_limit, total_energy,
                          track_interface, zeta_curved_series, zeta_polar_series)
from .errors import ConfigError, OutsideWedge, TruncationWarning
from .wave import chart_for, reference_curve, resolve_well, run, well_from_spec


def check(name, value, bound, relation="<="):
    """One pass/fail record.  ``relation`` is "<=", ">=" or "in" (bound is [lo, hi])."""
    value = float(value)
    if relation == "<=":
        passed = value <= bound
    elif relation == ">=":
        passed = value >= bound
    elif relation == "in":
        passed = bound[0] <= value <= bound[1]
    else:
        raise ValueError(f"unknown relation {relation!r}")
    return {"name": name, "value": value, "bound": bound, "relation": relation,
            "passed": bool(passed and math.isfinite(value))}


def all_passed(checks):
    return all(c["passed"] for c in checks)


def _is_polar(cfg, kappa):
    """Flat data around the hyperbola |x|^2 - t^2 = r0^2, where the polar functionals apply."""
    return cfg.metric == "minkowski" and cfg.data == "flat" and abs(kappa * cfg.r0 - 1.0) < 1e-12


def _covered_thetas(field, thetas, reach):
    """The rays whose stored part extends to ``r >= reach`` (past the front)."""
    keep = []
    for th in thetas:
        try:
            r = polar_r_grid(field, th, field.dx)
        except OutsideWedge:
            continue
        if r[-1] >= reach:
            keep.append(th)
    return np.array(keep)


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------

def measure_run(cfg, opts):
    """Evolve ``cfg`` and evaluate every configured diagnostic.

    Returns ``{"scalars", "timeseries", "zeta", "checks"}``.  With ``T_final = 0``
    only the initial slice is measured.
    """
    well, kappa = resolve_well(cfg)
    eps = cfg.eps
    polar = _is_polar(cfg, kappa)
    # the zeta functionals interpolate the stored slices in time (cubic Hermite);
    # coarser storage than about eps/4 shows up as a spurious zeta2 > zeta1
    cfg = replace(cfg, cadence=min(cfg.cadence, opts.zeta_cadence * eps))
    chart = None if cfg.data == "flat" else chart_for(cfg)
    traj = run(cfg, chart=chart)
    curve = reference_curve(cfg)
    initial_only = cfg.T_final == 0.0

    track = track_interface(traj, reference=curve.position, strict=False)
    errors = track.errors
    checks = [check("single crossing in every snapshot", np.count_nonzero(~track.valid), 0)]
    sup_err = float(np.nanmax(errors)) if np.any(track.valid) else math.nan
    checks.append(check("interface error <= factor * eps", sup_err, opts.interface_factor * eps))
    if kappa == 0.0:
        checks.append(check("static interface error <= dx", sup_err, cfg.h))
    checks.append(check("boundary drift", traj.boundary_drift, opts.drift_tolerance))

    scalars = {"interface_error": sup_err, "boundary_drift": traj.boundary_drift,
               "edge_drift_left": traj.edge_drift[0], "edge_drift_right": traj.edge_drift[1],
               "dt": traj.dt, "steps": traj.steps, "cadence": cfg.cadence,
               "n_snapshots": len(traj.states), "kappa": kappa, "c0": well.c0}

    energy = np.full(len(traj.states), math.nan)
    if cfg.metric == "minkowski":
        energy = np.array([total_energy(s, eps, well) for s in traj.states])
        spans = np.array([s.u[0] < 0 < s.u[-1] or s.u[0] > 0 > s.u[-1] for s in traj.states])
        e_min = float(energy[spans].min()) if spans.any() else math.nan
        scalars["energy_min"] = e_min
        checks.append(check("energy >= c0 - tolerance", e_min, well.c0 - opts.energy_tolerance, ">="))

    field = SpaceTimeField.from_trajectory(traj)
    zeta = None
    if polar:
        thetas = [0.0] if initial_only else np.linspace(-opts.theta_max, opts.theta_max, opts.n_theta)
        thetas = _covered_thetas(field, thetas, cfg.r0 + opts.ray_margin * eps)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            zs = zeta_polar_series(field, thetas, eps, cfg.r0, well)
        zeta = {"coordinate": "theta", "times": zs.times, "zeta1": zs.zeta1, "zeta2": zs.zeta2,
                "zeta3": zs.zeta3, "deficiency": zs.deficiency, "truncated": zs.truncated}
        scalars.update(zeta1_0=zs.zeta1_at_zero, zeta1_max=float(zs.zeta1.max()),
                       zeta2_max=float(zs.zeta2.max()), truncated_rays=int(zs.truncated.sum()))
        # a ray cut off inside the transition misses part of its radial energy, so
        # the comparisons are only made on complete rays
        full = ~zs.truncated
        if full.any():
            checks.append(check("zeta2 - zeta1 <= 0", float(np.max((zs.zeta2 - zs.zeta1)[full])), 1e-10))
            checks.append(check("deficiency - zeta1",
                                float(np.max((zs.deficiency - zs.zeta1)[full])),
                                opts.deficiency_tolerance))
    else:
        chart = chart if chart is not None else chart_for(cfg)
        s1 = s_limit(chart, cfg.rho)
        s_hi = min(opts.s_fraction * s1, cfg.T_final)
        s_values = [0.0] if initial_only else np.linspace(0.0, s_hi, opts.n_s)
        zs = zeta_curved_series(field, chart, well, eps, cfg.rho, s_values)
        zeta = {"coordinate": "s", "times": zs.times, "zeta1": zs.zeta1, "zeta2": zs.zeta2,
                "zeta3": zs.zeta3, "deficiency": np.full(zs.times.size, math.nan),
                "bad_volume": zs.meta["bad_volume"]}
        scalars.update(s1=s1, c5=zs.meta["c5"], chart_rho=chart.rho,
                       zeta1_0=float(zs.zeta1[0]), zeta1_max=float(zs.zeta1.max()),
                       zeta2_max=float(zs.zeta2.max()), zeta3_max=float(zs.zeta3.max()))
        checks.append(check("bad volume", float(np.max(zs.meta["bad_volume"])), 0.0))

    exterior = np.full(len(traj.states), math.nan)
    if not initial_only:
        scalars["l2"] = l2_distance_to_sign(traj, curve.position)
        if opts.exterior:
            wide = chart_for(cfg, grid={"n_y0": opts.exterior_n_y0}, T=opts.exterior_horizon)
            _, exterior, total = exterior_energy(traj, wide, cfg.rho, well)
            scalars.update(exterior_max=float(exterior.max()), exterior_integral=total)

    ref = np.array([float(curve.position(t)) for t in traj.times])
    series = {"t": traj.times, "interface": track.positions, "reference": ref,
              "interface_error": errors, "energy": energy, "exterior_energy": exterior}
    return {"scalars": scalars, "timeseries": series, "zeta": zeta, "checks": checks}


def run_worker(args):
    """Process-pool entry point: ``(cfg, opts) -> measure_run(cfg, opts)``."""
    cfg, opts = args
    return measure_run(cfg, opts)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

SCALING = (("zeta1_0", 2), ("zeta1_max", 2), ("zeta2_max", 2), ("zeta3_max", 2), ("l2", 1),
           ("interface_error", 1), ("exterior_max", 2))


def scaling_table(eps_values, results, window):
    """Rows ``(quantity, eps, value, ratio to previous eps)`` and a check per ratio.

    Each quantity is divided by the power of eps it is expected to scale with.
    """
    rows, checks = [], []
    for key, power in SCALING:
        if not all(key in r["scalars"] for r in results):
            continue
        name = f"{key}/eps^{power}" if power > 1 else f"{key}/eps"
        values = [r["scalars"][key] / e ** power for e, r in zip(eps_values, results)]
        prev = None
        for e, v in zip(eps_values, values):
            ratio = math.nan if prev is None else v / prev
            rows.append((name, e, v, ratio))
            if prev is not None:
                checks.append(check(f"{name} ratio at eps={e:.6g}", ratio, [1.0 / window, window], "in"))
            prev = v
    return rows, checks


# ---------------------------------------------------------------------------
# chart battery
# ---------------------------------------------------------------------------

def _start_tangent(metric, r0, v0):
    h = metric.h(np.array([0.0, r0]))
    norm = -(h[0, 0] + 2 * h[0, 1] * v0 + h[1, 1] * v0 ** 2)
    if norm <= 0:
        raise ConfigError(f"initial velocity v0 = {v0} is not timelike at x = {r0}")
    T0 = 1.0 / math.sqrt(norm)
    return [T0, T0 * v0]


def measure_chart(opts):
    """Build the normal chart around the constant-curvature curve and test its invariants.

    Construction errors (caustics, curves leaving the box) propagate to the caller.
    """
    metric = parse_metric(opts.metric)
    pad = opts.T + 1.0
    curve = mc_curve(metric, opts.kappa, [0.0, opts.r0], _start_tangent(metric, opts.r0, opts.v0),
                     (-pad, pad))
    gp = build_gamma_param(metric, curve, opts.T)
    grid = {k: v for k, v in (("n_y0", opts.n_y0), ("n_yn", opts.n_yn)) if v is not None} or None
    chart = build_normal_chart(metric, gp, opts.rho, opts.T, grid=grid)

    tol = opts.tolerance
    gt = chart.g_tilde(chart.grid)
    checks = [check("g_nn = 1", np.max(np.abs(gt[..., -1, -1] - 1.0)), tol),
              check("g_an = 0", np.max(np.abs(gt[..., :-1, -1])), tol)]
    y0 = np.linspace(-0.8 * chart.T, 0.8 * chart.T, 7)
    yn = np.linspace(-0.8 * chart.rho, 0.8 * chart.rho, 7)
    Y = np.stack(np.meshgrid(y0, yn, indexing="ij"), axis=-1).reshape(-1, 2)
    res, _ = eikonal_residual(chart, chart.phi(Y))
    checks.append(check("eikonal residual", np.max(res), tol))
    sig, grad = chart.sigma(np.array([[0.0]]))
    checks.append(check("sigma(., 0) = 0", abs(sig[0]), opts.sigma_tolerance))
    checks.append(check("d_n sigma(., 0) = 0", abs(grad[0, -1]), opts.sigma_tolerance))

    H = mean_curvature(chart)
    flat = opts.metric == "minkowski"
    ctol = opts.curvature_tolerance if opts.curvature_tolerance is not None else (tol if flat else 1e-3)
    checks.append(check("|H| = kappa", np.max(np.abs(np.abs(H) - abs(opts.kappa))), ctol))
    scalars = {"chart_rho": chart.rho, "curvature_sign": chart.curvature_sign,
               "H_max": float(np.max(np.abs(H))), "H_min": float(np.min(np.abs(H)))}
    if flat and opts.kappa != 0:
        scalars["H_r0"] = float(np.max(np.abs(H))) * opts.r0

    orders = {}
    if not flat:
        for block, (mag, obs, expected) in block_orders(chart).items():
            orders[block] = {"magnitudes": mag, "orders": obs, "expected": expected}
            if obs is not None:
                checks.append(check(f"order of {block}", obs[-1],
                                    [expected - opts.order_tolerance, expected + opts.order_tolerance],
                                    "in"))
    return {"scalars": scalars, "orders": orders, "checks": checks, "chart": chart}


# ---------------------------------------------------------------------------
# profile and decomposition
# ---------------------------------------------------------------------------

def measure_profile(opts):
    well = well_from_spec(opts.well)
    prof = nl.profile(well, s_max=opts.s_max, ds=opts.ds)
    scalars = {"c0": well.c0, "tail_c": prof.tail_c, "tail_C": prof.tail_C,
               "residual_first": prof.residual_first, "residual_second": prof.residual_second,
               "energy": prof.energy()}
    checks = [check("profile energy = c0", abs(scalars["energy"] - well.c0), 1e-6 * max(1.0, well.c0))]
    if opts.well == "quartic":
        s = np.linspace(-opts.check_range, opts.check_range, 4001)
        sup = float(np.max(np.abs(prof(s) - np.tanh(s))))
        scalars["tanh_error"] = sup
        checks.append(check("sup |q - tanh|", sup, opts.tanh_tolerance))
    return {"scalars": scalars, "checks": checks, "profile": prof}


def measure_decomposition(opts):
    f = nl.polynomial_nonlinearity(list(opts.poly))
    well, kappa = nl.decompose(f, opts.eps)
    u = np.linspace(opts.u_range[0], opts.u_range[1], opts.n_samples)
    F = well.F(u)
    lam = kappa * opts.eps
    scalars = {"eps_kappa": lam, "kappa": kappa, "c0": well.c0,
               "F_at_wells": float(max(abs(well.F(-1.0)), abs(well.F(1.0))))}
    checks = [check("F(+-1) = 0", scalars["F_at_wells"], 1e-8),
              check("min F", float(F.min()), 0.0, ">=")]
    if opts.expect_eps_kappa is not None:
        checks.append(check("eps*kappa", abs(lam - opts.expect_eps_kappa), opts.eps_kappa_tolerance))
    if opts.expect_potential == "quartic":
        sup = float(np.max(np.abs(F - 0.5 * (1 - u ** 2) ** 2)))
        scalars["potential_error"] = sup
        checks.append(check("sup |F - (1-u^2)^2/2|", sup, opts.potential_tolerance))
    elif opts.expect_potential is not None:
        raise ConfigError(f"expect_potential must be 'quartic' or null, got {opts.expect_potential!r}")
    table = np.column_stack([u, F, well.f0(u), well.f1(u)])
    return {"scalars": scalars, "checks": checks, "table": table}


# ---------------------------------------------------------------------------
# convergence of the tested energy identity
# ---------------------------------------------------------------------------

def convergence_configs(base, levels):
    """The base run on ``levels`` successively halved grids, storing every step."""
    return [replace(base, dx=base.h / 2 ** k, cadence=1e-9) for k in range(levels)]


def default_window(base):
    T = base.T_final
    tc = 0.5 * T
    xc = float(reference_curve(base).position(tc))
    return BumpWindow(tc=tc, xc=xc, half_t=0.375 * T, half_x=0.35)


def measure_convergence(trajectories, window, opts):
    out = energy_identity_residual(trajectories, window)
    tol = opts.order_tolerance
    checks = [check(f"order between levels {i} and {i + 1}", o,
                    [opts.expected_order - tol, opts.expected_order + tol], "in")
              for i, o in enumerate(out["orders"])]
    return {"scalars": {"order": out["order"]}, "levels": out["levels"], "orders": out["orders"],
            "checks": checks}
