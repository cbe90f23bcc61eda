"""Energy densities, their integrals and the space-time energy identity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from ..errors import InsufficientLevels, OutsideWedge
from ..nonlinearity import quartic_well
from .fields import ddx, grid_integral


def energy_flat(state, eps, well=None):
    """Pointwise ``(eps/2)(u_t^2 + u_x^2) + F(u)/eps`` on the state's grid."""
    well = quartic_well() if well is None else well
    ux = ddx(state.u, state.dx)
    return 0.5 * eps * (state.ut ** 2 + ux ** 2) + well.F(state.u) / eps


def total_energy(state, eps, well=None, window=None):
    """Trapezoid integral of :func:`energy_flat` over ``window`` (snapped to the grid)."""
    return grid_integral(energy_flat(state, eps, well), state.x, window)[0]


@dataclass(frozen=True)
class PolarSample:
    """A solution resampled along one ray ``theta`` of the polar wedge."""

    theta: float
    r: np.ndarray
    e: np.ndarray
    v: np.ndarray
    v_theta: np.ndarray
    v_r: np.ndarray


def polar_r_grid(field, theta, dr, pad=4):
    """Radii on the ray ``theta`` whose image stays inside the stored slab."""
    xlo, xhi = field.x_range
    lo_t, hi_t = field.t_range
    ch, sh = np.cosh(theta), np.sinh(theta)
    r_lo = (xlo + pad * field.dx) / ch
    r_hi = (xhi - pad * field.dx) / ch
    if sh > 0:
        r_hi = min(r_hi, hi_t / sh)
    elif sh < 0:
        r_hi = min(r_hi, lo_t / sh)
    if r_hi <= r_lo:
        raise OutsideWedge(f"the ray theta = {theta:.6g} misses the stored slab")
    n = int(np.ceil((r_hi - r_lo) / dr)) + 1
    return np.linspace(r_lo, r_hi, n)


def energy_polar(field, theta, r, eps, well=None):
    """Resample along ``(t, x) = (r sinh theta, r cosh theta)`` and evaluate the polar density.

    ``e = (eps/2)(v_theta^2/r^2 + v_r^2) + F(v)/eps`` with ``v_theta`` and ``v_r`` from the
    chain rule.
    """
    well = quartic_well() if well is None else well
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise OutsideWedge("polar samples need r > 0 (|t| < x)")
    ch, sh = np.cosh(theta), np.sinh(theta)
    v, ut, ux = field.evaluate(r * sh, r * ch)
    v_theta = r * (ch * ut + sh * ux)
    v_r = sh * ut + ch * ux
    e = 0.5 * eps * ((v_theta / r) ** 2 + v_r ** 2) + well.F(v) / eps
    return PolarSample(theta=float(theta), r=r, e=e, v=v, v_theta=v_theta, v_r=v_r)


# ---------------------------------------------------------------------------
# energy identity
# ---------------------------------------------------------------------------

def _bump(z):
    out = np.zeros_like(z)
    inside = np.abs(z) < 1
    out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    return out


def _bump_prime(z):
    out = np.zeros_like(z)
    inside = np.abs(z) < 1
    zi = z[inside]
    out[inside] = np.exp(-1.0 / (1.0 - zi ** 2)) * (-2.0 * zi / (1.0 - zi ** 2) ** 2)
    return out


@dataclass(frozen=True)
class BumpWindow:
    """Smooth compactly supported ``phi(t, x)``: a product of bumps centred at ``(tc, xc)``."""

    tc: float
    xc: float
    half_t: float
    half_x: float

    def __call__(self, t, x):
        zt, zx = (t - self.tc) / self.half_t, (x - self.xc) / self.half_x
        return _bump(zt) * _bump(zx)

    def d_t(self, t, x):
        zt, zx = (t - self.tc) / self.half_t, (x - self.xc) / self.half_x
        return _bump_prime(zt) * _bump(zx) / self.half_t

    def d_x(self, t, x):
        zt, zx = (t - self.tc) / self.half_t, (x - self.xc) / self.half_x
        return _bump(zt) * _bump_prime(zx) / self.half_x


def energy_identity_sides(times, x, U, UT, eps, kappa, window, well=None):
    """Both sides of ``d/dt e = eps (u_t u_x)_x - kappa u_t f1(u)`` tested against ``window``.

    ``LHS = -int int phi_t e``, ``RHS = -int int (eps phi_x u_t u_x + kappa phi u_t f1(u))``,
    with trapezoid quadrature over the stored times and grid.
    """
    well = quartic_well() if well is None else well
    times = np.asarray(times, dtype=float)
    T, X = np.meshgrid(times, x, indexing="ij")
    UX = ddx(U, x[1] - x[0])
    e = 0.5 * eps * (UT ** 2 + UX ** 2) + well.F(U) / eps
    lhs_density = -window.d_t(T, X) * e
    rhs_density = -(eps * window.d_x(T, X) * UT * UX + kappa * window(T, X) * UT * well.f1(U))
    lhs = trapezoid(trapezoid(lhs_density, x, axis=1), times)
    rhs = trapezoid(trapezoid(rhs_density, x, axis=1), times)
    return float(lhs), float(rhs)


def energy_identity_residual(trajectories, window, well=None):
    """Residual of the tested energy identity on each refinement level and the observed orders.

    ``trajectories`` are runs of the same problem on successively halved grids.
    """
    if len(trajectories) < 3:
        raise InsufficientLevels(f"need at least 3 refinement levels, got {len(trajectories)}")
    rows = []
    for tr in trajectories:
        from ..wave import resolve_well

        w, kappa = resolve_well(tr.config)
        w = well if well is not None else w
        lhs, rhs = energy_identity_sides(tr.times, tr.x, tr.u_array(), tr.ut_array(),
                                         tr.config.eps, kappa, window, w)
        rows.append({"dx": float(tr.x[1] - tr.x[0]), "lhs": lhs, "rhs": rhs,
                     "residual": abs(lhs - rhs)})
    res = np.array([r["residual"] for r in rows])
    dxs = np.array([r["dx"] for r in rows])
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log(res[:-1] / res[1:]) / np.log(dxs[:-1] / dxs[1:])
    return {"levels": rows, "orders": [float(o) for o in orders],
            "order": float(np.mean(orders))}
