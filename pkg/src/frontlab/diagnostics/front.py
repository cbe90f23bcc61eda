"""Interface location, distance to the sharp front, profile fits and exterior energy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize_scalar

from ..errors import FitDiverged, MultipleCrossings, NoCrossing
from ..nonlinearity import cutoff, quartic_well
from .fields import ddx


@dataclass
class InterfaceTrack:
    times: np.ndarray
    positions: np.ndarray
    reference: Callable | None = None
    valid: np.ndarray | None = None

    @property
    def errors(self):
        if self.reference is None:
            raise ValueError("no reference curve attached")
        ref = np.array([float(self.reference(t)) for t in self.times])
        return np.abs(self.positions - ref)

    @property
    def sup_error(self):
        return float(np.nanmax(self.errors))


def zero_crossings(x, u):
    """Linear-interpolated positions where ``u`` changes sign."""
    neg = u < 0
    idx = np.flatnonzero(neg[:-1] != neg[1:])
    return x[idx] - u[idx] * (x[idx + 1] - x[idx]) / (u[idx + 1] - u[idx])


def track_interface(traj, window=None, reference=None, strict=True):
    """Zero crossing of each stored snapshot inside ``window``.

    With ``strict`` a snapshot without exactly one crossing raises; otherwise it is
    marked invalid and its position is NaN.
    """
    x = traj.x
    lo, hi = window if window is not None else (x[0], x[-1])
    sel = (x >= lo) & (x <= hi)
    xs = x[sel]
    pos, ok = [], []
    for s in traj.states:
        c = zero_crossings(xs, s.u[sel])
        if c.size == 1:
            pos.append(float(c[0]))
            ok.append(True)
            continue
        if strict:
            if c.size == 0:
                raise NoCrossing(f"no sign change in [{lo:.6g}, {hi:.6g}] at t = {s.t:.6g}")
            raise MultipleCrossings(f"{c.size} sign changes in [{lo:.6g}, {hi:.6g}] at t = {s.t:.6g}")
        pos.append(np.nan)
        ok.append(False)
    return InterfaceTrack(times=traj.times, positions=np.array(pos), reference=reference,
                          valid=np.array(ok))


def _one_sided(x, f, split, side):
    """``int f`` from the grid end on ``side`` up to ``split``, using samples from that side only.

    Composite trapezoid over the whole cells, an Euler-Maclaurin end correction with a
    one-sided derivative at the last node, and the exact integral of the quadratic
    through the last three nodes across the partial cell.
    """
    if side == "right":
        xr = -x[::-1]
        return _one_sided(xr, f[::-1], -split, "left")
    h = x[1] - x[0]
    i = int(np.searchsorted(x, split, side="right")) - 1      # x[i] <= split < x[i+1]
    whole = float(trapezoid(f[:i + 1], x[:i + 1])) if i > 0 else 0.0
    if i < 2:
        return whole + (split - x[i]) * f[i]
    d_end = (3 * f[i] - 4 * f[i - 1] + f[i - 2]) / (2 * h)
    d_start = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
    whole -= h * h / 12.0 * (d_end - d_start)
    c = np.polyfit(x[i - 2:i + 1] - x[i], f[i - 2:i + 1], 2)
    antider = np.polyint(c)
    return whole + float(np.polyval(antider, split - x[i]))


def _split_integral(x, f_left, f_right, split):
    """``int f_left`` on ``x < split`` plus ``int f_right`` beyond it.

    Each side only uses its own samples, so a sampled step at ``split`` integrates to
    exactly what its two constant pieces give, and the kink of the integrand at
    ``split`` costs no accuracy.
    """
    if split <= x[0]:
        return float(trapezoid(f_right, x))
    if split >= x[-1]:
        return float(trapezoid(f_left, x))
    return _one_sided(x, f_left, split, "left") + _one_sided(x, f_right, split, "right")


def l2_distance_to_sign(traj, reference):
    """``int int |u - sign(x - gamma(t))|^2 dx dt`` over the stored slab.

    Each time slice is split at ``gamma(t)`` so the jump of the sign function does not
    degrade the trapezoid rule.
    """
    x = traj.x
    per_time = []
    for s in traj.states:
        g = float(reference(s.t))
        per_time.append(_split_integral(x, (s.u + 1.0) ** 2, (s.u - 1.0) ** 2, g))
    if len(per_time) == 1:
        return 0.0
    return float(trapezoid(per_time, traj.times))


def profile_fit(x, v, profile, eps, bracket=None, xtol=1e-12):
    """Least-squares shift ``a`` of ``q((x - a)/eps)`` against ``v`` by golden-section search.

    Returns ``(a, residual)`` with ``residual = int |v - q((x - a)/eps)|^2 dx / eps``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if bracket is None:
        c = zero_crossings(x, v)
        mid = float(c[0]) if c.size else float(x[np.argmin(np.abs(v))])
        bracket = (mid - 4 * eps, mid + 4 * eps)
    lo, hi = bracket

    def cost(a):
        return float(trapezoid((v - profile((x - a) / eps)) ** 2, x))

    try:
        res = minimize_scalar(cost, bracket=(lo, 0.5 * (lo + hi), hi), method="golden",
                              options={"xtol": xtol})
    except ValueError as exc:      # the midpoint is not below both ends
        raise FitDiverged(f"no interior minimum in the search bracket [{lo:.6g}, {hi:.6g}]") from exc
    a = float(res.x)
    margin = 1e-6 * (hi - lo)
    if not (lo + margin < a < hi - margin):
        raise FitDiverged(f"best shift {a:.6g} at or beyond the search bracket [{lo:.6g}, {hi:.6g}]")
    return a, cost(a) / eps


def exterior_energy(traj, chart, rho, well=None, times=None):
    """``int chi^u e_eps(u; h)`` on each stored slice, and its time integral.

    ``chi^u = 1 - chi_rho(y^n)`` inside the chart image and 1 outside it;
    ``e_eps(u; h) = (eps/2)(u_t^2/a^2 + u_x^2/b^2) + F(u)/eps`` for ``h = diag(-a^2, b^2)``,
    integrated against the induced length ``b dx``.
    """
    well = quartic_well() if well is None else well
    eps = traj.config.eps
    x = traj.x
    a_fn, b_fn = chart.metric.diag_coeffs
    a, b = a_fn(x), b_fn(x)
    out_t, out_v = [], []
    for s in traj.states:
        if times is not None and not np.any(np.isclose(s.t, times, rtol=0, atol=1e-12)):
            continue
        yn = chart.normal_coordinate_field(s.t, x)
        chi = np.where(np.isnan(yn), 1.0, 1.0 - cutoff(np.nan_to_num(yn), rho))
        ux = ddx(s.u, s.dx)
        e = 0.5 * eps * ((s.ut / a) ** 2 + (ux / b) ** 2) + well.F(s.u) / eps
        out_t.append(s.t)
        out_v.append(float(trapezoid(chi * e * b, x)))
    out_t, out_v = np.array(out_t), np.array(out_v)
    total = float(trapezoid(out_v, out_t)) if out_t.size > 1 else 0.0
    return out_t, out_v, total
