"""Weighted energy functionals around the front, in polar and in normal coordinates."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from ..chart import energy_tensor, energy_tensor_constants
from ..errors import ChartCoverage, TruncationWarning, WindowCollapsed
from ..nonlinearity import quartic_well
from .energy import energy_polar, polar_r_grid

END_TOLERANCE = 1e-10


@dataclass
class ZetaSeries:
    """ζ functionals sampled in θ (polar) or in chart time s (curved)."""

    times: np.ndarray
    zeta1: np.ndarray
    zeta2: np.ndarray
    zeta3: np.ndarray
    eps: float
    r0: float | None = None
    rho: float | None = None
    kind: str = "polar"
    deficiency: np.ndarray | None = None
    truncated: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def at(self, time):
        i = int(np.argmin(np.abs(self.times - time)))
        return self.zeta1[i], self.zeta2[i], self.zeta3[i]

    @property
    def zeta1_at_zero(self):
        return float(self.zeta1[int(np.argmin(np.abs(self.times)))])

    def ordered(self, tol=1e-10):
        """Whether ζ₂ ≤ ζ₁ holds at every sample (polar series only)."""
        return bool(np.all(self.zeta2 <= self.zeta1 + tol))


def _check_ends(integrand, what):
    ends = max(abs(integrand[0]), abs(integrand[-1]))
    if ends > END_TOLERANCE:
        warnings.warn(f"{what}: integrand is {ends:.3e} at the end of the grid", TruncationWarning,
                      stacklevel=3)
        return True
    return False


def zeta2_polar(sample, eps, r0):
    r = sample.r
    angular = 0.5 * eps * (sample.v_theta / r) ** 2
    radial = sample.e - angular          # (eps/2) v_r^2 + F(v)/eps
    integrand = angular + (r - r0) ** 2 * radial
    return float(trapezoid(integrand, r))


def zeta_polar(sample, eps, r0, c0):
    """``(zeta1, zeta2)`` on one ray.

    ``zeta1 = int [1 + (r - r0)^2] e dr - c0`` and
    ``zeta2 = int (eps/2)(v_theta/r)^2 + (r - r0)^2 [(eps/2) v_r^2 + F(v)/eps] dr``.
    Emits :class:`TruncationWarning` when the integrand does not vanish at the grid ends.
    """
    r = sample.r
    w = 1.0 + (r - r0) ** 2
    integrand = w * sample.e
    _check_ends(integrand, f"zeta1 at theta = {sample.theta:.4g}")
    z1 = float(trapezoid(integrand, r)) - c0
    return z1, zeta2_polar(sample, eps, r0)


def deficiency(r, v, v_r, eps, well=None, zeta1=None, tol=1e-8):
    """``int (eps/2)(v_r - f1(v)/eps)^2 dr``; checked against ``zeta1`` when given."""
    well = quartic_well() if well is None else well
    d = float(trapezoid(0.5 * eps * (v_r - well.f1(v) / eps) ** 2, r))
    if zeta1 is not None and zeta1 >= 0 and d > zeta1 + tol:
        raise AssertionError(f"deficiency {d:.6e} exceeds zeta1 {zeta1:.6e} + {tol:g}")
    return d


def zeta_polar_series(field, thetas, eps, r0, well=None, dr=None):
    """ζ₁, ζ₂ and the deficiency along the rays ``thetas``."""
    well = quartic_well() if well is None else well
    dr = field.dx if dr is None else dr
    z1, z2, dd, trunc = [], [], [], []
    for th in thetas:
        r = polar_r_grid(field, th, dr)
        sample = energy_polar(field, th, r, eps, well)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", TruncationWarning)
            a, b = zeta_polar(sample, eps, r0, well.c0)
        trunc.append(bool(caught))
        for w in caught:
            warnings.warn(w.message, TruncationWarning, stacklevel=2)
        z1.append(a)
        z2.append(b)
        dd.append(deficiency(r, sample.v, sample.v_r, eps, well))
    n = len(z1)
    return ZetaSeries(times=np.asarray(thetas, dtype=float), zeta1=np.array(z1), zeta2=np.array(z2),
                      zeta3=np.full(n, np.nan), eps=eps, r0=r0, kind="polar",
                      deficiency=np.array(dd), truncated=np.array(trunc))


def fit_gronwall_constant(thetas, zeta1, zeta1_0):
    """Smallest C with ``zeta1(theta) <= exp(C (e^{3|theta|} - 1)) zeta1(0)`` on the samples."""
    thetas = np.asarray(thetas, dtype=float)
    zeta1 = np.asarray(zeta1, dtype=float)
    grow = np.exp(3 * np.abs(thetas)) - 1.0
    mask = (grow > 0) & (zeta1 > zeta1_0)
    if not np.any(mask) or zeta1_0 <= 0:
        return 0.0
    return float(np.max(np.log(zeta1[mask] / zeta1_0) / grow[mask]))


def gronwall_envelope(thetas, zeta1_0, C):
    return zeta1_0 * np.exp(C * (np.exp(3 * np.abs(np.asarray(thetas, dtype=float))) - 1.0))


# ---------------------------------------------------------------------------
# normal coordinates
# ---------------------------------------------------------------------------

def curved_slice(field, chart, s, yn, eps, well):
    """``v``, its chart derivatives ``(d_0 v, d_n v)``, ``a^{ab}`` and ``e_eps(v; g)`` at ``y^0 = s``."""
    yn = np.asarray(yn, dtype=float)
    Y = np.column_stack([np.full_like(yn, s), yn])
    X, J = chart.jac(Y)
    u, ut, ux = field.evaluate(X[:, 0], X[:, 1])
    dv = ut[:, None] * J[:, 0, :] + ux[:, None] * J[:, 1, :]
    g = np.einsum("...ma,...mn,...nb->...ab", J, chart.metric.h(X), J)
    a = energy_tensor(np.linalg.inv(g))
    e = 0.5 * eps * np.einsum("...a,...ab,...b->...", dv, a, dv) + well.F(u) / eps
    return u, dv, a, e


def zeta2_curved(field, chart, s, eps, rho, well, n=None):
    """``int_{|y^n| < rho/2} |y^n| |v - sign(y^n)|^2 dy^n`` at ``y^0 = s``."""
    half = 0.5 * rho
    n = n or 2 * int(np.ceil(half / (eps / 16))) + 1
    yn = np.linspace(-half, half, n)
    v, _, _, _ = curved_slice(field, chart, s, yn, eps, well)
    return float(trapezoid(np.abs(yn) * (v - np.sign(yn)) ** 2, yn))


def zeta_curved(field, chart, well, eps, s, rho, consts=None, n=None):
    """``(zeta1, zeta2, zeta3)`` at chart time ``s`` on the window ``|y^n| < rho - c5 s``.

    With one spatial dimension the cross-section M is a point, so ``vol_0(M) = 1`` and
    ``d(vol) = dy^0 dy^n``.
    """
    well = quartic_well() if well is None else well
    consts = energy_tensor_constants(chart) if consts is None else consts
    rho_s = rho - consts.c5 * s
    if rho_s <= 0:
        raise WindowCollapsed(f"rho(s) = {rho_s:.6g} <= 0 at s = {s:.6g}")
    if rho > chart.rho:
        raise ChartCoverage(f"window half-width {rho:.6g} exceeds the chart's {chart.rho:.6g}")
    n = n or 2 * int(np.ceil(rho_s / (eps / 16))) + 1
    yn = np.linspace(-rho_s, rho_s, n)
    v, dv, a, e = curved_slice(field, chart, s, yn, eps, well)
    z1 = float(trapezoid((1.0 + consts.c2 * yn ** 2) * e, yn)) - well.c0
    tangential = 0.5 * eps * a[:, 0, 0] * dv[:, 0] ** 2
    z3 = float(trapezoid(tangential + yn ** 2 * (0.5 * eps * dv[:, 1] ** 2 + well.F(v) / eps), yn))
    z2 = zeta2_curved(field, chart, s, eps, rho, well)
    return z1, z2, z3


def s_limit(chart, rho, T=None, consts=None):
    """``s1 = min(T, rho / (3 c5))``."""
    consts = energy_tensor_constants(chart) if consts is None else consts
    T = chart.T if T is None else T
    return min(T, rho / (3.0 * consts.c5)) if consts.c5 > 0 else T


def bad_volume(field, chart, s, eps, rho, well=None, c6=1e-2, c7=1e-2, consts=None, n=None):
    """Volume of cross-section points failing the good-point tests at ``y^0 = s``.

    A point is good when ``int_{|y^n|<rho/2} |y^n||v - sign|^2 <= c6`` and the normal
    energy ``int_{|y^n|<rho(s)} (eps/2) v_n^2 + F(v)/eps`` exceeds ``c0`` by at most ``c7``.
    In 1+1 dimensions the cross-section is a single point of unit volume, so the result
    is 0 or 1.  Returns ``(volume, {"zeta2": ..., "normal_excess": ...})``.
    """
    well = quartic_well() if well is None else well
    consts = energy_tensor_constants(chart) if consts is None else consts
    rho_s = rho - consts.c5 * s
    if rho_s <= 0:
        raise WindowCollapsed(f"rho(s) = {rho_s:.6g} <= 0 at s = {s:.6g}")
    n = n or 2 * int(np.ceil(rho_s / (eps / 16))) + 1
    yn = np.linspace(-rho_s, rho_s, n)
    v, dv, _, _ = curved_slice(field, chart, s, yn, eps, well)
    excess = float(trapezoid(0.5 * eps * dv[:, 1] ** 2 + well.F(v) / eps, yn)) - well.c0
    z2 = zeta2_curved(field, chart, s, eps, rho, well)
    good = z2 <= c6 and excess <= c7
    return (0.0 if good else 1.0), {"zeta2": z2, "normal_excess": excess}


def displacement_constant(field, chart, eps, half_width, taus, well=None, n=None, m=None):
    """Fit ``C`` in ``int |y^n||v(0) - v(tau)|^2 <= C int_0^tau int (eps/2) v_0^2 + (y^n)^2 F(v)/eps``.

    Both sides are evaluated on ``|y^n| < half_width`` for every ``tau`` in ``taus``
    (positive chart times); the time integral is a cumulative trapezoid rule with
    ``m`` nodes per unit chart time.  Returns ``(C, lhs, rhs)`` with ``C`` the largest observed ratio.
    """
    well = quartic_well() if well is None else well
    taus = np.asarray(taus, dtype=float)
    if np.any(taus <= 0):
        raise ValueError("displacement times must be positive")
    n = n or 2 * int(np.ceil(half_width / (eps / 16))) + 1
    yn = np.linspace(-half_width, half_width, n)
    m = m or max(32, int(np.ceil(8 / eps)))
    sig = np.linspace(0.0, taus.max(), max(3, int(np.ceil(m * taus.max())) + 1))
    sig = np.union1d(sig, taus)
    inner, values = [], {}
    for sg in sig:
        v, dv, _, _ = curved_slice(field, chart, sg, yn, eps, well)
        inner.append(trapezoid(0.5 * eps * dv[:, 0] ** 2 + yn ** 2 * well.F(v) / eps, yn))
        values[sg] = v
    cum = cumulative_trapezoid(inner, sig, initial=0.0)
    v0 = values[sig[0]]
    rhs = [float(cum[np.searchsorted(sig, tau)]) for tau in taus]
    lhs = [float(trapezoid(np.abs(yn) * (v0 - values[tau]) ** 2, yn)) for tau in taus]
    lhs, rhs = np.array(lhs), np.array(rhs)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, 0.0)
    return float(np.max(ratio)), lhs, rhs


def zeta_curved_series(field, chart, well, eps, rho, s_values, c6=1e-2, c7=1e-2):
    """ζ₁, ζ₂, ζ₃ at the chart times ``s_values``; ``meta`` carries c2, c5 and the bad volumes."""
    consts = energy_tensor_constants(chart)
    rows = [zeta_curved(field, chart, well, eps, s, rho, consts) for s in s_values]
    bad = [bad_volume(field, chart, s, eps, rho, well, c6, c7, consts)[0] for s in s_values]
    z = np.array(rows)
    return ZetaSeries(times=np.asarray(s_values, dtype=float), zeta1=z[:, 0], zeta2=z[:, 1],
                      zeta3=z[:, 2], eps=eps, rho=rho, kind="curved",
                      meta={"c2": consts.c2, "c5": consts.c5, "bad_volume": np.array(bad)})
