"""Timelike hypersurfaces: parametrization by coordinate time, unit normals and
curves of prescribed curvature in 1+1 dimensions.

Points on the surface are addressed by ``y_tau = (y^0, y')`` with ``y'`` in the
model manifold ``M`` (empty for curves, an angle for surfaces in 1+2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from ..errors import DegenerateTangent, GaugeODEFailed, IntegrationFailed
from .metric import christoffel


# ---------------------------------------------------------------------------
# curves in 1+1 dimensions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimelikeCurve:
    """A curve ``t -> (t, x(t))`` with its unit tangent, sampled and densely interpolated."""

    t: np.ndarray
    x: np.ndarray
    tangent: np.ndarray
    tau: np.ndarray
    _forward: object = field(repr=False, default=None)
    _backward: object = field(repr=False, default=None)
    t_start: float = 0.0

    def _state(self, t):
        t = np.asarray(t, dtype=float).reshape(-1)
        out = np.empty((t.size, 4))
        fwd = t >= self.t_start
        if np.any(fwd):
            out[fwd] = self._forward(t[fwd]).T
        if np.any(~fwd):
            out[~fwd] = self._backward(t[~fwd]).T
        return out

    def position(self, t):
        t_arr = np.asarray(t, dtype=float)
        return self._state(t_arr)[:, 0].reshape(t_arr.shape)

    def velocity(self, t):
        t_arr = np.asarray(t, dtype=float)
        st = self._state(t_arr)
        return (st[:, 2] / st[:, 1]).reshape(t_arr.shape)

    def unit_tangent(self, t):
        t_arr = np.asarray(t, dtype=float)
        return self._state(t_arr)[:, 1:3].reshape(t_arr.shape + (2,))

    def proper_time(self, t):
        t_arr = np.asarray(t, dtype=float)
        return self._state(t_arr)[:, 3].reshape(t_arr.shape)

    def norm_drift(self, metric):
        pts = np.column_stack([self.t, self.x])
        return float(np.max(np.abs(metric.inner(pts, self.tangent, self.tangent) + 1.0)))


def _canonical_normal_2d(H, T):
    """Unit spacelike normal to ``T`` with ``det[T, nu] > 0``."""
    w = np.einsum("...ab,...b->...a", H, T)
    nu = np.stack([w[..., 1], -w[..., 0]], axis=-1)
    nn = np.einsum("...a,...ab,...b->...", nu, H, nu)
    if np.any(nn <= 0):
        raise DegenerateTangent("tangent is not timelike")
    return nu / np.sqrt(nn)[..., None]


def mc_curve(metric, kappa, start, tangent, t_span, n_samples=401, rtol=1e-12, atol=1e-13):
    """Timelike curve with ``nabla_T T = kappa * nu`` in a 1+1 metric.

    ``nu`` is the unit normal with ``det[T, nu] > 0`` (pointing to larger x^1 in
    Minkowski space for a future-directed curve), so ``kappa > 0`` bends the
    curve towards increasing ``x^1``: with this orientation the Minkowski
    hyperbola ``x^2 - t^2 = r0^2`` has ``kappa = 1/r0``.

    The curve is parametrized by coordinate time ``t = x^0`` over ``t_span``
    (which must contain ``start[0]``); proper time is carried along.
    """
    if metric.dim_n != 1:
        raise ValueError("mc_curve needs a 1+1 metric")
    start = np.asarray(start, dtype=float)
    tangent = np.asarray(tangent, dtype=float)
    norm = float(metric.inner(start, tangent, tangent))
    if abs(norm + 1.0) > 1e-10:
        raise ValueError(f"start tangent must satisfy h(T, T) = -1, got {norm:.12g}")
    if tangent[0] <= 0:
        raise ValueError("start tangent must be future directed")
    kfun = kappa if callable(kappa) else (lambda x, k=float(kappa): k)

    def rhs(t, y):
        x = np.array([t, y[0]])
        T = y[1:3]
        H = metric.h(x)
        G = christoffel(metric, x)
        nu = _canonical_normal_2d(H, T)
        acc = -np.einsum("amn,m,n->a", G, T, T) + kfun(x) * nu
        return [T[1] / T[0], acc[0] / T[0], acc[1] / T[0], 1.0 / T[0]]

    y0 = [start[1], tangent[0], tangent[1], 0.0]
    t0 = float(start[0])
    lo, hi = t_span
    if not lo <= t0 <= hi:
        raise ValueError("t_span must contain the start time")
    sols = []
    for end in (hi, lo):
        if end == t0:
            sols.append(None)
            continue
        sol = solve_ivp(rhs, (t0, end), y0, method="DOP853", rtol=rtol, atol=atol,
                        dense_output=True)
        if sol.status != 0:
            raise IntegrationFailed(f"curve integration failed: {sol.message}")
        sols.append(sol.sol)
    fwd, bwd = sols
    const = lambda t: np.tile(np.asarray(y0, dtype=float)[:, None], (1, np.size(t)))
    curve = TimelikeCurve(t=np.empty(0), x=np.empty(0), tangent=np.empty((0, 2)),
                          tau=np.empty(0), _forward=fwd or const, _backward=bwd or const,
                          t_start=t0)
    ts = np.linspace(lo, hi, n_samples)
    st = curve._state(ts)
    return TimelikeCurve(t=ts, x=st[:, 0], tangent=st[:, 1:3], tau=st[:, 3],
                         _forward=curve._forward, _backward=curve._backward, t_start=t0)


def hyperbola(r0):
    """The exact Minkowski curve ``x = sqrt(r0^2 + t^2)`` as a TimelikeCurve."""

    def state(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.sqrt(r0 * r0 + t * t)
        return np.vstack([x, x / r0, t / r0, r0 * np.arcsinh(t / r0)])

    ts = np.linspace(-1, 1, 3)
    st = state(ts).T
    return TimelikeCurve(t=ts, x=st[:, 0], tangent=st[:, 1:3], tau=st[:, 3],
                         _forward=state, _backward=state, t_start=0.0)


# ---------------------------------------------------------------------------
# surfaces in 1+2 dimensions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Embedding:
    """Time-sliced surface ``(t, s) -> Phi(t, s)`` with ``Phi^0 = t``, periodic in ``s``."""

    phi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    phi_t: Callable | None = None
    phi_s: Callable | None = None
    period: float = 2 * np.pi

    def d_t(self, t, s, h=1e-5):
        if self.phi_t is not None:
            return self.phi_t(t, s)
        return (self.phi(t + h, s) - self.phi(t - h, s)) / (2 * h)

    def d_s(self, t, s, h=1e-5):
        if self.phi_s is not None:
            return self.phi_s(t, s)
        return (self.phi(t, s + h) - self.phi(t, s - h)) / (2 * h)


def static_cylinder(R):
    def phi(t, s):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        return np.stack([t, R * np.cos(s), R * np.sin(s)], axis=-1)

    def phi_t(t, s):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        z = np.zeros_like(t)
        return np.stack([np.ones_like(t), z, z], axis=-1)

    def phi_s(t, s):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        return np.stack([np.zeros_like(t), -R * np.sin(s), R * np.cos(s)], axis=-1)

    return Embedding(phi=phi, phi_t=phi_t, phi_s=phi_s)


# ---------------------------------------------------------------------------
# the parametrization Psi and its unit normal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaParam:
    """``Psi(y^0, y') = (y^0, psi(y^0, y'))`` on ``[-T, T] x M`` with sampled data."""

    metric: object
    n: int
    T: float
    normal_sign: int
    point_fn: Callable = field(repr=False)
    tangent_fn: Callable = field(repr=False)
    y0: np.ndarray = field(repr=False)
    yp: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    gamma_ab: np.ndarray = field(repr=False)
    nu_bar: np.ndarray = field(repr=False)
    source: object = field(repr=False, default=None)

    def point(self, y_tau):
        return self.point_fn(np.asarray(y_tau, dtype=float))

    def tangents(self, y_tau):
        return self.tangent_fn(np.asarray(y_tau, dtype=float))

    def normal(self, y_tau):
        return unit_normal(self.metric, self, y_tau)

    def gamma(self, y_tau):
        tau = self.tangents(y_tau)
        H = self.metric.h(self.point(y_tau))
        return np.einsum("...ia,...ab,...jb->...ij", tau, H, tau)

    def check(self):
        """Residuals of the defining conditions on the sample grid."""
        Y = _tau_grid(self.y0, self.yp)
        tau = self.tangents(Y)
        H = self.metric.h(self.psi)
        nu = self.nu_bar
        out = {
            "psi0_vs_y0": float(np.max(np.abs(self.psi[..., 0] - Y[..., 0]))),
            "normal_norm": float(np.max(np.abs(np.einsum("...a,...ab,...b->...", nu, H, nu) - 1))),
            "normal_orthogonality": float(np.max(np.abs(np.einsum("...ia,...ab,...b->...i",
                                                                  tau, H, nu)))),
        }
        i0 = int(np.argmin(np.abs(self.y0)))
        out["initial_velocity"] = float(np.max(np.abs(tau[i0, ..., 0, 1:]))) \
            if abs(self.y0[i0]) < 1e-14 else float("nan")
        out["gauge"] = float(np.max(np.abs(self.gamma_ab[..., 0, 1:]))) if self.n > 1 else 0.0
        return out


def _tau_grid(y0, yp):
    """Grid of ``y_tau`` with shape ``(len(y0), len(yp), n)``."""
    n1 = yp.shape[1]
    Y = np.empty((y0.size, yp.shape[0], 1 + n1))
    Y[..., 0] = y0[:, None]
    if n1:
        Y[..., 1:] = yp[None, :, :]
    return Y


def unit_normal(metric, gp, y_tau):
    """``nu_bar`` with ``h(nu, nu) = 1``, ``h(nu, TGamma) = 0`` and the configured side."""
    y_tau = np.asarray(y_tau, dtype=float)
    tau = gp.tangents(y_tau)                     # (..., n, d)
    H = metric.h(gp.point(y_tau))
    W = np.einsum("...ia,...ab->...ib", tau, H)  # covectors annihilating nu
    d = W.shape[-1]
    nu = np.empty(W.shape[:-2] + (d,))
    for i in range(d):
        minor = np.delete(W, i, axis=-1)
        nu[..., i] = (-1) ** i * np.linalg.det(minor)
    frame = np.concatenate([tau, nu[..., None, :]], axis=-2)
    orient = np.sign(np.linalg.det(np.swapaxes(frame, -1, -2)))
    nn = np.einsum("...a,...ab,...b->...", nu, H, nu)
    if np.any(nn <= 1e-14) or np.any(orient == 0):
        raise DegenerateTangent("tangent space of Gamma is not timelike at some sample")
    return gp.normal_sign * (orient / np.sqrt(nn))[..., None] * nu


def _curve_functions(curve):
    def point(y_tau):
        t = y_tau[..., 0]
        return np.stack([t, curve.position(t)], axis=-1)

    def tangents(y_tau):
        t = y_tau[..., 0]
        if hasattr(curve, "velocity"):
            v = curve.velocity(t)
        else:
            h = 1e-4
            v = (-curve(t + 2 * h) + 8 * curve(t + h) - 8 * curve(t - h) + curve(t - 2 * h)) / (12 * h)
        return np.stack([np.ones_like(t), v], axis=-1)[..., None, :]

    return point, tangents


class _CallableCurve:
    def __init__(self, fn):
        self.fn = fn

    def position(self, t):
        return self.fn(t)

    def __call__(self, t):
        return self.fn(t)


def _gauge_functions(metric, emb, T, yp_grid):
    """Solve ``s'(t) = -G^{-1} b`` for every grid angle and interpolate periodically."""
    s0 = yp_grid[:, 0]

    def rhs(t, s):
        Pt, Ps = emb.d_t(t, s), emb.d_s(t, s)
        H = metric.h(emb.phi(t, s))
        G = np.einsum("ka,kab,kb->k", Ps, H, Ps)
        b = np.einsum("ka,kab,kb->k", Pt, H, Ps)
        if np.any(np.abs(G) < 1e-12):
            raise GaugeODEFailed(f"singular tangential Gram matrix at t = {t:.6g}")
        return -b / G

    sols = []
    for end in (T, -T):
        sol = solve_ivp(rhs, (0.0, end), s0, method="DOP853", rtol=1e-12, atol=1e-13,
                        dense_output=True)
        if sol.status != 0:
            raise GaugeODEFailed(sol.message)
        sols.append(sol.sol)
    period = emb.period
    nodes = np.append(s0, s0[0] + period)

    def S_and_dS(t, ys):
        t = np.asarray(t, dtype=float)
        ys = np.asarray(ys, dtype=float)
        S = np.empty(t.shape)
        dS = np.empty(t.shape)
        for tv in np.unique(t):
            sel = t == tv
            vals = (sols[0] if tv >= 0 else sols[1])(tv) - s0
            spl = CubicSpline(nodes, np.append(vals, vals[0]), bc_type="periodic")
            q = np.mod(ys[sel] - s0[0], period) + s0[0]
            S[sel] = ys[sel] + spl(q)
            dS[sel] = 1.0 + spl(q, 1)
        return S, dS

    def point(y_tau):
        S, _ = S_and_dS(y_tau[..., 0], y_tau[..., 1])
        return emb.phi(y_tau[..., 0], S)

    def tangents(y_tau):
        t = y_tau[..., 0]
        S, dS = S_and_dS(t, y_tau[..., 1])
        Pt, Ps = emb.d_t(t, S), emb.d_s(t, S)
        H = metric.h(emb.phi(t, S))
        G = np.einsum("...a,...ab,...b->...", Ps, H, Ps)
        b = np.einsum("...a,...ab,...b->...", Pt, H, Ps)
        d0 = Pt + (-b / G)[..., None] * Ps
        da = Ps * dS[..., None]
        return np.stack([d0, da], axis=-2)

    return point, tangents


def build_gamma_param(metric, surface, T, normal_sign=1, n_time=41, n_M=32, pad=0.5):
    """Coordinate-time parametrization of a timelike curve or surface.

    For ``n = 1`` ``surface`` is a TimelikeCurve (e.g. from :func:`mc_curve`) or a
    callable ``t -> x^1(t)``.  For ``n = 2`` it is an :class:`Embedding`; the gauge
    ODE moves points along the time slices so that ``dPsi/dy^0`` is orthogonal
    to the slice.  ``normal_sign`` selects the side ``I`` the normal points into,
    relative to the orientation ``det[dPsi/dy^0, dPsi/dy', nu] > 0``.
    """
    if normal_sign not in (1, -1):
        raise ValueError("normal_sign must be +1 or -1")
    n = metric.dim_n
    if n == 1:
        curve = surface if isinstance(surface, TimelikeCurve) else _CallableCurve(surface)
        point, tangents = _curve_functions(curve)
        yp = np.zeros((1, 0))
    elif n == 2:
        if not isinstance(surface, Embedding):
            raise TypeError("surfaces in 1+2 dimensions are given as an Embedding")
        yp = np.linspace(0.0, surface.period, n_M, endpoint=False)[:, None]
        point, tangents = _gauge_functions(metric, surface, T + pad, yp)
    else:
        raise ValueError("only n = 1 and n = 2 are supported")

    y0 = np.linspace(-T, T, n_time)
    stub = GammaParam(metric=metric, n=n, T=T, normal_sign=normal_sign, point_fn=point,
                      tangent_fn=tangents, y0=y0, yp=yp, psi=None, gamma_ab=None,
                      nu_bar=None, source=surface)
    Y = _tau_grid(y0, yp)
    psi = point(Y)
    return GammaParam(metric=metric, n=n, T=T, normal_sign=normal_sign, point_fn=point,
                      tangent_fn=tangents, y0=y0, yp=yp, psi=psi, gamma_ab=stub.gamma(Y),
                      nu_bar=unit_normal(metric, stub, Y), source=surface)
