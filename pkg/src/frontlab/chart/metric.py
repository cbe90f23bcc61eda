"""Lorentzian metrics on coordinate patches of R^{1+n}, Christoffel symbols and geodesics.

Arrays of points have shape ``(..., 1+n)``; metric values have shape
``(..., 1+n, 1+n)`` and first derivatives ``dh[..., m, a, b] = d_m h_ab``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from ..errors import (ConfigError, IntegrationFailed, LeftDomain, OutsideWedge,
                      SignatureViolation, SingularMetric)

FD_STEP = 1e-5


@dataclass(frozen=True)
class LorentzMetric:
    dim_n: int
    h_fn: Callable[[np.ndarray], np.ndarray]
    dh_fn: Callable[[np.ndarray], np.ndarray] | None = None
    c1: float = 0.0
    name: str = "custom"
    static: bool = False
    box: tuple | None = None  # ((lo_0, hi_0), ..., (lo_n, hi_n)) where the metric is valid
    # (a, b) as functions of x^1 when h = diag(-a^2, b^2) is static
    diag_coeffs: tuple | None = field(default=None, compare=False)

    @property
    def dim(self):
        return self.dim_n + 1

    def h(self, x):
        return self.h_fn(np.asarray(x, dtype=float))

    def dh(self, x):
        x = np.asarray(x, dtype=float)
        if self.dh_fn is not None:
            return self.dh_fn(x)
        d = self.dim
        out = np.empty(x.shape[:-1] + (d, d, d))
        for m in range(d):
            e = np.zeros(d)
            e[m] = FD_STEP
            out[..., m, :, :] = (self.h_fn(x + e) - self.h_fn(x - e)) / (2 * FD_STEP)
        return out

    def inner(self, x, u, v):
        return np.einsum("...a,...ab,...b->...", u, self.h(x), v)

    def check(self, points):
        """Verify the uniformity conditions at sample points; returns the observed c1."""
        H = self.h(points)
        d = self.dim
        h00 = H[..., 0, 0]
        spatial = H[..., 1:, 1:]
        lam_min = np.linalg.eigvalsh(spatial)[..., 0]
        cross = np.abs(H[..., 0, 1:]).max() if d > 1 else 0.0
        if np.any(h00 >= 0) or np.any(lam_min <= 0):
            raise SignatureViolation(f"metric {self.name} is not of signature (-,+...) on the sample")
        if cross > 1e-12:
            raise SignatureViolation(f"metric {self.name} has h_0i = {cross:.3e} != 0")
        return float(min((-h00).min(), lam_min.min(), 1.0 / np.abs(H).max()))


def minkowski(n=1):
    d = n + 1
    eta = np.diag([-1.0] + [1.0] * n)

    def h(x):
        return np.broadcast_to(eta, x.shape[:-1] + (d, d)).copy()

    def dh(x):
        return np.zeros(x.shape[:-1] + (d, d, d))

    ones = lambda x: np.ones(np.shape(x))
    return LorentzMetric(dim_n=n, h_fn=h, dh_fn=dh, c1=1.0, name="minkowski", static=True,
                         diag_coeffs=(ones, ones))


def polar():
    """The Minkowski metric in (theta, r): ``-r^2 dtheta^2 + dr^2``."""

    def h(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = -x[..., 1] ** 2
        out[..., 1, 1] = 1.0
        return out

    def dh(x):
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 1, 0, 0] = -2.0 * x[..., 1]
        return out

    return LorentzMetric(dim_n=1, h_fn=h, dh_fn=dh, c1=0.0, name="polar", static=False,
                         box=((-np.inf, np.inf), (1e-8, np.inf)))


def conformal(amplitude, k, omega=0.0, n=1):
    """``exp(2 lam) eta`` with ``lam = amplitude * sin(k x^1 + omega x^0)``."""
    d = n + 1
    eta = np.diag([-1.0] + [1.0] * n)

    def lam(x):
        return amplitude * np.sin(k * x[..., 1] + omega * x[..., 0])

    def h(x):
        w = np.exp(2.0 * lam(x))
        return w[..., None, None] * eta

    def dh(x):
        phase = k * x[..., 1] + omega * x[..., 0]
        w = np.exp(2.0 * lam(x))
        dl = amplitude * np.cos(phase)
        out = np.zeros(x.shape[:-1] + (d, d, d))
        out[..., 0, :, :] = (2.0 * omega * dl * w)[..., None, None] * eta
        out[..., 1, :, :] = (2.0 * k * dl * w)[..., None, None] * eta
        return out

    c1 = float(np.exp(-2.0 * abs(amplitude)))
    name = f"conformal:{amplitude:g}:{k:g}" + (f":{omega:g}" if omega else "")
    coeffs = None
    if omega == 0.0 and n == 1:
        a = lambda x: np.exp(amplitude * np.sin(k * np.asarray(x, dtype=float)))
        coeffs = (a, a)
    return LorentzMetric(dim_n=n, h_fn=h, dh_fn=dh, c1=c1, name=name,
                         static=(omega == 0.0), diag_coeffs=coeffs)


def parse_metric(spec):
    """Metric from a config string: ``minkowski``, ``polar`` or ``conformal:A:k[:omega]``."""
    if not isinstance(spec, str):
        raise ConfigError(f"metric spec must be a string, got {spec!r}")
    parts = spec.split(":")
    if parts == ["minkowski"]:
        return minkowski()
    if parts == ["polar"]:
        return polar()
    if parts[0] == "conformal" and len(parts) in (3, 4):
        try:
            vals = [float(p) for p in parts[1:]]
        except ValueError:
            raise ConfigError(f"bad conformal metric parameters in {spec!r}") from None
        return conformal(*vals)
    raise ConfigError(f"unknown metric {spec!r}; expected minkowski, polar or "
                      "conformal:<amplitude>:<frequency>[:<omega>]")


def christoffel(metric, x):
    """``Gamma[..., a, m, n]`` for the Levi-Civita connection of ``metric`` at ``x``."""
    x = np.asarray(x, dtype=float)
    H = metric.h(x)
    det = np.linalg.det(H)
    if np.any(np.abs(det) < 1e-12):
        raise SingularMetric("metric determinant below 1e-12")
    hinv = np.linalg.inv(H)
    dh = metric.dh(x)
    # T[b, m, n] = d_m h_bn + d_n h_mb - d_b h_mn
    T = (np.swapaxes(dh, -3, -2) + np.moveaxis(dh, -3, -1) - dh)
    return 0.5 * np.einsum("...ab,...bmn->...amn", hinv, T)


def geodesic_rhs(metric, x, v):
    G = christoffel(metric, x)
    return -np.einsum("...amn,...m,...n->...a", G, v, v)


@dataclass(frozen=True)
class GeodesicSamples:
    s: np.ndarray
    x: np.ndarray
    v: np.ndarray
    norm: np.ndarray

    @property
    def norm_drift(self):
        return float(np.max(np.abs(self.norm - self.norm[0])))


def geodesic(metric, x0, v0, s_max, ds, box=None, rtol=1e-12, atol=1e-13):
    """Affinely parametrized geodesic with ``x(0) = x0``, ``x'(0) = v0``."""
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if not np.any(v0):
        raise ValueError("initial velocity must be nonzero")
    d = metric.dim
    box = box if box is not None else metric.box

    def rhs(_s, y):
        x, v = y[:d], y[d:]
        return np.concatenate([v, geodesic_rhs(metric, x, v)])

    events = None
    if box is not None:
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])

        def leave(_s, y):
            x = y[:d]
            return min(np.min(x - lo), np.min(hi - x))

        leave.terminal = True
        leave.direction = -1
        events = [leave]
    n = max(int(round(s_max / ds)), 1)
    s_eval = np.linspace(0.0, s_max, n + 1)
    sol = solve_ivp(rhs, (0.0, s_max), np.concatenate([x0, v0]), method="DOP853",
                    t_eval=s_eval, rtol=rtol, atol=atol, events=events)
    if sol.status == 1:
        raise LeftDomain(f"geodesic left the coordinate box at s = {sol.t_events[0][0]:.6g}")
    if sol.status != 0:
        raise IntegrationFailed(sol.message)
    x, v = sol.y[:d].T, sol.y[d:].T
    return GeodesicSamples(s=sol.t, x=x, v=v, norm=metric.inner(x, v, v))


def exp_map(metric, base, direction, dist, rtol=1e-12, atol=1e-13):
    """Batched ``exp_base(dist * direction)`` and the velocity at the endpoint.

    Integrates ``x' = dist p``, ``p' = -dist Gamma(p, p)`` over ``[0, 1]`` so every
    geodesic in the batch shares one solver call.  Returns ``(x, p)`` where
    ``p = d/d(dist) exp_base(dist * direction)``.
    """
    base = np.asarray(base, dtype=float)
    direction = np.asarray(direction, dtype=float)
    shape = base.shape
    d = shape[-1]
    X0 = base.reshape(-1, d)
    P0 = np.broadcast_to(direction, shape).reshape(-1, d)
    s = np.broadcast_to(np.asarray(dist, dtype=float), shape[:-1]).reshape(-1)
    if np.all(s == 0):
        return base.copy(), np.broadcast_to(direction, shape).copy()
    N = X0.shape[0]

    def rhs(_lam, y):
        Y = y.reshape(2, N, d)
        x, p = Y[0], Y[1]
        dx = s[:, None] * p
        dp = s[:, None] * geodesic_rhs(metric, x, p)
        return np.concatenate([dx.ravel(), dp.ravel()])

    sol = solve_ivp(rhs, (0.0, 1.0), np.concatenate([X0.ravel(), P0.ravel()]),
                    method="DOP853", rtol=rtol, atol=atol)
    if sol.status != 0:
        raise IntegrationFailed(sol.message)
    Y = sol.y[:, -1].reshape(2, N, d)
    return Y[0].reshape(shape), Y[1].reshape(shape)


def polar_map(theta, r):
    theta = np.asarray(theta, dtype=float)
    r = np.asarray(r, dtype=float)
    return r * np.sinh(theta), r * np.cosh(theta)


def polar_inverse(t, x):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(t) >= x):
        raise OutsideWedge("polar coordinates need |t| < x")
    return np.arctanh(t / x), np.sqrt((x - t) * (x + t))
