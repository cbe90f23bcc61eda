"""Almost-normal coordinates around a timelike hypersurface.

``phi_tilde(y^tau, y^n) = exp_{Psi(y^tau)}(y^n nu_bar(y^tau))`` shoots unit-normal
geodesics off Gamma.  The corrected map ``phi(y) = phi_tilde(y^0 - sigma(y', y^n),
y', y^n)`` uses the shift ``sigma`` so that the slice ``y^0 = 0`` lands in
``{x^0 = 0}``.  Chart points are arrays ``(..., 1+n)`` ordered ``(y^0, y', y^n)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..errors import (CausticDetected, NotPositiveDefinite, OutsideChart, RootFindFailed,
                      SignatureViolation)
from .metric import exp_map
from .surface import _tau_grid

TANGENTIAL_STEP = 5e-3
NORMAL_STEP = 5e-3


def _fd_weights():
    return np.array([-2.0, -1.0, 1.0, 2.0]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


@dataclass
class NormalChart:
    metric: object
    gp: object
    rho: float
    T: float
    y0: np.ndarray = field(repr=False)
    yp: np.ndarray = field(repr=False)
    yn: np.ndarray = field(repr=False)
    curvature_sign: int = -1  # mean curvature of Gamma equals curvature_sign * kappa
    phi_samples: np.ndarray | None = field(default=None, repr=False)
    g_samples: np.ndarray | None = field(default=None, repr=False)
    sigma_samples: np.ndarray | None = field(default=None, repr=False)
    jac_det: np.ndarray | None = field(default=None, repr=False)
    T0: float = float("nan")
    _tree: object = field(default=None, repr=False)
    _tree_pts: object = field(default=None, repr=False)

    @property
    def n(self):
        return self.metric.dim_n

    @property
    def grid(self):
        """Sample points, shape ``(N0, NM, Nn, 1+n)``."""
        tau = _tau_grid(self.y0, self.yp)
        Y = np.empty(tau.shape[:2] + (self.yn.size, self.n + 1))
        Y[..., :-1] = tau[:, :, None, :]
        Y[..., -1] = self.yn[None, None, :]
        return Y

    # -- uncorrected map ------------------------------------------------------

    def phi_tilde(self, Y):
        """``(phi_tilde(Y), d phi_tilde / d y^n)``."""
        Y = np.asarray(Y, dtype=float)
        tau = Y[..., :-1]
        return exp_map(self.metric, self.gp.point(tau), self.gp.normal(tau), Y[..., -1])

    def jac_tilde(self, Y, h=TANGENTIAL_STEP):
        """``J[..., mu, alpha] = d phi_tilde^mu / d y^alpha`` (tangential columns by 4th-order FD)."""
        Y = np.asarray(Y, dtype=float)
        n = self.n
        offs, wts = _fd_weights()
        stack = [Y]
        for k in range(n):
            for o in offs:
                Z = Y.copy()
                Z[..., k] += o * h
                stack.append(Z)
        x, p = self.phi_tilde(np.stack(stack))
        J = np.empty(Y.shape + (n + 1,))
        for k in range(n):
            sl = x[1 + 4 * k: 5 + 4 * k]
            J[..., :, k] = np.tensordot(wts, sl, axes=(0, 0)) / h
        J[..., :, n] = p[0]
        return x[0], J

    # -- shift and corrected map ------------------------------------------------

    def sigma(self, Yn, tol=1e-12, max_iter=50):
        """Shift ``sigma`` and its gradient ``(d_a sigma, d_n sigma)`` at points ``(y', y^n)``."""
        Yn = np.asarray(Yn, dtype=float)
        shape = Yn.shape[:-1]
        flat = Yn.reshape(-1, self.n)
        uniq, inv = np.unique(flat, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        sig = np.zeros(uniq.shape[0])
        Z = np.concatenate([np.zeros((uniq.shape[0], 1)), uniq], axis=1)
        for _ in range(max_iter):
            Z[:, 0] = -sig
            x, J = self.jac_tilde(Z)
            slope = J[:, 0, 0]
            if np.any(np.abs(slope) < 1e-8):
                raise RootFindFailed("d phi_tilde^0 / d y^0 vanishes while solving for sigma")
            step = x[:, 0] / slope
            step = np.clip(step, -0.5 * self.rho, 0.5 * self.rho)
            sig = sig + step
            if np.max(np.abs(x[:, 0])) < tol:
                break
        else:
            raise RootFindFailed(f"sigma Newton did not converge (|phi^0| = {np.max(np.abs(x[:, 0])):.3e})")
        Z[:, 0] = -sig
        x, J = self.jac_tilde(Z)
        grad = J[:, 0, 1:] / J[:, 0, 0][:, None]
        return sig[inv].reshape(shape), grad[inv].reshape(shape + (self.n,))

    def phi(self, Y):
        Y = np.asarray(Y, dtype=float)
        sig, _ = self.sigma(Y[..., 1:])
        Z = Y.copy()
        Z[..., 0] -= sig
        return self.phi_tilde(Z)[0]

    def jac(self, Y):
        """Corrected map and its Jacobian ``d phi^mu / d y^alpha``."""
        Y = np.asarray(Y, dtype=float)
        sig, grad = self.sigma(Y[..., 1:])
        Z = Y.copy()
        Z[..., 0] -= sig
        x, Jt = self.jac_tilde(Z)
        J = Jt.copy()
        J[..., :, 1:] -= Jt[..., :, :1] * grad[..., None, :]
        return x, J

    def g(self, Y):
        x, J = self.jac(Y)
        return np.einsum("...ma,...mn,...nb->...ab", J, self.metric.h(x), J)

    def g_tilde(self, Y):
        x, J = self.jac_tilde(Y)
        return np.einsum("...ma,...mn,...nb->...ab", J, self.metric.h(x), J)

    # -- curvature -------------------------------------------------------------

    def mean_curvature(self, y_tau, h=NORMAL_STEP, divergence=False):
        """``-1/2 g^{ab} d_n g_ab`` at ``y^n = 0`` (or ``-d_n log sqrt(-g)``)."""
        y_tau = np.asarray(y_tau, dtype=float)
        offs, wts = _fd_weights()
        pts = np.empty((5,) + y_tau.shape[:-1] + (self.n + 1,))
        for i, o in enumerate(np.concatenate([[0.0], offs])):
            pts[i, ..., :-1] = y_tau
            pts[i, ..., -1] = o * h
        G = self.g(pts)
        if divergence:
            logv = 0.5 * np.log(-np.linalg.det(G[1:]))
            return -np.tensordot(wts, logv, axes=(0, 0)) / h
        dG = np.tensordot(wts, G[1:], axes=(0, 0)) / h
        return -0.5 * np.einsum("...ab,...ab->...", np.linalg.inv(G[0]), dG)

    # -- inversion ---------------------------------------------------------------

    def _seed_tree(self):
        if self._tree is None:
            Y = self.grid.reshape(-1, self.n + 1)
            x, _ = self.phi_tilde(Y)
            self._tree = cKDTree(x)
            self._tree_pts = Y
        return self._tree, self._tree_pts

    def inverse_tilde(self, x, tol=1e-13, max_iter=30):
        """``phi_tilde^{-1}(x)`` by damped Newton seeded at the nearest grid sample."""
        x = np.asarray(x, dtype=float)
        shape = x.shape
        X = x.reshape(-1, self.n + 1)
        tree, pts = self._seed_tree()
        _, idx = tree.query(X)
        Y = pts[idx].copy()
        for _ in range(max_iter):
            f, J = self.jac_tilde(Y)
            r = f - X
            if np.max(np.abs(r)) < tol:
                break
            dY = np.linalg.solve(J, r[..., None])[..., 0]
            Y = Y - np.clip(dY, -0.25 * self.rho, 0.25 * self.rho)
        else:
            raise OutsideChart("inversion of the normal map did not converge")
        bad = (np.abs(Y[:, -1]) > self.rho * (1 + 1e-9)) | (np.abs(Y[:, 0]) > self.T + 1e-9)
        if np.any(bad):
            raise OutsideChart("point lies outside the chart image")
        return Y.reshape(shape)

    def inverse(self, x, tol=1e-13, max_iter=30):
        """``phi^{-1}(x)`` for the corrected chart."""
        x = np.asarray(x, dtype=float)
        shape = x.shape
        X = x.reshape(-1, self.n + 1)
        Y = self.inverse_tilde(X)
        sig, _ = self.sigma(Y[:, 1:])
        Y[:, 0] += sig
        for _ in range(max_iter):
            f, J = self.jac(Y)
            r = f - X
            if np.max(np.abs(r)) < tol:
                break
            Y = Y - np.linalg.solve(J, r[..., None])[..., 0]
        else:
            raise OutsideChart("inversion of the corrected chart did not converge")
        return Y.reshape(shape)

    def d_gamma(self, x):
        """Eikonal distance ``pi^n o phi_tilde^{-1}``."""
        return self.inverse_tilde(x)[..., -1]

    def normal_coordinate_field(self, t, x):
        """``y^n`` at the points ``(t, x)`` of a 1+1 grid, NaN outside the chart image.

        Uses a vectorized Newton iteration on the cubic spline of the sampled map,
        which is accurate to the spline error; :meth:`d_gamma` is the exact route.
        """
        from scipy.interpolate import RectBivariateSpline

        if self.n != 1:
            raise ValueError("normal_coordinate_field is for 1+1 charts")
        tree, pts = self._seed_tree()
        if not hasattr(self, "_splines"):
            ph = self.phi_samples[:, 0]           # (N0, Nn, 2) on the corrected grid
            self._splines = [RectBivariateSpline(self.y0, self.yn, ph[..., k], kx=3, ky=3)
                             for k in range(2)]
            self._corr_tree = cKDTree(ph.reshape(-1, 2))
            Yg = self.grid[:, 0].reshape(-1, 2)
            self._corr_pts = Yg
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        X = np.column_stack([t.ravel(), x.ravel()])
        dist, idx = self._corr_tree.query(X)
        Y = self._corr_pts[idx].copy()
        s0, s1 = self._splines
        for _ in range(20):
            f = np.column_stack([s0(Y[:, 0], Y[:, 1], grid=False), s1(Y[:, 0], Y[:, 1], grid=False)])
            J = np.empty((Y.shape[0], 2, 2))
            J[:, 0, 0] = s0(Y[:, 0], Y[:, 1], dx=1, grid=False)
            J[:, 0, 1] = s0(Y[:, 0], Y[:, 1], dy=1, grid=False)
            J[:, 1, 0] = s1(Y[:, 0], Y[:, 1], dx=1, grid=False)
            J[:, 1, 1] = s1(Y[:, 0], Y[:, 1], dy=1, grid=False)
            r = f - X
            with np.errstate(all="ignore"):
                dY = np.linalg.solve(J, r[..., None])[..., 0]
            Y = Y - np.clip(np.nan_to_num(dY), -0.1 * self.rho, 0.1 * self.rho)
        f = np.column_stack([s0(Y[:, 0], Y[:, 1], grid=False), s1(Y[:, 0], Y[:, 1], grid=False)])
        ok = (np.max(np.abs(f - X), axis=1) < 1e-9) & (np.abs(Y[:, 1]) <= self.rho) \
            & (Y[:, 0] >= self.y0[0]) & (Y[:, 0] <= self.y0[-1])
        out = np.where(ok, Y[:, 1], np.nan)
        return out.reshape(t.shape)


def build_normal_chart(metric, gp, rho, T, grid=None, auto_shrink=False, max_halvings=6):
    """Construct the chart on ``[-T, T] x M x [-rho, rho]`` and check it.

    ``grid`` may set ``n_y0`` and ``n_yn`` (sample counts).  With ``auto_shrink``
    the half-width is halved until the caustic and positivity checks pass.
    """
    grid = dict(grid or {})
    n_y0 = int(grid.pop("n_y0", 41))
    n_yn = int(grid.pop("n_yn", 41))
    if grid:
        raise ValueError(f"unknown grid keys {sorted(grid)}")
    if rho <= 0 or T <= 0:
        raise ValueError("rho and T must be positive")
    for attempt in range(max_halvings + 1 if auto_shrink else 1):
        try:
            chart = _build(metric, gp, rho, T, n_y0, n_yn)
            energy_tensor_constants(chart)
            return chart
        except (CausticDetected, NotPositiveDefinite):
            if not auto_shrink or attempt == max_halvings:
                raise
            rho *= 0.5
    raise AssertionError("unreachable")


def _build(metric, gp, rho, T, n_y0, n_yn):
    chart = NormalChart(metric=metric, gp=gp, rho=float(rho), T=float(T),
                        y0=np.linspace(-T, T, n_y0), yp=gp.yp, yn=np.linspace(-rho, rho, n_yn))
    Y = chart.grid
    x_t, Jt = chart.jac_tilde(Y)
    det = np.linalg.det(Jt)
    i0 = int(np.argmin(np.abs(chart.yn)))
    ref = np.sign(det[..., i0:i0 + 1])
    bad = (det * ref) <= 0
    if np.any(bad):
        yn_bad = np.abs(Y[..., -1][bad])
        raise CausticDetected(f"normal map Jacobian changes sign at |y^n| = {yn_bad.min():.6g}",
                              yn=float(yn_bad.min()))
    x, J = chart.jac(Y)
    g = np.einsum("...ma,...mn,...nb->...ab", J, metric.h(x), J)
    ev = np.linalg.eigvalsh(g)
    if np.any(ev[..., 0] >= 0) or np.any(ev[..., 1:] <= 0):
        raise SignatureViolation("pullback metric lost Lorentzian signature")
    sig, _ = chart.sigma(Y[:, :, :, 1:][0])
    chart.phi_samples = x
    chart.g_samples = g
    chart.sigma_samples = sig
    chart.jac_det = det
    corners = np.abs(x[[0, -1]][..., 0])
    chart.T0 = float(corners.min())
    return chart


def pullback_metric(map_fn, metric, Y, h=1e-5):
    """``g = J^T h(map) J`` for an arbitrary differentiable map (Jacobian by central FD)."""
    Y = np.asarray(Y, dtype=float)
    d = Y.shape[-1]
    J = np.empty(Y.shape + (d,))
    for a in range(d):
        e = np.zeros(d)
        e[a] = h
        J[..., :, a] = (map_fn(Y + e) - map_fn(Y - e)) / (2 * h)
    g = np.einsum("...ma,...mn,...nb->...ab", J, metric.h(map_fn(Y)), J)
    ev = np.linalg.eigvalsh(g)
    if np.any(ev[..., 0] >= 0) or np.any(ev[..., 1:] <= 0):
        raise SignatureViolation("pullback is not of signature (-, +, ...)")
    return g


def mean_curvature(chart, y_tau=None, divergence=False):
    """Mean curvature of Gamma on the chart's ``y_tau`` grid (or at given points)."""
    if y_tau is None:
        y_tau = _tau_grid(chart.y0, chart.yp)
    return chart.mean_curvature(y_tau, divergence=divergence)


def eikonal_residual(chart, points, step=1e-4):
    """``|h^{ab} d_a d d_b d - 1|`` by centered differences, and the ``phi^{-1}`` ratio.

    Returns ``(residual, ratio)`` where ``ratio = |pi^n phi^{-1} - d| / d^2`` (NaN on Gamma).
    """
    pts = np.asarray(points, dtype=float)
    d = pts.shape[-1]
    stack = [pts]
    for a in range(d):
        for o in (1.0, -1.0):
            q = pts.copy()
            q[..., a] += o * step
            stack.append(q)
    vals = chart.d_gamma(np.stack(stack))
    grad = np.stack([(vals[1 + 2 * a] - vals[2 + 2 * a]) / (2 * step) for a in range(d)], axis=-1)
    hinv = np.linalg.inv(chart.metric.h(pts))
    res = np.abs(np.einsum("...a,...ab,...b->...", grad, hinv, grad) - 1.0)
    dist = vals[0]
    corrected = chart.inverse(pts)[..., -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dist != 0, np.abs(corrected - dist) / dist ** 2, np.nan)
    return res, ratio


@dataclass(frozen=True)
class EnergyConstants:
    a: np.ndarray
    c2: float
    c3: float
    c4: float
    c5: float


def energy_tensor(ginv):
    a = np.zeros_like(ginv)
    a[..., 0, 0] = -ginv[..., 0, 0]
    a[..., 1:, 1:] = ginv[..., 1:, 1:]
    return a


def _gen_eig(S, A):
    """Generalized eigenvalues of the symmetric pencil ``(S, A)`` with ``A`` positive definite."""
    L = np.linalg.cholesky(A)
    Li = np.linalg.inv(L)
    M = Li @ S @ np.swapaxes(Li, -1, -2)
    return np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))


def energy_tensor_constants(chart, g=None, yn=None):
    """``a^{ab}`` and the smallest ``c2..c5`` making the energy-tensor bounds hold on the samples."""
    g = chart.g_samples if g is None else g
    yn = chart.grid[..., -1] if yn is None else yn
    ginv = np.linalg.inv(g)
    A = energy_tensor(ginv)
    d = A.shape[-1]
    if np.any(np.linalg.eigvalsh(A)[..., 0] <= 0):
        raise NotPositiveDefinite("a^{ab} is not positive definite; reduce rho")
    At = A[..., :-1, :-1]
    y2 = yn ** 2
    off = y2 > 0
    B = np.zeros_like(A)
    B[..., :-1, :-1] = 0.5 * At
    B[..., -1, -1] = 1.0 + y2
    lam2 = _gen_eig(B - A, A)[..., -1]
    c2 = float(max(0.0, np.max(lam2[off] / y2[off])))
    scale = (1.0 + c2 * y2)
    P = (2.0 - scale)[..., None, None] * At
    if np.any(np.linalg.eigvalsh(P)[..., 0] <= 0):
        raise NotPositiveDefinite("upper energy bound fails; reduce rho")
    w = scale[..., None] * A[..., :-1, -1]
    schur = scale * A[..., -1, -1] + np.einsum("...i,...i->...", w,
                                                np.linalg.solve(P, w[..., None])[..., 0]) - 1.0
    c3 = float(max(0.0, np.max(schur[off] / y2[off])))
    c4 = float(np.max(1.0 / np.linalg.eigvalsh(At)[..., 0]))
    e0 = np.zeros(d)
    e0[0] = 1.0
    gn = ginv[..., -1, :]
    S = 0.5 * (e0[:, None] * gn[..., None, :] + gn[..., :, None] * e0[None, :])
    c5 = float(2.0 * np.max(np.abs(_gen_eig(S, A))))
    return EnergyConstants(a=A, c2=c2, c3=c3, c4=c4, c5=c5)


def block_orders(chart, levels=(0.2, 0.1, 0.05, 0.025), y0=None, floor=1e-7):
    """Observed orders of the metric blocks under ``y^n``-halving.

    Returns ``{name: (magnitudes, orders)}``; a block whose magnitude stays below
    ``floor`` at every level vanishes identically and has orders ``None``.
    """
    n = chart.n
    y0 = chart.y0[np.abs(chart.y0) <= 0.8 * chart.T][::4] if y0 is None else np.asarray(y0)
    tau = _tau_grid(y0, chart.yp)
    lv = np.asarray(levels, dtype=float)
    pts = np.empty((lv.size, 2) + tau.shape[:2] + (n + 1,))
    pts[..., :-1] = tau
    pts[..., -1] = (lv[:, None] * np.array([1.0, -1.0]))[:, :, None, None]
    zero = np.concatenate([tau, np.zeros(tau.shape[:2] + (1,))], axis=-1)
    gam = chart.g(zero)
    G = chart.g(pts)
    Ginv = np.linalg.inv(G)
    h = TANGENTIAL_STEP
    offs, wts = _fd_weights()
    shifted = np.stack([pts + np.eye(n + 1)[0] * o * h for o in offs])
    dGinv = np.tensordot(wts, np.linalg.inv(chart.g(shifted)), axes=(0, 0)) / h
    mag = {
        "g_tt - gamma": np.abs(G[..., :-1, :-1] - gam[None, None, :, :, :-1, :-1]),
        "g_tn": np.abs(G[..., :-1, -1]),
        "g_nn - 1": np.abs(G[..., -1, -1] - 1.0),
        "g^tn": np.abs(Ginv[..., :-1, -1]),
        "g^nn - 1": np.abs(Ginv[..., -1, -1] - 1.0),
        "d0 g^tn": np.abs(dGinv[..., :-1, -1]),
        "d0 g^nn": np.abs(dGinv[..., -1, -1]),
    }
    expected = {"g_tt - gamma": 1, "g_tn": 1, "g_nn - 1": 2, "g^tn": 1, "g^nn - 1": 2,
                "d0 g^tn": 1, "d0 g^nn": 2}
    out = {}
    for name, arr in mag.items():
        m = arr.reshape(lv.size, -1).max(axis=1)
        if np.all(m < floor):
            out[name] = (m, None, expected[name])
        else:
            out[name] = (m, np.log2(m[:-1] / m[1:]), expected[name])
    return out


def write_chart_csv(chart, path):
    """Grid dump: chart coordinates, image point, g row-major, sigma and eikonal residual."""
    Y = chart.grid
    d = chart.n + 1
    _, Jt = chart.jac_tilde(Y)
    row_n = np.linalg.inv(Jt)[..., -1, :]
    hinv = np.linalg.inv(chart.metric.h(chart.phi_samples))
    eik = np.abs(np.einsum("...a,...ab,...b->...", row_n, hinv, row_n) - 1.0)
    sig = np.broadcast_to(chart.sigma_samples[None], Y.shape[:-1])
    names = ["y0"] + [f"y{k}" for k in range(1, chart.n)] + ["yn"]
    names += [f"phi{k}" for k in range(d)]
    names += [f"g{a}{b}" for a in range(d) for b in range(d)]
    names += ["sigma", "eikonal_residual"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        flatY = Y.reshape(-1, d)
        flatX = chart.phi_samples.reshape(-1, d)
        flatG = chart.g_samples.reshape(-1, d * d)
        for i in range(flatY.shape[0]):
            vals = list(flatY[i]) + list(flatX[i]) + list(flatG[i]) + [sig.reshape(-1)[i],
                                                                       eik.reshape(-1)[i]]
            w.writerow([format(float(v), ".17g") for v in vals])
