"""Double-well potentials, optimal profiles and the shooting decomposition.

A well is described by the triple ``(F, f0, f1)`` with ``f0 = F'`` and
``f1 = sign(1 - s^2) * sqrt(2 F)``.  The wave equation studied elsewhere in
the package uses the nonlinearity ``f0(u) / eps + kappa * f1(u)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from .errors import IntegrationFailed, NotDoubleWell, ShootingFailed

ScalarFn = Callable[[np.ndarray], np.ndarray]

SEED_THRESHOLD = 1e-10
CUTOFF_DERIVATIVE_BOUND = 6.0  # sup |chi_rho'| * rho for the bump below


@dataclass(frozen=True)
class DoubleWell:
    """Potential ``F`` with wells at -1 and 1, its derivative ``f0`` and ``f1``."""

    F: ScalarFn
    f0: ScalarFn
    f1: ScalarFn
    c0: float
    kappa_builtin: float | None = None
    name: str = "custom"
    domain: tuple[float, float] = (-2.0, 2.0)
    meta: dict = field(default_factory=dict, compare=False)

    def f_eps(self, u, eps, kappa):
        """Full nonlinearity ``f0(u) + eps * kappa * f1(u)``."""
        return self.f0(u) + eps * kappa * self.f1(u)

    def bounds_constants(self, n=4001):
        """Fitted ``(c, C)`` with ``c (1-|s|)^2 <= F(s) <= C (1-|s|)^2`` on ``|s| <= 2``."""
        lo, hi = max(self.domain[0], -2.0), min(self.domain[1], 2.0)
        s = np.linspace(lo, hi, n)
        d2 = (1.0 - np.abs(s)) ** 2
        keep = d2 > 1e-8
        ratio = np.asarray(self.F(s[keep])) / d2[keep]
        return float(ratio.min()), float(ratio.max())


def _interface_energy(f1):
    val, _ = integrate.quad(lambda s: float(f1(np.asarray(s))), -1.0, 1.0,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def quartic_well():
    """The model well ``F(u) = (1 - u^2)^2 / 2``."""

    def F(u):
        u = np.asarray(u, dtype=float)
        return 0.5 * (1.0 - u * u) ** 2

    def f0(u):
        u = np.asarray(u, dtype=float)
        # (u*u - 1) is an exact zero at u = +-1, so the equilibria stay exact
        return 2.0 * u * (u * u - 1.0)

    def f1(u):
        u = np.asarray(u, dtype=float)
        return 1.0 - u * u

    return DoubleWell(F=F, f0=f0, f1=f1, c0=_interface_energy(f1),
                      kappa_builtin=0.0, name="quartic", domain=(-np.inf, np.inf))


def polynomial_nonlinearity(coeffs):
    """Callable ``f(u) = sum_k coeffs[k] u^k`` (ascending powers)."""
    c = np.asarray(coeffs, dtype=float)
    poly = np.polynomial.Polynomial(c)

    def f(u):
        return poly(np.asarray(u, dtype=float))

    return f


# ---------------------------------------------------------------------------
# decomposition f_eps = F' + eps*kappa*sqrt(2F) sign_(-1,1)
# ---------------------------------------------------------------------------

def _derivative(f, x, h=1e-5):
    return float((f(x + h) - f(x - h)) / (2 * h))


def _check_double_well(f, scale):
    for w in (-1.0, 1.0):
        if abs(float(f(w))) > 1e-9 * max(scale, 1.0):
            raise NotDoubleWell(f"f_eps({w:+.0f}) = {float(f(w)):.3e}, expected a root")
    d_left, d_right = _derivative(f, -1.0), _derivative(f, 1.0)
    if d_left <= 0 or d_right <= 0:
        raise NotDoubleWell(f"f_eps'(+-1) must be positive, got {d_left:.3e}, {d_right:.3e}")
    u = np.linspace(-1.0, 1.0, 2001)[1:-1]
    vals = f(u)
    signs = np.sign(vals)
    nz = signs[signs != 0]
    changes = np.count_nonzero(np.diff(nz))
    if changes != 1 or nz[0] <= 0 or nz[-1] >= 0:
        raise NotDoubleWell("f_eps must have exactly one interior root, with f_eps > 0 "
                            "right of -1 and f_eps < 0 left of 1")
    idx = np.flatnonzero(np.diff(signs) != 0)[0]
    u_mid = optimize.brentq(f, u[idx], u[idx + 1], xtol=1e-15)
    return d_left, d_right, u_mid


def _corner_curvatures(lam, d_left, d_right):
    """Second derivatives of F at -1 and +1 from the local quadratic model."""
    sa = 0.5 * (-lam + math.sqrt(lam * lam + 4.0 * d_left))
    sb = 0.5 * (lam + math.sqrt(lam * lam + 4.0 * d_right))
    return sa * sa, sb * sb


def _potential_rhs(f, lam, sign):
    def rhs(u, y):
        return [float(f(u)) - sign * lam * math.sqrt(2.0 * max(y[0], 0.0))]
    return rhs


def _integrate_piece(f, lam, sign, u_start, F_start, u_end, dense=False):
    sol = integrate.solve_ivp(_potential_rhs(f, lam, sign), (u_start, u_end), [F_start],
                              method="DOP853", rtol=1e-12, atol=1e-16,
                              dense_output=dense)
    if sol.status != 0:
        raise IntegrationFailed(f"potential ODE failed on [{u_start}, {u_end}]: {sol.message}")
    return sol


def _shoot(f, lam, d_left, d_right, seed):
    """F^lam(1) for the ODE started at -1 (negative once F runs out before +1)."""
    a, _ = _corner_curvatures(lam, d_left, d_right)
    w0 = math.sqrt(2.0 * seed / a)
    sol = _integrate_piece(f, lam, +1.0, -1.0 + w0, seed, 1.0)
    return float(sol.y[0, -1])


def _scan_brackets(g, K, n=33):
    lams = np.linspace(-K, K, n)
    vals = np.array([g(x) for x in lams])
    brackets = []
    for i in range(n - 1):
        if vals[i] == 0.0:
            brackets.append((lams[i], lams[i]))
        elif vals[i] * vals[i + 1] < 0:
            brackets.append((lams[i], lams[i + 1]))
    if vals[-1] == 0.0:
        brackets.append((lams[-1], lams[-1]))
    return brackets


def decompose(f_eps, eps=1.0, delta=0.5, seed=SEED_THRESHOLD, name="decomposed"):
    """Split a double-well derivative into ``F' + eps*kappa*f1``.

    Returns ``(well, kappa)``.  ``F`` is recovered on ``[-1-delta, 1+delta]`` by
    integrating ``F' = f_eps - eps*kappa*sign_(-1,1) sqrt(2F)`` out of the two
    wells, with ``eps*kappa`` fixed by shooting so that ``F(1) = 0``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    f = f_eps
    grid = np.linspace(-1.0 - delta, 1.0 + delta, 2001)
    scale = float(np.max(np.abs(f(grid))))
    d_left, d_right, u_mid = _check_double_well(f, scale)

    g = lambda lam: _shoot(f, lam, d_left, d_right, seed)

    rise_left, _ = integrate.quad(lambda u: float(f(u)), -1.0, u_mid)
    rise_right, _ = integrate.quad(lambda u: -float(f(u)), u_mid, 1.0)
    peak = min(rise_left, rise_right)
    fmax = float(np.max(np.abs(f(np.linspace(-1, 1, 401)))))
    K = 2.0 * fmax / math.sqrt(2.0 * peak)

    brackets = []
    for _ in range(6):
        brackets = _scan_brackets(g, K)
        if brackets:
            break
        K *= 2.0
    if not brackets:
        raise ShootingFailed(f"no sign change of F(1) for eps*kappa in [-{K}, {K}]")
    if len(brackets) > 1:
        raise ShootingFailed(f"more than one admissible eps*kappa bracket: {brackets}")
    lo, hi = brackets[0]
    lam = lo if lo == hi else optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    a, b = _corner_curvatures(lam, d_left, d_right)
    wa, wb = math.sqrt(2.0 * seed / a), math.sqrt(2.0 * seed / b)

    # inner part from both wells, stitched at the interior maximum
    left = _integrate_piece(f, lam, +1.0, -1.0 + wa, seed, u_mid, dense=True)
    right = _integrate_piece(f, lam, +1.0, 1.0 - wb, seed, u_mid, dense=True)
    if np.any(left.y[0] <= 0) or np.any(right.y[0] <= 0):
        raise ShootingFailed("recovered F is not positive on (-1, 1)")
    mismatch = abs(left.y[0, -1] - right.y[0, -1])
    if mismatch > 1e-8:
        raise ShootingFailed(f"inner branches disagree at the barrier by {mismatch:.3e}")
    outer_r = _integrate_piece(f, lam, -1.0, 1.0 + wb, seed, 1.0 + delta, dense=True)
    outer_l = _integrate_piece(f, lam, -1.0, -1.0 - wa, seed, -1.0 - delta, dense=True)

    nodes = np.unique(np.concatenate([
        np.linspace(-1.0 - delta, -1.0, 1201), np.linspace(-1.0, u_mid, 2001),
        np.linspace(u_mid, 1.0, 2001), np.linspace(1.0, 1.0 + delta, 1201)]))
    Fn = np.empty_like(nodes)
    for sol, mask in (
        (outer_l, nodes <= -1.0 - wa),
        (left, (nodes >= -1.0 + wa) & (nodes <= u_mid)),
        (right, (nodes > u_mid) & (nodes <= 1.0 - wb)),
        (outer_r, nodes >= 1.0 + wb),
    ):
        Fn[mask] = sol.sol(nodes[mask])[0]
    near_l = np.abs(nodes + 1.0) < wa
    near_r = np.abs(nodes - 1.0) < wb
    Fn[near_l] = 0.5 * a * (nodes[near_l] + 1.0) ** 2
    Fn[near_r] = 0.5 * b * (nodes[near_r] - 1.0) ** 2
    Fn = np.maximum(Fn, 0.0)
    sgn = np.where(np.abs(nodes) < 1.0, 1.0, -1.0)
    f1n = sgn * np.sqrt(2.0 * Fn)
    dFn = f(nodes) - lam * f1n
    spline = CubicHermiteSpline(nodes, Fn, dFn, extrapolate=True)
    lo_u, hi_u = nodes[0], nodes[-1]

    def F(u):
        return np.maximum(spline(np.asarray(u, dtype=float)), 0.0)

    def f1(u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) < 1.0, 1.0, -1.0) * np.sqrt(2.0 * F(u))

    def f0(u):
        u = np.asarray(u, dtype=float)
        return f(u) - lam * f1(u)

    well = DoubleWell(F=F, f0=f0, f1=f1, c0=_interface_energy(f1), kappa_builtin=lam / eps,
                      name=name, domain=(lo_u, hi_u),
                      meta={"eps": eps, "eps_kappa": lam, "u_mid": u_mid,
                            "brackets": brackets, "F_mid_mismatch": mismatch})
    return well, lam / eps


def shooting_value(f_eps, eps_kappa, seed=SEED_THRESHOLD):
    """``F^lam(1)`` for ``lam = eps*kappa``: the function whose root ``decompose`` finds."""
    d_left, d_right = _derivative(f_eps, -1.0), _derivative(f_eps, 1.0)
    return _shoot(f_eps, eps_kappa, d_left, d_right, seed)


# ---------------------------------------------------------------------------
# optimal profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    well: DoubleWell
    s: np.ndarray
    q: np.ndarray
    tail_c: float
    tail_C: float
    residual_first: float
    residual_second: float
    atol: float = 1e-12
    _pos: object = field(repr=False, compare=False, default=None)
    _neg: object = field(repr=False, compare=False, default=None)

    @property
    def s_max(self):
        return float(self.s[-1])

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        shape = s.shape
        sc = np.clip(s.reshape(-1), -self.s_max, self.s_max)
        out = np.empty_like(sc)
        pos = sc >= 0
        if np.any(pos):
            out[pos] = self._pos(sc[pos])[0]
        if np.any(~pos):
            out[~pos] = self._neg(sc[~pos])[0]
        return out.reshape(shape)

    def tail_bound(self, s):
        return self.tail_C * np.exp(-self.tail_c * np.abs(s))

    def tail_floor(self):
        """Deviation level below which ``|q - sign|`` is integrator noise."""
        return 100.0 * self.atol

    def energy(self, eps=1.0):
        """``int (eps/2) q_eps'^2 + F(q_eps)/eps`` for ``q_eps(x) = q(x/eps)``.

        Equals ``c0`` for the optimal profile, independently of ``eps``.
        """
        x = eps * self.s[np.abs(self.s) <= self.s_max - 0.1]
        dq = _fd1(lambda y: self(y / eps), x, 5e-3 * eps)
        dens = 0.5 * eps * dq ** 2 + self.well.F(self(x / eps)) / eps
        return float(np.trapezoid(dens, x))


def _fd1(fn, s, h):
    return (fn(s - 2 * h) - 8 * fn(s - h) + 8 * fn(s + h) - fn(s + 2 * h)) / (12 * h)


def _fd2(fn, s, h):
    return (-fn(s - 2 * h) + 16 * fn(s - h) - 30 * fn(s) + 16 * fn(s + h)
            - fn(s + 2 * h)) / (12 * h * h)


def profile(well, s_max=30.0, ds=0.01, atol=1e-12, rtol=1e-12):
    """Optimal connection ``q' = f1(q)``, ``q(0) = 0`` sampled on ``[-s_max, s_max]``."""
    if s_max <= 0 or ds <= 0:
        raise ValueError("s_max and ds must be positive")

    def rhs(_s, y):
        return well.f1(y)

    sols = []
    for end in (s_max, -s_max):
        sol = integrate.solve_ivp(rhs, (0.0, end), [0.0], method="RK45", rtol=rtol,
                                  atol=atol, dense_output=True)
        if sol.status != 0:
            raise IntegrationFailed(f"profile integration failed: {sol.message}")
        sols.append(sol.sol)
    pos, neg = sols
    n = int(round(s_max / ds))
    s = np.linspace(-n * ds, n * ds, 2 * n + 1)
    q = np.where(s >= 0, pos(np.abs(s))[0], neg(-np.abs(s))[0])
    q[n] = 0.0
    # remove dense-output wiggles at the 1e-15 level in the saturated tails
    q[n:] = np.minimum(np.maximum.accumulate(q[n:]), 1.0)
    q[:n + 1] = np.maximum(np.minimum.accumulate(q[:n + 1][::-1])[::-1], -1.0)

    prof = Profile(well=well, s=s, q=q, tail_c=0.0, tail_C=0.0, residual_first=0.0,
                   residual_second=0.0, _pos=pos, _neg=neg)

    inner = s[(np.abs(s) <= s_max - 0.1)]
    # steps balance stencil truncation against the dense-output noise
    res1 = float(np.max(np.abs(_fd1(prof, inner, 5e-3) - well.f1(prof(inner)))))
    res2 = float(np.max(np.abs(-_fd2(prof, inner, 2e-2) + well.f0(prof(inner)))))

    c, C = _fit_tail(s, q, floor=100.0 * atol)
    # strictly increasing wherever q is distinguishable from the wells
    resolved = np.abs(q - np.sign(s))[:-1] > 100.0 * atol
    if np.any(np.diff(q) < 0) or np.any(np.diff(q)[resolved] <= 0):
        raise IntegrationFailed("profile is not increasing on the sample grid")
    return Profile(well=well, s=s, q=q, tail_c=c, tail_C=C, residual_first=res1,
                   residual_second=res2, atol=atol, _pos=pos, _neg=neg)


def _fit_tail(s, q, floor):
    """Fit ``|q - sign| ~ C exp(-c|s|)`` on the outer third of the resolved range.

    Deviations below ``floor`` are integrator noise and are excluded from both
    the regression and the envelope constant.
    """
    dev = np.abs(q - np.sign(s))
    above = dev > floor
    reach = np.abs(s[above]).max()
    use = above & (np.abs(s) >= 2.0 * reach / 3.0)
    slope, _ = np.polyfit(np.abs(s[use]), np.log(dev[use]), 1)
    c = -float(slope)
    C = float(np.max(dev[above] * np.exp(c * np.abs(s[above]))))
    return c, C


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, built from exp(-1/x)."""
    x = np.asarray(x, dtype=float)
    a = np.zeros_like(x)
    b = np.zeros_like(x)
    pa, pb = x > 0, x < 1
    with np.errstate(divide="ignore", over="ignore"):
        a[pa] = np.exp(-1.0 / x[pa])
        b[pb] = np.exp(-1.0 / (1.0 - x[pb]))
    return a / (a + b)


def cutoff(s, rho):
    """``chi_rho``: 1 on ``|s| <= rho/3``, 0 on ``|s| >= 2 rho/3``."""
    x = (np.abs(np.asarray(s, dtype=float)) - rho / 3.0) / (rho / 3.0)
    return 1.0 - smooth_step(x)


def cutoff_derivative(s, rho, h=1e-6):
    s = np.asarray(s, dtype=float)
    return (cutoff(s + h * rho, rho) - cutoff(s - h * rho, rho)) / (2 * h * rho)


def blended_profile(prof, eps, rho):
    """``s -> chi_rho(s) q(s/eps) + (1 - chi_rho(s)) sign(s)``."""
    if not (0 < eps <= 1):
        raise ValueError("eps must lie in (0, 1]")
    if rho <= 0:
        raise ValueError("rho must be positive")

    def qbar(s):
        s = np.asarray(s, dtype=float)
        flat = s.reshape(-1)
        chi = cutoff(flat, rho)
        out = np.sign(flat)
        band = chi > 0
        if np.any(band):
            out[band] = chi[band] * prof(flat[band] / eps) + (1.0 - chi[band]) * out[band]
        return out.reshape(s.shape)

    return qbar


def q_antiderivative(well, s):
    """``Q(s) = int_0^s f1``."""
    def one(x):
        val, _ = integrate.quad(lambda t: float(well.f1(np.asarray(t))), 0.0, float(x),
                                epsabs=1e-14, epsrel=1e-13, limit=200)
        return val

    s_arr = np.asarray(s, dtype=float)
    if s_arr.ndim == 0:
        return one(s_arr)
    return np.vectorize(one)(s_arr)


def write_profile_csv(prof, path, eps=1.0, kappa=None):
    kappa = prof.well.kappa_builtin if kappa is None else kappa
    with open(path, "w", newline="") as fh:
        fh.write(f"# well={prof.well.name} eps={eps:.17g} c0={prof.well.c0:.17g} "
                 f"kappa={'' if kappa is None else format(kappa, '.17g')}\n")
        w = csv.writer(fh)
        w.writerow(["s", "q", "F(q)", "f1(q)"])
        Fq, f1q = prof.well.F(prof.q), prof.well.f1(prof.q)
        for row in zip(prof.s, prof.q, Fq, f1q):
            w.writerow([format(float(v), ".17g") for v in row])
