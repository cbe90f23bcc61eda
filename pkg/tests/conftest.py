import time

import numpy as np
import pytest

from frontlab import nonlinearity as nl


@pytest.fixture(scope="session")
def quartic():
    return nl.quartic_well()


@pytest.fixture(scope="session")
def tanh_profile(quartic):
    return nl.profile(quartic)


def asym_f(u):
    u = np.asarray(u, dtype=float)
    return -0.5 * u * (u * u - 1.0) * (u * u - 4.0) + 0.05 * (1.0 - u * u)


@pytest.fixture(scope="session")
def asym_well():
    return nl.decompose(asym_f, 1.0, name="asym")


FLAT_EPS = (0.1, 0.05, 0.025)
THETAS = np.linspace(-1.0, 1.0, 41)


@pytest.fixture(scope="session")
def flat_sweep():
    """The κ = 1 flat runs over the ε set, with their resampled fields and polar ζ series."""
    import warnings

    from frontlab.diagnostics import SpaceTimeField, zeta_polar_series
    from frontlab.errors import TruncationWarning
    from frontlab.wave import RunConfig, run

    out = {}
    for eps in FLAT_EPS:
        start = time.perf_counter()
        cfg = RunConfig(eps=eps, kappa=1.0, T_final=1.5, cadence=0.225 * eps)
        traj = run(cfg)
        field = SpaceTimeField.from_trajectory(traj)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            zs = zeta_polar_series(field, THETAS, eps, cfg.r0, nl.quartic_well())
        out[eps] = {"config": cfg, "traj": traj, "field": field, "zeta": zs,
                    "seconds": time.perf_counter() - start}
    return out


CURVED_EPS = (0.1, 0.05)


@pytest.fixture(scope="session")
def curved_sweep():
    """Curved runs on a conformal metric with constant κ, plus their normal-coordinate ζ series."""
    from frontlab.diagnostics import SpaceTimeField, s_limit, zeta_curved_series
    from frontlab.wave import RunConfig, chart_for, reference_curve, run

    out = {}
    for eps in CURVED_EPS:
        start = time.perf_counter()
        cfg = RunConfig(eps=eps, kappa=0.8, r0=1.25, rho=0.45, metric="conformal:0.1:1",
                        data="curved", T_final=1.0, cadence=eps / 8)
        chart = chart_for(cfg)
        traj = run(cfg, chart=chart)
        field = SpaceTimeField.from_trajectory(traj)
        s1 = s_limit(chart, cfg.rho)
        s_values = np.linspace(0.0, 0.95 * s1, 8)
        zs = zeta_curved_series(field, chart, nl.quartic_well(), eps, cfg.rho, s_values)
        out[eps] = {"config": cfg, "chart": chart, "traj": traj, "field": field, "zeta": zs,
                    "s1": s1, "curve": reference_curve(cfg),
                    "seconds": time.perf_counter() - start}
    return out


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``record(number, passed, detail)``: one summary line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number, passed, detail):
        lines.append((number, f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
