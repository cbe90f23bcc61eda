"""Energy functionals, interface tracking and scaling diagnostics for computed fronts."""

from .energy import (BumpWindow, PolarSample, energy_flat, energy_identity_residual,
                     energy_identity_sides, energy_polar, polar_r_grid, total_energy)
from .fields import SpaceTimeField, ddx, grid_integral, lagrange_weights
from .front import (InterfaceTrack, exterior_energy, l2_distance_to_sign, profile_fit,
                    track_interface, zero_crossings)
from .zeta import (ZetaSeries, bad_volume, curved_slice, displacement_constant, deficiency, fit_gronwall_constant, gronwall_envelope,
                   s_limit, zeta2_curved, zeta2_polar, zeta_curved, zeta_curved_series, zeta_polar,
                   zeta_polar_series)

__all__ = [
    "BumpWindow", "PolarSample", "energy_flat", "energy_identity_residual", "energy_identity_sides",
    "energy_polar", "polar_r_grid", "total_energy", "SpaceTimeField", "ddx", "grid_integral",
    "lagrange_weights", "InterfaceTrack", "exterior_energy", "l2_distance_to_sign", "profile_fit",
    "track_interface", "zero_crossings", "ZetaSeries", "bad_volume", "curved_slice", "displacement_constant", "deficiency",
    "fit_gronwall_constant", "gronwall_envelope", "s_limit", "zeta2_curved", "zeta2_polar",
    "zeta_curved", "zeta_curved_series", "zeta_polar", "zeta_polar_series",
]
