"""Lorentzian geometry: metrics, geodesics, timelike surfaces and normal charts."""

from .metric import (LorentzMetric, christoffel, conformal, exp_map, geodesic, minkowski,
                     parse_metric, polar, polar_inverse, polar_map)
from .normal import (NormalChart, block_orders, build_normal_chart, eikonal_residual,
                     energy_tensor, energy_tensor_constants, mean_curvature, pullback_metric,
                     write_chart_csv)
from .surface import (Embedding, GammaParam, TimelikeCurve, build_gamma_param, hyperbola,
                      mc_curve, static_cylinder, unit_normal)

__all__ = [
    "LorentzMetric", "christoffel", "conformal", "exp_map", "geodesic", "minkowski",
    "parse_metric", "polar", "polar_inverse", "polar_map", "NormalChart", "block_orders",
    "build_normal_chart", "eikonal_residual", "energy_tensor", "energy_tensor_constants",
    "mean_curvature", "pullback_metric", "write_chart_csv", "Embedding", "GammaParam",
    "TimelikeCurve", "build_gamma_param", "hyperbola", "mc_curve", "static_cylinder",
    "unit_normal",
]
