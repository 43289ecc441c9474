"""Activation / initialization pairs that keep pre-activations Gaussian,
with Edge-of-Chaos analysis and Monte-Carlo propagation diagnostics."""

__version__ = "0.1.0"

from .activation_fit import (  # noqa: E402
    SHIPPED_THETAS,
    ActivationTable,
    DensityModel,
    build_activation,
    fit,
    fit_loss,
    load_shipped,
    theta_conjugate,
)
from .distributions import SymmetricWeibull, StdNormal, make_rng  # noqa: E402
from .eoc import EocSetting, chi1, eoc_curve, find_fixed_points, phase_classify, sigma_omega  # noqa: E402
from .kstest import ks_statistic, ks_test, ks_threshold, kolmogorov_quantile  # noqa: E402

__all__ = [
    "SHIPPED_THETAS",
    "ActivationTable",
    "DensityModel",
    "EocSetting",
    "StdNormal",
    "SymmetricWeibull",
    "build_activation",
    "chi1",
    "eoc_curve",
    "find_fixed_points",
    "fit",
    "fit_loss",
    "kolmogorov_quantile",
    "ks_statistic",
    "ks_test",
    "ks_threshold",
    "load_shipped",
    "make_rng",
    "phase_classify",
    "sigma_omega",
    "theta_conjugate",
]
