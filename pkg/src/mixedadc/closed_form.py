"""Large-system approximation of the per-user MRC spectral efficiency."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import LargeScaleFading, SystemConfig
from .quantizer import as_alpha

CLOSED_FORM = "closed-form"
CLOSED_FORM_LIMIT = "closed-form-limit"
MONTE_CARLO = "monte-carlo"


class UnboundedLimitError(ArithmeticError):
    """The interference-free high-power limit diverges."""


@dataclass(frozen=True)
class SEEstimate:
    per_user: np.ndarray
    method: str
    ci_halfwidth: np.ndarray | None = None
    total_ci: float | None = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "per_user", np.asarray(self.per_user, dtype=float))
        if self.ci_halfwidth is not None:
            object.__setattr__(self, "ci_halfwidth", np.asarray(self.ci_halfwidth, dtype=float))

    @property
    def total(self) -> float:
        return float(np.sum(self.per_user))

    @property
    def total_ci_halfwidth(self) -> float | None:
        if self.total_ci is not None:
            return self.total_ci
        if self.ci_halfwidth is None:
            return None
        # no per-sample totals available: fall back to the conservative sum
        return float(np.sum(self.ci_halfwidth))


def _combining_gain(alpha: float, kappa: float) -> float:
    return alpha + (1.0 - alpha) * kappa


def sinr_vector(M, kappa, p_u, betas, alpha) -> np.ndarray:
    """Approximate SINR of every user; ``p_u`` may be ``np.inf`` for the limit."""
    betas = np.asarray(betas, dtype=float)
    g = _combining_gain(alpha, kappa)
    assert g > 0
    interference = betas.sum() - betas
    quant = 2.0 * alpha * (1.0 - alpha) * (1.0 - kappa) / g * betas
    noise = 0.0 if np.isinf(p_u) else 1.0 / p_u
    return M * g * betas / (noise + interference + quant)


def sinr_closed_form(config: SystemConfig, fading: LargeScaleFading, n: int, alpha) -> float:
    """Approximate SINR of user ``n`` (0-based)."""
    if not 0 <= n < config.N:
        raise IndexError(f"user index {n} outside [0, {config.N})")
    _check(config, fading)
    return float(sinr_vector(config.M, config.kappa, config.p_u, fading.betas, as_alpha(alpha))[n])


def _check(config: SystemConfig, fading: LargeScaleFading):
    if fading.N != config.N:
        raise ValueError(f"fading has {fading.N} users but config has N={config.N}")


def rate_closed_form(config: SystemConfig, fading: LargeScaleFading, alpha) -> SEEstimate:
    _check(config, fading)
    sinr = sinr_vector(config.M, config.kappa, config.p_u, fading.betas, as_alpha(alpha))
    return SEEstimate(np.log2(1.0 + sinr), CLOSED_FORM)


def rate_full_resolution(config: SystemConfig, fading: LargeScaleFading) -> SEEstimate:
    _check(config, fading)
    b = fading.betas
    sinr = config.M * b / (1.0 / config.p_u + b.sum() - b)
    return SEEstimate(np.log2(1.0 + sinr), CLOSED_FORM)


def rate_all_low(config: SystemConfig, fading: LargeScaleFading, alpha) -> SEEstimate:
    """Every antenna behind a low-resolution ADC (``kappa = 0``), whatever ``config.M0`` is."""
    _check(config, fading)
    a = as_alpha(alpha)
    b = fading.betas
    sinr = config.M * a * b / (1.0 / config.p_u + b.sum() - b + 2.0 * (1.0 - a) * b)
    return SEEstimate(np.log2(1.0 + sinr), CLOSED_FORM)


def rate_high_power_limit(config: SystemConfig, fading: LargeScaleFading, alpha) -> SEEstimate:
    """Limit of :func:`rate_closed_form` as ``p_u`` grows without bound.

    Raises :class:`UnboundedLimitError` when a user sees neither interference
    nor quantization noise (single user with ``kappa = 1`` or ``alpha = 1``).
    """
    _check(config, fading)
    a = as_alpha(alpha)
    k = config.kappa
    b = fading.betas
    interference = b.sum() - b
    quant = 2.0 * a * (1.0 - a) * (1.0 - k) / (k + a * (1.0 - k)) * b
    denom = interference + quant
    if np.any(denom <= 0):
        raise UnboundedLimitError(
            "high-power SE limit is unbounded: no interference and no quantization noise"
        )
    sinr = config.M * _combining_gain(a, k) * b / denom
    return SEEstimate(np.log2(1.0 + sinr), CLOSED_FORM_LIMIT)


@dataclass(frozen=True)
class KappaReport:
    kappas: np.ndarray
    sinr: np.ndarray
    strictly_increasing: bool
    constant: bool


def kappa_sensitivity(
    config: SystemConfig, fading: LargeScaleFading, alpha, n: int, points: int = 11
) -> KappaReport:
    """Evaluate user ``n``'s approximate SINR on a uniform kappa grid over [0, 1]."""
    if not 0 <= n < config.N:
        raise IndexError(f"user index {n} outside [0, {config.N})")
    _check(config, fading)
    a = as_alpha(alpha)
    kappas = np.linspace(0.0, 1.0, points)
    sinr = np.array(
        [sinr_vector(config.M, k, config.p_u, fading.betas, a)[n] for k in kappas]
    )
    steps = np.diff(sinr)
    return KappaReport(
        kappas,
        sinr,
        strictly_increasing=bool(np.all(steps > 0)),
        constant=bool(np.allclose(sinr, sinr[0], rtol=1e-12, atol=0.0)),
    )
