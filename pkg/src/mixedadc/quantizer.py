"""Low-resolution ADC model: distortion factor, Lloyd-Max codebooks and quantization.

The additive quantization noise model replaces a b-bit quantizer by
``Q(y) ~ alpha * y + n_q``. ``alpha`` comes either from the tabulated values
(``source="table"``) or from a Lloyd-Max design for a unit Gaussian source
(``source="oracle"``), which is computed here from scratch.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .model import Bits, parse_bits

ALPHA_TABLE = {1: 0.6366, 2: 0.8825, 3: 0.96546, 4: 0.990503, 5: 0.997501}

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def alpha_asymptotic(b: float) -> float:
    """High-resolution approximation ``1 - (pi*sqrt(3)/2) * 2^(-2b)``."""
    return 1.0 - (math.pi * math.sqrt(3.0) / 2.0) * 2.0 ** (-2.0 * b)


@dataclass(frozen=True)
class DistortionFactor:
    alpha: float
    b: Bits

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")

    def __float__(self) -> float:
        return self.alpha

    @property
    def is_full_resolution(self) -> bool:
        return math.isinf(self.b)


def alpha_for_bits(b: Bits, source: str = "table") -> DistortionFactor:
    """Linear gain of the MMSE quantizer with ``b`` bits per real dimension.

    ``source="table"`` uses the tabulated values for b <= 5 and the asymptotic
    formula above that; ``source="oracle"`` uses ``1 - D`` of a Lloyd-Max design.
    """
    b = parse_bits(b)
    if math.isinf(b):
        return DistortionFactor(1.0, b)
    if source == "table":
        alpha = ALPHA_TABLE[b] if b in ALPHA_TABLE else alpha_asymptotic(b)
    elif source == "oracle":
        alpha = design_mmse_quantizer(b).alpha_empirical
    else:
        raise ValueError(f"unknown alpha source {source!r}")
    return DistortionFactor(alpha, b)


def as_alpha(alpha) -> float:
    return float(alpha.alpha if isinstance(alpha, DistortionFactor) else alpha)


# -- Lloyd-Max design ---------------------------------------------------------


def _pdf(x: np.ndarray) -> np.ndarray:
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


def _cell_moments(thresholds: np.ndarray):
    """Probability, first and second partial moments of each Gaussian cell."""
    edges = np.concatenate(([-np.inf], thresholds, [np.inf]))
    phi = _pdf(edges)
    prob = np.diff(ndtr(edges))
    first = phi[:-1] - phi[1:]
    edge_phi = np.zeros_like(edges)
    edge_phi[1:-1] = thresholds * phi[1:-1]
    second = prob + edge_phi[:-1] - edge_phi[1:]
    return prob, first, second


def _centroids(thresholds: np.ndarray) -> np.ndarray:
    prob, first, _ = _cell_moments(thresholds)
    return first / prob


def quantizer_distortion(levels: np.ndarray, thresholds: np.ndarray) -> float:
    """Exact MSE of a scalar quantizer on a N(0, 1) source."""
    prob, first, second = _cell_moments(thresholds)
    return float(np.sum(second - 2.0 * levels * first + levels**2 * prob))


@dataclass(frozen=True)
class ScalarQuantizer:
    levels: np.ndarray
    thresholds: np.ndarray
    distortion: float
    iterations: int = 0
    converged: bool = True
    history: tuple = ()

    @property
    def bits(self) -> int:
        return int(round(math.log2(self.levels.size)))

    @property
    def alpha_empirical(self) -> float:
        return 1.0 - self.distortion

    def centroid_error(self) -> float:
        """Largest gap between a level and the conditional mean of its cell."""
        return float(np.max(np.abs(self.levels - _centroids(self.thresholds))))

    def midpoint_error(self) -> float:
        mid = 0.5 * (self.levels[1:] + self.levels[:-1])
        return float(np.max(np.abs(self.thresholds - mid)))

    def table(self) -> str:
        """Two-column text table (cell lower threshold, level)."""
        lower = np.concatenate(([-np.inf], self.thresholds))
        lines = ["# threshold level"]
        lines += [f"{t:.12g} {v:.12g}" for t, v in zip(lower, self.levels)]
        return "\n".join(lines) + "\n"


@functools.lru_cache(maxsize=None)
def design_mmse_quantizer(b: int, tol: float = 1e-10, max_iter: int = 10_000) -> ScalarQuantizer:
    """Lloyd-Max quantizer with ``2**b`` levels for a zero-mean unit-variance Gaussian.

    Starts from the conditional means of the equiprobable cells and alternates
    nearest-neighbour and centroid updates until the relative distortion
    decrease falls below ``tol``. If ``max_iter`` is hit the last iterate is
    returned with ``converged=False``.
    """
    if not 1 <= b <= 12:
        raise ValueError(f"b must lie in [1, 12], got {b}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    n_levels = 2**b
    levels = _centroids(ndtri(np.arange(1, n_levels) / n_levels))
    thresholds = 0.5 * (levels[1:] + levels[:-1])
    distortion = quantizer_distortion(levels, thresholds)
    history = [distortion]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        new_levels = _centroids(thresholds)
        new_thresholds = 0.5 * (new_levels[1:] + new_levels[:-1])
        new_distortion = quantizer_distortion(new_levels, new_thresholds)
        decrease = distortion - new_distortion
        if decrease > 0:
            levels, thresholds = new_levels, new_thresholds
            distortion = new_distortion
            history.append(distortion)
        # a negative step is round-off at the fixed point
        if decrease < tol * distortion:
            converged = True
            break
    levels.setflags(write=False)
    thresholds.setflags(write=False)
    return ScalarQuantizer(levels, thresholds, distortion, it, converged, tuple(history))


# -- quantization ---------------------------------------------------------------


def quantize_real(q: ScalarQuantizer, x, scale=1.0) -> np.ndarray:
    """Quantize real samples whose standard deviation is ``scale``."""
    scale = np.asarray(scale, dtype=float)
    idx = np.searchsorted(q.thresholds, np.asarray(x, dtype=float) / scale)
    return q.levels[idx] * scale


def quantize_value(q: ScalarQuantizer, y, scale=1.0) -> np.ndarray:
    """Quantize complex samples with independent I/Q quantizers.

    ``scale`` is the standard deviation of the complex input, so each real
    component is normalized by ``scale / sqrt(2)``. Broadcasts over arrays.
    """
    scale = np.asarray(scale, dtype=float)
    if np.any(scale <= 0):
        raise ValueError("scale must be positive")
    y = np.asarray(y, dtype=complex)
    comp = scale * math.sqrt(0.5)
    return quantize_real(q, y.real, comp) + 1j * quantize_real(q, y.imag, comp)


def quantization_noise_variance(G1: np.ndarray, p_u: float, alpha) -> np.ndarray:
    """Diagonal of the AQNM noise covariance, ``alpha(1-alpha)(p_u |G1|^2 1 + 1)``."""
    a = as_alpha(alpha)
    return a * (1.0 - a) * (p_u * np.sum(np.abs(G1) ** 2, axis=1) + 1.0)


def quantization_noise_covariance(G1: np.ndarray, p_u: float, alpha) -> np.ndarray:
    return np.diag(quantization_noise_variance(G1, p_u, alpha))
