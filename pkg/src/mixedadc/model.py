"""System configuration, user drops and Rayleigh channel draws."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

Bits = Union[int, float]  # positive int, or math.inf for an unquantized front end

# Large-scale fading list used for every figure preset (linear power gains).
REFERENCE_BETAS = tuple(
    v * 1e-4 for v in (13.13, 6.49, 11.01, 4.87, 29.00, 8.69, 50.02, 96.00, 1.24, 41.04)
)


class ConfigError(ValueError):
    """Raised for inconsistent system parameters."""


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def parse_bits(value) -> Bits:
    """Accept an integer bit width or one of ``inf``/``infinite``/``full``."""
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "infinite", "infinity", "full"):
            return math.inf
        value = int(text)
    if isinstance(value, float):
        if math.isinf(value) and value > 0:
            return math.inf
        if not value.is_integer():
            raise ConfigError(f"bit width must be an integer, got {value}")
        value = int(value)
    if value <= 0:
        raise ConfigError(f"bit width must be positive, got {value}")
    return int(value)


@dataclass(frozen=True)
class SystemConfig:
    M: int
    M0: int
    N: int
    p_u: float
    b: Bits = 4

    def __post_init__(self):
        if self.M < 1:
            raise ConfigError(f"M must be >= 1, got {self.M}")
        if self.N < 1:
            raise ConfigError(f"N must be >= 1, got {self.N}")
        if not 0 <= self.M0 <= self.M:
            raise ConfigError(f"M0 must lie in [0, M={self.M}], got {self.M0}")
        if not self.p_u > 0:
            raise ConfigError(f"p_u must be positive, got {self.p_u}")
        object.__setattr__(self, "b", parse_bits(self.b))

    @property
    def M1(self) -> int:
        return self.M - self.M0

    @property
    def kappa(self) -> float:
        return self.M0 / self.M

    @property
    def p_u_dB(self) -> float:
        return 10.0 * math.log10(self.p_u)


def build_config(M: int, M0: int, N: int, p_u_dB: float, b: Bits = 4) -> SystemConfig:
    """Build a :class:`SystemConfig` with the transmit power given in dB."""
    return SystemConfig(M=M, M0=M0, N=N, p_u=db_to_linear(p_u_dB), b=b)


@dataclass(frozen=True)
class GeometryParams:
    r_c: float = 1000.0
    r_h: float = 100.0
    gamma: float = 2.1
    sigma_shad: float = 4.9

    def __post_init__(self):
        if not 0 < self.r_h < self.r_c:
            raise ConfigError(f"need 0 < r_h < r_c, got r_h={self.r_h}, r_c={self.r_c}")
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not self.sigma_shad >= 0:
            raise ConfigError(f"sigma_shad must be non-negative, got {self.sigma_shad}")


@dataclass(frozen=True)
class LargeScaleFading:
    betas: np.ndarray
    distances: np.ndarray | None = field(default=None, compare=False)
    shadowing: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float).reshape(-1)
        if betas.size == 0 or not np.all(betas > 0) or not np.all(np.isfinite(betas)):
            raise ConfigError("betas must be a non-empty vector of positive finite values")
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)

    @property
    def N(self) -> int:
        return self.betas.size

    @classmethod
    def reference(cls) -> "LargeScaleFading":
        return cls(np.array(REFERENCE_BETAS))


def path_gain(distance, gamma: float, shadowing=1.0):
    """beta = z * r^-gamma."""
    return np.asarray(shadowing) * np.asarray(distance, dtype=float) ** (-gamma)


def drop_users(geometry: GeometryParams, N: int, rng: np.random.Generator) -> LargeScaleFading:
    """Drop ``N`` users uniformly over the annulus ``r_h <= r <= r_c``.

    Shadowing is log-normal with zero dB mean and ``sigma_shad`` dB spread.
    """
    if N < 1:
        raise ConfigError(f"N must be >= 1, got {N}")
    u = rng.uniform(size=N)
    r = np.sqrt(u * (geometry.r_c**2 - geometry.r_h**2) + geometry.r_h**2)
    z = 10.0 ** (rng.normal(0.0, geometry.sigma_shad, size=N) / 10.0)
    return LargeScaleFading(path_gain(r, geometry.gamma, z), distances=r, shadowing=z)


@dataclass(frozen=True)
class ChannelRealization:
    """One M x N channel draw; ``G0``/``G1`` are row views into ``G``."""

    G: np.ndarray
    M0: int

    @property
    def G0(self) -> np.ndarray:
        return self.G[: self.M0]

    @property
    def G1(self) -> np.ndarray:
        return self.G[self.M0 :]


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) samples: independent N(0, 1/2) real and imaginary parts."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)


def sample_channel(
    config: SystemConfig, fading: LargeScaleFading, rng: np.random.Generator
) -> ChannelRealization:
    if fading.N != config.N:
        raise ConfigError(f"fading has {fading.N} users but config has N={config.N}")
    H = complex_normal(rng, (config.M, config.N))
    return ChannelRealization(H * np.sqrt(fading.betas), config.M0)
