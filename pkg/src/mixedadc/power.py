"""ADC power consumption of a mixed-resolution receiver."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PowerModel:
    """Per-ADC power coefficients in watts.

    ``c1`` defaults to 0.002 W: the commonly quoted 0.02 W does not reproduce
    the reference totals (55.04 / 4.4908 / 0.2068 / 27.52 W), 0.002 W does.
    ``b_max`` is only used as the bit width of a nominally unquantized bank.
    """

    p_full_per_adc: float = 0.43
    c0: float = 1e-4
    c1: float = 0.002
    b_max: int = 12

    def __post_init__(self):
        if min(self.p_full_per_adc, self.c0, self.c1, self.b_max) < 0:
            raise ValueError("power model coefficients must be non-negative")


def receiver_power(M0: int, M1: int, b=4, model: PowerModel = PowerModel()) -> float:
    """Total ADC power: ``p_full * M0 + c0 * 2^b * M1 + c1`` (last two only if M1 > 0)."""
    if M0 < 0 or M1 < 0:
        raise ValueError(f"antenna counts must be non-negative, got M0={M0}, M1={M1}")
    total = model.p_full_per_adc * M0
    if M1 > 0:
        bits = model.b_max if math.isinf(b) else b
        if bits <= 0:
            raise ValueError(f"bit width must be positive, got {b}")
        total += model.c0 * 2.0**bits * M1 + model.c1
    return total
