"""Monte Carlo estimation of the exact MRC rate with mixed-resolution ADCs.

Every channel trial draws from its own stream derived from ``(seed, trial)``,
so results do not depend on how trials are split across worker processes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .closed_form import MONTE_CARLO, SEEstimate
from .model import (
    ChannelRealization,
    LargeScaleFading,
    SystemConfig,
    complex_normal,
    sample_channel,
)
from .quantizer import (
    ScalarQuantizer,
    alpha_for_bits,
    as_alpha,
    design_mmse_quantizer,
    quantization_noise_variance,
    quantize_value,
)

PER_DRAW_NOISE = "per-draw-noise"
CONDITIONAL_EXPECTATION = "conditional-expectation"
AQNM = "aqnm"
EXACT_QUANTIZER = "exact-quantizer"

Z95 = 1.96


class NonFiniteResultError(ArithmeticError):
    """A Monte Carlo sample produced an infinite or NaN SINR."""


@dataclass(frozen=True)
class McSettings:
    trials: int = 2000
    noise_draws_per_channel: int = 5
    seed: int = 0x5EED
    estimator: str = CONDITIONAL_EXPECTATION
    quant_path: str = AQNM
    # symbol block used for the effective-gain fit on the exact-quantizer path
    symbols_per_channel: int = 256

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.noise_draws_per_channel < 1:
            raise ValueError("noise_draws_per_channel must be >= 1")
        if self.symbols_per_channel < 3:
            raise ValueError("symbols_per_channel must be >= 3")
        if self.estimator not in (PER_DRAW_NOISE, CONDITIONAL_EXPECTATION):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.quant_path not in (AQNM, EXACT_QUANTIZER):
            raise ValueError(f"unknown quant_path {self.quant_path!r}")


@dataclass
class McTrace:
    """Running per-user mean/variance of log2(1 + SINR) samples."""

    mean: np.ndarray
    m2: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, N: int) -> "McTrace":
        return cls(np.zeros(N), np.zeros(N), 0)

    def update(self, samples: np.ndarray) -> None:
        samples = np.atleast_2d(samples)
        n_b = samples.shape[0]
        if n_b == 0:
            return
        mean_b = samples.mean(axis=0)
        m2_b = np.sum((samples - mean_b) ** 2, axis=0)
        n = self.count + n_b
        delta = mean_b - self.mean
        self.mean = self.mean + delta * (n_b / n)
        self.m2 = self.m2 + m2_b + delta**2 * (self.count * n_b / n)
        self.count = n

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return self.m2 / (self.count - 1)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


# -- SINR of one realization -------------------------------------------------------


def _gram(G0: np.ndarray, G1: np.ndarray, alpha: float) -> np.ndarray:
    return G0.conj().T @ G0 + alpha * (G1.conj().T @ G1)


def _signal_and_interference(C: np.ndarray, p_u: float):
    power = np.abs(C) ** 2
    signal = np.diag(power).copy()
    interference = power.sum(axis=1) - signal
    return p_u * signal, p_u * interference


def instantaneous_sinr(
    realization: ChannelRealization,
    noise0: np.ndarray,
    noise1: np.ndarray,
    nq: np.ndarray,
    config: SystemConfig,
    alpha,
    n: int,
) -> float:
    """SINR of user ``n`` for fixed channel, thermal noise and quantization noise.

    Returns ``math.inf`` when the denominator vanishes.
    """
    a = as_alpha(alpha)
    G0, G1 = realization.G0, realization.G1
    if noise0.shape != (G0.shape[0],) or noise1.shape != (G1.shape[0],) or nq.shape != (G1.shape[0],):
        raise ValueError("noise vectors must match the antenna partition")
    g0, g1 = G0[:, n], G1[:, n]
    coupling = g0.conj() @ G0 + a * (g1.conj() @ G1)
    power = config.p_u * np.abs(coupling) ** 2
    signal = power[n]
    interference = power.sum() - signal
    thermal = abs(g0.conj() @ noise0 + a * (g1.conj() @ noise1)) ** 2
    quant = abs(g1.conj() @ nq) ** 2
    denom = interference + thermal + quant
    if denom == 0:
        return math.inf
    return float(signal / denom)


def _aqnm_rates(G0, G1, p_u, alpha, settings, rng) -> np.ndarray:
    C = _gram(G0, G1, alpha)
    signal, interference = _signal_and_interference(C, p_u)
    r_q = quantization_noise_variance(G1, p_u, alpha)
    if settings.estimator == CONDITIONAL_EXPECTATION:
        thermal = np.sum(np.abs(G0) ** 2, axis=0) + alpha**2 * np.sum(np.abs(G1) ** 2, axis=0)
        quant = (np.abs(G1) ** 2).T @ r_q
        return np.log2(1.0 + signal / (interference + thermal + quant))[None, :]
    M0, M1 = G0.shape[0], G1.shape[0]
    D = settings.noise_draws_per_channel
    n0 = complex_normal(rng, (M0, D))
    n1 = complex_normal(rng, (M1, D))
    nq = np.sqrt(r_q)[:, None] * complex_normal(rng, (M1, D))
    thermal = np.abs(G0.conj().T @ n0 + alpha * (G1.conj().T @ n1)) ** 2
    quant = np.abs(G1.conj().T @ nq) ** 2
    return np.log2(1.0 + signal[:, None] / (interference[:, None] + thermal + quant)).T


def _exact_rates(G0, G1, p_u, quantizer, settings, rng) -> np.ndarray:
    """Effective-gain SINR of the MRC output with a real quantizer in the loop."""
    M0, M1 = G0.shape[0], G1.shape[0]
    N = G0.shape[1]
    S = settings.symbols_per_channel
    sqrt_p = math.sqrt(p_u)
    x = complex_normal(rng, (N, S))
    n0 = complex_normal(rng, (M0, S))
    n1 = complex_normal(rng, (M1, S))
    y0 = sqrt_p * (G0 @ x) + n0
    y1 = sqrt_p * (G1 @ x) + n1
    if quantizer is not None and M1 > 0:
        scale = np.sqrt(p_u * np.sum(np.abs(G1) ** 2, axis=1) + 1.0)
        y1 = quantize_value(quantizer, y1, scale[:, None])
    r = G0.conj().T @ y0 + G1.conj().T @ y1
    sym_power = np.mean(np.abs(x) ** 2, axis=1)
    gain = np.mean(r * x.conj(), axis=1) / sym_power
    err = r - gain[:, None] * x
    # one complex gain is fitted per user: debias the residual power, the gain
    # power and the inverse of the residual power
    err_power = np.sum(np.abs(err) ** 2, axis=1) / (S - 1)
    signal = np.abs(gain) ** 2 * sym_power - err_power / S
    sinr = signal / err_power * ((S - 2) / (S - 1))
    # second-order (delta method) correction for the concavity of log2(1 + .)
    sinr_var = sinr**2 / (S - 1) + 2.0 * np.abs(sinr) / S
    return (np.log2(1.0 + sinr) + sinr_var / (2.0 * math.log(2.0) * (1.0 + sinr) ** 2))[None, :]


def _trial_samples(config, fading, alpha, settings, quantizer, trial) -> np.ndarray:
    rng = trial_rng(settings.seed, trial)
    ch = sample_channel(config, fading, rng)
    if settings.quant_path == EXACT_QUANTIZER:
        return _exact_rates(ch.G0, ch.G1, config.p_u, quantizer, settings, rng)
    return _aqnm_rates(ch.G0, ch.G1, config.p_u, alpha, settings, rng)


def _run_chunk(args) -> np.ndarray:
    config, fading, alpha, settings, quantizer, start, stop = args
    return np.stack(
        [_trial_samples(config, fading, alpha, settings, quantizer, t) for t in range(start, stop)]
    )


def _chunks(trials: int, size: int):
    return [(s, min(s + size, trials)) for s in range(0, trials, size)]


def estimate_se_mc(
    config: SystemConfig,
    fading: LargeScaleFading,
    alpha,
    settings: McSettings = McSettings(),
    workers: int = 1,
    progress: Callable[[McTrace], None] | None = None,
    chunk_size: int = 100,
    quantizer: ScalarQuantizer | None = None,
) -> SEEstimate:
    """Monte Carlo estimate of the per-user rate ``E{log2(1 + SINR)}``.

    On the ``aqnm`` path ``alpha`` drives the linearized receiver; on the
    ``exact-quantizer`` path the low-resolution branch goes through a Lloyd-Max
    codebook for ``config.b`` (or ``quantizer`` if given) and ``alpha`` is unused.
    """
    if fading.N != config.N:
        raise ValueError(f"fading has {fading.N} users but config has N={config.N}")
    a = as_alpha(alpha)
    if settings.quant_path == EXACT_QUANTIZER and quantizer is None and not math.isinf(config.b):
        quantizer = design_mmse_quantizer(int(config.b))

    jobs = [
        (config, fading, a, settings, quantizer, start, stop)
        for start, stop in _chunks(settings.trials, chunk_size)
    ]
    trace = McTrace.empty(config.N)
    blocks = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_run_chunk, jobs)
            for block in results:
                blocks.append(block)
                if progress is not None:
                    trace.update(block.reshape(-1, config.N))
                    progress(trace)
    else:
        for job in jobs:
            block = _run_chunk(job)
            blocks.append(block)
            if progress is not None:
                trace.update(block.reshape(-1, config.N))
                progress(trace)

    samples = np.concatenate(blocks).reshape(-1, config.N)
    if not np.all(np.isfinite(samples)):
        raise NonFiniteResultError("Monte Carlo produced non-finite SINR samples")
    count = samples.shape[0]
    per_user = samples.mean(axis=0)
    totals = samples.sum(axis=1)
    if count > 1:
        ci = Z95 * samples.std(axis=0, ddof=1) / math.sqrt(count)
        total_ci = Z95 * float(totals.std(ddof=1)) / math.sqrt(count)
    else:
        ci = np.full(config.N, np.nan)
        total_ci = math.nan
    info = {
        "samples": count,
        "estimator": settings.estimator,
        "quant_path": settings.quant_path,
    }
    return SEEstimate(per_user, MONTE_CARLO, ci_halfwidth=ci, total_ci=total_ci, info=info)


# -- moment identities -------------------------------------------------------------


@dataclass(frozen=True)
class MomentCheck:
    name: str
    sample_mean: complex
    expected: float
    stderr: float
    passed: bool


@dataclass(frozen=True)
class MomentReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _check(name, values, expected, k=3.0) -> MomentCheck:
    values = np.asarray(values)
    mean = values.mean()
    stderr = math.sqrt(np.mean(np.abs(values - mean) ** 2) / (values.size - 1))
    passed = abs(mean - expected) <= k * stderr
    return MomentCheck(name, complex(mean) if np.iscomplexobj(values) else float(mean),
                       float(expected), stderr, bool(passed))


def validate_moments(
    config: SystemConfig,
    fading: LargeScaleFading,
    trials: int = 10_000,
    seed: int = 0,
    n: int = 0,
    i: int = 1,
    alpha=None,
) -> MomentReport:
    """Check the channel moment identities and the quantization-noise power at 3 standard errors."""
    if trials < 2:
        raise ValueError("trials must be >= 2")
    if config.N < 2:
        raise ValueError("moment identities need at least two users")
    if alpha is None:
        alpha = alpha_for_bits(config.b)
    a = as_alpha(alpha)
    rng = np.random.default_rng(seed)
    betas = fading.betas
    H = complex_normal(rng, (trials, config.M, config.N))
    G = H * np.sqrt(betas)
    checks = []
    for j, Mj, rows in ((0, config.M0, slice(0, config.M0)), (1, config.M1, slice(config.M0, None))):
        if Mj == 0:
            continue
        gn = G[:, rows, n]
        gi = G[:, rows, i]
        self_ip = np.sum(np.abs(gn) ** 2, axis=1)
        cross_ip = np.sum(gn.conj() * gi, axis=1)
        bn, bi = betas[n], betas[i]
        checks.append(_check(f"E|g_n{j}^H g_n{j}|^2", self_ip**2, bn**2 * (Mj**2 + Mj)))
        checks.append(_check(f"E g_n{j}^H g_n{j}", self_ip, bn * Mj))
        checks.append(_check(f"E g_n{j}^H g_i{j}", cross_ip, 0.0))
        checks.append(_check(f"E|g_n{j}^H g_i{j}|^2", np.abs(cross_ip) ** 2, bn * bi * Mj))
    if config.M1 > 0:
        G1 = G[:, config.M0 :, :]
        r_q = a * (1.0 - a) * (config.p_u * np.sum(np.abs(G1) ** 2, axis=2) + 1.0)
        nq = np.sqrt(r_q) * complex_normal(rng, r_q.shape)
        proj = np.abs(np.sum(G1[:, :, n].conj() * nq, axis=1)) ** 2
        bn = betas[n]
        expected = a * (1.0 - a) * config.M1 * (bn + config.p_u * bn * betas.sum() + config.p_u * bn**2)
        checks.append(_check("E|g_n1^H n_q|^2", proj, expected))
    return MomentReport(checks)
