"""
Random channel and noise generation.

All randomness flows through ``RngStream``: a numpy ``Generator`` over the
counter-based Philox bit generator, keyed by ``(seed, stream id)``. The same
key always yields the same draw sequence, so every trial of a sweep can be
replayed on its own and trials can run on any worker in any order.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ContractViolation, GenerationExhausted
from .linalg import as_complex_vector, condition_number

MAX_CONDITIONED_ATTEMPTS = 10**7
# Channels drawn per rejection-sampling round
CONDITIONED_BATCH = 2048

SNR_STREAM_SHIFT = 40


class RngStream:
    """Deterministic random stream identified by ``(seed, stream)``."""

    def __init__(self, seed: int, stream: int = 0):
        if not (0 <= seed < 2**64 and 0 <= stream < 2**64):
            raise ContractViolation(f"seed and stream id must be 64-bit unsigned, got {seed}, {stream}")
        self.seed = int(seed)
        self.stream = int(stream)
        self.generator = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=(self.stream,)))
        )

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream})"


RngLike = Union[RngStream, np.random.Generator]


def _generator(rng: RngLike) -> np.random.Generator:
    return rng.generator if isinstance(rng, RngStream) else rng


def trial_stream(seed: int, snr_index: int, trial: int) -> RngStream:
    """Private stream of one Monte-Carlo trial at one SNR point."""
    return RngStream(seed, (snr_index << SNR_STREAM_SHIFT) | trial)


@dataclass
class ChannelRealization:
    H: np.ndarray
    cond: float
    attempts: int = 1


def _complex_gaussian(gen: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples, real and imaginary parts each ``variance / 2``."""
    std = np.sqrt(variance / 2.0)
    return std * (gen.standard_normal(shape) + 1j * gen.standard_normal(shape))


def _check_dims(n_r: int, n_t: int):
    if n_t < 1 or n_r < n_t:
        raise ContractViolation(f"need n_r >= n_t >= 1, got n_r={n_r}, n_t={n_t}")


def draw_channel(rng: RngLike, n_r: int, n_t: int) -> ChannelRealization:
    """i.i.d. Rayleigh channel with CN(0, 1) entries."""
    _check_dims(n_r, n_t)
    H = _complex_gaussian(_generator(rng), (n_r, n_t))
    return ChannelRealization(H=H, cond=condition_number(H))


def draw_channel_conditioned(
    rng: RngLike,
    n_r: int,
    n_t: int,
    min_cond: float,
    max_attempts: int = MAX_CONDITIONED_ATTEMPTS,
) -> ChannelRealization:
    """Rejection-sample i.i.d. Rayleigh channels until ``cond > min_cond``.

    Channels are drawn in rounds of ``CONDITIONED_BATCH`` and conditioned with
    one stacked SVD per round; the first accepted channel of the round wins.
    ``attempts`` on the result counts every channel drawn up to and including
    the accepted one.
    """
    _check_dims(n_r, n_t)
    if not min_cond >= 1.0:
        raise ContractViolation(f"min_cond must be >= 1, got {min_cond}")
    gen = _generator(rng)

    if min_cond == 1.0:
        return draw_channel(gen, n_r, n_t)

    attempts = 0
    while attempts < max_attempts:
        batch = min(CONDITIONED_BATCH, max_attempts - attempts)
        stack = _complex_gaussian(gen, (batch, n_r, n_t))
        s = np.linalg.svd(stack, compute_uv=False)
        with np.errstate(divide="ignore"):
            conds = np.where(s[:, -1] > 0, s[:, 0] / s[:, -1], np.inf)
        hits = np.flatnonzero(conds > min_cond)
        if hits.size:
            first = int(hits[0])
            H = stack[first].copy()
            return ChannelRealization(H=H, cond=float(conds[first]), attempts=attempts + first + 1)
        attempts += batch

    raise GenerationExhausted(
        f"no {n_r}x{n_t} channel with condition number > {min_cond} in {attempts} draws",
        attempts=attempts,
    )


def add_noise(signal, sigma2: float, rng: RngLike) -> np.ndarray:
    """Return ``signal + n`` with ``n`` i.i.d. CN(0, sigma2)."""
    signal = as_complex_vector(signal, "signal")
    if not sigma2 >= 0.0:
        raise ContractViolation(f"noise variance must be >= 0, got {sigma2}")
    return signal + _complex_gaussian(_generator(rng), signal.shape, sigma2)


def snr_to_sigma2(snr_db: float, n_t: int) -> float:
    """Noise variance per receive antenna for a per-antenna received SNR.

    With unit-energy symbols and CN(0, 1) channel entries the average received
    signal power per antenna is ``n_t``.
    """
    if n_t < 1:
        raise ContractViolation(f"n_t must be >= 1, got {n_t}")
    return n_t / 10.0 ** (snr_db / 10.0)
