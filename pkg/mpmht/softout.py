"""
Soft output: max-log LLRs, competitor ranks and rank-aware scaling.

Sign convention: ``LLR[t, b] = d1 - d0`` where ``d0``/``d1`` are the smallest
metrics among hypotheses whose bit ``(t, b)`` is 0/1. A POSITIVE LLR FAVORS
BIT 0. Many FEC decoders expect the opposite sign; negate before feeding them.

By default LLRs are raw distance differences (no ``1/sigma^2`` factor);
``sigma2`` normalization and symmetric clipping are opt-in.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .detect import CandidateList, enumerate_lattice
from .errors import ContractViolation, MissingCompetitor
from .modem import Constellation


class ScalingKind(Enum):
    NONE = "none"
    LINEAR = "linear"
    EXPONENTIAL = "exp"


class ScalingScheme(BaseModel):
    """Rank-aware scaling ``g(alpha)``: ``1 - beta alpha`` or ``exp(-gamma alpha)``."""

    model_config = ConfigDict(frozen=True)

    kind: ScalingKind = Field(default=ScalingKind.NONE, description="none, linear or exp")
    beta: float = Field(default=0.5, ge=0.0, le=1.0, description="Linear aggressiveness")
    gamma: float = Field(default=1.0, gt=0.0, description="Exponential decay rate")

    def gain(self, alpha):
        alpha = np.asarray(alpha, dtype=np.float64)
        if self.kind is ScalingKind.LINEAR:
            return 1.0 - self.beta * alpha
        if self.kind is ScalingKind.EXPONENTIAL:
            return np.exp(-self.gamma * alpha)
        return np.ones_like(alpha)


@dataclass
class LlrVector:
    """Per ``(layer, bit)`` soft values; all arrays have shape ``(N_t, bits_per_symbol)``."""

    values: np.ndarray
    competitor_rank: np.ndarray
    alpha: np.ndarray
    scaled: np.ndarray
    hard_bits: np.ndarray
    n_c: int


def _postprocess(values: np.ndarray, sigma2: Optional[float], clip: Optional[float]) -> np.ndarray:
    if sigma2 is not None:
        if not sigma2 > 0:
            raise ContractViolation(f"cannot normalize by sigma2={sigma2}")
        values = values / sigma2
    if clip is not None:
        if not clip > 0:
            raise ContractViolation(f"clip magnitude must be positive, got {clip}")
        values = np.clip(values, -clip, clip)
    return values


def _rank_alpha(ranks: np.ndarray, n_c: int) -> np.ndarray:
    if n_c < 2:
        return np.zeros(ranks.shape, dtype=np.float64)
    return (ranks - 1) / (n_c - 1)


def _missing(d0: np.ndarray, d1: np.ndarray):
    absent = ~np.isfinite(d0) | ~np.isfinite(d1)
    if np.any(absent):
        t, b = (int(v) for v in np.argwhere(absent)[0])
        raise MissingCompetitor(f"bit ({t}, {b}) has a single hypothesis in the list", layer=t, bit=b)


def competitor_ranks(candidates: CandidateList, c: Constellation) -> np.ndarray:
    """1-based sorted-list position of the best candidate disagreeing with the hard bit, per ``(t, b)``."""
    order = candidates.sorted_order()
    bits = c.bit_labels[candidates.symbols[order]]
    differs = bits != bits[0][np.newaxis]
    has_competitor = differs.any(axis=0)
    if not np.all(has_competitor):
        t, b = (int(v) for v in np.argwhere(~has_competitor)[0])
        raise MissingCompetitor(f"bit ({t}, {b}) has no competing hypothesis", layer=t, bit=b)
    return np.argmax(differs, axis=0).astype(np.int64) + 1


def competitor_rank(candidates: CandidateList, c: Constellation, t: int, b: int) -> int:
    return int(competitor_ranks(candidates, c)[t, b])


def maxlog_llr(
    candidates: CandidateList,
    c: Constellation,
    sigma2: Optional[float] = None,
    clip: Optional[float] = None,
) -> LlrVector:
    """Max-log LLRs from a candidate list, with competitor ranks.

    ``scaled`` equals ``values`` until ``scale_llrs`` is applied.

    Raises:
        MissingCompetitor: some bit takes only one value across the list.
    """
    if len(candidates) == 0:
        raise ContractViolation("empty candidate list")
    bits = c.bit_labels[candidates.symbols]
    metrics = candidates.metrics[:, np.newaxis, np.newaxis]
    d0 = np.where(bits == 0, metrics, np.inf).min(axis=0)
    d1 = np.where(bits == 1, metrics, np.inf).min(axis=0)
    _missing(d0, d1)

    values = _postprocess(d1 - d0, sigma2, clip)
    ranks = competitor_ranks(candidates, c)
    n_c = len(candidates)
    best = candidates.sorted_order()[0]
    return LlrVector(
        values=values,
        competitor_rank=ranks,
        alpha=_rank_alpha(ranks, n_c),
        scaled=values.copy(),
        hard_bits=c.bit_labels[candidates.symbols[best]].copy(),
        n_c=n_c,
    )


def llr_oracle_ml(
    y,
    H,
    c: Constellation,
    sigma2: float,
    normalize: bool = False,
    clip: Optional[float] = None,
) -> LlrVector:
    """Exact max-log LLRs over all of ``X^N_t``.

    Ranks refer to the fully sorted hypothesis set (``n_c = |X|^N_t``). Two
    chunked passes: minima and their first positions, then rank counting.

    Raises:
        OracleTooLarge: ``|X|^N_t`` exceeds the oracle guard.
    """
    d = None
    first = None
    best_metric, hard_bits = np.inf, None
    n_c = 0
    for start, symbols, metrics in enumerate_lattice(y, H, c):
        bits = c.bit_labels[symbols]
        if d is None:
            d = np.full((2,) + bits.shape[1:], np.inf)
            first = np.full((2,) + bits.shape[1:], -1, dtype=np.int64)
        for v in (0, 1):
            masked = np.where(bits == v, metrics[:, np.newaxis, np.newaxis], np.inf)
            pos = np.argmin(masked, axis=0)
            block_min = np.take_along_axis(masked, pos[np.newaxis], axis=0)[0]
            better = block_min < d[v]
            d[v] = np.where(better, block_min, d[v])
            first[v] = np.where(better, start + pos, first[v])
        i = int(np.argmin(metrics))
        if metrics[i] < best_metric:
            best_metric, hard_bits = float(metrics[i]), bits[i].copy()
        n_c = start + metrics.shape[0]
    _missing(d[0], d[1])

    # Competitor: best hypothesis whose bit differs from the ML bit
    opposite = 1 - hard_bits.astype(np.int64)
    comp_metric = np.where(opposite == 0, d[0], d[1])
    comp_k = np.where(opposite == 0, first[0], first[1])
    ranks = np.ones(hard_bits.shape, dtype=np.int64)
    for start, _, metrics in enumerate_lattice(y, H, c):
        k = start + np.arange(metrics.shape[0])[:, np.newaxis, np.newaxis]
        m = metrics[:, np.newaxis, np.newaxis]
        ahead = (m < comp_metric) | ((m == comp_metric) & (k < comp_k))
        ranks += ahead.sum(axis=0)

    values = _postprocess(d[1] - d[0], sigma2 if normalize else None, clip)
    return LlrVector(
        values=values,
        competitor_rank=ranks,
        alpha=_rank_alpha(ranks, n_c),
        scaled=values.copy(),
        hard_bits=hard_bits,
        n_c=n_c,
    )


def scale_llrs(llrs: LlrVector, n_c: int, scheme: ScalingScheme) -> LlrVector:
    """Apply ``scaled = value * g(alpha)`` with ``alpha = (r - 1) / (n_c - 1)``."""
    if n_c < 2:
        raise ContractViolation(f"rank normalization needs n_c >= 2, got {n_c}")
    ranks = np.asarray(llrs.competitor_rank)
    if np.any(ranks < 1) or np.any(ranks > n_c):
        raise ContractViolation(f"competitor ranks must lie in 1..{n_c}")
    alpha = _rank_alpha(ranks, n_c)
    return replace(llrs, alpha=alpha, scaled=llrs.values * scheme.gain(alpha), n_c=n_c)
