"""
MIMO detectors
==============

Three hard-decision detectors over ``y = H x + n``:

- ``detect_ml``: exhaustive search of all ``|X|^N_t`` transmit vectors (the
  oracle; guarded at ``2**24`` hypotheses).
- ``detect_zf_qr``: QR back-substitution with per-layer slicing (decision
  feedback), natural column order.
- ``detect_mpmht``: the multi-pivot multiple-hypothesis trellis detector. The
  QR-transformed system is a causal "spatial ISI" channel across layers. One
  pivot run fully enumerates a pivot layer (``|X|`` hypotheses, placed on the
  interference-free bottom row of ``R``) and extends every hypothesis by the
  conditionally best symbol of each remaining layer. Runs over several pivot
  orderings are pooled into a candidate list of ``N_t |X|`` (cyclic orderings)
  or ``N_t! |X|`` (all permutations) paths, and the hard decision is the
  minimum path metric in the list.

Layers, columns and orderings are 0-based here. A pivot ordering
``(o_0, ..., o_{N-1})`` enumerates ``o_0`` first; it is realized as the column
permutation ``reversed(ordering)`` so ``o_0`` owns the last column of ``H P``.

An MLSE-style variant keeps, at each stage, the best incoming path per node
(``|X|^2`` branch metrics per stage, ``N_t |X|^2`` overall). It is not
implemented: the per-path conditional slicing used here reaches the same list
properties at ``N_t |X|`` cost.
"""

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractViolation, OracleTooLarge
from .linalg import Permutation, apply_unitary_adjoint, as_complex_matrix, as_complex_vector, qr_decompose
from .modem import Constellation, slice_symbols

PivotOrdering = Tuple[int, ...]
QrCache = Dict[Permutation, Tuple[np.ndarray, np.ndarray]]

ORACLE_GUARD = 2**24
MAX_LAYERS = 8
# Hypotheses evaluated per vectorized block of the exhaustive search
ENUMERATION_CHUNK = 1 << 16


class PivotVariant(Enum):
    CYCLIC = "cyclic"
    FULL = "full"


@dataclass(frozen=True)
class Candidate:
    symbols: Tuple[int, ...]
    metric: float
    pivot: Optional[int] = None


@dataclass
class ComplexityCounter:
    branch_metric_evals: int = 0
    slice_calls: int = 0
    qr_decompositions: int = 0


@dataclass
class CandidateList:
    """Pooled pivot-run paths.

    Row ``i`` is a transmit vector (symbol indices in natural layer order) with
    its path metric; ``provenance[i]`` is the index into ``orderings`` of the
    run that produced it. Entries are not deduplicated.
    """

    symbols: np.ndarray
    metrics: np.ndarray
    provenance: np.ndarray
    orderings: Tuple[PivotOrdering, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return int(self.metrics.shape[0])

    @property
    def pivot_runs(self) -> int:
        return len(self.orderings)

    @property
    def n_t(self) -> int:
        return int(self.symbols.shape[1])

    def sorted_order(self) -> np.ndarray:
        """Indices by ascending metric; ties by lexicographic symbol vector."""
        keys = tuple(self.symbols[:, t] for t in reversed(range(self.n_t))) + (self.metrics,)
        return np.lexsort(keys)

    def candidate(self, i: int) -> Candidate:
        run = int(self.provenance[i])
        return Candidate(
            symbols=tuple(int(s) for s in self.symbols[i]),
            metric=float(self.metrics[i]),
            pivot=self.orderings[run][0] if 0 <= run < len(self.orderings) else None,
        )

    def best(self) -> Candidate:
        if len(self) == 0:
            raise ContractViolation("empty candidate list")
        return self.candidate(int(self.sorted_order()[0]))

    def __iter__(self) -> Iterator[Candidate]:
        return (self.candidate(i) for i in range(len(self)))

    @classmethod
    def from_candidates(cls, candidates: Sequence[Candidate]) -> "CandidateList":
        """Build a list from explicit candidates; provenance is left unknown."""
        if not candidates:
            raise ContractViolation("empty candidate list")
        symbols = np.array([c.symbols for c in candidates], dtype=np.int64)
        metrics = np.array([c.metric for c in candidates], dtype=np.float64)
        provenance = np.full(len(candidates), -1, dtype=np.int64)
        return cls(symbols=symbols, metrics=metrics, provenance=provenance)


def pivot_orderings(n_t: int, variant: Union[str, PivotVariant] = PivotVariant.CYCLIC) -> List[PivotOrdering]:
    """Enumeration orders for the pivot runs.

    cyclic: the ``n_t`` cyclic shifts of ``(0, 1, ..., n_t - 1)``, one per pivot.
    full: all ``n_t!`` permutations in lexicographic order.
    """
    variant = PivotVariant(variant)
    if not 1 <= n_t <= MAX_LAYERS:
        raise ContractViolation(f"n_t must be in 1..{MAX_LAYERS}, got {n_t}")
    if variant is PivotVariant.CYCLIC:
        return [tuple((p + i) % n_t for i in range(n_t)) for p in range(n_t)]
    return list(itertools.permutations(range(n_t)))


def expected_counts(n_t: int, order: int, variant: Union[str, PivotVariant]) -> ComplexityCounter:
    """Closed-form complexity of one ``detect_mpmht`` call."""
    runs = list_size(n_t, 1, variant)
    return ComplexityCounter(
        branch_metric_evals=runs * n_t * order,
        slice_calls=runs * (n_t - 1) * order,
        qr_decompositions=runs,
    )


def list_size(n_t: int, order: int, variant: Union[str, PivotVariant]) -> int:
    variant = PivotVariant(variant)
    runs = n_t if variant is PivotVariant.CYCLIC else math.factorial(n_t)
    return runs * order


# -----------------------------------------------------------------------------
# Shared helpers
# -----------------------------------------------------------------------------

def _check_system(y, H) -> Tuple[np.ndarray, np.ndarray]:
    H = as_complex_matrix(H, "H")
    y = as_complex_vector(y, "y")
    if y.shape[0] != H.shape[0]:
        raise ContractViolation(f"y has length {y.shape[0]} but H has {H.shape[0]} rows")
    if H.shape[0] < H.shape[1]:
        raise ContractViolation(f"need n_r >= n_t, got H of shape {H.shape}")
    if H.shape[1] > MAX_LAYERS:
        raise ContractViolation(f"at most {MAX_LAYERS} layers supported, got {H.shape[1]}")
    return y, H


def _factor(H: np.ndarray, perm: Permutation, cache: Optional[QrCache]) -> Tuple[np.ndarray, np.ndarray]:
    """QR of ``H P``, memoized in ``cache`` (which must belong to this ``H``)."""
    if cache is None:
        return qr_decompose(H, perm)
    if perm not in cache:
        cache[perm] = qr_decompose(H, perm)
    return cache[perm]


def euclidean_metric(y, H, symbols: Sequence[int], c: Constellation) -> float:
    """``||y - H x||^2`` for the vector of symbol indices ``symbols``."""
    x = c.points[np.asarray(symbols, dtype=np.int64)]
    r = np.asarray(y) - np.asarray(H) @ x
    return float(np.real(np.vdot(r, r)))


def check_oracle_guard(order: int, n_t: int) -> int:
    size = order**n_t
    if size > ORACLE_GUARD:
        raise OracleTooLarge(
            f"exhaustive search over {order}^{n_t} = {size} hypotheses exceeds the 2^24 guard",
            search_size=size,
        )
    return size


def enumerate_lattice(y, H, c: Constellation, chunk: int = ENUMERATION_CHUNK) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(start, symbols, metrics)`` blocks covering all of ``X^N_t``.

    Hypothesis ``k`` is the base-``|X|`` expansion of ``k`` with layer 0 most
    significant, so enumeration order is lexicographic in the symbol vector.
    """
    y, H = _check_system(y, H)
    n_t = H.shape[1]
    size = check_oracle_guard(c.order, n_t)
    radix = c.order ** np.arange(n_t - 1, -1, -1, dtype=np.int64)
    for start in range(0, size, chunk):
        k = np.arange(start, min(start + chunk, size), dtype=np.int64)
        symbols = (k[:, np.newaxis] // radix) % c.order
        residual = y[np.newaxis, :] - c.points[symbols] @ H.T
        metrics = np.einsum("ij,ij->i", residual.real, residual.real) + np.einsum("ij,ij->i", residual.imag, residual.imag)
        yield start, symbols, metrics


# -----------------------------------------------------------------------------
# Detectors
# -----------------------------------------------------------------------------

def detect_ml(y, H, c: Constellation) -> Candidate:
    """Exhaustive ML: argmin of ``||y - H x||^2``, ties to the lexicographically smallest vector."""
    best_metric = np.inf
    best_symbols = None
    for _, symbols, metrics in enumerate_lattice(y, H, c):
        i = int(np.argmin(metrics))
        if metrics[i] < best_metric:
            best_metric = float(metrics[i])
            best_symbols = symbols[i]
    return Candidate(symbols=tuple(int(s) for s in best_symbols), metric=best_metric)


def detect_zf_qr(y, H, c: Constellation, qr_cache: Optional[QrCache] = None) -> Candidate:
    """QR decision feedback: slice layers ``N_t - 1`` down to ``0``."""
    y, H = _check_system(y, H)
    n_t = H.shape[1]
    Q, R = _factor(H, tuple(range(n_t)), qr_cache)
    y_t = apply_unitary_adjoint(Q, y)

    symbols = np.zeros(n_t, dtype=np.int64)
    x = np.zeros(n_t, dtype=np.complex128)
    for k in range(n_t - 1, -1, -1):
        z = (y_t[k] - R[k, k + 1:] @ x[k + 1:]) / R[k, k].real
        symbols[k] = slice_symbols(c, np.array([z]))[0]
        x[k] = c.points[symbols[k]]
    return Candidate(symbols=tuple(int(s) for s in symbols), metric=euclidean_metric(y, H, symbols, c))


def _pivot_paths(
    y: np.ndarray,
    H: np.ndarray,
    c: Constellation,
    ordering: PivotOrdering,
    counter: ComplexityCounter,
    qr_cache: Optional[QrCache],
) -> Tuple[np.ndarray, np.ndarray]:
    """One pivot run, vectorized over the ``|X|`` pivot hypotheses.

    Returns ``(symbols, metrics)`` with symbols de-permuted to natural order.
    Metrics are the full ``||y - Hx||^2``: on tall channels the energy of
    ``y`` outside the column space of ``H`` seeds every path.
    """
    n_t = H.shape[1]
    m = c.order
    perm = tuple(int(o) for o in reversed(ordering))
    Q, R = _factor(H, perm, qr_cache)
    counter.qr_decompositions += 1
    y_t = apply_unitary_adjoint(Q, y)
    outside = 0.0
    if H.shape[0] > n_t:
        off = y - Q @ y_t
        outside = float(np.vdot(off, off).real)

    # Symbol indices and values in permuted column order
    idx = np.empty((m, n_t), dtype=np.int64)
    val = np.empty((m, n_t), dtype=np.complex128)

    # Stage 1: the pivot owns the bottom row, BM = |y_N - r_NN x_N|^2
    last = n_t - 1
    idx[:, last] = np.arange(m)
    val[:, last] = c.points
    residual = y_t[last] - R[last, last] * val[:, last]
    path_metrics = outside + (residual.real**2 + residual.imag**2)
    counter.branch_metric_evals += m

    # Remaining stages: conditional best symbol per surviving path
    for k in range(last - 1, -1, -1):
        b = y_t[k] - val[:, k + 1:] @ R[k, k + 1:]
        r_kk = R[k, k].real
        idx[:, k] = slice_symbols(c, b / r_kk)
        counter.slice_calls += m
        val[:, k] = c.points[idx[:, k]]
        residual = b - r_kk * val[:, k]
        path_metrics = path_metrics + (residual.real**2 + residual.imag**2)
        counter.branch_metric_evals += m

    natural = np.empty_like(idx)
    natural[:, list(perm)] = idx
    return natural, path_metrics


def run_pivot(
    y,
    H,
    c: Constellation,
    ordering: Sequence[int],
    counter: Optional[ComplexityCounter] = None,
    qr_cache: Optional[QrCache] = None,
) -> List[Candidate]:
    """One pivot run: ``|X|`` candidates whose ``ordering[0]`` layer takes every symbol once."""
    y, H = _check_system(y, H)
    ordering = tuple(int(o) for o in ordering)
    if sorted(ordering) != list(range(H.shape[1])):
        raise ContractViolation(f"{ordering} is not an ordering of {H.shape[1]} layers")
    symbols, metrics = _pivot_paths(y, H, c, ordering, counter if counter is not None else ComplexityCounter(), qr_cache)
    return [
        Candidate(symbols=tuple(int(s) for s in row), metric=float(pm), pivot=ordering[0])
        for row, pm in zip(symbols, metrics)
    ]


def detect_mpmht(
    y,
    H,
    c: Constellation,
    variant: Union[str, PivotVariant] = PivotVariant.CYCLIC,
    counter: Optional[ComplexityCounter] = None,
    qr_cache: Optional[QrCache] = None,
) -> Tuple[Candidate, CandidateList]:
    """Multi-pivot detection: pooled pivot runs and the list's minimum-metric vector."""
    y, H = _check_system(y, H)
    counter = counter if counter is not None else ComplexityCounter()
    orderings = tuple(pivot_orderings(H.shape[1], variant))

    blocks = [_pivot_paths(y, H, c, ordering, counter, qr_cache) for ordering in orderings]
    candidates = CandidateList(
        symbols=np.concatenate([s for s, _ in blocks]),
        metrics=np.concatenate([pm for _, pm in blocks]),
        provenance=np.repeat(np.arange(len(orderings), dtype=np.int64), c.order),
        orderings=orderings,
    )
    return candidates.best(), candidates
