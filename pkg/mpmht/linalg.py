"""
Dense complex linear algebra for the detectors.

Matrices and vectors are plain ``numpy`` ``complex128`` arrays; the
``as_complex_*`` helpers enforce shape and finiteness on entry. Column
permutations are 0-based index sequences: column ``j`` of ``H P`` is column
``p[j]`` of ``H``.
"""

from typing import Sequence, Tuple

import numpy as np

from .errors import ContractViolation, SingularChannel

ComplexMatrix = np.ndarray
ComplexVector = np.ndarray
Permutation = Tuple[int, ...]

# Relative to the largest column norm of H
SINGULARITY_THRESHOLD = 1e-12


def as_complex_matrix(a, name: str = "matrix") -> ComplexMatrix:
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ContractViolation(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractViolation(f"{name} has non-finite entries")
    return m


def as_complex_vector(a, name: str = "vector") -> ComplexVector:
    v = np.asarray(a, dtype=np.complex128)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ContractViolation(f"{name} must be a non-empty 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ContractViolation(f"{name} has non-finite entries")
    return v


def check_permutation(p: Sequence[int], n: int) -> np.ndarray:
    """Validate ``p`` as a bijection on ``range(n)`` and return it as an index array."""
    order = np.asarray(p, dtype=np.intp)
    if order.ndim != 1 or order.shape[0] != n or not np.array_equal(np.sort(order), np.arange(n)):
        raise ContractViolation(f"{tuple(np.ravel(order))} is not a permutation of {n} columns")
    return order


def identity_permutation(n: int) -> Permutation:
    return tuple(range(n))


def qr_decompose(H, p: Sequence[int]) -> Tuple[ComplexMatrix, ComplexMatrix]:
    """Thin QR of the column-permuted channel, ``H P = Q R``.

    The factorization is LAPACK's Householder QR followed by a phase
    normalization that makes every diagonal entry of ``R`` real and
    non-negative, so results are identical across runs and platforms.
    ``R`` is exactly upper triangular.

    Raises:
        ContractViolation: ``H`` is wide or ``p`` is not a permutation.
        SingularChannel: a diagonal of ``R`` falls below
            ``SINGULARITY_THRESHOLD`` times the largest column norm of ``H``.
    """
    H = as_complex_matrix(H, "H")
    n_r, n_t = H.shape
    if n_r < n_t:
        raise ContractViolation(f"H must have rows >= cols, got {n_r}x{n_t}")
    order = check_permutation(p, n_t)

    HP = H[:, order]
    Q, R = np.linalg.qr(HP, mode="reduced")

    diag = np.diagonal(R).copy()
    magnitude = np.abs(diag)
    phase = np.ones(n_t, dtype=np.complex128)
    nonzero = magnitude > 0
    phase[nonzero] = diag[nonzero] / magnitude[nonzero]

    Q = Q * phase[np.newaxis, :]
    R = np.triu(np.conj(phase)[:, np.newaxis] * R)
    R[np.diag_indices(n_t)] = magnitude

    max_col_norm = float(np.max(np.linalg.norm(H, axis=0)))
    threshold = SINGULARITY_THRESHOLD * max_col_norm
    weak = np.flatnonzero(magnitude <= threshold) if max_col_norm > 0 else np.arange(n_t)
    if weak.size:
        col = int(weak[0])
        raise SingularChannel(
            f"rank-deficient channel: |r[{col},{col}]| = {magnitude[col]:.3e} "
            f"below {threshold:.3e}",
            column=col,
            diagonal=float(magnitude[col]),
        )
    return Q, R


def apply_unitary_adjoint(Q, y) -> ComplexVector:
    """Return ``Q^H y``."""
    Q = as_complex_matrix(Q, "Q")
    y = as_complex_vector(y, "y")
    if Q.shape[0] != y.shape[0]:
        raise ContractViolation(f"Q has {Q.shape[0]} rows but y has length {y.shape[0]}")
    return Q.conj().T @ y


def condition_number(H) -> float:
    """2-norm condition number ``sigma_max / sigma_min``; ``inf`` when singular."""
    H = as_complex_matrix(H, "H")
    if H.shape[0] < H.shape[1]:
        raise ContractViolation(f"condition number needs a square or tall matrix, got {H.shape}")
    s = np.linalg.svd(H, compute_uv=False)
    if s[-1] == 0.0:
        return float("inf")
    return max(1.0, float(s[0] / s[-1]))
