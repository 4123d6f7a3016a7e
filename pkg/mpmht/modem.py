"""
Square QAM constellations with Gray labels.

Labeling convention (fixed, used by every test and LLR):

- symbol index = integer value of the bit label, I bits first then Q bits;
- each axis uses a binary-reflected Gray code over the amplitude levels counted
  from the right (I) or the top (Q), so a leading 1 selects the left/bottom
  half and QPSK index 0 (bits ``00``) is ``(+1+j)/sqrt(2)``;
- points are scaled to unit average energy (divide by sqrt(2), sqrt(10),
  sqrt(42), sqrt(170) for orders 4/16/64/256).

Slicing is per-axis rounding with clamping; ties go to the lowest symbol index.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ContractViolation

SUPPORTED_ORDERS = (4, 16, 64, 256)

MODULATION_NAMES = {
    "qpsk": 4,
    "qam16": 16,
    "qam64": 64,
    "qam256": 256,
}


def gray_encode(a):
    return a ^ (a >> 1)


def gray_decode(g):
    a = np.array(g, dtype=np.int64, copy=True)
    shift = a >> 1
    while np.any(shift):
        a ^= shift
        shift >>= 1
    return a


@dataclass(frozen=True, eq=False)
class Constellation:
    order: int
    bits_per_symbol: int
    points: np.ndarray       # complex128, indexed by symbol index
    bit_labels: np.ndarray   # uint8 (order, bits_per_symbol), MSB first
    levels: int              # amplitude levels per axis
    scale: float             # spacing unit: levels sit at odd multiples of scale

    @property
    def axis_bits(self) -> int:
        return self.bits_per_symbol // 2

    @property
    def name(self) -> str:
        return "qpsk" if self.order == 4 else f"qam{self.order}"

    def __repr__(self) -> str:
        return f"Constellation({self.name})"


@lru_cache(maxsize=None)
def build_constellation(order: int) -> Constellation:
    """Build the unit-energy Gray-labeled square QAM of the given order."""
    if order not in SUPPORTED_ORDERS:
        raise ContractViolation(f"unsupported constellation order {order}; expected one of {SUPPORTED_ORDERS}")

    bits_per_symbol = int(order).bit_length() - 1
    axis_bits = bits_per_symbol // 2
    levels = 1 << axis_bits
    # Mean energy of the unscaled odd-integer grid is 2 (M - 1) / 3
    scale = 1.0 / np.sqrt(2.0 * (order - 1) / 3.0)

    index = np.arange(order, dtype=np.int64)
    i_label = index >> axis_bits
    q_label = index & (levels - 1)
    i_amp = (levels - 1 - 2 * gray_decode(i_label)) * scale
    q_amp = (levels - 1 - 2 * gray_decode(q_label)) * scale
    points = i_amp + 1j * q_amp

    shifts = np.arange(bits_per_symbol - 1, -1, -1)
    bit_labels = ((index[:, np.newaxis] >> shifts) & 1).astype(np.uint8)

    points.setflags(write=False)
    bit_labels.setflags(write=False)
    return Constellation(
        order=order,
        bits_per_symbol=bits_per_symbol,
        points=points,
        bit_labels=bit_labels,
        levels=levels,
        scale=float(scale),
    )


def constellation_from_name(name: str) -> Constellation:
    key = name.strip().lower()
    if key not in MODULATION_NAMES:
        raise ContractViolation(f"unknown modulation {name!r}; expected one of {sorted(MODULATION_NAMES)}")
    return build_constellation(MODULATION_NAMES[key])


def map_bits(c: Constellation, bits: Sequence[int]) -> int:
    """Symbol index whose label equals ``bits`` (MSB first)."""
    if len(bits) != c.bits_per_symbol:
        raise ContractViolation(f"{c.name} needs {c.bits_per_symbol} bits, got {len(bits)}")
    index = 0
    for b in bits:
        if b not in (0, 1):
            raise ContractViolation(f"bit values must be 0 or 1, got {b!r}")
        index = (index << 1) | int(b)
    return index


def demap(c: Constellation, index: int) -> np.ndarray:
    if not 0 <= index < c.order:
        raise ContractViolation(f"symbol index {index} out of range for {c.name}")
    return c.bit_labels[index].copy()


def _slice_axis(c: Constellation, v: np.ndarray) -> np.ndarray:
    """Gray label of the nearest amplitude level along one axis."""
    m = c.levels
    u = ((m - 1) - v / c.scale) / 2.0
    a = np.floor(u + 0.5)
    tie = (a - u == 0.5) & (a >= 1) & (a <= m - 1)
    a = np.clip(a, 0, m - 1).astype(np.int64)
    if np.any(tie):
        lower = np.where(tie, a - 1, a)
        a = np.where(tie & (gray_encode(lower) < gray_encode(a)), lower, a)
    return gray_encode(a)


def slice_symbols(c: Constellation, z) -> np.ndarray:
    """Vectorized nearest-symbol decision; returns symbol indices."""
    z = np.asarray(z, dtype=np.complex128)
    return (_slice_axis(c, z.real) << c.axis_bits) | _slice_axis(c, z.imag)


def slice_symbol(c: Constellation, z: complex) -> int:
    if not np.isfinite(z):
        raise ContractViolation(f"cannot slice non-finite value {z!r}")
    return int(slice_symbols(c, np.array([z]))[0])
