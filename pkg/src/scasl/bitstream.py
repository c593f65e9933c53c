"""Packed stochastic bitstreams and their statistics.

A bitstream is the unit of all stochastic-computing values here: a fixed
number of bits whose 1-density encodes a real number, either in unipolar
([0, 1]) or bipolar ([-1, 1]) form. Bits are stored packed in bytes,
most-significant-first within the logical bit order; that order is part of
the on-disk format used by the CLI.
"""

import enum
from dataclasses import dataclass, field

import numpy as np


class Encoding(enum.Enum):
    UNIPOLAR = "unipolar"
    BIPOLAR = "bipolar"


class StreamError(ValueError):
    """Raised on invalid stream operations (length/encoding mismatches)."""


@dataclass(frozen=True)
class Bitstream:
    """Immutable fixed-length bit sequence with an encoding tag.

    ``packed`` holds the bits MSB-first in uint8 words; trailing bits of
    the final byte are zero. Instances are safe to share between threads.
    """

    packed: np.ndarray = field(repr=False)
    length: int
    encoding: Encoding

    def __post_init__(self):
        if self.length < 1:
            raise StreamError("bitstream length must be >= 1")
        expected = (self.length + 7) // 8
        if self.packed.dtype != np.uint8 or self.packed.shape != (expected,):
            raise StreamError("packed buffer does not match declared length")
        self.packed.setflags(write=False)

    @classmethod
    def from_bits(cls, bits, encoding=Encoding.BIPOLAR) -> "Bitstream":
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.ndim != 1 or arr.size == 0:
            raise StreamError("bits must be a nonempty 1-D sequence")
        return cls(np.packbits(arr), int(arr.size), encoding)

    def bits(self) -> np.ndarray:
        """Unpacked copy of the bits as a boolean array."""
        return np.unpackbits(self.packed, count=self.length).astype(bool)

    def ones_count(self) -> int:
        return int(np.unpackbits(self.packed, count=self.length).sum())

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other) -> bool:
        if not isinstance(other, Bitstream):
            return NotImplemented
        return (self.length == other.length
                and self.encoding is other.encoding
                and np.array_equal(self.packed, other.packed))


def decode(stream: Bitstream) -> float:
    """Value encoded by a stream: ones/L unipolar, (2*ones - L)/L bipolar."""
    ones = stream.ones_count()
    if stream.encoding is Encoding.UNIPOLAR:
        return ones / stream.length
    return (2 * ones - stream.length) / stream.length


def truncate(stream: Bitstream, new_len: int) -> Bitstream:
    """Length-``new_len`` prefix of a stream, encoding preserved.

    Truncation is defined as prefix selection: the hardware realization
    simply stops the generator early, so the first bits are the kept bits.
    """
    if new_len < 1:
        raise StreamError("truncation length must be >= 1")
    if new_len > stream.length:
        raise StreamError(
            f"cannot truncate length {stream.length} to {new_len}")
    if new_len == stream.length:
        return stream
    bits = np.unpackbits(stream.packed, count=new_len)
    return Bitstream(np.packbits(bits), new_len, stream.encoding)


def complement(stream: Bitstream) -> Bitstream:
    """Bitwise complement (bipolar sign flip / unipolar 1-x)."""
    bits = np.unpackbits(stream.packed, count=stream.length)
    return Bitstream(np.packbits(1 - bits), stream.length, stream.encoding)


def correlation(a: Bitstream, b: Bitstream) -> float:
    """Pearson correlation of two equal-length 0/1 bit vectors.

    Returns 0.0 by convention when either stream is constant (the
    coefficient is undefined there and constant streams carry no shared
    fluctuation to measure).
    """
    if a.length != b.length:
        raise StreamError("correlation requires equal lengths")
    x = np.unpackbits(a.packed, count=a.length).astype(np.float64)
    y = np.unpackbits(b.packed, count=b.length).astype(np.float64)
    x -= x.mean()
    y -= y.mean()
    sx = float(np.sqrt((x * x).sum()))
    sy = float(np.sqrt((y * y).sum()))
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float((x * y).sum() / (sx * sy))


def uniformity_chi_square(numbers, bins: int) -> float:
    """Chi-square statistic of bin occupancy against a uniform law on [0,1).

    ``bins`` must be a power of two >= 2 so dyadic equidistribution of
    power-of-two sample prefixes is visible as an exactly-zero statistic.
    """
    if bins < 2 or bins & (bins - 1):
        raise ValueError("bins must be a power of two >= 2")
    x = np.asarray(numbers, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("numbers must be a nonempty 1-D sequence")
    if np.any(x < 0.0) or np.any(x >= 1.0):
        raise ValueError("numbers must lie in [0, 1)")
    counts = np.bincount((x * bins).astype(np.int64), minlength=bins)
    expected = x.size / bins
    return float(((counts - expected) ** 2 / expected).sum())


@dataclass
class StreamStats:
    """Summary used by the RNG comparison reports."""

    ones_count: int
    mean: float
    pearson_corr: float | None = None
    chi_square: float | None = None


def stream_stats(stream: Bitstream, other: Bitstream | None = None,
                 numbers=None, bins: int = 16) -> StreamStats:
    ones = stream.ones_count()
    return StreamStats(
        ones_count=ones,
        mean=ones / stream.length,
        pearson_corr=None if other is None else correlation(stream, other),
        chi_square=None if numbers is None
        else uniformity_chi_square(numbers, bins),
    )
