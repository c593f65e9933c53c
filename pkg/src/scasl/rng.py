"""Deterministic random-number sources and stream generation.

Two generator families drive the stochastic number generators (SNGs):

* ``Lfsr`` -- a Fibonacci linear feedback shift register. Maximal-length
  tap sets give period 2^width - 1 and never visit state 0.
* ``Sobol`` -- a base-2 low-discrepancy sequence generator using the
  XOR recurrence q_{i+1} = q_i ^ V_m, where m - 1 is the position of the
  least-significant zero bit of the sample index. Every power-of-two
  prefix of a dimension covers each dyadic bin exactly once, which is
  what makes prefix truncation safe.

An SNG couples a generator with a comparator: output bit t is 1 iff
sample t is below ``floor(p * 2^width)`` for target probability p.
"""

import functools
import os
from importlib import resources

import numpy as np

from .bitstream import Bitstream, Encoding, decode

DEFAULT_WIDTH = 16

# maximal-length feedback tap positions (1-based, MSB side) per register
# width; each set is verified by period enumeration in the test suite
MAXIMAL_TAPS = {
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 6, 4, 1),
    13: (13, 4, 3, 1),
    14: (14, 5, 3, 1),
    15: (15, 14),
    16: (16, 15, 13, 4),
}

ENV_TABLE_PATH = "SCASL_SOBOL_TABLE"


class RngError(ValueError):
    pass


class Lfsr:
    """Fibonacci LFSR over ``width`` bits.

    ``taps`` are 1-based bit positions entering the XOR feedback; the
    register shifts left and the feedback bit enters at position 1.
    """

    def __init__(self, width: int, taps=None, seed: int = 1):
        if not 4 <= width <= 32:
            raise RngError("LFSR width must be in [4, 32]")
        if taps is None:
            try:
                taps = MAXIMAL_TAPS[width]
            except KeyError:
                raise RngError(f"no default taps for width {width}") from None
        self.width = width
        self.taps = tuple(sorted(set(int(t) for t in taps), reverse=True))
        if not self.taps or any(not 1 <= t <= width for t in self.taps):
            raise RngError("tap positions must lie in [1, width]")
        if not 0 < seed < (1 << width):
            raise RngError("seed must be a nonzero width-bit integer")
        self.state = int(seed)

    def next(self) -> int:
        """Return the current register value and advance one step."""
        if self.state == 0:
            raise RngError("LFSR reached the degenerate all-zero state")
        value = self.state
        fb = 0
        for t in self.taps:
            fb ^= (self.state >> (t - 1)) & 1
        self.state = ((self.state << 1) | fb) & ((1 << self.width) - 1)
        return value

    def samples(self, n: int) -> np.ndarray:
        return np.array([self.next() for _ in range(n)], dtype=np.uint32)

    def copy(self) -> "Lfsr":
        other = Lfsr(self.width, self.taps, self.state)
        return other


@functools.lru_cache(maxsize=4)
def _load_table(path: str | None) -> dict[int, tuple[int, int, tuple[int, ...]]]:
    """Parse a direction-number table: lines of ``dim s a m_1 ... m_s``."""
    if path is None:
        text = (resources.files("scasl") / "data" /
                "sobol_directions.txt").read_text()
    else:
        with open(path) as f:
            text = f.read()
    table = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            dim, s, a = int(parts[0]), int(parts[1]), int(parts[2])
            ms = tuple(int(x) for x in parts[3:])
        except (IndexError, ValueError):
            raise RngError(f"malformed direction table line {lineno}") from None
        if dim < 2 or len(ms) != s:
            raise RngError(f"malformed direction table line {lineno}")
        if any(m % 2 == 0 or m >= (1 << (i + 1)) for i, m in enumerate(ms)):
            raise RngError(
                f"direction numbers violate m_i odd, m_i < 2^i (line {lineno})")
        table[dim] = (s, a, ms)
    return table


def direction_numbers(dimension: int, width: int = DEFAULT_WIDTH,
                      table_path: str | None = None) -> np.ndarray:
    """Direction vectors V_1..V_width for one dimension as uint32.

    Dimension 1 uses V_m = 2^(width - m); higher dimensions expand the
    tabulated initial values through the primitive-polynomial recurrence.
    """
    if dimension < 1:
        raise RngError("dimension must be a positive integer")
    if dimension == 1:
        return np.array([1 << (width - m) for m in range(1, width + 1)],
                        dtype=np.uint32)
    if table_path is None:
        table_path = os.environ.get(ENV_TABLE_PATH) or None
    table = _load_table(table_path)
    if dimension not in table:
        raise RngError(f"dimension {dimension} not in direction table")
    s, a, ms = table[dimension]
    m = list(ms[:width])
    for i in range(s, width):
        new = m[i - s] ^ (m[i - s] << s)
        for j in range(1, s):
            if (a >> (s - 1 - j)) & 1:
                new ^= m[i - j] << j
        m.append(new)
    return np.array([m[i] << (width - 1 - i) for i in range(width)],
                    dtype=np.uint32)


class Sobol:
    """One dimension of a Sobol sequence in Gray-code order.

    ``next`` returns the sample for the current index and advances; the
    first output is always 0. At most 2^width samples exist per dimension.
    """

    def __init__(self, dimension: int = 1, width: int = DEFAULT_WIDTH,
                 table_path: str | None = None):
        if not 1 <= width <= 31:
            raise RngError("Sobol width must be in [1, 31]")
        self.width = width
        self.dimension = dimension
        self.directions = direction_numbers(dimension, width, table_path)
        self.value = 0
        self.index = 0

    def next(self) -> int:
        if self.index >= (1 << self.width):
            raise RngError(
                f"Sobol dimension exhausted after 2^{self.width} samples")
        out = self.value
        i = self.index
        self.index += 1
        if self.index < (1 << self.width):
            lsz = 0
            while i & 1:
                i >>= 1
                lsz += 1
            self.value ^= int(self.directions[lsz])
        return out

    def samples(self, n: int) -> np.ndarray:
        return np.array([self.next() for _ in range(n)], dtype=np.uint32)

    def copy(self) -> "Sobol":
        other = Sobol.__new__(Sobol)
        other.width = self.width
        other.dimension = self.dimension
        other.directions = self.directions
        other.value = self.value
        other.index = self.index
        return other


def sobol_samples(dimension: int, n: int, width: int = DEFAULT_WIDTH,
                  table_path: str | None = None) -> np.ndarray:
    """First ``n`` samples of one dimension, vectorized.

    Uses the closed form: sample i XOR-combines the direction vectors
    selected by the set bits of gray(i). Identical to iterating ``next``.
    """
    if n > (1 << width):
        raise RngError(f"at most 2^{width} samples per dimension")
    v = direction_numbers(dimension, width, table_path)
    idx = np.arange(n, dtype=np.uint32)
    gray = idx ^ (idx >> 1)
    out = np.zeros(n, dtype=np.uint32)
    for m in range(width):
        out ^= np.where((gray >> m) & 1, v[m], 0).astype(np.uint32)
    return out


def sample_matrix(dimensions, n: int, width: int = DEFAULT_WIDTH,
                  table_path: str | None = None) -> np.ndarray:
    """Stacked Sobol samples, shape (len(dimensions), n)."""
    return np.stack([sobol_samples(d, n, width, table_path)
                     for d in dimensions])


def comparator_threshold(value: float, encoding: Encoding,
                         width: int = DEFAULT_WIDTH) -> int:
    """SNG comparator threshold floor(p * 2^width) for a target value."""
    if encoding is Encoding.UNIPOLAR:
        if not 0.0 <= value <= 1.0:
            raise RngError(f"unipolar value {value} outside [0, 1]")
        p = value
    else:
        if not -1.0 <= value <= 1.0:
            raise RngError(f"bipolar value {value} outside [-1, 1]")
        p = (value + 1.0) / 2.0
    return int(p * (1 << width))


class Sng:
    """Stochastic number generator: RNG plus comparator."""

    def __init__(self, rng):
        self.rng = rng
        self.width = rng.width

    def generate(self, value: float, length: int,
                 encoding: Encoding = Encoding.BIPOLAR) -> Bitstream:
        """Stream whose bit t is 1 iff rng sample t < floor(p * 2^width)."""
        if length < 1:
            raise RngError("stream length must be >= 1")
        threshold = comparator_threshold(value, encoding, self.width)
        bits = self.rng.samples(length) < threshold
        return Bitstream(np.packbits(bits), length, encoding)


def estimate(stream: Bitstream) -> float:
    """Probability-estimator readout; counter semantics, same as decode."""
    return decode(stream)
