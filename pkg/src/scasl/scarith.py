"""Stochastic arithmetic blocks.

Multiplication is a single gate per bit (AND for unipolar, XNOR for
bipolar). Scaled addition of n streams is a binary tree of 2:1
multiplexers whose select streams are p=0.5 sequences from dedicated Sobol
dimensions shared per tree level; the result estimates the mean of the
inputs (scale 1/n). The tanh-like activation is a saturating up/down
counter scanned over the input stream.
"""

from dataclasses import dataclass, field

import numpy as np

from .bitstream import Bitstream, Encoding, StreamError
from .rng import DEFAULT_WIDTH, Sng, Sobol

# Reserved Sobol dimension pools. Dimension 1 is left free for
# diagnostics; mux select levels and padding streams draw from fixed pools
# disjoint from the data-stream pools that the network mapper assigns.
#
# SELECT_DIMS is ordered so that for every tree depth m, the top sample
# bits of the first m dimensions form an invertible GF(2) map of the low
# cycle-index bits: each aligned 2^m-block of cycles then selects every
# mux input exactly once. Selection carries no sampling noise of its own;
# the residual estimation noise comes from the data streams.
SELECT_DIMS = (2, 5, 3, 4, 7, 6, 9, 8, 10, 11, 13, 12, 18, 14, 15, 16)
PAD_DIMS = (17, 19, 20, 21, 22, 23, 24, 25)
PAD_POOL_SIZE = len(PAD_DIMS)
FIRST_DATA_DIM = 26


def _check_pair(a: Bitstream, b: Bitstream, encoding: Encoding):
    if a.length != b.length:
        raise StreamError("operand lengths differ")
    if a.encoding is not encoding or b.encoding is not encoding:
        raise StreamError(f"operands must both be {encoding.value}")


def mul_unipolar(a: Bitstream, b: Bitstream) -> Bitstream:
    """Unipolar product: bitwise AND of low-correlation streams."""
    _check_pair(a, b, Encoding.UNIPOLAR)
    return Bitstream(a.packed & b.packed, a.length, Encoding.UNIPOLAR)


def mul_bipolar(a: Bitstream, b: Bitstream) -> Bitstream:
    """Bipolar product: bitwise XNOR of low-correlation streams."""
    _check_pair(a, b, Encoding.BIPOLAR)
    packed = ~(a.packed ^ b.packed)
    # zero the padding bits past the logical length
    tail = a.length % 8
    if tail:
        mask = np.full(packed.shape, 0xFF, dtype=np.uint8)
        mask[-1] = (0xFF << (8 - tail)) & 0xFF
        packed &= mask
    return Bitstream(packed.astype(np.uint8), a.length, Encoding.BIPOLAR)


@dataclass(frozen=True)
class MuxAdderTree:
    """Binary multiplexer tree performing 1/n scaled addition.

    ``select_dims[d]`` feeds every 2:1 mux at tree level d with one shared
    p=0.5 stream; ``pad_dims`` generate the zero-value streams used to pad
    the input list up to ``fan_in``.
    """

    fan_in: int
    select_dims: tuple = ()
    pad_dims: tuple = ()
    width: int = DEFAULT_WIDTH
    table_path: str | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.fan_in < 1 or self.fan_in & (self.fan_in - 1):
            raise ValueError("fan_in must be a power of two")
        depth = self.depth
        if not self.select_dims:
            object.__setattr__(self, "select_dims", SELECT_DIMS[:depth])
        if len(self.select_dims) < depth:
            raise ValueError(f"need {depth} select dimensions")
        if not self.pad_dims:
            object.__setattr__(self, "pad_dims", PAD_DIMS)

    @property
    def depth(self) -> int:
        return int(self.fan_in).bit_length() - 1

    def select_streams(self, length: int) -> list[np.ndarray]:
        """One boolean p=0.5 select sequence per tree level."""
        half = 1 << (self.width - 1)
        out = []
        for d in range(self.depth):
            sob = Sobol(self.select_dims[d], self.width, self.table_path)
            out.append(sob.samples(length) < half)
        return out

    def pad_stream(self, slot: int, length: int,
                   encoding: Encoding) -> Bitstream:
        """Zero-value stream for pad slots (bipolar zero = p 0.5).

        All pad slots of a tree share one stream: only one pad slot is
        selected per cycle, and a single balanced sequence keeps the total
        padding contribution near zero.
        """
        dim = self.pad_dims[0]
        if encoding is Encoding.UNIPOLAR:
            bits = np.zeros(length, dtype=np.uint8)
            return Bitstream(np.packbits(bits), length, encoding)
        return Sng(Sobol(dim, self.width, self.table_path)).generate(
            0.0, length, encoding)


def mux_add(inputs, tree: MuxAdderTree) -> Bitstream:
    """Scaled addition: per-bit 1-of-n selection through the mux tree.

    The input list is padded to ``tree.fan_in`` with zero-value streams,
    so the decoded output estimates (sum of inputs) / fan_in.
    """
    if not inputs:
        raise StreamError("mux_add requires at least one input stream")
    length = inputs[0].length
    encoding = inputs[0].encoding
    for s in inputs:
        if s.length != length or s.encoding is not encoding:
            raise StreamError("mux inputs must share length and encoding")
    if len(inputs) > tree.fan_in:
        raise StreamError(f"{len(inputs)} inputs exceed fan-in {tree.fan_in}")

    level = [s.bits() for s in inputs]
    level += [tree.pad_stream(p, length, encoding).bits()
              for p in range(tree.fan_in - len(inputs))]
    for sel in tree.select_streams(length):
        level = [np.where(sel, level[2 * i + 1], level[2 * i])
                 for i in range(len(level) // 2)]
    return Bitstream(np.packbits(level[0]), length, encoding)


class StanhFsm:
    """Saturating up/down counter approximating tanh on bipolar streams.

    With ``state_count`` N, a stationary input of value x drives the
    output toward tanh((N/2) * x). The state starts at the midpoint and
    saturates at [0, N-1]; the output bit is state >= N/2 after update.
    """

    def __init__(self, state_count: int):
        if state_count < 2 or state_count % 2:
            raise ValueError("state_count must be a positive even integer")
        self.state_count = state_count
        self.state = state_count // 2

    def step(self, bit: int) -> int:
        if bit:
            self.state = min(self.state + 1, self.state_count - 1)
        else:
            self.state = max(self.state - 1, 0)
        return int(self.state >= self.state_count // 2)


def stanh(stream: Bitstream, fsm: StanhFsm) -> Bitstream:
    """Scan a bipolar stream through the FSM; output length equals input."""
    if stream.encoding is not Encoding.BIPOLAR:
        raise StreamError("stanh expects a bipolar input stream")
    bits = stream.bits()[:, None]
    state, out_bits = stanh_scan(bits, fsm.state_count, initial=fsm.state,
                                 return_bits=True)
    fsm.state = int(state[0])
    return Bitstream(np.packbits(out_bits[:, 0]), stream.length,
                     Encoding.BIPOLAR)


def stanh_scan(bits: np.ndarray, state_count: int, initial=None,
               return_bits: bool = False):
    """Vectorized FSM scan over ``bits`` of shape (T, ...).

    Returns (final_state, output) where output is the per-column count of
    1 output bits, or the full (T, ...) output bit array when
    ``return_bits`` is set. Columns evolve independent FSMs.
    """
    if state_count < 2 or state_count % 2:
        raise ValueError("state_count must be a positive even integer")
    t_len = bits.shape[0]
    cols = bits.shape[1:]
    half = state_count // 2
    state = np.full(cols, half if initial is None else initial,
                    dtype=np.int32)
    if return_bits:
        out = np.empty(bits.shape, dtype=bool)
    else:
        ones = np.zeros(cols, dtype=np.int64)
    step = np.where(bits, np.int32(1), np.int32(-1))
    for t in range(t_len):
        state += step[t]
        np.clip(state, 0, state_count - 1, out=state)
        if return_bits:
            out[t] = state >= half
        else:
            ones += state >= half
    if return_bits:
        return state, out
    return state, ones
