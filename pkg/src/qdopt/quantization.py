"""Mid-tread uniform quantizer and the adaptive-scaling channel codec.

The quantizer maps reals to integer symbols in [-levels, levels]. Bands are
half-open on the left and closed on the right (0.5 -> 0, 1.5 -> 1); negative
inputs at or below -1/2 are quantized by odd reflection of the positive rule,
so -0.5 -> 0. Inputs beyond the top band clamp to +-levels; that event is
what "saturated" means throughout the package.

The encoder/decoder pair difference-codes a vector sequence against a shared
predictor state, with prediction errors divided by a geometrically decaying
scale s(k) = s0 * mu^k. Both sides update their state as
``state = scale * symbols + state`` with identical float64 arithmetic and
both advance the scale by one multiplication with mu per step, so a decoder
fed the encoder's symbol stream reproduces the encoder's internal state
bit-for-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteInput, ScaleIndexMismatch


def bits_for_level(levels: int, strict: bool = False) -> int:
    """Bits per transmitted scalar for a (2*levels + 1)-symbol alphabet.

    The default count is ceil(log2(2*levels)); ``strict=True`` instead counts
    ceil(log2(2*levels + 1)), which covers every symbol of the odd-sized
    alphabet. Both are exposed because the nominal count under-counts by one
    symbol; accounting defaults to the nominal figure.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    m = 2 * levels + 1 if strict else 2 * levels
    return (m - 1).bit_length()


@dataclass
class QuantizedMessage:
    """One quantized vector: integer symbols plus bookkeeping.

    ``peak`` is the largest |component| of the pre-quantization input; the
    message is saturated when ``peak > levels + 1/2``. ``step`` is the
    encoder step counter after producing the message (0 for messages made
    directly by :meth:`UniformQuantizer.quantize_vector`).
    """

    symbols: np.ndarray
    bits: int
    peak: float
    saturated: bool
    step: int = 0

    @property
    def dimension(self) -> int:
        return self.symbols.shape[-1]


class UniformQuantizer:
    """Symmetric mid-tread quantizer with 2*levels + 1 output values."""

    def __init__(self, levels: int):
        if levels < 1:
            raise ValueError("levels must be >= 1")
        self.levels = int(levels)

    def __repr__(self):
        return f"UniformQuantizer(levels={self.levels})"

    def quantize_array(self, a: np.ndarray) -> np.ndarray:
        """Componentwise quantization; returns int64 symbols."""
        a = np.asarray(a, dtype=float)
        if not np.all(np.isfinite(a)):
            raise NonFiniteInput("quantizer input contains NaN or infinity")
        k = self.levels
        pos = np.minimum(np.ceil(a - 0.5), k)
        neg = np.maximum(np.floor(a + 0.5), -k)
        return np.where(a <= -0.5, neg, pos).astype(np.int64)

    def quantize_scalar(self, a: float) -> int:
        return int(self.quantize_array(np.asarray([a]))[0])

    def quantize_vector(self, h: np.ndarray) -> QuantizedMessage:
        h = np.asarray(h, dtype=float)
        symbols = self.quantize_array(h)
        peak = float(np.abs(h).max()) if h.size else 0.0
        return QuantizedMessage(
            symbols=symbols,
            bits=h.size * bits_for_level(self.levels),
            peak=peak,
            saturated=peak > self.levels + 0.5,
        )


class Encoder:
    """Transmitter-side codec state for one vector channel."""

    def __init__(self, dim: int, quantizer: UniformQuantizer, s0: float, mu: float):
        if s0 <= 0:
            raise ValueError("s0 must be positive")
        if not (0 < mu < 1):
            raise ValueError("mu must lie in (0, 1)")
        self.dim = int(dim)
        self.quantizer = quantizer
        self.s0 = float(s0)
        self.mu = float(mu)
        self.internal = np.zeros(self.dim)
        self.step = 0
        self.scale = float(s0)  # s(step), the scale the next encode will use

    def encode(self, value: np.ndarray) -> QuantizedMessage:
        value = np.asarray(value, dtype=float)
        if value.shape != (self.dim,):
            raise NonFiniteInput(f"expected shape ({self.dim},), got {value.shape}")
        if not np.all(np.isfinite(value)):
            raise NonFiniteInput("encoder input contains NaN or infinity")
        msg = self.quantizer.quantize_vector((value - self.internal) / self.scale)
        self.internal = self.scale * msg.symbols + self.internal
        self.step += 1
        msg.step = self.step
        self.scale = self.scale * self.mu
        return msg


class Decoder:
    """Receiver-side codec state paired with one sender's encoder."""

    def __init__(self, dim: int, s0: float, mu: float):
        if s0 <= 0:
            raise ValueError("s0 must be positive")
        if not (0 < mu < 1):
            raise ValueError("mu must lie in (0, 1)")
        self.dim = int(dim)
        self.s0 = float(s0)
        self.mu = float(mu)
        self.estimate = np.zeros(self.dim)
        self.step = 0
        self.scale = float(s0)

    def decode(self, msg: QuantizedMessage) -> np.ndarray:
        if msg.step != self.step + 1:
            raise ScaleIndexMismatch(
                f"decoder at step {self.step} received message step {msg.step}")
        self.estimate = self.scale * msg.symbols + self.estimate
        self.step += 1
        self.scale = self.scale * self.mu
        return self.estimate.copy()


class EncoderBank:
    """Encoders for n broadcasting agents sharing one scale sequence.

    Row ``i`` of ``internal`` is agent i's predictor state; all agents step
    in lockstep, so a single scalar scale serves the whole bank. The row
    arithmetic is identical to :class:`Encoder`, so a per-channel decoder
    replaying row i's symbols reproduces row i bit-for-bit.
    """

    def __init__(self, n: int, dim: int, quantizer: UniformQuantizer,
                 s0: float, mu: float):
        if s0 <= 0:
            raise ValueError("s0 must be positive")
        if not (0 < mu < 1):
            raise ValueError("mu must lie in (0, 1)")
        self.n = int(n)
        self.dim = int(dim)
        self.quantizer = quantizer
        self.mu = float(mu)
        self.internal = np.zeros((self.n, self.dim))
        self.step = 0
        self.scale = float(s0)

    def encode(self, values: np.ndarray) -> tuple[np.ndarray, float]:
        """Encode one value row per agent.

        Returns ``(symbols, peak)`` where ``symbols`` is the (n, dim) integer
        matrix and ``peak`` the largest |quantizer input| over the bank (the
        saturation monitor reads this).
        """
        if values.shape != (self.n, self.dim):
            raise NonFiniteInput(
                f"expected shape ({self.n}, {self.dim}), got {values.shape}")
        args = (values - self.internal) / self.scale
        symbols = self.quantizer.quantize_array(args)
        self.internal = self.scale * symbols + self.internal
        self.step += 1
        self.scale = self.scale * self.mu
        return symbols, float(np.abs(args).max())


class DecoderBank:
    """Receiver-side estimates of all n broadcast streams.

    Under the broadcast topology every receiver of agent i replays the same
    symbols with the same arithmetic, so one shared estimate row per sender
    represents every receiver's copy exactly.
    """

    def __init__(self, n: int, dim: int, s0: float, mu: float):
        self.n = int(n)
        self.dim = int(dim)
        self.mu = float(mu)
        self.estimate = np.zeros((self.n, self.dim))
        self.step = 0
        self.scale = float(s0)

    def decode(self, symbols: np.ndarray) -> np.ndarray:
        self.estimate = self.scale * symbols + self.estimate
        self.step += 1
        self.scale = self.scale * self.mu
        return self.estimate


# ---------------------------------------------------------------------------
# Wire representation: scale_index as little-endian u32, then each symbol as
# a zig-zag varint. A stream file is the raw concatenation of messages.

def _zigzag(n: int) -> int:
    return (n << 1) ^ (n >> 63) if n < 0 else n << 1


def _unzigzag(z: int) -> int:
    return (z >> 1) ^ -(z & 1)


def message_to_bytes(msg: QuantizedMessage) -> bytes:
    out = bytearray(struct.pack("<I", msg.step))
    for sym in msg.symbols.ravel().tolist():
        z = _zigzag(int(sym))
        while True:
            byte = z & 0x7F
            z >>= 7
            if z:
                out.append(byte | 0x80)
            else:
                out.append(byte)
                break
    return bytes(out)


def message_from_bytes(buf: bytes, offset: int, dim: int, levels: int
                       ) -> tuple[QuantizedMessage, int]:
    (step,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    symbols = np.empty(dim, dtype=np.int64)
    for i in range(dim):
        shift = 0
        z = 0
        while True:
            byte = buf[offset]
            offset += 1
            z |= (byte & 0x7F) << shift
            if not byte & 0x80:
                break
            shift += 7
        symbols[i] = _unzigzag(z)
    peak = float(np.abs(symbols).max()) if dim else 0.0
    return QuantizedMessage(
        symbols=symbols,
        bits=dim * bits_for_level(levels),
        peak=peak,
        saturated=bool(np.abs(symbols).max() > levels) if dim else False,
        step=step,
    ), offset


def write_stream(path, messages) -> None:
    with open(path, "wb") as fh:
        for msg in messages:
            fh.write(message_to_bytes(msg))


def read_stream(path, dim: int, levels: int) -> list[QuantizedMessage]:
    with open(path, "rb") as fh:
        buf = fh.read()
    out = []
    offset = 0
    while offset < len(buf):
        msg, offset = message_from_bytes(buf, offset, dim, levels)
        out.append(msg)
    return out
