"""Hard quantization, entropy coding, and end-to-end rate measurement.

The coder is a stream ANS coder over the integer CDF tables: the state x
stays in [total << 24, total << 32) and renormalizes byte-wise, so there
is no carry propagation and the per-symbol redundancy is below 2^-16
bits. The only constant overhead is the serialized final state (state
width minus the 24 + precision bits the initial state absorbs, which is
8 bits). Encoding buffers the per-symbol cumulative intervals and walks
them in reverse at flush time, which is what lets the decoder run
strictly forward. Encoder and decoder derive every constant from the
table precision, so streams are portable across processes as long as the
same tables are supplied.

Escapes: a value outside a channel's tabulated support is coded as the
channel's escape symbol followed by its raw 32-bit two's-complement value,
sent as four uniform byte symbols through the same coder (exactly 8 bits
each). The stream stays self-delimiting.
"""

from __future__ import annotations

import struct
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .entropy import CdfTable, FactorizedEntropyModel
from .errors import DecodeError, ShapeError
from .nn import Transform, as_tensor

STREAM_MAGIC = b"FNBS"
STREAM_VERSION = 1
_HEADER = struct.Struct("<4sHQIBQ")  # magic, version, rows, channels, precision, payload len


def quantize_round(y: np.ndarray) -> np.ndarray:
    """Nearest-integer quantization, ties away from zero (0.5 -> 1, -0.5 -> -1)."""
    y = as_tensor(y)
    return np.sign(y) * np.floor(np.abs(y) + 0.5)


def add_uniform_noise(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Training proxy for quantization: additive U(-1/2, 1/2) noise."""
    y = as_tensor(y)
    return y + rng.uniform(-0.5, 0.5, size=y.shape)


_WINDOW_BITS = 64
_RENORM_LIMIT = 1 << (_WINDOW_BITS - 8)
_WINDOW_MASK = (1 << _WINDOW_BITS) - 1
_FLUSH_ALIGN = _WINDOW_BITS - 16
# Emit settled bytes once this many renormalizations have accumulated.
_SPILL_PENDING = 1 << 12


class RangeEncoder:
    """Arithmetic encoder over cumulative counts with a fixed power-of-two total.

    The interval base low is an exact integer, so carries from interval
    additions propagate natively instead of being clipped the way
    carry-less renormalization clips them; the range is a 64-bit window
    renormalized byte-wise. Bytes above the window are emitted once a
    carry can no longer reach them (a carry only ripples through a run of
    0xFF bytes). The flush emits the smallest bottom-aligned point inside
    the final interval, so the whole-stream overhead beyond the ideal
    codelength is at most two bytes.
    """

    def __init__(self, precision: int):
        self.precision = precision
        self.low = 0
        self.range_ = _WINDOW_MASK
        self.pending = 0
        self.out = bytearray()

    def encode_symbol(self, cum_lo: int, cum_hi: int) -> None:
        r = self.range_ >> self.precision
        self.low += r * cum_lo
        self.range_ = r * (cum_hi - cum_lo)
        while self.range_ < _RENORM_LIMIT:
            self.low <<= 8
            self.range_ <<= 8
            self.pending += 1
        if self.pending >= _SPILL_PENDING:
            self._spill()

    def _spill(self) -> None:
        blob = (self.low >> _WINDOW_BITS).to_bytes(self.pending, "big")
        settled = len(blob)
        while settled > 0 and blob[settled - 1] == 0xFF:
            settled -= 1
        settled = max(0, settled - 1)  # guard byte a carry could still reach
        if settled:
            self.out.extend(blob[:settled])
            kept = int.from_bytes(blob[settled:], "big")
            self.low = (kept << _WINDOW_BITS) | (self.low & _WINDOW_MASK)
            self.pending -= settled

    def finish(self) -> bytes:
        # After renormalization range_ >= 2^56, so the smallest point at
        # or above low aligned to 2^48 still falls inside the interval.
        # Its trailing zero bytes are implicit: the decoder zero-pads.
        point = ((self.low + (1 << _FLUSH_ALIGN) - 1) >> _FLUSH_ALIGN) << _FLUSH_ALIGN
        scale = _WINDOW_BITS + 8 * self.pending
        tail = point.to_bytes(scale // 8, "big")[: self.pending + 2]
        return bytes(self.out) + tail


class RangeDecoder:
    """Mirror of RangeEncoder; tracks the interval modulo the window width."""

    def __init__(self, data: bytes, precision: int):
        self.precision = precision
        self.data = data
        self.pos = 0
        self.low = 0
        self.range_ = _WINDOW_MASK
        self.code = 0
        for _ in range(_WINDOW_BITS // 8):
            self.code = (self.code << 8) | self._next_byte()

    def _next_byte(self) -> int:
        # Bytes past the end stand in for the zeros the trimmed flush
        # dropped; framing-level length checks catch real truncation.
        if self.pos >= len(self.data):
            return 0
        b = self.data[self.pos]
        self.pos += 1
        return b

    def decode_target(self) -> int:
        r = self.range_ >> self.precision
        target = ((self.code - self.low) & _WINDOW_MASK) // r
        total = 1 << self.precision
        return total - 1 if target >= total else target

    def consume(self, cum_lo: int, cum_hi: int) -> None:
        r = self.range_ >> self.precision
        self.low = (self.low + r * cum_lo) & _WINDOW_MASK
        self.range_ = r * (cum_hi - cum_lo)
        while self.range_ < _RENORM_LIMIT:
            self.code = ((self.code << 8) & _WINDOW_MASK) | self._next_byte()
            self.low = (self.low << 8) & _WINDOW_MASK
            self.range_ <<= 8


_INT32_MIN = -(1 << 31)
_INT32_MAX = (1 << 31) - 1


def encode_payload(latents: np.ndarray, tables: CdfTable) -> bytes:
    """Range-code an integer latent batch [B, C] row-major; returns raw payload."""
    latents = np.asarray(latents)
    if latents.ndim != 2 or latents.shape[1] != len(tables.channels):
        raise ShapeError(
            f"latents {latents.shape} do not match {len(tables.channels)} channel tables"
        )
    enc = RangeEncoder(tables.precision)
    byte_count = 1 << (tables.precision - 8)
    rows = latents.astype(np.int64, copy=False)
    cums = [ch.cum.tolist() for ch in tables.channels]
    for row in rows:
        for c, ch in enumerate(tables.channels):
            v = int(row[c])
            cum = cums[c]
            s = ch.symbol_for_value(v)
            enc.encode_symbol(cum[s], cum[s + 1])
            if s == ch.escape_index:
                if not _INT32_MIN <= v <= _INT32_MAX:
                    raise ShapeError(f"latent value {v} does not fit 32 bits")
                u = v & 0xFFFFFFFF
                for shift in (0, 8, 16, 24):
                    b = (u >> shift) & 0xFF
                    enc.encode_symbol(b * byte_count, (b + 1) * byte_count)
    return enc.finish()


def decode_payload(payload: bytes, tables: CdfTable, n_rows: int) -> np.ndarray:
    """Invert encode_payload; returns int64 latents [n_rows, C]."""
    dec = RangeDecoder(payload, tables.precision)
    byte_count = 1 << (tables.precision - 8)
    n_channels = len(tables.channels)
    out = np.empty((n_rows, n_channels), dtype=np.int64)
    cums = [ch.cum.tolist() for ch in tables.channels]
    for i in range(n_rows):
        for c, ch in enumerate(tables.channels):
            cum = cums[c]
            target = dec.decode_target()
            s = bisect_right(cum, target) - 1
            dec.consume(cum[s], cum[s + 1])
            if s == ch.escape_index:
                u = 0
                for shift in (0, 8, 16, 24):
                    t = dec.decode_target()
                    b = t // byte_count
                    dec.consume(b * byte_count, (b + 1) * byte_count)
                    u |= b << shift
                v = u - (1 << 32) if u >= (1 << 31) else u
            else:
                v = ch.value_for_symbol(s)
            out[i, c] = v
    return out


def encode(latents: np.ndarray, tables: CdfTable) -> bytes:
    """Full self-describing bitstream: header plus range-coded payload."""
    payload = encode_payload(latents, tables)
    header = _HEADER.pack(
        STREAM_MAGIC,
        STREAM_VERSION,
        latents.shape[0],
        latents.shape[1],
        tables.precision,
        len(payload),
    )
    return header + payload


def decode(stream: bytes, tables: CdfTable) -> np.ndarray:
    """Invert encode; raises DecodeError on any malformed header or payload."""
    if len(stream) < _HEADER.size:
        raise DecodeError(f"stream shorter than header ({len(stream)} bytes)")
    magic, version, n_rows, n_channels, precision, payload_len = _HEADER.unpack(
        stream[: _HEADER.size]
    )
    if magic != STREAM_MAGIC:
        raise DecodeError(f"bad stream magic {magic!r}")
    if version != STREAM_VERSION:
        raise DecodeError(f"unsupported stream version {version}")
    if n_channels != len(tables.channels):
        raise DecodeError(
            f"stream has {n_channels} channels, tables have {len(tables.channels)}"
        )
    if precision != tables.precision:
        raise DecodeError(
            f"stream coded at precision {precision}, tables at {tables.precision}"
        )
    payload = stream[_HEADER.size :]
    if len(payload) != payload_len:
        raise DecodeError(
            f"payload length {len(payload)} does not match header {payload_len}"
        )
    return decode_payload(payload, tables, n_rows)


@dataclass
class EvalResult:
    """Measured operating point of one batch through the full codec."""

    bits_total: int  # coder payload bits (container header excluded)
    bits_per_sample: float
    bits_per_dim: float
    mse: float
    n_samples: int
    n_escapes: int


def measure_rate(
    x: np.ndarray,
    analysis: Transform,
    synthesis: Transform,
    model: FactorizedEntropyModel,
    tables: CdfTable,
) -> EvalResult:
    """Run a batch through quantize -> encode -> decode -> reconstruct.

    The decoded latents are compared to the encoder side on every call; a
    mismatch means the coder or tables are broken and raises DecodeError.
    """
    x = as_tensor(x)
    y = analysis.forward(x)
    y_hat = quantize_round(y).astype(np.int64)
    payload = encode_payload(y_hat, tables)
    decoded = decode_payload(payload, tables, y_hat.shape[0])
    if not np.array_equal(decoded, y_hat):
        raise DecodeError("decoded latents differ from encoder-side latents")
    x_hat = synthesis.forward(decoded.astype(np.float64))
    mse = float(np.mean((x - x_hat) ** 2))
    n_escapes = 0
    for c, ch in enumerate(tables.channels):
        col = y_hat[:, c]
        n_escapes += int(np.count_nonzero((col < ch.y_min) | (col > ch.y_max)))
    bits = 8 * len(payload)
    b = x.shape[0]
    return EvalResult(
        bits_total=bits,
        bits_per_sample=bits / b,
        bits_per_dim=bits / (b * x.shape[1]),
        mse=mse,
        n_samples=b,
        n_escapes=n_escapes,
    )
