"""Tests for quantization, the range coder, and bitstream framing.

The coder tests exercise exact losslessness (including escape-coded values
far outside the table support), the codelength bound against the ideal
-sum(log2 p) codelength, and every header validation path.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedntc.codec import (
    RangeDecoder,
    RangeEncoder,
    add_uniform_noise,
    decode,
    decode_payload,
    encode,
    encode_payload,
    measure_rate,
    quantize_round,
)
from fedntc.entropy import FactorizedEntropyModel
from fedntc.errors import DecodeError, ShapeError
from fedntc.nn import DenseLayer, Transform


def make_tables(seed=0, channels=3, precision=16, init_scale=2.0):
    model = FactorizedEntropyModel(
        channels, (3, 3, 3), init_scale, np.random.default_rng(seed)
    )
    return model, model.build_cdf_table(precision=precision)


def identity_transform(dim):
    layer = DenseLayer(weight=np.eye(dim), bias=np.zeros(dim), activation="none")
    return Transform([layer])


class TestQuantize:
    def test_ties_round_away_from_zero(self):
        y = np.array([0.5, -0.5, 1.5, -1.5, 2.5, -2.5, 0.49, -0.49, 0.0])
        expect = np.array([1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 0.0, 0.0, 0.0])
        np.testing.assert_array_equal(quantize_round(y), expect)

    def test_noise_bounds_and_determinism(self):
        y = np.zeros((100, 4))
        a = add_uniform_noise(y, np.random.default_rng(1))
        b = add_uniform_noise(y, np.random.default_rng(1))
        np.testing.assert_array_equal(a, b)
        assert np.all(a >= -0.5) and np.all(a < 0.5)
        assert abs(a.mean()) < 0.05


class TestRawCoder:
    def encode_symbols(self, symbols, cum, precision):
        enc = RangeEncoder(precision)
        for s in symbols:
            enc.encode_symbol(cum[s], cum[s + 1])
        return enc.finish()

    def decode_symbols(self, data, n, cum, precision):
        dec = RangeDecoder(data, precision)
        out = []
        for _ in range(n):
            target = dec.decode_target()
            s = int(np.searchsorted(cum, target, side="right")) - 1
            dec.consume(cum[s], cum[s + 1])
            out.append(s)
        return out

    def test_uniform_256_codes_at_eight_bits(self):
        """10^4 uniform byte symbols must cost 8e4 bits plus only the flush."""
        cum = list(range(257))
        rng = np.random.default_rng(2)
        symbols = rng.integers(0, 256, size=10_000).tolist()
        data = self.encode_symbols(symbols, cum, precision=8)
        bits = 8 * len(data)
        assert abs(bits - 80_000) <= 64
        assert self.decode_symbols(data, len(symbols), cum, 8) == symbols

    @pytest.mark.parametrize("seed", [3, 4, 5, 6, 7])
    def test_skewed_tables_meet_ideal_plus_flush(self, seed):
        rng = np.random.default_rng(seed)
        n_sym = 40
        raw = rng.dirichlet(np.full(n_sym, 0.3))
        counts = np.maximum(1, np.round(raw * (1 << 16)).astype(np.int64))
        counts[counts.argmax()] += (1 << 16) - counts.sum()
        assert counts.min() >= 1
        cum = np.concatenate([[0], np.cumsum(counts)]).tolist()
        p = counts / (1 << 16)
        symbols = rng.choice(n_sym, size=5_000, p=p).tolist()
        data = self.encode_symbols(symbols, cum, precision=16)
        ideal = float(np.sum(-np.log2(p[symbols])))
        bits = 8 * len(data)
        assert bits <= ideal + 32
        assert bits >= ideal - 8
        assert self.decode_symbols(data, len(symbols), cum, 16) == symbols

    def test_dominant_symbol_stream_is_nearly_free(self):
        """A probability-(1 - 2^-16) symbol repeated 10^4 times costs ~0 bits."""
        cum = [0, (1 << 16) - 1, 1 << 16]
        data = self.encode_symbols([0] * 10_000, cum, precision=16)
        assert 8 * len(data) <= 64 + 8 * 10_000 * (-np.log2(1 - 2.0**-16))

    def test_wide_state_round_trip_at_precision_20(self):
        cum = list(range(0, (1 << 20) + 1, 1 << 12))
        rng = np.random.default_rng(8)
        symbols = rng.integers(0, 256, size=3_000).tolist()
        data = self.encode_symbols(symbols, cum, precision=20)
        assert self.decode_symbols(data, len(symbols), cum, 20) == symbols
        assert abs(8 * len(data) - 8 * 3_000) <= 64

    def test_flush_is_two_bytes(self):
        enc = RangeEncoder(16)
        assert len(enc.finish()) == 2
        cum = list(range(257))
        data = self.encode_symbols([1, 2, 3], cum, precision=8)
        assert len(data) <= 3 + 2


class TestPayload:
    def test_round_trip_with_escapes(self):
        model, tables = make_tables(seed=10)
        rng = np.random.default_rng(11)
        latents = rng.integers(-4, 5, size=(50, 3))
        latents[0, 0] = 900  # far outside any table support
        latents[7, 2] = -1234
        payload = encode_payload(latents, tables)
        out = decode_payload(payload, tables, 50)
        np.testing.assert_array_equal(out, latents)

    def test_extreme_escape_values(self):
        _, tables = make_tables(seed=12)
        latents = np.array([[2**31 - 1, -(2**31), 0]], dtype=np.int64)
        out = decode_payload(encode_payload(latents, tables), tables, 1)
        np.testing.assert_array_equal(out, latents)

    def test_values_beyond_32_bits_rejected(self):
        _, tables = make_tables(seed=13)
        with pytest.raises(ShapeError, match="32 bits"):
            encode_payload(np.array([[2**31, 0, 0]], dtype=np.int64), tables)

    def test_shape_mismatch_rejected(self):
        _, tables = make_tables(seed=14)
        with pytest.raises(ShapeError):
            encode_payload(np.zeros((2, 5), dtype=np.int64), tables)

    @settings(max_examples=40, deadline=None)
    @given(st.data())
    def test_round_trip_property(self, data):
        _, tables = TABLES
        b = data.draw(st.integers(1, 12))
        flat = data.draw(
            st.lists(st.integers(-300, 300), min_size=3 * b, max_size=3 * b)
        )
        latents = np.array(flat, dtype=np.int64).reshape(b, 3)
        out = decode_payload(encode_payload(latents, tables), tables, b)
        np.testing.assert_array_equal(out, latents)


# Built once; hypothesis re-runs the property body many times.
TABLES = make_tables(seed=15)


class TestStreamFraming:
    def test_round_trip(self):
        _, tables = make_tables(seed=20)
        rng = np.random.default_rng(21)
        latents = rng.integers(-3, 4, size=(17, 3))
        out = decode(encode(latents, tables), tables)
        np.testing.assert_array_equal(out, latents)

    def test_header_validation(self):
        _, tables = make_tables(seed=22)
        stream = bytearray(encode(np.zeros((2, 3), dtype=np.int64), tables))
        with pytest.raises(DecodeError, match="magic"):
            decode(b"XXXX" + bytes(stream[4:]), tables)
        bad_version = bytearray(stream)
        bad_version[4] = 99
        with pytest.raises(DecodeError, match="version"):
            decode(bytes(bad_version), tables)
        with pytest.raises(DecodeError, match="shorter"):
            decode(bytes(stream[:6]), tables)
        with pytest.raises(DecodeError, match="length"):
            decode(bytes(stream) + b"\x00", tables)

    def test_table_mismatch_detected(self):
        _, tables3 = make_tables(seed=23, channels=3)
        _, tables2 = make_tables(seed=23, channels=2)
        _, tables_p12 = make_tables(seed=23, channels=3, precision=12)
        stream = encode(np.zeros((2, 3), dtype=np.int64), tables3)
        with pytest.raises(DecodeError, match="channels"):
            decode(stream, tables2)
        with pytest.raises(DecodeError, match="precision"):
            decode(stream, tables_p12)


class TestMeasureRate:
    def test_identity_pipeline_is_lossless_on_integers(self):
        model, tables = make_tables(seed=30, channels=4)
        t = identity_transform(4)
        rng = np.random.default_rng(31)
        x = rng.integers(-3, 4, size=(32, 4)).astype(np.float64)
        result = measure_rate(x, t, t, model, tables)
        assert result.mse == 0.0
        assert result.n_samples == 32
        assert result.n_escapes == 0
        assert result.bits_total == result.bits_per_sample * 32
        np.testing.assert_allclose(
            result.bits_per_dim, result.bits_per_sample / 4, rtol=1e-12
        )

    def test_escapes_are_counted(self):
        model, tables = make_tables(seed=32, channels=2)
        t = identity_transform(2)
        x = np.array([[500.0, 0.0], [0.0, -900.0], [1.0, 1.0]])
        result = measure_rate(x, t, t, model, tables)
        assert result.n_escapes == 2

    def test_rate_close_to_model_cross_entropy(self):
        """Measured bits per sample tracks the model's own codelength."""
        model, tables = make_tables(seed=33, channels=3)
        rng = np.random.default_rng(34)
        b = 4096
        cols = []
        for ch in tables.channels:
            p = ch.counts[:-1] / ch.counts[:-1].sum()
            values = np.arange(ch.y_min, ch.y_max + 1)
            cols.append(rng.choice(values, size=b, p=p))
        x = np.stack(cols, axis=1).astype(np.float64)
        t = identity_transform(3)
        result = measure_rate(x, t, t, model, tables)
        cross_entropy = model.rate_loss(x)
        assert abs(result.bits_per_sample - cross_entropy) <= 0.02 * cross_entropy
