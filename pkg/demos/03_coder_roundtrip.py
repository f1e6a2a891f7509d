"""Push symbols through the range coder and compare bits against the ideal.

A trained entropy model quantizes to integer count tables; the coder turns
symbols into a byte stream using those tables and back again. Arithmetic
coding should land within a couple of bytes of the ideal codelength
-sum log2 p regardless of stream length, and decoding must return the exact
input. The demo codes a skewed hand-made table and reports both.
"""

import numpy as np

from fedntc.codec import RangeDecoder, RangeEncoder


def main() -> None:
    rng = np.random.default_rng(5)
    precision = 12
    counts = np.array([2048, 1024, 512, 256, 156, 100], dtype=np.int64)
    assert counts.sum() == 1 << precision
    cum = np.concatenate([[0], np.cumsum(counts)])
    probs = counts / counts.sum()

    for n in (100, 10_000, 200_000):
        symbols = rng.choice(len(counts), size=n, p=probs)
        enc = RangeEncoder(precision)
        for s in symbols:
            enc.encode_symbol(int(cum[s]), int(cum[s + 1]))
        stream = enc.finish()

        dec = RangeDecoder(stream, precision)
        decoded = np.empty(n, dtype=np.int64)
        for i in range(n):
            target = dec.decode_target()
            s = int(np.searchsorted(cum, target, side="right")) - 1
            dec.consume(int(cum[s]), int(cum[s + 1]))
            decoded[i] = s

        ideal = float(-np.log2(probs[symbols]).sum())
        measured = 8 * len(stream)
        exact = "exact" if np.array_equal(decoded, symbols) else "MISMATCH"
        print(f"n={n:6d}  ideal {ideal:10.1f} bits   "
              f"coded {measured:7d} bits   overhead {measured - ideal:5.1f}   {exact}")


if __name__ == "__main__":
    main()
