"""Per-channel factorized entropy model over integer-quantized latents.

Each channel gets an independent learned CDF c(x) = sigmoid(f_K(...f_1(x))),
where every stage f_k(u) = g_k(softplus(H_k) u + b_k) uses a nonnegative
matrix (softplus of a raw parameter) and, on all but the last stage, a
bounded gate g(u) = u + tanh(a) * tanh(u). Monotonicity in x holds by
construction for any parameter values, so the discrete probability
c(v + 1/2) - c(v - 1/2) of an integer symbol is always nonnegative.

Gradients are hand-written reverse passes over the stage chain; the
likelihood backward routes through sigmoid'(t) = sigmoid(t)(1 - sigmoid(t))
on the raw upper/lower logits, which is independent of the sign flip used
to keep the forward difference numerically stable in the tails.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ShapeError, TableError
from .nn import as_tensor

LIKELIHOOD_FLOOR = 1e-9
LOG2 = np.log(2.0)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


@dataclass
class ChannelTable:
    """Integer CDF for one channel: support [y_min, y_max] plus an escape slot."""

    y_min: int
    y_max: int
    counts: np.ndarray  # int64, one per symbol, escape last, each >= 1
    cum: np.ndarray  # int64, length n_symbols + 1, cum[-1] == 2**precision

    @property
    def n_symbols(self) -> int:
        return len(self.counts)

    @property
    def escape_index(self) -> int:
        return self.n_symbols - 1

    def symbol_for_value(self, v: int) -> int:
        if self.y_min <= v <= self.y_max:
            return int(v) - self.y_min
        return self.escape_index

    def value_for_symbol(self, s: int) -> int:
        # Escape carries no value; callers read the raw payload instead.
        return self.y_min + s


@dataclass
class CdfTable:
    """Per-channel integer CDF tables sharing one total of 2**precision."""

    precision: int
    tail_mass: float
    channels: list[ChannelTable]

    @property
    def total(self) -> int:
        return 1 << self.precision


class FactorizedEntropyModel:
    """Independent learned CDFs for `channels` latent channels.

    filters gives the hidden widths of the CDF chain; the full width chain
    is (1, *filters, 1). init_scale sets the spread of the initial density
    (1.0 starts near a unit-scale logistic).
    """

    def __init__(
        self,
        channels: int,
        filters: tuple[int, ...] = (3, 3, 3),
        init_scale: float = 1.0,
        rng: np.random.Generator | None = None,
    ):
        if channels < 1:
            raise ShapeError("entropy model needs at least one channel")
        if any(f < 1 for f in filters):
            raise ShapeError("entropy model filter widths must be positive")
        if rng is None:
            rng = np.random.default_rng(0)
        self.channels = channels
        self.filters = tuple(int(f) for f in filters)
        self.init_scale = float(init_scale)
        widths = (1,) + self.filters + (1,)
        self.n_stages = len(widths) - 1
        scale = self.init_scale ** (1.0 / self.n_stages)
        self._matrices: list[np.ndarray] = []
        self._biases: list[np.ndarray] = []
        self._factors: list[np.ndarray] = []
        for k in range(self.n_stages):
            w_in, w_out = widths[k], widths[k + 1]
            init = np.log(np.expm1(1.0 / (scale * w_out)))
            self._matrices.append(np.full((channels, w_out, w_in), init, dtype=np.float64))
            self._biases.append(rng.uniform(-0.5, 0.5, size=(channels, w_out)))
            if k < self.n_stages - 1:
                self._factors.append(np.zeros((channels, w_out)))

    # -- parameter plumbing ----------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for k in range(self.n_stages):
            out[f"matrix{k}"] = self._matrices[k]
            out[f"bias{k}"] = self._biases[k]
            if k < self.n_stages - 1:
                out[f"factor{k}"] = self._factors[k]
        return out

    def load_parameters(self, params: dict[str, np.ndarray]) -> None:
        own = self.parameters()
        for name, arr in own.items():
            if name not in params:
                raise ShapeError(f"missing parameter {name}")
            src = as_tensor(params[name])
            if src.shape != arr.shape:
                raise ShapeError(
                    f"parameter {name} has shape {src.shape}, expected {arr.shape}"
                )
            arr[...] = src

    def copy(self) -> "FactorizedEntropyModel":
        clone = FactorizedEntropyModel(
            self.channels, self.filters, self.init_scale, np.random.default_rng(0)
        )
        clone.load_parameters(self.parameters())
        return clone

    # -- forward chain ----------------------------------------------------

    def _check_batch(self, x: np.ndarray) -> np.ndarray:
        x = as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.channels:
            raise ShapeError(
                f"entropy model expects [B, {self.channels}] input, got {x.shape}"
            )
        return x

    def _logits_cached(self, x: np.ndarray):
        """Chain forward on [B, C]; returns (logits [B, C], stage caches)."""
        u = x[:, :, None]  # [B, C, w]
        caches = []
        for k in range(self.n_stages):
            h = softplus(self._matrices[k])  # [C, w_out, w_in]
            a = np.einsum("cow,bcw->bco", h, u) + self._biases[k][None]
            if k < self.n_stages - 1:
                ta = np.tanh(a)
                tf = np.tanh(self._factors[k])
                out = a + tf[None] * ta
                caches.append((u, a, ta, tf))
            else:
                out = a
                caches.append((u, a, None, None))
            u = out
        return u[:, :, 0], caches

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = self._check_batch(x)
        logits, _ = self._logits_cached(x)
        return logits

    def _logits_backward(self, caches, d_logits: np.ndarray, grads: dict[str, np.ndarray]):
        """Accumulate parameter grads from d_logits [B, C]; returns d_input [B, C]."""
        d_u = d_logits[:, :, None]
        for k in range(self.n_stages - 1, -1, -1):
            u_in, a, ta, tf = caches[k]
            if ta is not None:
                # out = a + tanh(f) * tanh(a)
                grads[f"factor{k}"] += (d_u * ta).sum(axis=0) * (1.0 - tf**2)
                d_a = d_u * (1.0 + tf[None] * (1.0 - ta**2))
            else:
                d_a = d_u
            h = softplus(self._matrices[k])
            grads[f"matrix{k}"] += np.einsum("bco,bcw->cow", d_a, u_in) * expit(
                self._matrices[k]
            )
            grads[f"bias{k}"] += d_a.sum(axis=0)
            d_u = np.einsum("cow,bco->bcw", h, d_a)
        return d_u[:, :, 0]

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(p) for name, p in self.parameters().items()}

    # -- public densities -------------------------------------------------

    def cumulative(self, x: np.ndarray, channel: int | None = None) -> np.ndarray:
        """CDF values in [0, 1]; x is [B] with a channel index, or [B, C]."""
        if channel is not None:
            if not 0 <= channel < self.channels:
                raise ShapeError(f"channel {channel} out of range [0, {self.channels})")
            x = as_tensor(x)
            if x.ndim != 1:
                raise ShapeError("per-channel cumulative expects a 1-D probe array")
            full = np.zeros((x.shape[0], self.channels))
            full[:, channel] = x
            logits, _ = self._logits_cached(full)
            return expit(logits[:, channel])
        logits = self.logits(x)
        return expit(logits)

    def likelihood(self, v: np.ndarray) -> np.ndarray:
        """P(round(y) = v) per entry: c(v + 1/2) - c(v - 1/2), in [0, 1]."""
        v = self._check_batch(v)
        up, _ = self._logits_cached(v + 0.5)
        lo, _ = self._logits_cached(v - 0.5)
        # Sign flip keeps the difference away from 1 - 1 cancellation in the
        # tails: both operands are mapped to the small-probability side.
        sign = -np.sign(up + lo)
        return np.abs(expit(sign * up) - expit(sign * lo))

    def rate_loss(self, v: np.ndarray) -> float:
        """Mean over batch of summed per-channel code length, in bits/sample."""
        p = self.likelihood(v)
        p = np.maximum(p, LIKELIHOOD_FLOOR)
        return float(-np.log2(p).sum(axis=1).mean())

    def rate_loss_with_grads(self, v: np.ndarray):
        """Returns (loss, parameter grads, d_loss/d_v).

        Floored likelihood entries contribute zero gradient (straight clamp).
        """
        v = self._check_batch(v)
        b = v.shape[0]
        up, cache_up = self._logits_cached(v + 0.5)
        lo, cache_lo = self._logits_cached(v - 0.5)
        sign = -np.sign(up + lo)
        p = np.abs(expit(sign * up) - expit(sign * lo))
        floored = p < LIKELIHOOD_FLOOR
        p_safe = np.maximum(p, LIKELIHOOD_FLOOR)
        loss = float(-np.log2(p_safe).sum(axis=1).mean())
        # d loss / d p, zero where the clamp is active.
        d_p = np.where(floored, 0.0, -1.0 / (LOG2 * p_safe * b))
        # d p / d up = sigmoid'(up), d p / d lo = -sigmoid'(lo); the sign trick
        # cancels because sigmoid' is even.
        s_up = expit(up)
        s_lo = expit(lo)
        grads = self.zero_grads()
        d_in_up = self._logits_backward(cache_up, d_p * s_up * (1.0 - s_up), grads)
        d_in_lo = self._logits_backward(cache_lo, -d_p * s_lo * (1.0 - s_lo), grads)
        return loss, grads, d_in_up + d_in_lo

    # -- integer CDF tables ----------------------------------------------

    def _cdf_vec(self, xs: np.ndarray) -> np.ndarray:
        """CDF of each channel at its own probe; xs and result are [C]."""
        logits, _ = self._logits_cached(xs[None, :].astype(np.float64))
        return expit(logits[0])

    def _find_support(self, tail: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-channel integer interval (always containing 0) whose complement
        carries CDF mass <= tail/2 on each side. All channels are searched in
        lockstep so every probe is one chain evaluation."""
        limit = 1 << 31
        half = tail / 2.0
        c = self.channels
        # Bracket downward: largest power-of-two walk until mass below is small.
        lo = np.zeros(c, dtype=np.int64)
        step = np.ones(c, dtype=np.int64)
        while True:
            mass = self._cdf_vec(lo - 0.5)
            need = mass > half
            if not need.any():
                break
            lo[need] -= step[need]
            step[need] *= 2
            if (lo < -limit).any():
                raise TableError("support search ran past -2^31; model too wide")
        hi = np.zeros(c, dtype=np.int64)
        step = np.ones(c, dtype=np.int64)
        while True:
            mass = 1.0 - self._cdf_vec(hi + 0.5)
            need = mass > half
            if not need.any():
                break
            hi[need] += step[need]
            step[need] *= 2
            if (hi > limit).any():
                raise TableError("support search ran past 2^31; model too wide")
        # Tighten: largest y_min in [lo, 0] with mass below still <= tail/2.
        a, b = lo, np.zeros(c, dtype=np.int64)
        while (a < b).any():
            mid = (a + b + 1) // 2
            ok = self._cdf_vec(mid - 0.5) <= half
            active = a < b
            a = np.where(active & ok, mid, a)
            b = np.where(active & ~ok, mid - 1, b)
        y_min = a
        # Smallest y_max in [0, hi] with mass above <= tail/2.
        a, b = np.zeros(c, dtype=np.int64), hi
        while (a < b).any():
            mid = (a + b) // 2
            ok = (1.0 - self._cdf_vec(mid + 0.5)) <= half
            active = a < b
            b = np.where(active & ok, mid, b)
            a = np.where(active & ~ok, mid + 1, a)
        y_max = b
        return y_min, y_max

    def build_cdf_table(self, precision: int = 16, tail_mass: float = 2.0**-8) -> CdfTable:
        """Quantize each channel's density to integer counts summing to 2**precision.

        Every in-support symbol and the escape slot keep a count of at least
        one, so any integer remains codable; counts are assigned by largest
        remainder, with the minimum-count fix-up taken from the largest
        symbol.
        """
        if not 8 <= precision <= 24:
            raise TableError(f"precision must be in [8, 24], got {precision}")
        if not 0.0 < tail_mass < 1.0:
            raise TableError(f"tail_mass must be in (0, 1), got {tail_mass}")
        total = 1 << precision
        y_mins, y_maxs = self._find_support(tail_mass)
        widths = y_maxs - y_mins + 1
        if (widths + 1 >= total).any():
            worst = int(widths.argmax())
            raise TableError(
                f"channel {worst}: support of {int(widths[worst])} symbols cannot "
                f"fit a {precision}-bit table"
            )
        # One chain evaluation covers every channel's support grid; rows past a
        # channel's own width are evaluated but discarded.
        max_w = int(widths.max())
        grid = y_mins[None, :] + np.arange(max_w)[:, None].astype(np.float64)
        grid = np.minimum(grid, y_maxs[None, :].astype(np.float64))
        upper_all = self.cumulative(grid + 0.5)
        lower_all = self.cumulative(grid - 0.5)
        channels = []
        for c in range(self.channels):
            y_min = int(y_mins[c])
            y_max = int(y_maxs[c])
            n_support = int(widths[c])
            p = np.maximum(upper_all[:n_support, c] - lower_all[:n_support, c], 0.0)
            p_escape = max(0.0, 1.0 - float(p.sum()))
            p_full = np.concatenate([p, [p_escape]])
            p_full = p_full / p_full.sum()
            raw = p_full * total
            counts = np.floor(raw).astype(np.int64)
            deficit = total - int(counts.sum())
            if deficit > 0:
                order = np.argsort(-(raw - counts), kind="stable")
                counts[order[:deficit]] += 1
            elif deficit < 0:
                order = np.argsort(-counts, kind="stable")
                for idx in order[: -deficit]:
                    counts[idx] -= 1
            # Minimum-count fix-up: every symbol stays codable.
            short = counts < 1
            need = int((1 - counts[short]).sum())
            counts[short] = 1
            while need > 0:
                top = int(counts.argmax())
                take = min(need, int(counts[top]) - 1)
                if take <= 0:
                    raise TableError(
                        f"channel {c}: cannot keep {len(counts)} symbols at count >= 1 "
                        f"in a {precision}-bit table"
                    )
                counts[top] -= take
                need -= take
            cum = np.zeros(len(counts) + 1, dtype=np.int64)
            np.cumsum(counts, out=cum[1:])
            channels.append(
                ChannelTable(y_min=int(y_min), y_max=int(y_max), counts=counts, cum=cum)
            )
        return CdfTable(precision=precision, tail_mass=tail_mass, channels=channels)
