"""Closed-form Gaussian rate-distortion references.

All rates are in bits. Per-source rates are means over dimensions (bits
per dimension), so curves for sources of different dimension are directly
comparable, and the centralized bound for a federation is the average of
its clients' water-filled rates under one shared water level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

BISECT_TOL = 1e-10


def gaussian_rd(variance: float, distortion: float) -> float:
    """R(D) = 0.5 log2(var / D) for 0 < D <= var, else 0; bits per use."""
    if variance < 0:
        raise DomainError(f"variance must be nonnegative, got {variance}")
    if distortion <= 0:
        raise DomainError(f"distortion must be positive, got {distortion}")
    if distortion >= variance:
        return 0.0
    return 0.5 * float(np.log2(variance / distortion))


@dataclass
class WaterfillResult:
    rate: float  # mean bits per dimension
    distortions: np.ndarray  # per-dimension D_j = min(theta, sigma_j^2)
    water_level: float


def _check_variances(variances) -> np.ndarray:
    v = np.ascontiguousarray(variances, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DomainError("variances must be a nonempty 1-D array")
    if (v < 0).any() or not np.all(np.isfinite(v)):
        raise DomainError("variances must be finite and nonnegative")
    return v


def reverse_waterfill(variances, total_distortion: float) -> WaterfillResult:
    """Parallel-Gaussian R(D): one water level theta with D_j = min(theta, sigma_j^2).

    total_distortion is the target mean of D_j over dimensions. Targets at
    or above the mean variance are free (zero rate, D_j = sigma_j^2).
    """
    v = _check_variances(variances)
    if total_distortion <= 0:
        raise DomainError(f"total distortion must be positive, got {total_distortion}")
    if total_distortion >= v.mean():
        return WaterfillResult(rate=0.0, distortions=v.copy(), water_level=float(v.max()))
    lo, hi = 0.0, float(v.max())
    while hi - lo > BISECT_TOL:
        theta = 0.5 * (lo + hi)
        if np.minimum(theta, v).mean() < total_distortion:
            lo = theta
        else:
            hi = theta
    theta = 0.5 * (lo + hi)
    d = np.minimum(theta, v)
    rate = float(np.mean([gaussian_rd(vi, di) for vi, di in zip(v, d)]))
    return WaterfillResult(rate=rate, distortions=d, water_level=theta)


def fed_rd(client_variances: list, total_distortion: float) -> WaterfillResult:
    """Centralized bound for a federation of independent Gaussian clients.

    Minimizes the client-averaged rate subject to the client-averaged
    distortion hitting the target. With per-client dimension weights the
    KKT water level is shared by every active dimension of every client,
    so this is one joint water-fill over the concatenated dimensions.
    """
    if not client_variances:
        raise DomainError("need at least one client")
    vs = [_check_variances(v) for v in client_variances]
    if total_distortion <= 0:
        raise DomainError(f"total distortion must be positive, got {total_distortion}")
    n = len(vs)
    weights = np.concatenate([np.full(v.size, 1.0 / (n * v.size)) for v in vs])
    flat = np.concatenate(vs)
    mean_var = float((weights * flat).sum())
    if total_distortion >= mean_var:
        return WaterfillResult(
            rate=0.0, distortions=flat.copy(), water_level=float(flat.max())
        )
    lo, hi = 0.0, float(flat.max())
    while hi - lo > BISECT_TOL:
        theta = 0.5 * (lo + hi)
        if float((weights * np.minimum(theta, flat)).sum()) < total_distortion:
            lo = theta
        else:
            hi = theta
    theta = 0.5 * (lo + hi)
    d = np.minimum(theta, flat)
    per_dim_rates = np.array([gaussian_rd(vi, di) for vi, di in zip(flat, d)])
    rate = float((weights * per_dim_rates).sum())
    return WaterfillResult(rate=rate, distortions=d, water_level=theta)


def latent_distortion(mixing: np.ndarray, z: np.ndarray, z_hat: np.ndarray) -> float:
    """Ambient-space squared error induced by a latent perturbation.

    Sources here are linear maps x = z @ mixing.T, so the distortion a
    reconstruction z_hat incurs in ambient space is the mean squared error
    between the two mapped points. For an orthogonal mixing matrix this
    equals the latent mean squared error exactly (the map is an isometry).
    """
    mixing = np.ascontiguousarray(mixing, dtype=np.float64)
    z = np.atleast_2d(np.ascontiguousarray(z, dtype=np.float64))
    z_hat = np.atleast_2d(np.ascontiguousarray(z_hat, dtype=np.float64))
    if z.shape != z_hat.shape:
        raise ShapeError(f"latent shapes differ: {z.shape} vs {z_hat.shape}")
    if mixing.ndim != 2 or mixing.shape[1] != z.shape[1]:
        raise ShapeError(
            f"mixing matrix {mixing.shape} does not accept latents of width {z.shape[1]}"
        )
    diff = (z - z_hat) @ mixing.T
    return float(np.mean(diff * diff))


@dataclass
class RdCurve:
    distortions: np.ndarray
    rates: np.ndarray
    label: str = ""


def sample_rd_curve(client_variances: list, grid: np.ndarray, label: str = "oracle") -> RdCurve:
    """Evaluate the federation bound on a distortion grid."""
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    rates = np.array([fed_rd(client_variances, float(d)).rate for d in grid])
    return RdCurve(distortions=grid.copy(), rates=rates, label=label)


def curve_to_csv(curve: RdCurve) -> str:
    lines = ["distortion,rate_bits_per_dim"]
    for d, r in zip(curve.distortions, curve.rates):
        lines.append(f"{float(d)!r},{float(r)!r}")
    return "\n".join(lines) + "\n"


def empirical_discrete_entropy(samples: np.ndarray) -> float:
    """Plug-in entropy of per-dimension histograms, mean bits per dimension."""
    s = np.ascontiguousarray(samples)
    if s.ndim != 2 or s.size == 0:
        raise DomainError("samples must be a nonempty [N, d] array")
    total = 0.0
    n = s.shape[0]
    for j in range(s.shape[1]):
        _, counts = np.unique(s[:, j], return_counts=True)
        p = counts / n
        total += float(-(p * np.log2(p)).sum())
    return total / s.shape[1]
