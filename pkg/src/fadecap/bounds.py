"""Closed-form bounds at fixed channel realization, valid at every SNR.

All three measures are bounded through the ordered-pair received distances
d_ij^2(H): a genie that narrows the hypothesis set to two points gives the
lower bounds, while a minimum-distance detector / union bound gives the
upper bounds.  The resulting pairs have exact ratios (4(M-1) for MMSE,
M-1 for error probability) because upper and lower differ only in the
pair-averaging prefactor.

Channel-averaged versions are Monte Carlo means of the fixed-H bounds over
shared channel draws, which preserves the exact ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .asymptotics import BoundPair
from .mc import Estimate, McConfig, chunk_sizes, chunk_rngs
from .model import ChannelModel, Constellation, ordered_pair_differences, sample_channels

__all__ = [
    "BoundPair",
    "AveragedBoundPair",
    "mmse_bounds_fixed_h",
    "mi_bounds_fixed_h",
    "pe_bounds_fixed_h",
    "avg_bounds",
    "pair_distance_table",
]


def pair_distance_table(c: Constellation, h: np.ndarray) -> np.ndarray:
    """Ordered-pair received squared distances ||H(x_i - x_j)||^2, shape (M(M-1),).

    Precomputing this table lets a whole SNR grid reuse the O(M^2) work.
    """
    diffs = ordered_pair_differences(c)
    h = np.asarray(h, dtype=complex)
    rec = diffs @ h.T
    return np.sum(np.abs(rec) ** 2, axis=1)


def _pair_erfc(d2: np.ndarray, snr: float) -> np.ndarray:
    return 0.5 * erfc(np.sqrt(d2 * snr / 4.0))


def mmse_bounds_fixed_h(snr: float, h, c: Constellation,
                        d2_pairs: np.ndarray | None = None) -> BoundPair:
    """Estimation error of the noiseless receive point.  Upper/lower ratio
    is exactly 4(M-1)."""
    if snr <= 0:
        raise ValueError("snr must be positive")
    d2 = pair_distance_table(c, h) if d2_pairs is None else d2_pairs
    m = c.m
    core = float(np.sum(d2 * _pair_erfc(d2, snr)))
    return BoundPair(lower=core / (4.0 * m * (m - 1.0)), upper=core / m)


def mi_bounds_fixed_h(snr: float, h, c: Constellation,
                      d2_pairs: np.ndarray | None = None) -> BoundPair:
    """Mutual information in nats.  The lower bound can go negative at low
    SNR; it is reported raw rather than clamped."""
    if snr <= 0:
        raise ValueError("snr must be positive")
    d2 = pair_distance_table(c, h) if d2_pairs is None else d2_pairs
    m = c.m
    log_m = float(np.log(m))
    lower = log_m - float(np.sum(2.0 * np.exp(-d2 * snr / 4.0))) / m
    upper = log_m - float(np.sum(0.5 * _pair_erfc(d2, snr))) / (m * (m - 1.0))
    return BoundPair(lower=lower, upper=upper)


def pe_bounds_fixed_h(snr: float, h, c: Constellation,
                      d2_pairs: np.ndarray | None = None) -> BoundPair:
    """ML symbol error probability.  Upper/lower ratio is exactly M-1, so
    the bounds coincide for binary inputs.  The union upper bound may exceed
    one at low SNR and is reported raw."""
    if snr <= 0:
        raise ValueError("snr must be positive")
    d2 = pair_distance_table(c, h) if d2_pairs is None else d2_pairs
    m = c.m
    core = float(np.sum(_pair_erfc(d2, snr)))
    return BoundPair(lower=core / (m * (m - 1.0)), upper=core / m)


@dataclass(frozen=True)
class AveragedBoundPair:
    """Channel-averaged bound pair; both sides are Monte Carlo estimates
    computed from the same channel draws."""

    lower: Estimate
    upper: Estimate


_FIXED_H_FNS = {
    "mmse": mmse_bounds_fixed_h,
    "mi": mi_bounds_fixed_h,
    "pe": pe_bounds_fixed_h,
}


def avg_bounds(kind: str, snr: float, model: ChannelModel, c: Constellation,
               cfg: McConfig) -> AveragedBoundPair:
    """Monte Carlo average over the channel of the fixed-H bounds.

    Reusing the same draws for both sides keeps the exact fixed-H ratios
    (4(M-1) for mmse, M-1 for pe) intact in the averaged estimates.
    """
    if kind not in _FIXED_H_FNS:
        raise ValueError(f"unknown bound kind {kind!r}")
    if snr <= 0:
        raise ValueError("snr must be positive")
    diffs = ordered_pair_differences(c)
    m = c.m
    lowers = []
    uppers = []
    for size, rng in zip(chunk_sizes(cfg.channel_draws, cfg.parallel_chunks),
                         chunk_rngs(cfg.seed, cfg.parallel_chunks)):
        done = 0
        while done < size:
            batch = min(size - done, _batch_size(m))
            h = sample_channels(model, batch, rng)
            rec = np.einsum("pt,crt->cpr", diffs, h)
            d2 = np.sum(np.abs(rec) ** 2, axis=2)  # (batch, M(M-1))
            if kind == "mmse":
                core = np.sum(d2 * 0.5 * erfc(np.sqrt(d2 * snr / 4.0)), axis=1)
                lowers.append(core / (4.0 * m * (m - 1.0)))
                uppers.append(core / m)
            elif kind == "pe":
                core = np.sum(0.5 * erfc(np.sqrt(d2 * snr / 4.0)), axis=1)
                lowers.append(core / (m * (m - 1.0)))
                uppers.append(core / m)
            else:
                log_m = float(np.log(m))
                lowers.append(log_m - np.sum(2.0 * np.exp(-d2 * snr / 4.0), axis=1) / m)
                uppers.append(log_m - np.sum(0.25 * erfc(np.sqrt(d2 * snr / 4.0)), axis=1)
                              / (m * (m - 1.0)))
            done += batch
    lo = np.concatenate(lowers)
    up = np.concatenate(uppers)
    return AveragedBoundPair(lower=_estimate_from(lo), upper=_estimate_from(up))


def _estimate_from(samples: np.ndarray) -> Estimate:
    n = samples.size
    se = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean=float(np.mean(samples)), std_error=se, n_samples=n)


def _batch_size(m: int) -> int:
    # keep the (batch, M(M-1)) distance block around a few MB
    pairs = max(m * (m - 1), 1)
    return max(1, min(4096, int(2_000_000 / pairs)))
