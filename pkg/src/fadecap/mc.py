"""Monte Carlo oracles for the exact averaged performance measures.

Estimates the averaged MMSE of the noiseless receive point, the averaged
mutual information (nats) and the averaged ML symbol error rate, plus the
scaled sequences used to extract expansion coefficients empirically.

Estimator identities, all driven by the per-hypothesis log weights
A_j = -||r_i - r_j||^2 - 2 Re<r_i - r_j, n> for true input i (r_m are the
noiseless receive points scaled by sqrt(snr), n ~ CN(0, I)):

  * mutual information: I = log M - (1/M) sum_i E_n logsumexp_j A_j
  * conditional mean:  E{Hx | y} = sum_j softmax_j(A) H x_j
  * ML detection errs iff max_j A_j > 0 (the true hypothesis has A_i = 0)

Only the noise is sampled at fixed H (no quadrature); channel averaging
adds an outer Monte Carlo stage whose per-channel means drive the reported
standard error.  Work is split into `parallel_chunks` independently seeded
chunks reduced in fixed order, so results are bit-reproducible for a given
(seed, config, inputs) and independent of worker scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import (
    ChannelModel,
    Constellation,
    SnrGrid,
    SpaceTimeCode,
    sample_channels,
)

__all__ = [
    "McConfig",
    "Estimate",
    "EpsilonPoint",
    "mmse_fixed_h",
    "mi_fixed_h",
    "pe_ml_fixed_h",
    "fixed_h_all",
    "avg_quantity",
    "avg_all",
    "avg_all_spacetime",
    "empirical_epsilon",
    "distance_squared_samples",
    "suggested_total_draws",
]

KINDS = ("mmse", "mi", "pe")


@dataclass(frozen=True)
class McConfig:
    """Sampling plan.  Results are a pure function of (config, inputs);
    changing `parallel_chunks` changes the reduction chunking and therefore
    may change low-order bits."""

    channel_draws: int = 10_000
    noise_draws_per_channel: int = 100
    seed: int = 0
    parallel_chunks: int = 8

    def __post_init__(self):
        if self.channel_draws < 1 or self.noise_draws_per_channel < 1:
            raise ValueError("draw counts must be >= 1")
        if self.parallel_chunks < 1:
            raise ValueError("parallel_chunks must be >= 1")


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n_samples: int

    def __post_init__(self):
        if not np.isfinite(self.mean):
            raise ValueError("estimate mean is not finite")
        if self.std_error < 0:
            raise ValueError("std_error must be >= 0")


def suggested_total_draws(gap_target: float) -> int:
    """Total sample count keeping the relative error of a gap-sized mean
    bounded: max(1e4, 10/gap)."""
    if gap_target <= 0:
        raise ValueError("gap_target must be positive")
    return int(max(1e4, 10.0 / gap_target))


def chunk_sizes(total: int, chunks: int) -> list[int]:
    """Balanced split of `total` into `chunks` parts (some may be zero)."""
    base, extra = divmod(total, chunks)
    return [base + (1 if k < extra else 0) for k in range(chunks)]


def chunk_rngs(seed: int, chunks: int) -> list[np.random.Generator]:
    """Independent per-chunk generators derived from (seed, chunk index)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(chunks)]


def _complex_noise(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


# ---------------------------------------------------------------------------
# core kernel
# ---------------------------------------------------------------------------

def kernel_stats(received: np.ndarray, noise: np.ndarray, snr: float):
    """Per-sample statistics for a batch of channels.

    received : (C, M, dim) complex noiseless receive points, sqrt(snr) included
    noise    : (C, N, dim) complex CN(0, I) draws
    Returns (mmse, lse, pe) arrays of shape (C, N), each already averaged
    over the M equiprobable transmit hypotheses.  The mutual information is
    log M - lse.  Overflow is handled by max-shifted exponentials.
    """
    c_sz, m, _ = received.shape
    n_sz = noise.shape[1]
    rr_ = np.ascontiguousarray(received.real)
    ri_ = np.ascontiguousarray(received.imag)
    rr_t = rr_.transpose(0, 2, 1)
    ri_t = ri_.transpose(0, 2, 1)
    g = noise.real @ rr_t + noise.imag @ ri_t          # (C, N, M): Re<r_m, n>
    gram = rr_ @ rr_t + ri_ @ ri_t                     # (C, M, M): Re<r_m, r_k>
    diag = np.einsum("cmm->cm", gram)
    nsq = diag[:, :, None] + diag[:, None, :] - 2.0 * gram
    np.maximum(nsq, 0.0, out=nsq)

    mmse = np.zeros((c_sz, n_sz))
    lse = np.zeros((c_sz, n_sz))
    pe = np.zeros((c_sz, n_sz))
    for i in range(m):
        a = -nsq[:, i, None, :] - 2.0 * (g[:, :, i:i + 1] - g)   # (C, N, M), a[..., i] = 0
        a_max = a.max(axis=2, keepdims=True)
        pe += (a_max[:, :, 0] > 0.0)
        np.subtract(a, a_max, out=a)
        ea = np.exp(a, out=a)
        s = ea.sum(axis=2)
        lse += a_max[:, :, 0] + np.log(s)
        cm_r = ea @ rr_ / s[:, :, None]
        cm_i = ea @ ri_ / s[:, :, None]
        cm_r -= rr_[:, i, None, :]
        cm_i -= ri_[:, i, None, :]
        mmse += np.sum(cm_r ** 2 + cm_i ** 2, axis=2)
    inv_m = 1.0 / m
    return mmse * (inv_m / snr), lse * inv_m, pe * inv_m


def _batch_channels(m: int, n_noise: int) -> int:
    # per-hypothesis logit block (batch, N, M) kept around 16 MB
    return max(8, min(4096, int(2_000_000 / max(m * n_noise, 1))))


def _estimate(samples: np.ndarray) -> Estimate:
    n = samples.size
    se = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean=float(np.mean(samples)), std_error=se, n_samples=n)


# ---------------------------------------------------------------------------
# fixed-channel estimators (noise-only Monte Carlo)
# ---------------------------------------------------------------------------

def _fixed_h_samples(snr: float, h: np.ndarray, c: Constellation, cfg: McConfig):
    """Per-noise-sample (mmse, lse, pe) values; total sample count is
    channel_draws * noise_draws_per_channel."""
    if snr <= 0:
        raise ValueError("snr must be positive")
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[1] != c.n_t:
        raise ValueError("H must have shape (n_r, n_t)")
    received = np.sqrt(snr) * (c.points @ h.T)[None, :, :]   # (1, M, n_r)
    total = cfg.channel_draws * cfg.noise_draws_per_channel
    noise_batch = max(256, int(2_000_000 / max(c.m, 1)))
    out = {k: [] for k in KINDS}
    for size, rng in zip(chunk_sizes(total, cfg.parallel_chunks),
                         chunk_rngs(cfg.seed, cfg.parallel_chunks)):
        done = 0
        while done < size:
            batch = min(size - done, noise_batch)
            noise = _complex_noise(rng, (1, batch, h.shape[0]))
            mmse, lse, pe = kernel_stats(received, noise, snr)
            out["mmse"].append(mmse[0])
            out["mi"].append(lse[0])
            out["pe"].append(pe[0])
            done += batch
    return {k: np.concatenate(v) for k, v in out.items()}


def fixed_h_all(snr: float, h, c: Constellation, cfg: McConfig) -> dict[str, Estimate]:
    """All three fixed-H estimates from one shared pass."""
    samples = _fixed_h_samples(snr, h, c, cfg)
    est = {k: _estimate(v) for k, v in samples.items()}
    mi = est["mi"]
    est["mi"] = Estimate(mean=c.log_m - mi.mean, std_error=mi.std_error,
                         n_samples=mi.n_samples)
    return est


def mmse_fixed_h(snr: float, h, c: Constellation, cfg: McConfig) -> Estimate:
    """E||Hx - H E{x|y}||^2 at fixed H."""
    return fixed_h_all(snr, h, c, cfg)["mmse"]


def mi_fixed_h(snr: float, h, c: Constellation, cfg: McConfig) -> Estimate:
    """I(x; sqrt(snr) H x + n) at fixed H, in nats."""
    return fixed_h_all(snr, h, c, cfg)["mi"]


def pe_ml_fixed_h(snr: float, h, c: Constellation, cfg: McConfig) -> Estimate:
    """Minimum-distance (ML) symbol error probability at fixed H."""
    return fixed_h_all(snr, h, c, cfg)["pe"]


# ---------------------------------------------------------------------------
# channel-averaged estimators
# ---------------------------------------------------------------------------

def _avg_samples(snr: float, received_factory, dim: int, cfg: McConfig,
                 m: int, threads: int = 1):
    """Outer Monte Carlo over channel draws.

    ``received_factory(rng, batch)`` must return (batch, M, dim) noiseless
    receive points with the sqrt(snr) scale included.  Returns per-channel
    mean arrays for the three measures, concatenated in chunk order.
    """
    n_noise = cfg.noise_draws_per_channel

    def run_chunk(args):
        size, rng = args
        res = {k: [] for k in KINDS}
        done = 0
        while done < size:
            batch = min(size - done, _batch_channels(m, n_noise))
            received = received_factory(rng, batch)
            noise = _complex_noise(rng, (batch, n_noise, dim))
            mmse, lse, pe = kernel_stats(received, noise, snr)
            res["mmse"].append(mmse.mean(axis=1))
            res["mi"].append(lse.mean(axis=1))
            res["pe"].append(pe.mean(axis=1))
            done += batch
        return {k: (np.concatenate(v) if v else np.empty(0)) for k, v in res.items()}

    jobs = list(zip(chunk_sizes(cfg.channel_draws, cfg.parallel_chunks),
                    chunk_rngs(cfg.seed, cfg.parallel_chunks)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(jobs))) as ex:
            chunk_results = list(ex.map(run_chunk, jobs))
    else:
        chunk_results = [run_chunk(j) for j in jobs]
    return {k: np.concatenate([r[k] for r in chunk_results]) for k in KINDS}


def avg_all(snr: float, model: ChannelModel, c: Constellation, cfg: McConfig,
            threads: int = 1) -> dict[str, Estimate]:
    """Averaged (mmse, mi, pe) estimates sharing one set of channel draws."""
    if snr <= 0:
        raise ValueError("snr must be positive")
    if model.n_t != c.n_t:
        raise ValueError("channel and constellation transmit sizes differ")
    points = c.points
    root_snr = np.sqrt(snr)

    def factory(rng, batch):
        h = sample_channels(model, batch, rng)
        return root_snr * np.einsum("mt,crt->cmr", points, h)

    per_channel = _avg_samples(snr, factory, model.n_r, cfg, c.m, threads)
    est = {k: _estimate(v) for k, v in per_channel.items()}
    mi = est["mi"]
    est["mi"] = Estimate(mean=c.log_m - mi.mean, std_error=mi.std_error,
                         n_samples=mi.n_samples)
    return est


def avg_quantity(kind: str, snr: float, model: ChannelModel, c: Constellation,
                 cfg: McConfig, threads: int = 1) -> Estimate:
    """Averaged estimate of one measure; kind in {mmse, mi, pe}."""
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    return avg_all(snr, model, c, cfg, threads)[kind]


def avg_all_spacetime(snr: float, code: SpaceTimeCode, n_r: int, cfg: McConfig,
                      threads: int = 1) -> dict[str, Estimate]:
    """Averaged measures for codeword matrices over t symbol intervals under
    i.i.d. fading constant within a codeword; receive points live in C^(n_r t)."""
    if snr <= 0:
        raise ValueError("snr must be positive")
    if n_r < 1:
        raise ValueError("n_r must be >= 1")
    from .model import CanonicalRayleigh
    model = CanonicalRayleigh(n_t=code.n_t, n_r=n_r)
    cw = code.codewords
    dim = n_r * code.t
    root_snr = np.sqrt(snr)

    def factory(rng, batch):
        h = sample_channels(model, batch, rng)
        rec = np.einsum("crt,mts->cmrs", h, cw)
        return root_snr * rec.reshape(batch, code.m, dim)

    per_channel = _avg_samples(snr, factory, dim, cfg, code.m, threads)
    est = {k: _estimate(v) for k, v in per_channel.items()}
    mi = est["mi"]
    est["mi"] = Estimate(mean=code.log_m - mi.mean, std_error=mi.std_error,
                         n_samples=mi.n_samples)
    return est


# ---------------------------------------------------------------------------
# empirical expansion coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpsilonPoint:
    """One grid point of the scaled sequence snr^a * measure.  ``flagged``
    marks points whose Monte Carlo error exceeds 20% of the scaled value --
    the gap is below MC resolution there, not a fault."""

    snr: float
    value: float
    std_error: float
    flagged: bool
    residual: float | None = None


def empirical_epsilon(kind: str, grid: SnrGrid, model: ChannelModel,
                      c: Constellation, cfg: McConfig, d: int,
                      log_m_limit: float | None = None,
                      leading: float | None = None,
                      threads: int = 1) -> list[EpsilonPoint]:
    """Scaled sequences whose limits are the expansion coefficients:
    snr^(d+1) * mmse, snr^d * (log M - mi) or snr^d * pe per grid point.

    ``log_m_limit`` overrides the infinite-SNR mutual-information limit for
    degenerate channels.  If ``leading`` is supplied, each point also
    carries the next-order residual obtained by subtracting the leading
    term (exploratory; the residual inherits the scaled MC noise).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if d < 1:
        raise ValueError("diversity order d must be >= 1")
    limit = c.log_m if log_m_limit is None else float(log_m_limit)
    points = []
    for snr in grid:
        est = avg_quantity(kind, snr, model, c, cfg, threads)
        if kind == "mmse":
            scale = snr ** (d + 1)
            raw = est.mean
        elif kind == "mi":
            scale = snr ** d
            raw = limit - est.mean
        else:
            scale = snr ** d
            raw = est.mean
        value = scale * raw
        se = scale * est.std_error
        flagged = (value <= 0.0) or (se > 0.2 * abs(value))
        residual = None
        if leading is not None:
            residual = snr * (value - leading)
        points.append(EpsilonPoint(snr=float(snr), value=float(value),
                                   std_error=float(se), flagged=bool(flagged),
                                   residual=residual))
    return points


# ---------------------------------------------------------------------------
# empirical distance densities
# ---------------------------------------------------------------------------

def distance_squared_samples(model: ChannelModel, diff, n: int, seed: int,
                             chunks: int = 8) -> np.ndarray:
    """`n` draws of ||H diff||^2 for a fixed difference vector.

    Used to validate the analytic density behavior at zero against an
    empirical histogram near the origin.
    """
    diff = np.asarray(diff, dtype=complex).ravel()
    if diff.size != model.n_t:
        raise ValueError("difference vector length must equal n_t")
    out = []
    for size, rng in zip(chunk_sizes(n, chunks), chunk_rngs(seed, chunks)):
        done = 0
        while done < size:
            batch = min(size - done, 100_000)
            h = sample_channels(model, batch, rng)
            rec = h @ diff
            out.append(np.sum(np.abs(rec) ** 2, axis=1))
            done += batch
    return np.concatenate(out)
