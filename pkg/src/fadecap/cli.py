"""Batch command-line front end: YAML experiment configs in, CSV out.

    fadecap curve|offsets|palloc|precode|stcode --config FILE --seed U64
            [--threads N] [--out FILE]

CSV files start with '#'-prefixed metadata (tool version, command, seed,
config digest) followed by a fixed header per command; numbers carry 12
significant digits.  Exit codes: 0 success, 2 config error, 3 numeric
failure, 4 flagged low-confidence result (output is still written).
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys

import numpy as np

from . import __version__, asymptotics, bounds, designs, mc
from .config import ConfigError, load_config, validate_command_config
from .model import CanonicalRayleigh, CorrelatedRayleigh, Ricean, SnrGrid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_FLAGGED = 4

LN2 = math.log(2.0)


class NumericFailure(RuntimeError):
    pass


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.12g}"
    return str(value)


def _write_csv(out_path, command, seed, digest, header, rows, meta=()):
    lines = [f"# fadecap {__version__}",
             f"# command: {command}",
             f"# seed: {seed}",
             f"# config_digest: {digest}"]
    lines.extend(f"# {m}" for m in meta)
    lines.append(",".join(header))
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    text = "\n".join(lines) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _report(out_path, text):
    stream = sys.stderr if out_path is None else sys.stdout
    stream.write(text + "\n")


def _distance_distribution(channel, constellation):
    if isinstance(channel, CanonicalRayleigh):
        return asymptotics.distance_dist_rayleigh(constellation, channel.n_r)
    if isinstance(channel, CorrelatedRayleigh):
        return asymptotics.distance_dist_correlated(constellation, channel.theta_t,
                                                    channel.theta_r)
    if isinstance(channel, Ricean):
        return asymptotics.distance_dist_ricean(constellation, channel.k_factor,
                                                channel.a_t, channel.a_r)
    raise NumericFailure(f"unsupported channel {type(channel)!r}")


def _channel_label(channel):
    if isinstance(channel, CanonicalRayleigh):
        return "rayleigh"
    if isinstance(channel, CorrelatedRayleigh):
        return "correlated"
    return "ricean"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

CURVE_HEADER = ["snr_db", "mc_mean", "mc_stderr", "bound_lb", "bound_ub",
                "expansion_lb", "expansion_ub",
                "mc_mean_bits", "mc_stderr_bits", "bound_lb_bits", "bound_ub_bits",
                "expansion_lb_bits", "expansion_ub_bits"]


def cmd_curve(cfg, seed, digest, out_path, threads):
    kind = cfg["kind"]
    c = cfg["constellation"]
    channel = cfg["channel"]
    grid: SnrGrid = cfg["grid"]
    mc_cfg = cfg["mc"]
    dd = _distance_distribution(channel, c)
    eb = asymptotics.epsilon_bounds(dd, c.m)
    curves = asymptotics.evaluate_expansion(eb, grid)
    rows = []
    flagged = False
    for idx, snr in enumerate(grid):
        est = mc.avg_all(snr, channel, c, mc_cfg, threads=threads)[kind]
        pair = bounds.avg_bounds(kind, snr, channel, c, mc_cfg)
        exp_lb = curves[f"{kind}_lb"][idx]
        exp_ub = curves[f"{kind}_ub"][idx]
        nats = [est.mean, est.std_error, pair.lower.mean, pair.upper.mean, exp_lb, exp_ub]
        if kind == "mi":
            bits = [v / LN2 for v in nats]
            gap_measured = eb.log_m_limit - est.mean
            gap_predicted = eb.mi.lower / snr ** eb.d
            if gap_predicted > 10.0 * max(gap_measured, 0.0):
                flagged = True
        else:
            bits = [math.nan] * 6
        rows.append([f"{10.0 * math.log10(snr):.12g}"] + nats + bits)
    meta = []
    if flagged:
        meta.append("flagged: expansion-predicted gap exceeds measured gap by >10x; "
                    "the leading term is not descriptive at these SNRs")
    _write_csv(out_path, "curve", seed, digest, CURVE_HEADER, rows, meta)
    return EXIT_FLAGGED if flagged else EXIT_OK


OFFSETS_HEADER = ["family", "n_t", "n_r", "channel", "m", "d",
                  "eps_hat", "eps_prime_hat",
                  "delta_lb_db", "delta_ub_db", "delta_prime_lb_db", "delta_prime_ub_db",
                  "spread_mmse_db", "spread_mi_db", "flagged"]


def cmd_offsets(cfg, seed, digest, out_path, threads):
    anchor = cfg["anchor_snr"]
    mc_cfg = cfg["mc"]
    rows = []
    any_flag = False
    for system in cfg["systems"]:
        c = system["constellation"]
        channel = system["channel"]
        dd = _distance_distribution(channel, c)
        eb = asymptotics.epsilon_bounds(dd, c.m)
        est = mc.avg_all(anchor, channel, c, mc_cfg, threads=threads)
        eps_hat = anchor ** (eb.d + 1) * est["mmse"].mean
        eps_se = anchor ** (eb.d + 1) * est["mmse"].std_error
        gap = eb.log_m_limit - est["mi"].mean
        eps_p_hat = anchor ** eb.d * gap
        eps_p_se = anchor ** eb.d * est["mi"].std_error
        flag = bool(eps_hat <= 0 or eps_p_hat <= 0
                    or eps_se > 0.2 * abs(eps_hat) or eps_p_se > 0.2 * abs(eps_p_hat))
        any_flag = any_flag or flag
        if eps_hat > 0 and eps_p_hat > 0:
            d_lb, d_ub, dp_lb, dp_ub = asymptotics.snr_offsets(eb, eps_hat, eps_p_hat)
        else:
            d_lb = d_ub = dp_lb = dp_ub = math.nan
        spread_mmse, spread_mi = asymptotics.analytic_spreads(eb.d, c.m)
        rows.append([c.family, c.n_t, channel.n_r, _channel_label(channel), c.m, eb.d,
                     eps_hat, eps_p_hat, d_lb, d_ub, dp_lb, dp_ub,
                     spread_mmse, spread_mi, flag])
    _write_csv(out_path, "offsets", seed, digest, OFFSETS_HEADER, rows)
    return EXIT_FLAGGED if any_flag else EXIT_OK


PALLOC_HEADER = ["subchannel", "p_highsnr", "p_numeric",
                 "mi_highsnr_nats", "mi_highsnr_bits",
                 "mi_numeric_nats", "mi_numeric_bits"]


def cmd_palloc(cfg, seed, digest, out_path, threads):
    subs = cfg["subchannels"]
    budget = cfg["budget"]
    snr = cfg["snr"]
    mc_cfg = cfg["mc"]
    kinds = {type(s.fading) for s in subs}
    if kinds == {designs.RayleighFading}:
        alloc = designs.palloc_rayleigh_highsnr(subs, budget)
    elif kinds == {designs.RiceanFading}:
        alloc = designs.palloc_ricean_highsnr(subs, budget)
    else:
        raise ConfigError("subchannels", "fading kinds must not be mixed")
    numeric = designs.palloc_numeric(subs, budget, snr, mc_cfg) if cfg["numeric"] else None
    cap_high = designs.subchannel_capacities(subs, alloc.p, snr, mc_cfg)
    cap_num = designs.subchannel_capacities(subs, numeric.p, snr, mc_cfg) \
        if numeric is not None else [math.nan] * len(subs)
    rows = []
    for k in range(len(subs)):
        p_num = numeric.p[k] if numeric is not None else math.nan
        rows.append([k, alloc.p[k], p_num,
                     cap_high[k], cap_high[k] / LN2,
                     cap_num[k], cap_num[k] / LN2 if not math.isnan(cap_num[k]) else math.nan])
    flagged = bool(numeric is not None and numeric.flagged)
    meta = ["flagged: MC noise is comparable to the objective differences"] if flagged else []
    _write_csv(out_path, "palloc", seed, digest, PALLOC_HEADER, rows, meta)
    lines = [f"high-snr allocation: {np.array2string(alloc.p, precision=6)}"]
    if numeric is not None:
        lines.append(f"numeric allocation:  {np.array2string(numeric.p, precision=6)}")
    lines.append(f"capacity (high-snr design): {sum(cap_high):.6f} nats "
                 f"= {sum(cap_high) / LN2:.6f} bits")
    if numeric is not None:
        lines.append(f"capacity (numeric design):  {sum(cap_num):.6f} nats "
                     f"= {sum(cap_num) / LN2:.6f} bits")
    _report(out_path, "\n".join(lines))
    return EXIT_FLAGGED if flagged else EXIT_OK


PRECODE_HEADER = ["method", "objective", "iterations", "stationarity_residual",
                  "probes_tested", "probes_worse", "best_probe_objective",
                  "restarts", "restart_spread", "max_angle_rad"]


def cmd_precode(cfg, seed, digest, out_path, threads):
    c = cfg["constellation"]
    n_r = cfg["n_r"]
    p_total = cfg["p_total"]
    rng = np.random.default_rng(seed)
    if cfg["theta"] is None:
        precoder, report = designs.precoder_canonical(c, n_r, p_total)
        worse = 0
        best_probe = math.inf
        for _ in range(cfg["probes"]):
            z = _random_feasible_gram(rng, c.n_t, p_total)
            val = designs.precoder_objective(z, c, n_r)
            best_probe = min(best_probe, val)
            if val >= report.objective - 1e-12:
                worse += 1
        row = [report.method, report.objective, report.iterations,
               report.stationarity_residual, cfg["probes"], worse,
               best_probe if cfg["probes"] else math.nan,
               math.nan, math.nan, math.nan]
        certified = worse == cfg["probes"]
        text = (f"precoder:\n{np.array2string(precoder.matrix, precision=6)}\n"
                f"objective {report.objective:.12g}; "
                f"{worse}/{cfg['probes']} random feasible probes are no better"
                + ("" if certified else " (CERTIFICATION FAILED)"))
        if not certified:
            raise NumericFailure("random probe beat the closed-form precoder")
    else:
        theta_t, theta_r = cfg["theta"]
        precoder, report = designs.precoder_correlated(c, theta_t, theta_r, n_r, p_total)
        objectives = [report.objective]
        for _ in range(cfg["restarts"]):
            z0 = _random_feasible_gram(rng, c.n_t, p_total)
            prec_k, rep_k = designs.precoder_correlated(c, theta_t, theta_r, n_r,
                                                        p_total, z0=z0)
            objectives.append(rep_k.objective)
            if rep_k.objective < report.objective:
                precoder, report = prec_k, rep_k
        spread = max(objectives) - min(objectives)
        max_angle = float(np.max(report.principal_angles))
        row = [report.method, report.objective, report.iterations,
               report.stationarity_residual, math.nan, math.nan, math.nan,
               cfg["restarts"], spread, max_angle]
        text = (f"precoder:\n{np.array2string(precoder.matrix, precision=6)}\n"
                f"objective {report.objective:.12g}; restart spread {spread:.3e}; "
                f"max alignment angle {max_angle:.3e} rad")
    _write_csv(out_path, "precode", seed, digest, PRECODE_HEADER, [row])
    _report(out_path, text)
    return EXIT_OK


def _random_feasible_gram(rng, n, budget):
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    z = g @ g.conj().T
    return z * (budget / np.trace(z).real)


STCODE_HEADER = ["name", "r_min", "criterion", "d", "certified", "pe_mean", "pe_stderr"]


def cmd_stcode(cfg, seed, digest, out_path, threads):
    n_r = cfg["n_r"]
    books = cfg["codebooks"]
    reports = [(name, designs.st_criteria(code, n_r)) for name, code in books]
    pe = {}
    if cfg["confirm_pe"] is not None:
        snr = cfg["confirm_pe"]["snr"]
        mc_cfg = cfg["confirm_pe"]["mc"]
        for name, code in books:
            est = mc.avg_all_spacetime(snr, code, n_r, mc_cfg, threads=threads)["pe"]
            pe[name] = est
    rows = []
    for name, rep in reports:
        est = pe.get(name)
        rows.append([name, rep.r_min, rep.criterion, rep.d, rep.certified,
                     est.mean if est else math.nan,
                     est.std_error if est else math.nan])
    _write_csv(out_path, "stcode", seed, digest, STCODE_HEADER, rows)
    order = sorted(range(len(books)),
                   key=lambda k: (-reports[k][1].r_min, reports[k][1].criterion))
    parts = [reports[order[0]][0]]
    for prev, cur in zip(order, order[1:]):
        cmp = designs.st_compare(books[prev][1], books[cur][1], n_r)
        parts.append(("= " if cmp == 0 else "> ") + reports[cur][0])
    _report(out_path, "ranking: " + " ".join(parts))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "curve": cmd_curve,
    "offsets": cmd_offsets,
    "palloc": cmd_palloc,
    "precode": cmd_precode,
    "stcode": cmd_stcode,
}


def _build_parser():
    parser = argparse.ArgumentParser(prog="fadecap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", required=True, type=int, help="MC seed (required)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker cap; does not change results")
        p.add_argument("--out", default=None, help="output CSV path (default stdout)")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        doc = load_config(args.config)
        digest = hashlib.sha256(open(args.config, "rb").read()).hexdigest()
        cfg = validate_command_config(args.command, doc, args.seed)
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](cfg, args.seed, digest, args.out,
                                       max(args.threads, 1))
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except (NumericFailure, designs.PrecoderConvergenceError, ValueError,
            np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numeric failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
