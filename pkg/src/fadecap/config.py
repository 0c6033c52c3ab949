"""Declarative experiment configs: YAML schema validation and builders.

Every command takes a single YAML document.  Validation is strict: unknown
keys are rejected and every error names the offending field path, so a
config typo fails fast instead of silently running the wrong experiment.
Complex scalars are written as plain reals or as two-element [re, im]
lists.
"""

from __future__ import annotations

from typing import Any

import numpy as np
import yaml

from . import designs
from .mc import McConfig
from .model import (
    CanonicalRayleigh,
    ChannelModel,
    Constellation,
    CorrelatedRayleigh,
    Ricean,
    SnrGrid,
    SpaceTimeCode,
    make_constellation,
)

__all__ = ["ConfigError", "load_config", "validate_command_config"]


class ConfigError(ValueError):
    """Invalid configuration; `field` is the dotted path of the bad entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(path, f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(path, f"invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config document must be a mapping")
    return doc


def _require_keys(obj: dict, path: str, required: set[str], optional: set[str] = frozenset()):
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected a mapping")
    for key in obj:
        if key not in required and key not in optional:
            raise ConfigError(f"{path}.{key}", "unknown key")
    for key in required:
        if key not in obj:
            raise ConfigError(f"{path}.{key}", "missing required key")


def _number(obj, path, positive=False):
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise ConfigError(path, "expected a number")
    if positive and obj <= 0:
        raise ConfigError(path, "must be positive")
    return float(obj)


def _int(obj, path, minimum=None):
    if isinstance(obj, bool) or not isinstance(obj, int):
        raise ConfigError(path, "expected an integer")
    if minimum is not None and obj < minimum:
        raise ConfigError(path, f"must be >= {minimum}")
    return obj


def _complex_scalar(obj, path) -> complex:
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return complex(obj)
    if isinstance(obj, list) and len(obj) == 2 \
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
        return complex(obj[0], obj[1])
    raise ConfigError(path, "expected a real number or [re, im] pair")


def _complex_vector(obj, path) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        raise ConfigError(path, "expected a nonempty list")
    return np.array([_complex_scalar(v, f"{path}[{k}]") for k, v in enumerate(obj)])


def _complex_matrix(obj, path) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        raise ConfigError(path, "expected a nonempty list of rows")
    rows = [_complex_vector(r, f"{path}[{k}]") for k, r in enumerate(obj)]
    if len({r.size for r in rows}) != 1:
        raise ConfigError(path, "rows have inconsistent lengths")
    return np.vstack(rows)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_constellation(obj, path) -> Constellation:
    _require_keys(obj, path, {"family", "n_t"}, {"points"})
    family = obj["family"]
    if not isinstance(family, str):
        raise ConfigError(f"{path}.family", "expected a string")
    n_t = _int(obj["n_t"], f"{path}.n_t", minimum=1)
    points = None
    if family.lower() == "custom":
        if "points" not in obj:
            raise ConfigError(f"{path}.points", "custom constellation requires points")
        points = _complex_matrix(obj["points"], f"{path}.points")
    elif "points" in obj:
        raise ConfigError(f"{path}.points", "points only apply to the custom family")
    try:
        return make_constellation(family, n_t, points=points)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def build_channel(obj, path, n_t: int) -> ChannelModel:
    if not isinstance(obj, dict) or "variant" not in obj:
        raise ConfigError(f"{path}.variant", "missing channel variant")
    variant = obj["variant"]
    try:
        if variant == "rayleigh":
            _require_keys(obj, path, {"variant", "n_r"})
            return CanonicalRayleigh(n_t=n_t, n_r=_int(obj["n_r"], f"{path}.n_r", 1))
        if variant == "correlated":
            _require_keys(obj, path, {"variant", "theta_t", "theta_r"})
            model = CorrelatedRayleigh(
                theta_t=_complex_matrix(obj["theta_t"], f"{path}.theta_t"),
                theta_r=_complex_matrix(obj["theta_r"], f"{path}.theta_r"))
            if model.n_t != n_t:
                raise ConfigError(f"{path}.theta_t", "size does not match constellation n_t")
            return model
        if variant == "ricean":
            _require_keys(obj, path, {"variant", "k_factor", "a_t", "a_r"})
            model = Ricean(k_factor=_number(obj["k_factor"], f"{path}.k_factor"),
                           a_t=_complex_vector(obj["a_t"], f"{path}.a_t"),
                           a_r=_complex_vector(obj["a_r"], f"{path}.a_r"))
            if model.n_t != n_t:
                raise ConfigError(f"{path}.a_t", "length does not match constellation n_t")
            return model
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc
    raise ConfigError(f"{path}.variant",
                      f"unknown variant {variant!r} (rayleigh | correlated | ricean)")


def build_snr_grid(obj, path) -> SnrGrid:
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected a mapping")
    try:
        if "points" in obj:
            _require_keys(obj, path, {"points"})
            pts = obj["points"]
            if not isinstance(pts, list) or not pts:
                raise ConfigError(f"{path}.points", "expected a nonempty list of dB values")
            db = np.array([_number(v, f"{path}.points[{k}]") for k, v in enumerate(pts)])
            return SnrGrid(points=10.0 ** (db / 10.0))
        _require_keys(obj, path, {"start", "stop", "step"})
        return SnrGrid.from_db(_number(obj["start"], f"{path}.start"),
                               _number(obj["stop"], f"{path}.stop"),
                               _number(obj["step"], f"{path}.step", positive=True))
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def build_mc(obj, path, seed: int) -> McConfig:
    if obj is None:
        return McConfig(seed=seed)
    _require_keys(obj, path, set(), {"channel_draws", "noise_draws", "chunks"})
    return McConfig(
        channel_draws=_int(obj.get("channel_draws", 10_000), f"{path}.channel_draws", 1),
        noise_draws_per_channel=_int(obj.get("noise_draws", 100), f"{path}.noise_draws", 1),
        seed=seed,
        parallel_chunks=_int(obj.get("chunks", 8), f"{path}.chunks", 1))


def build_fading(obj, path):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"{path}.kind", "missing fading kind")
    try:
        if obj["kind"] == "rayleigh":
            _require_keys(obj, path, {"kind", "variance"})
            return designs.RayleighFading(variance=_number(obj["variance"],
                                                           f"{path}.variance", positive=True))
        if obj["kind"] == "ricean":
            _require_keys(obj, path, {"kind", "mean", "variance"})
            return designs.RiceanFading(
                mean=_complex_scalar(obj["mean"], f"{path}.mean"),
                variance=_number(obj["variance"], f"{path}.variance", positive=True))
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc
    raise ConfigError(f"{path}.kind", f"unknown fading kind {obj['kind']!r}")


def build_subchannel(obj, path) -> designs.SubchannelSpec:
    _require_keys(obj, path, {"family", "fading"}, {"points"})
    const_obj = {"family": obj["family"], "n_t": 1}
    if "points" in obj:
        const_obj["points"] = obj["points"]
    return designs.SubchannelSpec(
        constellation=build_constellation(const_obj, path),
        fading=build_fading(obj["fading"], f"{path}.fading"))


def build_spacetime(obj, path) -> tuple[str, SpaceTimeCode]:
    _require_keys(obj, path, {"name", "codewords"})
    name = obj["name"]
    if not isinstance(name, str) or not name:
        raise ConfigError(f"{path}.name", "expected a nonempty string")
    cw_obj = obj["codewords"]
    if not isinstance(cw_obj, list) or len(cw_obj) < 2:
        raise ConfigError(f"{path}.codewords", "expected a list of at least 2 matrices")
    mats = [_complex_matrix(m, f"{path}.codewords[{k}]") for k, m in enumerate(cw_obj)]
    if len({m.shape for m in mats}) != 1:
        raise ConfigError(f"{path}.codewords", "codewords have inconsistent shapes")
    try:
        return name, SpaceTimeCode(codewords=np.stack(mats))
    except ValueError as exc:
        raise ConfigError(f"{path}.codewords", str(exc)) from exc


# ---------------------------------------------------------------------------
# per-command validation
# ---------------------------------------------------------------------------

def validate_command_config(command: str, doc: dict, seed: int) -> dict[str, Any]:
    """Parse a command config into built objects; raises ConfigError."""
    if command == "curve":
        _require_keys(doc, "<root>", {"kind", "constellation", "channel", "snr_db"}, {"mc"})
        kind = doc["kind"]
        if kind not in ("mi", "mmse", "pe"):
            raise ConfigError("kind", f"unknown kind {kind!r} (mi | mmse | pe)")
        c = build_constellation(doc["constellation"], "constellation")
        return {
            "kind": kind,
            "constellation": c,
            "channel": build_channel(doc["channel"], "channel", c.n_t),
            "grid": build_snr_grid(doc["snr_db"], "snr_db"),
            "mc": build_mc(doc.get("mc"), "mc", seed),
        }
    if command == "offsets":
        _require_keys(doc, "<root>", {"systems", "anchor_snr_db"}, {"mc"})
        systems = doc["systems"]
        if not isinstance(systems, list) or not systems:
            raise ConfigError("systems", "expected a nonempty list")
        built = []
        for k, sys_obj in enumerate(systems):
            path = f"systems[{k}]"
            _require_keys(sys_obj, path, {"constellation", "channel"})
            c = build_constellation(sys_obj["constellation"], f"{path}.constellation")
            built.append({
                "constellation": c,
                "channel": build_channel(sys_obj["channel"], f"{path}.channel", c.n_t),
            })
        return {
            "systems": built,
            "anchor_snr": 10.0 ** (_number(doc["anchor_snr_db"], "anchor_snr_db") / 10.0),
            "mc": build_mc(doc.get("mc"), "mc", seed),
        }
    if command == "palloc":
        _require_keys(doc, "<root>", {"budget", "snr_db", "subchannels"}, {"numeric", "mc"})
        subs_obj = doc["subchannels"]
        if not isinstance(subs_obj, list) or not subs_obj:
            raise ConfigError("subchannels", "expected a nonempty list")
        subs = [build_subchannel(s, f"subchannels[{k}]") for k, s in enumerate(subs_obj)]
        numeric = doc.get("numeric", True)
        if not isinstance(numeric, bool):
            raise ConfigError("numeric", "expected a boolean")
        return {
            "budget": _number(doc["budget"], "budget", positive=True),
            "snr": 10.0 ** (_number(doc["snr_db"], "snr_db") / 10.0),
            "subchannels": subs,
            "numeric": numeric,
            "mc": build_mc(doc.get("mc"), "mc", seed),
        }
    if command == "precode":
        _require_keys(doc, "<root>", {"constellation", "n_r", "p_total", "channel"},
                      {"probes", "restarts"})
        c = build_constellation(doc["constellation"], "constellation")
        chan = doc["channel"]
        if not isinstance(chan, dict) or "variant" not in chan:
            raise ConfigError("channel.variant", "missing channel variant")
        n_r = _int(doc["n_r"], "n_r", 1)
        if chan["variant"] == "rayleigh":
            _require_keys(chan, "channel", {"variant"})
            theta = None
        elif chan["variant"] == "correlated":
            _require_keys(chan, "channel", {"variant", "theta_t", "theta_r"})
            theta = (_complex_matrix(chan["theta_t"], "channel.theta_t"),
                     _complex_matrix(chan["theta_r"], "channel.theta_r"))
        else:
            raise ConfigError("channel.variant",
                              f"unknown variant {chan['variant']!r} (rayleigh | correlated)")
        return {
            "constellation": c,
            "n_r": n_r,
            "p_total": _number(doc["p_total"], "p_total", positive=True),
            "theta": theta,
            "probes": _int(doc.get("probes", 200), "probes", 0),
            "restarts": _int(doc.get("restarts", 10), "restarts", 0),
        }
    if command == "stcode":
        _require_keys(doc, "<root>", {"n_r", "codebooks"}, {"confirm_pe"})
        books_obj = doc["codebooks"]
        if not isinstance(books_obj, list) or not books_obj:
            raise ConfigError("codebooks", "expected a nonempty list")
        books = [build_spacetime(b, f"codebooks[{k}]") for k, b in enumerate(books_obj)]
        confirm = None
        if "confirm_pe" in doc:
            conf_obj = doc["confirm_pe"]
            _require_keys(conf_obj, "confirm_pe", {"snr_db"}, {"mc"})
            confirm = {
                "snr": 10.0 ** (_number(conf_obj["snr_db"], "confirm_pe.snr_db") / 10.0),
                "mc": build_mc(conf_obj.get("mc"), "confirm_pe.mc", seed),
            }
        return {
            "n_r": _int(doc["n_r"], "n_r", 1),
            "codebooks": books,
            "confirm_pe": confirm,
        }
    raise ConfigError("<command>", f"unknown command {command!r}")
