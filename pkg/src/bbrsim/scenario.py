"""Scenario configuration: JSON schema, validation, canonical
serialization.

A scenario names a bottleneck (a shaped rate or a full MAC-layer
configuration), one queue discipline, a set of flows, and integrator
settings.  Parsing is strict: unknown keys are rejected and every
validation failure names the offending key.  Serialization is canonical
(sorted keys, fixed float formatting) so a scenario hashes stably.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .aqm import AqmConfig, DISCIPLINES
from .engine import FlowSpec
from .errors import (DomainError, InvalidConfig, ParseError, UnknownKey,
                     ValidationError)
from .mac import MacConfig, StaClass

SHAPED = "shaped"
MAC_MODEL = "mac_model"


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-4
    output_cadence: float = 0.1


@dataclass(frozen=True)
class Bottleneck:
    mode: str = SHAPED
    rate_bps: float | None = 10e6
    mac: MacConfig | None = None


@dataclass(frozen=True)
class ReportConfig:
    steady_fraction: float = 0.2


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    integrator: IntegratorConfig
    bottleneck: Bottleneck
    aqm: AqmConfig
    flows: tuple[FlowSpec, ...]
    report: ReportConfig


def _require(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ValidationError(f"{key}: {msg}")


def _check_keys(obj: dict, allowed: set[str], path: str, strict: bool) -> None:
    if not strict:
        return
    for k in obj:
        if k not in allowed:
            raise UnknownKey(f"{path}.{k}" if path else k)


def _get_num(obj: dict, key: str, path: str, default=None):
    value = obj.get(key, default)
    if value is None:
        return None
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"{path}.{key}" if path else key, "must be a number")
    return float(value)


_MAC_KEYS = {
    "d_tfr_s": "d_tfr", "d_bsr_s": "d_bsr", "d_tf_s": "d_tf",
    "d_ppdu_s": "d_ppdu", "d_mb_s": "d_mb", "d_sifs_s": "d_sifs",
    "sigma_s": "sigma", "s_p_bits": "s_p", "s_h_bits": "s_h",
    "s_t_bits": "s_t", "t_r_bps": "t_r", "t_d_s": "t_d",
    "t_phy_mu_s": "t_phy_mu", "p_agg_max": "p_agg_max", "n_p": "n_p",
    "mbo": "mbo", "fbo": "fbo", "cw_min": "cw_min", "cw_max": "cw_max",
    "n_ra": "n_ra", "r_a": "r_a", "p_phy": "p_phy", "beta_ap": "beta_ap",
    "s_a": "s_a", "r_a_success": "r_a_success",
}
_MAC_INT_FIELDS = {"p_agg_max", "n_p", "mbo", "fbo", "cw_min", "cw_max",
                   "n_ra"}


def _parse_mac(obj: dict, path: str, strict: bool) -> MacConfig:
    allowed = set(_MAC_KEYS) | {"sta_classes"}
    _check_keys(obj, allowed, path, strict)
    kwargs = {}
    for key, fname in _MAC_KEYS.items():
        if key not in obj:
            continue
        value = obj[key]
        if fname in _MAC_INT_FIELDS:
            _require(isinstance(value, int) and not isinstance(value, bool),
                     f"{path}.{key}", "must be an integer")
            kwargs[fname] = value
        else:
            kwargs[fname] = _get_num(obj, key, path)
    classes = []
    for i, cls in enumerate(obj.get("sta_classes", [])):
        cpath = f"{path}.sta_classes[{i}]"
        _require(isinstance(cls, dict), cpath, "must be an object")
        _check_keys(cls, {"count", "beta"}, cpath, strict)
        _require(isinstance(cls.get("count"), int), f"{cpath}.count",
                 "must be an integer")
        beta = _get_num(cls, "beta", cpath) if "beta" in cls else None
        classes.append(StaClass(count=cls["count"], beta=beta))
    if classes:
        kwargs["sta_classes"] = tuple(classes)
    try:
        return MacConfig(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"{path}: missing required key ({exc})")
    except InvalidConfig as exc:
        raise ValidationError(f"{path}: {exc}")


_AQM_KEYS = {"discipline", "q_max_bits", "q_min_bits", "codel_target_s",
             "kappa_codel_bps", "fq_weights", "phi_host", "psi", "m_max",
             "sojourn_scale_s"}


def _parse_weight_map(obj: dict, key: str, path: str) -> dict:
    raw = obj.get(key)
    if raw is None:
        return {}
    _require(isinstance(raw, dict), f"{path}.{key}", "must be an object")
    out = {}
    for k, v in raw.items():
        _require(isinstance(v, (int, float)) and not isinstance(v, bool),
                 f"{path}.{key}.{k}", "must be a number")
        out[k] = float(v)
    return out


def _parse_aqm(obj: dict, path: str, strict: bool) -> AqmConfig:
    _check_keys(obj, _AQM_KEYS, path, strict)
    discipline = obj.get("discipline", "pfifo")
    _require(discipline in DISCIPLINES, f"{path}.discipline",
             f"must be one of {DISCIPLINES}")
    kwargs = {"discipline": discipline}
    q_max = _get_num(obj, "q_max_bits", path, AqmConfig.q_max)
    _require(q_max > 0, f"{path}.q_max_bits", "must be > 0")
    kwargs["q_max"] = q_max
    # Defaults resolve at parse time so serialization round-trips exactly.
    q_min = _get_num(obj, "q_min_bits", path, q_max / 2.0)
    _require(0 <= q_min < q_max, f"{path}.q_min_bits",
             f"must satisfy 0 <= q_min_bits < q_max_bits ({q_max})")
    kwargs["q_min"] = q_min
    target = _get_num(obj, "codel_target_s", path, AqmConfig.codel_target)
    _require(target > 0, f"{path}.codel_target_s", "must be > 0")
    kwargs["codel_target"] = target
    kappa = _get_num(obj, "kappa_codel_bps", path, AqmConfig.kappa_codel)
    _require(kappa >= 0, f"{path}.kappa_codel_bps", "must be >= 0")
    kwargs["kappa_codel"] = kappa
    m_max = _get_num(obj, "m_max", path, AqmConfig.m_max)
    _require(0 <= m_max <= 1, f"{path}.m_max", "must be in [0,1]")
    kwargs["m_max"] = m_max
    kwargs["sojourn_scale"] = _get_num(obj, "sojourn_scale_s", path,
                                       2.0 * target)
    kwargs["fq_weights"] = _parse_weight_map(obj, "fq_weights", path)
    kwargs["psi"] = _parse_weight_map(obj, "psi", path)
    if obj.get("phi_host") is not None:
        kwargs["phi_host"] = _parse_weight_map(obj, "phi_host", path)
    try:
        return AqmConfig(**kwargs)
    except InvalidConfig as exc:
        raise ValidationError(f"{path}: {exc}")


_FLOW_KEYS = {"id", "cca", "direction", "host", "prop_delay_s", "start_s",
              "stop_s", "weight"}


def _parse_flow(obj: dict, path: str, strict: bool) -> FlowSpec:
    _check_keys(obj, _FLOW_KEYS, path, strict)
    _require(isinstance(obj.get("id"), str) and obj["id"], f"{path}.id",
             "must be a non-empty string")
    kwargs = {"id": obj["id"]}
    if "cca" in obj:
        kwargs["cca"] = obj["cca"]
    if "direction" in obj:
        kwargs["direction"] = obj["direction"]
    if "host" in obj:
        _require(obj["host"] is None or isinstance(obj["host"], str),
                 f"{path}.host", "must be a string")
        kwargs["host"] = obj["host"]
    for key, fname in (("prop_delay_s", "prop_delay"), ("start_s", "start"),
                       ("weight", "weight")):
        value = _get_num(obj, key, path)
        if value is not None:
            kwargs[fname] = value
    if obj.get("stop_s") is not None:
        kwargs["stop"] = _get_num(obj, "stop_s", path)
    try:
        return FlowSpec(**kwargs)
    except DomainError as exc:
        raise ValidationError(f"{path}: {exc}")


_TOP_KEYS = {"name", "duration_s", "integrator", "bottleneck", "aqm",
             "flows", "report"}


def parse_scenario_dict(obj: dict, name: str = "scenario",
                        strict: bool = True) -> Scenario:
    """Validate a scenario dictionary and resolve all defaults."""
    _require(isinstance(obj, dict), "", "scenario must be a JSON object")
    _check_keys(obj, _TOP_KEYS, "", strict)
    if "name" in obj:
        _require(isinstance(obj["name"], str) and obj["name"], "name",
                 "must be a non-empty string")
        name = obj["name"]

    duration = _get_num(obj, "duration_s", "")
    _require(duration is not None, "duration_s", "is required")
    _require(duration > 0, "duration_s", "must be > 0")

    integ = obj.get("integrator", {})
    _require(isinstance(integ, dict), "integrator", "must be an object")
    _check_keys(integ, {"dt_s", "output_cadence_s"}, "integrator", strict)
    dt = _get_num(integ, "dt_s", "integrator", IntegratorConfig.dt)
    cadence = _get_num(integ, "output_cadence_s", "integrator",
                       IntegratorConfig.output_cadence)
    _require(dt > 0, "integrator.dt_s", "must be > 0")
    _require(duration > dt, "duration_s", "must exceed integrator.dt_s")
    _require(cadence >= dt, "integrator.output_cadence_s",
             "must be >= integrator.dt_s")

    bn = obj.get("bottleneck", {})
    _require(isinstance(bn, dict), "bottleneck", "must be an object")
    _check_keys(bn, {"mode", "rate_bps", "mac"}, "bottleneck", strict)
    mode = bn.get("mode", SHAPED)
    _require(mode in (SHAPED, MAC_MODEL), "bottleneck.mode",
             f"must be {SHAPED!r} or {MAC_MODEL!r}")
    if mode == SHAPED:
        rate = _get_num(bn, "rate_bps", "bottleneck", 10e6)
        _require(rate > 0, "bottleneck.rate_bps", "must be > 0")
        bottleneck = Bottleneck(mode=SHAPED, rate_bps=rate, mac=None)
    else:
        _require(isinstance(bn.get("mac"), dict), "bottleneck.mac",
                 "is required for mac_model mode")
        mac = _parse_mac(bn["mac"], "bottleneck.mac", strict)
        bottleneck = Bottleneck(mode=MAC_MODEL, rate_bps=None, mac=mac)

    aqm_obj = obj.get("aqm", {})
    _require(isinstance(aqm_obj, dict), "aqm", "must be an object")
    aqm_cfg = _parse_aqm(aqm_obj, "aqm", strict)

    flows_obj = obj.get("flows", [])
    _require(isinstance(flows_obj, list) and len(flows_obj) >= 1, "flows",
             "must be a non-empty list")
    flows = []
    seen = set()
    for i, fobj in enumerate(flows_obj):
        fpath = f"flows[{i}]"
        _require(isinstance(fobj, dict), fpath, "must be an object")
        flow = _parse_flow(fobj, fpath, strict)
        _require(flow.id not in seen, f"{fpath}.id",
                 f"duplicate flow id {flow.id!r}")
        seen.add(flow.id)
        _require(flow.start < duration, f"{fpath}.start_s",
                 "must precede duration_s")
        flows.append(flow)

    rep = obj.get("report", {})
    _require(isinstance(rep, dict), "report", "must be an object")
    _check_keys(rep, {"steady_fraction"}, "report", strict)
    steady = _get_num(rep, "steady_fraction", "report",
                      ReportConfig.steady_fraction)
    _require(0.0 < steady <= 1.0, "report.steady_fraction",
             "must be in (0, 1]")

    return Scenario(name=name, duration=duration,
                    integrator=IntegratorConfig(dt=dt, output_cadence=cadence),
                    bottleneck=bottleneck, aqm=aqm_cfg, flows=tuple(flows),
                    report=ReportConfig(steady_fraction=steady))


def parse_scenario(path, strict: bool = True) -> Scenario:
    """Load and validate a scenario JSON file."""
    import pathlib
    p = pathlib.Path(path)
    try:
        raw = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {p}: {exc}")
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{p}: {exc}")
    return parse_scenario_dict(obj, name=p.stem, strict=strict)


def _mac_to_dict(mac: MacConfig) -> dict:
    out = {}
    for key, fname in _MAC_KEYS.items():
        value = getattr(mac, fname)
        if value is not None:
            out[key] = value
    out["sta_classes"] = [
        {"count": c.count, **({"beta": c.beta} if c.beta is not None else {})}
        for c in mac.sta_classes]
    if not out["sta_classes"]:
        del out["sta_classes"]
    return out


def scenario_to_dict(s: Scenario) -> dict:
    """Fully-resolved dictionary form (round-trips through the parser)."""
    bn: dict = {"mode": s.bottleneck.mode}
    if s.bottleneck.mode == SHAPED:
        bn["rate_bps"] = s.bottleneck.rate_bps
    else:
        bn["mac"] = _mac_to_dict(s.bottleneck.mac)
    aqm: dict = {
        "discipline": s.aqm.discipline,
        "q_max_bits": s.aqm.q_max,
        "q_min_bits": s.aqm.ramp_start,
        "codel_target_s": s.aqm.codel_target,
        "kappa_codel_bps": s.aqm.kappa_codel,
        "m_max": s.aqm.m_max,
        "sojourn_scale_s": (s.aqm.sojourn_scale
                            if s.aqm.sojourn_scale is not None
                            else 2.0 * s.aqm.codel_target),
    }
    if s.aqm.fq_weights:
        aqm["fq_weights"] = dict(sorted(s.aqm.fq_weights.items()))
    if s.aqm.psi:
        aqm["psi"] = dict(sorted(s.aqm.psi.items()))
    if s.aqm.phi_host is not None:
        aqm["phi_host"] = dict(sorted(s.aqm.phi_host.items()))
    flows = []
    for f in s.flows:
        fobj = {
            "id": f.id,
            "cca": f.cca,
            "direction": f.direction,
            "prop_delay_s": f.prop_delay,
            "start_s": f.start,
            "weight": f.weight,
        }
        if f.host is not None:
            fobj["host"] = f.host
        if f.stop is not None:
            fobj["stop_s"] = f.stop
        flows.append(fobj)
    return {
        "name": s.name,
        "duration_s": s.duration,
        "integrator": {"dt_s": s.integrator.dt,
                       "output_cadence_s": s.integrator.output_cadence},
        "bottleneck": bn,
        "aqm": aqm,
        "flows": flows,
        "report": {"steady_fraction": s.report.steady_fraction},
    }


def scenario_to_json(s: Scenario) -> str:
    """Canonical serialization: sorted keys, two-space indent."""
    return json.dumps(scenario_to_dict(s), indent=2, sort_keys=True) + "\n"


def scenario_hash(s: Scenario) -> str:
    return hashlib.sha256(scenario_to_json(s).encode()).hexdigest()
