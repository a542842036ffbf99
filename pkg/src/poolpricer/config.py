"""Run configuration: a single JSON document merged over defaults."""
from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import InvalidInputError
from .population import DEFAULT_CLASSES, BehaviouralClass, NetworkModel, check_shares
from .pricing import ProfitParams
from .shareability import SharingParams

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "days": 20,
    "demand": {"n": 100, "seed": None, "area": [0.0, 0.0, 5.0, 5.0], "csv": None},
    "network": {"metric": "rectilinear", "speed_kmh": 20.0},
    "classes": [{"mean": c.vot_mean, "std": c.vot_std, "share": c.share} for c in DEFAULT_CLASSES],
    "vot": {"support_points": 20, "realisation": "discrete", "optimistic": None},
    "satisfaction": {"initial": 0.0},
    "sharing": {"rho": 1.5, "beta_s": [1.148, 1.4, 2.0], "guaranteed_discount": 0.05,
                "max_discount": 0.40, "max_degree": 3},
    "profit": {"zeta": 0.5, "upkeep": 1.0, "beta_f": 1.0},
    "pricing": {"epsilon": 1e-9, "policy": "adaptive", "flat_discount": 0.20},
    "learning": {"update_on_failed_ride": True},
    "scenario": {"knowledge_snapshot": None},
    "output": {"formats": ["csv", "json"]},
}


class ConfigError(InvalidInputError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _merge(base: dict, over: dict, text: str | None, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        name = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown key {name!r}", _line_of(text, key))
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{name!r} must be an object", _line_of(text, key))
            out[key] = _merge(base[key], value, text, name + ".")
        else:
            out[key] = value
    return out


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    seed: int
    days: int
    demand_n: int
    demand_seed: int
    demand_area: tuple[float, float, float, float]
    demand_csv: str | None
    network: NetworkModel
    classes: tuple[BehaviouralClass, ...]
    support_points: int
    vot_realisation: str
    optimistic_vot: float
    initial_satisfaction: float
    sharing: SharingParams
    profit: ProfitParams
    epsilon: float
    policy: str
    flat_discount: float
    update_on_failed_ride: bool
    knowledge_snapshot: str | None
    formats: tuple[str, ...]

    def with_overrides(self, **changes) -> "RunConfig":
        """Re-resolve with dotted-key overrides, e.g. ``{"profit.beta_f": 0}``."""
        raw = copy.deepcopy(self.raw)
        for dotted, value in changes.items():
            node = raw
            *path, last = dotted.split(".")
            for part in path:
                node = node[part]
            if last not in node:
                raise ConfigError(f"unknown key {dotted!r}")
            node[last] = value
        return resolve(raw)

    def header(self) -> str:
        s = self.sharing
        return (f"# rho={s.rho} zeta={self.profit.zeta} C={self.profit.upkeep} beta_f={self.profit.beta_f} "
                f"lambda_hat={s.guaranteed_discount} nu={s.max_discount} seed={self.seed} "
                f"demand_seed={self.demand_seed}")


def _num(cfg, section, key, text, *, integer=False, lo=None, hi=None, lo_open=False, allow_none=False):
    v = cfg[section][key] if section else cfg[key]
    name = f"{section}.{key}" if section else key
    if v is None and allow_none:
        return None
    ok_type = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok_type:
        raise ConfigError(f"{name!r} must be {'an integer' if integer else 'a number'}", _line_of(text, key))
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(f"{name!r} must be {'>' if lo_open else '>='} {lo}", _line_of(text, key))
    if hi is not None and v > hi:
        raise ConfigError(f"{name!r} must be <= {hi}", _line_of(text, key))
    return v


def resolve(user: dict | None = None, text: str | None = None) -> RunConfig:
    if user is None:
        user = {}
    if not isinstance(user, dict):
        raise ConfigError("top level must be a JSON object", 1)
    cfg = _merge(DEFAULTS, user, text)
    seed = _num(cfg, None, "seed", text, integer=True, lo=0)
    days = _num(cfg, None, "days", text, integer=True, lo=0)
    n = _num(cfg, "demand", "n", text, integer=True, lo=1)
    demand_seed = _num(cfg, "demand", "seed", text, integer=True, lo=0, allow_none=True)
    area = cfg["demand"]["area"]
    if not (isinstance(area, list) and len(area) in (2, 4) and all(isinstance(a, (int, float)) for a in area)):
        raise ConfigError("'demand.area' must be [width, height] or [x0, y0, x1, y1]", _line_of(text, "area"))
    area = (0.0, 0.0, float(area[0]), float(area[1])) if len(area) == 2 else tuple(map(float, area))
    if not (area[2] > area[0] and area[3] > area[1]):
        raise ConfigError("'demand.area' is degenerate", _line_of(text, "area"))
    csv_path = cfg["demand"]["csv"]
    if csv_path is not None and not Path(csv_path).is_file():
        raise ConfigError(f"demand csv {csv_path!r} not found", _line_of(text, "csv"))
    try:
        net = NetworkModel(cfg["network"]["metric"], float(_num(cfg, "network", "speed_kmh", text, lo=0, lo_open=True)))
    except InvalidInputError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), _line_of(text, "metric")) from None

    raw_classes = cfg["classes"]
    if not isinstance(raw_classes, list) or not raw_classes:
        raise ConfigError("'classes' must be a non-empty list", _line_of(text, "classes"))
    classes = []
    for j, c in enumerate(raw_classes):
        if not isinstance(c, dict) or set(c) != {"mean", "std", "share"}:
            raise ConfigError("each class needs exactly 'mean', 'std', 'share'", _line_of(text, "classes"))
        try:
            classes.append(BehaviouralClass(j, float(c["mean"]), float(c["std"]), float(c["share"])))
        except (InvalidInputError, TypeError, ValueError) as exc:
            raise ConfigError(f"class {j}: {exc}", _line_of(text, "classes")) from None
    try:
        check_shares(classes)
    except InvalidInputError as exc:
        raise ConfigError(str(exc), _line_of(text, "classes")) from None

    K = _num(cfg, "vot", "support_points", text, integer=True, lo=2)
    realisation = cfg["vot"]["realisation"]
    if realisation not in ("discrete", "continuous"):
        raise ConfigError("'vot.realisation' must be 'discrete' or 'continuous'", _line_of(text, "realisation"))
    optimistic = _num(cfg, "vot", "optimistic", text, lo=0, allow_none=True)
    if optimistic is None:
        optimistic = min(c.vot_mean for c in classes)

    sh = cfg["sharing"]
    beta_s = sh["beta_s"]
    if not isinstance(beta_s, list) or not all(isinstance(b, (int, float)) for b in beta_s):
        raise ConfigError("'sharing.beta_s' must be a list of numbers for degrees 2..", _line_of(text, "beta_s"))
    try:
        sharing = SharingParams(
            rho=float(_num(cfg, "sharing", "rho", text, lo=0)),
            beta_s={k + 2: float(b) for k, b in enumerate(beta_s)},
            guaranteed_discount=float(_num(cfg, "sharing", "guaranteed_discount", text, lo=0, hi=1)),
            max_discount=float(_num(cfg, "sharing", "max_discount", text, lo=0, hi=1)),
            max_degree=_num(cfg, "sharing", "max_degree", text, integer=True, lo=1, hi=4),
        )
    except ConfigError:
        raise
    except InvalidInputError as exc:
        raise ConfigError(str(exc), _line_of(text, "sharing")) from None
    profit = ProfitParams(
        zeta=float(_num(cfg, "profit", "zeta", text, lo=0)),
        upkeep=float(_num(cfg, "profit", "upkeep", text, lo=0)),
        beta_f=float(_num(cfg, "profit", "beta_f", text, lo=0)),
    )
    eps = float(_num(cfg, "pricing", "epsilon", text, lo=0))
    policy = cfg["pricing"]["policy"]
    if policy not in ("adaptive", "flat"):
        raise ConfigError("'pricing.policy' must be 'adaptive' or 'flat'", _line_of(text, "policy"))
    flat = float(_num(cfg, "pricing", "flat_discount", text, lo=0))
    if flat >= 1:
        raise ConfigError("'pricing.flat_discount' must be < 1", _line_of(text, "flat_discount"))
    upd = cfg["learning"]["update_on_failed_ride"]
    if not isinstance(upd, bool):
        raise ConfigError("'learning.update_on_failed_ride' must be true/false", _line_of(text, "update_on_failed_ride"))
    snap = cfg["scenario"]["knowledge_snapshot"]
    if snap is not None and not Path(snap).is_file():
        raise ConfigError(f"snapshot {snap!r} not found", _line_of(text, "knowledge_snapshot"))
    formats = cfg["output"]["formats"]
    if not isinstance(formats, list) or not set(formats) <= {"csv", "json"}:
        raise ConfigError("'output.formats' must be a subset of ['csv', 'json']", _line_of(text, "formats"))
    init_s = float(_num(cfg, "satisfaction", "initial", text))

    return RunConfig(
        raw=cfg, seed=seed, days=days, demand_n=n,
        demand_seed=seed if demand_seed is None else demand_seed,
        demand_area=area, demand_csv=csv_path, network=net, classes=tuple(classes),
        support_points=K, vot_realisation=realisation, optimistic_vot=float(optimistic),
        initial_satisfaction=init_s, sharing=sharing, profit=profit, epsilon=eps, policy=policy,
        flat_discount=flat, update_on_failed_ride=upd, knowledge_snapshot=snap, formats=tuple(formats),
    )


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text()
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    return resolve(user, text)
