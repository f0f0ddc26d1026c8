"""JSON run configuration.

A config has five blocks: ``model``, ``policy``, ``event``, ``box`` and
``run``.  A ``scenario`` key seeds every block from a built-in benchmark,
after which explicit blocks override individual fields.  State vectors and
event geometry are in scaled model units unless a block says
``"units": "physical"``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .dynamics import DynamicsModel, build_model
from .errors import ConfigError
from .eventmap import EventSpec
from .jetflow import IntegratorSettings
from .netpoly import PolicyNet, load_policy, random_siren
from .scenarios import constant_direction_policy, get_scenario
from .uncert import UniformBox, in_box, norm_le

KNOWN_KEYS = {"scenario", "scenario_seed", "model", "policy", "event", "box", "run", "requirement", "accept", "fit"}


@dataclass
class RunConfig:
    model: DynamicsModel
    policy: PolicyNet | None
    x0: np.ndarray
    event: EventSpec | None
    expand_vars: tuple
    var_scales: tuple
    box: UniformBox | None
    t_max: float
    order: int = 4
    orders: tuple = (1, 2, 3, 4)
    n_mc: int = 1000
    seed: int = 0
    t_end: float | None = None
    components: tuple | None = None
    settings: IntegratorSettings = field(default_factory=IntegratorSettings)
    accept: Callable | None = None
    requirement: dict | None = None
    fit: dict | None = None
    base_dir: Path = Path(".")


def _read(source) -> tuple[dict, Path]:
    if isinstance(source, dict):
        return dict(source), Path(".")
    path = Path(source)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc, path.parent


def _vec(block, key, n=None, what=""):
    try:
        v = np.asarray(block[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what or key}: expected numbers ({exc})") from exc
    if v.ndim != 1 or (n is not None and len(v) != n):
        raise ConfigError(f"{what or key}: expected {n if n is not None else 'a list of'} numbers")
    if not np.all(np.isfinite(v)):
        raise ConfigError(f"{what or key}: non-finite entry")
    return v


def _policy(block, base: Path, model: DynamicsModel):
    if block is None:
        return None
    if isinstance(block, str):
        try:
            return load_policy(base / block)
        except FileNotFoundError:
            raise ConfigError(f"policy file {base / block} not found") from None
    if not isinstance(block, dict):
        raise ConfigError("policy must be a file path, an object or null")
    if "path" in block:
        return _policy(block["path"], base, model)
    if "random_siren" in block:
        kw = dict(block["random_siren"])
        kw.setdefault("output_wiring", model.wiring)
        try:
            return random_siren(**kw)
        except TypeError as exc:
            raise ConfigError(f"random_siren: {exc}") from exc
    if "constant_direction" in block:
        return constant_direction_policy(block["constant_direction"], model.state_dim)
    if "layers" in block:
        return load_policy(block)
    raise ConfigError("policy object needs one of path, random_siren, constant_direction, layers")


def _event(block, base: Path, model: DynamicsModel) -> EventSpec:
    kind = block.get("kind")
    if kind not in ("sphere", "plane", "neural"):
        raise ConfigError(f"event.kind must be sphere, plane or neural, got {kind!r}")
    units = model.state_units
    physical = block.get("units", "scaled") == "physical"
    idx = tuple(int(i) for i in block.get("indices", (0, 1, 2)))
    if max(idx, default=0) >= model.state_dim:
        raise ConfigError(f"event index {max(idx)} out of range for {model.id!r}")
    kw = {"indices": idx, "direction": block.get("direction", "any"), "name": block.get("name", "")}
    for key in ("refine_tol", "graze_tol", "eps_transversal"):
        if key in block:
            kw[key] = float(block[key])
    u = units[list(idx)] if physical else np.ones(len(idx))
    if kind == "sphere":
        if physical and not np.allclose(u, u[0]):
            raise ConfigError("physical sphere needs equal units on its indices")
        center = _vec(block, "center", len(idx), "event.center") / u
        return EventSpec.sphere(center, float(block["radius"]) / u[0], **kw)
    if kind == "plane":
        normal = _vec(block, "normal", len(idx), "event.normal") * u
        return EventSpec.plane(normal, float(block.get("offset", 0.0)), **kw)
    net = _policy(block.get("net"), base, model)
    if net is None:
        raise ConfigError("neural event needs net")
    if physical:
        # fold the unit conversion into the input scaling so the net reads scaled states
        net = PolicyNet(net.layers, net.input_shift / u, net.input_scale * u, net.output_wiring, net.meta)
    kw.setdefault("scale", float(block.get("scale", 1.0)))
    return EventSpec.neural(net, **kw)


def _accept(block, model: DynamicsModel):
    if block is None:
        return None
    units = model.state_units
    idx = [int(i) for i in block["indices"]]
    kind = block.get("kind")
    if kind == "norm_le":
        lim = float(block["value"])
        return lambda s: float(np.linalg.norm(np.asarray(s)[idx] * units[idx])) <= lim
    if kind == "box":
        w = float(block["half_width"])
        return lambda s: bool(np.all(np.abs(np.asarray(s)[idx] * units[idx]) <= w))
    raise ConfigError(f"accept.kind must be norm_le or box, got {kind!r}")


def requirement_predicate(block: dict, scales) -> Callable:
    """Predicate on rows of sampled event states, thresholds in physical units."""
    scales = np.asarray(scales, dtype=float)
    kind = block.get("kind")
    if kind == "norm_le":
        pred = norm_le(float(block["value"]))
    elif kind == "in_box":
        pred = in_box(block["lower"], block["upper"])
    else:
        raise ConfigError(f"requirement.kind must be norm_le or in_box, got {kind!r}")
    return lambda X: pred(X * scales)


def load_config(source, seed: int | None = None, order: int | None = None) -> RunConfig:
    doc, base = _read(source)
    unknown = set(doc) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    sc = None
    if "scenario" in doc:
        kw = {"seed": int(doc["scenario_seed"])} if "scenario_seed" in doc else {}
        sc = get_scenario(doc["scenario"], **kw)
    mblock = doc.get("model", {})
    if "id" in mblock:
        model = build_model(mblock["id"], mblock.get("params"), mblock.get("scaling"))
    elif sc is not None:
        model = sc.model
    else:
        raise ConfigError("config needs model.id or scenario")
    policy = _policy(doc["policy"], base, model) if "policy" in doc else (sc.policy if sc else None)
    run = doc.get("run", {})
    if "x0" in run:
        x0 = _vec(run, "x0", model.state_dim, "run.x0")
        if run.get("units", "scaled") == "physical":
            x0 = model.to_scaled(x0)
    elif sc is not None:
        x0 = np.array(sc.x0, dtype=float)
    else:
        raise ConfigError("run.x0 is required without a scenario")
    event = _event(doc["event"], base, model) if "event" in doc else (sc.event if sc else None)
    bblock = doc.get("box")
    if bblock is not None:
        names = tuple(bblock.get("vars", sc.expand_vars if sc else ()))
        if "var_scales" in bblock:
            scales = tuple(_vec(bblock, "var_scales", len(names), "box.var_scales"))
        elif "var_units" in bblock:
            # physical size of one map unit per variable
            phys = _vec(bblock, "var_units", len(names), "box.var_units")
            su = [model.state_units[model.state_names.index(n)] if n in model.state_names else 1.0 for n in names]
            scales = tuple(phys / np.asarray(su))
        elif sc is not None and names == tuple(sc.expand_vars):
            scales = tuple(sc.var_scales)
        else:
            scales = (1.0,) * len(names)
        if "half_widths" in bblock:
            box = UniformBox.centered(_vec(bblock, "half_widths", len(names), "box.half_widths"), ())
        elif "lower" in bblock and "upper" in bblock:
            box = UniformBox(tuple(_vec(bblock, "lower", len(names))), tuple(_vec(bblock, "upper", len(names))))
        else:
            raise ConfigError("box needs half_widths or lower/upper")
    elif sc is not None:
        names, scales = tuple(sc.expand_vars), tuple(sc.var_scales)
        box = UniformBox.centered([sc.box_cap] * len(names))
    else:
        names, scales, box = tuple(model.state_names), (1.0,) * model.state_dim, None
    try:
        settings = IntegratorSettings(**run.get("integrator", {}))
    except TypeError as exc:
        raise ConfigError(f"run.integrator: {exc}") from exc
    t_max = float(run.get("t_max", sc.t_max if sc else 0.0))
    if event is not None and not t_max > 0:
        raise ConfigError("run.t_max must be positive")
    comps = run.get("components")
    cfg = RunConfig(
        model=model,
        policy=policy,
        x0=x0,
        event=event,
        expand_vars=names,
        var_scales=scales,
        box=box,
        t_max=t_max,
        order=int(order if order is not None else run.get("order", 4)),
        orders=tuple(int(k) for k in run.get("orders", (1, 2, 3, 4))),
        n_mc=int(run.get("n_mc", 1000)),
        seed=int(seed if seed is not None else run.get("seed", 0)),
        t_end=float(run["t_end"]) if "t_end" in run else None,
        components=tuple(int(c) for c in comps) if comps is not None else None,
        settings=settings,
        accept=_accept(doc.get("accept"), model),
        requirement=doc.get("requirement"),
        fit=doc.get("fit"),
        base_dir=base,
    )
    if cfg.order < 1 or any(k < 1 for k in cfg.orders):
        raise ConfigError("orders must be >= 1")
    if cfg.n_mc < 1:
        raise ConfigError("run.n_mc must be >= 1")
    return cfg

