"""Command-line front end: ``python -m eventjet <command> --config run.json``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 nominal trajectory misses the event.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, mesh, uncert
from .config import RunConfig, load_config, requirement_predicate
from .errors import (
    AlgebraError,
    ConfigError,
    DomainError,
    EventMissedError,
    FitError,
    IntegrationError,
    SchemaError,
    TransversalityError,
)
from .eventmap import detect, expand_to_event
from .jetflow import integrate
from .netpoly import policy_to_dict
from .polyalg import map_to_dict

log = logging.getLogger("eventjet")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISS = 0, 2, 3, 4


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _need_event(cfg: RunConfig):
    if cfg.event is None:
        raise ConfigError("this command needs an event block")
    return cfg.event


def _need_box(cfg: RunConfig):
    if cfg.box is None:
        raise ConfigError("this command needs a box block")
    return cfg.box


def _etm(cfg: RunConfig, order: int | None = None):
    return expand_to_event(cfg.model, cfg.policy, cfg.x0, list(cfg.expand_vars), order or cfg.order,
                           _need_event(cfg), cfg.t_max, cfg.settings, cfg.var_scales)


def cmd_expand(cfg: RunConfig, out: Path, fmt: str) -> dict:
    etm = _etm(cfg)
    if fmt == "json":
        doc = {
            "ett": map_to_dict(etm.ett),
            "trigger_time": [{"alpha": list(a), "coeff": c} for a, c in etm.trigger_time.terms()],
            "t_star": etm.t_star,
            "transversality": etm.transversality,
            "order": cfg.order,
        }
        _write_json(out / "ett.json", doc)
    else:
        with open(out / "ett.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["component"] + [lab.name for lab in etm.ett.labels] + ["coeff"])
            for name, comp in zip(etm.ett.component_names, etm.ett.components):
                for alpha, c in comp.terms():
                    w.writerow([name, *alpha, repr(float(c))])
            for alpha, c in etm.trigger_time.terms():
                w.writerow(["t_event", *alpha, repr(float(c))])
    return {"t_star": etm.t_star, "order": cfg.order}


def cmd_radius(cfg: RunConfig, out: Path, fmt: str) -> dict:
    etm = _etm(cfg)
    rows = uncert.per_state_radius_sweep(etm.ett)
    if fmt == "csv":
        uncert.radius_rows_to_csv(rows, out / "radius.csv")
    else:
        _write_json(out / "radius.json", [r.__dict__ for r in rows])
    return {"rows": len(rows), "map_radius": uncert.map_radius(etm.ett)}


def cmd_moments(cfg: RunConfig, out: Path, fmt: str) -> dict:
    etm = _etm(cfg)
    mom = uncert.propagate_moments(etm.ett, _need_box(cfg))
    if fmt == "csv":
        mom.to_csv(out / "moments.csv")
    else:
        mom.to_json(out / "moments.json")
    summary = {"order": cfg.order}
    if cfg.requirement:
        req = cfg.requirement
        comps = [int(c) for c in req["components"]]
        sub = mom.subset(comps)
        pred = requirement_predicate(req, sub._s())
        res = uncert.requirement_check(mom, comps, pred, int(req.get("n_samples", 100_000)), cfg.seed)
        doc = {"fraction": res.fraction, "stderr": res.stderr, "n_samples": res.n_samples,
               "seed": res.seed, "assumption": res.assumption, "requirement": req}
        _write_json(out / "requirement.json", doc)
        summary.update(fraction=res.fraction, stderr=res.stderr)
    return summary


def cmd_mc(cfg: RunConfig, out: Path, fmt: str) -> dict:
    res = harness.mc_to_event(cfg.model, cfg.policy, cfg.x0, _need_box(cfg), _need_event(cfg), cfg.n_mc, cfg.seed,
                              list(cfg.expand_vars), cfg.var_scales, cfg.t_max, cfg.accept, cfg.settings)
    if fmt == "csv":
        res.to_csv(out / "mc.csv")
    else:
        _write_json(out / "mc.json", {"counts": res.counts, "seed": res.seed, "n": len(res.status)})
    return res.counts


def cmd_compare(cfg: RunConfig, out: Path, fmt: str) -> dict:
    res = harness.order_sweep_study(cfg.model, cfg.policy, cfg.x0, _need_box(cfg), _need_event(cfg), cfg.orders,
                                    cfg.n_mc, cfg.seed, list(cfg.expand_vars), cfg.var_scales, cfg.t_max,
                                    cfg.components, cfg.settings)
    if fmt == "csv":
        res.to_csv(out / "compare.csv")
    else:
        res.to_json(out / "compare.json")
    # wall-clock numbers live apart from the reproducible table
    _write_json(out / "timings.json", res.timings())
    return {r.order: r.frobenius_rel_error for r in res.rows}


def _fit_points(m: mesh.TriangleMesh, block: dict, seed: int):
    n = int(block.get("n_points", 3000))
    lo, hi = (float(v) for v in block.get("shell", (0.6, 1.4)))
    center = m.vertices.mean(axis=0)
    R = float(np.max(np.linalg.norm(m.vertices - center, axis=1)))
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return center + d * R * rng.uniform(lo, hi, (n, 1))


def cmd_fit_event(cfg: RunConfig, out: Path, fmt: str) -> dict:
    block = cfg.fit
    if not block:
        raise ConfigError("fit-event needs a fit block")
    src = block.get("mesh")
    if isinstance(src, dict) and "icosphere" in src:
        m = mesh.icosphere(**src["icosphere"])
    elif isinstance(src, str):
        m = mesh.load_mesh(cfg.base_dir / src)
    else:
        raise ConfigError("fit.mesh must be a file path or {'icosphere': {...}}")
    m.require_watertight()
    X = _fit_points(m, block, cfg.seed)
    y = mesh.signed_boundary_values(m, X, float(block.get("altitude", 0.0)), cfg.seed)
    res = mesh.fit_event_net(X, y, tuple(block.get("hidden", (8,))), int(block.get("iterations", 2000)),
                             cfg.seed, float(block.get("w0", 1.0)))
    _write_json(out / "event_net.json", policy_to_dict(res.net))
    summary = {"holdout_rmse": res.holdout_rmse, "train_rmse": float(np.sqrt(res.train_mse)),
               "iterations": res.iterations, "n_params": res.net.n_params, "seed": cfg.seed}
    if fmt == "csv":
        with open(out / "fit.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(summary))
            w.writerow([repr(v) for v in summary.values()])
    else:
        _write_json(out / "fit.json", summary)
    return summary


def cmd_simulate(cfg: RunConfig, out: Path, fmt: str) -> dict:
    if cfg.event is not None:
        tr = integrate(cfg.model, cfg.policy, cfg.x0, event=cfg.event, t_max=cfg.t_max, settings=cfg.settings)
        hit = detect(tr, cfg.event)
        summary = {"t_event": hit.t, "state_event": hit.state.tolist(), "rate": hit.rate}
    elif cfg.t_end is not None:
        tr = integrate(cfg.model, cfg.policy, cfg.x0, t_end=cfg.t_end, settings=cfg.settings)
        summary = {"t_end": float(tr.times[-1])}
    else:
        raise ConfigError("simulate needs an event block or run.t_end")
    if fmt == "csv":
        tr.to_csv(out / "trajectory.csv", cfg.model.state_names, cfg.model.state_units)
    else:
        _write_json(out / "trajectory.json", {"t": tr.times.tolist(), "states": tr.states.tolist(),
                                              "names": list(cfg.model.state_names), **summary})
    summary["steps"] = tr.steps
    return summary


COMMANDS = {
    "expand": (cmd_expand, "build the event transition map and write its coefficients"),
    "radius": (cmd_radius, "per-state convergence-radius table"),
    "moments": (cmd_moments, "propagate box moments, optionally check a requirement"),
    "mc": (cmd_mc, "Monte Carlo baseline to the event"),
    "compare": (cmd_compare, "order sweep of map covariance against Monte Carlo"),
    "fit-event": (cmd_fit_event, "fit a SIREN event net to a mesh"),
    "simulate": (cmd_simulate, "single nominal trajectory"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="override run.seed")
    common.add_argument("--order", type=int, default=None, help="override run.order")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="eventjet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, order=args.order)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command][0](cfg, out, args.format)
    except EventMissedError as exc:
        log.error("nominal event miss: %s", exc)
        return EXIT_MISS
    except (ConfigError, SchemaError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (TransversalityError, IntegrationError, DomainError, FitError, AlgebraError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    print(json.dumps(summary, default=str, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
