"""Gaussian-assumption touchdown-speed requirement from the lander event map.

Prints the map-based fraction next to a direct Monte Carlo estimate over the
same box, so the Gaussian assumption can be judged.
"""
import argparse

import numpy as np

from eventjet.config import load_config, requirement_predicate
from eventjet.eventmap import expand_to_event
from eventjet.harness import HIT, mc_to_event
from eventjet.uncert import propagate_moments, requirement_check


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/lander_requirement.json")
    ap.add_argument("--n-mc", type=int, default=None)
    args = ap.parse_args()

    cfg = load_config(args.config)
    etm = expand_to_event(cfg.model, cfg.policy, cfg.x0, list(cfg.expand_vars), cfg.order, cfg.event, cfg.t_max,
                          cfg.settings, cfg.var_scales)
    mom = propagate_moments(etm.ett, cfg.box)
    req = cfg.requirement
    comps = list(req["components"])
    pred = requirement_predicate(req, np.asarray(cfg.model.state_units)[comps])
    res = requirement_check(mom, comps, pred, int(req.get("n_samples", 100_000)), cfg.seed)
    print(f"map + Gaussian: {res.fraction:.4f} +/- {res.stderr:.4f} (n={res.n_samples})")

    n = args.n_mc or cfg.n_mc
    mc = mc_to_event(cfg.model, cfg.policy, cfg.x0, cfg.box, cfg.event, n, cfg.seed, list(cfg.expand_vars),
                     cfg.var_scales, cfg.t_max, settings=cfg.settings)
    hits = mc.states[mc.status == HIT][:, comps]
    p = float(np.mean(pred(hits)))
    print(f"direct MC:      {p:.4f} +/- {np.sqrt(p * (1 - p) / len(hits)):.4f} (n={len(hits)}, counts {mc.counts})")


if __name__ == "__main__":
    main()
