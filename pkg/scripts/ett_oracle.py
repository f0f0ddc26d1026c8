"""Pointwise error of the order 1..K event maps against direct integration."""
import argparse
import time

import numpy as np

from eventjet.eventmap import detect, expand_to_event
from eventjet.jetflow import integrate, perturbed_initial_state
from eventjet.scenarios import SCENARIOS, get_scenario
from eventjet.uncert import map_radius


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scenario", choices=sorted(SCENARIOS))
    ap.add_argument("--max-order", type=int, default=4)
    ap.add_argument("--samples", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sc = get_scenario(args.scenario)
    names = list(sc.expand_vars)
    maps = {}
    for k in range(1, args.max_order + 1):
        t0 = time.perf_counter()
        maps[k] = expand_to_event(sc.model, sc.policy, sc.x0, names, k, sc.event, sc.t_max, var_scales=sc.var_scales)
        print(f"order {k}: expansion {time.perf_counter() - t0:.2f} s")
    r = map_radius(maps[args.max_order].ett)
    rho = min(0.5 * r, sc.box_cap)
    print(f"radius estimate {r:.4g}; sampling half-width {rho:.4g}")

    Z = np.random.default_rng(args.seed).uniform(-rho, rho, (args.samples, len(names)))
    truth = np.array([
        detect(integrate(sc.model, sc.policy, x0, event=sc.event, t_max=sc.t_max, consts=c), sc.event).state
        for x0, c in (perturbed_initial_state(sc.model, sc.x0, names, z, sc.var_scales) for z in Z)
    ])
    for k, etm in maps.items():
        rel = np.linalg.norm(etm.ett.eval_many(Z) - truth, axis=1) / np.linalg.norm(truth, axis=1)
        print(f"order {k}: max relative error {rel.max():.3e}, median {np.median(rel):.3e}")


if __name__ == "__main__":
    main()
