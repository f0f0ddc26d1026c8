"""Per-state convergence radius of a scenario's event map across orders."""
import argparse
import math

from eventjet.eventmap import expand_to_event
from eventjet.scenarios import SCENARIOS, get_scenario
from eventjet.uncert import headline_radii, per_state_radius_sweep, radius_rows_to_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scenario", choices=sorted(SCENARIOS))
    ap.add_argument("--order", type=int, default=6)
    ap.add_argument("--out", default="radius.csv")
    args = ap.parse_args()

    sc = get_scenario(args.scenario)
    etm = expand_to_event(sc.model, sc.policy, sc.x0, list(sc.expand_vars), args.order, sc.event, sc.t_max,
                          var_scales=sc.var_scales)
    rows = per_state_radius_sweep(etm.ett)
    radius_rows_to_csv(rows, args.out)
    finite = [r for r in headline_radii(rows).values() if math.isfinite(r.radius)]
    for r in sorted(finite, key=lambda r: r.radius)[:10]:
        print(f"{r.component:>6} / {r.variable:<6} order {r.order}: r = {r.radius:.4g} (physical {r.radius_physical:.4g})")
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
