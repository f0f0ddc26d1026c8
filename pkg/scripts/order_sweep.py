"""Covariance error against Monte Carlo as the expansion order grows.

    python scripts/order_sweep.py configs/cubic_compare.json --out sweep_cubic
"""
import argparse
import json
from pathlib import Path

from eventjet.config import load_config
from eventjet.harness import order_sweep_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--n-mc", type=int, default=None, help="override run.n_mc")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default="sweep")
    args = ap.parse_args()

    cfg = load_config(args.config, seed=args.seed)
    n = args.n_mc or cfg.n_mc
    res = order_sweep_study(cfg.model, cfg.policy, cfg.x0, cfg.box, cfg.event, cfg.orders, n, cfg.seed,
                            list(cfg.expand_vars), cfg.var_scales, cfg.t_max, cfg.components, cfg.settings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.to_csv(out / "compare.csv")
    (out / "timings.json").write_text(json.dumps(res.timings(), indent=2))
    print(f"MC: {res.mc_counts} in {res.mc_seconds:.1f} s")
    print("order  frobenius_rel  mean_abs   expand_s")
    for r in res.rows:
        print(f"{r.order:5d}  {r.frobenius_rel_error:13.3e}  {r.mean_abs_error:9.2e}  {r.expand_seconds:8.2f}")
    ratio = res.rows[0].frobenius_rel_error / res.rows[-1].frobenius_rel_error
    print(f"order {res.rows[0].order} / order {res.rows[-1].order} error ratio: {ratio:.2f}")


if __name__ == "__main__":
    main()
