"""Shared driver for the benchmark scripts: run one config and print the headline numbers."""

import argparse
import os

from ddgt.config import load_config
from ddgt.experiment import run_experiment

CONFIGS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "configs")


def main(config_name: str, description: str) -> dict:
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--config", default=os.path.join(CONFIGS, config_name))
    ap.add_argument("--out", default=None, help="output directory (defaults to the config's output_dir)")
    ap.add_argument("--iters", type=int, default=None)
    args = ap.parse_args()
    spec = load_config(args.config)
    if args.iters is not None:
        spec.iters = args.iters
    summary = run_experiment(spec, out_dir=args.out)
    print(f"alpha_used={summary['alpha_used']:.4g} ({summary['alpha_mode']})  "
          f"sigma_A={summary['sigma_A']:.4f}  sigma_B={summary['sigma_B']:.4f}")
    for algo, res in summary["algorithms"].items():
        rates = res["rates"]
        geo = rates.get("dist_to_opt_geometric") or {}
        print(f"{algo:>9}: final dist_to_opt={res['final']['dist_to_opt']:.3e}  "
              f"lambda={geo.get('lambda', float('nan')):.4f}  R2={geo.get('r_squared', float('nan')):.4f}  "
              f"iters to 1e-4: {rates.get('iters_to_dist', {}).get('0.0001')}")
    print(f"conservation_max_violation={summary['conservation_max_violation']:.2e}")
    return summary
