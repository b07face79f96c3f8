"""Plot dist_to_opt and the KKT residual from one or more trace CSVs (needs matplotlib).

    python3 scripts/plot_traces.py runs/quadratic/ddgt_trace.csv runs/quartic/ddgt_trace.csv -o fig.png
"""

import argparse
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    col = lambda name: [float(r[name]) if r[name] else float("nan") for r in rows]  # noqa: E731
    return col("k"), col("dist_to_opt"), col("kkt_residual")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("traces", nargs="+")
    ap.add_argument("-o", "--output", default="traces.png")
    args = ap.parse_args()
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for path in args.traces:
        k, dist, kkt = load(path)
        axes[0].semilogy(k, dist, label=path)
        axes[1].semilogy(k, kkt, label=path)
    axes[0].set(xlabel="k", ylabel="sum_i ||w_i - w_i*||^2")
    axes[1].set(xlabel="k", ylabel="KKT residual")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.output, dpi=120)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
