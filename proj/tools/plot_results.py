#!/usr/bin/env python3
"""Plot mean edge errors against sample count from `gridtopo experiment` CSV files."""
import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv", nargs="+", help="results CSV files")
    ap.add_argument("-o", "--out", default="errors.png", help="output image")
    args = ap.parse_args()

    fig, ax = plt.subplots(figsize=(6, 4))
    for path in args.csv:
        df = pd.read_csv(path)
        df = df[df["n"] != "inf"].dropna(subset=["total"])
        df["n"] = df["n"].astype(int)
        for key, group in df.groupby(["grid", "model", "algo"]):
            stats = group.groupby("n")["total"].agg(["mean", "std"]).reset_index()
            ax.errorbar(stats["n"], stats["mean"], yerr=stats["std"].fillna(0), marker="o", capsize=3,
                        label="/".join(key))
    ax.set_xscale("log")
    ax.set_xlabel("samples n")
    ax.set_ylabel("mean edge errors (fp + fn)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
