#!/usr/bin/env python3
"""Generate the bundled sample panels under data/sample/.

The reference (US-like) curve follows a three-factor dynamic Nelson-Siegel
process. The response (UK-like) curve has its own factors plus a smooth
functional dependence on the reference curve. The raw files deliberately miss
some tenors and a few cells so that `dnsfr prepare` has work to do.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

LAMBDA = 0.0609
GRID = [1, 3, 6, 9, 12, 24, 36, 60, 84, 120, 240, 360]


def loadings(tenors):
    t = np.asarray(tenors, dtype=float)
    x = LAMBDA * t
    slope = -np.expm1(-x) / x
    return np.column_stack([np.ones_like(t), slope, slope - np.exp(-x)])


def simulate_factors(rng, periods, mean, psi, sigma, start):
    f = np.empty((periods, 3))
    f[0] = start
    for t in range(1, periods):
        f[t] = mean + psi * (f[t - 1] - mean) + sigma * rng.standard_normal(3)
    return f


def month_labels(first_year, first_month, periods):
    out = []
    y, m = first_year, first_month
    for _ in range(periods):
        out.append(f"{y:04d}-{m:02d}")
        m += 1
        if m > 12:
            y, m = y + 1, 1
    return out


def write_panel(path, dates, tenors, values, header, holes):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date"] + header)
        for t, d in enumerate(dates):
            row = [d]
            for i in range(len(tenors)):
                row.append("" if (t, tenors[i]) in holes else f"{values[t, i]:.4f}")
            w.writerow(row)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "sample"))
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--periods", type=int, default=84)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    T = args.periods
    dates = month_labels(2013, 1, T)
    L = loadings(GRID)

    us_f = simulate_factors(rng, T, np.array([2.8, -1.6, -0.5]), np.array([0.97, 0.93, 0.85]),
                            np.array([0.12, 0.18, 0.35]), np.array([2.6, -2.2, -0.8]))
    us = us_f @ L.T + 0.02 * rng.standard_normal((T, len(GRID)))

    uk_f = simulate_factors(rng, T, np.array([1.2, -0.6, 0.2]), np.array([0.95, 0.9, 0.8]),
                            np.array([0.08, 0.12, 0.25]), np.array([1.0, -0.5, 0.0]))
    # Smooth response to the reference curve: each UK tenor loads on a
    # Gaussian-weighted window of US tenors.
    pos = np.log(np.asarray(GRID, dtype=float))
    weights = np.exp(-0.5 * ((pos[:, None] - pos[None, :]) / 0.8) ** 2)
    weights *= (0.25 + 0.15 * np.tanh((pos[:, None] - 3.0) / 1.5)) / weights.sum(axis=1, keepdims=True)
    uk = uk_f @ L.T + us @ weights.T + 0.02 * rng.standard_normal((T, len(GRID)))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    us_tenors = [t for t in GRID if t not in (9, 240)]
    us_idx = [GRID.index(t) for t in us_tenors]
    us_holes = {(10, 84), (37, 1), (52, 120), (60, 360)}
    write_panel(out / "us_raw.csv", dates, us_tenors, us[:, us_idx], [str(t) for t in us_tenors], us_holes)

    def label(t):
        return f"{t // 12}Y" if t % 12 == 0 else f"{t}M"

    uk_tenors = [t for t in GRID if t not in (9, 84)]
    uk_idx = [GRID.index(t) for t in uk_tenors]
    uk_holes = {(5, 24), (44, 360), (70, 3)}
    # Rows written newest first to exercise date sorting on load.
    order = list(range(T))[::-1]
    write_panel(out / "uk_raw.csv", [dates[t] for t in order], uk_tenors, uk[order][:, uk_idx],
                [label(t) for t in uk_tenors], {(T - 1 - t, tenor) for t, tenor in uk_holes})

    effr = ["-", "1.59", "1.59", "0.08", "0.05", "0.05", "0.08", "0.10", "0.09", "0.09", "0.09", "0.09", "0.09"]
    fx = ["1.32018", "1.28231", "1.24086", "1.25907", "1.23455", "1.23992", "1.30770", "1.33690", "1.29115",
          "1.29457", "1.33173", "1.36561", "1.36893"]
    with open(out / "market.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "effr_percent", "fx"])
        for d, r, x in zip(month_labels(2019, 12, 13), effr, fx):
            w.writerow([d, r, x])


if __name__ == "__main__":
    main()
