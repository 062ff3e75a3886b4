#!/usr/bin/env python3
"""Expand the published aggregate balance-sheet statistics into synthetic
per-bank rows whose count, means and sample standard deviations match them.

Each group uses n-1 identical banks plus one large bank:
v = mu - s/sqrt(n), w = mu + (n-1) s/sqrt(n). Two extra rows per group
carry zero or missing Tier 1 capital and must be dropped by the loader.
"""
import csv
import math
import sys

GROUPS = [
    # country, year, n, mu_A, std_A, mu_E, std_E
    ("UK", 2007, 26, 2.0287e11, 4.7503e11, 6.3032e9, 1.3785e10),
    ("UK", 2012, 38, 1.8307e11, 4.2912e11, 8.1836e9, 2.0298e10),
    ("US", 2007, 666, 1.8505e10, 1.3592e11, 1.0615e9, 6.6785e9),
    ("US", 2012, 779, 2.0247e10, 1.5234e11, 1.5829e9, 1.1102e10),
]


def two_point(n, mu, s):
    d = s / math.sqrt(n)
    small, large = mu - d, mu + (n - 1) * d
    assert small > 0
    return small, large


def main(path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["bank_id", "country", "year", "total_assets", "tier1_capital"])
        for country, year, n, mu_a, sd_a, mu_e, sd_e in GROUPS:
            a_small, a_large = two_point(n, mu_a, sd_a)
            e_small, e_large = two_point(n, mu_e, sd_e)
            tag = f"{country}{year}"
            for k in range(n - 1):
                out.writerow([f"{tag}-{k:04d}", country, year, repr(a_small), repr(e_small)])
            out.writerow([f"{tag}-{n - 1:04d}", country, year, repr(a_large), repr(e_large)])
            out.writerow([f"{tag}-x0", country, year, repr(a_small), "0"])
            out.writerow([f"{tag}-x1", country, year, repr(a_large), ""])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures/bank_balance_sheets.csv")
