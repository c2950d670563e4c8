"""Regenerate region_reference_*.csv with integer arithmetic on the k/50 lattice.

The table is derived by hand from the picture in the (1/p, 1/q) square,
independently of fraclab: with M = 50, A = 2sM/n and B = (n-2s)M/n
(both integers for the committed cases),

  interior-a : i = j = 0, or 1 <= j <= i <= M-1 with i - j < A
  weak-b     : i = M and j > B
  weak-c     : i - j = A and 1 <= j < B
  outside    : everything else
"""

import csv
import sys

M = 50
CASES = {"region_reference_n2_s05.csv": (2, 25, 25), "region_reference_n2_s03.csv": (2, 15, 35)}


def label(i, j, A, B):
    if i == 0 and j == 0:
        return "interior-a"
    if 1 <= j <= i <= M - 1 and i - j < A:
        return "interior-a"
    if i == M and j > B:
        return "weak-b"
    if i - j == A and 1 <= j < B:
        return "weak-c"
    return "outside"


def main(outdir="."):
    for name, (n, A, B) in CASES.items():
        with open(f"{outdir}/{name}", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", "region"])
            for i in range(M + 1):
                for j in range(M + 1):
                    w.writerow([i, j, label(i, j, A, B)])


if __name__ == "__main__":
    main(*sys.argv[1:])
