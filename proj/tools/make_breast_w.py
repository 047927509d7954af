#!/usr/bin/env python3
"""Convert the MASS `biopsy` table into a PMLB-style breast_w.tsv.gz.

The MASS copy and the PMLB copy hold the same Wisconsin breast cancer records.
Missing cells (`NA`) are written as `?`, which the loader drops.

usage: make_breast_w.py biopsy.csv data/breast_w/breast_w.tsv.gz
"""

import csv
import gzip
import sys

COLUMNS = [
    "Clump_Thickness",
    "Cell_Size_Uniformity",
    "Cell_Shape_Uniformity",
    "Marginal_Adhesion",
    "Single_Epi_Cell_Size",
    "Bare_Nuclei",
    "Bland_Chromatin",
    "Normal_Nucleoli",
    "Mitoses",
]
TARGET = {"benign": "0", "malignant": "1"}


def main(src: str, dst: str) -> None:
    with open(src, newline="") as f:
        rows = list(csv.DictReader(f))
    with open(dst, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
        out = [("\t".join(COLUMNS + ["target"]))]
        for row in rows:
            cells = [row[f"V{i}"] for i in range(1, 10)]
            cells = ["?" if c in ("NA", "") else c for c in cells]
            out.append("\t".join(cells + [TARGET[row["class"]]]))
        gz.write(("\n".join(out) + "\n").encode())
    print(f"wrote {len(rows)} rows to {dst}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
