#!/usr/bin/env python3
"""Build data/adult/adult.csv from the UCI Adult files (adult.data + adult.test).

Both raw files are concatenated, cells are stripped of surrounding whitespace,
the trailing '.' on adult.test labels is removed, and '?' is kept so the loader
can drop incomplete rows itself.

Usage: prepare_adult.py ADULT_DATA ADULT_TEST OUT_CSV
"""
import csv
import sys

HEADER = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]


def rows(path):
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if len(rec) != len(HEADER):
                continue  # blank lines and the '|1x3 Cross validator' banner
            rec = [c.strip() for c in rec]
            rec[-1] = rec[-1].rstrip(".")
            yield rec


def main(argv):
    if len(argv) != 4:
        sys.exit(__doc__)
    with open(argv[3], "w", newline="") as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(HEADER)
        n = 0
        for src in argv[1:3]:
            for rec in rows(src):
                w.writerow(rec)
                n += 1
    print(f"wrote {n} rows to {argv[3]}")


if __name__ == "__main__":
    main(sys.argv)
