#!/usr/bin/env python3
"""Download the UCI pen digits data and write data/pendigits.csv.

The training and test files are concatenated; the output has a header row
f0..f15,digit. Usage: fetch_pendigits.py [--out PATH] [--base URL]
"""
import argparse
import csv
import pathlib
import urllib.request

BASE = "https://archive.ics.uci.edu/ml/machine-learning-databases/pendigits/"


def rows(url):
    with urllib.request.urlopen(url, timeout=60) as r:
        for line in r.read().decode("ascii").splitlines():
            line = line.strip()
            if line:
                yield [v.strip() for v in line.split(",")]


def main():
    ap = argparse.ArgumentParser()
    here = pathlib.Path(__file__).resolve().parent.parent
    ap.add_argument("--out", default=str(here / "data" / "pendigits.csv"))
    ap.add_argument("--base", default=BASE)
    args = ap.parse_args()

    data = []
    for name in ("pendigits.tra", "pendigits.tes"):
        data.extend(rows(args.base + name))
    if any(len(r) != 17 for r in data):
        raise SystemExit("unexpected row width")

    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"f{i}" for i in range(16)] + ["digit"])
        w.writerows(data)
    print(f"wrote {len(data)} rows to {out}")


if __name__ == "__main__":
    main()
