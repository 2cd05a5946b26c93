#!/usr/bin/env python3
"""Recomputes per-run metrics from the raw CSVs and compares them with results.csv."""

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

KEY = ("policy", "n_fl", "model_bytes", "seed")


def key_of(row):
    return tuple(row[k] for k in KEY)


def mean(values):
    return sum(values) / len(values) if values else None


def recompute(d):
    got = defaultdict(dict)

    downloads = defaultdict(list)
    uploads = defaultdict(list)
    with open(d / "transfers.csv", newline="") as f:
        for row in csv.DictReader(f):
            if row["download_s"]:
                downloads[key_of(row)].append(float(row["download_s"]))
            if row["upload_s"]:
                uploads[key_of(row)].append(float(row["upload_s"]))
    for k, v in downloads.items():
        got[k]["download_time_s"] = mean(v)
    for k, v in uploads.items():
        got[k]["upload_time_s"] = mean(v)

    iterations = defaultdict(list)
    with open(d / "iterations.csv", newline="") as f:
        for row in csv.DictReader(f):
            iterations[key_of(row)].append(float(row["iteration_time_s"]))
    for k, v in iterations.items():
        got[k]["iteration_time_s"] = mean(v)

    ul = defaultdict(list)
    dl = defaultdict(list)
    pc = defaultdict(list)
    with open(d / "ue_metrics.csv", newline="") as f:
        for row in csv.DictReader(f):
            k = key_of(row)
            if row["class"] == "urllc":
                ul[k].append(float(row["ul_availability"]))
                dl[k].append(float(row["dl_availability"]))
            elif int(row["utilized"]) > 0:
                pc[k].append(int(row["collided"]) / int(row["utilized"]))
    for k, v in ul.items():
        got[k]["ul_availability"] = mean(v)
    for k, v in dl.items():
        got[k]["dl_availability"] = mean(v)
    for k, v in pc.items():
        got[k]["collision_probability"] = mean(v)
    return got


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dir", required=True, type=Path)
    ap.add_argument("--rel-tol", type=float, default=1e-12)
    args = ap.parse_args()

    checked = ("download_time_s", "upload_time_s", "iteration_time_s", "ul_availability", "dl_availability",
               "collision_probability")
    reported = defaultdict(dict)
    with open(args.dir / "results.csv", newline="") as f:
        for row in csv.DictReader(f):
            if row["metric"] in checked:
                reported[key_of(row)][row["metric"]] = float(row["value"])

    got = recompute(args.dir)
    bad = 0
    compared = 0
    for k in sorted(set(reported) | set(got)):
        for m in checked:
            a = reported.get(k, {}).get(m)
            b = got.get(k, {}).get(m)
            if a is None and b is None:
                continue
            if a is None or b is None:
                print(f"mismatch {k} {m}: reported {a}, recomputed {b}")
                bad += 1
                continue
            compared += 1
            if abs(a - b) > args.rel_tol * max(abs(a), abs(b)):
                print(f"mismatch {k} {m}: reported {a!r}, recomputed {b!r}")
                bad += 1
    print(f"{compared} values compared, {bad} mismatches")
    return 1 if bad or compared == 0 else 0


if __name__ == "__main__":
    sys.exit(main())
