"""Freeze reference STOI scores for crates/core/tests/data/stoi.

Each <pair>.json sidecar names a clean WAV and the null segments to zero.
Writes reference.csv (pair,stoi) using pystoi.
"""
import csv
import json
import sys
from pathlib import Path

import numpy as np
from pystoi import stoi
from scipy.io import wavfile


def main(directory):
    d = Path(directory)
    rows = []
    for side in sorted(d.glob("*mW.json")):
        meta = json.loads(side.read_text())
        rate, data = wavfile.read(d / meta["clean_path"])
        clean = data.astype(np.float64) / 32768.0
        degraded = clean.copy()
        for seg in meta["nulls"]:
            degraded[seg["start"]:seg["end"]] = 0.0
        rows.append((side.stem, stoi(clean, degraded, rate, extended=False)))
    with open(d / "reference.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["pair", "stoi"])
        for pair, score in rows:
            w.writerow([pair, repr(float(score))])
    print(f"wrote {len(rows)} scores")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/data/stoi")
