"""Independent preprocessing reference for the golden payloads.

Median baseline removal, linear resampling to 500 Hz, central 5000-sample
window, population z-score. Prints the values frozen into
tests/unit/test_dsp.cpp and tests/data/oracle/*.window.
"""
import json
import pathlib
import re
import sys

import numpy as np

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def load(name):
    raw = (DATA / "golden" / name).read_text()
    if raw.lstrip().startswith("<?xml"):
        rate = int(re.search(r'rateHz="(\d+)"', raw).group(1))
        body = re.search(r"<samples>(.*)</samples>", raw, re.S).group(1)
        uv = np.array([int(t) for t in body.split()], dtype=np.float64)
    else:
        doc = json.loads(raw)
        rate = doc["rate"]
        uv = np.array(doc["samples_uV"], dtype=np.float64)
    return uv / 1000.0, rate


def baseline(x, rate):
    half = int(np.floor(0.6 * rate / 2.0))
    out = np.empty_like(x)
    for i in range(len(x)):
        lo, hi = max(0, i - half), min(len(x), i + half + 1)
        out[i] = x[i] - np.median(x[lo:hi])
    return out


def resample(x, src, dst):
    n_out = int(np.floor(len(x) * dst / src + 0.5))
    pos = np.arange(n_out) * (src / dst)
    return np.interp(pos, np.arange(len(x)), x)


def window(x):
    start = (len(x) - 5000) // 2
    return x[start:start + 5000], start / 500.0


def main():
    out_dir = DATA / "oracle"
    out_dir.mkdir(exist_ok=True)
    for name in ["kardia.json", "watch.ecg.xml", "fitbit.json"]:
        x, rate = load(name)
        y = resample(baseline(x, rate), rate, 500)
        w, start_s = window(y)
        z = (w - w.mean()) / w.std()
        stem = name.split(".")[0]
        np.savetxt(out_dir / f"{stem}.window", z, fmt="%.17g")
        print(f"{name}: rate={rate} n={len(x)} resampled={len(y)} start_s={start_s!r}")
        print(f"  z[0]={z[0]!r} z[1]={z[1]!r} z[2500]={z[2500]!r} z[4999]={z[4999]!r}")
        print(f"  sum|z|={np.abs(z).sum()!r}")


if __name__ == "__main__":
    sys.exit(main())
