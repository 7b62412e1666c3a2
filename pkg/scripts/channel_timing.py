"""Wall time of the CF forward pass against the number of feature channels."""

import argparse
import time

import numpy as np

from cfnet import cf


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=64)
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--channels", type=int, nargs="+", default=[1, 2, 4, 8, 16, 32, 64])
    args = ap.parse_args()

    cfg = cf.CFConfig.default(args.m)
    rng = np.random.default_rng(0)
    print("channels,median_ms,ms_per_channel")
    for k in args.channels:
        x = rng.standard_normal((k, args.m, args.m))
        cf.cf_forward(x, cfg)
        times = []
        for _ in range(args.reps):
            t0 = time.perf_counter()
            cf.cf_forward(x, cfg)
            times.append(time.perf_counter() - t0)
        med = 1e3 * float(np.median(times))
        print(f"{k},{med:.4f},{med / k:.4f}")


if __name__ == "__main__":
    main()
