"""Compare the compiled and pure-Python XOR kernels.

    python3 benchmarks/bench_xor.py [--sizes 1024,65536,1048576] [--repeat 5]
"""

import argparse
import os
import sys
import timeit

from seedblock._kernel import BACKEND, KERNELS
from seedblock.codec import SEED_LEN


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="256,4096,65536,1048576,16777216")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    if "cython" not in KERNELS:
        print("compiled kernel not built; only the fallback is available", file=sys.stderr)
    print(f"active backend: {BACKEND}")
    seed = os.urandom(SEED_LEN)
    names = sorted(KERNELS)
    print(f"{'bytes':>10}  " + "  ".join(f"{n + ' MB/s':>14}" for n in names)
          + ("  speedup" if len(names) > 1 else ""))
    for size in (int(s) for s in args.sizes.split(",")):
        data = os.urandom(size)
        rates = {}
        for name in names:
            fn = KERNELS[name]
            number = max(1, (1 << 22) // max(size, 1))
            best = min(timeit.repeat(lambda: fn(data, seed), number=number, repeat=args.repeat))
            rates[name] = size * number / best / 1e6
        line = f"{size:>10}  " + "  ".join(f"{rates[n]:>14.1f}" for n in names)
        if len(names) > 1:
            line += f"  {rates['cython'] / rates['python']:>6.2f}x"
        print(line)


if __name__ == "__main__":
    main()
