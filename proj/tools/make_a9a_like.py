#!/usr/bin/env python3
"""Generate a synthetic LIBSVM file shaped like a9a.

123 binary features split into 14 one-hot groups (same group sizes as the
adult census encoding), labels drawn from a planted logistic model.
Output is deterministic for a given seed.
"""
import argparse
import math
import random

GROUPS = [5, 8, 5, 16, 5, 7, 14, 6, 5, 2, 2, 2, 5, 41]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=20240917)
    ap.add_argument("--missing", type=float, default=0.02)
    ap.add_argument("out")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    d = sum(GROUPS)
    weights = [rng.gauss(0.0, 1.0) for _ in range(d)]
    # skewed category frequencies, as in census data
    probs = []
    for size in GROUPS:
        raw = [rng.random() ** 2 + 0.02 for _ in range(size)]
        total = sum(raw)
        probs.append([r / total for r in raw])
    bias = -0.8

    with open(args.out, "w") as fh:
        fh.write("# synthetic a9a-shaped fixture: seed=%d rows=%d\n" % (args.seed, args.rows))
        for row in range(args.rows):
            active = []
            offset = 0
            for g, size in enumerate(GROUPS):
                if rng.random() >= args.missing:
                    pick = rng.choices(range(size), weights=probs[g])[0]
                    active.append(offset + pick)
                offset += size
            # make sure the last column is present at least once
            if row == 0:
                active[-1] = d - 1
            margin = bias + sum(weights[j] for j in active) / math.sqrt(len(GROUPS))
            label = 1 if rng.random() < 1.0 / (1.0 + math.exp(-margin)) else -1
            feats = " ".join("%d:1" % (j + 1) for j in sorted(active))
            fh.write("%+d %s\n" % (label, feats))


if __name__ == "__main__":
    main()
