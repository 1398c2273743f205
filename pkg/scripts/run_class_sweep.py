#!/usr/bin/env python3
"""Class-count sweep on the reference benchmark geometry.

For each inlier class count, report the unadapted baseline AUROC and the
AUROC after cluster adaptation and after center-loss adaptation.  The
cluster objective should gain with many classes while the center loss
degrades; with one broad class both behave alike (see run_beta_ablation.py
for the gate sweep).
"""

import argparse
import dataclasses
import sys

from occadapt import gen_synthetic, reference, train
from occadapt.cli import run_eval


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--class-counts", default="2,4,8,16")
    ap.add_argument("--out", default=None, help="optional CSV path")
    args = ap.parse_args()

    rows = [("m", "baseline", "cluster", "center")]
    print("  ".join(f"{c:>9}" for c in rows[0]))
    for m in (int(c) for c in args.class_counts.split(",")):
        spec = dataclasses.replace(reference.multiclass_spec(), m=m)
        train_fm, test_fm = gen_synthetic(spec)
        _, base = run_eval(train_fm, test_fm, None, 2, False)
        row = [str(m), f"{base.auroc:.4f}"]
        for cfg in (reference.multiclass_config(),
                    reference.center_convergence_config()):
            params, _ = train(train_fm, cfg)
            _, rep = run_eval(train_fm, test_fm, params, 2, False)
            row.append(f"{rep.auroc:.4f}")
        rows.append(tuple(row))
        print("  ".join(f"{c:>9}" for c in row))

    if args.out:
        with open(args.out, "w") as f:
            for row in rows:
                f.write(",".join(row) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
