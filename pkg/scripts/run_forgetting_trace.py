#!/usr/bin/env python3
"""Epoch-wise AUROC traces for both objectives on the reference benchmark.

Runs the cluster objective and the center loss for a fixed budget with an
evaluation hook every epoch and writes one trace CSV per objective.  The
center loss peaks early and decays (catastrophic drift toward the fixed
center); the gated cluster objective holds its level.
"""

import argparse
import sys

from occadapt import gen_synthetic, reference, train
from occadapt.cli import run_eval


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=reference.TRACE_EPOCHS)
    ap.add_argument("--out-prefix", default="trace",
                    help="writes <prefix>_<objective>.csv")
    args = ap.parse_args()

    train_fm, test_fm = gen_synthetic(reference.multiclass_spec())
    for obj in ("ca2", "center"):
        cfg = reference.multiclass_config(objective=obj,
                                          max_epochs=args.epochs)
        hook = lambda epoch, params: run_eval(train_fm, test_fm, params,
                                              2, False)[1].auroc
        _, log = train(train_fm, cfg, epoch_hook=hook)
        path = f"{args.out_prefix}_{obj}.csv"
        with open(path, "w") as f:
            f.write("epoch,auroc\n")
            for e, a in enumerate(log.trace):
                f.write(f"{e},{a!r}\n")
        peak = max(log.trace)
        print(f"{obj}: peak {peak:.4f} final {log.trace[-1]:.4f} "
              f"drop {peak - log.trace[-1]:.4f} -> {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
