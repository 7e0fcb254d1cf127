#!/usr/bin/env python3
"""Mitigation budget and evaluation size ablation on the fine-tuning analog.

Runs every (M, eval size) pair with ``--reps`` meta-repetitions and prints
median c_std and m_std per factor, plus the change of the last column
relative to the first.

    python3 scripts/ablation_trend.py --paired --reps 20 --reps-small 100
"""

import argparse

from randlens.experiments import FINETUNE_FACTORS, ToyFinetune, with_eval_size
from randlens.factor_space import UNBOUNDED, build_factor_space
from randlens.report import render_ablation_table
from randlens.workflows import RunSettings, run_ablation


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m-values", default="100,10")
    ap.add_argument("--eval-sizes", default="100%,10%")
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--reps-small", type=int, help="repetitions for the smallest M (noisier, cheaper); default --reps")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--paired", action="store_true",
                    help="only the (first M, first size) and (last M, last size) columns")
    ap.add_argument("--csv", help="also write the ablation table here")
    args = ap.parse_args()

    space = build_factor_space([(f, UNBOUNDED) for f in FINETUNE_FACTORS])
    base = ToyFinetune()
    settings = RunSettings(n=args.n, master_seed=args.seed)
    m_values = [int(v) for v in args.m_values.split(",")]
    sizes = args.eval_sizes.split(",")
    if args.paired:
        pairs = [(m_values[0], sizes[0]), (m_values[-1], sizes[-1])]
    else:
        pairs = [(m, s) for s in sizes for m in m_values]
    small_m = min(m_values)
    columns = [
        run_ablation(lambda s: with_eval_size(base, s), space, [m], [size], settings=settings,
                     repetitions=args.reps_small if m == small_m and args.reps_small else args.reps).columns[0]
        for m, size in pairs
    ]
    first, last = columns[0], columns[-1]
    for f in FINETUNE_FACTORS:
        cells = "  ".join(f"{c.factors[f]['c_std']:.4f}/{c.factors[f]['m_std']:.4f}" for c in columns)
        dc = last.factors[f]["c_std"] / first.factors[f]["c_std"] - 1
        dm = last.factors[f]["m_std"] / first.factors[f]["m_std"] - 1
        print(f"{f:16s} {cells}  c {dc:+.1%} m {dm:+.1%}")
    print("columns (c_std/m_std): " + ", ".join(f"M={c.m} eval={c.eval_label}" for c in columns))
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(render_ablation_table(columns))


if __name__ == "__main__":
    main()
