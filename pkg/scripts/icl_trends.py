#!/usr/bin/env python3
"""Order-decay and shots sweeps on the in-context learning analog.

Prints the median importance of data_order for each order decay and of
sample_choice for each number of exemplars per class.

    python3 scripts/icl_trends.py --decays 0,0.25,0.5 --shots 1,2,5,10
"""

import argparse
from dataclasses import replace

import numpy as np

from randlens.experiments import ICL_FACTORS, ToyICL
from randlens.factor_space import UNBOUNDED, build_factor_space
from randlens.workflows import RunSettings, repetition_seed, run_investigation


def median_importance(factor, reps, seed, n, m, **overrides):
    space = build_factor_space([(f, UNBOUNDED) for f in ICL_FACTORS])
    adapter = ToyICL(replace(ToyICL.default_config, **overrides))
    return float(np.median([
        run_investigation(adapter, space, [factor], RunSettings(n=n, m=m, master_seed=repetition_seed(seed, r)))
        .result(factor).importance
        for r in range(reps)
    ]))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--decays", default="0,0.1,0.25,0.5")
    ap.add_argument("--shots", default="1,2,5,10")
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--m", type=int, default=20)
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--seed", type=int, default=55)
    args = ap.parse_args()

    for decay in (float(v) for v in args.decays.split(",")):
        imp = median_importance("data_order", args.reps, args.seed, args.n, args.m, order_decay=decay)
        print(f"order_decay={decay:<5g} data_order importance {imp:+.3f}")
    for shots in (int(v) for v in args.shots.split(",")):
        imp = median_importance("sample_choice", args.reps, args.seed, args.n, args.m, shots=shots)
        print(f"shots={shots:<3d} sample_choice importance {imp:+.3f}")


if __name__ == "__main__":
    main()
