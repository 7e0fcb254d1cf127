#!/usr/bin/env python3
"""How Random and Fixed baselines mislead when factors interact.

Sweeps the interaction amplitude and reports, per factor, the Random std
relative to the golden std, how often the Fixed verdict says "important", and
the median interactions importance.

    python3 scripts/strategy_failures.py --gammas 0,0.5,1,2
"""

import argparse

import numpy as np

from randlens.experiments import SyntheticOracle, SyntheticOracleSpec
from randlens.factor_space import build_factor_space
from randlens.stats import baseline_verdict
from randlens.workflows import RunSettings, repetition_seed, run_strategy_comparison


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--gammas", default="0,0.5,1,2")
    ap.add_argument("--effects", default="2,1,0")
    ap.add_argument("--noise", type=float, default=0.3)
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--m", type=int, default=20)
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--seed", type=int, default=123)
    args = ap.parse_args()

    effects = [float(v) for v in args.effects.split(",")]
    names = [f"f{i + 1}" for i in range(len(effects))]
    space = build_factor_space([(n, 30) for n in names])
    print(f"{'gamma':>5s} {'factor':6s} {'random/gm':>9s} {'fixed+':>6s} {'importance':>10s}")
    for gamma in (float(g) for g in args.gammas.split(",")):
        spec = SyntheticOracleSpec(effects=dict(zip(names, effects)), gamma=gamma, noise_std=args.noise)
        adapter = SyntheticOracle(spec, space)
        reps = [
            run_strategy_comparison(adapter, space, None,
                                    RunSettings(n=args.n, m=args.m, master_seed=repetition_seed(args.seed, r)))
            for r in range(args.reps)
        ]
        for f in names:
            std = {b.strategy: [] for b in reps[0].baselines}
            for rep in reps:
                for b in rep.baselines:
                    if b.factor == f:
                        std[b.strategy].append(b.std / rep.gm_std)
            fixed_yes = sum(baseline_verdict(v, 1.0) for v in std["fixed"])
            imp = np.median([rep.result(f).importance for rep in reps])
            print(f"{gamma:5.2f} {f:6s} {np.median(std['random']):9.3f} {fixed_yes:3d}/{args.reps:<2d} {imp:10.3f}")


if __name__ == "__main__":
    main()
