"""Run both calibration protocols on synthetic data and print the recovered efficiencies.

    python scripts/calibration_demo.py --seed 1
"""

import argparse

from pnrd.calibration import (
    analytic_run,
    calibrate_tmc_nonlinear,
    calibrate_twb_linear,
    generate_synthetic_run,
    linear_regime_bound,
)
from pnrd.povm import DetectorModel

TRUTHS = [(0.6, 0.4, 10), (0.85, 0.85, 10), (0.7, 0.5, 3)]
TWB_GRID = [0.1, 0.2, 0.5, 1, 2, 5, 10, 20]
TMC_GRIDS = {3: [0.5, 1, 2, 4, 8, 16, 32, 64], 10: [1, 2, 5, 10, 20, 50, 100, 200]}


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--twb-trials", type=int, default=10**6)
    p.add_argument("--tmc-trials", type=int, default=10**5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--noiseless", action="store_true", help="use exact expectations instead of Monte Carlo")
    return p.parse_args()


def main() -> None:
    args = parse_args()
    print(f"{'truth':>18}  {'protocol':>13}  {'eta1':>8} {'eta2':>8}  {'|err|':>7}  N-hat")
    for i, (eta1, eta2, N) in enumerate(TRUTHS):
        d1, d2 = DetectorModel(eta1, N), DetectorModel(eta2, N)
        if args.noiseless:
            twb = analytic_run("twb", d1, d2, TWB_GRID, args.twb_trials)
            tmc = analytic_run("tmc", d1, d2, TMC_GRIDS[N], args.tmc_trials)
        else:
            twb = generate_synthetic_run("twb", d1, d2, TWB_GRID, args.twb_trials, args.seed + i, args.workers)
            tmc = generate_synthetic_run("tmc", d1, d2, TMC_GRIDS[N], args.tmc_trials, args.seed + 100 + i, args.workers)
        label = f"({eta1},{eta2},N={N})"
        for name, res in (("twb-linear", calibrate_twb_linear(twb)), ("tmc-nonlinear", calibrate_tmc_nonlinear(tmc))):
            err = max(res.errors_against(twb.truth))
            nhat = "" if res.n1_hat is None else f"{res.n1_hat},{res.n2_hat}"
            print(f"{label:>18}  {name:>13}  {res.eta1:8.4f} {res.eta2:8.4f}  {err:7.4f}  {nhat}")
    print(f"linear regime: nbar < {linear_regime_bound(DetectorModel(0.33, 1)):.3f} (eta=0.33, N=1), "
          f"< {linear_regime_bound(DetectorModel(0.85, 10)):.2f} (eta=0.85, N=10)")


if __name__ == "__main__":
    main()
