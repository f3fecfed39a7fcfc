"""Write the CSV data behind the three figures (response curve, VDP, Q map).

    python scripts/make_figures.py --outdir figures
"""

import argparse
from pathlib import Path

from pnrd.cli import main


def run(*argv: str) -> None:
    code = main(list(argv))
    if code != 0:
        raise SystemExit(code)


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--outdir", type=Path, default=Path("figures"))
    return p.parse_args()


def main_script() -> None:
    args = parse_args()
    args.outdir.mkdir(parents=True, exist_ok=True)
    # Fig. 1: saturation of the mean count, eta = 0.5
    for N in (1, 2, 3, 5, 10):
        run("response-curve", "--eta", "0.5", "--n-max-count", str(N),
            "--out", str(args.outdir / f"response_N{N}.csv"))
    # Fig. 2: difference variance for coherent and twin-beam light
    for eta in ("0.5", "1.0"):
        for N in (3, 10):
            run("vdp-curve", "--eta1", eta, "--eta2", eta, "--n1", str(N), "--n2", str(N),
                "--out", str(args.outdir / f"vdp_eta{eta}_N{N}.csv"))
    # Fig. 3: Q over (nbar, eta) for N = 3, with both ridge lines
    run("q-map", "--n-max-count", "3", "--out", str(args.outdir / "q_map_N3.csv"))
    print(f"wrote figure data to {args.outdir}/")


if __name__ == "__main__":
    main_script()
