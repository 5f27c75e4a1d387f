"""Run the toy efficacy experiment and freeze its results as a test fixture.

    python3 scripts/pilot_efficacy.py [--out tests/fixtures/efficacy_pilot.json]
"""
import argparse
import json
import pathlib

from praf import kernels
from praf.efficacy import run_experiment

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(ROOT / "tests" / "fixtures" / "efficacy_pilot.json"))
    args = parser.parse_args()

    def show(rec):
        gains = " ".join(f"{g:+.5f}" for g in rec["ensemble_gain"])
        print(f"pair {rec['pair_seed']}: ensemble {gains}  held-out {rec['held_out_gain']:+.5f}"
              f"  ({rec['seconds']:.1f}s)", flush=True)

    result = run_experiment(progress=show)
    result["backend"] = kernels.BACKEND
    pathlib.Path(args.out).write_text(json.dumps(result, indent=2) + "\n")
    print(f"mean ensemble gain {result['mean_ensemble_gain']:.5f}, "
          f"held-out improved on {result['held_out_improved']}/10 -> {args.out}")


if __name__ == "__main__":
    main()
