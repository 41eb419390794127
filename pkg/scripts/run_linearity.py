#!/usr/bin/env python3
"""Linearity study: commanded sub-fringe surface shifts vs measured separation.

Runs one sweep per --step-size value (default: the fine 5 nm and coarse
2025 nm protocols) and writes a results document plus plot data per sweep.
"""

import argparse
import pathlib

from qolcr import tracefile
from qolcr.config import default_config, load_config
from qolcr.experiments import linearity_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=pathlib.Path,
                        help="run configuration JSON (bundled defaults if omitted)")
    parser.add_argument("--output-dir", type=pathlib.Path, default=pathlib.Path("out"))
    parser.add_argument("--steps", type=int, default=10,
                        help="steps per sweep (default: 10)")
    parser.add_argument("--step-size", type=float, nargs="*",
                        default=[5.0, 2025.0], metavar="NM",
                        help="commanded step sizes in nm (default: 5 2025)")
    args = parser.parse_args()

    config = load_config(args.config) if args.config else default_config()
    args.output_dir.mkdir(parents=True, exist_ok=True)

    worst = 0.0
    for step_nm in args.step_size:
        result = linearity_experiment(config, step=step_nm * 1e-9,
                                      n_steps=args.steps)
        tag = f"{step_nm:g}nm"
        tracefile.write_json_document(
            result.to_dict(), args.output_dir / f"linearity_{tag}.json")
        commanded_um = [z * 1e6 for z in result.commanded_positions]
        tracefile.write_plot_data(
            args.output_dir / f"linearity_{tag}_measured.txt",
            ["commanded_um", "measured_separation_um"],
            [commanded_um, [m * 1e6 for m in result.measured_separations]],
            comment=f"{args.steps} steps of {step_nm:g} nm")
        tracefile.write_plot_data(
            args.output_dir / f"linearity_{tag}_deviations.txt",
            ["commanded_um", "deviation_nm"],
            [commanded_um, [d * 1e9 for d in result.deviations]],
            comment="deviation from the unit-slope line through the first point")
        worst = max(worst, result.max_abs_deviation)
        print(f"step {step_nm:g} nm: max |deviation| "
              f"{result.max_abs_deviation * 1e9:.3f} nm, "
              f"{len(result.failures)} failures")
    print(f"worst sweep deviation {worst * 1e9:.3f} nm")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
