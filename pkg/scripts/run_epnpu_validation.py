#!/usr/bin/env python3
"""Synthetic-noise validation of the weighted PnP solver.

Sweeps noise magnitudes, comparing EPnP, EPnPU with identity covariances and
EPnPU with the true generating covariances, with and without 3D noise.
Writes a JSON report and prints one table row per level.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from dacov.synth import NoiseSpec, run_epnpu_validation


def build_levels(scales: list[float]) -> list[tuple[str, NoiseSpec, NoiseSpec | None]]:
    base = NoiseSpec(
        kind="mixture",
        components=(
            (0.7, NoiseSpec(kind="iso_gauss", sigma=0.5)),
            (0.3, NoiseSpec(kind="aniso_gauss", sigma_x=5.0, sigma_y=0.5, theta=0.6)),
        ),
    )
    noise3d = NoiseSpec(
        kind="mixture",
        components=(
            (0.8, NoiseSpec(kind="iso_gauss", sigma=0.01)),
            (0.2, NoiseSpec(kind="iso_gauss", sigma=0.08)),
        ),
    )
    levels = [(f"2d_x{s:g}", base.scaled(s), None) for s in scales]
    levels += [(f"2d+3d_x{s:g}", base.scaled(s), noise3d) for s in scales]
    return levels


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=500)
    parser.add_argument("--points", type=int, default=50)
    parser.add_argument("--scales", default="0.5,1,2,5", help="comma list of noise multipliers")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="epnpu_validation.json")
    args = parser.parse_args()

    scales = [float(s) for s in args.scales.split(",")]
    report = run_epnpu_validation(
        trials=args.trials, n_points=args.points, levels=build_levels(scales), seed=args.seed
    )
    report.to_json(Path(args.out))

    header = f"{'level':<14} {'e_rot epnp':>11} {'e_rot epnpu':>12} {'e_t epnp':>10} {'e_t epnpu':>10} {'id diff':>9}"
    print(header)
    print("-" * len(header))
    for lv in report.levels:
        print(
            f"{lv.label:<14} {lv.mean_e_rot['epnp']:>11.4f} {lv.mean_e_rot['epnpu_true']:>12.4f} "
            f"{lv.mean_e_t['epnp']:>10.4f} {lv.mean_e_t['epnpu_true']:>10.4f} "
            f"{lv.max_identity_diff:>9.1e}"
        )
    print(f"\nidentity_equivalent={report.identity_equivalent} "
          f"improves_over_baseline={report.improves_over_baseline}")
    print(f"report written to {args.out}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
