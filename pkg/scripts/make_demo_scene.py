#!/usr/bin/env python3
"""Write a synthetic multi-view scene file for the `dacov eval-pose` command."""

from __future__ import annotations

import argparse

from dacov.geometry import save_scene
from dacov.synth import NoiseSpec, synth_multiview_scene


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tracks", type=int, default=60)
    parser.add_argument("--ref-frames", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--clean", action="store_true", help="no observation noise")
    parser.add_argument("--out", default="scene.json")
    args = parser.parse_args()

    noise = None if args.clean else NoiseSpec(
        kind="mixture",
        components=(
            (0.7, NoiseSpec(kind="iso_gauss", sigma=0.3)),
            (0.3, NoiseSpec(kind="aniso_gauss", sigma_x=4.0, sigma_y=0.3, theta=0.7)),
        ),
    )
    scene = synth_multiview_scene(
        n_tracks=args.tracks, n_ref_frames=args.ref_frames, noise_2d=noise, seed=args.seed
    )
    save_scene(scene, args.out)
    print(f"wrote {args.tracks}-track scene with query frame {scene.query_frames} to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
