#!/usr/bin/env python3
"""Matching accuracy vs estimated uncertainty on synthetic warped map pairs.

Builds blob score-map pairs related by known homographies, extracts keypoint
covariances with both estimators, propagates them through the homography and
draws match errors from the reported covariances. Emits the per-bin mean MMA
tables for plotting.
"""

from __future__ import annotations

import argparse

import numpy as np
from scipy.stats import spearmanr

from dacov.covariance import batch_covariances
from dacov.matching import MatchError, mma_by_uncertainty, propagate_covariance, scalar_uncertainty
from dacov.scoremap import Keypoint, nms_detect
from dacov.synth import NoiseSpec, synth_homography_pair, synth_multi_blob_scoremap, trial_rng


def collect_matches(method: str, n_target: int, seed: int) -> list[MatchError]:
    errors: list[MatchError] = []
    pair = 0
    while len(errors) < n_target:
        rng = trial_rng(seed, pair)
        base, _ = synth_multi_blob_scoremap(
            size=(256, 256), grid_step=22, sigma_range=(1.2, 4.5),
            amplitude_range=(0.35, 1.0), noise_sigma=0.005, seed=int(rng.integers(2**31)),
        )
        h = np.eye(3)
        h[0, 2], h[1, 2] = rng.uniform(-4, 4, 2)
        h[0, 0] += rng.uniform(-0.02, 0.02)
        h[1, 1] += rng.uniform(-0.02, 0.02)
        h[2, :2] = rng.uniform(-2e-5, 2e-5, 2)
        base, target, H = synth_homography_pair(
            base, h, noise=NoiseSpec(kind="iso_gauss", sigma=0.005), seed=int(rng.integers(2**31))
        )
        kps = nms_detect(base, nms_radius=5, max_keypoints=250, min_score=0.25)
        covs_r = batch_covariances(base, kps, method)
        for kp, cov_r in zip(kps, covs_r):
            mapped = H.apply(np.array([kp.x, kp.y]))
            if not (6 <= mapped[0] < 250 and 6 <= mapped[1] < 250):
                continue
            tgt_kp = Keypoint(x=round(float(mapped[0])), y=round(float(mapped[1])), score=0.0)
            cov_t = batch_covariances(target, [tgt_kp], method)[0]
            sigma_e = propagate_covariance(cov_r, cov_t, H, np.array([kp.x, kp.y]))
            e = rng.multivariate_normal(np.zeros(2), sigma_e.as_array())
            errors.append(MatchError(e=e, sigma_e=sigma_e, scalar_u=scalar_uncertainty(sigma_e)))
        pair += 1
    return errors[:n_target]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--matches", type=int, default=10000)
    parser.add_argument("--bins", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-prefix", default="mma")
    args = parser.parse_args()

    for method in ("full", "iso"):
        errors = collect_matches(method, args.matches, args.seed)
        norms = np.array([np.linalg.norm(me.e) for me in errors])
        thresholds = [float(t) for t in np.quantile(norms, np.linspace(0.1, 0.95, 10))]
        table = mma_by_uncertainty(errors, thresholds=thresholds, n_bins=args.bins)
        rho = spearmanr(np.arange(args.bins), table.mean_mma).statistic
        table.write_csv(f"{args.out_prefix}_{method}.csv")
        table.write_json(f"{args.out_prefix}_{method}.json")
        print(f"{method}: mean MMA per bin {[round(m, 3) for m in table.mean_mma]}")
        print(f"{method}: Spearman rho(bin, mean MMA) = {rho:.3f}")
    print(f"tables written to {args.out_prefix}_full.* and {args.out_prefix}_iso.*")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
