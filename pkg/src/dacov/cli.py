"""Command-line frontend.

Subcommands wire the library into the evaluation workflows: covariance
extraction, matching accuracy by uncertainty bin, pose estimation under the
uncertainty modes, the weighted-PnP validation harness and the
structure-tensor bound check. Exit codes: 0 success, 1 validation failure,
2 usage or input error. Set DAC_LOG to control log verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

USAGE_ERROR = 2
VALIDATION_FAILURE = 1

logger = logging.getLogger("dacov")


class CliError(Exception):
    """Input or usage problem; maps to exit code 2."""


def _setup_logging() -> None:
    level = os.environ.get("DAC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def cmd_extract(args: argparse.Namespace) -> int:
    from .covariance import CovarianceParams, batch_covariances, make_records, write_covariance_records
    from .scoremap import Keypoint, load_score_map, nms_detect

    try:
        score_map = load_score_map(args.map, args.format)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc

    if args.keypoints:
        from .covariance import read_covariance_records
        from .scoremap import read_keypoints_csv

        try:
            keypoints = read_keypoints_csv(args.keypoints)
        except (ValueError, KeyError):
            try:
                keypoints = [r.keypoint for r in read_covariance_records(args.keypoints)]
            except (OSError, ValueError, KeyError) as exc:
                raise CliError(f"bad keypoint file: {exc}") from exc
        except OSError as exc:
            raise CliError(f"bad keypoint file: {exc}") from exc
    else:
        keypoints = nms_detect(score_map, nms_radius=args.nms_radius,
                               max_keypoints=args.max_keypoints, min_score=args.min_score)
    logger.info("extracting %d keypoints with method=%s", len(keypoints), args.method)
    params = CovarianceParams(window_size=args.window, sigma=args.sigma)
    covs = batch_covariances(score_map, keypoints, method=args.method, params=params)
    write_covariance_records(make_records(keypoints, covs, args.method), args.out)
    print(f"wrote {len(covs)} covariance records to {args.out}")
    return 0


def cmd_eval_mma(args: argparse.Namespace) -> int:
    from .covariance import read_covariance_records
    from .matching import (
        Homography,
        Match,
        match_error,
        mma_by_uncertainty,
        mutual_nearest_neighbor,
        parse_threshold_range,
    )

    try:
        recs_a = read_covariance_records(args.records_a)
        recs_b = read_covariance_records(args.records_b)
        H = Homography.from_file(args.homography)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(str(exc)) from exc

    if args.matches:
        try:
            pairs = np.loadtxt(args.matches, dtype=int, ndmin=2)
        except (OSError, ValueError) as exc:
            raise CliError(f"bad matches file: {exc}") from exc
        index_pairs = [(int(i), int(j)) for i, j in pairs]
    elif args.desc_a and args.desc_b:
        try:
            desc_a = np.load(args.desc_a)
            desc_b = np.load(args.desc_b)
        except (OSError, ValueError) as exc:
            raise CliError(f"bad descriptor file: {exc}") from exc
        index_pairs = mutual_nearest_neighbor(desc_a, desc_b)
    else:
        raise CliError("provide either --matches or both --desc-a and --desc-b")

    by_id_a = {r.id: r for r in recs_a}
    by_id_b = {r.id: r for r in recs_b}
    errors = []
    for i, j in index_pairs:
        if i not in by_id_a or j not in by_id_b:
            raise CliError(f"match ({i}, {j}) references unknown record ids")
        ra, rb = by_id_a[i], by_id_b[j]
        m = Match(ref_xy=np.array([ra.x, ra.y]), tgt_xy=np.array([rb.x, rb.y]),
                  ref_cov=ra.cov, tgt_cov=rb.cov)
        errors.append(match_error(m, H))

    thresholds = parse_threshold_range(args.thresholds)
    try:
        table = mma_by_uncertainty(errors, thresholds=thresholds, n_bins=args.bins)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    table.write_csv(args.out_table)
    if args.out_summary:
        table.write_json(args.out_summary)
    print(f"mean MMA per bin: {[round(m, 4) for m in table.mean_mma]}")
    return 0


def cmd_eval_pose(args: argparse.Namespace) -> int:
    from .geometry import evaluate_scene, load_scene

    try:
        scene = load_scene(args.scene)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    report = evaluate_scene(scene, mode=args.mode)
    report.to_json(args.out)
    agg = report.aggregate()
    print(f"mode={args.mode} frames_ok={agg['n_ok']} frames_failed={agg['n_failed']} "
          f"mean_e_rot_deg={agg['mean_e_rot_deg']} mean_e_t={agg['mean_e_t']}")
    return 0


def cmd_validate_epnpu(args: argparse.Namespace) -> int:
    from .synth import run_epnpu_validation

    report = run_epnpu_validation(trials=args.trials, n_points=args.points, seed=args.seed)
    if args.out:
        report.to_json(args.out)
    for lv in report.levels:
        print(f"[{lv.label}] mean_e_rot: epnp={lv.mean_e_rot['epnp']:.4g} "
              f"epnpu_true={lv.mean_e_rot['epnpu_true']:.4g} "
              f"identity_diff={lv.max_identity_diff:.2e} failures={lv.n_failures}")
    print(f"identity_equivalent={report.identity_equivalent} "
          f"improves_over_baseline={report.improves_over_baseline}")
    return 0 if report.passed else VALIDATION_FAILURE


def cmd_crlb_check(args: argparse.Namespace) -> int:
    from .covariance import uniform_window
    from .synth import crlb_empirical_check

    blob_sigma = tuple(float(s) for s in args.blob_sigma.split(","))
    if len(blob_sigma) == 1:
        blob_sigma = blob_sigma[0]
    report = crlb_empirical_check(
        blob_sigma=blob_sigma,
        noise_sigma=args.noise_sigma,
        n_trials=args.trials,
        window=uniform_window(args.window),
        seed=args.seed,
    )
    if args.out:
        report.to_json(args.out)
    print(f"frobenius_rel_err={report.frobenius_rel_err:.4f} "
          f"boundary_excluded={report.n_boundary_excluded}/{report.n_trials}")
    return 0 if report.frobenius_rel_err <= args.tolerance else VALIDATION_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dacov", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="detect keypoints and write covariance records")
    p.add_argument("--map", required=True, help="score-map file")
    p.add_argument("--format", choices=("npy", "pgm16", "raw_f32"), default=None)
    p.add_argument("--method", choices=("iso", "full"), default="full")
    p.add_argument("--window", type=int, default=7)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--nms-radius", type=int, default=4)
    p.add_argument("--max-keypoints", type=int, default=None)
    p.add_argument("--min-score", type=float, default=-np.inf)
    p.add_argument("--keypoints", default=None, help="precomputed keypoint records (skips NMS)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval-mma", help="matching accuracy per uncertainty bin")
    p.add_argument("--records-a", required=True)
    p.add_argument("--records-b", required=True)
    p.add_argument("--homography", required=True)
    p.add_argument("--matches", default=None, help="text file with one 'i j' pair per line")
    p.add_argument("--desc-a", default=None, help="npy descriptor matrix for records-a")
    p.add_argument("--desc-b", default=None, help="npy descriptor matrix for records-b")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--thresholds", default="1..10")
    p.add_argument("--out-table", required=True)
    p.add_argument("--out-summary", default=None)
    p.set_defaults(func=cmd_eval_mma)

    p = sub.add_parser("eval-pose", help="triangulate, localize and refine query frames")
    p.add_argument("--scene", required=True)
    p.add_argument("--mode", choices=("none", "iso2d", "full2d", "iso2d+3d", "full2d+3d"),
                   default="full2d")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_pose)

    p = sub.add_parser("validate-epnpu", help="synthetic-noise validation of the weighted solver")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_validate_epnpu)

    p = sub.add_parser("crlb-check", help="Monte Carlo bound check for the structure tensor")
    p.add_argument("--blob-sigma", default="3.0", help="isotropic sigma or 'sx,sy'")
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=20000)
    p.add_argument("--window", type=int, default=7)
    p.add_argument("--tolerance", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_crlb_check)

    for sp in sub.choices.values():
        sp.add_argument("--threads", type=int, default=1,
                        help="reserved; results are deterministic regardless")
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
