"""Command-line front end.

Exit codes: 0 success, 1 check failure, 2 usage/parse/geometry error,
3 degenerate input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as vio
from .core import AspectsError, DegenerateMaskError, Hemisphere, Region
from .losses import (
    EPS,
    FocalParams,
    LossWeights,
    boundary_loss,
    combined_loss,
    dice_loss,
    focal_loss,
    gradient_check,
    signed_distance,
)
from .metrics import (
    PAIRED_COLUMNS,
    agreement,
    binned_table,
    dice,
    dice_by_volume_bucket,
    format_pct,
    per_region_dice,
    per_score_table,
    rates_to_json,
    voxel_confusion,
)
from .phantom import DEFAULT_DIMS, PhantomSpec, SplitMix64, make_anatomy, make_infarct
from .scoring import VOLUME_BUCKETS, InvolvementPolicy, score

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DEGENERATE = 3

GRAD_TOLERANCE = 1e-4
GRAD_STEP = 1e-5

DEFAULT_PLAN = (("left", "Caudate", 0.5), ("left", "InsularCortex", 0.3))


class UsageError(Exception):
    pass


def _load_json_arg(value: str | None, what: str):
    """Accept inline JSON or a path to a JSON file."""
    if value is None:
        return None
    text = value.strip()
    if not text.startswith(("{", "[")):
        try:
            text = Path(value).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read {what} file {value!r}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid {what} JSON: {exc}") from None


def _config(args) -> dict:
    cfg = _load_json_arg(getattr(args, "config", None), "config") or {}
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(cfg) - {"policy", "weights", "focal", "smooth"}
    if unknown:
        raise UsageError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def _build(cls, doc, what):
    if doc is None:
        return cls()
    if not isinstance(doc, dict):
        raise UsageError(f"{what} must be a JSON object")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid {what}: {exc}") from None


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# -- score -------------------------------------------------------------------


def cmd_score(args) -> int:
    cfg = _config(args)
    policy_doc = _load_json_arg(args.policy, "policy") or cfg.get("policy")
    policy = _build(InvolvementPolicy, policy_doc, "policy")
    infarct = vio.read_mask(args.infarct)
    anatomy = vio.read_labels(args.anatomy)
    report = score(infarct, anatomy, policy)
    vio.write_report(report, args.out)
    for hemi in Hemisphere:
        res = report.hemisphere(hemi)
        involved = ", ".join(r.value for r in Region if r in res.involved) or "none"
        print(f"{hemi.value}: {res.score}/10 (involved: {involved})")
    print(f"affected hemisphere: {report.affected_hemisphere.value}")
    print(f"score: {report.score}/10, bin: {report.bin.value}")
    print(f"infarct volume: {report.infarct_volume_ml:.6g} ml")
    return EXIT_OK


# -- eval-seg ----------------------------------------------------------------


def _fmt(x) -> str:
    return "undefined" if x is None else f"{x:.4f}"


def cmd_eval_seg(args) -> int:
    if len(args.pred) != len(args.gt):
        raise UsageError(f"{len(args.pred)} --pred files but {len(args.gt)} --gt files")
    out: dict = {"n_cases": len(args.pred)}
    if args.anatomy:
        cases = [(vio.read_labels(p), vio.read_labels(g)) for p, g in zip(args.pred, args.gt)]
        results = [per_region_dice(p, g) for p, g in cases]
        overall = float(np.mean([r.overall for r in results]))
        regions = {r.value: float(np.mean([res.regions[r] for res in results])) for r in Region}
        paired = {k: float(np.mean([res.paired[k] for res in results])) for k in PAIRED_COLUMNS}
        print(f"cases: {len(cases)}")
        print(f"overall DSC: {overall:.4f}")
        print("per-region DSC:")
        for name, v in regions.items():
            print(f"  {name:<18} {v:.4f}")
        print("grouped DSC:")
        for name, v in paired.items():
            print(f"  {name:<18} {v:.4f}")
        out.update(overall_dsc=overall, regions=regions, paired=paired)
    else:
        cases = [(vio.read_mask(p), vio.read_mask(g)) for p, g in zip(args.pred, args.gt)]
        dscs = [dice(p, g) for p, g in cases]
        conf = [voxel_confusion(p, g) for p, g in cases]
        summary = {
            "dsc": float(np.mean(dscs)),
            "sensitivity": float(np.mean([c.sensitivity for c in conf])),
            "specificity": float(np.mean([c.specificity for c in conf])),
        }
        buckets = dice_by_volume_bucket(cases)
        print(f"cases: {len(cases)}")
        print(f"DSC: {summary['dsc']:.4f}")
        print(f"sensitivity: {summary['sensitivity']:.4f}")
        print(f"specificity: {summary['specificity']:.4f}")
        print("DSC by infarct volume:")
        for b in VOLUME_BUCKETS:
            print(f"  {b:<8} {_fmt(buckets.get(b))}")
        out.update(summary, volume_buckets={b: buckets.get(b) for b in VOLUME_BUCKETS}, per_case_dsc=dscs)
    if args.out:
        _write_json(args.out, out)
    return EXIT_OK


# -- agreement ---------------------------------------------------------------


def _print_rates(title, table):
    print(title)
    print(f"  {'class':<10} {'sensitivity':>12} {'specificity':>12}")
    for key, rates in table.items():
        name = getattr(key, "label", str(key))
        if rates is None:
            print(f"  {name:<10} {'undefined':>12} {'undefined':>12}")
        else:
            print(f"  {name:<10} {_fmt(rates.sensitivity):>12} {_fmt(rates.specificity):>12}")


def cmd_agreement(args) -> int:
    try:
        table = vio.read_score_table(args.table)
    except OSError as exc:
        raise UsageError(f"cannot read table: {exc}") from None
    if len(table) == 0:
        raise UsageError("score table has no rows")
    stats = agreement(table)
    per_score = per_score_table(table)
    binned = binned_table(table)
    print(f"n: {stats.n}")
    print(f"exact agreement: {format_pct(stats.exact_fraction)}%")
    print(f"within-2 agreement: {format_pct(stats.within2_fraction)}%")
    r = "undefined" if stats.pearson_r is None else f"{stats.pearson_r:.4f}"
    print(f"pearson r: {r}")
    _print_rates("per-score (reference: score_b):", per_score)
    _print_rates("binned (reference: score_b):", binned)
    if args.out:
        _write_json(
            args.out,
            {
                "agreement": stats.as_dict(),
                "per_score": rates_to_json(per_score),
                "binned": rates_to_json(binned),
            },
        )
    return EXIT_OK


# -- phantom -----------------------------------------------------------------


def cmd_phantom(args) -> int:
    plan_doc = _load_json_arg(args.plan, "plan")
    plan = DEFAULT_PLAN if plan_doc is None else plan_doc
    if not isinstance(plan, list | tuple) or not all(
        isinstance(e, list | tuple) and len(e) == 3 for e in plan
    ):
        raise UsageError("plan must be a list of [hemisphere, region, fill_fraction] triples")
    try:
        spec = PhantomSpec(
            seed=args.seed, dims=tuple(args.dims), spacing=tuple(args.spacing), lesion_plan=tuple(plan)
        )
    except ValueError as exc:
        raise UsageError(f"invalid phantom: {exc}") from None
    policy = _build(InvolvementPolicy, _config(args).get("policy"), "policy")
    anatomy = make_anatomy(spec)
    infarct, expected = make_infarct(spec, anatomy, policy)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vio.write_volume(anatomy, out_dir / "anatomy.mha")
    vio.write_volume(infarct, out_dir / "infarct.mha")
    vio.write_report(expected, out_dir / "expected_report.json")
    print(f"wrote phantom (seed {spec.seed}, dims {'x'.join(map(str, spec.dims))}) to {out_dir}")
    return EXIT_OK


# -- loss-check --------------------------------------------------------------


def _sample_indices(candidates: np.ndarray, k: int, seed: int) -> list[int]:
    if candidates.size <= k:
        return candidates.tolist()
    rng = SplitMix64(seed)
    picked = set()
    while len(picked) < k:
        picked.add(int(candidates[rng.below(candidates.size)]))
    return sorted(picked)


def cmd_loss_check(args) -> int:
    cfg = _config(args)
    weights = _build(LossWeights, _load_json_arg(args.weights, "weights") or cfg.get("weights"), "weights")
    focal = _build(FocalParams, cfg.get("focal"), "focal")
    smooth = float(cfg.get("smooth", 1.0))
    if not smooth > 0:
        raise UsageError("smooth must be positive")
    if args.check_voxels < 1:
        raise UsageError("--check-voxels must be >= 1")

    prob = vio.read_probability(args.prob)
    gt = vio.read_mask(args.gt)
    if prob.dims != gt.dims:
        raise UsageError(f"dims mismatch: {prob.dims} vs {gt.dims}")
    phi = signed_distance(gt)
    if phi.degenerate:
        raise DegenerateMaskError("ground-truth mask is uniform; boundary loss undefined")

    p = prob.data
    g = gt.data
    terms, _ = combined_loss(p, g, weights, focal, smooth, phi=phi, terms=True)
    print(f"weights: alpha={weights.alpha:g} beta={weights.beta:g} gamma={weights.gamma:g}")
    print(f"focal    L1 = {terms.focal:.8g}")
    print(f"boundary L2 = {terms.boundary:.8g}")
    print(f"dice     L3 = {terms.dice:.8g}")
    print(f"combined L  = {terms.total:.8g}")

    # The focal term is clamped near 0 and 1, so its finite differences are
    # only meaningful where both probes stay inside the clamp.
    flat = p.reshape(-1)
    everywhere = np.arange(flat.size)
    smooth_zone = np.flatnonzero((flat > EPS + GRAD_STEP) & (flat < 1 - EPS - GRAD_STEP))
    checks = {
        "focal": (lambda x: focal_loss(x, g, focal), smooth_zone),
        "boundary": (lambda x: boundary_loss(x, g, phi), everywhere),
        "dice": (lambda x: dice_loss(x, g, smooth), everywhere),
        "combined": (lambda x: combined_loss(x, g, weights, focal, smooth, phi=phi), smooth_zone),
    }
    ok = True
    print("gradient check (central differences, step 1e-05):")
    print(f"  {'term':<10} {'voxels':>7} {'max rel err':>12}  status")
    for name, (fn, candidates) in checks.items():
        idx = _sample_indices(candidates, args.check_voxels, args.seed)
        err = gradient_check(fn, p, idx, GRAD_STEP) if idx else 0.0
        passed = err <= GRAD_TOLERANCE
        ok &= passed
        print(f"  {name:<10} {len(idx):>7} {err:>12.3e}  {'ok' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aspects", description="ASPECTS scoring and evaluation tools")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="JSON config (inline or file) with policy/weights/focal/smooth")
        return p

    p = with_config(sub.add_parser("score", help="score an infarct mask against an anatomy label map"))
    p.add_argument("--infarct", required=True)
    p.add_argument("--anatomy", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--policy", help="involvement policy JSON (inline or file)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval-seg", help="segmentation metrics over case pairs")
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--gt", nargs="+", required=True)
    p.add_argument("--anatomy", action="store_true", help="inputs are anatomy label maps")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_seg)

    p = sub.add_parser("agreement", help="agreement statistics for a two-rater score table")
    p.add_argument("--table", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_agreement)

    p = with_config(sub.add_parser("phantom", help="write a synthetic phantom"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--plan", help="lesion plan JSON: [[hemisphere, region, fraction], ...]")
    p.add_argument("--dims", type=int, nargs=3, default=list(DEFAULT_DIMS), metavar=("NX", "NY", "NZ"))
    p.add_argument("--spacing", type=float, nargs=3, default=[1.0, 1.0, 1.0], metavar=("SX", "SY", "SZ"))
    p.set_defaults(func=cmd_phantom)

    p = with_config(sub.add_parser("loss-check", help="evaluate the composite loss and check its gradients"))
    p.add_argument("--prob", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--weights", help="loss weights JSON {alpha, beta, gamma}")
    p.add_argument("--check-voxels", type=int, default=64, help="voxels sampled per gradient check")
    p.add_argument("--seed", type=int, default=0, help="seed for voxel sampling")
    p.set_defaults(func=cmd_loss_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegenerateMaskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (UsageError, AspectsError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
