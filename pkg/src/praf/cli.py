"""Command-line entry point: ``praf attack | metrics | evaluate | synth``.

Exit codes: 0 success, 1 at least one pair/sample failed, 2 usage or
configuration error (nothing is written in that case).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from praf import judge
from praf.attack import run_attack
from praf.config import KEY_SECTION, RunConfig, load_config
from praf.errors import PrafError
from praf.imageio import load_image, save_image
from praf.manifest import load_manifest
from praf.metrics import QualityReport, psnr, ssim
from praf.surrogate import build_ensemble
from praf.synthetic import random_scene

logger = logging.getLogger("praf")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _add_config_flags(parser, keys):
    group = parser.add_argument_group("config overrides (one flag per config key)")
    for key in keys:
        if key == "seed":
            continue
        group.add_argument(f"--{key}", dest=f"cfg_{key}", metavar="VALUE", default=None,
                           help=f"override [{KEY_SECTION[key]}] {key}")


def _resolve_config(args):
    try:
        cfg = load_config(args.config) if args.config else RunConfig.defaults()
        for key in KEY_SECTION:
            value = getattr(args, f"cfg_{key}", None)
            if value is not None:
                cfg.override(key, value, source=f"--{key}")
        if getattr(args, "seed", None) is not None:
            cfg.override("seed", str(args.seed), source="--seed")
    except PrafError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _json_default(v):
    if isinstance(v, float) and not np.isfinite(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(type(v))


def _emit(obj, out_path=None):
    text = json.dumps(obj, indent=2, default=_json_default, allow_nan=False) \
        if out_path else json.dumps(obj, default=_json_default)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


# ---------------------------------------------------------------------------
# attack
# ---------------------------------------------------------------------------

def _attack_one(record, ensemble, attack_cfg):
    x_cle = load_image(record.clean_path)
    x_tgt = load_image(record.target_path)
    x_adv, trace = run_attack(x_cle, x_tgt, ensemble, attack_cfg)
    save_image(x_adv, record.output_path)
    trace.write(record.trace_path, record.stages_path)
    reloaded = load_image(record.output_path)
    return {
        "output": record.output_path,
        "psnr_db": psnr(reloaded, x_cle),
        "ssim": ssim(reloaded, x_cle),
        "linf": float(np.abs(reloaded - x_cle).max()),
        "final_L_total": trace.iterations[-1]["L_total"],
    }


def cmd_attack(args):
    cfg = _resolve_config(args)
    try:
        records = load_manifest(args.manifest)
        if not records:
            raise UsageError(f"{args.manifest}: manifest has no records")
        missing = [f"{args.manifest}:{r.lineno}: missing input {p}"
                   for r in records for p in (r.clean_path, r.target_path) if not os.path.isfile(p)]
        if missing:
            raise UsageError("\n".join(missing))
        ensemble = build_ensemble(cfg.encoder_configs())
        plans = []
        for r in records:
            pair_cfg = cfg.copy()
            for k, v in r.overrides.items():
                pair_cfg.override(k, v)
            attack_cfg = pair_cfg.attack_config()
            attack_cfg.schedule(cfg["image_size"])
            plans.append((r, attack_cfg))
    except PrafError as exc:
        raise UsageError(str(exc)) from None

    def work(plan):
        record, attack_cfg = plan
        try:
            return record, _attack_one(record, ensemble, attack_cfg), None
        except PrafError as exc:
            return record, None, str(exc)

    results, failures = [], []
    with ThreadPoolExecutor(max_workers=max(1, cfg["workers"])) as pool:
        for record, summary, err in pool.map(work, plans):
            if err is None:
                results.append(summary)
                logger.info("wrote %s (PSNR %.2f dB)", record.output_path, summary["psnr_db"])
            else:
                failures.append({"line": record.lineno, "output": record.output_path, "error": err})
    _emit({"pairs": results, "failures": failures}, args.summary)
    if failures:
        print(f"{len(failures)} of {len(plans)} pairs failed:", file=sys.stderr)
        for f in failures:
            print(f"  line {f['line']} ({f['output']}): {f['error']}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def cmd_metrics(args):
    if bool(args.manifest) == bool(args.images):
        raise UsageError("give either --manifest or two image paths")
    if args.manifest:
        try:
            pairs = [(r.clean_path, r.output_path) for r in load_manifest(args.manifest)]
        except PrafError as exc:
            raise UsageError(str(exc)) from None
    else:
        if len(args.images) != 2:
            raise UsageError("metrics takes exactly two image paths")
        pairs = [tuple(args.images)]
    report, failures = QualityReport(), []
    for clean, adv in pairs:
        try:
            report.add(clean, adv, load_image(adv), load_image(clean))
        except PrafError as exc:
            failures.append({"clean": clean, "adversarial": adv, "error": str(exc)})
    out = report.to_dict()
    out["failures"] = failures
    _emit(out, args.out)
    return EXIT_FAILED if failures else EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def cmd_evaluate(args):
    cfg = _resolve_config(args)
    if not cfg["model"]:
        raise UsageError("a judge model is required (config [judge] model or --model)")
    try:
        pairs = judge.read_caption_pairs(args.captions)
    except OSError as exc:
        raise UsageError(f"{args.captions}: {exc.strerror}") from None
    except PrafError as exc:
        raise UsageError(str(exc)) from None
    if not pairs:
        raise UsageError(f"{args.captions}: no caption pairs")
    ev = judge.evaluate_pairs(
        pairs, cfg["model"], cfg["endpoint"], thresholds=cfg["thresholds"], strict=cfg["strict"],
        concurrency=cfg["concurrency"], max_retries=cfg["max_retries"], backoff=cfg["backoff"],
        timeout=cfg["timeout"])
    _emit(ev.to_dict(), args.out)
    return EXIT_OK if ev.summaries else EXIT_FAILED


def cmd_synth(args):
    save_image(random_scene(np.random.default_rng(args.seed), args.size), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="praf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="manifest of image pairs -> adversarial PNGs and traces")
    p.add_argument("--config", help="config file (defaults apply when omitted)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--summary", help="write the JSON run summary here instead of stdout")
    _add_config_flags(p, [k for k, s in KEY_SECTION.items() if s != "judge"])
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("metrics", help="PSNR/SSIM quality report")
    p.add_argument("images", nargs="*", help="CLEAN ADVERSARIAL")
    p.add_argument("--manifest", help="compare each output against its clean image")
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("evaluate", help="score caption pairs with an LLM judge")
    p.add_argument("--config")
    p.add_argument("--captions", required=True, help="JSON lines with target_text/adversarial_text")
    p.add_argument("--out")
    _add_config_flags(p, [k for k, s in KEY_SECTION.items() if s == "judge"])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="write a seeded synthetic test image")
    p.add_argument("output")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"praf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
