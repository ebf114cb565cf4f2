"""Command-line operator surface.

Subcommands: corpus, attack, compare, ablate, eval, serve-check.  Runtime
settings come from three layers with fixed precedence: command-line flags
beat the optional flat key=value config file, which beats built-in
defaults.  Unknown keys are rejected before anything touches an oracle.

Exit codes: 0 success, 2 usage or configuration problem, 3 oracle failure
(any checkpoint is preserved), 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, fields

import numpy as np
import requests

from . import wire
from .attack import METRIC_FIELDS, run_attack
from .baselines import BASELINE_KINDS, BaselineSpec, run_baseline
from .core import (ConfigError, ImageBuffer, InvalidFitnessError,
                   OracleUnavailableError, load_png, save_png)
from .evaluation import EvalConfig, EvalReport, evaluate_patch
from .generator import GeneratorSpec, make_generator
from .losses import LossWeights
from .optimizer import EsConfig
from .oracles import (ClassifierSpec, DetectorSpec, QueryLedger,
                      make_classifier, make_detector)
from .scenes import CorpusSpec, generate_corpus, load_split, save_corpus
from .transform import TransformConfig

# flat config key -> (section, dataclass field, type)
KNOWN_KEYS = {
    # search loop
    "population": ("es", "population", int),
    "sigma": ("es", "sigma", float),
    "lr": ("es", "lr", float),
    "iters": ("es", "max_iters", int),
    "tau": ("es", "tau", float),
    "adam_beta1": ("es", "adam_beta1", float),
    "adam_beta2": ("es", "adam_beta2", float),
    "adam_eps": ("es", "adam_eps", float),
    "plateau_eps": ("es", "plateau_eps", float),
    "plateau_patience": ("es", "plateau_patience", int),
    "lr_decay_factor": ("es", "lr_decay_factor", float),
    "lr_min": ("es", "lr_min", float),
    "fitness_shaping": ("es", "fitness_shaping", bool),
    "antithetic": ("es", "antithetic", bool),
    "seed": ("es", "seed", int),
    # objective
    "lambda_tv": ("loss", "lambda_tv", float),
    "lambda_cls": ("loss", "lambda_cls", float),
    "det_mode": ("loss", "det_mode", str),
    "target_class": ("loss", "target_class", int),
    # placement jitter
    "max_rotation_deg": ("transform", "max_rotation_deg", float),
    "max_brightness_delta": ("transform", "max_brightness_delta", float),
    "scale_lo": ("transform", "scale_lo", float),
    "scale_hi": ("transform", "scale_hi", float),
    "patch_area_fraction": ("transform", "patch_area_fraction", float),
    # generator
    "generator_kind": ("generator", "kind", str),
    "latent_dim": ("generator", "latent_dim", int),
    "patch_size": ("generator", "out_size", int),
    "generator_seed": ("generator", "seed", int),
    "class_id": ("generator", "class_id", int),
    "generator_url": ("generator", "url", str),
    # detector
    "detector_kind": ("detector", "kind", str),
    "detector_url": ("detector", "url", str),
    "downsample": ("detector", "downsample", int),
    "det_slope": ("detector", "slope", float),
    "det_offset": ("detector", "offset", float),
    "min_objectness": ("detector", "min_objectness", float),
    "nms_iou": ("detector", "nms_iou", float),
    "det_num_classes": ("detector", "num_classes", int),
    "person_prob": ("detector", "person_prob", float),
    # classifier
    "classifier_kind": ("classifier", "kind", str),
    "classifier_url": ("classifier", "url", str),
    "classifier_classes": ("classifier", "num_classes", int),
    "classifier_seed": ("classifier", "seed", int),
    "temperature": ("classifier", "temperature", float),
    "feature_size": ("classifier", "feature_size", int),
    # corpus
    "scene_width": ("corpus", "width", int),
    "scene_height": ("corpus", "height", int),
    "n_train": ("corpus", "n_train", int),
    "n_eval": ("corpus", "n_eval", int),
    "corpus_seed": ("corpus", "seed", int),
    "max_persons": ("corpus", "max_persons", int),
    "noise_sigma": ("corpus", "noise_sigma", float),
    "corpus_margin": ("corpus", "margin", int),
    # evaluation
    "iou_threshold": ("eval", "iou_threshold", float),
    "randomized_eval": ("eval", "randomized", bool),
    "eval_seed": ("eval", "seed", int),
    # run management
    "checkpoint_every": ("run", "checkpoint_every", int),
}

_SECTION_CLS = {
    "es": EsConfig,
    "loss": LossWeights,
    "transform": TransformConfig,
    "generator": GeneratorSpec,
    "detector": DetectorSpec,
    "classifier": ClassifierSpec,
    "corpus": CorpusSpec,
    "eval": EvalConfig,
}


@dataclass
class RunConfig:
    es: EsConfig
    loss: LossWeights
    transform: TransformConfig
    generator: GeneratorSpec
    detector: DetectorSpec
    classifier: ClassifierSpec
    corpus: CorpusSpec
    eval: EvalConfig
    checkpoint_every: int
    values: dict  # effective flat values, echoed into reports


def _coerce(key: str, raw, typ):
    if isinstance(raw, typ) and not (typ is int and isinstance(raw, bool)):
        return raw
    s = str(raw).strip()
    if typ is bool:
        low = s.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return typ(s)
    except ValueError:
        raise ConfigError(f"{key}: expected {typ.__name__}, got {raw!r}")


def parse_config_file(path: str) -> dict:
    """Flat key = value lines; # starts a comment; blank lines skipped."""
    values = {}
    try:
        fh = open(path)
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}")
    with fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(
                    f"{path}:{lineno}: expected key = value, got {line.rstrip()!r}")
            k, v = stripped.split("=", 1)
            values[k.strip()] = v.strip()
    return values


def build_run_config(*layers: dict) -> RunConfig:
    """Merge value layers (later wins), validate keys, build the configs."""
    merged: dict = {}
    for layer in layers:
        for k, v in layer.items():
            if v is not None:
                merged[k] = v
    unknown = [k for k in merged if k not in KNOWN_KEYS]
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    per_section: dict[str, dict] = {s: {} for s in _SECTION_CLS}
    run_extra = {"checkpoint_every": 50}
    for k, v in merged.items():
        section, field, typ = KNOWN_KEYS[k]
        if section == "run":
            run_extra[field] = _coerce(k, v, typ)
        else:
            per_section[section][field] = _coerce(k, v, typ)
    built = {s: cls(**per_section[s]) for s, cls in _SECTION_CLS.items()}
    if run_extra["checkpoint_every"] < 1:
        raise ConfigError("checkpoint_every must be >= 1")
    echo = {k: merged[k] for k in sorted(merged)}
    return RunConfig(es=built["es"], loss=built["loss"],
                     transform=built["transform"],
                     generator=built["generator"], detector=built["detector"],
                     classifier=built["classifier"], corpus=built["corpus"],
                     eval=built["eval"],
                     checkpoint_every=run_extra["checkpoint_every"],
                     values=echo)


def _config_from_args(args, extra_flags: dict | None = None) -> RunConfig:
    file_vals = parse_config_file(args.config) if getattr(args, "config", None) else {}
    set_vals = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        set_vals[k.strip()] = v.strip()
    return build_run_config(file_vals, set_vals, extra_flags or {})


def _fmt_cell(key: str, value) -> str:
    if key in ("epoch", "detector_queries"):
        return str(int(value))
    return repr(float(value))


def write_metrics_csv(path: str, rows: list[dict]) -> None:
    """Fixed column order, header always present, repr-exact floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_FIELDS)
        for r in rows:
            w.writerow([_fmt_cell(k, r[k]) for k in METRIC_FIELDS])


def svg_loss_chart(rows: list[dict], width: int = 640, height: int = 360) -> str:
    """Self-contained SVG line chart of total loss against epoch."""
    pad = 45
    xs = [r["epoch"] for r in rows]
    ys = [r["total_loss"] for r in rows]
    if not xs:
        xs, ys = [0], [0.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_span = max(x_hi - x_lo, 1)
    y_span = max(y_hi - y_lo, 1e-12)

    def sx(x):
        return pad + (x - x_lo) / x_span * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_lo) / y_span * (height - 2 * pad)

    pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
        f'<rect width="{width}" height="{height}" fill="white"/>'
        f'<polyline points="{pts}" fill="none" stroke="#1f6fb2" stroke-width="1.5"/>'
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>'
        f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" font-size="12">epoch</text>'
        f'<text x="12" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 12 {height / 2:.0f})" text-anchor="middle">total loss</text>'
        f'<text x="{pad}" y="{height - pad + 14}" font-size="10" text-anchor="middle">{x_lo}</text>'
        f'<text x="{width - pad}" y="{height - pad + 14}" font-size="10" text-anchor="middle">{x_hi}</text>'
        f'<text x="{pad - 4}" y="{sy(y_lo):.0f}" font-size="10" text-anchor="end">{y_lo:.4g}</text>'
        f'<text x="{pad - 4}" y="{sy(y_hi):.0f}" font-size="10" text-anchor="end">{y_hi:.4g}</text>'
        f'</svg>'
    )


def _make_stack(cfg: RunConfig):
    ledger = QueryLedger()
    detector = make_detector(cfg.detector, ledger)
    classifier = make_classifier(cfg.classifier, ledger)
    generator = make_generator(cfg.generator, ledger)
    return generator, detector, classifier, ledger


def _fresh_eval_report(cfg: RunConfig, scenes, patch) -> EvalReport:
    # evaluation runs on its own ledger so attack budgets stay untouched
    detector = make_detector(cfg.detector, QueryLedger())
    return evaluate_patch(scenes, patch, detector, cfg.eval, cfg.transform)


# ------------------------------------------------------------------ corpus

def cmd_corpus(args) -> int:
    flags = {"corpus_seed": args.seed, "seed": args.seed}
    if args.count is not None:
        if args.count < 3:
            raise ConfigError("--count must be >= 3 (2:1 train/eval split)")
        flags["n_train"] = 2 * args.count // 3
        flags["n_eval"] = args.count - 2 * args.count // 3
    cfg = _config_from_args(args, flags)
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output dir {args.out}: {e}")
    if not os.access(args.out, os.W_OK):
        raise ConfigError(f"output dir {args.out} is not writable")
    train, eval_scenes = generate_corpus(cfg.corpus)
    save_corpus(args.out, train, eval_scenes)
    clean = EvalConfig(iou_threshold=cfg.eval.iou_threshold,
                       apply_patch=False)
    for split, scenes in (("train", train), ("eval", eval_scenes)):
        rep = evaluate_patch(scenes, None,
                             make_detector(cfg.detector, QueryLedger()), clean)
        print(f"{split}: {len(scenes)} scenes, clean AP {rep.ap_person * 100:.2f}%")
    return 0


# ------------------------------------------------------------------ attack

def _run_attack_to_dir(cfg: RunConfig, train, eval_scenes, out_dir: str,
                       budget: int | None, resume: bool,
                       write_svg: bool) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    generator, detector, classifier, ledger = _make_stack(cfg)
    ck_path = os.path.join(out_dir, "checkpoint.json")
    res = run_attack(train, generator, detector, classifier, cfg.es,
                     cfg.loss, cfg.transform, checkpoint_path=ck_path,
                     checkpoint_every=cfg.checkpoint_every,
                     resume=resume, budget=budget)
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), res.metrics)
    save_png(res.best_patch, os.path.join(out_dir, "best_patch.png"))
    if write_svg:
        with open(os.path.join(out_dir, "loss_curve.svg"), "w") as fh:
            fh.write(svg_loss_chart(res.metrics))
    report = {
        "best_loss": res.state.best_loss,
        "iterations": res.state.t,
        "stalled": res.stalled,
        "projection_violations": res.state.projection_violations,
        "queries": res.ledger.snapshot(),
        "eval": _fresh_eval_report(cfg, eval_scenes, res.best_patch).to_dict(),
        "config": cfg.values,
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def cmd_attack(args) -> int:
    flags = {
        "population": args.pop,
        "lambda_cls": args.lambda_cls,
        "iters": args.iters,
        "seed": args.seed,
        "sigma": args.sigma,
        "lr": args.lr,
    }
    cfg = _config_from_args(args, flags)
    train = load_split(args.corpus, "train")
    eval_scenes = load_split(args.corpus, "eval")
    report = _run_attack_to_dir(cfg, train, eval_scenes, args.out,
                                args.budget, args.resume, args.svg)
    print(f"best loss {report['best_loss']:.6f} after {report['iterations']} "
          f"iterations; eval AP {report['eval']['ap_person'] * 100:.2f}%; "
          f"detector queries {report['queries']['detect']}")
    return 0


# ----------------------------------------------------------------- compare

COMPARE_METHODS = ("ours",) + BASELINE_KINDS


def _aligned_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows
              else len(header[i]) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines)


def cmd_compare(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in COMPARE_METHODS]
    if bad:
        raise ConfigError(
            f"unknown methods: {', '.join(bad)}; valid: {', '.join(COMPARE_METHODS)}")
    if not methods:
        raise ConfigError("no methods selected")
    flags = {"population": args.pop, "lambda_cls": args.lambda_cls,
             "seed": args.seed}
    cfg = _config_from_args(args, flags)
    train = load_split(args.corpus, "train")
    eval_scenes = load_split(args.corpus, "eval")
    os.makedirs(args.out, exist_ok=True)

    rows = []
    for method in methods:
        generator, detector, classifier, ledger = _make_stack(cfg)
        if method == "ours":
            es = EsConfig(**{**_es_kwargs(cfg.es), "max_iters": args.budget})
            res = run_attack(train, generator, detector, classifier, es,
                             cfg.loss, cfg.transform, budget=args.budget)
            patch, pop = res.best_patch, cfg.es.population
            metrics = res.metrics
        else:
            spec = BaselineSpec(kind=method, budget=args.budget,
                                seed=cfg.es.seed,
                                patch_size=cfg.generator.out_size,
                                tau=cfg.es.tau,
                                population=cfg.es.population)
            bres = run_baseline(spec, train, detector, classifier, cfg.loss,
                                cfg.transform, generator=generator)
            patch = bres.best_patch
            pop = cfg.es.population if method == "pixel_nes" else None
            metrics = bres.metrics
        rep = _fresh_eval_report(cfg, eval_scenes, patch)
        save_png(patch, os.path.join(args.out, f"{method}_patch.png"))
        write_metrics_csv(os.path.join(args.out, f"{method}_metrics.csv"),
                          metrics)
        rows.append({
            "attack": method,
            "lambda_cls": cfg.loss.lambda_cls,
            "pop": pop,
            "queries": args.budget,
            "map_percent": rep.ap_person * 100.0,
        })

    header = ["attack", "lambda_cls", "pop", "queries", "map_percent"]
    with open(os.path.join(args.out, "compare.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([r["attack"], repr(float(r["lambda_cls"])),
                        "" if r["pop"] is None else str(r["pop"]),
                        str(r["queries"]), f"{r['map_percent']:.2f}"])
    text_rows = [[r["attack"], repr(float(r["lambda_cls"])),
                  "" if r["pop"] is None else str(r["pop"]),
                  str(r["queries"]), f"{r['map_percent']:.2f}"] for r in rows]
    table = _aligned_table(header, text_rows)
    with open(os.path.join(args.out, "compare.txt"), "w") as fh:
        fh.write(table + "\n")
    print(table)
    return 0


def _es_kwargs(es: EsConfig) -> dict:
    return {f.name: getattr(es, f.name) for f in fields(EsConfig)}


# ------------------------------------------------------------------ ablate

def cmd_ablate(args) -> int:
    pops = [int(p) for p in args.pops.split(",") if p.strip()]
    lams = [float(l) for l in args.lambda_cls.split(",") if l.strip()]
    modes = [m.strip() for m in args.det_modes.split(",") if m.strip()]
    if not pops or not lams or not modes:
        raise ConfigError("ablate needs at least one value per axis")
    flags = {"iters": args.iters, "seed": args.seed}
    cfg = _config_from_args(args, flags)
    train = load_split(args.corpus, "train")
    eval_scenes = load_split(args.corpus, "eval")
    os.makedirs(args.out, exist_ok=True)

    agg_rows = []
    for pop in pops:
        for lam in lams:
            for mode in modes:
                cell = f"pop{pop}_lcls{lam}_{mode}"
                cell_cfg = build_run_config(
                    cfg.values, {"population": pop, "lambda_cls": lam,
                                 "det_mode": mode})
                report = _run_attack_to_dir(
                    cell_cfg, train, eval_scenes,
                    os.path.join(args.out, cell), args.budget, False, False)
                agg_rows.append([pop, lam, mode, report["best_loss"],
                                 report["queries"]["detect"],
                                 report["eval"]["ap_person"]])
                print(f"{cell}: best loss {report['best_loss']:.4f}, "
                      f"eval AP {report['eval']['ap_person'] * 100:.2f}%")
    with open(os.path.join(args.out, "aggregate.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["population", "lambda_cls", "det_mode", "best_loss",
                    "detector_queries", "ap_person"])
        for row in agg_rows:
            w.writerow([str(row[0]), repr(float(row[1])), row[2],
                        repr(float(row[3])), str(row[4]),
                        repr(float(row[5]))])
    return 0


# -------------------------------------------------------------------- eval

def cmd_eval(args) -> int:
    flags = {"randomized_eval": args.randomized or None,
             "eval_seed": args.seed}
    cfg = _config_from_args(args, flags)
    scenes = load_split(args.corpus, args.split)
    patch = load_png(args.patch) if args.patch else None
    ecfg = cfg.eval if patch is not None else EvalConfig(
        iou_threshold=cfg.eval.iou_threshold, apply_patch=False)
    detector = make_detector(cfg.detector, QueryLedger())
    rep = evaluate_patch(scenes, patch, detector, ecfg, cfg.transform)
    blob = json.dumps(rep.to_dict(), indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(blob + "\n")
    print(blob)
    return 0


# ------------------------------------------------------------- serve-check

def cmd_serve_check(args) -> int:
    base = args.url.rstrip("/")
    try:
        health = requests.get(base + "/health", timeout=wire.REQUEST_TIMEOUT_S)
        health.raise_for_status()
        info = health.json()
    except (requests.RequestException, ValueError) as e:
        raise OracleUnavailableError(f"health check failed: {e}")
    print(f"health: {json.dumps(info, sort_keys=True)}")

    probe = ImageBuffer(np.full((64, 64, 3), 0.5, np.float32))
    b64 = wire.image_to_b64(probe)
    det_body = wire.post_json(base + "/detect",
                              {"id": 0, "image_png_b64": b64},
                              schema=wire.load_schema("detect_response.schema.json"))
    print(f"detect: ok ({len(det_body['detections'])} detections on gray probe)")
    cls_body = wire.post_json(base + "/classify",
                              {"id": 0, "image_png_b64": b64},
                              schema=wire.load_schema("classify_response.schema.json"))
    print(f"classify: ok ({len(cls_body['probs'])} classes)")
    return 0


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="latentpatch",
        description="Black-box latent-space patch attacks on object detectors")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key=value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key (repeatable)")

    sp = sub.add_parser("corpus", help="generate a synthetic scene corpus")
    sp.add_argument("--count", type=int, help="total scenes, split 2:1")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_corpus)

    sp = sub.add_parser("attack", help="run the latent-space ES attack")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--pop", type=int)
    sp.add_argument("--lambda-cls", dest="lambda_cls", type=float)
    sp.add_argument("--iters", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--budget", type=int, help="max detector queries")
    sp.add_argument("--resume", action="store_true",
                    help="resume from the run dir's checkpoint")
    sp.add_argument("--svg", action="store_true",
                    help="also write loss_curve.svg")
    common(sp)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("compare", help="attack vs baselines at equal budget")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--budget", type=int, required=True)
    sp.add_argument("--methods", default="ours,latent_rs,pixel_rs,square,pixel_nes")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--pop", type=int)
    sp.add_argument("--lambda-cls", dest="lambda_cls", type=float)
    common(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("ablate", help="population x lambda_cls x det_mode sweep")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--pops", default="50,70,90,110")
    sp.add_argument("--lambda-cls", dest="lambda_cls", default="0.1")
    sp.add_argument("--det-modes", dest="det_modes", default="obj_times_cls")
    sp.add_argument("--iters", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--budget", type=int)
    common(sp)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("eval", help="measure person AP for a patch PNG")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--split", choices=("train", "eval"), default="eval")
    sp.add_argument("--patch", help="patch PNG; omit for clean AP")
    sp.add_argument("--randomized", action="store_true")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="also write the report JSON here")
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("serve-check",
                        help="ping an external oracle and validate schemas")
    sp.add_argument("--url", required=True)
    sp.set_defaults(func=cmd_serve_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except OracleUnavailableError as e:
        print(f"oracle failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"filesystem error: {e}", file=sys.stderr)
        return 2
    except (AssertionError, InvalidFitnessError) as e:
        print(f"internal invariant violation: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
