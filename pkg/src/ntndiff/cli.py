"""Batch runner: single runs, lambda sweeps, ablations and trajectory diagnostics.

Exit codes: 0 success, 2 config error, 3 I/O error, 4 non-finite numerics.
"""
import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import jsonschema
import numpy as np

from . import testbeds
from .denoiser import AttentionWeights, GmmDenoiser, GmmModel, ToyAttentionDenoiser
from .diffusion import NULL_PROMPT, PromptSpec, make_schedule
from .errors import NTNError, SnapshotFormatError
from .metrics import latent_to_image, trajectory_report
from .pipeline import VARIANTS, PipelineConfig, apply_variant, plan_bands, run_baseline_bld, run_ntn
from .regions import RegionMask, half_mask, square_mask
from .snapshots import read_pgm, read_snapshot, read_trajectory, write_pgm, write_snapshot, write_trajectory
from .spectral import BandThresholdParams, low_pass_mask, mid_pass_mask

log = logging.getLogger("ntndiff")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_LAMBDAS = (0.9, 0.8, 0.7, 0.6, 0.5)

_num = {"type": "number"}
_flag = {"type": "boolean"}
_enum = lambda *v: {"enum": list(v)}  # noqa: E731

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "pipeline": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": {"type": "integer", "minimum": 2},
                "lam": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "beta_start": _num,
                "beta_end": _num,
                "band_params": {"oneOf": [{"type": "null"}, {
                    "type": "object", "additionalProperties": False,
                    "required": ["lam_f_lp", "lam_r_lp", "lam_f_mp1", "lam_r_mp1", "lam_f_mp2", "lam_r_mp2"],
                    "properties": {k: {"type": "number", "minimum": 0} for k in (
                        "lam_f_lp", "lam_r_lp", "lam_f_mp1", "lam_r_mp1", "lam_f_mp2", "lam_r_mp2")},
                }]},
                "low_adaptive": _flag,
                "mid_adaptive": _flag,
                "fixed_th_lp": {"type": ["number", "null"]},
                "fixed_th_mp": {"oneOf": [{"type": "null"},
                                          {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]},
                "branch_prompts": {"type": "array", "items": _enum("null", "text"), "minItems": 3, "maxItems": 3},
                "masked_attention": _flag,
                "early_branches": _flag,
                "mid_substitution": _flag,
                "gt_source": _enum("ddim-inversion", "forward-noise"),
                "sampler": _enum("ddim", "ddpm"),
                "fill": _enum("zero", "mean"),
                "low_donor": _enum("pre-denoise", "post-denoise"),
                "mid_donor": _enum("pre-denoise", "post-denoise"),
                "inversion_prompt": _enum("null", "text"),
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "testbed": _enum(*testbeds.TESTBEDS),
                "path": {"type": "string"},
                "gmm": {"type": "object"},
            },
            "minProperties": 1,
            "maxProperties": 1,
        },
        "denoiser": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": _enum("gmm", "toy-attention"),
                "width": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            },
        },
        "input": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "component": {"type": "integer", "minimum": 0},
                "jitter": {"type": "number", "minimum": 0},
                "path": {"type": "string"},
            },
        },
        "mask": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "shape": _enum("square", "half", "custom-file"),
                "coverage": {"type": "number", "minimum": 0, "maximum": 1},
                "position": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "side": _enum("left", "right", "top", "bottom"),
                "scale": {"type": "integer", "minimum": 1},
                "path": {"type": "string"},
            },
        },
        "prompt": {"oneOf": [{"type": "null"}, {
            "type": "object", "additionalProperties": False, "required": ["selector"],
            "properties": {
                "selector": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "reweight": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        }]},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer"},
        "emit_trajectory": _flag,
    },
}

DEFAULTS = {
    "denoiser": {"kind": "gmm", "width": 8, "seed": 0},
    "input": {"component": 0, "jitter": 0.05},
    "mask": {"shape": "square", "coverage": 0.25, "position": [0.5, 0.5], "side": "right", "scale": 1},
    "prompt": {"selector": [1]},
    "output_dir": "ntn-out",
    "seed": 0,
    "emit_trajectory": False,
}


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# -- config ------------------------------------------------------------------

def _field_path(err):
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def load_config(path, out=None, seed=None, emit_trajectory=None):
    """Read, validate and resolve an experiment config document."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise CliError(EXIT_IO, f"config file not found: {path}") from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"{path}: invalid JSON: {exc}") from None
    return resolve_config(doc, path.parent, out, seed, emit_trajectory)


def resolve_config(doc, base_dir=Path("."), out=None, seed=None, emit_trajectory=None):
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise CliError(EXIT_CONFIG, f"config error at {_field_path(err)}: {err.message}")
    cfg = json.loads(json.dumps(doc))
    for key, value in DEFAULTS.items():
        if isinstance(value, dict) and cfg.get(key, {}) is not None:
            cfg[key] = {**value, **cfg.get(key, {})}
        else:
            cfg.setdefault(key, value)
    cfg["pipeline"] = {k: v for k, v in asdict(PipelineConfig()).items() if k != "seed"} | cfg.get("pipeline", {})
    cfg["pipeline"]["branch_prompts"] = list(cfg["pipeline"]["branch_prompts"])
    # precedence: explicit flag > environment > document
    env_out, env_seed = os.environ.get("NTN_OUT"), os.environ.get("NTN_SEED")
    base_dir = Path(base_dir)
    out_base = base_dir   # document paths are relative to the document, overrides to the cwd
    if out is not None:
        cfg["output_dir"], out_base = str(out), Path(".")
    elif env_out:
        cfg["output_dir"], out_base = env_out, Path(".")
    if seed is not None:
        cfg["seed"] = int(seed)
    elif env_seed:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise CliError(EXIT_CONFIG, f"NTN_SEED must be an integer, got {env_seed!r}") from None
    if emit_trajectory:
        cfg["emit_trajectory"] = True
    for section in ("model", "input", "mask"):
        if "path" in cfg[section]:
            cfg[section]["path"] = str((base_dir / cfg[section]["path"]).resolve())
    cfg["output_dir"] = str((out_base / cfg["output_dir"]).resolve())
    try:
        pipeline_config(cfg).validate()
    except NTNError as exc:
        raise CliError(EXIT_CONFIG, f"config error at pipeline: {exc}") from None
    return cfg


def pipeline_config(cfg):
    p = dict(cfg["pipeline"])
    if p.get("band_params") is not None:
        p["band_params"] = BandThresholdParams(**p["band_params"])
    return PipelineConfig(**p, seed=cfg["seed"])


# -- building blocks ---------------------------------------------------------

def build_model(cfg):
    spec = cfg["model"]
    if "testbed" in spec:
        return testbeds.TESTBEDS[spec["testbed"]]()
    if "path" in spec:
        try:
            return GmmModel.load(spec["path"])
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read model {spec['path']}: {exc}") from None
    return GmmModel.from_dict(spec["gmm"])


def build_denoiser(cfg, model, sched):
    spec = cfg["denoiser"]
    if spec["kind"] == "gmm":
        return GmmDenoiser(model, sched)
    weights = AttentionWeights.seeded(model.latent_shape[0], width=spec["width"], seed=spec["seed"])
    return ToyAttentionDenoiser(weights, sched)


def build_mask(cfg, latent_hw):
    spec = cfg["mask"]
    h, w = latent_hw
    H, W = h * spec["scale"], w * spec["scale"]
    if spec["shape"] == "square":
        M = square_mask(H, W, spec["coverage"], tuple(spec["position"]))
    elif spec["shape"] == "half":
        M = half_mask(H, W, spec["side"])
    else:
        if "path" not in spec:
            raise CliError(EXIT_CONFIG, "config error at mask.path: custom-file mask needs a path")
        try:
            if spec["path"].endswith(".pgm"):
                M = (read_pgm(spec["path"]) >= 128).astype(float)
            else:
                M = read_snapshot(spec["path"])[0]
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read mask {spec['path']}: {exc}") from None
        except SnapshotFormatError as exc:
            raise CliError(EXIT_IO, str(exc)) from None
    return RegionMask(M, (h, w))


def build_input(cfg, model):
    spec = cfg["input"]
    if "path" in spec:
        try:
            z = read_snapshot(spec["path"])
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read input {spec['path']}: {exc}") from None
        except SnapshotFormatError as exc:
            raise CliError(EXIT_IO, str(exc)) from None
        if z.shape != model.latent_shape:
            raise CliError(EXIT_CONFIG, f"config error at input.path: latent {z.shape} != model {model.latent_shape}")
        return z
    k = spec["component"]
    if k >= model.K:
        raise CliError(EXIT_CONFIG, f"config error at input.component: {k} >= K={model.K}")
    rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 1]))
    return model.means[k] + spec["jitter"] * rng.standard_normal(model.latent_shape)


def build_prompt(cfg):
    p = cfg["prompt"]
    if p is None:
        return NULL_PROMPT
    return PromptSpec.text(p["selector"], p.get("reweight", ()))


def report_bands(h, w, cfg, mask):
    plan = plan_bands(mask, cfg, h, w)
    return {"low": plan.low, "mid": plan.mid}


# -- commands ----------------------------------------------------------------

def execute(cfg, variant=None):
    """Run one experiment; returns (result, log, report, pipeline config)."""
    model = build_model(cfg)
    pcfg = pipeline_config(cfg)
    if variant is not None:
        pcfg = apply_variant(pcfg, variant)
    sched = make_schedule(pcfg.T, pcfg.beta_start, pcfg.beta_end)
    denoiser = build_denoiser(cfg, model, sched)
    mask = build_mask(cfg, model.latent_shape[1:])
    prompt = build_prompt(cfg)
    x = build_input(cfg, model)
    runner = run_baseline_bld if variant == "baseline-bld" else run_ntn
    result, run_log = runner(x, mask, prompt, pcfg, denoiser, sched)
    if not np.isfinite(result).all():
        raise CliError(EXIT_NUMERIC, "non-finite values in the inpainted latent")
    report = trajectory_report([(0, result)], report_bands(*model.latent_shape[1:], pcfg, mask),
                               reference=x, mask=mask.m_z)
    return result, run_log, report


def write_outputs(cfg, out_dir, result, run_log, report):
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_snapshot(out_dir / "result.bin", result)
        write_pgm(out_dir / "preview.pgm", latent_to_image(result))
        (out_dir / "metrics.csv").write_text(report.to_csv())
        (out_dir / "metrics.json").write_text(report.to_json())
        resolved = dict(cfg, output_dir=str(out_dir))
        (out_dir / "resolved.json").write_text(json.dumps(resolved, indent=2, sort_keys=True))
        if cfg["emit_trajectory"]:
            write_trajectory(run_log, out_dir / "trajectory")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write outputs to {out_dir}: {exc}") from None


def cmd_run(args):
    cfg = load_config(args.config, args.out, args.seed, args.emit_trajectory)
    result, run_log, report = execute(cfg)
    write_outputs(cfg, cfg["output_dir"], result, run_log, report)
    log.info("wrote %s", cfg["output_dir"])
    return EXIT_OK


def parse_lambdas(text):
    if text is None:
        return list(DEFAULT_LAMBDAS)
    items = [s for s in text.replace(" ", "").split(",") if s]
    if not items:
        raise CliError(EXIT_CONFIG, "config error at --lambdas: empty list")
    try:
        lams = [float(s) for s in items]
    except ValueError:
        raise CliError(EXIT_CONFIG, f"config error at --lambdas: not a number list: {text!r}") from None
    bad = [v for v in lams if not 0 < v < 1]
    if bad:
        raise CliError(EXIT_CONFIG, f"config error at --lambdas: values must lie in (0, 1), got {bad}")
    return lams


def cmd_sweep_lambda(args):
    lams = parse_lambdas(args.lambdas)
    cfg = load_config(args.config, args.out, args.seed, args.emit_trajectory)
    root = Path(cfg["output_dir"])
    runs = []
    for lam in lams:
        sub = dict(cfg, pipeline=dict(cfg["pipeline"], lam=lam))
        try:
            pipeline_config(sub).validate()
        except NTNError as exc:
            raise CliError(EXIT_CONFIG, f"config error at --lambdas: {exc}") from None
        result, run_log, report = execute(sub)
        write_outputs(sub, root / f"lambda_{lam:g}", result, run_log, report)
        runs.append((lam, report))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("lambda", "metric", "scope", "value"))
    for lam, report in runs:
        for _, metric, scope, value in report.rows:
            writer.writerow((f"{lam:g}", metric, scope, repr(value)))
    (root / "summary.csv").write_text(buf.getvalue())
    log.info("wrote %d runs to %s", len(runs), root)
    return EXIT_OK


def trace_summary(run_log):
    counts = {}
    for e in run_log.events:
        key = f"{e.phase}/{e.branch}/{e.op}" + (f"/{e.detail}" if e.detail else "")
        counts[key] = counts.get(key, 0) + 1
    return dict(sorted(counts.items()))


def cmd_ablate(args):
    if args.variant not in VARIANTS:
        raise CliError(EXIT_CONFIG, f"config error at --variant: unknown {args.variant!r}; valid: {', '.join(VARIANTS)}")
    cfg = load_config(args.config, args.out, args.seed, args.emit_trajectory)
    root = Path(cfg["output_dir"])
    full = execute(cfg)
    ablated = execute(cfg, args.variant)
    write_outputs(cfg, root / "full", *full)
    write_outputs(cfg, root / args.variant, *ablated)
    base = {(m, s): v for _, m, s, v in full[2].rows}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("metric", "scope", "full", args.variant, "delta"))
    for _, metric, scope, value in ablated[2].rows:
        ref = base[(metric, scope)]
        writer.writerow((metric, scope, repr(ref), repr(value), repr(value - ref)))
    (root / "paired.csv").write_text(buf.getvalue())
    trace = {"full": trace_summary(full[1]), args.variant: trace_summary(ablated[1]),
             "linf_difference": float(np.max(np.abs(full[0] - ablated[0])))}
    (root / "trace.json").write_text(json.dumps(trace, indent=2))
    log.info("wrote ablation %s to %s", args.variant, root)
    return EXIT_OK


def diagnostic_bands(h, w):
    d = h + w - 2
    return {"low": low_pass_mask(h, w, 0.1 * d), "mid": mid_pass_mask(h, w, 0.1 * d, 0.5 * d),
            "high": mid_pass_mask(h, w, 0.5 * d, d)}


def cmd_diagnose(args):
    try:
        traj = read_trajectory(args.trajectory)
    except SnapshotFormatError as exc:
        raise CliError(EXIT_IO, str(exc)) from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.trajectory}: {exc}") from None
    shapes = {z.shape for _, z in traj}
    if len(shapes) != 1:
        raise CliError(EXIT_IO, f"{args.trajectory}: snapshots have differing shapes {sorted(shapes)}")
    h, w = traj[0][1].shape[-2:]
    report = trajectory_report(traj, diagnostic_bands(h, w))
    text = report.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_make_testbed(args):
    out = Path(args.out or "testbeds")
    out.mkdir(parents=True, exist_ok=True)
    notes = {
        "two-component": "modes A (index 0, offset +0.8) and B (index 1, offset -0.8), sigma 0.3, 2x16x16",
        "five-component": "five smooth modes with offsets -1..1, sigma 0.3, 2x16x16",
        "frequency": "three modes sharing DC level 1.0, differing in high-band texture (RMS 0.1), sigma 0.05",
    }
    for name, build in testbeds.TESTBEDS.items():
        build().save(out / f"{name}.json", name=name, description=notes[name])
    log.info("wrote testbeds to %s", out)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="ntndiff", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--emit-trajectory", action="store_true")

    common(sub.add_parser("run", help="inpaint once"))
    p = sub.add_parser("sweep-lambda", help="one run per early/late split")
    common(p)
    p.add_argument("--lambdas", help="comma-separated, default 0.9,0.8,0.7,0.6,0.5")
    p = sub.add_parser("ablate", help="run a variant next to the full pipeline")
    common(p)
    p.add_argument("--variant", required=True)
    p = sub.add_parser("diagnose", help="per-step metrics for a snapshot directory")
    p.add_argument("trajectory")
    p.add_argument("--out")
    p = sub.add_parser("make-testbed", help="write reference GMM testbeds as JSON")
    p.add_argument("--out")
    return parser


COMMANDS = {
    "run": cmd_run,
    "sweep-lambda": cmd_sweep_lambda,
    "ablate": cmd_ablate,
    "diagnose": cmd_diagnose,
    "make-testbed": cmd_make_testbed,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"ntndiff: {exc}", file=sys.stderr)
        return exc.code
    except NTNError as exc:
        print(f"ntndiff: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"ntndiff: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
