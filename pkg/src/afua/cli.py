"""Command-line workflow.

Every subcommand reads the resolved run configuration and writes its
artifacts under ``run_dir``::

    gen         signal.txt, manifest.txt, corpus.json
    features    features.txt, windows.json
    train       weights.json, train_report.json
    quantize    weights_quantized.json
    eval        metrics.json, roc.txt
    montecarlo  montecarlo.json, montecarlo_accuracy.txt
    power       power.json, power_scatter.txt

Exit status is 0 on success, 1 for user errors (bad config, missing
upstream artifact) and 2 when an internal invariant is violated.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import circuit, io, netsim, trainer
from .core import ConfigurationError, DimensionError
from .dsp import FeatureScaler
from .pipeline import (ConfigError, RunConfig, compute_features, evaluate, power_summary,
                       prepare_windows, strip_private)

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2


class UserError(Exception):
    pass


class Context:
    def __init__(self, config: RunConfig):
        self.config = config
        self.hash = config.hash()
        self.run_dir = Path(config.doc["run_dir"])

    def path(self, name: str) -> Path:
        return self.run_dir / name

    def require(self, name: str, producer: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise UserError(f"{p} not found; run `afua {producer}` first")
        recorded = io.read_config_hash(p)
        if recorded and recorded != self.hash:
            print(f"warning: {p.name} was produced under config {recorded}, "
                  f"current config is {self.hash}", file=sys.stderr)
        return p

    def write_json(self, name: str, doc: dict):
        io.dump_json({"config_hash": self.hash, **strip_private(doc)}, self.path(name))

    def log(self, msg: str):
        print(msg)


def cmd_gen(ctx: Context):
    from .synthgen import build_dataset

    c = ctx.config.section("corpus")
    corpus = build_dataset(c["hours_pos"], c["hours_neg"], ctx.config.gen_config())
    io.save_signal(ctx.path("signal.txt"), corpus.signal, ctx.hash)
    io.save_manifest(ctx.path("manifest.txt"), corpus.manifest, ctx.hash)
    ctx.write_json("corpus.json", {"gen": corpus.config.as_dict(), **c,
                                   "duration_s": corpus.signal.duration,
                                   "n_segments": len(corpus.manifest)})
    ctx.log(f"wrote {len(corpus.manifest)} segments, {corpus.signal.duration:.0f} s")


def _load_windows(ctx: Context):
    doc = io.load_json(ctx.require("windows.json", "features"))
    sets = {k: io.windows_from_dict(doc[k]) for k in ("train", "valid", "test")}
    return sets, FeatureScaler.from_dict(doc["scaler"])


def cmd_features(ctx: Context):
    buf = io.load_signal(ctx.require("signal.txt", "gen"))
    manifest = io.load_manifest(ctx.require("manifest.txt", "gen"))
    fcfg = ctx.config.feature_config()
    feats = compute_features(buf, fcfg)
    tcfg = ctx.config.train_config()
    sets = prepare_windows(feats, manifest, ctx.config.gen_config().window_s, tcfg.split,
                           tcfg.seed)
    io.save_features(ctx.path("features.txt"), feats, ctx.hash)
    ctx.write_json("windows.json", {"scaler": sets.scaler.as_dict(),
                                    "train": io.windows_to_dict(sets.train),
                                    "valid": io.windows_to_dict(sets.valid),
                                    "test": io.windows_to_dict(sets.test)})
    ctx.log(f"windows: {len(sets.train)} train, {len(sets.valid)} valid, "
            f"{len(sets.test)} test")


def cmd_train(ctx: Context):
    sets, scaler = _load_windows(ctx)
    cfg = ctx.config.train_config()
    params, report, restarts = trainer.train_with_restarts(sets["train"], sets["valid"], cfg)
    io.save_weights(ctx.path("weights.json"), params, scaler, ctx.hash)
    doc = report.as_dict(include_params=False)
    doc.pop("wallclock")  # keep the report byte-identical across reruns
    doc["restarts"] = [vars(r) for r in restarts]
    ctx.write_json("train_report.json", doc)
    ctx.log(f"best validation loss {report.best_valid_loss[-1]:.4f} "
            f"(epoch {report.best_epoch})")


def cmd_quantize(ctx: Context):
    params, scaler = io.load_weights(ctx.require("weights.json", "train"))
    if isinstance(params, netsim.QuantizedParams):
        raise UserError("weights.json already holds quantized weights")
    q = netsim.quantize(params)
    io.save_weights(ctx.path("weights_quantized.json"), q, scaler, ctx.hash)
    ctx.log("quantized weights: " + ", ".join(f"{k}={v.tolist()}"
                                              for k, v in q.as_dict().items()))


def cmd_eval(ctx: Context):
    sets, _ = _load_windows(ctx)
    q, _ = io.load_weights(ctx.require("weights_quantized.json", "quantize"))
    ev = ctx.config.section("eval")
    doc = {"quantized": evaluate(q, sets["test"], **ev)}
    if ctx.path("weights.json").exists():
        fp, _ = io.load_weights(ctx.path("weights.json"))
        doc["full_precision"] = evaluate(fp, sets["test"], **ev)
    ctx.write_json("metrics.json", doc)
    curve = doc["quantized"].get("_curve")
    if curve is not None:
        io.save_columns(ctx.path("roc.txt"), "threshold sensitivity specificity",
                        curve.thresholds, curve.sensitivity, curve.specificity,
                        config_hash=ctx.hash)
    line = f"quantized accuracy {doc['quantized']['accuracy']:.3f}"
    if "full_precision" in doc:
        line += f", full precision {doc['full_precision']['accuracy']:.3f}"
    ctx.log(line)


def cmd_montecarlo(ctx: Context):
    sets, _ = _load_windows(ctx)
    q, _ = io.load_weights(ctx.require("weights_quantized.json", "quantize"))
    mc = ctx.config.section("montecarlo")
    res = circuit.monte_carlo(q, sets["test"], sigma=mc["sigma"], n_runs=mc["n_runs"],
                              seed=mc["seed"], ptat_bias=mc["ptat_bias"],
                              threshold=ctx.config.doc["eval"]["threshold"])
    ctx.write_json("montecarlo.json", {**res.summary(), "runs": res.samples})
    io.save_columns(ctx.path("montecarlo_accuracy.txt"), "run accuracy",
                    np.arange(len(res.accuracies)), res.accuracies, config_hash=ctx.hash)
    ctx.log(f"median accuracy {res.median:.3f} over {len(res.accuracies)} runs "
            f"(nominal {res.nominal_accuracy:.3f})")


def cmd_power(ctx: Context):
    q = test = None
    if ctx.path("weights_quantized.json").exists() and ctx.path("windows.json").exists():
        q, _ = io.load_weights(ctx.path("weights_quantized.json"))
        test = _load_windows(ctx)[0]["test"]
    doc = power_summary(ctx.config, q, test)
    ctx.write_json("power.json", doc)
    rep = doc.get("_report")
    if rep is not None:
        io.save_columns(ctx.path("power_scatter.txt"), "vmm_units total_units",
                        rep.pattern_vmm, rep.pattern_total, config_hash=ctx.hash)
    sp = doc["system_power"]
    ctx.log(f"I_unit for tau={doc['unit_current_for_tau']['tau_s']:g} s: "
            f"{doc['unit_current_for_tau']['i_unit_A'] * 1e12:.3f} pA; "
            f"active fraction {sp['active_fraction']:.2f}; "
            f"average system power {sp['avg_power'] * 1e6:.2f} uW")


def cmd_all(ctx: Context):
    for fn in (cmd_gen, cmd_features, cmd_train, cmd_quantize, cmd_eval, cmd_montecarlo,
               cmd_power):
        fn(ctx)


def cmd_config(ctx: Context):
    print(json.dumps({"config_hash": ctx.hash, **ctx.config.as_dict()}, indent=2,
                     sort_keys=True))


COMMANDS = {"gen": cmd_gen, "features": cmd_features, "train": cmd_train,
            "quantize": cmd_quantize, "eval": cmd_eval, "montecarlo": cmd_montecarlo,
            "power": cmd_power, "all": cmd_all, "config": cmd_config}

HELP = {"gen": "generate the synthetic corpus and manifest",
        "features": "extract features, cut, split and scale windows",
        "train": "train full-precision weights",
        "quantize": "round weights to the 3-bit grid",
        "eval": "accuracy, confusion metrics and ROC on the test split",
        "montecarlo": "accuracy under mirror mismatch and supply/temperature corners",
        "power": "unit-current sizing, current bounds, efficiency, system power",
        "all": "run every stage in order",
        "config": "print the resolved configuration and its hash"}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--run-dir", help="artifact directory (overrides run_dir)")
    common.add_argument("--seed", type=int,
                        help="shorthand for --set gen.seed=N --set train.seed=N")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a config entry, e.g. train.epochs=50 (JSON value)")
    parser = argparse.ArgumentParser(prog="afua", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def resolve_config(args) -> RunConfig:
    if args.config is not None:
        if not args.config.exists():
            raise UserError(f"config file {args.config} not found")
        cfg = RunConfig.load(args.config)
    else:
        cfg = RunConfig()
    for item in args.overrides:
        if "=" not in item:
            raise UserError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg = cfg.override(key.strip(), _parse_value(value))
    if args.seed is not None:
        cfg = cfg.override("gen.seed", args.seed).override("train.seed", args.seed)
    if args.run_dir is not None:
        cfg = cfg.override("run_dir", args.run_dir)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        ctx = Context(cfg)
        if args.command != "config":
            if not ctx.run_dir.parent.exists():
                raise UserError(f"parent of run directory {ctx.run_dir} does not exist")
            ctx.run_dir.mkdir(exist_ok=True)
        COMMANDS[args.command](ctx)
    except (UserError, ConfigError, ConfigurationError, DimensionError, io.FormatError,
            netsim.EvaluationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USER
    except (circuit.CurrentBoundViolation, trainer.TrainingError, AssertionError) as err:
        print(f"internal error: {err}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
