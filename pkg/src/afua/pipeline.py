"""End-to-end workflow: corpus, features, training, quantization and evaluation.

The :class:`RunConfig` document composes every module's configuration into
one versioned, strictly validated schema shared by the command line and the
acceptance tests.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import circuit, dsp, netsim, synthgen, trainer
from .io import config_hash

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


def _defaults() -> dict:
    return {
        "version": CONFIG_VERSION,
        "run_dir": "run",
        "corpus": {"hours_pos": 0.4, "hours_neg": 0.4},
        "gen": synthgen.GenConfig().as_dict(),
        "features": dsp.FeatureConfig().as_dict(),
        "train": trainer.TrainConfig().as_dict(),
        "eval": {"threshold": 0.0, "n_thresholds": 256, "min_sensitivity": 0.90},
        "montecarlo": {"sigma": 0.05, "n_runs": 250, "seed": 0, "ptat_bias": True},
        "power": {"i_unit": 1.8e-12, "i_unit_sim": 10e-9, "tau": 2e-3,
                  "step_period": 2e-3, "ops_per_step": circuit.OPS_PER_STEP,
                  "reference_current_units": 62.0, "n_patterns": 200,
                  "eat_fraction": 0.06, "sensitivity": 0.91, "specificity": 0.96,
                  "p_frontend": 1.8e-6, "p_mcu_active": 180e-6, "p_mcu_standby": 0.72e-6},
    }


def _check_keys(doc: dict, ref: dict, where: str):
    unknown = sorted(set(doc) - set(ref))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    for k, v in doc.items():
        if isinstance(ref[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where + '.' if where else ''}{k} must be a mapping")
            _check_keys(v, ref[k], f"{where + '.' if where else ''}{k}")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    doc: dict = field(default_factory=_defaults)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if "version" in doc and doc["version"] != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {doc['version']!r}")
        _check_keys(doc, _defaults(), "")
        cfg = cls(_merge(_defaults(), doc))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as err:
                raise ConfigError(f"{path}: not valid JSON ({err})") from err
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(doc)

    def override(self, dotted: str, value) -> "RunConfig":
        """Return a copy with ``section.key`` (or a top-level key) replaced."""
        keys = dotted.split(".")
        patch: dict = {}
        node = patch
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
        return RunConfig.from_dict(_merge(self.doc, patch))

    def validate(self):
        try:
            self.gen_config()
            self.feature_config()
            self.train_config()
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from err
        c = self.doc["corpus"]
        if c["hours_pos"] <= 0 or c["hours_neg"] <= 0:
            raise ConfigError("corpus durations must be positive")
        mc = self.doc["montecarlo"]
        if mc["n_runs"] < 1 or mc["sigma"] < 0:
            raise ConfigError("montecarlo needs n_runs >= 1 and sigma >= 0")

    def gen_config(self) -> synthgen.GenConfig:
        return synthgen.GenConfig.from_dict(self.doc["gen"])

    def feature_config(self) -> dsp.FeatureConfig:
        return dsp.FeatureConfig(**self.doc["features"])

    def train_config(self) -> trainer.TrainConfig:
        return trainer.TrainConfig.from_dict(self.doc["train"])

    def section(self, name: str) -> dict:
        return dict(self.doc[name])

    def hash(self) -> str:
        # the output location does not change any result
        return config_hash({k: v for k, v in self.doc.items() if k != "run_dir"})

    def as_dict(self) -> dict:
        return copy.deepcopy(self.doc)


def compute_features(buf: dsp.SignalBuffer, cfg: dsp.FeatureConfig) -> dsp.FeatureSequence:
    return dsp.extract_features(dsp.highpass(buf, cfg.highpass_cutoff), cfg)


@dataclass
class WindowSets:
    train: list
    valid: list
    test: list
    scaler: dsp.FeatureScaler

    def as_tuple(self):
        return self.train, self.valid, self.test


def prepare_windows(features: dsp.FeatureSequence, manifest, window_s: float,
                    split, seed: int) -> WindowSets:
    """Windowize, split stratified by class, and scale with training-set statistics."""
    windows = dsp.windowize(features, manifest, window_s)
    tr, va, te = trainer.split_dataset(windows, split, seed)
    scaler = dsp.FeatureScaler.fit(np.concatenate([w.frames for w in tr]))
    return WindowSets(*(dsp.scale_windows(s, scaler) for s in (tr, va, te)), scaler=scaler)


def evaluate(params, test_set, threshold: float = 0.0, n_thresholds: int = 256,
             min_sensitivity: float = 0.90) -> dict:
    """Accuracy, confusion metrics, and the ROC summary for one weight set."""
    h = netsim.final_states(params, test_set)
    scores = netsim.decision_score(h)
    labels = [int(w.label) for w in test_set]
    pred = (scores >= threshold).astype(int)
    metrics = netsim.confusion_metrics(pred, labels)
    out = {"accuracy": metrics.accuracy, "confusion": metrics.as_dict(),
           "n_windows": len(test_set), "threshold": threshold}
    tn, fp = metrics.counts.get("tn", 0), metrics.counts.get("fp", 0)
    out["specificity"] = tn / (tn + fp) if tn + fp else None
    try:
        curve = netsim.roc_from_scores(scores, labels, n_thresholds)
    except netsim.EvaluationError:
        out["roc"] = None
        return out
    op = curve.operating_point(min_sensitivity)
    bal = curve.best_balanced()
    out["roc"] = {
        "auc": curve.auc,
        "best_balanced": dict(zip(("threshold", "sensitivity", "specificity"), bal)),
        "operating_point": (None if op is None else
                            dict(zip(("threshold", "sensitivity", "specificity"), op))),
        "min_sensitivity": min_sensitivity,
    }
    out["_curve"] = curve
    return out


@dataclass
class PipelineResult:
    config: RunConfig
    corpus: synthgen.Corpus
    features: dsp.FeatureSequence
    windows: WindowSets
    params: object
    report: trainer.TrainReport
    restarts: list
    qparams: netsim.QuantizedParams
    eval_full: dict
    eval_quantized: dict


def run_pipeline(config: Optional[RunConfig] = None) -> PipelineResult:
    """Generate, featurize, train (with restarts), quantize and evaluate in memory."""
    config = config or RunConfig()
    gcfg = config.gen_config()
    fcfg = config.feature_config()
    tcfg = config.train_config()
    c = config.section("corpus")
    corpus = synthgen.build_dataset(c["hours_pos"], c["hours_neg"], gcfg)
    feats = compute_features(corpus.signal, fcfg)
    sets = prepare_windows(feats, corpus.manifest, gcfg.window_s, tcfg.split, tcfg.seed)
    params, report, restarts = trainer.train_with_restarts(sets.train, sets.valid, tcfg)
    q = netsim.quantize(params)
    ev = config.section("eval")
    return PipelineResult(config, corpus, feats, sets, params, report, restarts, q,
                          evaluate(params, sets.test, **ev), evaluate(q, sets.test, **ev))


def power_summary(config: RunConfig, qparams=None, test_set=None) -> dict:
    """Unit-current sizing, worst-case bound, efficiency and system power.

    With weights and test windows the current draw is simulated on up to
    ``n_patterns`` test windows; otherwise only the closed-form numbers are
    reported.
    """
    p = config.section("power")
    chip_cfg = circuit.CircuitConfig.chip(i_unit=p["i_unit"])
    sized = circuit.unit_current_for_tau(p["tau"], chip_cfg)
    sim_cfg = circuit.CircuitConfig(i_unit=p["i_unit_sim"])
    out = {
        "unit_current_for_tau": {"tau_s": p["tau"], "i_unit_A": sized},
        "time_constant": {"i_unit_A": sim_cfg.i_unit, "tau_s": sim_cfg.tau,
                          "rise_time_63_s": circuit.rise_time_63(sim_cfg)},
        "ops_per_watt_reference": {
            "avg_current_units": p["reference_current_units"],
            "ops_per_watt": circuit.ops_per_watt(chip_cfg, p["reference_current_units"],
                                                 p["ops_per_step"], p["step_period"]),
            "reported_ops_per_watt": 76e12},
        "system_power": circuit.system_power(p["eat_fraction"], p["sensitivity"],
                                             p["specificity"], p["p_frontend"],
                                             p["p_mcu_active"], p["p_mcu_standby"]),
    }
    out["system_power"].update({k: p[k] for k in ("eat_fraction", "sensitivity", "specificity",
                                                  "p_frontend", "p_mcu_active",
                                                  "p_mcu_standby")})
    out["worst_case"] = {}
    for m, n in ((2, 2), (10, 16)):
        wc = circuit.worst_case_current(m, n)
        out["worst_case"][f"{m}x{n}"] = {"blocks_units": wc.blocks(), "total_units": wc.total,
                                         "overhead_fraction": wc.overhead_fraction}
    if qparams is not None and test_set:
        stream = np.stack([w.frames for w in test_set[:p["n_patterns"]]])
        rep = circuit.simulate_current_draw(qparams, stream, chip_cfg,
                                            step_period=p["step_period"],
                                            ops_per_step=p["ops_per_step"])
        out["simulated"] = rep.as_dict()
        out["_report"] = rep
    return out


def strip_private(d):
    """Drop in-memory objects (keys starting with ``_``) before serializing."""
    if isinstance(d, dict):
        return {k: strip_private(v) for k, v in d.items() if not k.startswith("_")}
    if isinstance(d, list):
        return [strip_private(v) for v in d]
    return d
