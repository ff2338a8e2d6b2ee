#!/usr/bin/env python3
"""Train, quantize and stress-test a two-unit chewing detector.

Runs the default workflow in memory on a synthetic contact-microphone
corpus: ZCR features, BPTT training with restarts, rounding to 3-bit
weights, then a Monte Carlo sweep over mirror mismatch and supply and
temperature corners. Pass ``--quick`` for a shorter corpus and fewer
epochs (a few seconds instead of about a minute).
"""
import argparse
import time

from afua.circuit import monte_carlo
from afua.pipeline import RunConfig, run_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    cfg = RunConfig()
    if args.quick:
        cfg = (cfg.override("corpus.hours_pos", 0.2).override("corpus.hours_neg", 0.2)
               .override("train.epochs", 60).override("train.restarts", 2))

    start = time.perf_counter()
    r = run_pipeline(cfg)
    print(f"corpus: {r.corpus.signal.duration / 60:.0f} min, "
          f"{len(r.windows.train)}/{len(r.windows.valid)}/{len(r.windows.test)} windows")
    for s in r.restarts:
        print(f"  restart seed {s.seed}: best valid loss {s.best_valid_loss:.4f}, "
              f"quantized train+valid accuracy {s.quantized_accuracy:.3f}")
    print("quantized weights:")
    for name, w in r.qparams.as_dict().items():
        print(f"  {name:2s} {w.tolist()}")
    print(f"test accuracy: full precision {r.eval_full['accuracy']:.3f}, "
          f"quantized {r.eval_quantized['accuracy']:.3f}")
    op = r.eval_quantized["roc"]["operating_point"]
    if op is not None:
        print(f"ROC: AUC {r.eval_quantized['roc']['auc']:.3f}; at sensitivity >= 0.90 the "
              f"specificity is {op['specificity']:.3f}")

    mc = monte_carlo(r.qparams, r.windows.test, sigma=0.05, n_runs=100)
    print(f"mismatch sigma 0.05, 100 runs: median {mc.median:.3f}, "
          f"min {mc.accuracies.min():.3f} (nominal {mc.nominal_accuracy:.3f})")
    print(f"elapsed {time.perf_counter() - start:.0f} s")


if __name__ == "__main__":
    main()
