#!/usr/bin/env python3
"""How the AFUA cell behaves as a gated low-pass filter.

The update gate sets the filter's time constant, so a closed gate freezes
the state and an open gate makes it relax towards twice the candidate.
The discrete update is the forward-Euler step of the continuous filter
with tau equal to one frame. Flipping the sign of a GRU's update-gate
weights inverts its gate logic exactly.
"""
import numpy as np

from afua.core import (GruParams, IntegratorConfig, ModelParams, gates, gru_reference,
                       integrate_continuous, run_discrete)


def relaxation():
    p = ModelParams.zeros(2, 1)
    p.W[:] = [[0.6], [2.0]]
    p.Wz[:] = [[0.4], [1.5]]
    x = np.ones((40, 1))
    z, h_cand = gates(p, x[0], np.ones(2))
    print("gate z        ", np.round(z, 3))
    print("target 2*h~   ", np.round(2 * h_cand, 3))
    traj = run_discrete(p, x, return_trajectory=True)
    for t in (0, 4, 9, 19, 39):
        print(f"  frame {t + 1:2d}  h = {np.round(traj[t], 4)}")


def continuous_vs_discrete():
    rng = np.random.default_rng(0)
    p = ModelParams(W=rng.normal(0, 1, (2, 2)), Wz=rng.normal(0, 0.5, (2, 2)),
                    U=rng.normal(0, 1, (2, 2)), Uz=rng.normal(0, 0.5, (2, 2)),
                    b=np.full(2, 0.8), bz=np.full(2, 0.3))
    t = np.arange(200)[:, None]
    frames = 0.5 + 0.4 * np.sin(2 * np.pi * t / np.array([150.0, 230.0]))
    disc = run_discrete(p, frames)
    for dt in (1 / 20, 1 / 200):
        cont = integrate_continuous(p, frames, 1.0, IntegratorConfig(tau=1.0, dt=dt))[-1]
        print(f"dt = tau/{round(1 / dt):<4d} continuous {np.round(cont, 4)}  "
              f"discrete {np.round(disc, 4)}")


def gate_inversion():
    rng = np.random.default_rng(1)
    p = GruParams(*(rng.normal(0, 1, s) for s in [(3, 2)] * 3 + [(3, 3)] * 3))
    xs = rng.normal(size=(50, 2))
    h0 = rng.uniform(-1, 1, 3)
    a = gru_reference(p, xs, h0)
    b = gru_reference(p.with_inverted_update(), xs, h0, inverted_update=True)
    print("GRU final state        ", a)
    print("inverted gate, flipped ", b)
    print("bit-identical:", np.array_equal(a, b))


if __name__ == "__main__":
    print("== relaxation under a constant input ==")
    relaxation()
    print("\n== continuous filter vs discrete step ==")
    continuous_vs_discrete()
    print("\n== update-gate inversion ==")
    gate_inversion()
