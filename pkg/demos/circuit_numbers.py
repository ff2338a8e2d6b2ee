#!/usr/bin/env python3
"""Sizing and power numbers of the current-mode AFUA layer.

Walks from the device constants to the figures quoted for the chip:
unit current for a 2 ms time constant, the filter rise time at 10 nA,
the worst-case current table, operations per watt and the system budget
of a duty-cycled wearable.
"""
from afua.circuit import (CircuitConfig, ops_per_watt, rise_time_63, system_power,
                          unit_current_for_tau, worst_case_current)


def main():
    chip = CircuitConfig.chip()
    i_unit = unit_current_for_tau(2e-3, chip)
    print(f"unit current for tau = 2 ms      {i_unit * 1e12:8.3f} pA")

    bench = CircuitConfig(i_unit=10e-9)
    print(f"filter tau at 10 nA              {bench.tau * 1e6:8.3f} us")
    print(f"simulated 63.2% rise time        {rise_time_63(bench) * 1e6:8.3f} us")

    print("\nworst-case current (units of I_unit)")
    print(f"{'m x n':>8} {'core':>8} {'soma':>8} {'overhead':>9}")
    for m, n in ((2, 2), (10, 16), (16, 16), (64, 64)):
        wc = worst_case_current(m, n)
        print(f"{m:>3} x {n:<3} {wc.core:8.0f} {wc.soma:8.0f} {100 * wc.overhead_fraction:8.2f}%")

    value = ops_per_watt(chip, 62.0, 32, 2e-3)
    print(f"\nops per watt at 62 units         {value / 1e12:8.1f} TOps/W (reported: 76)")

    budget = system_power(0.06, 0.91, 0.96)
    print(f"MCU active fraction              {budget['active_fraction']:8.4f}")
    print(f"average system power             {budget['avg_power'] * 1e6:8.2f} uW")


if __name__ == "__main__":
    main()
