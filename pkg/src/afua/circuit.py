"""Current-mode behavioral model of the AFUA chip.

Every dimensionless network variable is carried as a current ratio to
``I_unit``. The functions here cover the activation and translinear filter
circuits, current-consumption accounting, unit-current sizing, mismatch
Monte Carlo and the system-level power budget.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import constants

from .core import ModelParams, activation, initial_state
from .netsim import QuantizedParams, decision_score

NOMINAL_TEMPERATURE = 300.15  # 27 C
NOMINAL_VDD = 1.8
VDD_RANGE = (1.6, 2.0)
TEMPERATURE_RANGE = (273.15, 308.15)

# equivalent digital operations of the discretized two-unit network per time step
OPS_PER_STEP = 32


class CurrentBoundViolation(AssertionError):
    pass


def thermal_voltage(temperature: float) -> float:
    return constants.k * temperature / constants.e


@dataclass(frozen=True)
class CircuitConfig:
    i_unit: float = 10e-9
    c_z: float = 57e-15
    kappa: float = 0.42
    temperature: float = NOMINAL_TEMPERATURE
    v_dd: float = NOMINAL_VDD
    u_t_override: Optional[float] = None

    def __post_init__(self):
        for name in ("i_unit", "c_z", "kappa", "temperature", "v_dd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def chip(cls, i_unit: float = 1.8e-12) -> "CircuitConfig":
        """Fabricated design constants, with the thermal voltage rounded to 26 mV."""
        return cls(i_unit=i_unit, c_z=57e-15, kappa=0.42, v_dd=1.8, u_t_override=26e-3)

    @property
    def u_t(self) -> float:
        return self.u_t_override if self.u_t_override is not None else thermal_voltage(self.temperature)

    @property
    def tau(self) -> float:
        """Nominal filter time constant, reached at ``I_z = I_unit``."""
        return self.c_z * self.u_t / (self.kappa * self.i_unit)

    def with_(self, **kw) -> "CircuitConfig":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# circuit primitives
# ---------------------------------------------------------------------------


def current_activation(i_in, cfg: CircuitConfig):
    """Current-starved mirror: ``I_unit * max(I,0)^2 / (I_unit^2 + max(I,0)^2)``."""
    return cfg.i_unit * activation(np.asarray(i_in, dtype=float) / cfg.i_unit)


def tau_eff(i_z, cfg: CircuitConfig):
    """Filter time constant ``C_z U_T / (kappa I_z)``; infinite at ``I_z = 0``."""
    i_z = np.asarray(i_z, dtype=float)
    with np.errstate(divide="ignore"):
        return cfg.c_z * cfg.u_t / (cfg.kappa * i_z)


def translinear_filter_step(i_h, i_hcand, i_z, dt: float, cfg: CircuitConfig,
                            method: str = "exact"):
    """Advance the adaptive filter ``tau_eff dI_h/dt = 2 I_hcand - I_h`` by ``dt``.

    Inputs are held over the step. ``exact`` uses the closed-form exponential
    response, ``euler`` a single forward-Euler step.
    """
    i_h = np.asarray(i_h, dtype=float)
    target = 2.0 * np.asarray(i_hcand, dtype=float)
    rate = cfg.kappa * np.asarray(i_z, dtype=float) / (cfg.c_z * cfg.u_t)
    if method == "exact":
        return i_h + (target - i_h) * -np.expm1(-dt * rate)
    if method == "euler":
        return i_h + dt * rate * (target - i_h)
    raise ValueError(f"unknown method {method!r}")


def rise_time_63(cfg: CircuitConfig, i_z: Optional[float] = None, i_hcand: Optional[float] = None,
                 steps_per_tau: int = 1000, method: str = "euler") -> float:
    """Simulated time for ``I_h`` to cover 63.2 % of a step from zero to ``2 I_hcand``."""
    i_z = cfg.i_unit if i_z is None else i_z
    i_hcand = 0.5 * cfg.i_unit if i_hcand is None else i_hcand
    if i_z <= 0:
        return float("inf")
    dt = float(tau_eff(i_z, cfg)) / steps_per_tau
    level = (1 - np.exp(-1)) * 2 * i_hcand
    i_h, t = 0.0, 0.0
    while True:
        nxt = float(translinear_filter_step(i_h, i_hcand, i_z, dt, cfg, method))
        if nxt >= level:
            return t + dt * (level - i_h) / (nxt - i_h)
        i_h, t = nxt, t + dt


def unit_current_for_tau(tau: float, cfg: CircuitConfig) -> float:
    if tau <= 0:
        raise ValueError("tau must be positive")
    return cfg.c_z * cfg.u_t / (cfg.kappa * tau)


def current_forward(params: ModelParams, frames, cfg: CircuitConfig,
                    frame_period: Optional[float] = None, substeps: int = 50) -> np.ndarray:
    """Continuous-time network in amperes, inputs given in units of ``I_unit``.

    The VMM, activation circuits and translinear filters are evaluated with
    currents; returns the hidden-state currents at the end of every frame,
    shape ``(..., T, m)``. Each substep solves the filter exactly with the
    gate currents taken at the half-step state (exponential midpoint rule).
    """
    if isinstance(params, QuantizedParams):
        params = params.as_float()
    frames = np.asarray(frames, dtype=float)
    iu = cfg.i_unit
    period = cfg.tau if frame_period is None else frame_period
    dt = period / substeps

    def gate_currents(i_x, i_h):
        i_dev = i_h - iu
        i_az = i_x @ params.Wz.T + i_dev @ params.Uz.T + params.bz * iu
        i_ah = i_x @ params.W.T + i_dev @ params.U.T + params.b * iu
        return current_activation(i_az, cfg), current_activation(i_ah, cfg)

    i_h = initial_state(params.m, frames.shape[:-2]) * iu
    out = []
    for t in range(frames.shape[-2]):
        i_x = frames[..., t, :] * iu
        for _ in range(substeps):
            i_z, i_c = gate_currents(i_x, i_h)
            i_mid = translinear_filter_step(i_h, i_c, i_z, dt / 2, cfg)
            i_z, i_c = gate_currents(i_x, i_mid)
            i_h = translinear_filter_step(i_h, i_c, i_z, dt, cfg)
        out.append(i_h)
    return np.stack(out, axis=-2)


# ---------------------------------------------------------------------------
# current consumption
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WorstCase:
    m: int
    n: int
    activation: float
    filter: float
    vmm_core: float
    soma: float

    @property
    def core(self) -> float:
        return self.activation + self.filter + self.vmm_core

    @property
    def total(self) -> float:
        return self.core + self.soma

    @property
    def overhead_fraction(self) -> float:
        return self.soma / self.total

    def blocks(self) -> dict:
        return {"activation": self.activation, "filter": self.filter,
                "vmm": self.vmm_core, "soma": self.soma}


def worst_case_current(m: int, n: int) -> WorstCase:
    """Upper bound on the layer current, in multiples of ``I_unit``.

    ``core = m(14 + 6(n + 2m))`` and ``soma = 4m + 2n + 2``.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be at least 1")
    rows = n + 2 * m + 1
    wc = WorstCase(m=m, n=n, activation=2.0 * m, filter=6.0 * m,
                   vmm_core=6.0 * m * rows, soma=2.0 * rows)
    assert wc.core == m * (14 + 6 * (n + 2 * m)) and wc.soma == 4 * m + 2 * n + 2
    return wc


@dataclass
class MismatchSample:
    """Multiplicative gain of every current-mirror instance plus a PVT corner.

    ``vmm`` holds per-element gains shaped like each weight tensor; the
    other arrays have one entry per soma row or per unit.
    """

    vmm: dict
    soma_x: np.ndarray
    soma_h: np.ndarray
    soma_bias: float
    tail_z: np.ndarray
    tail_h: np.ndarray
    filter_in: np.ndarray
    filter_z: np.ndarray
    v_dd: float = NOMINAL_VDD
    temperature: float = NOMINAL_TEMPERATURE
    seed: Optional[int] = None

    def __post_init__(self):
        if not all(np.all(g > 0) for g in self._all_gains()):
            raise ValueError("gain factors must be positive")
        if not VDD_RANGE[0] <= self.v_dd <= VDD_RANGE[1]:
            raise ValueError(f"supply {self.v_dd} V outside {VDD_RANGE}")
        if not TEMPERATURE_RANGE[0] <= self.temperature <= TEMPERATURE_RANGE[1]:
            raise ValueError(f"temperature {self.temperature} K outside {TEMPERATURE_RANGE}")

    def _all_gains(self):
        return list(self.vmm.values()) + [self.soma_x, self.soma_h, np.atleast_1d(self.soma_bias),
                                          self.tail_z, self.tail_h, self.filter_in,
                                          self.filter_z]

    def max_gain(self) -> float:
        return float(max(np.max(g) for g in self._all_gains()))

    @classmethod
    def nominal(cls, m: int = 2, n: int = 2, v_dd: float = NOMINAL_VDD,
                temperature: float = NOMINAL_TEMPERATURE) -> "MismatchSample":
        shapes = {"W": (m, n), "Wz": (m, n), "U": (m, m), "Uz": (m, m), "b": (m,), "bz": (m,)}
        return cls(vmm={k: np.ones(s) for k, s in shapes.items()}, soma_x=np.ones(n),
                   soma_h=np.ones(m), soma_bias=1.0, tail_z=np.ones(m), tail_h=np.ones(m),
                   filter_in=np.ones(m), filter_z=np.ones(m), v_dd=v_dd, temperature=temperature)

    @classmethod
    def draw(cls, m: int, n: int, sigma: float, rng: np.random.Generator,
             v_dd: float = NOMINAL_VDD, temperature: float = NOMINAL_TEMPERATURE,
             seed: Optional[int] = None) -> "MismatchSample":
        """Independent log-normal gains ``exp(sigma * N(0, 1))``."""
        def g(shape):
            return np.exp(sigma * rng.standard_normal(shape))
        base = cls.nominal(m, n)
        return cls(vmm={k: g(v.shape) for k, v in base.vmm.items()}, soma_x=g(n), soma_h=g(m),
                   soma_bias=float(g(())), tail_z=g(m), tail_h=g(m), filter_in=g(m),
                   filter_z=g(m), v_dd=v_dd, temperature=temperature, seed=seed)

    def as_dict(self) -> dict:
        return {"vmm": {k: v.tolist() for k, v in self.vmm.items()},
                "soma_x": self.soma_x.tolist(), "soma_h": self.soma_h.tolist(),
                "soma_bias": self.soma_bias, "tail_z": self.tail_z.tolist(),
                "tail_h": self.tail_h.tolist(), "filter_in": self.filter_in.tolist(),
                "filter_z": self.filter_z.tolist(), "v_dd": self.v_dd,
                "temperature": self.temperature, "seed": self.seed}


def _weights(params) -> ModelParams:
    return params.as_float() if isinstance(params, QuantizedParams) else params


def mismatched_step(params: ModelParams, x, h, mm: MismatchSample, rate_factor: float = 1.0):
    """One discrete step with every mirror gain applied.

    With unit gains and ``rate_factor == 1`` this reproduces
    :func:`afua.core.step_discrete` bit for bit. Returns ``(h_next, z, h_cand)``
    where ``z`` and ``h_cand`` are the delivered (perturbed) currents.
    """
    v = mm.vmm
    xs = x * mm.soma_x
    hs = (h - 1.0) * mm.soma_h
    a_z = xs @ (params.Wz * v["Wz"]).T + hs @ (params.Uz * v["Uz"]).T + params.bz * v["bz"] * mm.soma_bias
    a_h = xs @ (params.W * v["W"]).T + hs @ (params.U * v["U"]).T + params.b * v["b"] * mm.soma_bias
    z = activation(a_z) * mm.tail_z
    c = activation(a_h) * mm.tail_h
    # the filter cannot move past its target within one step
    zz = np.minimum(z * mm.filter_z * rate_factor, 1.0)
    cc = c * mm.filter_in
    return (1.0 - zz) * h + 2.0 * zz * cc, zz, cc


def mismatched_final_states(params, frames, mm: MismatchSample, ptat_bias: bool = True,
                            nominal_temperature: float = NOMINAL_TEMPERATURE) -> np.ndarray:
    """Final hidden states of ``(..., T, n)`` frames under one mismatch draw.

    With ``ptat_bias`` the unit current tracks absolute temperature, which
    keeps ``C_z U_T / (kappa I_unit)`` and hence the filter rate fixed;
    otherwise the rate scales with ``U_T(T_nom) / U_T(T)``.
    """
    params = _weights(params)
    frames = np.asarray(frames, dtype=float)
    rate = 1.0 if ptat_bias else nominal_temperature / mm.temperature
    h = initial_state(params.m, frames.shape[:-2])
    for t in range(frames.shape[-2]):
        h, _, _ = mismatched_step(params, frames[..., t, :], h, mm, rate)
    return h


@dataclass
class PowerReport:
    block_mean: dict
    block_max: dict
    block_worst_case: dict
    total_mean: float
    total_max: float
    bound: float
    total_current: float
    power: float
    ops_per_watt: float
    pattern_vmm: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pattern_total: np.ndarray = field(default_factory=lambda: np.zeros(0))
    violations: int = 0

    def as_dict(self) -> dict:
        return {"block_mean_units": self.block_mean, "block_max_units": self.block_max,
                "block_worst_case_units": self.block_worst_case,
                "total_mean_units": self.total_mean, "total_max_units": self.total_max,
                "bound_units": self.bound, "total_current_A": self.total_current,
                "power_W": self.power, "ops_per_watt": self.ops_per_watt,
                "violations": self.violations}


def step_currents(params: ModelParams, x, h, mm: MismatchSample, rate_factor: float = 1.0):
    """Advance one step and return ``(h_next, blocks)`` with per-block currents in units.

    Rows of the VMM carry the inputs, a constant bias row of one unit and
    the hidden states; each element draws ``|w|`` times its row current.
    """
    h_next, z, c = mismatched_step(params, x, h, mm, rate_factor)
    v = mm.vmm
    row_x = x * mm.soma_x
    row_h = h * mm.soma_h
    row_b = mm.soma_bias
    vmm = 0.0
    for w_in, w_rec, w_b in (("Wz", "Uz", "bz"), ("W", "U", "b")):
        vmm = vmm + row_x @ (np.abs(getattr(params, w_in)) * v[w_in]).T
        vmm = vmm + row_h @ (np.abs(getattr(params, w_rec)) * v[w_rec]).T
        vmm = vmm + row_b * np.abs(getattr(params, w_b)) * v[w_b]
    blocks = {
        "activation": np.broadcast_to(np.sum(mm.tail_z + mm.tail_h), h.shape[:-1]).astype(float),
        "filter": np.sum(2.0 * c + 2.0 * z + h, axis=-1),
        "soma": 2.0 * (np.sum(row_x, axis=-1) + row_b + np.sum(row_h, axis=-1)),
        "vmm": np.sum(vmm, axis=-1),
    }
    return h_next, blocks


def simulate_current_draw(qparams, input_stream, cfg: CircuitConfig,
                          mismatch: Optional[MismatchSample] = None,
                          step_period: float = 2e-3, ops_per_step: int = OPS_PER_STEP,
                          ptat_bias: bool = True) -> PowerReport:
    """Account the per-block supply current while the network runs.

    ``input_stream`` is ``(T, n)`` or ``(P, T, n)`` (``P`` input patterns) in
    units of ``I_unit`` and must lie in ``[0, 1]``. Raises
    :class:`CurrentBoundViolation` if any instantaneous total exceeds the
    worst-case bound (scaled by the largest gain stack under mismatch).
    """
    params = _weights(qparams)
    frames = np.asarray(input_stream, dtype=float)
    if frames.ndim == 2:
        frames = frames[None]
    if frames.min() < 0 or frames.max() > 1:
        raise ValueError("inputs must lie in [0, 1] units of I_unit")
    mm = MismatchSample.nominal(params.m, params.n) if mismatch is None else mismatch
    wc = worst_case_current(params.m, params.n)
    # a signal passes at most four gain stages (element, soma, tail, filter)
    bound = wc.total * (1.0 if mismatch is None else max(1.0, mm.max_gain()) ** 4)
    rate = 1.0 if ptat_bias else NOMINAL_TEMPERATURE / mm.temperature

    h = initial_state(params.m, frames.shape[:1])
    sums = {k: np.zeros(frames.shape[0]) for k in wc.blocks()}
    maxima = {k: 0.0 for k in wc.blocks()}
    total_max = 0.0
    violations = 0
    T = frames.shape[1]
    for t in range(T):
        h, blocks = step_currents(params, frames[:, t, :], h, mm, rate)
        total = sum(blocks.values())
        violations += int(np.sum(total > bound * (1 + 1e-12)))
        total_max = max(total_max, float(total.max()))
        for k, val in blocks.items():
            sums[k] += val
            maxima[k] = max(maxima[k], float(np.max(val)))
    if violations:
        raise CurrentBoundViolation(
            f"{violations} steps exceed the worst-case bound of {bound:.2f} I_unit "
            f"(max {total_max:.2f})")
    pattern_means = {k: s / T for k, s in sums.items()}
    pattern_total = sum(pattern_means.values())
    mean_total = float(np.mean(pattern_total))
    v_dd = cfg.v_dd if mismatch is None else mm.v_dd
    current = mean_total * cfg.i_unit
    return PowerReport(
        block_mean={k: float(np.mean(v)) for k, v in pattern_means.items()},
        block_max=maxima, block_worst_case=wc.blocks(), total_mean=mean_total,
        total_max=total_max, bound=bound, total_current=current, power=current * v_dd,
        ops_per_watt=ops_per_watt(cfg.with_(v_dd=v_dd), mean_total, ops_per_step, step_period),
        pattern_vmm=pattern_means["vmm"], pattern_total=pattern_total, violations=violations)


def ops_per_watt(cfg: CircuitConfig, avg_current_units: float, ops_per_step: int = OPS_PER_STEP,
                 step_period: float = 2e-3) -> float:
    if min(avg_current_units, ops_per_step, step_period) <= 0:
        raise ValueError("arguments must be positive")
    return (ops_per_step / step_period) / (avg_current_units * cfg.i_unit * cfg.v_dd)


def system_power(eat_fraction: float, sensitivity: float, specificity: float,
                 p_frontend: float = 1.8e-6, p_mcu_active: float = 180e-6,
                 p_mcu_standby: float = 0.72e-6) -> dict:
    """Microcontroller duty cycle and average system power.

    The microcontroller wakes on true detections during eating and on false
    alarms otherwise; the analog front end runs continuously.
    """
    for p in (eat_fraction, sensitivity, specificity):
        if not 0 <= p <= 1:
            raise ValueError("probabilities must lie in [0, 1]")
    active = eat_fraction * sensitivity + (1 - specificity) * (1 - eat_fraction)
    mcu = active * p_mcu_active + (1 - active) * p_mcu_standby
    return {"active_fraction": active, "mcu_power": mcu, "avg_power": p_frontend + mcu}


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass
class MonteCarloResult:
    accuracies: np.ndarray
    nominal_accuracy: float
    sigma: float
    samples: list

    @property
    def median(self) -> float:
        return float(np.median(self.accuracies))

    def summary(self) -> dict:
        acc = self.accuracies
        return {"n_runs": int(acc.size), "sigma": self.sigma,
                "nominal_accuracy": self.nominal_accuracy, "median_accuracy": self.median,
                "mean_accuracy": float(acc.mean()), "min_accuracy": float(acc.min()),
                "max_accuracy": float(acc.max()),
                "p05_accuracy": float(np.percentile(acc, 5)),
                "p95_accuracy": float(np.percentile(acc, 95))}


def corner_schedule(n_runs: int, rng: np.random.Generator) -> list[tuple[float, float]]:
    """The four extreme (V_dd, T) corners first, then uniform draws within range."""
    extremes = [(v, t) for v in VDD_RANGE for t in TEMPERATURE_RANGE]
    out = extremes[:n_runs]
    while len(out) < n_runs:
        out.append((float(rng.uniform(*VDD_RANGE)), float(rng.uniform(*TEMPERATURE_RANGE))))
    return out


def monte_carlo(qparams, test_set: Sequence, sigma: float = 0.05, n_runs: int = 250,
                cfg: Optional[CircuitConfig] = None, seed: int = 0, ptat_bias: bool = True,
                threshold: float = 0.0) -> MonteCarloResult:
    """Test accuracy under independent mismatch draws and PVT corners."""
    from .netsim import accuracy

    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    params = _weights(qparams)
    frames = np.stack([np.asarray(w.frames, dtype=float) for w in test_set])
    truth = np.array([int(w.label) for w in test_set])
    nominal = accuracy(params, test_set, threshold)
    corner_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    corners = corner_schedule(n_runs, corner_rng)
    accs, samples = [], []
    for run, (v_dd, temp) in enumerate(corners):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0, run]))
        mm = MismatchSample.draw(params.m, params.n, sigma, rng, v_dd, temp, seed=run)
        h = mismatched_final_states(params, frames, mm, ptat_bias)
        pred = (decision_score(h) >= threshold).astype(int)
        accs.append(float(np.mean(pred == truth)))
        samples.append({"run": run, "v_dd": v_dd, "temperature": temp, "max_gain": mm.max_gain()})
    return MonteCarloResult(np.array(accs), nominal, sigma, samples)
