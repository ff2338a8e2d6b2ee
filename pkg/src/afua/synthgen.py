"""Seeded synthetic contact-microphone signals for chewing and non-chewing activity."""
from __future__ import annotations

from dataclasses import dataclass, asdict, replace
from typing import Optional

import numpy as np

from .core import ConfigurationError
from .dsp import Segment, SignalBuffer
from .netsim import Label

NONCHEW_KINDS = ("talk", "silence", "cough")


@dataclass(frozen=True)
class GenConfig:
    sample_rate: float = 500.0
    chew_rate: float = 1.5
    chew_jitter: float = 0.05
    burst_freq: float = 40.0
    burst_len: float = 0.25
    burst_decay: float = 0.08
    amplitude: float = 1.0
    noise_floor: float = 0.02
    talk_rate: float = 4.0
    talk_interval_jitter: float = 0.6
    talk_amplitude: float = 0.3
    talk_freq: tuple = (80.0, 200.0)
    cough_amplitude: float = 2.0
    segment_windows: int = 5
    window_s: float = 24.0
    nonchew_mix: tuple = (("talk", 0.45), ("silence", 0.35), ("cough", 0.20))
    seed: int = 0

    def __post_init__(self):
        nyq = self.sample_rate / 2
        if not (self.chew_rate < nyq and self.burst_freq < nyq and max(self.talk_freq) < nyq):
            raise ConfigurationError("generator rates must stay below Nyquist")
        for j in (self.chew_jitter, self.talk_interval_jitter):
            if not 0 <= j <= 1:
                raise ConfigurationError("jitters must lie in [0, 1]")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["talk_freq"] = list(self.talk_freq)
        d["nonchew_mix"] = [list(p) for p in self.nonchew_mix]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        d = dict(d)
        if "talk_freq" in d:
            d["talk_freq"] = tuple(d["talk_freq"])
        if "nonchew_mix" in d:
            d["nonchew_mix"] = tuple((str(k), float(v)) for k, v in d["nonchew_mix"])
        return cls(**d)


def segment_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _n_samples(duration: float, cfg: GenConfig) -> int:
    if duration <= 0:
        raise ValueError("duration must be positive")
    return int(round(duration * cfg.sample_rate))


def _burst(n: int, freq: float, decay: float, fs: float, phase: float = 0.0) -> np.ndarray:
    t = np.arange(n) / fs
    return np.hanning(n) * np.exp(-t / decay) * np.sin(2 * np.pi * freq * t + phase)


def _add(out: np.ndarray, start: int, wave: np.ndarray):
    stop = min(len(out), start + len(wave))
    if start < stop:
        out[start:stop] += wave[:stop - start]


def burst_times(duration: float, rate: float, jitter: float, rng, cv_mode: str = "uniform"):
    """Onset times of a jittered burst train starting at a random phase."""
    mean = 1.0 / rate
    t = rng.uniform(0, mean)
    times = []
    while t < duration:
        times.append(t)
        if cv_mode == "uniform":
            step = mean * (1.0 + rng.uniform(-jitter, jitter))
        else:
            # gamma intervals with coefficient of variation ``jitter``
            shape = 1.0 / max(jitter, 1e-6) ** 2
            step = rng.gamma(shape, mean / shape)
        t += step
    return np.array(times)


def gen_chew(duration: float, cfg: GenConfig = GenConfig(),
             rng: Optional[np.random.Generator] = None) -> SignalBuffer:
    """Quasi-periodic low-frequency bursts at ``chew_rate`` over a noise floor."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    fs = cfg.sample_rate
    out = cfg.noise_floor * rng.standard_normal(_n_samples(duration, cfg))
    n_burst = int(round(cfg.burst_len * fs))
    for t in burst_times(duration, cfg.chew_rate, cfg.chew_jitter, rng):
        amp = cfg.amplitude * rng.uniform(0.8, 1.2)
        wave = _burst(n_burst, cfg.burst_freq * rng.uniform(0.9, 1.1), cfg.burst_decay, fs,
                      rng.uniform(0, 2 * np.pi))
        _add(out, int(round(t * fs)), amp * wave)
    return SignalBuffer(out, fs)


def gen_nonchew(duration: float, cfg: GenConfig = GenConfig(), kind: str = "talk",
                rng: Optional[np.random.Generator] = None) -> SignalBuffer:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    fs = cfg.sample_rate
    n = _n_samples(duration, cfg)
    out = cfg.noise_floor * rng.standard_normal(n)
    if kind == "silence":
        pass
    elif kind == "talk":
        lo, hi = cfg.talk_freq
        for t in burst_times(duration, cfg.talk_rate, cfg.talk_interval_jitter, rng, "gamma"):
            length = rng.uniform(0.05, 0.2)
            amp = cfg.talk_amplitude * rng.uniform(0.5, 1.5)
            wave = _burst(max(4, int(round(length * fs))), rng.uniform(lo, hi),
                          length, fs, rng.uniform(0, 2 * np.pi))
            _add(out, int(round(t * fs)), amp * wave)
    elif kind == "cough":
        per_window = rng.integers(1, 4, size=int(np.ceil(duration / cfg.window_s)))
        for w, count in enumerate(per_window):
            w0 = w * cfg.window_s
            w1 = min(duration, w0 + cfg.window_s)
            for t in np.sort(rng.uniform(w0, max(w0, w1 - 0.4), size=count)):
                m = int(round(0.3 * fs))
                env = np.exp(-np.arange(m) / (0.06 * fs))
                amp = cfg.cough_amplitude * rng.uniform(0.7, 1.3)
                _add(out, int(round(t * fs)), amp * env * rng.standard_normal(m))
    else:
        raise ValueError(f"unknown non-chewing kind {kind!r}")
    return SignalBuffer(out, fs)


@dataclass
class Corpus:
    signal: SignalBuffer
    manifest: list[Segment]
    config: GenConfig


def _allocate(total: int, mix) -> dict[str, int]:
    """Largest-remainder split of ``total`` windows across activity kinds."""
    kinds = [k for k, _ in mix]
    weights = np.array([w for _, w in mix], dtype=float)
    raw = total * weights / weights.sum()
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: total - counts.sum()]:
        counts[i] += 1
    return dict(zip(kinds, counts.tolist()))


def build_dataset(hours_pos: float = 0.4, hours_neg: float = 0.4,
                  cfg: GenConfig = GenConfig()) -> Corpus:
    """Concatenate class-balanced activity segments into one stream.

    Segments span whole 24 s windows so that a global window grid never
    straddles a boundary. Segment order is shuffled under ``cfg.seed`` and
    each segment draws from its own ``(seed, index)`` stream.
    """
    if hours_pos <= 0 or hours_neg <= 0:
        raise ValueError("durations must be positive")
    n_pos = int(round(hours_pos * 3600 / cfg.window_s))
    n_neg = int(round(hours_neg * 3600 / cfg.window_s))

    plan = []
    def chunk(kind, label, count):
        while count > 0:
            k = min(cfg.segment_windows, count)
            plan.append((kind, label, k))
            count -= k
    chunk("chew", Label.CHEWING, n_pos)
    for kind, count in _allocate(n_neg, cfg.nonchew_mix).items():
        chunk(kind, Label.NOT_CHEWING, count)
    order = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2**31])).permutation(len(plan))

    parts, manifest, t = [], [], 0.0
    for index, p in enumerate(order):
        kind, label, k = plan[p]
        duration = k * cfg.window_s
        rng = segment_rng(cfg.seed, index)
        if kind == "chew":
            buf = gen_chew(duration, cfg, rng)
        else:
            buf = gen_nonchew(duration, cfg, kind, rng)
        parts.append(buf.samples)
        manifest.append(Segment(start=t, end=t + duration, label=label, kind=kind))
        t += duration
    return Corpus(SignalBuffer(np.concatenate(parts), cfg.sample_rate), manifest, cfg)


def with_overrides(cfg: GenConfig, **kw) -> GenConfig:
    return replace(cfg, **kw)
