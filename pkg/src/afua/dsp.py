"""Signal conditioning and ZCR/RMS feature extraction."""
from __future__ import annotations

from dataclasses import dataclass, asdict
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy import signal

from .core import ConfigurationError
from .netsim import Label


@dataclass
class SignalBuffer:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.sample_rate <= 0:
            raise ConfigurationError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.sample_rate


@dataclass(frozen=True)
class FeatureConfig:
    tau_rms: float = 0.1
    envelope_frame: float = 2.0
    envelope_hop: float = 1.0
    raw_frame: float = 0.25
    hysteresis: float = 0.1
    feature_rate: float = 10.0
    highpass_cutoff: float = 20.0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class FeatureSequence:
    """Feature frames ``(T, 2)``: column 0 is ZCR-of-RMS, column 1 ZCR-of-ZCR."""

    values: np.ndarray
    rate: float
    t0: float = 0.0

    def times(self) -> np.ndarray:
        return self.t0 + (np.arange(len(self.values)) + 1) / self.rate


@dataclass
class WindowSample:
    frames: np.ndarray
    label: Label
    t0: float = 0.0
    frame_rate: float = 10.0
    kind: str = ""

    @property
    def duration(self) -> float:
        return len(self.frames) / self.frame_rate

    def one_hot(self) -> np.ndarray:
        return self.label.one_hot()


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    label: Label
    kind: str = ""


def highpass(buf: SignalBuffer, cutoff: float = 20.0) -> SignalBuffer:
    """Causal second-order Butterworth high-pass."""
    if not 0 < cutoff < buf.sample_rate / 2:
        raise ConfigurationError(f"cutoff {cutoff} Hz must lie below Nyquist")
    sos = signal.butter(2, cutoff, btype="highpass", fs=buf.sample_rate, output="sos")
    return SignalBuffer(signal.sosfilt(sos, buf.samples), buf.sample_rate)


def resample(buf: SignalBuffer, target_rate: float, numtaps: int = 801) -> SignalBuffer:
    """Anti-alias at ``0.45 * target_rate`` and decimate to ``target_rate``."""
    if target_rate > buf.sample_rate:
        raise ConfigurationError("upsampling is not supported")
    if target_rate == buf.sample_rate:
        return SignalBuffer(buf.samples.copy(), buf.sample_rate)
    ratio = Fraction(target_rate / buf.sample_rate).limit_denominator(10000)
    up, down = ratio.numerator, ratio.denominator
    fir = signal.firwin(numtaps, 0.45 * target_rate, fs=buf.sample_rate * up)
    out = signal.resample_poly(buf.samples, up, down, window=fir)
    return SignalBuffer(out, target_rate)


def rms_envelope(buf: SignalBuffer, tau_rms: float = 0.1) -> SignalBuffer:
    """Square root of a single-pole low-pass of the squared signal."""
    if tau_rms <= 0:
        raise ConfigurationError("tau_rms must be positive")
    a = np.exp(-1.0 / (buf.sample_rate * tau_rms))
    power = signal.lfilter([1.0 - a], [1.0, -a], buf.samples ** 2)
    return SignalBuffer(np.sqrt(np.maximum(power, 0.0)), buf.sample_rate)


def count_crossings(x: np.ndarray, hysteresis: float) -> int:
    """Mean crossings of ``x`` with a Schmitt band of ``hysteresis * std``."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    sd = x.std()
    if sd <= 1e-12 * max(1.0, np.abs(x).max(initial=0.0)):
        return 0
    band = hysteresis * sd
    outside = np.abs(x) > band
    state = x[outside] > 0
    return int(np.count_nonzero(state[1:] != state[:-1]))


def zcr_rate(buf: SignalBuffer, frame_len: float, hysteresis: float = 0.1,
             hop: Optional[float] = None) -> SignalBuffer:
    """Crossings per second in consecutive frames; output is at ``1/hop``."""
    if frame_len <= 0:
        raise ConfigurationError("frame_len must be positive")
    hop = frame_len if hop is None else hop
    n_frame = int(round(frame_len * buf.sample_rate))
    n_hop = int(round(hop * buf.sample_rate))
    if n_frame < 2 or n_hop < 1:
        raise ConfigurationError("frame is shorter than two samples")
    starts = range(0, len(buf.samples) - n_frame + 1, n_hop)
    actual_len = n_frame / buf.sample_rate
    rates = [count_crossings(buf.samples[s:s + n_frame], hysteresis) / actual_len
             for s in starts]
    return SignalBuffer(np.array(rates, dtype=float), buf.sample_rate / n_hop)


def _hold(values: np.ndarray, frame_end_times: np.ndarray, grid: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(frame_end_times, grid + 1e-9, side="right") - 1
    return values[np.clip(idx, 0, len(values) - 1)]


def extract_features(buf: SignalBuffer, cfg: FeatureConfig = FeatureConfig(),
                     scaler: Optional["FeatureScaler"] = None) -> FeatureSequence:
    """ZCR-of-RMS and ZCR-of-ZCR features sampled at ``cfg.feature_rate``.

    Each output frame holds the latest completed analysis frame (the first
    one before any has completed). Values are crossings per second unless a
    ``scaler`` is given.
    """
    if buf.duration < cfg.envelope_frame:
        raise ValueError("buffer is shorter than one feature frame")
    env = rms_envelope(buf, cfg.tau_rms)
    x0 = zcr_rate(env, cfg.envelope_frame, cfg.hysteresis, cfg.envelope_hop)
    raw = zcr_rate(buf, cfg.raw_frame, cfg.hysteresis)
    x1 = zcr_rate(raw, cfg.envelope_frame, cfg.hysteresis, cfg.envelope_hop)

    n_out = int(np.floor(buf.duration * cfg.feature_rate + 1e-9))
    grid = (np.arange(n_out) + 1) / cfg.feature_rate
    ends0 = cfg.envelope_frame + np.arange(len(x0.samples)) * cfg.envelope_hop
    ends1 = cfg.raw_frame + cfg.envelope_frame + np.arange(len(x1.samples)) * cfg.envelope_hop
    x1_vals = x1.samples if len(x1.samples) else np.zeros(1)
    ends1 = ends1 if len(x1.samples) else np.zeros(1)
    values = np.column_stack([_hold(x0.samples, ends0, grid), _hold(x1_vals, ends1, grid)])
    if scaler is not None:
        values = scaler.transform(values)
    return FeatureSequence(values=values, rate=cfg.feature_rate)


@dataclass
class FeatureScaler:
    """Affine map of the 5th..95th training percentiles onto ``[0, 1]``, clipped."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, frames, lower: float = 5.0, upper: float = 95.0) -> "FeatureScaler":
        frames = np.asarray(frames, dtype=float).reshape(-1, np.shape(frames)[-1])
        lo = np.percentile(frames, lower, axis=0)
        hi = np.percentile(frames, upper, axis=0)
        hi = np.where(hi - lo > 1e-12, hi, lo + 1.0)
        return cls(lo=lo, hi=hi)

    def transform(self, values) -> np.ndarray:
        return np.clip((np.asarray(values, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def as_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScaler":
        return cls(lo=np.asarray(d["lo"], dtype=float), hi=np.asarray(d["hi"], dtype=float))


def scale_windows(windows: Sequence[WindowSample], scaler: FeatureScaler) -> list[WindowSample]:
    return [WindowSample(frames=scaler.transform(w.frames), label=w.label, t0=w.t0,
                         frame_rate=w.frame_rate, kind=w.kind) for w in windows]


def windowize(features: FeatureSequence, manifest: Sequence[Segment],
              window_s: float = 24.0) -> list[WindowSample]:
    """Cut non-overlapping windows on a global grid; drop boundary-straddling ones."""
    per_window = int(round(window_s * features.rate))
    n_windows = len(features.values) // per_window
    windows = []
    for k in range(n_windows):
        start = features.t0 + k * window_s
        end = start + window_s
        seg = next((s for s in manifest
                    if s.start <= start + 1e-9 and end <= s.end + 1e-9), None)
        if seg is None:
            continue
        frames = features.values[k * per_window:(k + 1) * per_window]
        windows.append(WindowSample(frames=frames.copy(), label=seg.label, t0=start,
                                    frame_rate=features.rate, kind=seg.kind))
    return windows
