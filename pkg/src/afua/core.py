"""Dimensionless AFUA cell mathematics.

All functions accept a single sample (``x`` of shape ``(n,)``, ``h`` of shape
``(m,)``) or a batch with arbitrary leading dimensions (``(..., n)`` and
``(..., m)``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

TENSOR_NAMES = ("W", "Wz", "U", "Uz", "b", "bz")


class DimensionError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass
class ModelParams:
    """Weights of one AFUA layer with ``m`` units and ``n`` inputs.

    ``W``/``Wz`` are ``(m, n)``, ``U``/``Uz`` are ``(m, m)``, ``b``/``bz``
    are ``(m,)``. The ``z``-suffixed tensors drive the update gate, the
    others the candidate state.
    """

    W: np.ndarray
    Wz: np.ndarray
    U: np.ndarray
    Uz: np.ndarray
    b: np.ndarray
    bz: np.ndarray

    def __post_init__(self):
        for name in TENSOR_NAMES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        m, n = self.W.shape
        expected = {"W": (m, n), "Wz": (m, n), "U": (m, m), "Uz": (m, m),
                    "b": (m,), "bz": (m,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if not all(np.all(np.isfinite(t)) for t in self.tensors()):
            raise ValueError("parameters must be finite")

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def n(self) -> int:
        return self.W.shape[1]

    def tensors(self) -> list[np.ndarray]:
        return [getattr(self, k) for k in TENSOR_NAMES]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in TENSOR_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.as_dict().items()})

    @classmethod
    def zeros(cls, m: int = 2, n: int = 2) -> "ModelParams":
        return cls(W=np.zeros((m, n)), Wz=np.zeros((m, n)), U=np.zeros((m, m)),
                   Uz=np.zeros((m, m)), b=np.zeros(m), bz=np.zeros(m))


@dataclass(frozen=True)
class IntegratorConfig:
    tau: float
    dt: Optional[float] = None  # defaults to tau / 100
    method: str = "rk4"

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigurationError("tau must be positive")
        if self.dt is None:
            object.__setattr__(self, "dt", self.tau / 100)
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        # small slack so that dt = tau/20 computed in floating point is accepted
        if self.dt > self.tau / 20 * (1 + 1e-12):
            raise ConfigurationError(
                f"dt={self.dt:g} exceeds tau/20={self.tau / 20:g}; refusing to integrate")
        if self.method not in ("forward-euler", "rk4"):
            raise ConfigurationError(f"unknown integration method {self.method!r}")


# beyond this magnitude f(y) == 1.0 and f'(y) == 0.0 in double precision
_SATURATION = 1e50


def activation(y):
    """Rectified saturating nonlinearity ``max(y,0)^2 / (1 + max(y,0)^2)``."""
    r = np.minimum(np.maximum(y, 0.0), _SATURATION)
    s = r * r
    return s / (1.0 + s)


def activation_grad(y):
    """Derivative of :func:`activation`; zero on ``y <= 0``."""
    r = np.minimum(np.maximum(y, 0.0), _SATURATION)
    d = 1.0 + r * r
    return 2.0 * r / (d * d)


def _check_shapes(params: ModelParams, x: np.ndarray, h: np.ndarray):
    if x.shape[-1:] != (params.n,):
        raise DimensionError(f"input has trailing size {x.shape[-1:]}, expected {params.n}")
    if h.shape[-1:] != (params.m,):
        raise DimensionError(f"state has trailing size {h.shape[-1:]}, expected {params.m}")


def preactivations(params: ModelParams, x, h):
    """Return the update-gate and candidate pre-activations ``(a_z, a_h)``."""
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    _check_shapes(params, x, h)
    hc = h - 1.0
    a_z = x @ params.Wz.T + hc @ params.Uz.T + params.bz
    a_h = x @ params.W.T + hc @ params.U.T + params.b
    return a_z, a_h


def gates(params: ModelParams, x, h):
    """Update gate ``z`` and candidate state ``h_cand``, both in ``[0, 1)``."""
    a_z, a_h = preactivations(params, x, h)
    return np.asarray(activation(a_z)), np.asarray(activation(a_h))


def update(h, z, h_cand):
    """Forward-Euler step of the adaptive filter with ``tau`` equal to the step."""
    return (1.0 - z) * h + 2.0 * z * h_cand


def step_discrete(params: ModelParams, x, h):
    z, h_cand = gates(params, x, h)
    return update(np.asarray(h, dtype=float), z, h_cand)


def initial_state(m: int, batch_shape: tuple = ()) -> np.ndarray:
    # translated origin
    return np.ones(batch_shape + (m,))


def run_discrete(params: ModelParams, frames, h0=None, return_trajectory=False):
    """Iterate :func:`step_discrete` over ``frames`` of shape ``(..., T, n)``.

    Returns the final state ``(..., m)``, or the trajectory ``(..., T, m)``
    of post-step states when ``return_trajectory`` is set.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim < 2 or frames.shape[-2] == 0:
        raise DimensionError("need at least one frame")
    h = initial_state(params.m, frames.shape[:-2]) if h0 is None else np.array(h0, dtype=float)
    traj = []
    for t in range(frames.shape[-2]):
        h = step_discrete(params, frames[..., t, :], h)
        if return_trajectory:
            traj.append(h)
    if return_trajectory:
        return np.stack(traj, axis=-2)
    return h


def _derivative(params, x, h, tau):
    z, h_cand = gates(params, x, h)
    return z / tau * (2.0 * h_cand - h)


def integrate_continuous(params: ModelParams, frames, frame_period: float,
                         cfg: IntegratorConfig, h0=None, duration: Optional[float] = None):
    """Integrate ``dh/dt = (z/tau)(2 h_cand - h)`` with zero-order-held inputs.

    ``frames`` holds the input sampled at ``1/frame_period``; each frame is
    held constant for one period. The state is returned at the end of every
    frame, shape ``(..., T, m)``. ``duration`` truncates the input (it must
    be a whole number of frames).
    """
    frames = np.asarray(frames, dtype=float)
    if frame_period <= 0:
        raise ConfigurationError("frame_period must be positive")
    n_frames = frames.shape[-2]
    if duration is not None:
        n_frames = int(round(duration / frame_period))
        if n_frames > frames.shape[-2]:
            raise ValueError("input does not cover the requested duration")
    n_sub = max(1, int(np.ceil(frame_period / cfg.dt - 1e-9)))
    dt = frame_period / n_sub
    tau = cfg.tau
    h = initial_state(params.m, frames.shape[:-2]) if h0 is None else np.array(h0, dtype=float)
    out = []
    for t in range(n_frames):
        x = frames[..., t, :]
        for _ in range(n_sub):
            if cfg.method == "forward-euler":
                h = h + dt * _derivative(params, x, h, tau)
            else:
                k1 = _derivative(params, x, h, tau)
                k2 = _derivative(params, x, h + 0.5 * dt * k1, tau)
                k3 = _derivative(params, x, h + 0.5 * dt * k2, tau)
                k4 = _derivative(params, x, h + dt * k3, tau)
                h = h + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(h)
    return np.stack(out, axis=-2)


# ---------------------------------------------------------------------------
# Reference GRU (test oracle for the update-gate inversion argument)
# ---------------------------------------------------------------------------


@dataclass
class GruParams:
    Wr: np.ndarray
    Wz: np.ndarray
    W: np.ndarray
    Ur: np.ndarray
    Uz: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        for k in ("Wr", "Wz", "W", "Ur", "Uz", "U"):
            setattr(self, k, np.asarray(getattr(self, k), dtype=float))
        m, n = self.W.shape
        for k in ("Wr", "Wz"):
            if getattr(self, k).shape != (m, n):
                raise DimensionError(f"{k} must be {(m, n)}")
        for k in ("Ur", "Uz", "U"):
            if getattr(self, k).shape != (m, m):
                raise DimensionError(f"{k} must be {(m, m)}")

    def with_inverted_update(self) -> "GruParams":
        return GruParams(Wr=self.Wr, Wz=-self.Wz, W=self.W, Ur=self.Ur, Uz=-self.Uz, U=self.U)


def sigmoid(y):
    """Logistic function with ``sigmoid(-y) == 1 - sigmoid(y)`` bit-for-bit."""
    y = np.asarray(y, dtype=float)
    s = 1.0 / (1.0 + np.exp(-np.abs(y)))
    return np.where(y >= 0, s, 1.0 - s)


def gru_reference(params: GruParams, x_sequence, h0, inverted_update: bool = False):
    """Classical GRU forward pass; returns the final hidden state.

    With ``inverted_update`` the update gate's logic is flipped: the
    retained fraction of the old state is ``1 - z`` instead of ``z``.
    """
    x_sequence = np.asarray(x_sequence, dtype=float)
    h = np.array(h0, dtype=float)
    if x_sequence.shape[-1] != params.W.shape[1] or h.shape[-1] != params.W.shape[0]:
        raise DimensionError("sequence or state does not match GRU parameters")
    for x in x_sequence:
        r = sigmoid(params.Wr @ x + params.Ur @ h)
        z = sigmoid(params.Wz @ x + params.Uz @ h)
        h_cand = np.tanh(params.W @ x + params.U @ (r * h))
        keep = 1.0 - z if inverted_update else z
        h = keep * h + (1.0 - keep) * h_cand
    return h
