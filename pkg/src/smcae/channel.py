"""Single-channel sparse autoencoder: activations, objective, analytic gradient.

A channel maps inputs through a sigmoid encoder and a sigmoid decoder and is
scored by mean squared reconstruction error against a target matrix (which may
differ from the input), plus a weight-decay term and a KL firing-rate penalty
on the hidden units. All functions are pure; parameter structs are treated as
immutable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChannelParams:
    """Encoder/decoder weights of one channel: ``W_e (k,m)``, ``b_e (k,)``,
    ``W_d (m,k)``, ``b_d (m,)``."""

    W_e: np.ndarray
    b_e: np.ndarray
    W_d: np.ndarray
    b_d: np.ndarray

    def __post_init__(self):
        k, m = self.W_e.shape
        if self.W_d.shape != (m, k):
            raise ValueError(
                f"decoder shape {self.W_d.shape} inconsistent with encoder {self.W_e.shape}; "
                f"expected {(m, k)}")
        if self.b_e.shape != (k,):
            raise ValueError(f"encoder bias has shape {self.b_e.shape}, expected ({k},)")
        if self.b_d.shape != (m,):
            raise ValueError(f"decoder bias has shape {self.b_d.shape}, expected ({m},)")
        for name, a in (("W_e", self.W_e), ("b_e", self.b_e),
                        ("W_d", self.W_d), ("b_d", self.b_d)):
            if not np.isfinite(a).all():
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def k(self):
        return self.W_e.shape[0]

    @property
    def m(self):
        return self.W_e.shape[1]


@dataclass(frozen=True)
class SparsityConfig:
    """Hidden-unit target activation ``delta``, KL weight ``rho`` and weight
    decay strength."""

    delta: float = 0.05
    rho: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie strictly inside (0, 1), got {self.delta}")
        if self.rho < 0.0 or self.weight_decay < 0.0:
            raise ValueError("rho and weight_decay must be nonnegative")


@dataclass(frozen=True)
class ChannelGradient:
    """Gradient blocks mirroring ChannelParams."""

    W_e: np.ndarray
    b_e: np.ndarray
    W_d: np.ndarray
    b_d: np.ndarray


def sigmoid(z):
    """Numerically stable logistic function; accepts scalars or arrays."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return float(out) if out.ndim == 0 else out


def _check_matrix(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {X.shape}")
    return X


def encode(p: ChannelParams, X) -> np.ndarray:
    """Hidden activations, one row per instance."""
    X = _check_matrix(X, "X")
    if X.shape[1] != p.m:
        raise ValueError(f"input has {X.shape[1]} features but the encoder expects {p.m}")
    return sigmoid(X @ p.W_e.T + p.b_e)

def decode(p: ChannelParams, H) -> np.ndarray:
    """Reconstructions from hidden activations, one row per instance."""
    H = _check_matrix(H, "H")
    if H.shape[1] != p.k:
        raise ValueError(f"hidden input has {H.shape[1]} units but the decoder expects {p.k}")
    return sigmoid(H @ p.W_d.T + p.b_d)


def weight_decay(p: ChannelParams) -> float:
    """Half the summed squares of both weight matrices; biases excluded."""
    return 0.5 * (float(np.sum(p.W_e ** 2)) + float(np.sum(p.W_d ** 2)))


def mean_activations(H) -> np.ndarray:
    """Per-hidden-unit activation averaged over instances."""
    H = _check_matrix(H, "H")
    if H.shape[0] == 0:
        raise ValueError("cannot average activations of an empty matrix")
    return H.mean(axis=0)


def kl_sparsity(delta: float, delta_hat) -> float:
    """Summed KL divergence between Bernoulli(delta) and each unit's observed
    firing rate. Zero iff every rate equals delta."""
    delta_hat = np.asarray(delta_hat, dtype=float)
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie strictly inside (0, 1), got {delta}")
    if np.any(delta_hat <= 0.0) or np.any(delta_hat >= 1.0):
        raise ValueError("observed activation rates must lie strictly inside (0, 1)")
    return float(np.sum(delta * np.log(delta / delta_hat)
                        + (1.0 - delta) * np.log((1.0 - delta) / (1.0 - delta_hat))))


def channel_value_grad(p: ChannelParams, X_in, X_target, s: SparsityConfig):
    """Objective and its gradient in one forward/backward pass.

    The reconstruction target may differ from the input, which is how the
    source-to-real channel is trained. Saturated hidden units make the KL
    penalty (and hence the objective) infinite; callers relying on a line
    search recover by shrinking the step.
    """
    X_in = _check_matrix(X_in, "X_in")
    X_target = _check_matrix(X_target, "X_target")
    if X_in.shape[0] != X_target.shape[0]:
        raise ValueError(
            f"input has {X_in.shape[0]} instances but target has {X_target.shape[0]}")
    if X_target.shape[1] != p.m:
        raise ValueError(f"target has {X_target.shape[1]} features but the decoder emits {p.m}")
    n = X_in.shape[0]

    H = encode(p, X_in)
    Y = decode(p, H)
    R = Y - X_target
    J = float(np.sum(R * R)) / n

    d2 = (2.0 / n) * R * Y * (1.0 - Y)
    g_Wd = d2.T @ H
    g_bd = d2.sum(axis=0)
    dH = d2 @ p.W_d

    if s.rho > 0.0:
        rates = H.mean(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            J += s.rho * float(np.sum(s.delta * np.log(s.delta / rates)
                                      + (1.0 - s.delta) * np.log((1.0 - s.delta) / (1.0 - rates))))
            dH = dH + (s.rho / n) * (-s.delta / rates + (1.0 - s.delta) / (1.0 - rates))

    d1 = dH * H * (1.0 - H)
    g_We = d1.T @ X_in
    g_be = d1.sum(axis=0)

    if s.weight_decay > 0.0:
        J += s.weight_decay * weight_decay(p)
        g_We = g_We + s.weight_decay * p.W_e
        g_Wd = g_Wd + s.weight_decay * p.W_d

    return J, ChannelGradient(W_e=g_We, b_e=g_be, W_d=g_Wd, b_d=g_bd)


def channel_objective(p: ChannelParams, X_in, X_target, s: SparsityConfig) -> float:
    """Mean squared reconstruction error plus weight decay and KL penalties."""
    value, _ = channel_value_grad(p, X_in, X_target, s)
    return value


def channel_gradient(p: ChannelParams, X_in, X_target, s: SparsityConfig) -> ChannelGradient:
    """Analytic gradient of the channel objective for each parameter block."""
    _, grad = channel_value_grad(p, X_in, X_target, s)
    return grad
