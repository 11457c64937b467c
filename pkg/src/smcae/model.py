"""Two-channel stacked autoencoder with a shared encoder and split decoders.

The left channel reconstructs real-domain targets from source (synthetic)
inputs while the right channel reconstructs real data from itself; both share
encoder parameters. A balance term ``gamma * 0.5 * (J_L - J_R)**2`` penalizes
unequal channel errors. Layers are trained greedily on the previous layer's
encodings, optionally followed by a fine-tuning pass over the unrolled stack,
where only the output decoder layer stays split between channels and inner
decoder layers are shared (initialized from the right channel's greedy
decoders).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .channel import ChannelParams, SparsityConfig, channel_value_grad, sigmoid
from .optim import LbfgsOptions, MinimizeResult, minimize

MODEL_FORMAT = "smcae-model-v1"


class Variant(str, Enum):
    SMCAE = "smcae"
    SMCAE_II = "smcae-ii"
    SAE_I = "sae-i"
    SAE_II = "sae-ii"

    @property
    def two_channel(self):
        return self in (Variant.SMCAE, Variant.SMCAE_II)


@dataclass(frozen=True)
class SmcaeLayer:
    """Shared encoder plus left/right decoder parameters of one layer."""

    W_e: np.ndarray
    b_e: np.ndarray
    W_d_L: np.ndarray
    b_d_L: np.ndarray
    W_d_R: np.ndarray
    b_d_R: np.ndarray

    def __post_init__(self):
        k, m = self.W_e.shape
        if self.W_d_L.shape != self.W_d_R.shape:
            raise ValueError(
                f"left decoder {self.W_d_L.shape} and right decoder {self.W_d_R.shape} differ")
        if self.W_d_L.shape != (m, k):
            raise ValueError(
                f"decoder shape {self.W_d_L.shape} inconsistent with encoder {(k, m)}")
        if self.b_e.shape != (k,) or self.b_d_L.shape != (m,) or self.b_d_R.shape != (m,):
            raise ValueError("bias shapes inconsistent with weight matrices")

    @property
    def k(self):
        return self.W_e.shape[0]

    @property
    def m(self):
        return self.W_e.shape[1]

    def left(self) -> ChannelParams:
        return ChannelParams(self.W_e, self.b_e, self.W_d_L, self.b_d_L)

    def right(self) -> ChannelParams:
        return ChannelParams(self.W_e, self.b_e, self.W_d_R, self.b_d_R)


@dataclass(frozen=True)
class SmcaeConfig:
    layer_sizes: tuple = (1000, 1000)
    sparsity: SparsityConfig = field(default_factory=SparsityConfig)
    gamma: float = 50.0
    max_iterations: int = 400
    tolerance: float = 1e-7
    memory: int = 10
    fine_tune: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(k) for k in self.layer_sizes))
        if len(self.layer_sizes) == 0 or any(k < 1 for k in self.layer_sizes):
            raise ValueError("layer_sizes must be a nonempty list of positive widths")
        if self.gamma < 0.0:
            raise ValueError("gamma must be nonnegative")

    def lbfgs_options(self) -> LbfgsOptions:
        return LbfgsOptions(memory=self.memory, max_iterations=self.max_iterations,
                            tolerance=self.tolerance)


@dataclass
class SmcaeModel:
    """An ordered stack of trained layers plus the settings that produced it.

    ``training_log`` holds one ``(stage, entries)`` item per optimization pass,
    each entry being ``(iteration, E, J_L, J_R)``; single-channel variants log
    NaN for the absent channel.
    """

    layers: list
    config: SmcaeConfig
    variant: Variant
    training_log: list = field(default_factory=list)

    def __post_init__(self):
        for lo, hi in zip(self.layers, self.layers[1:]):
            if hi.m != lo.k:
                raise ValueError(
                    f"layer widths not chained: {lo.k} units feed a layer expecting {hi.m}")

    @property
    def input_dim(self):
        return self.layers[0].m

    def total_iterations(self) -> int:
        return sum(max(len(entries) - 1, 0) for _, entries in self.training_log)

    def transform(self, X) -> np.ndarray:
        return transform(self, X)


# --------------------------------------------------------------------------
# objective and gradient


@dataclass(frozen=True)
class SmcaeGradient:
    W_e: np.ndarray
    b_e: np.ndarray
    W_d_L: np.ndarray
    b_d_L: np.ndarray
    W_d_R: np.ndarray
    b_d_R: np.ndarray


def _two_channel_value_grad(layer, left_in, left_tgt, right_in, right_tgt, s, gamma):
    """Joint objective E = J_L + J_R + gamma/2 (J_L - J_R)^2 with its exact
    gradient: the balance term scales the left blocks by (1 + gamma*(J_L-J_R))
    and the right blocks by (1 - gamma*(J_L-J_R))."""
    J_L, gL = channel_value_grad(layer.left(), left_in, left_tgt, s)
    J_R, gR = channel_value_grad(layer.right(), right_in, right_tgt, s)
    delta = J_L - J_R
    E = J_L + J_R + 0.5 * gamma * delta * delta
    cL = 1.0 + gamma * delta
    cR = 1.0 - gamma * delta
    grad = SmcaeGradient(
        W_e=cL * gL.W_e + cR * gR.W_e,
        b_e=cL * gL.b_e + cR * gR.b_e,
        W_d_L=cL * gL.W_d,
        b_d_L=cL * gL.b_d,
        W_d_R=cR * gR.W_d,
        b_d_R=cR * gR.b_d,
    )
    return E, J_L, J_R, grad


def _check_paired(X_s, X_r):
    X_s = np.asarray(X_s, dtype=float)
    X_r = np.asarray(X_r, dtype=float)
    if X_s.shape[0] != X_r.shape[0]:
        raise ValueError(
            f"channels need paired instances: got {X_s.shape[0]} source rows "
            f"and {X_r.shape[0]} real rows")
    return X_s, X_r


def smcae_objective(layer: SmcaeLayer, X_s, X_r, s: SparsityConfig, gamma: float):
    """Evaluate (E, J_L, J_R) for the source-to-real / real-to-real pairing."""
    X_s, X_r = _check_paired(X_s, X_r)
    E, J_L, J_R, _ = _two_channel_value_grad(layer, X_s, X_r, X_r, X_r, s, gamma)
    return E, J_L, J_R


def smcae_gradient(layer: SmcaeLayer, X_s, X_r, s: SparsityConfig, gamma: float) -> SmcaeGradient:
    """Analytic gradient of the joint objective for all six parameter blocks."""
    X_s, X_r = _check_paired(X_s, X_r)
    _, _, _, grad = _two_channel_value_grad(layer, X_s, X_r, X_r, X_r, s, gamma)
    return grad


# --------------------------------------------------------------------------
# flat parameter vector layout
#
# Per layer, in order: W_e (row-major), b_e, W_d_L, b_d_L, W_d_R, b_d_R.
# Training a single channel uses the reduced layout W_e, b_e, W_d, b_d.


def layer_pack_slices(m: int, k: int) -> dict:
    """Block name -> slice into the packed single-layer parameter vector."""
    sizes = [("W_e", k * m), ("b_e", k), ("W_d_L", m * k), ("b_d_L", m),
             ("W_d_R", m * k), ("b_d_R", m)]
    out = {}
    at = 0
    for name, size in sizes:
        out[name] = slice(at, at + size)
        at += size
    return out


def pack_layer(layer: SmcaeLayer) -> np.ndarray:
    return np.concatenate([layer.W_e.ravel(), layer.b_e,
                           layer.W_d_L.ravel(), layer.b_d_L,
                           layer.W_d_R.ravel(), layer.b_d_R])


def unpack_layer(v, m: int, k: int) -> SmcaeLayer:
    s = layer_pack_slices(m, k)
    return SmcaeLayer(
        W_e=v[s["W_e"]].reshape(k, m), b_e=v[s["b_e"]],
        W_d_L=v[s["W_d_L"]].reshape(m, k), b_d_L=v[s["b_d_L"]],
        W_d_R=v[s["W_d_R"]].reshape(m, k), b_d_R=v[s["b_d_R"]])


def _pack_channel(p: ChannelParams) -> np.ndarray:
    return np.concatenate([p.W_e.ravel(), p.b_e, p.W_d.ravel(), p.b_d])


def _unpack_channel(v, m, k) -> ChannelParams:
    i = k * m
    W_e = v[:i].reshape(k, m)
    b_e = v[i:i + k]
    i += k
    W_d = v[i:i + m * k].reshape(m, k)
    i += m * k
    return ChannelParams(W_e=W_e, b_e=b_e, W_d=W_d, b_d=v[i:i + m])


def init_layer(m: int, k: int, rng) -> SmcaeLayer:
    """Uniform(-r, r) weights with r = sqrt(6 / (fan_in + fan_out)), zero
    biases. Draw order: W_e, W_d_L, W_d_R."""
    r = np.sqrt(6.0 / (m + k))
    return SmcaeLayer(
        W_e=rng.uniform(-r, r, (k, m)), b_e=np.zeros(k),
        W_d_L=rng.uniform(-r, r, (m, k)), b_d_L=np.zeros(m),
        W_d_R=rng.uniform(-r, r, (m, k)), b_d_R=np.zeros(m))


# --------------------------------------------------------------------------
# variants


def build_variant(variant: Variant, X_s, X_r) -> list:
    """Per-channel (input, target) bindings for a variant.

    Two-channel variants return two bindings; the pooled single-channel
    variant stacks the source-to-real and real-to-real tasks into one channel
    with 2n rows."""
    variant = Variant(variant)
    X_s, X_r = _check_paired(X_s, X_r)
    if variant is Variant.SMCAE:
        return [(X_s, X_r), (X_r, X_r)]
    if variant is Variant.SMCAE_II:
        return [(X_s, X_s), (X_r, X_r)]
    if variant is Variant.SAE_I:
        return [(np.vstack([X_s, X_r]), np.vstack([X_r, X_r]))]
    return [(X_s, X_r)]


# --------------------------------------------------------------------------
# training


def _log_from_trace(result: MinimizeResult) -> list:
    entries = []
    for it, value, aux in result.trace:
        jl, jr = aux if aux is not None else (float("nan"), float("nan"))
        entries.append((it, value, jl, jr))
    return entries


def _train_two_channel_layer(left_in, left_tgt, right_in, right_tgt, k, s, gamma, opts, rng):
    m = left_in.shape[1]
    layer0 = init_layer(m, k, rng)

    def fg(v):
        # Saturated trial points legitimately evaluate to inf/nan; the line
        # search backs off, so keep the arithmetic quiet.
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            layer = unpack_layer(v, m, k)
            E, J_L, J_R, grad = _two_channel_value_grad(
                layer, left_in, left_tgt, right_in, right_tgt, s, gamma)
            flat = np.concatenate([grad.W_e.ravel(), grad.b_e, grad.W_d_L.ravel(),
                                   grad.b_d_L, grad.W_d_R.ravel(), grad.b_d_R])
        return E, flat, (J_L, J_R)

    result = minimize(fg, pack_layer(layer0), opts)
    return unpack_layer(result.x, m, k), _log_from_trace(result)


def _train_single_channel_layer(X_in, X_tgt, k, s, opts, rng):
    m = X_in.shape[1]
    r = np.sqrt(6.0 / (m + k))
    p0 = ChannelParams(W_e=rng.uniform(-r, r, (k, m)), b_e=np.zeros(k),
                       W_d=rng.uniform(-r, r, (m, k)), b_d=np.zeros(m))

    def fg(v):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            p = _unpack_channel(v, m, k)
            J, grad = channel_value_grad(p, X_in, X_tgt, s)
            flat = np.concatenate([grad.W_e.ravel(), grad.b_e,
                                   grad.W_d.ravel(), grad.b_d])
        return J, flat, (J, float("nan"))

    result = minimize(fg, _pack_channel(p0), opts)
    p = _unpack_channel(result.x, m, k)
    layer = SmcaeLayer(W_e=p.W_e, b_e=p.b_e,
                       W_d_L=p.W_d, b_d_L=p.b_d,
                       W_d_R=p.W_d.copy(), b_d_R=p.b_d.copy())
    return layer, _log_from_trace(result)


def train_layer(X_s, X_r, k: int, s: SparsityConfig, gamma: float,
                options: LbfgsOptions | None = None, seed: int = 0):
    """Train one two-channel layer on paired (source, real) data.

    Returns ``(SmcaeLayer, log)`` where the log lists ``(iteration, E, J_L,
    J_R)`` per accepted optimizer step, starting at the initial point.
    """
    X_s, X_r = _check_paired(X_s, X_r)
    rng = np.random.default_rng(seed)
    return _train_two_channel_layer(X_s, X_r, X_r, X_r, k, s, gamma,
                                    options or LbfgsOptions(), rng)


def train_stack(X_s, X_r, config: SmcaeConfig, variant=Variant.SMCAE) -> SmcaeModel:
    """Greedy layerwise training followed by optional whole-stack fine-tuning.

    Each subsequent layer trains on the previous layer's encodings of every
    channel stream, so the source-to-real pairing is preserved at depth.
    """
    variant = Variant(variant)
    bindings = build_variant(variant, X_s, X_r)
    streams = [(np.asarray(a, dtype=float), np.asarray(b, dtype=float)) for a, b in bindings]

    layers = []
    log = []
    opts = config.lbfgs_options()
    for j, k in enumerate(config.layer_sizes):
        rng = np.random.default_rng([config.rng_seed, j])
        if variant.two_channel:
            (l_in, l_tgt), (r_in, r_tgt) = streams
            layer, entries = _train_two_channel_layer(
                l_in, l_tgt, r_in, r_tgt, k, config.sparsity, config.gamma, opts, rng)
        else:
            (c_in, c_tgt), = streams
            layer, entries = _train_single_channel_layer(
                c_in, c_tgt, k, config.sparsity, opts, rng)
        layers.append(layer)
        log.append((f"layer{j + 1}", entries))
        streams = [(_encode_layer(layer, a), _encode_layer(layer, b)) for a, b in streams]

    model = SmcaeModel(layers=layers, config=config, variant=variant, training_log=log)
    if config.fine_tune:
        model = fine_tune(model, X_s, X_r)
    return model


def _encode_layer(layer, X):
    return sigmoid(X @ layer.W_e.T + layer.b_e)


# --------------------------------------------------------------------------
# unrolled stack: fine-tuning and the transform


def _unrolled_value_grad(encs, decs, X, T, s):
    """Objective and gradient of the unrolled encoder/decoder chain.

    ``encs`` is a list of (W_e, b_e) for layers 1..J; ``decs`` the decoders in
    the same layer order (applied in reverse on the way down). The KL penalty
    applies to every encoder representation; weight decay covers every matrix
    in the chain.
    """
    n = X.shape[0]
    acts = [X]
    for W, b in encs:
        acts.append(sigmoid(acts[-1] @ W.T + b))

    downs = [acts[-1]]  # decoder chain outputs, deepest first
    for W, b in reversed(decs):
        downs.append(sigmoid(downs[-1] @ W.T + b))
    out = downs[-1]

    R = out - T
    J = float(np.sum(R * R)) / n

    if s.weight_decay > 0.0:
        J += s.weight_decay * 0.5 * (sum(float(np.sum(W ** 2)) for W, _ in encs)
                                     + sum(float(np.sum(W ** 2)) for W, _ in decs))
    kl_terms = []
    if s.rho > 0.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            for A in acts[1:]:
                rates = A.mean(axis=0)
                J += s.rho * float(np.sum(
                    s.delta * np.log(s.delta / rates)
                    + (1.0 - s.delta) * np.log((1.0 - s.delta) / (1.0 - rates))))
                kl_terms.append((s.rho / n) * (-s.delta / rates
                                               + (1.0 - s.delta) / (1.0 - rates)))

    g_enc = [None] * len(encs)
    g_dec = [None] * len(decs)

    d = (2.0 / n) * R
    # Up through the decoders: downs[i+1] = sigmoid(downs[i] @ W.T + b) for
    # decs reversed; walk back from the output.
    for idx in range(len(decs)):
        j = idx  # decoder index in original layer order, 1-based j+1
        Y = downs[len(decs) - idx]
        dz = d * Y * (1.0 - Y)
        W, _ = decs[j]
        g_dec[j] = (dz.T @ downs[len(decs) - idx - 1], dz.sum(axis=0))
        d = dz @ W

    # Down through the encoders.
    for j in range(len(encs) - 1, -1, -1):
        A = acts[j + 1]
        if kl_terms:
            d = d + kl_terms[j]
        dz = d * A * (1.0 - A)
        W, _ = encs[j]
        g_enc[j] = (dz.T @ acts[j], dz.sum(axis=0))
        d = dz @ W

    if s.weight_decay > 0.0:
        g_enc = [(gW + s.weight_decay * W, gb) for (gW, gb), (W, _) in zip(g_enc, encs)]
        g_dec = [(gW + s.weight_decay * W, gb) for (gW, gb), (W, _) in zip(g_dec, decs)]
    return J, g_enc, g_dec


def _unrolled_decoders(model, side: str):
    """Decoder chain for one channel: the output layer is channel-specific,
    inner layers use the shared (right-channel) decoders."""
    decs = []
    for j, layer in enumerate(model.layers):
        if j == 0:
            if side == "L":
                decs.append((layer.W_d_L, layer.b_d_L))
            else:
                decs.append((layer.W_d_R, layer.b_d_R))
        else:
            decs.append((layer.W_d_R, layer.b_d_R))
    return decs


def _finetune_pack(model):
    """Fine-tune vector: all encoders, the shared inner decoders, and both
    output-layer decoders. Inner left decoders are greedy scaffolding and stay
    out of the unrolled objective."""
    parts = []
    for j, layer in enumerate(model.layers):
        parts.extend([layer.W_e.ravel(), layer.b_e])
        if j == 0:
            parts.extend([layer.W_d_L.ravel(), layer.b_d_L])
        parts.extend([layer.W_d_R.ravel(), layer.b_d_R])
    return np.concatenate(parts)


def _finetune_unpack(model, v):
    layers = []
    at = 0

    def take(shape):
        nonlocal at
        size = int(np.prod(shape))
        block = v[at:at + size].reshape(shape)
        at += size
        return block

    for j, layer in enumerate(model.layers):
        k, m = layer.W_e.shape
        W_e = take((k, m))
        b_e = take((k,))
        if j == 0:
            W_d_L = take((m, k))
            b_d_L = take((m,))
        W_d_R = take((m, k))
        b_d_R = take((m,))
        if j != 0:
            W_d_L, b_d_L = layer.W_d_L, layer.b_d_L
        layers.append(SmcaeLayer(W_e=W_e, b_e=b_e, W_d_L=W_d_L, b_d_L=b_d_L,
                                 W_d_R=W_d_R, b_d_R=b_d_R))
    return replace(model, layers=layers)


def unrolled_objective(model: SmcaeModel, X_s, X_r):
    """(E, J_L, J_R) of the full unrolled stack under the model's variant
    bindings; single-channel variants report (J, J, nan)."""
    bindings = build_variant(model.variant, X_s, X_r)
    encs = [(layer.W_e, layer.b_e) for layer in model.layers]
    s = model.config.sparsity
    if model.variant.two_channel:
        (l_in, l_tgt), (r_in, r_tgt) = bindings
        J_L, _, _ = _unrolled_value_grad(encs, _unrolled_decoders(model, "L"), l_in, l_tgt, s)
        J_R, _, _ = _unrolled_value_grad(encs, _unrolled_decoders(model, "R"), r_in, r_tgt, s)
        delta = J_L - J_R
        return J_L + J_R + 0.5 * model.config.gamma * delta * delta, J_L, J_R
    (c_in, c_tgt), = bindings
    J, _, _ = _unrolled_value_grad(encs, _unrolled_decoders(model, "L"), c_in, c_tgt, s)
    return J, J, float("nan")


def fine_tune(model: SmcaeModel, X_s, X_r) -> SmcaeModel:
    """Jointly optimize the unrolled two-channel objective over all shared and
    output parameters, starting from the greedy solution."""
    X_s, X_r = _check_paired(X_s, X_r)
    bindings = build_variant(model.variant, X_s, X_r)
    s = model.config.sparsity
    gamma = model.config.gamma
    two = model.variant.two_channel

    def fg(v):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return _fg_inner(v)

    def _fg_inner(v):
        cur = _finetune_unpack(model, v)
        encs = [(layer.W_e, layer.b_e) for layer in cur.layers]
        if two:
            (l_in, l_tgt), (r_in, r_tgt) = bindings
            J_L, geL, gdL = _unrolled_value_grad(encs, _unrolled_decoders(cur, "L"),
                                                 l_in, l_tgt, s)
            J_R, geR, gdR = _unrolled_value_grad(encs, _unrolled_decoders(cur, "R"),
                                                 r_in, r_tgt, s)
            delta = J_L - J_R
            E = J_L + J_R + 0.5 * gamma * delta * delta
            cL = 1.0 + gamma * delta
            cR = 1.0 - gamma * delta
            parts = []
            for j in range(len(cur.layers)):
                parts.append((cL * geL[j][0] + cR * geR[j][0]).ravel())
                parts.append(cL * geL[j][1] + cR * geR[j][1])
                if j == 0:
                    parts.append((cL * gdL[j][0]).ravel())
                    parts.append(cL * gdL[j][1])
                    parts.append((cR * gdR[j][0]).ravel())
                    parts.append(cR * gdR[j][1])
                else:
                    parts.append((cL * gdL[j][0] + cR * gdR[j][0]).ravel())
                    parts.append(cL * gdL[j][1] + cR * gdR[j][1])
            return E, np.concatenate(parts), (J_L, J_R)
        (c_in, c_tgt), = bindings
        J, ge, gd = _unrolled_value_grad(encs, _unrolled_decoders(cur, "L"), c_in, c_tgt, s)
        parts = []
        for j in range(len(cur.layers)):
            parts.append(ge[j][0].ravel())
            parts.append(ge[j][1])
            parts.append(gd[j][0].ravel())
            parts.append(gd[j][1])
            if j == 0:
                # The mirrored right decoder of a single-channel model sits in
                # the vector but not in the objective.
                parts.append(np.zeros(gd[j][0].size))
                parts.append(np.zeros(gd[j][1].size))
        return J, np.concatenate(parts), (J, float("nan"))

    result = minimize(fg, _finetune_pack(model), model.config.lbfgs_options())
    tuned = _finetune_unpack(model, result.x)
    tuned.training_log = list(model.training_log) + [("fine-tune", _log_from_trace(result))]
    return tuned


def transform(model: SmcaeModel, X_new) -> np.ndarray:
    """Map new source features through the shared encoders, then decode with
    shared inner decoders and the left-channel output decoder."""
    if not model.layers:
        raise ValueError("model has no trained layers")
    X = np.asarray(X_new, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(
            f"expected (n, {model.input_dim}) inputs, got {X.shape}")
    A = X
    for layer in model.layers:
        A = _encode_layer(layer, A)
    for j in range(len(model.layers) - 1, 0, -1):
        layer = model.layers[j]
        A = sigmoid(A @ layer.W_d_R.T + layer.b_d_R)
    first = model.layers[0]
    return sigmoid(A @ first.W_d_L.T + first.b_d_L)


# --------------------------------------------------------------------------
# serialization


def save_model(model: SmcaeModel, path, extras: dict | None = None) -> None:
    """Write a self-describing .npz container; round-trips bit-exactly.

    ``extras`` may carry additional arrays (e.g. feature-scaler statistics)
    stored alongside the parameter blocks; loading ignores unknown keys.
    """
    cfg = model.config
    meta = {
        "format": MODEL_FORMAT,
        "variant": model.variant.value,
        "n_layers": len(model.layers),
        "config": {
            "layer_sizes": list(cfg.layer_sizes),
            "delta": cfg.sparsity.delta,
            "rho": cfg.sparsity.rho,
            "weight_decay": cfg.sparsity.weight_decay,
            "gamma": cfg.gamma,
            "max_iterations": cfg.max_iterations,
            "tolerance": cfg.tolerance,
            "memory": cfg.memory,
            "fine_tune": cfg.fine_tune,
            "rng_seed": cfg.rng_seed,
        },
        "training_log": [[stage, [list(e) for e in entries]]
                         for stage, entries in model.training_log],
    }
    arrays = {}
    for j, layer in enumerate(model.layers):
        for name in ("W_e", "b_e", "W_d_L", "b_d_L", "W_d_R", "b_d_R"):
            arrays[f"layer{j}_{name}"] = getattr(layer, name)
    if extras:
        arrays.update(extras)
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)


def load_model(path) -> SmcaeModel:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != MODEL_FORMAT:
            raise ValueError(f"unrecognized model container format: {meta.get('format')!r}")
        c = meta["config"]
        config = SmcaeConfig(
            layer_sizes=tuple(c["layer_sizes"]),
            sparsity=SparsityConfig(delta=c["delta"], rho=c["rho"],
                                    weight_decay=c["weight_decay"]),
            gamma=c["gamma"], max_iterations=c["max_iterations"],
            tolerance=c["tolerance"], memory=c["memory"],
            fine_tune=c["fine_tune"], rng_seed=c["rng_seed"])
        layers = []
        for j in range(meta["n_layers"]):
            layers.append(SmcaeLayer(**{name: data[f"layer{j}_{name}"]
                                        for name in ("W_e", "b_e", "W_d_L",
                                                     "b_d_L", "W_d_R", "b_d_R")}))
    log = [(stage, [tuple(e) for e in entries]) for stage, entries in meta["training_log"]]
    return SmcaeModel(layers=layers, config=config, variant=Variant(meta["variant"]),
                      training_log=log)


# --------------------------------------------------------------------------
# sklearn-style estimator


def _check_unit_range(X, name):
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError(
            f"{name} must lie in [0, 1] for sigmoid reconstruction; rescale features first "
            f"(got range [{X.min():.4g}, {X.max():.4g}])")


class SMCAE(BaseEstimator, TransformerMixin):
    """Stacked multichannel autoencoder that maps source features toward a
    paired real feature distribution.

    fit(X, Y) takes the source features X and the paired real features Y (one
    row per instance in both); transform(X) produces real-like features of the
    same dimensionality. Inputs must be scaled into [0, 1].

    Parameters mirror SmcaeConfig; ``variant`` selects the channel layout:
    "smcae" (source-to-real plus real-to-real), "smcae-ii" (two independent
    reconstruction channels), "sae-i" (both tasks pooled in one channel) or
    "sae-ii" (plain source-to-real channel).
    """

    def __init__(self, layer_sizes=(1000, 1000), variant="smcae", gamma=50.0,
                 delta=0.05, rho=0.1, weight_decay=1e-4, max_iterations=400,
                 tolerance=1e-7, memory=10, fine_tune=True, random_state=0):
        self.layer_sizes = layer_sizes
        self.variant = variant
        self.gamma = gamma
        self.delta = delta
        self.rho = rho
        self.weight_decay = weight_decay
        self.max_iterations = max_iterations
        self.tolerance = tolerance
        self.memory = memory
        self.fine_tune = fine_tune
        self.random_state = random_state

    def _config(self) -> SmcaeConfig:
        return SmcaeConfig(
            layer_sizes=tuple(self.layer_sizes),
            sparsity=SparsityConfig(delta=self.delta, rho=self.rho,
                                    weight_decay=self.weight_decay),
            gamma=self.gamma, max_iterations=self.max_iterations,
            tolerance=self.tolerance, memory=self.memory,
            fine_tune=self.fine_tune, rng_seed=self.random_state)

    def fit(self, X, Y):
        X = check_array(X, dtype=np.float64)
        Y = check_array(Y, dtype=np.float64)
        if X.shape != Y.shape:
            raise ValueError(f"paired feature matrices must share a shape; "
                             f"got {X.shape} and {Y.shape}")
        _check_unit_range(X, "X")
        _check_unit_range(Y, "Y")
        self.model_ = train_stack(X, Y, self._config(), Variant(self.variant))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        _check_unit_range(X, "X")
        return transform(self.model_, X)
