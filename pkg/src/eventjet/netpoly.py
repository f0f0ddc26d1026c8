"""Dense feedforward networks evaluated over floats or Taylor polynomials.

The same weights drive both paths.  Float inputs are pushed through numpy
vectors; polynomial inputs are stacked into a ``(width, N)`` coefficient block
so each layer costs a handful of batched polynomial products.  The affine part
is accumulated column by column in both paths, so constant terms of a jet
evaluation reproduce the float evaluation bit for bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import polyalg as pa
from .errors import AlgebraError, DomainError, SchemaError
from .polyalg import TPoly

ACTIVATIONS = ("sin", "sigmoid", "linear", "tanh", "softplus")
WIRINGS = ("direction", "throttle_direction", "rotors", "none")

EPS_DIRECTION = 1e-6


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "linear"
    w0: float = 1.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    @property
    def n_params(self) -> int:
        rows, cols = self.weights.shape
        return rows * cols + rows


@dataclass(frozen=True)
class PolicyNet:
    """Immutable feedforward network with per-input affine feature scaling.

    Features are ``(x - input_shift) * input_scale``.  Hidden ``sin`` layers
    compute ``sin(w0 * (W x + b))``.
    """

    layers: tuple[Layer, ...]
    input_shift: np.ndarray
    input_scale: np.ndarray
    output_wiring: str = "none"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.layers:
            raise SchemaError("network needs at least one layer")
        for a, b in zip(self.layers[:-1], self.layers[1:]):
            if a.weights.shape[0] != b.weights.shape[1]:
                raise SchemaError(
                    f"layer dimensions do not chain: {a.weights.shape} -> {b.weights.shape}"
                )
        if self.input_shift.shape != (self.input_dim,) or self.input_scale.shape != (self.input_dim,):
            raise SchemaError("input_shift/input_scale must have input_dim entries")
        if self.output_wiring not in WIRINGS:
            raise SchemaError(f"unknown output wiring {self.output_wiring!r}")

    @property
    def input_dim(self) -> int:
        return int(self.layers[0].weights.shape[1])

    @property
    def output_dim(self) -> int:
        return int(self.layers[-1].weights.shape[0])

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def __call__(self, inputs):
        return eval_net(self, inputs)


# ---------------------------------------------------------------------------
# weight documents


def _finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise SchemaError(f"non-finite value in {what}")
    return arr


def load_policy(document) -> PolicyNet:
    """Build a :class:`PolicyNet` from a weight document (dict, JSON text or path)."""
    if isinstance(document, (str, Path)) and not str(document).lstrip().startswith("{"):
        document = json.loads(Path(document).read_text())
    elif isinstance(document, str):
        document = json.loads(document)
    try:
        raw_layers = document["layers"]
        if not raw_layers:
            raise SchemaError("empty layer list")
        layers = []
        for i, lay in enumerate(raw_layers):
            rows, cols = int(lay["rows"]), int(lay["cols"])
            w = np.asarray(lay["weights"], dtype=float)
            b = np.asarray(lay["bias"], dtype=float)
            if w.size != rows * cols or b.shape != (rows,):
                raise SchemaError(f"layer {i}: weights/bias do not match {rows}x{cols}")
            w = _finite(w.reshape(rows, cols), f"layer {i} weights")
            b = _finite(b, f"layer {i} bias")
            act = lay.get("activation", "linear")
            w0 = 1.0
            if isinstance(act, dict):
                w0 = float(act.get("w0", 1.0))
                act = act["name"]
            if act not in ACTIVATIONS:
                raise SchemaError(f"layer {i}: unknown activation {act!r}")
            layers.append(Layer(w, b, act, w0))
        input_dim = int(document.get("input_dim", layers[0].weights.shape[1]))
        if input_dim != layers[0].weights.shape[1]:
            raise SchemaError(f"input_dim {input_dim} does not match first layer")
        shift = _finite(np.asarray(document.get("input_shift", np.zeros(input_dim)), dtype=float), "input_shift")
        scale = _finite(np.asarray(document.get("input_scale", np.ones(input_dim)), dtype=float), "input_scale")
        wiring = document.get("output_wiring", "none")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"malformed weight document: {exc}") from exc
    return PolicyNet(tuple(layers), shift, scale, wiring, dict(document.get("meta", {})))


def policy_to_dict(net: PolicyNet) -> dict:
    layers = []
    for lay in net.layers:
        rows, cols = lay.weights.shape
        act = {"name": "sin", "w0": lay.w0} if lay.activation == "sin" else lay.activation
        layers.append(
            {
                "rows": rows,
                "cols": cols,
                "weights": lay.weights.ravel().tolist(),
                "bias": lay.bias.tolist(),
                "activation": act,
            }
        )
    return {
        "input_dim": net.input_dim,
        "input_shift": net.input_shift.tolist(),
        "input_scale": net.input_scale.tolist(),
        "layers": layers,
        "output_wiring": net.output_wiring,
        "meta": net.meta,
    }


def random_siren(
    sizes: Sequence[int],
    head: str = "linear",
    seed: int = 0,
    w0: float = 1.0,
    gain: float = 1.0,
    output_wiring: str = "none",
    input_shift=None,
    input_scale=None,
) -> PolicyNet:
    """SIREN with the usual uniform initialisation; used for synthetic policies."""
    rng = np.random.default_rng(seed)
    layers = []
    n_layers = len(sizes) - 1
    for i in range(n_layers):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        bound = 1.0 / fan_in if i == 0 else math.sqrt(6.0 / fan_in) / max(w0, 1e-12)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in)) * gain
        b = rng.uniform(-bound, bound, size=fan_out) * gain
        last = i == n_layers - 1
        layers.append(Layer(w, b, head if last else "sin", 1.0 if last else w0))
    dim = sizes[0]
    shift = np.zeros(dim) if input_shift is None else np.asarray(input_shift, dtype=float)
    scale = np.ones(dim) if input_scale is None else np.asarray(input_scale, dtype=float)
    return PolicyNet(tuple(layers), shift, scale, output_wiring, {"seed": seed})


# ---------------------------------------------------------------------------
# evaluation


def _activate_float(z: np.ndarray, layer: Layer) -> np.ndarray:
    act = layer.activation
    if act == "sin":
        return np.sin(layer.w0 * z)
    if act == "linear":
        return z
    if act == "sigmoid":
        return pa.scalar_sigmoid(z)
    if act == "tanh":
        return np.tanh(z)
    return pa.scalar_softplus(z)


def _activate_poly(space: pa.Space, z: np.ndarray, layer: Layer) -> np.ndarray:
    act = layer.activation
    if act == "linear":
        return z
    if act == "sin":
        return pa.series_apply(space, layer.w0 * z, "sin")
    return pa.series_apply(space, z, act)


def _affine(w: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    # column-by-column accumulation: identical float ops for (in,) and (in, N) inputs
    if x.ndim == 1:
        out = b.copy()
        for j in range(w.shape[1]):
            out = out + w[:, j] * x[j]
        return out
    out = np.zeros((w.shape[0], x.shape[1]))
    out[:, 0] = b
    for j in range(w.shape[1]):
        out = out + w[:, j, None] * x[j]
    return out


def eval_net(net: PolicyNet, inputs) -> list:
    """Evaluate ``net`` on a vector of floats or of same-space :class:`TPoly`."""
    inputs = list(inputs)
    if len(inputs) != net.input_dim:
        raise AlgebraError(f"network expects {net.input_dim} inputs, got {len(inputs)}")
    polys = [isinstance(v, TPoly) for v in inputs]
    if any(polys):
        if not all(polys):
            raise AlgebraError("mixed float and polynomial inputs")
        space = inputs[0].space
        if any(v.space is not space for v in inputs):
            raise AlgebraError("polynomial inputs must share a space")
        x = np.stack([v.coeffs for v in inputs])
        x = (x - net.input_shift[:, None] * (np.arange(space.size) == 0)) * net.input_scale[:, None]
        for layer in net.layers:
            x = _activate_poly(space, _affine(layer.weights, layer.bias, x), layer)
        return [TPoly(space, row) for row in x]
    x = (np.asarray(inputs, dtype=float) - net.input_shift) * net.input_scale
    for layer in net.layers:
        x = _activate_float(_affine(layer.weights, layer.bias, x), layer)
    return [float(v) for v in x]


def normalize_direction(v: Sequence, eps: float = EPS_DIRECTION) -> list:
    """Unit vector ``v / |v|`` in whichever algebra ``v`` lives in."""
    if len(v) != 3:
        raise AlgebraError("direction must have 3 components")
    consts = [c.const if isinstance(c, TPoly) else float(c) for c in v]
    if math.sqrt(sum(c * c for c in consts)) < eps:
        raise DomainError("near-zero nominal thrust direction")
    inv = 1.0 / pa.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    return [c * inv for c in v]
