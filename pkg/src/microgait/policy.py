"""MLP policy structure, FP32 reference inference, and operation accounting.

The deployed controller is a small dense network (default 24 -> 128 -> 64 -> 8)
whose multiply-accumulate and parameter counts drive the cycle model in
:mod:`microgait.cost`.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

POLICY_MAGIC = b"TGP1"

DEFAULT_LAYER_DIMS = (24, 128, 64, 8)


class ActivationKind(enum.Enum):
    ELU = 0
    LEAKY_RELU = 1


@dataclass(frozen=True)
class ActivationSpec:
    """Hidden-layer nonlinearity with its slope/scale parameter."""

    kind: ActivationKind
    alpha: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0):
            raise DataError(f"activation alpha must be > 0, got {self.alpha}")
        if self.kind is ActivationKind.LEAKY_RELU and self.alpha > 1:
            raise DataError(f"leaky-relu alpha must be <= 1, got {self.alpha}")


def elu() -> ActivationSpec:
    return ActivationSpec(ActivationKind.ELU, 1.0)


def leaky_relu(alpha: float = 0.01) -> ActivationSpec:
    return ActivationSpec(ActivationKind.LEAKY_RELU, alpha)


@dataclass(frozen=True)
class PolicySpec:
    """Layer widths plus the hidden activation; output layer is identity."""

    layer_dims: tuple[int, ...] = DEFAULT_LAYER_DIMS
    hidden_activation: ActivationSpec = field(default_factory=elu)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2:
            raise DataError("layer_dims needs at least input and output widths")
        if any(d <= 0 for d in dims):
            raise DataError(f"layer widths must be positive: {dims}")
        object.__setattr__(self, "layer_dims", dims)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims) - 1


def mac_count(spec: PolicySpec) -> int:
    """Multiply-accumulates per forward pass: sum of n_in * n_out over layers."""
    dims = spec.layer_dims
    return sum(dims[i] * dims[i + 1] for i in range(len(dims) - 1))


def param_count(spec: PolicySpec) -> int:
    """Weights plus bias terms."""
    return mac_count(spec) + sum(spec.layer_dims[1:])


def activation_count(spec: PolicySpec) -> int:
    """Nonlinear activations per forward pass (hidden units only)."""
    return sum(spec.layer_dims[1:-1])


def neuron_count(spec: PolicySpec) -> int:
    """Neuron outputs per forward pass (hidden plus output widths)."""
    return sum(spec.layer_dims[1:])


def activate(a: ActivationSpec, x: float) -> float:
    """Scalar activation, continuous at 0."""
    if x >= 0:
        return float(x)
    if a.kind is ActivationKind.ELU:
        return a.alpha * (math.exp(x) - 1.0)
    return a.alpha * x


def _activate_array(a: ActivationSpec, x: np.ndarray) -> np.ndarray:
    if a.kind is ActivationKind.ELU:
        return np.where(x >= 0, x, np.float32(a.alpha) * (np.exp(x, dtype=np.float32) - np.float32(1.0)))
    return np.where(x >= 0, x, np.float32(a.alpha) * x)


@dataclass
class Fp32Policy:
    """Dense weights/biases in float32, shapes fixed by the spec."""

    spec: PolicySpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        dims = self.spec.layer_dims
        if len(self.weights) != self.spec.num_layers or len(self.biases) != self.spec.num_layers:
            raise DataError("layer count does not match spec")
        ws, bs = [], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.asarray(w, dtype=np.float32)
            b = np.asarray(b, dtype=np.float32)
            if w.shape != (dims[i + 1], dims[i]):
                raise DataError(f"layer {i} weight shape {w.shape} != {(dims[i + 1], dims[i])}")
            if b.shape != (dims[i + 1],):
                raise DataError(f"layer {i} bias shape {b.shape} != {(dims[i + 1],)}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise DataError(f"layer {i} contains non-finite values")
            ws.append(w)
            bs.append(b)
        self.weights, self.biases = ws, bs

    def with_activation(self, act: ActivationSpec) -> "Fp32Policy":
        """Same weights under a different hidden activation (ELU -> LeakyReLU swap)."""
        spec = PolicySpec(self.spec.layer_dims, act)
        return Fp32Policy(spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


def infer_fp32(p: Fp32Policy, obs: np.ndarray) -> np.ndarray:
    """Reference forward pass in float32; identity on the output layer."""
    x = np.asarray(obs, dtype=np.float32)
    if x.shape != (p.spec.input_dim,):
        raise DataError(f"observation shape {x.shape} != ({p.spec.input_dim},)")
    last = p.spec.num_layers - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        x = w @ x + b
        if i != last:
            x = _activate_array(p.spec.hidden_activation, x).astype(np.float32)
    return x


def random_policy(spec: PolicySpec, seed: int, weight_scale: float = 0.5,
                  row_scale_spread: float = 0.0) -> Fp32Policy:
    """Seeded random policy; row_scale_spread > 0 gives rows lognormal magnitude spread."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    dims = spec.layer_dims
    for i in range(spec.num_layers):
        w = rng.normal(0.0, weight_scale / math.sqrt(dims[i]), size=(dims[i + 1], dims[i]))
        if row_scale_spread > 0:
            w *= rng.lognormal(0.0, row_scale_spread, size=(dims[i + 1], 1))
        b = rng.normal(0.0, 0.1, size=dims[i + 1])
        weights.append(w.astype(np.float32))
        biases.append(b.astype(np.float32))
    return Fp32Policy(spec, weights, biases)


def save_policy(p: Fp32Policy, path) -> None:
    """Binary little-endian policy file; see README for the layout."""
    dims = p.spec.layer_dims
    act = p.spec.hidden_activation
    out = bytearray()
    out += POLICY_MAGIC
    out += struct.pack("<B", len(dims))
    out += struct.pack(f"<{len(dims)}H", *dims)
    out += struct.pack("<Bf", act.kind.value, act.alpha)
    for w, b in zip(p.weights, p.biases):
        out += w.astype("<f4").tobytes(order="C")
        out += b.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_policy(path) -> Fp32Policy:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != POLICY_MAGIC:
        raise DataError(f"bad policy magic {data[:4]!r}")
    off = 4
    try:
        (n_dims,) = struct.unpack_from("<B", data, off)
        off += 1
        dims = struct.unpack_from(f"<{n_dims}H", data, off)
        off += 2 * n_dims
        kind_val, alpha = struct.unpack_from("<Bf", data, off)
        off += 5
    except struct.error as exc:
        raise DataError(f"truncated policy header: {exc}") from None
    try:
        kind = ActivationKind(kind_val)
    except ValueError:
        raise DataError(f"unknown activation kind {kind_val}") from None
    spec = PolicySpec(dims, ActivationSpec(kind, alpha))
    weights, biases = [], []
    for i in range(spec.num_layers):
        n_in, n_out = dims[i], dims[i + 1]
        w_bytes = 4 * n_in * n_out
        b_bytes = 4 * n_out
        if off + w_bytes + b_bytes > len(data):
            raise DataError(f"truncated policy file at layer {i}")
        w = np.frombuffer(data, dtype="<f4", count=n_in * n_out, offset=off).reshape(n_out, n_in)
        off += w_bytes
        b = np.frombuffer(data, dtype="<f4", count=n_out, offset=off)
        off += b_bytes
        weights.append(w.copy())
        biases.append(b.copy())
    if off != len(data):
        raise DataError(f"{len(data) - off} trailing bytes in policy file")
    return Fp32Policy(spec, weights, biases)


@dataclass(frozen=True)
class ObservationSchema:
    """Named 24-slot observation layout.

    The slot order is a convention frozen here so the harness and the wire
    codec agree; the math elsewhere is layout-agnostic. The default packs
    base linear velocity, base angular velocity, gravity direction in the
    base frame, the eight joint positions, and the first seven entries of
    the previous action.
    """

    fields: tuple[tuple[str, int], ...] = (
        ("lin_vel", 3),
        ("ang_vel", 3),
        ("gravity", 3),
        ("joint_pos", 8),
        ("prev_action", 7),
    )

    def __post_init__(self):
        if any(n <= 0 for _, n in self.fields):
            raise DataError("schema field sizes must be positive")

    @property
    def dim(self) -> int:
        return sum(n for _, n in self.fields)

    def pack(self, **parts: np.ndarray) -> np.ndarray:
        out = []
        for name, size in self.fields:
            if name not in parts:
                raise DataError(f"missing observation field {name!r}")
            v = np.asarray(parts[name], dtype=np.float32).ravel()
            if v.size < size:
                raise DataError(f"field {name!r} has {v.size} values, needs >= {size}")
            out.append(v[:size])
        return np.concatenate(out)

    def unpack(self, obs: np.ndarray) -> dict[str, np.ndarray]:
        obs = np.asarray(obs, dtype=np.float32)
        if obs.shape != (self.dim,):
            raise DataError(f"observation shape {obs.shape} != ({self.dim},)")
        parts, off = {}, 0
        for name, size in self.fields:
            parts[name] = obs[off:off + size]
            off += size
        return parts
