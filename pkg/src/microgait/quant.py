"""Int8 quantization of FP32 policies and fixed-point requantization.

Weights are quantized symmetrically (range +-127, no zero-point) either with
one scale per tensor or one scale per output row. Activations are asymmetric
int8 with zero-points; the input zero-point correction is folded into the
int32 bias so the inner MAC loop stays a plain int8 x int8 dot product.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError
from .policy import (
    ActivationKind,
    ActivationSpec,
    Fp32Policy,
    PolicySpec,
    _activate_array,
    param_count,
)

QUANT_MAGIC = b"TGQ1"

INT8_MIN, INT8_MAX = -128, 127
WEIGHT_MAX = 127  # symmetric weight range

# Ratio encoding precision contract for derive_requant.
RATIO_REL_TOL = 2.0 ** -24
MAX_SHIFT = 31

# Deployment-image sizes reported for the reference [24,128,64,8] controller,
# including framework/runtime overhead; shown for context, never asserted.
REFERENCE_IMAGE_KB = {"fp32_mlp": 204.54, "int8_mlp": 51.136, "linear_baseline": 1.184}


class QuantScheme(enum.Enum):
    PER_TENSOR = 0
    PER_FEATURE = 1


@dataclass(frozen=True)
class RequantParams:
    """Fixed-point rescale: y = clip(((mult * acc + round_term) >> shift) + zero_point)."""

    mult: int
    shift: int
    zero_point: int = 0

    def __post_init__(self):
        if not (0 <= self.shift <= MAX_SHIFT):
            raise DataError(f"shift {self.shift} outside [0, {MAX_SHIFT}]")
        if not (0 <= self.mult < 2 ** 31):
            raise DataError(f"multiplier {self.mult} outside [0, 2^31)")
        if not (INT8_MIN <= self.zero_point <= INT8_MAX):
            raise DataError(f"zero_point {self.zero_point} outside int8 range")

    @property
    def round_term(self) -> int:
        # round-half-up before the arithmetic shift
        return 1 << (self.shift - 1) if self.shift >= 1 else 0


def requantize(acc: int, rp: RequantParams) -> int:
    """Rescale an int32 accumulator to int8, saturating."""
    prod = int(rp.mult) * int(acc)  # fits 64-bit: mult < 2^31, |acc| < 2^31
    shifted = (prod + rp.round_term) >> rp.shift
    return max(INT8_MIN, min(INT8_MAX, shifted + rp.zero_point))


def encode_ratio(ratio: float) -> tuple[int, int]:
    """Encode a positive real as mult / 2^shift with mult < 2^31, largest shift.

    The relative error is at most RATIO_REL_TOL for ratios >= 2^-7; below that
    the shift cap limits precision to the closest representable multiple of
    2^-31, and ratios under 2^-32 are rejected as unrepresentable.
    """
    if not (ratio > 0 and math.isfinite(ratio)):
        raise DomainError(f"ratio must be positive and finite, got {ratio}")
    if ratio >= 2 ** 31:
        raise DomainError(f"ratio {ratio} overflows the 31-bit multiplier")
    shift = MAX_SHIFT
    while shift >= 0:
        mult = round(ratio * (1 << shift))
        if mult < 2 ** 31:
            break
        shift -= 1
    if mult == 0:
        raise DomainError(
            f"ratio {ratio} is below 2^-{MAX_SHIFT + 1} and not representable")
    return mult, shift


def derive_requant(input_scale: float, weight_scale: float, output_scale: float,
                   zero_point: int = 0) -> RequantParams:
    """Fixed-point parameters for the rescale input_scale*weight_scale/output_scale."""
    for name, s in (("input_scale", input_scale), ("weight_scale", weight_scale),
                    ("output_scale", output_scale)):
        if not (s > 0):
            raise DomainError(f"{name} must be > 0, got {s}")
    mult, shift = encode_ratio(input_scale * weight_scale / output_scale)
    return RequantParams(mult, shift, zero_point)


@dataclass
class QuantizedLayer:
    """One dense layer in int8 with its requantization parameters.

    ``bias`` is stored at scale input_scale*weight_scale with the input
    zero-point correction (-input_zp * row_sum) already folded in.
    """

    weights: np.ndarray            # int8, (n_out, n_in)
    bias: np.ndarray               # int32, (n_out,)
    input_scale: float
    input_zp: int
    weight_scales: np.ndarray      # float, len 1 (per-tensor) or n_out
    output_scale: float
    output_zp: int
    requant: list[RequantParams]   # len 1 (per-tensor) or n_out

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    def requant_for(self, i: int) -> RequantParams:
        return self.requant[0] if len(self.requant) == 1 else self.requant[i]


@dataclass
class QuantizedPolicy:
    spec: PolicySpec
    scheme: QuantScheme
    layers: list[QuantizedLayer]
    obs_scale: float
    obs_zp: int
    act_mult: int     # integer leaky-relu slope, alpha ~= act_mult / 2^act_shift
    act_shift: int

    def __post_init__(self):
        dims = self.spec.layer_dims
        if len(self.layers) != self.spec.num_layers:
            raise DataError("quantized layer count does not match spec")
        for i, layer in enumerate(self.layers):
            if layer.weights.shape != (dims[i + 1], dims[i]):
                raise DataError(
                    f"layer {i} weight shape {layer.weights.shape} != {(dims[i + 1], dims[i])}")
            # int32 accumulator headroom: worst case |sum w*x| <= n_in*127*255
            worst = dims[i] * WEIGHT_MAX * 255 + int(np.abs(layer.bias).max(initial=0))
            if worst >= 2 ** 31:
                raise DomainError(
                    f"layer {i} fan-in {dims[i]} can overflow the int32 accumulator "
                    f"(worst case {worst})")


def _affine_params(lo: float, hi: float) -> tuple[float, int]:
    """Asymmetric int8 scale/zero-point covering [lo, hi] (extended to include 0)."""
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    if hi == lo:
        return 1.0, 0
    scale = (hi - lo) / (INT8_MAX - INT8_MIN)
    zp = int(round(INT8_MIN - lo / scale))
    return scale, max(INT8_MIN, min(INT8_MAX, zp))


def _weight_scales(w: np.ndarray, scheme: QuantScheme) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if scheme is QuantScheme.PER_TENSOR:
        m = np.array([np.abs(w).max()])
    else:
        m = np.abs(w).max(axis=1)
    m = np.where(m > 0, m, float(WEIGHT_MAX))  # all-zero tensor/row: scale defaults to 1
    return m / WEIGHT_MAX


def quantize_policy(p: Fp32Policy, scheme: QuantScheme,
                    calib: np.ndarray | list[np.ndarray]) -> QuantizedPolicy:
    """Quantize a LeakyReLU policy to int8 under the given scheme.

    Activation ranges come from min/max over the calibration observations,
    propagated layer by layer through the FP32 network.
    """
    act = p.spec.hidden_activation
    if act.kind is not ActivationKind.LEAKY_RELU:
        raise DomainError(
            "integer deployment uses leaky-relu; convert first with "
            "Fp32Policy.with_activation(leaky_relu())")
    calib = np.atleast_2d(np.asarray(calib, dtype=np.float32))
    if calib.size == 0:
        raise DataError("calibration set is empty")
    if calib.shape[1] != p.spec.input_dim:
        raise DataError(f"calibration width {calib.shape[1]} != {p.spec.input_dim}")

    # FP32 propagation: min/max of the observation and each layer's output.
    # Hidden-layer ranges are taken post-activation: the kernel applies the
    # integer leaky-relu on the accumulator before requantizing, so the int8
    # grid only has to cover the (much narrower) activated range.
    ranges = [(float(calib.min()), float(calib.max()))]
    x = calib
    last = p.spec.num_layers - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        x = x @ w.T + b
        if i != last:
            x = _activate_array(act, x).astype(np.float32)
        ranges.append((float(x.min()), float(x.max())))

    obs_scale, obs_zp = _affine_params(*ranges[0])
    act_mult, act_shift = encode_ratio(act.alpha)

    layers = []
    in_scale, in_zp = obs_scale, obs_zp
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        w_scales = _weight_scales(w, scheme)
        # divide in float64 so round-to-nearest lands within scale/2 per weight
        w64 = w.astype(np.float64)
        w_q = np.clip(np.rint(w64 / w_scales[:, None] if w_scales.size > 1
                              else w64 / w_scales[0]), -WEIGHT_MAX, WEIGHT_MAX).astype(np.int8)
        out_scale, out_zp = _affine_params(*ranges[i + 1])
        scales_per_row = w_scales if w_scales.size > 1 else np.repeat(w_scales, w.shape[0])
        bias_q = np.rint(b.astype(np.float64) / (in_scale * scales_per_row)).astype(np.int64)
        fold = in_zp * w_q.astype(np.int64).sum(axis=1)
        if np.abs(bias_q - fold).max(initial=0) >= 2 ** 31:
            raise DomainError(f"layer {i} quantized bias overflows int32")
        bias_folded = (bias_q - fold).astype(np.int32)
        if scheme is QuantScheme.PER_TENSOR:
            requant = [derive_requant(in_scale, float(w_scales[0]), out_scale, out_zp)]
        else:
            requant = [derive_requant(in_scale, float(s), out_scale, out_zp)
                       for s in w_scales]
        layers.append(QuantizedLayer(
            weights=w_q, bias=bias_folded,
            input_scale=in_scale, input_zp=in_zp,
            weight_scales=w_scales.astype(np.float64),
            output_scale=out_scale, output_zp=out_zp,
            requant=requant))
        in_scale, in_zp = out_scale, out_zp

    return QuantizedPolicy(
        spec=PolicySpec(p.spec.layer_dims, ActivationSpec(ActivationKind.LEAKY_RELU, act.alpha)),
        scheme=scheme, layers=layers,
        obs_scale=obs_scale, obs_zp=obs_zp,
        act_mult=act_mult, act_shift=act_shift)


def dequantize_weights(layer: QuantizedLayer) -> np.ndarray:
    scales = layer.weight_scales
    if scales.size == 1:
        return layer.weights.astype(np.float64) * scales[0]
    return layer.weights.astype(np.float64) * scales[:, None]


def dequantize_action(q: np.ndarray, scale: float, zero_point: int) -> np.ndarray:
    return (np.asarray(q, dtype=np.float64) - zero_point) * scale


def sqnr_db(reference, test) -> float:
    """10*log10(signal energy / error energy) over matching vector collections."""
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape:
        raise DataError(f"shape mismatch {ref.shape} vs {tst.shape}")
    signal = float(np.sum(ref * ref))
    if signal == 0.0:
        raise DomainError("reference signal is identically zero")
    err = float(np.sum((ref - tst) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(signal / err)


def fp32_payload_bytes(spec: PolicySpec) -> int:
    """Raw FP32 parameter bytes (4 per weight/bias), excluding headers."""
    return 4 * param_count(spec)


def int8_payload_bytes(qp: QuantizedPolicy) -> int:
    """On-device int8 bytes: weights, int32 biases, requant tables (6 B/entry)."""
    total = 0
    for layer in qp.layers:
        total += layer.weights.size           # int8 weights
        total += 4 * layer.bias.size          # int32 biases
        total += 6 * len(layer.requant)       # i32 mult + u8 shift + i8 zp
    return total


def save_quantized(qp: QuantizedPolicy, path) -> None:
    dims = qp.spec.layer_dims
    out = bytearray()
    out += QUANT_MAGIC
    out += struct.pack("<BB", qp.scheme.value, len(dims))
    out += struct.pack(f"<{len(dims)}H", *dims)
    out += struct.pack("<fIBfb", qp.spec.hidden_activation.alpha,
                       qp.act_mult, qp.act_shift, qp.obs_scale, qp.obs_zp)
    for layer in qp.layers:
        out += layer.weights.astype("<i1").tobytes(order="C")
        out += layer.bias.astype("<i4").tobytes()
        scales = [layer.input_scale, layer.output_scale] + [float(s) for s in layer.weight_scales]
        out += struct.pack("<H", len(scales))
        out += struct.pack(f"<{len(scales)}f", *scales)
        out += struct.pack("<bb", layer.input_zp, layer.output_zp)
        out += struct.pack("<H", len(layer.requant))
        for rp in layer.requant:
            out += struct.pack("<iBb", rp.mult, rp.shift, rp.zero_point)
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_quantized(path) -> QuantizedPolicy:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != QUANT_MAGIC:
        raise DataError(f"bad quantized-policy magic {data[:4]!r}")
    off = 4
    try:
        scheme_val, n_dims = struct.unpack_from("<BB", data, off)
        off += 2
        dims = struct.unpack_from(f"<{n_dims}H", data, off)
        off += 2 * n_dims
        alpha, act_mult, act_shift, obs_scale, obs_zp = struct.unpack_from("<fIBfb", data, off)
        off += 14
        scheme = QuantScheme(scheme_val)
    except (struct.error, ValueError) as exc:
        raise DataError(f"bad quantized-policy header: {exc}") from None
    spec = PolicySpec(dims, ActivationSpec(ActivationKind.LEAKY_RELU, alpha))
    layers = []
    try:
        for i in range(spec.num_layers):
            n_in, n_out = dims[i], dims[i + 1]
            w = np.frombuffer(data, dtype="<i1", count=n_in * n_out, offset=off)
            w = w.reshape(n_out, n_in).copy()
            off += n_in * n_out
            b = np.frombuffer(data, dtype="<i4", count=n_out, offset=off).copy()
            off += 4 * n_out
            (n_scales,) = struct.unpack_from("<H", data, off)
            off += 2
            scales = struct.unpack_from(f"<{n_scales}f", data, off)
            off += 4 * n_scales
            in_zp, out_zp = struct.unpack_from("<bb", data, off)
            off += 2
            (n_rq,) = struct.unpack_from("<H", data, off)
            off += 2
            requant = []
            for _ in range(n_rq):
                mult, shift, zp = struct.unpack_from("<iBb", data, off)
                off += 6
                requant.append(RequantParams(mult, shift, zp))
            if n_scales != 2 + (1 if n_rq == 1 else n_out):
                raise DataError(f"layer {i} scale table has {n_scales} entries")
            layers.append(QuantizedLayer(
                weights=w, bias=b.astype(np.int32),
                input_scale=scales[0], input_zp=in_zp,
                weight_scales=np.asarray(scales[2:], dtype=np.float64),
                output_scale=scales[1], output_zp=out_zp,
                requant=requant))
    except (struct.error, ValueError) as exc:
        raise DataError(f"truncated quantized-policy file: {exc}") from None
    if off != len(data):
        raise DataError(f"{len(data) - off} trailing bytes in quantized-policy file")
    return QuantizedPolicy(spec, scheme, layers, obs_scale, obs_zp, act_mult, act_shift)
