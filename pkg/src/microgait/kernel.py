"""Integer-only forward pass with exact operation counters.

This is the measurable analogue of the on-device scalar inference loop:
int8 x int8 products accumulated in int32, an integer leaky-relu applied to
the accumulator on hidden layers, then a fixed-point requantize per neuron
output whose scale is calibrated on the post-activation range. Counters
report exactly how many MACs, activations, requantizations, and extra
per-output parameter loads one inference performs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .policy import PolicySpec, mac_count, activation_count, neuron_count
from .quant import INT8_MAX, INT8_MIN, QuantScheme, QuantizedPolicy, dequantize_action

__all__ = ["OpCounters", "infer_int8", "quantize_obs", "fused_infer_dequant",
           "expected_counters"]


@dataclass(frozen=True)
class OpCounters:
    macs: int = 0
    activations: int = 0
    requants: int = 0
    param_loads: int = 0


def expected_counters(spec: PolicySpec, scheme: QuantScheme) -> OpCounters:
    n = neuron_count(spec)
    return OpCounters(
        macs=mac_count(spec),
        activations=activation_count(spec),
        requants=n,
        param_loads=n if scheme is QuantScheme.PER_FEATURE else 0)


def quantize_obs(obs: np.ndarray, scale: float, zero_point: int) -> np.ndarray:
    """clip(round(obs / scale) + zero_point) into int8."""
    q = np.rint(np.asarray(obs, dtype=np.float64) / scale) + zero_point
    return np.clip(q, INT8_MIN, INT8_MAX).astype(np.int8)


def infer_int8(qp: QuantizedPolicy, obs_q: np.ndarray) -> tuple[np.ndarray, OpCounters]:
    """Forward pass on an int8 observation; returns the int8 action and counters."""
    x = np.asarray(obs_q)
    if x.dtype != np.int8 or x.shape != (qp.spec.input_dim,):
        raise DataError(f"expected int8 observation of shape ({qp.spec.input_dim},)")
    per_feature = qp.scheme is QuantScheme.PER_FEATURE
    macs = activations = requants = param_loads = 0
    last = qp.spec.num_layers - 1

    x = x.astype(np.int64)
    for li, layer in enumerate(qp.layers):
        n_out, n_in = layer.weights.shape
        # int32 accumulate; int64 here is exact because overflow is excluded
        # by the QuantizedPolicy headroom check
        acc = layer.weights.astype(np.int64) @ x + layer.bias.astype(np.int64)
        macs += n_out * n_in

        if li != last:
            # integer leaky-relu on the accumulator; the product fits int64
            # (|acc| < 2^31 by the headroom check, act_mult < 2^31)
            acc = np.where(acc < 0, (acc * qp.act_mult) >> np.int64(qp.act_shift), acc)
            activations += n_out

        if per_feature:
            mults = np.array([rp.mult for rp in layer.requant], dtype=np.int64)
            shifts = np.array([rp.shift for rp in layer.requant], dtype=np.int64)
            rounds = np.array([rp.round_term for rp in layer.requant], dtype=np.int64)
            zps = np.array([rp.zero_point for rp in layer.requant], dtype=np.int64)
            param_loads += n_out
        else:
            rp = layer.requant[0]
            mults, shifts = np.int64(rp.mult), np.int64(rp.shift)
            rounds, zps = np.int64(rp.round_term), np.int64(rp.zero_point)
        y = ((mults * acc + rounds) >> shifts) + zps
        x = np.clip(y, INT8_MIN, INT8_MAX)
        requants += n_out

    action_q = x.astype(np.int8)
    return action_q, OpCounters(macs, activations, requants, param_loads)


def fused_infer_dequant(qp: QuantizedPolicy, obs: np.ndarray) -> np.ndarray:
    """Convenience path: quantize observation, run int8 inference, dequantize action."""
    obs_q = quantize_obs(obs, qp.obs_scale, qp.obs_zp)
    action_q, _ = infer_int8(qp, obs_q)
    out = qp.layers[-1]
    return dequantize_action(action_q, out.output_scale, out.output_zp)
