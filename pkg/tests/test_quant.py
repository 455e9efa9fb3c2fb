import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from microgait import (
    DataError,
    DomainError,
    PolicySpec,
    QuantScheme,
    RequantParams,
    derive_requant,
    infer_fp32,
    leaky_relu,
    load_quantized,
    quantize_policy,
    random_policy,
    requantize,
    save_quantized,
    sqnr_db,
)
from microgait.quant import (
    dequantize_weights,
    encode_ratio,
    fp32_payload_bytes,
    int8_payload_bytes,
)
from oracles import requantize_unbounded


def _calib(seed, n=64, dim=24):
    return np.random.default_rng(seed).normal(size=(n, dim))


def _quantized(seed, scheme, dims=(24, 128, 64, 8), spread=0.0):
    p = random_policy(PolicySpec(dims, leaky_relu()), seed, row_scale_spread=spread)
    return p, quantize_policy(p, scheme, _calib(1000 + seed, dim=dims[0]))


def test_requantize_hand_cases():
    assert requantize(0, RequantParams(12345, 7, 0)) == 0
    assert requantize(2 ** 30, RequantParams(1, 0, 0)) == 127        # saturates
    assert requantize(5, RequantParams(3, 1, -2)) == 6               # ((15+1)>>1)-2
    assert requantize(-(2 ** 30), RequantParams(1, 0, 0)) == -128


def test_requant_params_validation():
    with pytest.raises(DataError):
        RequantParams(1, 32)
    with pytest.raises(DataError):
        RequantParams(2 ** 31, 0)
    with pytest.raises(DataError):
        RequantParams(1, 0, 200)
    assert RequantParams(1, 0).round_term == 0
    assert RequantParams(1, 5).round_term == 16


@given(st.integers(-(2 ** 31) + 1, 2 ** 31 - 1),
       st.integers(0, 2 ** 31 - 1),
       st.integers(0, 31),
       st.integers(-128, 127))
def test_requantize_matches_unbounded_oracle(acc, mult, shift, zp):
    rp = RequantParams(mult, shift, zp)
    assert requantize(acc, rp) == requantize_unbounded(acc, mult, shift, zp)


@given(st.integers(-(2 ** 31) + 1, 2 ** 31 - 2),
       st.integers(1, 2 ** 31 - 1),
       st.integers(0, 31))
def test_requantize_monotone_in_accumulator(acc, mult, shift):
    rp = RequantParams(mult, shift, 0)
    assert requantize(acc + 1, rp) >= requantize(acc, rp)


def test_encode_ratio_canonical_dyadics():
    assert encode_ratio(0.5) == (2 ** 30, 31)
    assert encode_ratio(1.0) == (2 ** 30, 30)


@given(st.floats(2 ** -7, 2 ** 20, allow_nan=False, allow_infinity=False))
def test_encode_ratio_precision(ratio):
    mult, shift = encode_ratio(ratio)
    assert 0 < mult < 2 ** 31 and 0 <= shift <= 31
    assert abs(mult / 2 ** shift - ratio) <= 2 ** -24 * ratio


def test_encode_ratio_point_three():
    mult, shift = encode_ratio(0.3)
    assert abs(mult / 2 ** shift - 0.3) <= 2 ** -24 * 0.3


def test_encode_ratio_rejects_extremes():
    with pytest.raises(DomainError):
        encode_ratio(0.0)
    with pytest.raises(DomainError):
        encode_ratio(2.0 ** 31)
    with pytest.raises(DomainError):
        encode_ratio(2.0 ** -40)


def test_derive_requant_validation():
    with pytest.raises(DomainError):
        derive_requant(0.0, 1.0, 1.0)
    rp = derive_requant(0.02, 0.005, 0.03, zero_point=-5)
    assert rp.zero_point == -5
    assert abs(rp.mult / 2 ** rp.shift - 0.02 * 0.005 / 0.03) < 1e-6


def test_quantize_rejects_elu():
    p = random_policy(PolicySpec((24, 8)), 0)   # default activation is ELU
    with pytest.raises(DomainError):
        quantize_policy(p, QuantScheme.PER_TENSOR, _calib(0))


def test_quantize_rejects_bad_calib():
    p = random_policy(PolicySpec((24, 8), leaky_relu()), 0)
    with pytest.raises(DataError):
        quantize_policy(p, QuantScheme.PER_TENSOR, np.zeros((0, 24)))
    with pytest.raises(DataError):
        quantize_policy(p, QuantScheme.PER_TENSOR, np.zeros((4, 23)))


def test_constant_weight_tensor_per_tensor():
    spec = PolicySpec((4, 3), leaky_relu())
    from microgait import Fp32Policy
    w = np.full((3, 4), -0.25)
    p = Fp32Policy(spec, [w], [np.zeros(3)])
    qp = quantize_policy(p, QuantScheme.PER_TENSOR, _calib(0, dim=4))
    assert np.all(np.abs(qp.layers[0].weights) == 127)
    assert qp.layers[0].weight_scales[0] == pytest.approx(0.25 / 127)


def test_per_feature_row_scales_differ():
    spec = PolicySpec((4, 2), leaky_relu())
    from microgait import Fp32Policy
    w = np.array([[0.5, 0.1, 0.2, 0.3], [0.005, 0.001, 0.002, 0.003]])
    p = Fp32Policy(spec, [w], [np.zeros(2)])
    qf = quantize_policy(p, QuantScheme.PER_FEATURE, _calib(0, dim=4))
    qt = quantize_policy(p, QuantScheme.PER_TENSOR, _calib(0, dim=4))
    s = qf.layers[0].weight_scales
    assert s[0] / s[1] == pytest.approx(100.0)
    assert qt.layers[0].weight_scales.size == 1


def test_all_zero_row_gets_unit_scale():
    spec = PolicySpec((4, 2), leaky_relu())
    from microgait import Fp32Policy
    w = np.array([[0.5, 0.1, 0.2, 0.3], [0.0, 0.0, 0.0, 0.0]])
    p = Fp32Policy(spec, [w], [np.zeros(2)])
    qf = quantize_policy(p, QuantScheme.PER_FEATURE, _calib(0, dim=4))
    assert qf.layers[0].weight_scales[1] == 1.0
    assert np.all(qf.layers[0].weights[1] == 0)


@pytest.mark.parametrize("scheme", list(QuantScheme))
def test_weight_round_trip_error_bound(scheme):
    p, qp = _quantized(3, scheme, spread=0.8)
    for layer, w in zip(qp.layers, p.weights):
        err = np.abs(dequantize_weights(layer) - w)
        scales = layer.weight_scales
        bound = (scales[:, None] if scales.size > 1 else scales[0]) / 2
        assert np.all(err <= bound + 1e-12)


def test_per_feature_weight_error_never_worse_per_row():
    p, qf = _quantized(5, QuantScheme.PER_FEATURE, spread=1.0)
    _, qt = _quantized(5, QuantScheme.PER_TENSOR, spread=1.0)
    for lf, lt, w in zip(qf.layers, qt.layers, p.weights):
        ef = np.abs(dequantize_weights(lf) - w).max(axis=1)
        et = np.abs(dequantize_weights(lt) - w).max(axis=1)
        assert np.all(ef <= et + 1e-12)


def test_sqnr_values():
    ref = np.array([3.0, 4.0])
    assert sqnr_db(ref, ref) == math.inf
    assert sqnr_db(ref, np.array([3.0, 4.5])) == pytest.approx(10 * math.log10(100.0))
    with pytest.raises(DomainError):
        sqnr_db(np.zeros(4), np.ones(4))
    with pytest.raises(DataError):
        sqnr_db(np.zeros(4), np.zeros(3))


def test_payload_byte_counts():
    spec = PolicySpec((24, 128, 64, 8), leaky_relu())
    assert fp32_payload_bytes(spec) == 47904
    _, qf = _quantized(0, QuantScheme.PER_FEATURE)
    _, qt = _quantized(0, QuantScheme.PER_TENSOR)
    # weights 11776 + biases 4*200 + requant 6*200 or 6*3
    assert int8_payload_bytes(qf) == 11776 + 800 + 1200
    assert int8_payload_bytes(qt) == 11776 + 800 + 18


@pytest.mark.parametrize("scheme", list(QuantScheme))
def test_save_load_round_trip(tmp_path, scheme):
    _, qp = _quantized(9, scheme)
    path = tmp_path / "q.bin"
    save_quantized(qp, path)
    back = load_quantized(path)
    assert back.scheme == qp.scheme
    assert back.spec.layer_dims == qp.spec.layer_dims
    assert (back.obs_zp, back.act_mult, back.act_shift) == \
        (qp.obs_zp, qp.act_mult, qp.act_shift)
    assert back.obs_scale == pytest.approx(qp.obs_scale, rel=1e-6)
    for a, b in zip(back.layers, qp.layers):
        assert a.weights.tobytes() == b.weights.tobytes()
        assert a.bias.tobytes() == b.bias.tobytes()
        assert a.requant == b.requant
        np.testing.assert_allclose(a.weight_scales, b.weight_scales, rtol=1e-6)


def test_load_quantized_rejects_garbage(tmp_path):
    path = tmp_path / "g.bin"
    path.write_bytes(b"TGQ1" + bytes(3))
    with pytest.raises(DataError):
        load_quantized(path)
    path.write_bytes(b"XXXX")
    with pytest.raises(DataError):
        load_quantized(path)


@pytest.mark.parametrize("scheme", list(QuantScheme))
def test_fused_output_tracks_fp32(scheme):
    from microgait import fused_infer_dequant
    p, qp = _quantized(11, scheme)
    calib = _calib(1011)
    ref = np.array([infer_fp32(p, row) for row in calib])
    tst = np.array([fused_infer_dequant(qp, row) for row in calib])
    assert sqnr_db(ref, tst) > 15.0
