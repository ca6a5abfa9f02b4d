"""Quaternion layer semantics, checked against the exact scalar algebra."""

import numpy as np
import pytest

from qnn import quat
from qnn.autograd import Tensor, backward
from qnn.errors import ConfigError, DimensionError
from qnn.gradcheck import gradient_check
from qnn.layers import (
    QuatLinear,
    RealLinear,
    RealToQuatEncoder,
    chi4_init,
    quat_normalize,
    quaternion_dropout,
    split_activation,
)


def unpack_quaternions(v: np.ndarray):
    """Quarter-block real vector of length 4H -> list of H Quaternions."""
    h = v.shape[-1] // 4
    return [quat.Quaternion(float(v[j]), float(v[h + j]), float(v[2 * h + j]), float(v[3 * h + j]))
            for j in range(h)]


def reference_quat_linear(layer: QuatLinear, x_row: np.ndarray) -> np.ndarray:
    """Per-quaternion Hamilton sums computed with the scalar oracle."""
    h_out = layer.out_q
    xs = unpack_quaternions(x_row)
    out = np.zeros(4 * h_out, dtype=np.float64)
    bias = layer.bias.data if layer.bias is not None else np.zeros(4 * h_out)
    for o in range(h_out):
        acc = quat.Quaternion(0.0, 0.0, 0.0, 0.0)
        for j in range(layer.in_q):
            w = quat.Quaternion(
                float(layer.w_r.data[j, o]),
                float(layer.w_x.data[j, o]),
                float(layer.w_y.data[j, o]),
                float(layer.w_z.data[j, o]),
            )
            p = quat.hamilton(w, xs[j])
            acc = quat.Quaternion(acc.r + p.r, acc.x + p.x, acc.y + p.y, acc.z + p.z)
        out[o] = acc.r + bias[o]
        out[h_out + o] = acc.x + bias[h_out + o]
        out[2 * h_out + o] = acc.y + bias[2 * h_out + o]
        out[3 * h_out + o] = acc.z + bias[3 * h_out + o]
    return out


def test_identity_weight_passes_input_through():
    rng = np.random.default_rng(0)
    layer = QuatLinear(1, 1, rng, dtype=np.float64)
    layer.w_r.data[:] = 1.0
    layer.w_x.data[:] = 0.0
    layer.w_y.data[:] = 0.0
    layer.w_z.data[:] = 0.0
    layer.bias.data[:] = 0.0
    x = Tensor(rng.normal(size=(3, 4)))
    out = layer(x)
    assert np.allclose(out.data, x.data, atol=1e-15)


def test_single_quaternion_matches_hamilton():
    rng = np.random.default_rng(1)
    layer = QuatLinear(1, 1, rng, dtype=np.float32)
    qw = quat.Quaternion(float(layer.w_r.data[0, 0]), float(layer.w_x.data[0, 0]),
                         float(layer.w_y.data[0, 0]), float(layer.w_z.data[0, 0]))
    qx = quat.Quaternion(0.3, -1.2, 0.7, 2.0)
    x = Tensor(np.array([[qx.r, qx.x, qx.y, qx.z]], dtype=np.float32))
    out = layer(x).data[0]
    expected = quat.hamilton(qw, qx)
    assert np.abs(out - expected.as_array()).max() < 1e-6


@pytest.mark.parametrize("in_q,out_q", [(1, 1), (2, 3), (8, 8)])
def test_structured_matmul_equals_hamilton_sums_f64(in_q, out_q):
    rng = np.random.default_rng(2)
    layer = QuatLinear(in_q, out_q, rng, dtype=np.float64)
    layer.bias.data[:] = rng.normal(size=4 * out_q)
    x = rng.normal(size=(5, 4 * in_q))
    got = layer(Tensor(x)).data
    for n in range(x.shape[0]):
        expected = reference_quat_linear(layer, x[n])
        assert np.abs(got[n] - expected).max() < 1e-12


def test_structured_matmul_equals_hamilton_sums_f32():
    rng = np.random.default_rng(3)
    layer = QuatLinear(4, 4, rng, dtype=np.float32)
    x = rng.normal(size=(3, 16)).astype(np.float32)
    got = layer(Tensor(x)).data
    for n in range(x.shape[0]):
        expected = reference_quat_linear(layer, x[n].astype(np.float64))
        assert np.abs(got[n] - expected).max() < 1e-5


def test_parameter_count_quarter_of_real():
    rng = np.random.default_rng(4)
    qlayer = QuatLinear(256, 256, rng)  # 1024 real in/out
    rlayer = RealLinear(1024, 1024, rng)
    assert qlayer.weight_scalar_count() == 262_144
    assert rlayer.weight_scalar_count() == 1_048_576
    assert rlayer.weight_scalar_count() == 4 * qlayer.weight_scalar_count()
    n_params = sum(p.size for _, p in qlayer.named_parameters())
    assert n_params == 4 * 256 * 256 + 4 * 256


def test_bad_input_width():
    rng = np.random.default_rng(5)
    layer = QuatLinear(2, 2, rng)
    with pytest.raises(DimensionError):
        layer(Tensor(np.zeros((1, 7), dtype=np.float32)))


def test_quat_linear_gradients():
    rng = np.random.default_rng(6)
    layer = QuatLinear(3, 2, rng, dtype=np.float64)
    x = Tensor(rng.normal(size=(4, 12)), requires_grad=True)
    errs = gradient_check(
        lambda: layer(x).sum(),
        layer.named_parameters() + [("x", x)],
    )
    assert max(errs.values()) < 1e-6


def test_split_activation_values():
    z = split_activation("tanh", Tensor(np.zeros(8)))
    assert np.array_equal(z.data, np.zeros(8))
    # quaternion (-1, 2, -3, 4) in quarter-block layout with H=1
    v = Tensor(np.array([-1.0, 2.0, -3.0, 4.0]))
    out = split_activation("relu", v)
    assert np.array_equal(out.data, np.array([0.0, 2.0, 0.0, 4.0]))


def test_split_activation_is_layoutwise_flat():
    rng = np.random.default_rng(7)
    v = rng.normal(size=(3, 8))
    out = split_activation("sigmoid", Tensor(v)).data
    expected = 1.0 / (1.0 + np.exp(-v))
    assert np.allclose(out, expected, atol=1e-12)


def test_split_activation_unknown_kind():
    with pytest.raises(ConfigError):
        split_activation("gelu", Tensor(np.zeros(4)))


def test_chi4_biases_zero_and_determinism():
    layer = QuatLinear(5, 7, np.random.default_rng(123))
    assert np.array_equal(layer.bias.data, np.zeros(4 * 7, dtype=np.float32))
    a = chi4_init(6, 8, np.random.default_rng(99))
    b = chi4_init(6, 8, np.random.default_rng(99))
    for ca, cb in zip(a, b):
        assert np.array_equal(ca, cb)


def test_chi4_magnitude_distribution():
    fan_in, fan_out = 200, 125  # 25k weights per draw set; 4 arrays gives stats on 1e5 values
    rng = np.random.default_rng(11)
    w_r, w_x, w_y, w_z = chi4_init(fan_in, fan_out, rng, dtype=np.float64)
    sigma = 1.0 / np.sqrt(2.0 * (fan_in + fan_out))
    sq = w_r**2 + w_x**2 + w_y**2 + w_z**2
    # 25k modulus draws: chi-square with 4 dof has mean 4
    mean_ratio = (sq / sigma**2).mean()
    assert abs(mean_ratio - 4.0) < 0.2
    # symmetric direction/angle: component means vanish
    n = w_r.size
    for comp in (w_r, w_x, w_y, w_z):
        se = comp.std() / np.sqrt(n)
        assert abs(comp.mean()) < 3.0 * se + 1e-12


def test_quat_normalize_units():
    rng = np.random.default_rng(12)
    v = Tensor(rng.normal(size=(50, 16)))
    out = quat_normalize(v).data
    h = 4
    norms = np.sqrt(sum(out[:, c * h:(c + 1) * h] ** 2 for c in range(4)))
    assert np.abs(norms - 1.0).max() < 1e-6


def test_quat_normalize_zero_guard():
    out = quat_normalize(Tensor(np.zeros((2, 8))))
    assert np.array_equal(out.data, np.zeros((2, 8)))


def test_quat_normalize_gradients():
    rng = np.random.default_rng(13)
    v = Tensor(rng.normal(size=(3, 8)) + 0.5, requires_grad=True)
    errs = gradient_check(lambda: quat_normalize(v).sum(), [("v", v)])
    assert errs["v"] < 1e-6


def test_dropout_identity_cases():
    rng = np.random.default_rng(14)
    x = Tensor(rng.normal(size=(5, 8)).astype(np.float32))
    assert quaternion_dropout(x, 0.0, training=True, rng=rng) is x
    assert quaternion_dropout(x, 0.5, training=False) is x
    with pytest.raises(ConfigError):
        quaternion_dropout(x, 1.0, training=True, rng=rng)
    with pytest.raises(ConfigError):
        quaternion_dropout(x, -0.1, training=True, rng=rng)


def test_dropout_whole_quaternions():
    rng = np.random.default_rng(15)
    h = 100
    x_data = np.ones((1000, 4 * h), dtype=np.float64)
    out = quaternion_dropout(Tensor(x_data), 0.2, training=True, rng=rng).data
    blocks = out.reshape(1000, 4, h)  # [n, component, quaternion]
    zeroed = blocks == 0.0
    # a dropped quaternion loses all four components at once
    assert np.array_equal(zeroed.all(axis=1), zeroed.any(axis=1))
    drop_frac = zeroed.all(axis=1).mean()
    assert abs(drop_frac - 0.2) < 0.01
    survivors = blocks[~zeroed].ravel()
    assert np.allclose(survivors, 1.0 / 0.8, atol=1e-12)


def test_real_linear_identity_and_grads():
    rng = np.random.default_rng(16)
    layer = RealLinear(3, 3, rng, dtype=np.float64)
    layer.weight.data[:] = np.eye(3)
    layer.bias.data[:] = 0.0
    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    assert np.allclose(layer(x).data, x.data, atol=1e-15)
    layer2 = RealLinear(4, 2, rng, dtype=np.float64)
    y = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
    errs = gradient_check(lambda: layer2(y).sum(), layer2.named_parameters() + [("y", y)])
    assert max(errs.values()) < 1e-6


def test_encoder_shapes_and_unit_norm():
    rng = np.random.default_rng(17)
    enc = RealToQuatEncoder(40, 1024, "tanh", normalized=True, rng=rng, dtype=np.float64)
    x = Tensor(rng.normal(size=(6, 40)))
    out = enc(x).data
    assert out.shape == (6, 1024)
    h = 256
    norms = np.sqrt(sum(out[:, c * h:(c + 1) * h] ** 2 for c in range(4)))
    assert np.abs(norms - 1.0).max() < 1e-6


def test_encoder_zero_everything_is_zero():
    rng = np.random.default_rng(18)
    enc = RealToQuatEncoder(5, 8, "tanh", normalized=True, rng=rng, dtype=np.float64)
    enc.dense.weight.data[:] = 0.0
    enc.dense.bias.data[:] = 0.0
    out = enc(Tensor(np.ones((3, 5)))).data
    assert np.array_equal(out, np.zeros((3, 8)))


@pytest.mark.parametrize("a", [0.1, 1.0, 5.0])
def test_encoder_equal_components_normalize_to_half(a):
    rng = np.random.default_rng(19)
    enc = RealToQuatEncoder(1, 4, "tanh", normalized=True, rng=rng, dtype=np.float64)
    enc.dense.weight.data[:] = 1.0  # pre-activation quaternion (a, a, a, a)
    enc.dense.bias.data[:] = 0.0
    out = enc(Tensor(np.array([[a]]))).data[0]
    assert np.abs(out - 0.5).max() < 1e-6


def test_encoder_gradients_both_variants():
    rng = np.random.default_rng(20)
    x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    for normalized in (False, True):
        enc = RealToQuatEncoder(5, 8, "tanh", normalized=normalized, rng=rng, dtype=np.float64)
        errs = gradient_check(
            lambda: enc(x).sum(),
            enc.named_parameters() + [("x", x)],
        )
        assert max(errs.values()) < 1e-6, f"normalized={normalized}"


def test_encoder_rejects_bad_config():
    rng = np.random.default_rng(21)
    with pytest.raises(ConfigError):
        RealToQuatEncoder(5, 10, "tanh", normalized=True, rng=rng)
    with pytest.raises(ConfigError):
        RealToQuatEncoder(5, 8, "softsign", normalized=True, rng=rng)
