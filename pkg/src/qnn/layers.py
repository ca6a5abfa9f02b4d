"""Quaternion-valued layers on top of the real autograd.

A vector of H quaternions lives in a real vector of length 4H using the
quarter-block convention: entries [0, H) are the r parts, then the x, y and
z parts. A quaternion-weighted dense layer multiplies by a structured real
matrix built from four component matrices with the sign pattern

    [ Wr -Wx -Wy -Wz ]
    [ Wx  Wr -Wz  Wy ]
    [ Wy  Wz  Wr -Wx ]
    [ Wz -Wy  Wx  Wr ]

so each output quaternion is the sum over inputs of (weight quaternion)
Hamilton-multiplied by (input quaternion). Split activations apply a real
nonlinearity to every component independently.
"""

from __future__ import annotations

import numpy as np

from qnn import autograd
from qnn.autograd import Tensor, add_bias, concat, div, matmul, mul, narrow, neg, reshape, sqrt
from qnn.errors import ConfigError, DimensionError

ACTIVATIONS = {
    "sigmoid": autograd.sigmoid,
    "tanh": autograd.tanh,
    "hardtanh": autograd.hardtanh,
    "relu": autograd.relu,
}

NORM_EPS = 1e-12


def split_activation(kind: str, x: Tensor) -> Tensor:
    """Apply a real activation componentwise (layout-independent)."""
    try:
        fn = ACTIVATIONS[kind]
    except KeyError:
        raise ConfigError(f"unknown activation '{kind}', expected one of {sorted(ACTIVATIONS)}")
    return fn(x)


def chi4_init(fan_in: int, fan_out: int, rng: np.random.Generator, dtype=np.float32):
    """Quaternion weight sampler: four (fan_in, fan_out) component matrices.

    Magnitudes follow a chi distribution with 4 degrees of freedom scaled by
    sigma = 1/sqrt(2*(fan_in+fan_out)) (fans counted in quaternion units);
    directions are uniform unit purely-imaginary quaternions with a uniform
    angle in (-pi, pi). Biases are everywhere initialised to zero, not here.
    """
    if fan_in <= 0 or fan_out <= 0:
        raise ConfigError(f"fans must be positive, got ({fan_in}, {fan_out})")
    sigma = 1.0 / np.sqrt(2.0 * (fan_in + fan_out))
    shape = (fan_in, fan_out)
    modulus = sigma * np.sqrt((rng.standard_normal(size=(4,) + shape) ** 2).sum(axis=0))
    axis = rng.standard_normal(size=(3,) + shape)
    axis /= np.sqrt((axis**2).sum(axis=0)) + 1e-12
    theta = rng.uniform(-np.pi, np.pi, size=shape)
    w_r = modulus * np.cos(theta)
    s = modulus * np.sin(theta)
    return tuple((c).astype(dtype) for c in (w_r, s * axis[0], s * axis[1], s * axis[2]))


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def _apply_linear(x: Tensor, weight: Tensor, bias: Tensor | None, label: str) -> Tensor:
    d_in, d_out = weight.shape
    if x.shape[-1] != d_in:
        raise DimensionError(f"{label}: trailing dim {x.shape[-1]} does not match input width {d_in}")
    lead = x.shape[:-1]
    flat = x if x.data.ndim == 2 else reshape(x, (-1, d_in))
    out = matmul(flat, weight)
    if bias is not None:
        out = add_bias(out, bias)
    if x.data.ndim != 2:
        out = reshape(out, lead + (d_out,))
    return out


class QuatLinear:
    """Dense layer whose weights are quaternions (stored as four real matrices).

    Real parameter count is 4*in_q*out_q weights plus, optionally, a bias of
    4*out_q reals: exactly a quarter of the weights of a real dense layer
    with the same real input/output widths.
    """

    def __init__(self, in_q: int, out_q: int, rng: np.random.Generator, dtype=np.float32, bias: bool = True):
        if in_q <= 0 or out_q <= 0:
            raise ConfigError(f"quaternion counts must be positive, got ({in_q}, {out_q})")
        self.in_q = in_q
        self.out_q = out_q
        w_r, w_x, w_y, w_z = chi4_init(in_q, out_q, rng, dtype=dtype)
        self.w_r = Tensor(w_r, requires_grad=True)
        self.w_x = Tensor(w_x, requires_grad=True)
        self.w_y = Tensor(w_y, requires_grad=True)
        self.w_z = Tensor(w_z, requires_grad=True)
        self.bias = Tensor(np.zeros(4 * out_q, dtype=dtype), requires_grad=True) if bias else None

    def weight_matrix(self) -> Tensor:
        """Composite (4*in_q, 4*out_q) real matrix; graph-connected to the
        four component matrices, build once per forward pass and reuse."""
        r, x, y, z = self.w_r, self.w_x, self.w_y, self.w_z
        cols = [
            concat([r, neg(x), neg(y), neg(z)], axis=0),
            concat([x, r, neg(z), y], axis=0),
            concat([y, z, r, neg(x)], axis=0),
            concat([z, neg(y), x, r], axis=0),
        ]
        return concat(cols, axis=1)

    def forward(self, x: Tensor, weight: Tensor | None = None) -> Tensor:
        if x.shape[-1] % 4 != 0:
            raise DimensionError(f"quaternion input width must be a multiple of 4, got {x.shape[-1]}")
        w = weight if weight is not None else self.weight_matrix()
        return _apply_linear(x, w, self.bias, "QuatLinear")

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def named_parameters(self, prefix: str = ""):
        out = [(prefix + "w_r", self.w_r), (prefix + "w_x", self.w_x),
               (prefix + "w_y", self.w_y), (prefix + "w_z", self.w_z)]
        if self.bias is not None:
            out.append((prefix + "bias", self.bias))
        return out

    def weight_scalar_count(self) -> int:
        return 4 * self.in_q * self.out_q


class RealLinear:
    """Plain affine map, used for the baseline LSTM and the output layer."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32, bias: bool = True):
        if n_in <= 0 or n_out <= 0:
            raise ConfigError(f"widths must be positive, got ({n_in}, {n_out})")
        self.n_in = n_in
        self.n_out = n_out
        self.weight = Tensor(glorot_uniform(n_in, n_out, rng, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True) if bias else None

    def weight_matrix(self) -> Tensor:
        return self.weight

    def forward(self, x: Tensor, weight: Tensor | None = None) -> Tensor:
        w = weight if weight is not None else self.weight
        return _apply_linear(x, w, self.bias, "RealLinear")

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def named_parameters(self, prefix: str = ""):
        out = [(prefix + "weight", self.weight)]
        if self.bias is not None:
            out.append((prefix + "bias", self.bias))
        return out

    def weight_scalar_count(self) -> int:
        return self.n_in * self.n_out


def quat_normalize(x: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Scale every quaternion in a quarter-block tensor to (near) unit norm.

    Divides each quaternion by (its norm + eps); quaternions with norm well
    above eps come out with |norm - 1| below 1e-6, the zero quaternion stays
    zero.
    """
    if eps <= 0:
        raise ConfigError("normalization eps must be > 0")
    width = x.shape[-1]
    if width % 4 != 0:
        raise DimensionError(f"quaternion tensor width must be a multiple of 4, got {width}")
    h = width // 4
    axis = x.data.ndim - 1
    blocks = [narrow(x, axis, c * h, h) for c in range(4)]
    sq = mul(blocks[0], blocks[0])
    for b in blocks[1:]:
        sq = sq + mul(b, b)
    denom = sqrt(sq) + eps
    return concat([div(b, denom) for b in blocks], axis=axis)


def quaternion_dropout(
    x: Tensor,
    p: float,
    training: bool,
    rng: np.random.Generator | None = None,
    per_component: bool = False,
) -> Tensor:
    """Inverted dropout that removes whole quaternions.

    In training, each quaternion (all four components together) is zeroed
    with probability p and survivors are scaled by 1/(1-p); in evaluation
    the input passes through untouched. per_component switches to ordinary
    real dropout for ablations and for the real-valued baseline.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("training-mode dropout needs a seeded generator")
    scale = 1.0 / (1.0 - p)
    if per_component:
        keep = rng.random(size=x.shape) >= p
        mask = keep.astype(x.data.dtype) * scale
    else:
        width = x.shape[-1]
        if width % 4 != 0:
            raise DimensionError(f"quaternion dropout needs width divisible by 4, got {width}")
        h = width // 4
        keep = rng.random(size=x.shape[:-1] + (h,)) >= p
        mask = np.concatenate([keep] * 4, axis=-1).astype(x.data.dtype) * scale
    return mul(x, Tensor(mask))


class RealToQuatEncoder:
    """Front end mapping real feature vectors to (optionally unit) quaternions.

    A real dense layer produces 4H pre-activations, a split activation is
    applied, and with normalized=True each of the H output quaternions is
    rescaled to unit norm. The output follows the quarter-block layout.
    """

    def __init__(
        self,
        input_dim: int,
        width: int,
        activation: str,
        normalized: bool,
        rng: np.random.Generator,
        dtype=np.float32,
        eps: float = NORM_EPS,
    ):
        if width % 4 != 0:
            raise ConfigError(f"encoder width must be a multiple of 4, got {width}")
        if activation not in ("tanh", "hardtanh", "relu"):
            raise ConfigError(f"encoder activation must be tanh/hardtanh/relu, got '{activation}'")
        self.dense = RealLinear(input_dim, width, rng, dtype=dtype)
        self.activation = activation
        self.normalized = normalized
        self.eps = eps
        self.output_dim = width

    def forward(self, x) -> Tensor:
        if isinstance(x, np.ndarray):
            x = Tensor(x.astype(self.dense.weight.dtype, copy=False))
        out = split_activation(self.activation, self.dense(x))
        if self.normalized:
            out = quat_normalize(out, eps=self.eps)
        return out

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def named_parameters(self, prefix: str = ""):
        return self.dense.named_parameters(prefix + "dense.")
