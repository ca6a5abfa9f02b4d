"""Recurrent cells and the full sequence-labeling model.

The quaternion LSTM cell applies the gate recurrences

    f_t = sigmoid(W_f x_t + R_f h_{t-1} + b_f)
    i_t = sigmoid(W_i x_t + R_i h_{t-1} + b_i)
    c_t = f_t * c_{t-1} + i_t * tanh(W_c x_t + R_c h_{t-1} + b_c)
    o_t = sigmoid(W_o x_t + R_o h_{t-1} + b_o)
    h_t = o_t * tanh(c_t)

where W and R are quaternion-weighted linear maps (Hamilton product against
the input, realised as structured real matmuls), the activations are split
(componentwise), and * is the componentwise product. The real-valued
baseline cell runs the identical recurrence with ordinary dense maps, so
one driver handles both.

Sequences are time-major (T, B, D) with a boolean validity mask; states
carry across padded frames unchanged and padded outputs are zeroed, so
appending padding to a batch never changes valid-frame results.

Bidirectional layers run a second cell over the reversed sequence and merge
by componentwise sum (concatenation available but non-default).
"""

from __future__ import annotations

import numpy as np

from qnn import autograd
from qnn.autograd import Tensor, add_bias, concat, matmul, mul, narrow, reshape, reverse_time, sigmoid, stack0, tanh
from qnn.config import ModelConfig
from qnn.data import UtteranceBatch, naive_quat_compose
from qnn.errors import ConfigError, DimensionError
from qnn.layers import QuatLinear, RealLinear, RealToQuatEncoder, quaternion_dropout

GATES = ("f", "i", "c", "o")


class QLSTMCell:
    """One direction of a quaternion LSTM layer.

    Weight blocks are QuatLinear maps without internal bias; each gate has a
    single zero-initialised bias vector of the real hidden width.
    """

    def __init__(self, in_q: int, hidden_q: int, rng: np.random.Generator, dtype=np.float32):
        self.in_q = in_q
        self.hidden_q = hidden_q
        self.input_size = 4 * in_q
        self.hidden_size = 4 * hidden_q
        self.w = {g: QuatLinear(in_q, hidden_q, rng, dtype=dtype, bias=False) for g in GATES}
        self.r = {g: QuatLinear(hidden_q, hidden_q, rng, dtype=dtype, bias=False) for g in GATES}
        self.b = {g: Tensor(np.zeros(4 * hidden_q, dtype=dtype), requires_grad=True) for g in GATES}

    def prepared(self):
        wx = concat([self.w[g].weight_matrix() for g in GATES], axis=1)
        wh = concat([self.r[g].weight_matrix() for g in GATES], axis=1)
        bias = concat([self.b[g] for g in GATES], axis=0)
        return wx, wh, bias

    def named_parameters(self, prefix: str = ""):
        out = []
        for g in GATES:
            out.extend(self.w[g].named_parameters(f"{prefix}w_{g}."))
        for g in GATES:
            out.extend(self.r[g].named_parameters(f"{prefix}r_{g}."))
        for g in GATES:
            out.append((f"{prefix}b_{g}", self.b[g]))
        return out

    def weight_scalar_count(self) -> int:
        return sum(self.w[g].weight_scalar_count() + self.r[g].weight_scalar_count() for g in GATES)


class RealLSTMCell:
    """One direction of the real-valued baseline LSTM layer."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator, dtype=np.float32):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.w = {g: RealLinear(input_size, hidden_size, rng, dtype=dtype, bias=False) for g in GATES}
        self.r = {g: RealLinear(hidden_size, hidden_size, rng, dtype=dtype, bias=False) for g in GATES}
        self.b = {g: Tensor(np.zeros(hidden_size, dtype=dtype), requires_grad=True) for g in GATES}

    def prepared(self):
        wx = concat([self.w[g].weight_matrix() for g in GATES], axis=1)
        wh = concat([self.r[g].weight_matrix() for g in GATES], axis=1)
        bias = concat([self.b[g] for g in GATES], axis=0)
        return wx, wh, bias

    def named_parameters(self, prefix: str = ""):
        out = []
        for g in GATES:
            out.extend(self.w[g].named_parameters(f"{prefix}w_{g}."))
        for g in GATES:
            out.extend(self.r[g].named_parameters(f"{prefix}r_{g}."))
        for g in GATES:
            out.append((f"{prefix}b_{g}", self.b[g]))
        return out

    def weight_scalar_count(self) -> int:
        return sum(self.w[g].weight_scalar_count() + self.r[g].weight_scalar_count() for g in GATES)


def lstm_step(gates: Tensor, c_prev: Tensor, hidden: int):
    """Shared gate arithmetic: gates is the (B, 4*hidden) pre-activation
    block [f | i | c | o]; returns (h_t, c_t)."""
    f = sigmoid(narrow(gates, 1, 0, hidden))
    i = sigmoid(narrow(gates, 1, hidden, hidden))
    g = tanh(narrow(gates, 1, 2 * hidden, hidden))
    o = sigmoid(narrow(gates, 1, 3 * hidden, hidden))
    c_t = mul(f, c_prev) + mul(i, g)
    h_t = mul(o, tanh(c_t))
    return h_t, c_t


def cell_step(cell, x_t: Tensor, h_prev: Tensor, c_prev: Tensor):
    """One recurrence step on a (B, input) frame; returns (h_t, c_t)."""
    if x_t.shape[-1] != cell.input_size:
        raise DimensionError(f"frame width {x_t.shape[-1]} does not match cell input {cell.input_size}")
    if h_prev.shape != c_prev.shape or h_prev.shape[-1] != cell.hidden_size:
        raise DimensionError(
            f"state widths {h_prev.shape}/{c_prev.shape} do not match cell hidden {cell.hidden_size}"
        )
    wx, wh, bias = cell.prepared()
    pre = add_bias(matmul(x_t, wx), bias) + matmul(h_prev, wh)
    return lstm_step(pre, c_prev, cell.hidden_size)


def run_direction(cell, seq: Tensor, mask: np.ndarray) -> Tensor:
    """Unroll one cell over a time-major sequence.

    mask is (T, B) boolean; state carries through masked frames unchanged
    and masked outputs are zero. Returns (T, B, hidden).
    """
    t_len, batch, width = seq.shape
    if width != cell.input_size:
        raise DimensionError(f"sequence width {width} does not match cell input {cell.input_size}")
    if mask.shape != (t_len, batch):
        raise DimensionError(f"mask shape {mask.shape} does not match sequence {(t_len, batch)}")
    hidden = cell.hidden_size
    dtype = seq.data.dtype
    wx, wh, bias = cell.prepared()

    # input-side projections for every frame in one matmul
    proj = add_bias(matmul(reshape(seq, (t_len * batch, width)), wx), bias)
    proj = reshape(proj, (t_len, batch, 4 * hidden))

    zeros = Tensor(np.zeros((batch, hidden), dtype=dtype))
    h, c = zeros, zeros
    outs = []
    for t in range(t_len):
        pre = reshape(narrow(proj, 0, t, 1), (batch, 4 * hidden)) + matmul(h, wh)
        h_new, c_new = lstm_step(pre, c, hidden)
        m = mask[t]
        if m.all():
            h, c = h_new, c_new
            outs.append(h)
        else:
            keep = Tensor(np.broadcast_to(m[:, None], (batch, hidden)).astype(dtype))
            drop = Tensor(np.broadcast_to(~m[:, None], (batch, hidden)).astype(dtype))
            h = mul(h_new, keep) + mul(h, drop)
            c = mul(c_new, keep) + mul(c, drop)
            outs.append(mul(h, keep))
    return stack0(outs)


class BiRecurrentLayer:
    """Forward and backward cells over the same sequence, merged per step."""

    def __init__(self, forward_cell, backward_cell, merge: str = "sum"):
        if merge not in ("sum", "concat"):
            raise ConfigError(f"merge must be 'sum' or 'concat', got '{merge}'")
        if forward_cell.hidden_size != backward_cell.hidden_size:
            raise ConfigError("direction cells must share the hidden width")
        self.fwd = forward_cell
        self.bwd = backward_cell
        self.merge = merge
        self.output_size = forward_cell.hidden_size * (2 if merge == "concat" else 1)

    def forward(self, seq: Tensor, mask: np.ndarray) -> Tensor:
        out_f = run_direction(self.fwd, seq, mask)
        out_b = reverse_time(run_direction(self.bwd, reverse_time(seq), mask[::-1]))
        if self.merge == "sum":
            return out_f + out_b
        return concat([out_f, out_b], axis=2)

    def named_parameters(self, prefix: str = ""):
        return self.fwd.named_parameters(prefix + "fwd.") + self.bwd.named_parameters(prefix + "bwd.")

    def weight_scalar_count(self) -> int:
        return self.fwd.weight_scalar_count() + self.bwd.weight_scalar_count()


class IdentityFrontEnd:
    """Pass features through unchanged (real baseline input)."""

    def __init__(self, input_dim: int, dtype=np.float32):
        self.output_dim = input_dim
        self.dtype = dtype

    def forward(self, features: np.ndarray) -> Tensor:
        return Tensor(features.astype(self.dtype, copy=False))

    def named_parameters(self, prefix: str = ""):
        return []


class NaiveQuatFrontEnd:
    """Group four consecutive feature coefficients into one quaternion.

    Pure reindexing of the input (no parameters): frame coefficients
    (4k, 4k+1, 4k+2, 4k+3) become quaternion k, repacked to the
    quarter-block layout. Widths not divisible by 4 are zero-padded.
    """

    def __init__(self, input_dim: int, dtype=np.float32):
        self.input_dim = input_dim
        self.pad = (-input_dim) % 4
        self.output_dim = input_dim + self.pad
        self.dtype = dtype

    def forward(self, features: np.ndarray) -> Tensor:
        return Tensor(naive_quat_compose(features).astype(self.dtype, copy=False))

    def named_parameters(self, prefix: str = ""):
        return []


class AcousticModel:
    """Front end -> (bi)recurrent stack -> real dense output, framewise.

    Dropout (whole quaternions on the quaternion path, per component on the
    real path) is applied to the front-end output and to every stack layer
    output, never to the logits.
    """

    def __init__(self, front_end, stack, output: RealLinear, dropout: float,
                 dropout_rng: np.random.Generator, quaternion_dropout_masks: bool):
        width = front_end.output_dim
        for idx, layer in enumerate(stack):
            if layer.fwd.input_size != width:
                raise ConfigError(
                    f"stack layer {idx} expects input width {layer.fwd.input_size}, got {width}"
                )
            width = layer.output_size
        if output.n_in != width:
            raise ConfigError(f"output layer expects width {output.n_in}, stack provides {width}")
        if not 0.0 <= dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {dropout}")
        self.front_end = front_end
        self.stack = list(stack)
        self.output = output
        self.dropout = dropout
        self.dropout_rng = dropout_rng
        self.quaternion_dropout_masks = quaternion_dropout_masks

    def _drop(self, x: Tensor, training: bool) -> Tensor:
        return quaternion_dropout(
            x, self.dropout, training=training, rng=self.dropout_rng,
            per_component=not self.quaternion_dropout_masks,
        )

    def forward(self, batch: UtteranceBatch, training: bool = False) -> Tensor:
        """Logits (T, B, C); padded frames carry meaningless values and must
        be excluded from losses/metrics via the batch mask."""
        x = self.front_end.forward(batch.features)
        x = self._drop(x, training)
        for layer in self.stack:
            x = self._drop(layer.forward(x, batch.mask), training)
        return self.output(x)

    def named_parameters(self):
        out = list(self.front_end.named_parameters("front_end."))
        for idx, layer in enumerate(self.stack):
            out.extend(layer.named_parameters(f"stack.{idx}."))
        out.extend(self.output.named_parameters("output."))
        return out

    def stack_weight_scalars(self) -> int:
        return sum(layer.weight_scalar_count() for layer in self.stack)


def count_params(model: AcousticModel) -> int:
    return sum(p.size for _, p in model.named_parameters())


def param_breakdown(model: AcousticModel) -> dict:
    """Per-module totals plus the bias-free stack count used for ratios."""
    front = sum(p.size for _, p in model.front_end.named_parameters(""))
    stack = sum(p.size for n, p in model.named_parameters() if n.startswith("stack."))
    output = sum(p.size for _, p in model.output.named_parameters(""))
    return {
        "front_end": front,
        "stack": stack,
        "output": output,
        "total": front + stack + output,
        "stack_weight_scalars": model.stack_weight_scalars(),
    }


def symbolic_param_counts(config: ModelConfig) -> dict:
    """Parameter counts computed from the architecture formulas alone,
    without allocating any buffers. Matches param_breakdown(build_model(c))
    exactly; used by the params command so large configs stay cheap."""
    config.validate()
    dim = config.input_dim
    if config.front_end in ("r2h-norm", "r2h"):
        front = dim * config.r2h_size + config.r2h_size
        width = config.r2h_size
    elif config.front_end == "naive-quat":
        front = 0
        width = 4 * ((dim + 3) // 4)
    else:
        front = 0
        width = dim
    if config.stack_kind == "qlstm" and width % 4 != 0:
        raise ConfigError(
            f"qlstm stack needs an input width divisible by 4, front end provides {width}"
        )
    stack = 0
    stack_weights = 0
    hidden = config.hidden_real_width
    for _ in range(config.depth):
        if config.stack_kind == "qlstm":
            per_dir_weights = 4 * (width * hidden // 4 + hidden * hidden // 4)
        else:
            per_dir_weights = 4 * (width * hidden + hidden * hidden)
        per_dir = per_dir_weights + 4 * hidden
        stack += 2 * per_dir
        stack_weights += 2 * per_dir_weights
        width = hidden
    output = width * config.classes + config.classes
    return {
        "front_end": front,
        "stack": stack,
        "output": output,
        "total": front + stack + output,
        "stack_weight_scalars": stack_weights,
    }


def build_model(config: ModelConfig) -> AcousticModel:
    """Construct the model described by a validated config.

    Initialisation and dropout use generators spawned deterministically
    from config.seed, so identical configs give identical models.
    """
    config.validate()
    dtype = np.float32 if config.precision == "f32" else np.float64
    ss_init, ss_drop = np.random.SeedSequence(config.seed).spawn(2)
    rng = np.random.default_rng(ss_init)
    dropout_rng = np.random.default_rng(ss_drop)

    if config.front_end == "identity":
        front = IdentityFrontEnd(config.input_dim, dtype=dtype)
    elif config.front_end == "naive-quat":
        front = NaiveQuatFrontEnd(config.input_dim, dtype=dtype)
    else:
        front = RealToQuatEncoder(
            config.input_dim,
            config.r2h_size,
            config.r2h_activation,
            normalized=(config.front_end == "r2h-norm"),
            rng=rng,
            dtype=dtype,
        )

    stack = []
    width = front.output_dim
    if config.stack_kind == "qlstm" and width % 4 != 0:
        raise ConfigError(
            f"qlstm stack needs an input width divisible by 4, front end provides {width}"
        )
    for _ in range(config.depth):
        if config.stack_kind == "qlstm":
            fwd = QLSTMCell(width // 4, config.hidden_real_width // 4, rng, dtype=dtype)
            bwd = QLSTMCell(width // 4, config.hidden_real_width // 4, rng, dtype=dtype)
        else:
            fwd = RealLSTMCell(width, config.hidden_real_width, rng, dtype=dtype)
            bwd = RealLSTMCell(width, config.hidden_real_width, rng, dtype=dtype)
        layer = BiRecurrentLayer(fwd, bwd, merge="sum")
        stack.append(layer)
        width = layer.output_size

    output = RealLinear(width, config.classes, rng, dtype=dtype)
    return AcousticModel(
        front,
        stack,
        output,
        dropout=config.dropout,
        dropout_rng=dropout_rng,
        quaternion_dropout_masks=(config.stack_kind == "qlstm"),
    )
