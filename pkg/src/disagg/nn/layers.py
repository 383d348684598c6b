"""Trainable layers with hand-written forward and backward passes.

All layers operate on float64 arrays with a leading batch axis.
Sequence layers use (batch, time, channels).  Forward passes are pure
functions of the input and the layer's parameters; caches needed by the
backward pass are returned explicitly rather than stored on the layer,
so frozen networks can run forward from multiple threads.

Backward passes return (grad_input, grad_params) where grad_params is
keyed like the layer's `params` dict.  Gradients are of the scalar loss
with respect to each tensor, accumulated over batch and time.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError

ACTIVATIONS = ("linear", "relu", "tanh")


def glorot_uniform(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def small_uniform(rng, shape, scale=0.08):
    return rng.uniform(-scale, scale, size=shape)


def _apply_activation(kind, z):
    if kind == "linear":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    raise DimensionError(f"unknown activation {kind!r}")


def _activation_grad(kind, z, y, dy):
    """dL/dz given dL/dy, using pre-activation z and output y."""
    if kind == "linear":
        return dy
    if kind == "relu":
        return dy * (z > 0.0)
    if kind == "tanh":
        return dy * (1.0 - y * y)
    raise DimensionError(f"unknown activation {kind!r}")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Dense:
    """Fully connected layer applied along the last axis.

    Accepts any number of leading axes, so the same layer serves both
    flat feature vectors (batch, features) and per-timestep application
    on sequences (batch, time, features).
    """

    def __init__(self, name, input_dim, output_dim, activation="linear", rng=None):
        if activation not in ACTIVATIONS:
            raise DimensionError(f"{name}: unsupported activation {activation!r}")
        self.name = name
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.activation = activation
        rng = rng or np.random.default_rng(0)
        self.params = {
            "weights": glorot_uniform(rng, (input_dim, output_dim), input_dim, output_dim),
            "bias": np.zeros(output_dim),
        }

    def describe(self):
        return {"type": "dense", "units": self.output_dim, "activation": self.activation}

    def forward(self, x):
        return self.forward_cached(x)[0]

    def forward_cached(self, x):
        if x.shape[-1] != self.input_dim:
            raise DimensionError(
                f"{self.name}: expected last dim {self.input_dim}, got {x.shape[-1]}")
        z = x @ self.params["weights"] + self.params["bias"]
        y = _apply_activation(self.activation, z)
        return y, (x, z, y)

    def backward(self, dy, cache):
        x, z, y = cache
        dz = _activation_grad(self.activation, z, y, dy)
        flat_x = x.reshape(-1, self.input_dim)
        flat_dz = dz.reshape(-1, self.output_dim)
        grads = {
            "weights": flat_x.T @ flat_dz,
            "bias": flat_dz.sum(axis=0),
        }
        dx = dz @ self.params["weights"].T
        return dx, grads


class Conv1D:
    """1D convolution over the time axis (cross-correlation, no kernel flip).

    Input (batch, time, in_channels) -> (batch, out_time, filters).
    Border mode `valid` shortens the output; `same` (stride 1 only) pads
    filter_size-1 zeros split left/right, with the extra zero on the
    right when the total is odd.
    """

    def __init__(self, name, in_channels, num_filters, filter_size, stride=1,
                 border="valid", activation="linear", rng=None):
        if border not in ("valid", "same"):
            raise DimensionError(f"{name}: unknown border mode {border!r}")
        if border == "same" and stride != 1:
            raise DimensionError(f"{name}: border 'same' requires stride 1")
        if activation not in ACTIVATIONS:
            raise DimensionError(f"{name}: unsupported activation {activation!r}")
        self.name = name
        self.in_channels = in_channels
        self.num_filters = num_filters
        self.filter_size = filter_size
        self.stride = stride
        self.border = border
        self.activation = activation
        rng = rng or np.random.default_rng(0)
        fan_in = filter_size * in_channels
        self.params = {
            "weights": glorot_uniform(rng, (filter_size, in_channels, num_filters),
                                      fan_in, num_filters),
            "bias": np.zeros(num_filters),
        }

    def describe(self):
        return {"type": "conv1d", "filter_size": self.filter_size, "stride": self.stride,
                "filters": self.num_filters, "border": self.border,
                "activation": self.activation}

    def output_length(self, input_length):
        if self.border == "same":
            return input_length
        return (input_length - self.filter_size) // self.stride + 1

    def _pads(self):
        if self.border == "valid":
            return 0, 0
        total = self.filter_size - 1
        left = total // 2
        return left, total - left

    def forward(self, x):
        return self.forward_cached(x)[0]

    def forward_cached(self, x):
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise DimensionError(
                f"{self.name}: expected (batch, time, {self.in_channels}), got {x.shape}")
        left, right = self._pads()
        x_pad = np.pad(x, ((0, 0), (left, right), (0, 0))) if left or right else x
        if x_pad.shape[1] < self.filter_size:
            raise DimensionError(
                f"{self.name}: input length {x.shape[1]} shorter than filter "
                f"{self.filter_size}")
        # windows[b, t, c, j] = x_pad[b, t*stride + j, c]
        windows = np.lib.stride_tricks.sliding_window_view(x_pad, self.filter_size, axis=1)
        windows = windows[:, :: self.stride]
        z = np.einsum("btcj,jcf->btf", windows, self.params["weights"], optimize=True)
        z += self.params["bias"]
        y = _apply_activation(self.activation, z)
        return y, (x.shape, windows, z, y)

    def backward(self, dy, cache):
        x_shape, windows, z, y = cache
        dz = _activation_grad(self.activation, z, y, dy)
        grads = {
            "weights": np.einsum("btcj,btf->jcf", windows, dz, optimize=True),
            "bias": dz.sum(axis=(0, 1)),
        }
        left, right = self._pads()
        batch, time, _ = x_shape
        out_len = dz.shape[1]
        dx_pad = np.zeros((batch, time + left + right, self.in_channels))
        weights = self.params["weights"]
        for j in range(self.filter_size):
            # output step t consumed x_pad[t*stride + j]
            dx_pad[:, j : j + out_len * self.stride : self.stride] += dz @ weights[j].T
        dx = dx_pad[:, left : left + time] if (left or right) else dx_pad
        return dx, grads


class LSTM:
    """Peephole LSTM over (batch, time, input) returning all hidden states.

    Gates follow the usual convention: input and forget gates see the
    previous cell state through elementwise peephole weights, the output
    gate sees the current cell state.  Initial hidden and cell states
    are zero.  `truncate` bounds how many steps gradients flow through
    the recurrence: the backward chain is cut at block boundaries of
    that many steps counted from the sequence end.
    """

    GATES = ("in", "forget", "cell", "out")  # pre-activation slot order

    def __init__(self, name, input_dim, hidden_size, truncate=500, rng=None):
        self.name = name
        self.input_dim = input_dim
        self.hidden_size = hidden_size
        self.truncate = truncate
        rng = rng or np.random.default_rng(0)
        n = hidden_size
        self.params = {
            "w_input": glorot_uniform(rng, (input_dim, 4 * n), input_dim, n),
            "w_hidden": small_uniform(rng, (n, 4 * n)),
            "bias": np.zeros(4 * n),
            "peep_in": small_uniform(rng, (n,)),
            "peep_forget": small_uniform(rng, (n,)),
            "peep_out": small_uniform(rng, (n,)),
        }

    def describe(self):
        return {"type": "lstm", "units": self.hidden_size, "peepholes": True}

    def forward(self, x):
        return self.forward_cached(x)[0]

    def forward_cached(self, x):
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise DimensionError(
                f"{self.name}: expected (batch, time, {self.input_dim}), got {x.shape}")
        batch, time, _ = x.shape
        n = self.hidden_size
        p = self.params
        pre_all = x @ p["w_input"] + p["bias"]  # hoisted input contribution

        h = np.zeros((batch, time, n))
        c = np.zeros((batch, time, n))
        gates = np.zeros((batch, time, 4 * n))
        h_prev = np.zeros((batch, n))
        c_prev = np.zeros((batch, n))
        for t in range(time):
            pre = pre_all[:, t] + h_prev @ p["w_hidden"]
            pre[:, 0:n] += c_prev * p["peep_in"]
            pre[:, n : 2 * n] += c_prev * p["peep_forget"]
            i_g = _sigmoid(pre[:, 0:n])
            f_g = _sigmoid(pre[:, n : 2 * n])
            g_g = np.tanh(pre[:, 2 * n : 3 * n])
            c_t = f_g * c_prev + i_g * g_g
            pre_o = pre[:, 3 * n :] + c_t * p["peep_out"]
            o_g = _sigmoid(pre_o)
            h_t = o_g * np.tanh(c_t)
            gates[:, t, 0:n] = i_g
            gates[:, t, n : 2 * n] = f_g
            gates[:, t, 2 * n : 3 * n] = g_g
            gates[:, t, 3 * n :] = o_g
            c[:, t] = c_t
            h[:, t] = h_t
            h_prev, c_prev = h_t, c_t
        return h, (x, h, c, gates)

    def backward(self, dh_out, cache):
        x, h, c, gates = cache
        batch, time, _ = x.shape
        n = self.hidden_size
        p = self.params
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        d_pre_all = np.zeros((batch, time, 4 * n))

        dh_carry = np.zeros((batch, n))
        dc_carry = np.zeros((batch, n))
        for t in range(time - 1, -1, -1):
            i_g = gates[:, t, 0:n]
            f_g = gates[:, t, n : 2 * n]
            g_g = gates[:, t, 2 * n : 3 * n]
            o_g = gates[:, t, 3 * n :]
            c_t = c[:, t]
            c_prev = c[:, t - 1] if t > 0 else np.zeros((batch, n))
            tc = np.tanh(c_t)

            dh = dh_out[:, t] + dh_carry
            do = dh * tc
            d_pre_o = do * o_g * (1.0 - o_g)
            dc = dh * o_g * (1.0 - tc * tc) + dc_carry + d_pre_o * p["peep_out"]
            di = dc * g_g
            df = dc * c_prev
            dg = dc * i_g
            d_pre_i = di * i_g * (1.0 - i_g)
            d_pre_f = df * f_g * (1.0 - f_g)
            d_pre_g = dg * (1.0 - g_g * g_g)

            d_pre = d_pre_all[:, t]
            d_pre[:, 0:n] = d_pre_i
            d_pre[:, n : 2 * n] = d_pre_f
            d_pre[:, 2 * n : 3 * n] = d_pre_g
            d_pre[:, 3 * n :] = d_pre_o

            grads["peep_in"] += (d_pre_i * c_prev).sum(axis=0)
            grads["peep_forget"] += (d_pre_f * c_prev).sum(axis=0)
            grads["peep_out"] += (d_pre_o * c_t).sum(axis=0)
            if t > 0:
                grads["w_hidden"] += h[:, t - 1].T @ d_pre

            dc_carry = dc * f_g + d_pre_i * p["peep_in"] + d_pre_f * p["peep_forget"]
            dh_carry = d_pre @ p["w_hidden"].T
            if (time - t) % self.truncate == 0:
                # Block boundary: stop the gradient flowing further back.
                dh_carry = np.zeros((batch, n))
                dc_carry = np.zeros((batch, n))

        flat_x = x.reshape(-1, self.input_dim)
        flat_dpre = d_pre_all.reshape(-1, 4 * n)
        grads["w_input"] = flat_x.T @ flat_dpre
        grads["bias"] = flat_dpre.sum(axis=0)
        dx = d_pre_all @ p["w_input"].T
        return dx, grads


class Bidirectional:
    """Runs one LSTM forwards and one backwards in time, concatenating
    their per-timestep outputs (feature width doubles)."""

    def __init__(self, name, layer_fwd: LSTM, layer_bwd: LSTM):
        if layer_fwd.hidden_size != layer_bwd.hidden_size:
            raise DimensionError(f"{name}: halves must share hidden size")
        self.name = name
        self.fwd = layer_fwd
        self.bwd = layer_bwd

    @property
    def hidden_size(self):
        return self.fwd.hidden_size

    @property
    def params(self):
        merged = {f"fwd.{k}": v for k, v in self.fwd.params.items()}
        merged.update({f"bwd.{k}": v for k, v in self.bwd.params.items()})
        return merged

    def describe(self):
        return {"type": "bidirectional_lstm", "units": self.hidden_size, "peepholes": True,
                "merge": "concat"}

    def forward(self, x):
        return self.forward_cached(x)[0]

    def forward_cached(self, x):
        y_f, cache_f = self.fwd.forward_cached(x)
        y_b_rev, cache_b = self.bwd.forward_cached(x[:, ::-1])
        y = np.concatenate([y_f, y_b_rev[:, ::-1]], axis=2)
        return y, (cache_f, cache_b)

    def backward(self, dy, cache):
        cache_f, cache_b = cache
        n = self.hidden_size
        dx_f, grads_f = self.fwd.backward(dy[:, :, :n], cache_f)
        dx_b, grads_b = self.bwd.backward(dy[:, ::-1, n:], cache_b)
        grads = {f"fwd.{k}": v for k, v in grads_f.items()}
        grads.update({f"bwd.{k}": v for k, v in grads_b.items()})
        return dx_f + dx_b[:, ::-1], grads


class Flatten:
    """(batch, time, channels) -> (batch, time*channels)."""

    def __init__(self, name):
        self.name = name
        self.params = {}

    def describe(self):
        return {"type": "flatten"}

    def forward(self, x):
        return self.forward_cached(x)[0]

    def forward_cached(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), {}


class Reshape:
    """Reshape each sample to a fixed target shape (batch axis kept)."""

    def __init__(self, name, target_shape):
        self.name = name
        self.target_shape = tuple(target_shape)
        self.params = {}

    def describe(self):
        return {"type": "reshape", "shape": self.target_shape}

    def forward(self, x):
        return self.forward_cached(x)[0]

    def forward_cached(self, x):
        try:
            y = x.reshape((x.shape[0],) + self.target_shape)
        except ValueError:
            raise DimensionError(
                f"{self.name}: cannot reshape {x.shape[1:]} to {self.target_shape}") from None
        return y, x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), {}
