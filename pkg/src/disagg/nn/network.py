"""Layer composition, MSE objective, and parameter bookkeeping."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, NumericError


def _check_finite(arr, layer_name, stage):
    # One reduction pass: the sum is non-finite iff any element is (large
    # nets make a full isfinite scan per op noticeably expensive).
    if not np.isfinite(np.sum(arr)):
        raise NumericError(f"non-finite values after {stage} of layer {layer_name!r}")


class Network:
    """An ordered stack of layers trained against mean squared error.

    `output_kind` is "sequence" for per-timestep power outputs or
    "triple" for rectangle regressors.  When a sequence output is
    shorter than its target window (valid convolutions eat the edges),
    the target is compared against its centre crop and `output_offset`
    records how many samples each edge loses, so disaggregation can
    place outputs at their true absolute positions.
    """

    def __init__(self, layers, window_width, output_kind="sequence", output_offset=0):
        self.layers = list(layers)
        seen = set()
        for layer in self.layers:
            if layer.name in seen:
                raise DimensionError(f"duplicate layer name {layer.name!r}")
            seen.add(layer.name)
        self.window_width = window_width
        self.output_kind = output_kind
        self.output_offset = output_offset

    # -- forward / backward -------------------------------------------------

    def forward(self, x):
        """Pure forward pass; safe to call concurrently on frozen params."""
        y = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            y = layer.forward(y)
            _check_finite(y, layer.name, "forward")
        return y

    def loss_and_gradients(self, x, target):
        """MSE loss (mean over batch and elements) and parameter gradients."""
        y = np.asarray(x, dtype=np.float64)
        caches = []
        for layer in self.layers:
            y, cache = layer.forward_cached(y)
            _check_finite(y, layer.name, "forward")
            caches.append(cache)

        target = self.align_target(np.asarray(target, dtype=np.float64), y.shape)
        diff = y - target
        loss = float(np.mean(diff * diff))
        grad = (2.0 / diff.size) * diff

        grads = {}
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            grad, layer_grads = layer.backward(grad, cache)
            _check_finite(grad, layer.name, "backward")
            for key, g in layer_grads.items():
                _check_finite(g, layer.name, "backward")
                grads[f"{layer.name}/{key}"] = g
        return loss, grads

    def align_target(self, target, output_shape):
        """Centre-crop sequence targets when the network output is shorter."""
        if self.output_kind != "sequence" or target.shape == tuple(output_shape):
            return target
        out_len = output_shape[-1]
        excess = target.shape[-1] - out_len
        if excess < 0 or excess % 2 != 0:
            raise DimensionError(
                f"target length {target.shape[-1]} incompatible with output {out_len}")
        lo = excess // 2
        return target[..., lo : lo + out_len]

    # -- parameter access ---------------------------------------------------

    def parameters(self):
        """Flat dict of live parameter arrays, keyed 'layer/param'."""
        out = {}
        for layer in self.layers:
            for key, value in layer.params.items():
                out[f"{layer.name}/{key}"] = value
        return out

    def parameter_count(self) -> int:
        return sum(v.size for v in self.parameters().values())

    def load_parameters(self, values):
        """Overwrite parameters in place; reject any shape mismatch."""
        params = self.parameters()
        missing = set(params) - set(values)
        extra = set(values) - set(params)
        if missing or extra:
            raise DimensionError(
                f"parameter name mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for key, current in params.items():
            incoming = np.asarray(values[key], dtype=np.float64)
            if incoming.shape != current.shape:
                raise DimensionError(
                    f"shape mismatch for {key}: checkpoint {incoming.shape} "
                    f"vs network {current.shape}")
            current[...] = incoming

    def describe(self):
        return [dict(layer.describe(), name=layer.name) for layer in self.layers]


def mse(prediction, target) -> float:
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    diff = prediction - target
    return float(np.mean(diff * diff))
