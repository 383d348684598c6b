"""The three trainable architectures and the shared training loop.

Each builder assembles a fixed layer stack around a target appliance's
window width:

* `build_lstm`    - conv front end, two bidirectional peephole LSTM
                    layers, per-timestep dense head; emits one power
                    sample per input sample.
* `build_dae`     - convolutional denoising autoencoder with a 128-unit
                    code layer; reconstructs the clean target appliance
                    power from the aggregate.  Two valid convolutions
                    trim 3 samples from each edge, so the output covers
                    the centre of the window.
* `build_rectangles` - conv front end plus a deep ReLU stack regressing
                    (start, end, mean power) of the first activation.

Layer widths default to the full-scale values; tests pass smaller ones
for gradient checking.  Update budgets and batch sizes default to the
full-scale training recipe and may be overridden for desk-scale runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .nn import (LSTM, Bidirectional, Conv1D, Dense, Flatten, NesterovSGD, Network,
                 Reshape, clip_gradients)
from .nn.optim import GRADIENT_CLIP_BOUND

KINDS = ("lstm", "dae", "rectangles")

UPDATE_BUDGETS = {"lstm": 10_000, "dae": 100_000, "rectangles": 300_000}

# 64 sequences per batch, except the largest recurrent nets where memory
# forced 16.
BATCH_SIZES = {"lstm": 16, "dae": 64, "rectangles": 64}

DEFAULT_LEARNING_RATE = 0.01
BPTT_TRUNCATE = 500


@dataclass(frozen=True)
class ArchitectureSpec:
    """Training recipe for one (appliance, architecture) pair."""

    kind: str
    window_width: int
    update_budget: int
    batch_size: int
    learning_rate: float = DEFAULT_LEARNING_RATE

    @classmethod
    def defaults(cls, kind: str, window_width: int, **overrides) -> "ArchitectureSpec":
        if kind not in KINDS:
            raise ConfigError(f"unknown architecture kind {kind!r}; choose from {KINDS}")
        base = {"update_budget": UPDATE_BUDGETS[kind], "batch_size": BATCH_SIZES[kind]}
        base.update(overrides)
        return cls(kind=kind, window_width=window_width, **base)


def build_network(kind: str, window_width: int, rng) -> Network:
    if kind == "lstm":
        return build_lstm(window_width, rng)
    if kind == "dae":
        return build_dae(window_width, rng)
    if kind == "rectangles":
        return build_rectangles(window_width, rng)
    raise ConfigError(f"unknown architecture kind {kind!r}; choose from {KINDS}")


def build_lstm(window_width: int, rng=None, conv_filters: int = 16,
               lstm_units: tuple[int, int] = (128, 256), dense_units: int = 128) -> Network:
    """Recurrent sequence-to-sequence net; output length equals input length."""
    if window_width <= 0:
        raise ConfigError("window_width must be positive")
    rng = rng or np.random.default_rng(0)
    u1, u2 = lstm_units
    layers = [
        Reshape("to_channels", (window_width, 1)),
        Conv1D("conv", 1, conv_filters, filter_size=4, stride=1, border="same",
               activation="linear", rng=rng),
        Bidirectional("bilstm1",
                      LSTM("fwd1", conv_filters, u1, truncate=BPTT_TRUNCATE, rng=rng),
                      LSTM("bwd1", conv_filters, u1, truncate=BPTT_TRUNCATE, rng=rng)),
        Bidirectional("bilstm2",
                      LSTM("fwd2", 2 * u1, u2, truncate=BPTT_TRUNCATE, rng=rng),
                      LSTM("bwd2", 2 * u1, u2, truncate=BPTT_TRUNCATE, rng=rng)),
        Dense("dense", 2 * u2, dense_units, activation="tanh", rng=rng),
        Dense("head", dense_units, 1, activation="linear", rng=rng),
        Reshape("to_sequence", (window_width,)),
    ]
    return Network(layers, window_width, output_kind="sequence", output_offset=0)


def build_dae(window_width: int, rng=None, conv_filters: int = 8,
              code_units: int = 128) -> Network:
    """Denoising autoencoder; output covers the centre window_width-6 samples."""
    if window_width <= 8:
        raise ConfigError("window_width must exceed 8 for the autoencoder")
    rng = rng or np.random.default_rng(0)
    hidden = (window_width - 3) * conv_filters
    layers = [
        Reshape("to_channels", (window_width, 1)),
        Conv1D("encoder_conv", 1, conv_filters, filter_size=4, stride=1, border="valid",
               activation="linear", rng=rng),
        Flatten("flatten"),
        Dense("encoder_dense", hidden, hidden, activation="relu", rng=rng),
        Dense("code", hidden, code_units, activation="relu", rng=rng),
        Dense("decoder_dense", code_units, hidden, activation="relu", rng=rng),
        Reshape("unflatten", (window_width - 3, conv_filters)),
        Conv1D("decoder_conv", conv_filters, 1, filter_size=4, stride=1, border="valid",
               activation="linear", rng=rng),
        Reshape("to_sequence", (window_width - 6,)),
    ]
    return Network(layers, window_width, output_kind="sequence", output_offset=3)


def build_rectangles(window_width: int, rng=None, conv_filters: int = 16,
                     dense_units: tuple[int, ...] = (4096, 3072, 2048, 512)) -> Network:
    """Regressor for (start, end, mean power) of the first activation."""
    if window_width <= 8:
        raise ConfigError("window_width must exceed 8 for the rectangles net")
    rng = rng or np.random.default_rng(0)
    layers = [
        Reshape("to_channels", (window_width, 1)),
        Conv1D("conv1", 1, conv_filters, filter_size=4, stride=1, border="valid",
               activation="linear", rng=rng),
        Conv1D("conv2", conv_filters, conv_filters, filter_size=4, stride=1, border="valid",
               activation="linear", rng=rng),
        Flatten("flatten"),
    ]
    width = (window_width - 6) * conv_filters
    for idx, units in enumerate(dense_units, start=1):
        layers.append(Dense(f"dense{idx}", width, units, activation="relu", rng=rng))
        width = units
    layers.append(Dense("head", width, 3, activation="linear", rng=rng))
    return Network(layers, window_width, output_kind="triple")


@dataclass
class TrainResult:
    """Loss trace of one training run; rows are (step, loss, smoothed loss)."""

    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    smoothed: list[float] = field(default_factory=list)
    wallclock: list[float] = field(default_factory=list)
    final_learning_rate: float = 0.0
    aborted: bool = False

    def append(self, step, loss, smoothed, wallclock):
        self.steps.append(step)
        self.losses.append(loss)
        self.smoothed.append(smoothed)
        self.wallclock.append(wallclock)


def train(network: Network, batches, optimizer: NesterovSGD, update_budget: int, *,
          clip_bound: float = GRADIENT_CLIP_BOUND,
          smoothing: float = 0.05,
          plateau_patience: int | None = 500,
          plateau_improvement: float = 0.01,
          min_learning_rate: float = 1e-5,
          log_every: int = 1,
          on_checkpoint=None,
          checkpoint_every: int | None = None) -> TrainResult:
    """Run exactly `update_budget` clipped Nesterov-SGD steps.

    The smoothed loss is an exponential moving average; when it fails to
    improve by `plateau_improvement` (relative) within
    `plateau_patience` steps, the learning rate is halved.  A non-finite
    loss or gradient aborts training, checkpointing the last finite
    state via `on_checkpoint(tag, step)` before re-raising.
    """
    result = TrainResult()
    ema = None
    best_ema = np.inf
    since_best = 0
    start = time.monotonic()
    step = 0
    try:
        for step in range(1, update_budget + 1):
            batch = next(batches)
            loss, grads = network.loss_and_gradients(batch.inputs, batch.targets)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at step {step}")
            optimizer.step(clip_gradients(grads, clip_bound))

            ema = loss if ema is None else (1 - smoothing) * ema + smoothing * loss
            if step % log_every == 0 or step == update_budget:
                result.append(step, loss, ema, time.monotonic() - start)
            if plateau_patience:
                if ema < best_ema * (1 - plateau_improvement):
                    best_ema = ema
                    since_best = 0
                else:
                    since_best += 1
                    if since_best >= plateau_patience:
                        optimizer.learning_rate = max(optimizer.learning_rate / 2,
                                                      min_learning_rate)
                        since_best = 0
            if on_checkpoint and checkpoint_every and step % checkpoint_every == 0:
                on_checkpoint("interval", step)
    except NumericError:
        result.aborted = True
        if on_checkpoint:
            on_checkpoint("abort", step)
        result.final_learning_rate = optimizer.learning_rate
        raise
    result.final_learning_rate = optimizer.learning_rate
    if on_checkpoint:
        on_checkpoint("final", step)
    return result
