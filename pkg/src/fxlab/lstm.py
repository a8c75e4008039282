"""Single-layer peephole LSTM written directly in numpy and trained by
backpropagation through time.

Gate activations follow the cell equations literally: the input, forget and
output gates use the logistic sigmoid, the cell input squashes to (-2, 2) and the
cell output to (-1, 1)."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Literal, NamedTuple

import numpy as np
import pandas as pd
from scipy.special import expit

from fxlab.errors import (
    DimensionMismatch,
    InvalidParameter,
    NonFiniteLoss,
    ShapeMismatch,
)

logger = logging.getLogger(__name__)

OutputPeephole = Literal["previous", "current"]
OUTPUT_PEEPHOLES = ("previous", "current")
OPTIMIZERS = ("gd", "adam")

GATES = ("i", "f", "c", "o")
FIELDS = (
    *(f"w_x{gate}" for gate in GATES),
    *(f"w_h{gate}" for gate in GATES),
    "w_ci",
    "w_cf",
    "w_co",
    *(f"b_{gate}" for gate in GATES),
    "w_hy",
    "b_y",
)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPSILON = 1e-8


def act_sigma(x):
    """1 / (1 + e^-x)"""
    return expit(x)


def act_g(x):
    """4 / (1 + e^-x) - 2"""
    return 4 * expit(x) - 2


def act_h(x):
    """2 / (1 + e^-x) - 1"""
    return 2 * expit(x) - 1


@dataclass(frozen=True)
class LstmParams:
    """Weights of the network.

    Input matrices `w_x*` are (m, d), recurrent matrices `w_h*` are (m, m), peephole
    weights `w_c*` act element-wise on the cell state, `w_hy` is (1, m)."""

    w_xi: np.ndarray
    w_xf: np.ndarray
    w_xc: np.ndarray
    w_xo: np.ndarray
    w_hi: np.ndarray
    w_hf: np.ndarray
    w_hc: np.ndarray
    w_ho: np.ndarray
    w_ci: np.ndarray
    w_cf: np.ndarray
    w_co: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray
    w_hy: np.ndarray
    b_y: np.ndarray
    # Cell state seen by the output gate's peephole
    output_peephole: OutputPeephole = "previous"

    def __post_init__(self):
        if self.output_peephole not in OUTPUT_PEEPHOLES:
            raise InvalidParameter(
                f"`output_peephole` must be one of these: {', '.join(OUTPUT_PEEPHOLES)}"
            )
        if np.ndim(self.w_xi) != 2:
            raise DimensionMismatch("`w_xi` must be a matrix.")
        m, d = np.shape(self.w_xi)
        expected = {
            **{f"w_x{gate}": (m, d) for gate in GATES},
            **{f"w_h{gate}": (m, m) for gate in GATES},
            **{name: (m,) for name in ("w_ci", "w_cf", "w_co")},
            **{f"b_{gate}": (m,) for gate in GATES},
            "w_hy": (1, m),
            "b_y": (1,),
        }
        for name, shape in expected.items():
            if np.shape(getattr(self, name)) != shape:
                raise DimensionMismatch(
                    f"`{name}` has shape {np.shape(getattr(self, name))}, expected {shape}."
                )

    @property
    def input_dim(self) -> int:
        return self.w_xi.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_xi.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in FIELDS}

    def with_arrays(self, arrays: dict[str, np.ndarray]) -> "LstmParams":
        return replace(self, **arrays)

    def zeros_like(self) -> "LstmParams":
        return self.with_arrays({name: np.zeros_like(a) for name, a in self.arrays().items()})

    def global_norm(self) -> float:
        return math.sqrt(sum(float(np.sum(a**2)) for a in self.arrays().values()))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays().values())

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "output_dim": 1,
            "output_peephole": self.output_peephole,
            **{name: a.tolist() for name, a in self.arrays().items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LstmParams":
        return cls(
            **{name: np.asarray(data[name], dtype=np.float64) for name in FIELDS},
            output_peephole=data.get("output_peephole", "previous"),
        )


class LstmState(NamedTuple):
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int) -> "LstmState":
        return cls(h=np.zeros(hidden_dim), c=np.zeros(hidden_dim))


class CellCache(NamedTuple):
    """Every intermediate of one step that the backward pass needs."""

    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    a_c: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    h_c: np.ndarray
    h: np.ndarray


@dataclass(frozen=True)
class SupervisedSequence:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if inputs.shape[0] != targets.size:
            raise DimensionMismatch(
                f"{inputs.shape[0]} inputs for {targets.size} targets."
            )
        if targets.size < 1:
            raise InvalidParameter("A sequence needs at least 1 step.")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return self.targets.size

    def tail(self, steps: int) -> "SupervisedSequence":
        return SupervisedSequence(self.inputs[-steps:], self.targets[-steps:])

    def head(self, steps: int) -> "SupervisedSequence":
        return SupervisedSequence(self.inputs[:steps], self.targets[:steps])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 500
    clip_norm: float = 5.0
    seed: int = 0
    patience: int = 50
    optimizer: Literal["gd", "adam"] = "gd"
    output_peephole: OutputPeephole = "previous"
    hidden_dim: int = 16

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InvalidParameter("`learning_rate` cannot be negative.")
        if self.epochs < 1:
            raise InvalidParameter("`epochs` must be at least 1.")
        if not self.clip_norm > 0:
            raise InvalidParameter("`clip_norm` must be positive.")
        if self.patience < 1:
            raise InvalidParameter("`patience` must be at least 1.")
        if self.hidden_dim < 1:
            raise InvalidParameter("`hidden_dim` must be at least 1.")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidParameter(
                f"`optimizer` must be one of these: {', '.join(OPTIMIZERS)}"
            )
        if self.output_peephole not in OUTPUT_PEEPHOLES:
            raise InvalidParameter(
                f"`output_peephole` must be one of these: {', '.join(OUTPUT_PEEPHOLES)}"
            )


def init_params(
    input_dim: int,
    hidden_dim: int,
    seed: int,
    output_peephole: OutputPeephole = "previous",
) -> LstmParams:
    """Weights uniform in +-1/sqrt(m), biases zero except the forget gate's at 1."""

    if input_dim < 1 or hidden_dim < 1:
        raise InvalidParameter("LSTM dimensions must be at least 1.")
    rng = np.random.default_rng(seed)
    bound = 1 / math.sqrt(hidden_dim)
    m, d = hidden_dim, input_dim

    def uniform(*shape):
        return rng.uniform(-bound, bound, size=shape)

    return LstmParams(
        **{f"w_x{gate}": uniform(m, d) for gate in GATES},
        **{f"w_h{gate}": uniform(m, m) for gate in GATES},
        w_ci=uniform(m),
        w_cf=uniform(m),
        w_co=uniform(m),
        b_i=np.zeros(m),
        b_f=np.ones(m),
        b_c=np.zeros(m),
        b_o=np.zeros(m),
        w_hy=uniform(1, m),
        b_y=np.zeros(1),
        output_peephole=output_peephole,
    )


def cell_forward(
    params: LstmParams, x_t, prev: LstmState
) -> tuple[LstmState, tuple[np.ndarray, np.ndarray, np.ndarray], CellCache]:
    x = np.asarray(x_t, dtype=np.float64)
    if x.shape != (params.input_dim,):
        raise DimensionMismatch(
            f"Input has shape {x.shape}, the network takes {params.input_dim} values."
        )
    h_prev, c_prev = prev
    if np.shape(h_prev) != (params.hidden_dim,) or np.shape(c_prev) != (params.hidden_dim,):
        raise DimensionMismatch(f"State does not have {params.hidden_dim} units.")

    i = act_sigma(params.w_xi @ x + params.w_hi @ h_prev + params.w_ci * c_prev + params.b_i)
    f = act_sigma(params.w_xf @ x + params.w_hf @ h_prev + params.w_cf * c_prev + params.b_f)
    a_c = params.w_xc @ x + params.w_hc @ h_prev + params.b_c
    g = act_g(a_c)
    c = f * c_prev + i * g
    peephole = c if params.output_peephole == "current" else c_prev
    o = act_sigma(params.w_xo @ x + params.w_ho @ h_prev + params.w_co * peephole + params.b_o)
    h_c = act_h(c)
    h = o * h_c

    cache = CellCache(x, h_prev, c_prev, i, f, a_c, g, o, c, h_c, h)
    return LstmState(h=h, c=c), (i, f, o), cache


def _readout(params: LstmParams, h: np.ndarray) -> float:
    return float(params.w_hy[0] @ h + params.b_y[0])


def forward_sequence(
    params: LstmParams, seq: SupervisedSequence
) -> tuple[np.ndarray, float, list[CellCache]]:
    """Runs the sequence from a zero state; the loss is the mean squared error."""

    state = LstmState.zeros(params.hidden_dim)
    predictions = np.empty(len(seq))
    caches = []
    for t, x_t in enumerate(seq.inputs):
        state, _, cache = cell_forward(params, x_t, state)
        predictions[t] = _readout(params, state.h)
        caches.append(cache)
    loss = float(np.mean((predictions - seq.targets) ** 2))
    return predictions, loss, caches


def predict(params: LstmParams, inputs) -> np.ndarray:
    """Predictions for every row of `inputs`, run as one sequence from a zero state."""

    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    state = LstmState.zeros(params.hidden_dim)
    predictions = np.empty(inputs.shape[0])
    for t, x_t in enumerate(inputs):
        state, _, _ = cell_forward(params, x_t, state)
        predictions[t] = _readout(params, state.h)
    return predictions


def backward_sequence(
    params: LstmParams, seq: SupervisedSequence, caches: list[CellCache]
) -> LstmParams:
    """Gradient of the sequence's mean squared error through every step."""

    steps = len(seq)
    if len(caches) != steps:
        raise ShapeMismatch(f"{len(caches)} caches for a sequence of {steps} steps.")

    grads = {name: np.zeros_like(a) for name, a in params.arrays().items()}
    current_peephole = params.output_peephole == "current"
    dh_next = np.zeros(params.hidden_dim)
    dc_next = np.zeros(params.hidden_dim)

    for t in reversed(range(steps)):
        cache = caches[t]
        if cache.x.shape != (params.input_dim,):
            raise ShapeMismatch(f"Cache {t} does not match the network's input size.")
        dy = 2 * (_readout(params, cache.h) - seq.targets[t]) / steps
        grads["w_hy"][0] += dy * cache.h
        grads["b_y"][0] += dy

        dh = dy * params.w_hy[0] + dh_next
        da_o = dh * cache.h_c * cache.o * (1 - cache.o)
        sig_c = (cache.h_c + 1) / 2
        dc = dh * cache.o * 2 * sig_c * (1 - sig_c) + dc_next
        if current_peephole:
            dc = dc + da_o * params.w_co
        da_i = dc * cache.g * cache.i * (1 - cache.i)
        da_f = dc * cache.c_prev * cache.f * (1 - cache.f)
        sig_a = (cache.g + 2) / 4
        da_c = dc * cache.i * 4 * sig_a * (1 - sig_a)

        for gate, da in zip(GATES, (da_i, da_f, da_c, da_o)):
            grads[f"w_x{gate}"] += np.outer(da, cache.x)
            grads[f"w_h{gate}"] += np.outer(da, cache.h_prev)
            grads[f"b_{gate}"] += da
        grads["w_ci"] += da_i * cache.c_prev
        grads["w_cf"] += da_f * cache.c_prev
        grads["w_co"] += da_o * (cache.c if current_peephole else cache.c_prev)

        dc_next = dc * cache.f + da_i * params.w_ci + da_f * params.w_cf
        if not current_peephole:
            dc_next = dc_next + da_o * params.w_co
        dh_next = (
            params.w_hi.T @ da_i
            + params.w_hf.T @ da_f
            + params.w_hc.T @ da_c
            + params.w_ho.T @ da_o
        )

    return params.with_arrays(grads)


def loss_and_gradients(
    params: LstmParams, sequences: list[SupervisedSequence]
) -> tuple[float, LstmParams]:
    """Loss and gradients averaged over a batch of sequences."""

    if not sequences:
        raise InvalidParameter("The batch is empty.")
    total_loss = 0.0
    total = {name: np.zeros_like(a) for name, a in params.arrays().items()}
    for seq in sequences:
        _, loss, caches = forward_sequence(params, seq)
        total_loss += loss
        for name, grad in backward_sequence(params, seq, caches).arrays().items():
            total[name] += grad
    count = len(sequences)
    return total_loss / count, params.with_arrays(
        {name: grad / count for name, grad in total.items()}
    )


def _clip(grads: LstmParams, clip_norm: float) -> LstmParams:
    norm = grads.global_norm()
    if norm <= clip_norm:
        return grads
    scale = clip_norm / norm
    return grads.with_arrays({name: a * scale for name, a in grads.arrays().items()})


class _Adam:
    def __init__(self, params: LstmParams, learning_rate: float):
        self.learning_rate = learning_rate
        self.step = 0
        self.first = {name: np.zeros_like(a) for name, a in params.arrays().items()}
        self.second = {name: np.zeros_like(a) for name, a in params.arrays().items()}

    def update(self, params: LstmParams, grads: LstmParams) -> LstmParams:
        beta1, beta2 = ADAM_BETAS
        self.step += 1
        updated = {}
        for name, grad in grads.arrays().items():
            self.first[name] = beta1 * self.first[name] + (1 - beta1) * grad
            self.second[name] = beta2 * self.second[name] + (1 - beta2) * grad**2
            first = self.first[name] / (1 - beta1**self.step)
            second = self.second[name] / (1 - beta2**self.step)
            updated[name] = getattr(params, name) - self.learning_rate * first / (
                np.sqrt(second) + ADAM_EPSILON
            )
        return params.with_arrays(updated)


def _descend(params: LstmParams, grads: LstmParams, learning_rate: float) -> LstmParams:
    return params.with_arrays(
        {name: getattr(params, name) - learning_rate * grad for name, grad in grads.arrays().items()}
    )


def train(
    params: LstmParams,
    train_seq: SupervisedSequence,
    validation_seq: SupervisedSequence | None,
    config: TrainConfig,
) -> tuple[LstmParams, pd.DataFrame]:
    """Full-batch training with global-norm clipping and early stopping.

    Each history row holds the losses of the parameters the epoch starts from.
    Returns the parameters with the lowest validation loss (training loss when
    there is no validation sequence)."""

    params = replace(params, output_peephole=config.output_peephole)
    if train_seq.inputs.shape[1] != params.input_dim:
        raise DimensionMismatch(
            f"Training inputs have {train_seq.inputs.shape[1]} values, the network "
            f"takes {params.input_dim}."
        )
    adam = _Adam(params, config.learning_rate) if config.optimizer == "adam" else None

    history = []
    best_params, best_loss, best_epoch = params, math.inf, 0
    for epoch in range(1, config.epochs + 1):
        loss, grads = loss_and_gradients(params, [train_seq])
        if validation_seq is not None:
            _, val_loss, _ = forward_sequence(params, validation_seq)
        else:
            val_loss = loss
        if not (math.isfinite(loss) and math.isfinite(val_loss)):
            raise NonFiniteLoss(epoch)
        history.append((epoch, loss, val_loss))

        if val_loss < best_loss:
            best_params, best_loss, best_epoch = params, val_loss, epoch
        elif epoch - best_epoch >= config.patience:
            logger.warning(
                f"Validation loss has not improved for {config.patience} epochs; "
                f"stopping at epoch {epoch} (best {best_loss:.6g} at epoch {best_epoch})."
            )
            break

        grads = _clip(grads, config.clip_norm)
        if adam is not None:
            params = adam.update(params, grads)
        else:
            params = _descend(params, grads, config.learning_rate)
        if not params.is_finite():
            raise NonFiniteLoss(epoch)

        if epoch % 50 == 0:
            logger.debug(f"Epoch {epoch}: train {loss:.6g}, validation {val_loss:.6g}")

    return best_params, pd.DataFrame(history, columns=["epoch", "train_loss", "val_loss"])
