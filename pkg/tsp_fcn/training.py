"""
Adam training of the FCN on growing chunks of a dataset, with learning curve and
prediction snapshots
"""
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pyarrow as pa
from pyarrow import csv as pa_csv

from .exceptions import ConfigError, DatasetError, DimensionMismatchError, EmptySetError
from .net import LOSS_MODES, FcnModel, loss, loss_and_gradients, predict
from .raster import image_to_array, probs_to_image, save_png

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dropout: float = 0.5
    max_iterations: int = 3000
    chunk_size: int = 3000
    snapshot_every: int = 50
    seed: int = 0
    loss_mode: str = "binary"
    eval_samples: int = 16

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"Learning rate must be > 0, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0) or self.eps <= 0:
            raise ConfigError("Adam needs 0 <= beta < 1 and eps > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"Dropout must be in [0, 1), got {self.dropout}")
        if self.max_iterations < 0 or self.chunk_size < 1 or self.snapshot_every < 1:
            raise ConfigError("max_iterations >= 0, chunk_size >= 1 and snapshot_every >= 1 required")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"Unknown loss mode {self.loss_mode!r}; pick one of {LOSS_MODES}")
        if self.eval_samples < 1:
            raise ConfigError("eval_samples must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


##########################################################################################
# ADAM
##########################################################################################
@dataclass
class AdamState:
    """first and second moment estimates per parameter key; t is the last step taken"""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(model, grads: Dict[str, np.ndarray], state: AdamState, t: int, cfg: TrainConfig):
    """
    bias-corrected Adam update of every parameter, in place

    model may be an FcnModel or a plain dict of arrays; t counts from 1
    """
    params = getattr(model, "params", model)
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for k, g in grads.items():
        if k not in state.m:
            state.m[k] = np.zeros_like(params[k], dtype=np.float64)
            state.v[k] = np.zeros_like(params[k], dtype=np.float64)
        state.m[k] *= cfg.beta1
        state.m[k] += (1.0 - cfg.beta1) * g
        state.v[k] *= cfg.beta2
        state.v[k] += (1.0 - cfg.beta2) * (g * g)
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        params[k] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    state.t = t
    return model, state


##########################################################################################
# TRAINING
##########################################################################################
@dataclass(frozen=True)
class CurveRow:
    iteration: int
    train_loss: float
    test_loss: Optional[float] = None


@dataclass
class TrainResult:
    model: FcnModel
    curve: List[CurveRow]
    iterations: int


def _as_samples(data) -> list:
    if hasattr(data, "samples"):
        return data.samples()
    return list(data)


def _check_samples(samples: Sequence, model: FcnModel, what: str):
    s = model.arch.input_size
    for sample in samples:
        if sample.label is None:
            raise DatasetError(f"{what} sample {sample.instance.id} has no label")
        if (sample.image.w, sample.image.h) != (s, s) or (sample.label.w, sample.label.h) != (s, s):
            raise DimensionMismatchError(
                f"{what} sample {sample.instance.id} is {sample.image.w}x{sample.image.h}, model expects {s}x{s}"
            )


def evaluate_loss(model: FcnModel, samples: Sequence, mode: str = "binary") -> float:
    """
    mean loss over samples with dropout off

    Errors:
        EmptySetError
    """
    if not samples:
        raise EmptySetError("Cannot evaluate the loss of an empty sample set")
    values = [loss(predict(model, image_to_array(s.image, model.dtype)), s.label, mode) for s in samples]
    return float(np.mean(values))


def write_curve(curve: Sequence[CurveRow], path) -> None:
    """learning curve as CSV with columns iteration, train_loss, test_loss (blank when absent)"""
    table = pa.table(
        {
            "iteration": pa.array([r.iteration for r in curve], pa.int64()),
            "train_loss": pa.array([r.train_loss for r in curve], pa.float64()),
            "test_loss": pa.array([r.test_loss for r in curve], pa.float64()),
        }
    )
    pa_csv.write_csv(table, str(path))


def train(
    data,
    model: FcnModel,
    cfg: TrainConfig = TrainConfig(),
    test=None,
    snapshot_dir=None,
    curve_path=None,
) -> TrainResult:
    """
    minibatch-1 Adam training; the input model is left untouched

    stage k trains on the first k * chunk_size samples for max_iterations iterations;
    a curve row (and a probe snapshot when snapshot_dir is set) is taken at iteration 0
    and every snapshot_every iterations

    Errors:
        EmptySetError
        DatasetError
        DimensionMismatchError
        NumericGuardError
    """
    samples = _as_samples(data)
    if not samples:
        raise EmptySetError("Training set is empty")
    test_samples = _as_samples(test) if test is not None else []
    _check_samples(samples, model, "Training")
    _check_samples(test_samples, model, "Test")

    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    probe = test_samples[0] if test_samples else samples[0]
    if snapshot_dir is not None:
        os.makedirs(snapshot_dir, exist_ok=True)

    stages = math.ceil(len(samples) / cfg.chunk_size)
    total = stages * cfg.max_iterations
    curve: List[CurveRow] = []

    def record(iteration: int, active: int):
        pool = samples[: min(active, cfg.eval_samples)]
        row = CurveRow(
            iteration,
            evaluate_loss(model, pool, cfg.loss_mode),
            evaluate_loss(model, test_samples, cfg.loss_mode) if test_samples else None,
        )
        curve.append(row)
        logger.info(
            "Iteration %d/%d: train loss %.6f, test loss %s", iteration, total, row.train_loss, row.test_loss
        )
        if snapshot_dir is not None:
            probs = predict(model, image_to_array(probe.image, model.dtype))
            save_png(probs_to_image(probs), os.path.join(snapshot_dir, f"iter_{iteration}.png"))

    record(0, min(cfg.chunk_size, len(samples)))
    t = 0
    for stage in range(1, stages + 1):
        active = min(stage * cfg.chunk_size, len(samples))
        logger.debug("Stage %d: %d active samples", stage, active)
        for _ in range(cfg.max_iterations):
            sample = samples[int(rng.integers(active))]
            _, grads = loss_and_gradients(
                model,
                image_to_array(sample.image, model.dtype),
                sample.label,
                cfg.loss_mode,
                training=True,
                rng=rng,
                dropout_rate=cfg.dropout,
            )
            t += 1
            adam_step(model, grads, state, t, cfg)
            if t % cfg.snapshot_every == 0:
                record(t, active)

    if curve_path is not None:
        write_curve(curve, curve_path)
    return TrainResult(model, curve, t)


def fine_tune(model: FcnModel, extra_data, cfg: TrainConfig = TrainConfig(), **kwargs) -> TrainResult:
    """continue training on extra_data only, with fresh Adam moments"""
    logger.info("Fine-tuning on %d extra samples", len(_as_samples(extra_data)))
    return train(extra_data, model, cfg, **kwargs)
