"""
scaled VGG-style fully convolutional network

five conv/pool blocks, two head convolutions after pool5 (with dropout), 1x1 score
heads on pool3, pool4 and the head output (the desk preset adds pool1 and pool2),
learned transposed-conv upsampling of each back to the input size, concatenation
and a 1x1 fusion to two sigmoid channels
"""
import json
import logging
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import layers
from .exceptions import (
    CheckpointError,
    CheckpointVersionError,
    ConfigError,
    GradientCheckError,
    NumericGuardError,
    ShapeError,
)

logger = logging.getLogger(__name__)

BIAS_INIT = 0.1
LOG_EPS = 1e-12
CHECKPOINT_MAGIC = b"TSPFCN01"
LOSS_MODES = ("categorical", "binary")

# upsampling factor of each score head tap
SKIP_FACTORS = {"pool1": 2, "pool2": 4, "pool3": 8, "pool4": 16, "fc7": 32}
COARSE_SKIPS = ("pool3", "pool4", "fc7")
FINE_SKIPS = ("pool1", "pool2", "pool3", "pool4", "fc7")


@dataclass(frozen=True)
class ArchConfig:
    input_size: int = 64
    channels: Tuple[int, ...] = (8, 16, 32, 64, 128)
    convs: Tuple[int, ...] = (2, 2, 3, 3, 3)
    head_channels: int = 128
    head_kernel: int = 3
    score_channels: int = 1
    dropout_rate: float = 0.5
    skips: Tuple[str, ...] = COARSE_SKIPS

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "convs", tuple(int(c) for c in self.convs))
        object.__setattr__(self, "skips", tuple(str(s) for s in self.skips))
        if self.input_size <= 0 or self.input_size % 32:
            raise ConfigError(f"Input size must be a positive multiple of 32, got {self.input_size}")
        if len(self.channels) != 5 or len(self.convs) != 5:
            raise ConfigError("Channel schedule and convs per block need 5 entries each")
        if min(self.channels) < 1 or min(self.convs) < 1:
            raise ConfigError("Channel counts and convs per block must be positive")
        if self.head_kernel % 2 != 1:
            raise ConfigError("Head kernel size must be odd")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("Dropout rate must be in [0, 1)")
        if "fc7" not in self.skips or len(set(self.skips)) != len(self.skips):
            raise ConfigError(f"Score heads need fc7 and no repeats, got {self.skips}")
        unknown = set(self.skips) - set(SKIP_FACTORS)
        if unknown:
            raise ConfigError(f"Unknown score head taps {sorted(unknown)}; pick from {tuple(SKIP_FACTORS)}")

    @classmethod
    def large(cls) -> "ArchConfig":
        """224 input, VGG channels, 7 x 7 x 1024 head"""
        return cls(224, (64, 128, 256, 512, 512), head_channels=1024)

    @classmethod
    def desk(cls) -> "ArchConfig":
        """64 input with extra score heads on pool1 and pool2 for one-pixel paths"""
        return cls(skips=FINE_SKIPS)

    @classmethod
    def tiny(cls) -> "ArchConfig":
        """32 x 32 desk schedule without dropout, for gradient checks"""
        return cls(32, dropout_rate=0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"], d["convs"], d["skips"] = list(self.channels), list(self.convs), list(self.skips)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        skips = tuple(d.get("skips", COARSE_SKIPS))
        return cls(**{**d, "channels": tuple(d["channels"]), "convs": tuple(d["convs"]), "skips": skips})


def layer_shapes(cfg: ArchConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    """kernel shape (k, k, Cin, Cout) of every layer, in declared order"""
    shapes = OrderedDict()
    cin = 3
    for block, (cout, count) in enumerate(zip(cfg.channels, cfg.convs), start=1):
        for conv in range(1, count + 1):
            shapes[f"block{block}_conv{conv}"] = (3, 3, cin, cout)
            cin = cout
    hk, head = cfg.head_kernel, cfg.head_channels
    shapes["fc6"] = (hk, hk, cfg.channels[4], head)
    shapes["fc7"] = (1, 1, head, head)
    sc = cfg.score_channels
    for name in cfg.skips:
        cin = head if name == "fc7" else cfg.channels[int(name[-1]) - 1]
        shapes[f"score_{name}"] = (1, 1, cin, sc)
    for name in cfg.skips:
        factor = SKIP_FACTORS[name]
        shapes[f"up_{name}"] = (2 * factor, 2 * factor, sc, sc)
    shapes["fuse"] = (1, 1, len(cfg.skips) * sc, 2)
    return shapes


def parameter_shapes(cfg: ArchConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    shapes = OrderedDict()
    for name, shape in layer_shapes(cfg).items():
        shapes[f"{name}.w"] = shape
        shapes[f"{name}.b"] = (shape[-1],)
    return shapes


@dataclass
class FcnModel:
    arch: ArchConfig
    params: "OrderedDict[str, np.ndarray]"
    seed: int = 0

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def copy(self) -> "FcnModel":
        return FcnModel(self.arch, OrderedDict((k, v.copy()) for k, v in self.params.items()), self.seed)

    def astype(self, dtype) -> "FcnModel":
        return FcnModel(
            self.arch, OrderedDict((k, v.astype(dtype)) for k, v in self.params.items()), self.seed
        )

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))


def init_model(cfg: ArchConfig, seed: int = 0, dtype=np.float32) -> FcnModel:
    """
    Xavier-uniform weights from each layer's fan-in/fan-out, every bias 0.1
    """
    rng = np.random.default_rng(seed)
    params = OrderedDict()
    for name, shape in layer_shapes(cfg).items():
        k, _, cin, cout = shape
        params[f"{name}.w"] = layers.xavier_uniform(shape, k * k * cin, k * k * cout, rng, dtype)
        params[f"{name}.b"] = np.full(cout, BIAS_INIT, dtype=dtype)
    return FcnModel(cfg, params, seed)


##########################################################################################
# FORWARD / BACKWARD
##########################################################################################
def _check_input(model: FcnModel, image: np.ndarray) -> np.ndarray:
    s = model.arch.input_size
    image = np.asarray(image)
    if image.shape != (s, s, 3):
        raise ShapeError(f"Model expects a {s}x{s}x3 image, got {image.shape}")
    return image.astype(model.dtype, copy=False)


def _guard(array: np.ndarray, what: str):
    if not np.all(np.isfinite(array)):
        raise NumericGuardError(f"Non-finite values in {what}")


def _forward(model: FcnModel, image, training: bool, rng, dropout_rate):
    p = model.params
    rate = model.arch.dropout_rate if dropout_rate is None else dropout_rate
    rate = rate if training else 0.0
    if rate > 0.0 and rng is None:
        rng = np.random.default_rng(model.seed)
    caches, taps = {}, {}

    h = _check_input(model, image)
    for block, count in enumerate(model.arch.convs, start=1):
        for conv in range(1, count + 1):
            name = f"block{block}_conv{conv}"
            h, caches[name] = layers.conv_forward(h, p[f"{name}.w"], p[f"{name}.b"])
            h, caches[f"{name}.relu"] = layers.relu_forward(h)
        h, caches[f"pool{block}"] = layers.maxpool_forward(h)
        taps[f"pool{block}"] = h

    for name in ("fc6", "fc7"):
        h, caches[name] = layers.conv_forward(h, p[f"{name}.w"], p[f"{name}.b"])
        h, caches[f"{name}.relu"] = layers.relu_forward(h)
        h, caches[f"{name}.drop"] = layers.dropout_forward(h, rate, rng)
    taps["fc7"] = h

    upsampled = []
    for name in model.arch.skips:
        factor = SKIP_FACTORS[name]
        score, caches[f"score_{name}"] = layers.conv_forward(
            taps[name], p[f"score_{name}.w"], p[f"score_{name}.b"]
        )
        up, caches[f"up_{name}"] = layers.upsample_forward(
            score, p[f"up_{name}.w"], p[f"up_{name}.b"], factor
        )
        upsampled.append(up)
    fused = np.concatenate(upsampled, axis=-1)
    logits, caches["fuse"] = layers.conv_forward(fused, p["fuse.w"], p["fuse.b"])
    probs = layers.sigmoid(logits)
    _guard(probs, "network output")
    return probs, caches, taps


def forward(
    model: FcnModel,
    image: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    dropout_rate: Optional[float] = None,
) -> np.ndarray:
    """
    S x S x 3 image in [0, 1] -> S x S x 2 sigmoid probabilities (channel 1 = path)

    dropout is applied only when training is true

    Errors:
        ShapeError
        NumericGuardError
    """
    probs, _, _ = _forward(model, image, training, rng, dropout_rate)
    return probs


def predict(model: FcnModel, image) -> np.ndarray:
    """forward with dropout off; accepts a RasterImage or an array"""
    pixels = getattr(image, "pixels", None)
    if pixels is not None:
        image = pixels.astype(model.dtype) / 255.0
    return forward(model, image, training=False)


def _label_array(y_label) -> np.ndarray:
    classes = getattr(y_label, "classes", y_label)
    return np.asarray(classes, dtype=np.float64)


def loss(y: np.ndarray, y_label, mode: str = "categorical", eps: float = LOG_EPS) -> float:
    """
    J = -sum_ijk y'_ijk log(y_ijk) / (2 w h), y clamped to [eps, 1 - eps]

    mode "binary" also charges the off-target channel with -(1 - y') log(1 - y) and halves
    the sum; J(0.5) = ln 2 / 2 in both modes

    Errors:
        ShapeError
    """
    y = np.asarray(y, dtype=np.float64)
    target = _label_array(y_label)
    if y.shape != target.shape:
        raise ShapeError(f"Prediction {y.shape} and label {target.shape} differ")
    if mode not in LOSS_MODES:
        raise ConfigError(f"Unknown loss mode {mode!r}")
    h, w = y.shape[:2]
    yc = np.clip(y, eps, 1.0 - eps)
    total = np.sum(target * np.log(yc))
    if mode == "binary":
        total += np.sum((1.0 - target) * np.log(1.0 - yc))
        total /= 2.0
    return float(-total / (2.0 * w * h))


def _dlogits(y: np.ndarray, target: np.ndarray, mode: str, eps: float) -> np.ndarray:
    h, w = y.shape[:2]
    if mode == "categorical":
        grad = -target * (1.0 - y)
    else:
        grad = (y - target) / 2.0
    grad[(y < eps) | (y > 1.0 - eps)] = 0.0
    return grad / (2.0 * w * h)


def loss_and_gradients(
    model: FcnModel,
    image: np.ndarray,
    label,
    mode: str = "categorical",
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    dropout_rate: Optional[float] = None,
):
    """
    loss value and the gradient of every parameter, keyed like model.params

    Errors:
        ShapeError
        NumericGuardError
    """
    p = model.params
    probs, caches, taps = _forward(model, image, training, rng, dropout_rate)
    target = _label_array(label)
    value = loss(probs, target, mode)
    grads = {}

    def conv_back(name, dout):
        dx, grads[f"{name}.w"], grads[f"{name}.b"] = layers.conv_backward(dout, caches[name])
        return dx

    dfused = conv_back("fuse", _dlogits(probs, target, mode, LOG_EPS).astype(model.dtype))
    sc = model.arch.score_channels
    dtaps = {}
    for i, name in enumerate(model.arch.skips):
        dup = dfused[..., i * sc : (i + 1) * sc]
        dscore, grads[f"up_{name}.w"], grads[f"up_{name}.b"] = layers.upsample_backward(
            dup, caches[f"up_{name}"]
        )
        dtaps[name] = conv_back(f"score_{name}", dscore)

    dh = dtaps["fc7"]
    for name in ("fc7", "fc6"):
        dh = layers.dropout_backward(dh, caches[f"{name}.drop"])
        dh = layers.relu_backward(dh, caches[f"{name}.relu"])
        dh = conv_back(name, dh)

    for block in range(5, 0, -1):
        if f"pool{block}" in dtaps:
            dh = dh + dtaps[f"pool{block}"]
        dh = layers.maxpool_backward(dh, caches[f"pool{block}"])
        for conv in range(model.arch.convs[block - 1], 0, -1):
            name = f"block{block}_conv{conv}"
            dh = layers.relu_backward(dh, caches[f"{name}.relu"])
            dh = conv_back(name, dh)

    ordered = OrderedDict((k, grads[k]) for k in p)
    for k, g in ordered.items():
        _guard(g, f"gradient of {k}")
    return value, ordered


def backward(model: FcnModel, image: np.ndarray, label, mode: str = "categorical") -> Dict[str, np.ndarray]:
    """analytic gradients of the loss with dropout off"""
    _, grads = loss_and_gradients(model, image, label, mode)
    return grads


##########################################################################################
# GRADIENT CHECK
##########################################################################################
@dataclass
class GradientCheckReport:
    checked: int
    max_rel_error: float
    tolerance: float
    median_rel_error: float = 0.0
    worst: List[Tuple[str, Tuple[int, ...], float, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def gradient_check(
    cfg: ArchConfig = None,
    tolerance: float = 1e-3,
    samples: int = 200,
    step: float = 1e-5,
    seed: int = 0,
    mode: str = "categorical",
    positive: bool = False,
    corrupt: Optional[str] = None,
    raise_on_failure: bool = False,
) -> GradientCheckReport:
    """
    compare analytic gradients with central differences on a 64-bit model

    positive=True makes every weight and input positive, each kernel a weighted mean of
    its inputs, so no ReLU is ever cut off
    corrupt names a parameter whose analytic gradient is deliberately offset

    Errors:
        GradientCheckError (only with raise_on_failure)
    """
    cfg = cfg or ArchConfig.tiny()
    cfg = ArchConfig.from_dict({**cfg.to_dict(), "dropout_rate": 0.0})
    rng = np.random.default_rng(seed)
    model = init_model(cfg, seed, dtype=np.float64)
    s = cfg.input_size
    image = rng.random((s, s, 3))
    if positive:
        for name, value in model.params.items():
            if name.endswith(".w"):
                value = np.abs(value)
                model.params[name] = value / value.sum(axis=(0, 1, 2), keepdims=True)
    path = rng.random((s, s)) < 0.25
    label = np.stack([~path, path], axis=-1).astype(np.float64)

    _, grads = loss_and_gradients(model, image, label, mode)
    if corrupt is not None:
        grads[corrupt] = grads[corrupt] + 1.0

    names = list(model.params)
    results = []
    for i in range(samples):
        name = names[i % len(names)]
        param = model.params[name]
        index = tuple(int(rng.integers(0, d)) for d in param.shape)
        original = param[index]
        param[index] = original + step
        plus = loss(forward(model, image), label, mode)
        param[index] = original - step
        minus = loss(forward(model, image), label, mode)
        param[index] = original
        numeric = (plus - minus) / (2.0 * step)
        analytic = float(grads[name][index])
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        results.append((name, index, analytic, numeric, rel))

    results.sort(key=lambda r: r[-1], reverse=True)
    errors = [r[-1] for r in results]
    report = GradientCheckReport(
        len(results),
        max(errors, default=0.0),
        tolerance,
        float(np.median(errors)) if errors else 0.0,
        results[:10],
    )
    logger.info("Gradient check: %d parameters, max relative error %.3e", report.checked, report.max_rel_error)
    if raise_on_failure and not report.passed:
        raise GradientCheckError(
            f"Max relative error {report.max_rel_error:.3e} >= {tolerance}; worst: {report.worst[:3]}"
        )
    return report


##########################################################################################
# CHECKPOINTS
##########################################################################################
def save_checkpoint(model: FcnModel, path) -> None:
    """
    magic, u32 length + UTF-8 JSON header, then little-endian float32 blobs in layer order
    """
    header = {
        "arch": model.arch.to_dict(),
        "seed": model.seed,
        "parameters": [[name, list(value.shape)] for name, value in model.params.items()],
    }
    encoded = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(encoded)))
        f.write(encoded)
        for value in model.params.values():
            f.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def load_checkpoint(path) -> FcnModel:
    """
    Errors:
        CheckpointVersionError
        CheckpointError
    """
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointVersionError(f"{path} is not a {CHECKPOINT_MAGIC.decode()} checkpoint")
    offset = len(CHECKPOINT_MAGIC)
    if len(blob) < offset + 4:
        raise CheckpointError(f"{path} is truncated")
    (size,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    try:
        header = json.loads(blob[offset : offset + size].decode("utf-8"))
        arch = ArchConfig.from_dict(header["arch"])
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"{path} has a malformed header: {e}") from e
    offset += size

    expected = parameter_shapes(arch)
    stored = [(name, tuple(shape)) for name, shape in header.get("parameters", [])]
    if stored != list(expected.items()):
        raise CheckpointError(f"{path} parameter shapes do not match its architecture")

    params = OrderedDict()
    for name, shape in stored:
        count = int(np.prod(shape))
        end = offset + 4 * count
        if end > len(blob):
            raise CheckpointError(f"{path} is truncated at {name}")
        params[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float32)
        offset = end
    if offset != len(blob):
        raise CheckpointError(f"{path} has {len(blob) - offset} trailing bytes")
    return FcnModel(arch, params, int(header.get("seed", 0)))
