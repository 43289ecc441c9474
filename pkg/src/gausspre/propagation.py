"""Monte-Carlo propagation through randomly initialized perceptrons.

Layer update: Z^{l+1} = W^l X^l / sqrt(n_l) + B^l with X^0 = x (the input)
and X^l = phi(Z^l) for l >= 1.  Parameter draws are processed in fixed-size
chunks, each with its own generator derived from (seed, stream, chunk), so
results do not depend on how chunks are spread over worker threads.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distributions import _weibull_draw, make_rng, standardize, std_normal_cdf
from .kstest import KsResult, ks_statistic, ks_test, ks_threshold

# stream ids keep the parameter, input and data generators apart
STREAM_PARAMS = 1
STREAM_INPUT = 2
STREAM_DATA = 3
STREAM_PRODUCT = 4
STREAM_INDEPENDENCE = 5

DEFAULT_CHUNK = 200


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("GAUSSPRE_THREADS", "1")))
    except ValueError:
        return 1


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class Init:
    """Parameter law: Gaussian (with bias), symmetric Weibull or Rademacher
    (both bias-free)."""

    kind: str
    sigma_w: float = 1.0
    sigma_b: float = 0.0
    theta: float | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "weibull", "rademacher"):
            raise ValueError(f"unknown init kind {self.kind!r}")
        if self.kind == "weibull" and not (self.theta and self.theta > 0):
            raise ValueError("weibull init needs theta > 0")
        if self.sigma_w <= 0 or self.sigma_b < 0:
            raise ValueError("need sigma_w > 0 and sigma_b >= 0")

    @classmethod
    def gaussian(cls, sigma_w: float = 1.0, sigma_b: float = 0.0) -> "Init":
        return cls("gaussian", sigma_w, sigma_b)

    @classmethod
    def weibull(cls, theta: float) -> "Init":
        return cls("weibull", theta=float(theta))

    @classmethod
    def rademacher(cls) -> "Init":
        return cls("rademacher")

    @property
    def has_bias(self) -> bool:
        return self.kind == "gaussian" and self.sigma_b > 0

    def weights(self, rng: np.random.Generator, shape, dtype=np.float32) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(shape, dtype=dtype) * dtype(self.sigma_w)
        if self.kind == "weibull":
            return _weibull_draw(rng, self.theta, shape, dtype)
        return (rng.integers(0, 2, size=shape, dtype=np.int8) * 2 - 1).astype(dtype)

    def bias(self, rng: np.random.Generator, shape, dtype=np.float32) -> np.ndarray | None:
        if not self.has_bias:
            return None
        return rng.standard_normal(shape, dtype=dtype) * dtype(self.sigma_b)

    def as_dict(self) -> dict:
        return {"kind": self.kind, "sigma_w": self.sigma_w, "sigma_b": self.sigma_b, "theta": self.theta}


@dataclass(frozen=True)
class NetworkConfig:
    widths: tuple[int, ...]
    activation: object
    init: Init

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise ValueError("need at least an input width and one layer")
        if min(self.widths) < 1:
            raise ValueError("all widths must be >= 1")

    @classmethod
    def uniform(cls, width: int, depth: int, activation, init: Init, input_dim: int | None = None):
        return cls((input_dim or width,) + (width,) * depth, activation, init)

    @property
    def depth(self) -> int:
        return len(self.widths) - 1


# -- normalization ------------------------------------------------------------


def normalize_individual(x) -> np.ndarray:
    """Zero mean, unit corrected variance over the coordinates of one input."""
    return standardize(np.asarray(x, dtype=float).ravel())


def normalize_whole_dataset(data, channels=None) -> np.ndarray:
    """Per-channel affine map with dataset-wide mean and corrected std.

    ``channels`` lists channel lengths; channel i occupies a contiguous block
    of each row.  ``None`` means a single channel.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError("dataset must be a non-empty 2-D array (samples x features)")
    channels = [data.shape[1]] if channels is None else [int(c) for c in channels]
    if sum(channels) != data.shape[1] or min(channels) < 1:
        raise ValueError("channel lengths must be positive and sum to the feature count")
    out = np.empty_like(data)
    start = 0
    for length in channels:
        block = data[:, start : start + length]
        if block.size < 2:
            raise ValueError("a channel needs at least two values to estimate its spread")
        mu = block.mean()
        sd = block.std(ddof=1)
        if not sd > 0:
            raise ValueError("channel has zero variance")
        out[:, start : start + length] = (block - mu) / sd
        start += length
    return out


def synthetic_input(n0: int, seed: int) -> np.ndarray:
    """A single individually normalized Gaussian input vector."""
    return normalize_individual(make_rng(seed, STREAM_INPUT).standard_normal(n0))


def synthetic_classes(n_classes: int, per_class: int, n0: int, seed: int, spread: float = 0.5):
    """Gaussian blobs around random unit-norm centers (scaled by sqrt(n0)),
    each point individually normalized.  Returns (inputs, labels)."""
    if n_classes < 2 or per_class < 2:
        raise ValueError("need >= 2 classes and >= 2 samples per class")
    rng = make_rng(seed, STREAM_DATA)
    centers = rng.standard_normal((n_classes, n0))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    labels = np.repeat(np.arange(n_classes), per_class)
    raw = centers[labels] * math.sqrt(n0) + spread * rng.standard_normal((labels.size, n0))
    return np.stack([normalize_individual(r) for r in raw]), labels


def load_dataset_csv(path, sidecar=None):
    """CSV rows: integer label, then features.  ``sidecar`` is an optional
    JSON file ``{"channels": [lengths...]}``.  Returns (features, labels, channels)."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        try:
            label = int(fields[0])
            feats = [float(v) for v in fields[1:]]
        except ValueError:
            if not rows:
                continue  # header row
            raise ValueError(f"{path}:{lineno}: expected an integer label followed by numbers")
        if not feats:
            raise ValueError(f"{path}:{lineno}: row has no features")
        rows.append((label, feats))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0][1])
    if any(len(f) != width for _, f in rows):
        raise ValueError(f"{path}: rows have differing feature counts")
    labels = np.array([r[0] for r in rows])
    data = np.array([r[1] for r in rows])
    channels = None
    if sidecar is not None:
        channels = json.loads(Path(sidecar).read_text())["channels"]
    return data, labels, channels


# -- forward passes -----------------------------------------------------------


def _apply(activation, z):
    out = activation(z)
    return np.asarray(out, dtype=z.dtype)


def forward(config: NetworkConfig, x, seed: int, weight_hook=None) -> list[np.ndarray]:
    """One realization of Z^1..Z^L (float64) under freshly drawn parameters.

    ``weight_hook(layer, shape)``, if given, supplies the weight matrices.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (config.widths[0],):
        raise ValueError(f"input has shape {x.shape}, expected ({config.widths[0]},)")
    rng = make_rng(seed, STREAM_PARAMS)
    out = []
    act = x
    for layer in range(config.depth):
        n_in, n_out = config.widths[layer], config.widths[layer + 1]
        if weight_hook is None:
            w = config.init.weights(rng, (n_out, n_in), np.float64)
        else:
            w = np.asarray(weight_hook(layer, (n_out, n_in)), dtype=float)
        z = w @ act / math.sqrt(n_in)
        b = config.init.bias(rng, (n_out,), np.float64)
        if b is not None:
            z = z + b
        out.append(z)
        act = _apply(config.activation, z)
    return out


def _batched_layers(config: NetworkConfig, inputs: np.ndarray, rng, draws: int, dtype=np.float32):
    """Yield Z^l for l = 1..L with shape (draws, n_inputs, n_l)."""
    act = np.broadcast_to(inputs.astype(dtype), (draws,) + inputs.shape)
    for layer in range(config.depth):
        n_in, n_out = config.widths[layer], config.widths[layer + 1]
        w = config.init.weights(rng, (draws, n_in, n_out), dtype)
        z = np.matmul(act, w) * dtype(1.0 / math.sqrt(n_in))
        b = config.init.bias(rng, (draws, 1, n_out), dtype)
        if b is not None:
            z += b
        yield z
        act = _apply(config.activation, z)


def _chunks(total: int, size: int):
    return [(i, min(size, total - i * size)) for i in range(math.ceil(total / size))]


def _run_chunks(fn, chunks, threads: int | None):
    threads = threads or default_threads()
    if threads <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


@dataclass(frozen=True)
class LayerStats:
    layer: int
    ks_raw: float
    ks_standardized: float
    mean: float
    std: float


@dataclass
class PropagationReport:
    layers: list[LayerStats]
    samples: int
    alpha: float
    threshold: float
    metadata: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [
            {
                "layer": s.layer,
                "ks_raw": s.ks_raw,
                "ks_standardized": s.ks_standardized,
                "mean": s.mean,
                "std": s.std,
                "threshold": self.threshold,
            }
            for s in self.layers
        ]


def sample_layers(config: NetworkConfig, x, s: int, seed: int, threads=None, chunk: int = DEFAULT_CHUNK):
    """s draws of the tracked coordinate Z^l_1 for every layer: shape (L, s)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (config.widths[0],):
        raise ValueError(f"input has shape {x.shape}, expected ({config.widths[0]},)")

    def work(item):
        idx, size = item
        rng = make_rng(seed, (STREAM_PARAMS, idx))
        return np.stack([z[:, 0, 0].astype(float) for z in _batched_layers(config, x[None, :], rng, size)])

    parts = _run_chunks(work, _chunks(s, chunk), threads)
    return np.concatenate(parts, axis=1)


def layer_distribution_experiment(
    config: NetworkConfig, x, s: int, seed: int, alpha: float = 0.05, threads=None, chunk: int = DEFAULT_CHUNK
) -> PropagationReport:
    """KS distance of Z^l_1 to N(0, 1), raw and standardized, at every layer."""
    if s < 100:
        raise ValueError("need at least 100 parameter draws")
    samples = sample_layers(config, x, s, seed, threads, chunk)
    stats = []
    for layer, z in enumerate(samples, 1):
        std = float(z.std(ddof=1))
        ks_std = ks_statistic(standardize(z)) if std > 0 else 1.0
        stats.append(LayerStats(layer, ks_statistic(z), ks_std, float(z.mean()), std))
    meta = {"tracked_coordinate": 1, "chunk": chunk, "seed": seed}
    return PropagationReport(stats, s, alpha, ks_threshold(s, alpha), meta)


# -- correlations -------------------------------------------------------------


@dataclass
class CorrelationReport:
    matrices: list[np.ndarray]  # one P x P matrix per layer
    classes: list
    n_init: int
    metadata: dict = field(default_factory=dict)


def pairwise_correlations(config: NetworkConfig, inputs, n_init: int, seed: int, threads=None, chunk: int = 20):
    """c_ab^l for all input pairs: raw second moments are averaged over
    draws and coordinates first, then normalized.  Returns (L, N, N)."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != config.widths[0]:
        raise ValueError("inputs must have shape (N, n0)")

    def work(item):
        idx, size = item
        rng = make_rng(seed, (STREAM_PARAMS, idx))
        return np.stack(
            [np.einsum("dai,dbi->ab", z, z, dtype=np.float64) for z in _batched_layers(config, inputs, rng, size)]
        )

    parts = _run_chunks(work, _chunks(n_init, chunk), threads)
    moments = np.sum(parts, axis=0)
    diag = np.sqrt(np.einsum("laa->la", moments))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = moments / (diag[:, :, None] * diag[:, None, :])
    return np.clip(corr, -1.0, 1.0)


def correlation_experiment(
    inputs, labels, config: NetworkConfig, n_init: int, seed: int, threads=None
) -> CorrelationReport:
    """Class-averaged correlation matrices C_pq per layer (pairs a = b excluded)."""
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    if min(np.sum(labels == c) for c in classes) < 2:
        raise ValueError("need at least two samples per class")
    corr = pairwise_correlations(config, inputs, n_init, seed, threads)
    off = ~np.eye(labels.size, dtype=bool)
    members = [labels == c for c in classes]
    mats = []
    for layer in corr:
        m = np.empty((len(classes), len(classes)))
        for p, mp in enumerate(members):
            for q, mq in enumerate(members):
                block = (mp[:, None] & mq[None, :]) & off
                m[p, q] = layer[block].mean()
        mats.append(0.5 * (m + m.T))
    meta = {"averaging": "raw second moments over draws and coordinates, then normalized", "seed": seed}
    return CorrelationReport(mats, classes, n_init, meta)


# -- one- and two-layer tests -------------------------------------------------


@dataclass(frozen=True)
class ProductTestResult:
    raw: KsResult
    standardized: KsResult
    mean: float
    std: float


def _product_chunk(activation, init: Init, n: int, rng, size: int) -> np.ndarray:
    z = rng.standard_normal((size, n))
    w = init.weights(rng, (size, n), np.float64)
    out = np.einsum("sn,sn->s", w, np.asarray(activation(z), dtype=float)) / math.sqrt(n)
    b = init.bias(rng, (size,), np.float64)
    return out if b is None else out + b


def product_samples(n: int, activation, init: Init, s: int, seed: int, threads=None, chunk: int = 100_000):
    """s draws of Z' = W . phi(Z) / sqrt(n) with Z ~ N(0, I_n)."""
    if n < 1:
        raise ValueError("n must be >= 1")

    def work(item):
        idx, size = item
        return _product_chunk(activation, init, n, make_rng(seed, (STREAM_PRODUCT, idx)), size)

    return np.concatenate(_run_chunks(work, _chunks(s, max(1, chunk // n)), threads))


def product_test(n: int, activation, init: Init, s: int, seed: int, alpha: float = 0.05, threads=None):
    z = product_samples(n, activation, init, s, seed, threads)
    return ProductTestResult(
        ks_test(z, std_normal_cdf, alpha), ks_test(standardize(z), std_normal_cdf, alpha), float(z.mean()), float(z.std(ddof=1))
    )


def independence_samples(n0: int, n1: int, activation, init: Init, s: int, seed: int, threads=None, chunk: int = 50_000):
    """s draws of Z = W2 phi(W1 X / sqrt(n0)) / sqrt(n1) with X ~ N(0, I_n0)."""
    if n0 < 1 or n1 < 1:
        raise ValueError("widths must be >= 1")

    def work(item):
        idx, size = item
        rng = make_rng(seed, (STREAM_INDEPENDENCE, idx))
        x = rng.standard_normal((size, n0))
        w1 = init.weights(rng, (size, n1, n0), np.float64)
        w2 = init.weights(rng, (size, n1), np.float64)
        hidden = np.einsum("sij,sj->si", w1, x) / math.sqrt(n0)
        return np.einsum("si,si->s", w2, np.asarray(activation(hidden), dtype=float)) / math.sqrt(n1)

    return np.concatenate(_run_chunks(work, _chunks(s, chunk), threads))


def independence_experiment(
    n0: int, n1: int, activation, init: Init, s: int, seed: int, alpha: float = 0.05, threads=None
) -> KsResult:
    """Standardized KS of the two-layer scalar output against N(0, 1)."""
    z = independence_samples(n0, n1, activation, init, s, seed, threads)
    return ks_test(standardize(z), std_normal_cdf, alpha)
