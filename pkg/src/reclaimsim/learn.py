"""Imitation learning of the windowed Bélády oracle.

The model scores each idle container independently (rectifier hidden layers,
logistic output, binary cross-entropy). Training data comes from simulator
runs driven by the oracle itself: at every eviction decision each candidate
becomes one sample, labelled 1 iff the oracle evicted it.
"""
import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from . import features
from ._rng import make_rng
from .policies import BeladyPolicy, belady_select
from .simcore import Engine
from .trace import DEFAULT_WORKLOADS

HIDDEN_LAYERS = (256, 256, 256, 256, 256)
DEFAULT_DIMS = (features.FEATURE_DIM, *HIDDEN_LAYERS, 1)

MAGIC = b"RSIMMLP\x00"
FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingSample:
    features: np.ndarray
    label: int
    group: int


@dataclass
class TrainingData:
    """Samples stored column-wise; ``group`` ties candidates of one decision."""

    X: np.ndarray
    y: np.ndarray
    group: np.ndarray

    @classmethod
    def empty(cls, dim=features.FEATURE_DIM):
        return cls(np.zeros((0, dim)), np.zeros(0), np.zeros(0, dtype=np.int64))

    def __len__(self):
        return self.y.size

    @property
    def n_groups(self):
        return int(np.unique(self.group).size)

    def samples(self):
        for i in range(len(self)):
            yield TrainingSample(self.X[i], int(self.y[i]), int(self.group[i]))

    def group_sizes(self):
        _, inv, counts = np.unique(self.group, return_inverse=True, return_counts=True)
        return counts[inv]

    def select_groups(self, keep):
        mask = np.isin(self.group, np.asarray(sorted(keep), dtype=np.int64))
        return TrainingData(self.X[mask], self.y[mask], self.group[mask])

    @staticmethod
    def concat(parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            return TrainingData.empty()
        out_g, offset = [], 0
        for p in parts:
            _, g = np.unique(p.group, return_inverse=True)
            out_g.append(g + offset)
            offset += int(g.max()) + 1
        return TrainingData(np.vstack([p.X for p in parts]), np.concatenate([p.y for p in parts]),
                            np.concatenate(out_g).astype(np.int64))


@dataclass
class MlpModel:
    layer_dims: tuple
    weights: list
    biases: list
    loss_curve: list = field(default_factory=list)

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count mismatch")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[i], self.layer_dims[i + 1]) or b.shape != (self.layer_dims[i + 1],):
                raise ValueError(f"layer {i} has shape {w.shape}/{b.shape}")

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self):
        return MlpModel(self.layer_dims, [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], list(self.loss_curve))


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 256
    learning_rate: float = 1e-3
    seed: int = 0
    mix_old_fraction: float = 0.0
    layer_dims: tuple = DEFAULT_DIMS
    balance_groups: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.mix_old_fraction <= 1.0:
            raise ValueError("mix_old_fraction must lie in [0, 1]")


# ------------------------------------------------------------------ model math

def init_model(layer_dims=DEFAULT_DIMS, seed=0):
    """He-style uniform initialisation, bound sqrt(6 / fan_in)."""
    rng = make_rng(seed, "mlp-init")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(tuple(layer_dims), weights, biases)


def zero_model(layer_dims=DEFAULT_DIMS):
    return MlpModel(tuple(layer_dims),
                    [np.zeros((a, b)) for a, b in zip(layer_dims[:-1], layer_dims[1:])],
                    [np.zeros(b) for b in layer_dims[1:]])


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logits(model, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.layer_dims[0]:
        raise ValueError(f"feature dimension {X.shape[1]} != model input {model.layer_dims[0]}")
    h = X
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if i < last:
            np.maximum(h, 0.0, out=h)
    return h[:, 0]


_P_LO = np.nextafter(0.0, 1.0)
_P_HI = np.nextafter(1.0, 0.0)


def forward(model, X):
    """Eviction probability for every row of ``X``, kept strictly inside (0, 1)."""
    return np.clip(_sigmoid(logits(model, X)), _P_LO, _P_HI)


def loss_and_grads(model, X, y, w=None):
    """Weighted mean binary cross-entropy and its gradient for every parameter."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=np.float64)
    wsum = w.sum()
    acts = [X]
    pre = []
    h = X
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ W + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)
    z = pre[-1][:, 0]
    # log(1 + e^z) - y z, computed stably
    loss = float(np.sum(w * (np.logaddexp(0.0, z) - y * z)) / wsum)
    delta = ((_sigmoid(z) - y) * w / wsum)[:, None]
    gW, gb = [None] * len(model.weights), [None] * len(model.weights)
    for i in range(last, -1, -1):
        gW[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    return loss, gW, gb


def sample_weights(data, balance=True):
    """Negatives weigh 1, the single positive of a k-candidate decision weighs k-1."""
    if not balance:
        return np.ones(len(data))
    k = data.group_sizes()
    return np.where(data.y > 0.5, k - 1.0, 1.0)


# ------------------------------------------------------------------ training

class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(data, config=None, init=None):
    """Mini-batch Adam on weighted BCE; returns the model with its loss curve.

    ``loss_curve[0]`` is the full-set loss before the first update and each
    following entry the full-set loss after an epoch.
    """
    config = config or TrainConfig()
    if len(data) == 0:
        raise TrainingError("no training samples")
    model = init.copy() if init is not None else init_model(config.layer_dims, config.seed)
    model.loss_curve = []
    w_all = sample_weights(data, config.balance_groups)
    if w_all.sum() <= 0:
        raise TrainingError("all sample weights are zero (only single-candidate decisions)")
    rng = make_rng(config.seed, "mlp-shuffle")
    params = model.params()
    opt = _Adam(params, config.learning_rate)

    def full_loss():
        loss, _, _ = _chunked_loss(model, data.X, data.y, w_all)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite training loss after {len(model.loss_curve)} epochs")
        return loss

    model.loss_curve.append(full_loss())
    n = len(data)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            wb = w_all[idx]
            if wb.sum() <= 0:
                continue
            loss, gW, gb = loss_and_grads(model, data.X[idx], data.y[idx], wb)
            if not np.isfinite(loss):
                raise TrainingError("non-finite mini-batch loss")
            grads = []
            for a, b in zip(gW, gb):
                grads += [a, b]
            opt.step(params, grads)
        model.loss_curve.append(full_loss())
    return model


def _chunked_loss(model, X, y, w, chunk=8192):
    total = 0.0
    for lo in range(0, len(y), chunk):
        z = logits(model, X[lo:lo + chunk])
        total += float(np.sum(w[lo:lo + chunk] * (np.logaddexp(0.0, z) - y[lo:lo + chunk] * z)))
    return total / w.sum(), None, None


def retrain(base_model, old, new, config=None):
    """Retrain on recent data, optionally mixing in part of the older corpus.

    ``config.mix_old_fraction`` of the old decision groups (seeded choice) are
    added to ``new``; 0 trains on ``new`` alone. A base model, when given, is
    the starting point instead of a fresh initialisation.
    """
    config = config or TrainConfig()
    if len(new) == 0:
        raise TrainingError("retraining needs new samples")
    corpus = mix_corpus(old, new, config.mix_old_fraction, config.seed)
    return train(corpus, config, init=base_model)


def mix_corpus(old, new, fraction, seed=0):
    if old is None or len(old) == 0 or fraction <= 0.0:
        return TrainingData.concat([new])
    groups = np.unique(old.group)
    k = int(round(fraction * groups.size))
    if k >= groups.size:
        chosen = old
    else:
        rng = make_rng(seed, "retrain-mix")
        chosen = old.select_groups(rng.choice(groups, size=k, replace=False).tolist())
    return TrainingData.concat([chosen, new])


# ------------------------------------------------------------------ data generation

def generate_training_data(trace_sets, config, workloads=DEFAULT_WORKLOADS, window=30,
                           pools=("warm", "reclaim"), driver=None):
    """Run every event stream and record the oracle's choice at each eviction.

    By default the oracle also drives the simulation. ``driver`` (a callable
    returning a fresh policy) lets another policy, typically the current
    model, pick the actual victims while the samples are still labelled with
    what the oracle would have evicted in that state.
    """
    n_workloads = len(workloads)
    Xs, ys, gs = [], [], []
    group = 0

    def hook(decision, victim):
        nonlocal group
        if decision.pool not in pools:
            return
        if driver is not None:
            victim = belady_select(decision.candidates, decision.oracle(window))
        system, vecs = decision.state_vectors()
        Xs.append(features.encode_batch(system, vecs, n_workloads))
        ys.append(np.array([1.0 if c.container_id == victim else 0.0 for c in decision.candidates]))
        gs.append(np.full(len(vecs), group, dtype=np.int64))
        group += 1

    for events in trace_sets:
        policy = BeladyPolicy(window) if driver is None else driver()
        Engine(config, policy, workloads, decision_hook=hook).run(events)
    if not Xs:
        return TrainingData.empty()
    return TrainingData(np.vstack(Xs), np.concatenate(ys), np.concatenate(gs))


# ------------------------------------------------------------------ persistence

def save_model(model, path):
    """Layout (little endian): magic[8] | u32 version | u32 n_dims | u32 dims[n_dims]
    | per layer: f64 weights[in*out] row-major, f64 bias[out]."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(model.layer_dims)))
        fh.write(struct.pack(f"<{len(model.layer_dims)}I", *model.layer_dims))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path, expect_dims=None):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise ModelFormatError("magic: not a reclaimsim model file")
    if len(blob) < 16:
        raise ModelFormatError("header: file truncated")
    version, n_dims = struct.unpack_from("<II", blob, 8)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"version: unsupported format version {version}")
    if n_dims < 2 or len(blob) < 16 + 4 * n_dims:
        raise ModelFormatError("layer_dims: header truncated or invalid")
    dims = struct.unpack_from(f"<{n_dims}I", blob, 16)
    if expect_dims is not None and tuple(dims) != tuple(expect_dims):
        raise ModelFormatError(
            f"layer_dims: file has {len(dims) - 2} hidden layers {dims}, expected {tuple(expect_dims)}")
    off = 16 + 4 * n_dims
    need = sum(a * b + b for a, b in zip(dims[:-1], dims[1:])) * 8
    if len(blob) - off != need:
        raise ModelFormatError(f"weights: expected {need} bytes of parameters, found {len(blob) - off}")
    weights, biases = [], []
    for a, b in zip(dims[:-1], dims[1:]):
        weights.append(np.frombuffer(blob, "<f8", a * b, off).reshape(a, b).astype(np.float64))
        off += 8 * a * b
        biases.append(np.frombuffer(blob, "<f8", b, off).astype(np.float64))
        off += 8 * b
    return MlpModel(dims, weights, biases)


def write_samples_csv(data, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(features.FEATURE_NAMES) + ["label"])
        for x, y in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def read_samples_csv(path):
    """Inverse of :func:`write_samples_csv`; groups are rebuilt from the shared system prefix."""
    X, y = [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if len(header) != features.FEATURE_DIM + 1:
            raise ValueError(f"expected {features.FEATURE_DIM + 1} columns, got {len(header)}")
        for row in r:
            X.append([float(v) for v in row[:-1]])
            y.append(float(row[-1]))
    X = np.array(X, dtype=np.float64).reshape(-1, features.FEATURE_DIM)
    group = np.zeros(len(y), dtype=np.int64)
    g = 0
    for i in range(1, len(y)):
        if not np.array_equal(X[i, :features.SYSTEM_DIM], X[i - 1, :features.SYSTEM_DIM]):
            g += 1
        group[i] = g
    return TrainingData(X, np.array(y), group)
