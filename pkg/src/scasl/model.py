"""MLP definition, floating-point reference path, trainer, and file I/O.

The model is a plain fully connected network: y = f(W y_prev + b) with
tanh on hidden layers and raw logits at the output. Weights are stored as
float32 so that save -> load -> forward is bit-identical.

``stanh_states`` is optional metadata carried with the model: the
per-hidden-layer FSM state counts the stochastic executor should use.
The floating-point path ignores it; training under the matching per-layer
weight caps (see ``scinfer.weight_caps``) is what makes the stochastic
realization exact in expectation.
"""

import gzip
import struct
from dataclasses import dataclass, replace

import numpy as np

ACTIVATIONS = ("tanh", "identity")
MODEL_MAGIC = "SCASL1"


class FormatError(ValueError):
    """Raised for malformed model or dataset files."""


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class MlpModel:
    """Fully connected network; weights[i] has shape (n_{i+1}, n_i)."""

    weights: list
    biases: list | None = None
    activation: str = "tanh"
    stanh_states: list | None = None
    encode_gains: list | None = None
    normalized_inputs: bool = False

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.weights = [np.asarray(w, dtype=np.float32) for w in self.weights]
        for a, b in zip(self.weights, self.weights[1:]):
            if b.shape[1] != a.shape[0]:
                raise ValueError("weight matrix dimensions do not chain")
        if self.biases is not None:
            self.biases = [np.asarray(b, dtype=np.float32)
                           for b in self.biases]
            if len(self.biases) != len(self.weights) or any(
                    b.shape != (w.shape[0],)
                    for b, w in zip(self.biases, self.weights)):
                raise ValueError("bias shapes do not match weights")
        if self.stanh_states is not None:
            self.stanh_states = [int(n) for n in self.stanh_states]
            if len(self.stanh_states) != len(self.weights) - 1:
                raise ValueError("need one state count per hidden layer")
        if self.encode_gains is not None:
            self.encode_gains = [float(g) for g in self.encode_gains]
            if len(self.encode_gains) != len(self.weights):
                raise ValueError("need one encoding gain per layer")

    @property
    def layer_sizes(self) -> list:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def num_layers(self) -> int:
        """k: count of layers including the input layer."""
        return len(self.weights) + 1


def init_model(layer_sizes, seed: int = 0, activation: str = "tanh",
               stanh_states=None, weight_caps=None) -> MlpModel:
    """Seeded uniform init in [-r, r], r = sqrt(6 / (n_in + n_out)).

    ``weight_caps`` additionally clips the init range per layer, for
    models that must stay representable by the stochastic executor.
    """
    rng = np.random.default_rng(seed)
    weights = []
    for i, (n_in, n_out) in enumerate(zip(layer_sizes, layer_sizes[1:])):
        r = np.sqrt(6.0 / (n_in + n_out))
        if weight_caps is not None:
            r = min(r, float(weight_caps[i]))
        weights.append(rng.uniform(-r, r, size=(n_out, n_in)))
    return MlpModel(weights, activation=activation,
                    stanh_states=list(stanh_states) if stanh_states else None)


def forward_fp(model: MlpModel, x):
    """Reference forward pass.

    Returns (logits, layer_outputs) where layer_outputs[i] is the
    post-activation output of layer i+1 and the final entry is the raw
    logits vector. Accepts a single vector or a (batch, n_1) matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.layer_sizes[0]:
        raise ValueError(
            f"input length {x.shape[-1]} != first layer {model.layer_sizes[0]}")
    outputs = []
    y = x
    last = len(model.weights) - 1
    for i, w in enumerate(model.weights):
        z = y @ w.astype(np.float64).T
        if model.biases is not None:
            z = z + model.biases[i].astype(np.float64)
        if i < last and model.activation == "tanh":
            y = np.tanh(z)
        else:
            y = z
        outputs.append(y)
    return outputs[-1], outputs


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_sgd(model: MlpModel, data: "Dataset", epochs: int = 5,
              lr: float = 0.1, seed: int = 0, batch_size: int = 128,
              momentum: float = 0.9, weight_decay: float = 0.0,
              weight_caps=None, train_biases: bool = False,
              input_binarize: bool = False, hidden_noise: float = 0.0,
              verbose: bool = False) -> MlpModel:
    """Minibatch SGD with momentum on the softmax cross-entropy loss.

    When ``weight_caps`` is given, layer i is optimized in units of its
    cap (step sizes stay balanced across layers whose admissible weight
    ranges differ by orders of magnitude) and hard-clipped to the cap
    after every step. Deterministic for a fixed seed.

    ``input_binarize`` feeds each batch a fresh stochastic +-1
    binarization of the inputs and ``hidden_noise`` adds zero-mean noise
    of standard deviation hidden_noise * sqrt(1 - y^2) to hidden
    activations: together they expose the optimizer to the same
    fluctuations a single-bit stochastic evaluation produces, which makes
    the learned network tolerant of them.
    """
    rng = np.random.default_rng(seed)
    ws = [w.astype(np.float64).copy() for w in model.weights]
    caps = ([float(c) for c in weight_caps] if weight_caps is not None
            else [None] * len(ws))
    bs = None
    if train_biases:
        bs = ([b.astype(np.float64).copy() for b in model.biases]
              if model.biases is not None
              else [np.zeros(w.shape[0]) for w in ws])
    vel_w = [np.zeros_like(w) for w in ws]
    vel_b = [np.zeros_like(b) for b in bs] if bs is not None else None

    x_all = np.asarray(data.images, dtype=np.float64)
    y_all = np.asarray(data.labels)
    n = x_all.shape[0]
    last = len(ws) - 1

    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb, yb = x_all[idx], y_all[idx]
            if input_binarize:
                p = (np.clip(xb, -1.0, 1.0) + 1.0) / 2.0
                xb = 2.0 * (rng.random(xb.shape) < p) - 1.0

            # forward
            acts = [xb]
            y = xb
            for i, w in enumerate(ws):
                z = y @ w.T
                if bs is not None:
                    z = z + bs[i]
                y = np.tanh(z) if (i < last and model.activation == "tanh") \
                    else z
                if i < last and hidden_noise:
                    y = y + hidden_noise * np.sqrt(
                        np.maximum(1.0 - y * y, 0.0)) * rng.standard_normal(
                        y.shape)
                acts.append(y)
            probs = _softmax(acts[-1])
            eps = 1e-12
            loss = -np.log(probs[np.arange(len(yb)), yb] + eps).mean()
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {start}")
            epoch_loss += loss * len(yb)

            # backward
            delta = probs
            delta[np.arange(len(yb)), yb] -= 1.0
            delta /= len(yb)
            for i in range(last, -1, -1):
                grad_w = delta.T @ acts[i] + weight_decay * ws[i]
                if bs is not None:
                    grad_b = delta.sum(axis=0)
                if i > 0:
                    delta = delta @ ws[i]
                    if model.activation == "tanh":
                        delta = delta * (1.0 - acts[i] ** 2)
                scale = caps[i] if caps[i] is not None else 1.0
                vel_w[i] = momentum * vel_w[i] - lr * scale * grad_w
                ws[i] += vel_w[i]
                if caps[i] is not None:
                    np.clip(ws[i], -caps[i], caps[i], out=ws[i])
                if bs is not None:
                    vel_b[i] = momentum * vel_b[i] - lr * grad_b
                    bs[i] += vel_b[i]
        if verbose:
            print(f"epoch {epoch}: loss {epoch_loss / n:.4f}")

    return replace(model, weights=[w.astype(np.float32) for w in ws],
                   biases=None if bs is None
                   else [b.astype(np.float32) for b in bs])


def accuracy(model: MlpModel, data: "Dataset") -> float:
    logits, _ = forward_fp(model, np.asarray(data.images))
    return float((logits.argmax(axis=1) == np.asarray(data.labels)).mean())


@dataclass
class Dataset:
    """Vectors scaled to [0, 1] with integer class labels."""

    images: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2 or len(self.images) != len(self.labels):
            raise ValueError("images and labels must have matching counts")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.images[idx], self.labels[idx], self.name)


def _open_maybe_gzip(path):
    f = open(path, "rb")
    magic = f.read(2)
    f.seek(0)
    if magic == b"\x1f\x8b":
        return gzip.open(f)
    return f


def load_idx(images_path, labels_path, name: str = "") -> Dataset:
    """Parse big-endian IDX image/label files (gzipped or raw).

    Pixels are scaled by 1/255; images flatten to vectors row-major.
    Fails closed: any truncation or magic mismatch raises FormatError.
    """
    with _open_maybe_gzip(images_path) as f:
        head = f.read(16)
        if len(head) != 16:
            raise FormatError("image file header truncated")
        magic, n, rows, cols = struct.unpack(">IIII", head)
        if magic != 0x00000803:
            raise FormatError(f"bad image magic 0x{magic:08x}")
        raw = f.read(n * rows * cols)
        if len(raw) != n * rows * cols:
            raise FormatError("image file data truncated")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols)

    with _open_maybe_gzip(labels_path) as f:
        head = f.read(8)
        if len(head) != 8:
            raise FormatError("label file header truncated")
        magic, n_labels = struct.unpack(">II", head)
        if magic != 0x00000801:
            raise FormatError(f"bad label magic 0x{magic:08x}")
        raw = f.read(n_labels)
        if len(raw) != n_labels:
            raise FormatError("label file data truncated")
    labels = np.frombuffer(raw, dtype=np.uint8)

    if n != n_labels:
        raise FormatError(f"{n} images but {n_labels} labels")
    return Dataset(images / 255.0, labels.astype(np.int64), name)


def save_model(model: MlpModel, path) -> None:
    """Write the portable model file.

    Layout: a text header terminated by an ``end`` line --
        SCASL1
        layers <n_1> ... <n_k>
        activation <tanh|identity>
        [stanh_states <N_1> ... <N_{k-1}>]
        [encode_gains <g_1> ... <g_{k-1}> <g_k>]
        [normalized_inputs 1]
        biases <0|1>
        end
    -- followed by each weight matrix as little-endian float32 row-major
    in layer order, then bias vectors (if any) in layer order.
    """
    lines = [MODEL_MAGIC,
             "layers " + " ".join(str(s) for s in model.layer_sizes),
             f"activation {model.activation}"]
    if model.stanh_states is not None:
        lines.append("stanh_states "
                     + " ".join(str(n) for n in model.stanh_states))
    if model.encode_gains is not None:
        lines.append("encode_gains "
                     + " ".join(f"{g:.17g}" for g in model.encode_gains))
    if model.normalized_inputs:
        lines.append("normalized_inputs 1")
    lines.append(f"biases {0 if model.biases is None else 1}")
    lines.append("end")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("ascii"))
        for w in model.weights:
            f.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
        if model.biases is not None:
            for b in model.biases:
                f.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_model(path) -> MlpModel:
    with open(path, "rb") as f:
        header = {}
        first = f.readline().decode("ascii", errors="replace").strip()
        if first != MODEL_MAGIC:
            raise FormatError(f"bad model magic {first!r}")
        while True:
            line = f.readline().decode("ascii", errors="replace").strip()
            if line == "end":
                break
            if not line:
                raise FormatError("model header truncated")
            key, _, rest = line.partition(" ")
            header[key] = rest
        try:
            sizes = [int(s) for s in header["layers"].split()]
            activation = header["activation"]
            has_biases = bool(int(header["biases"]))
        except (KeyError, ValueError) as e:
            raise FormatError(f"invalid model header: {e}") from None
        stanh_states = ([int(s) for s in header["stanh_states"].split()]
                        if "stanh_states" in header else None)
        encode_gains = ([float(s) for s in header["encode_gains"].split()]
                        if "encode_gains" in header else None)
        normalized = bool(int(header.get("normalized_inputs", "0")))
        weights, biases = [], []
        for n_in, n_out in zip(sizes, sizes[1:]):
            raw = f.read(4 * n_in * n_out)
            if len(raw) != 4 * n_in * n_out:
                raise FormatError("model weights truncated")
            weights.append(np.frombuffer(raw, dtype="<f4")
                           .reshape(n_out, n_in).copy())
        if has_biases:
            for n_out in sizes[1:]:
                raw = f.read(4 * n_out)
                if len(raw) != 4 * n_out:
                    raise FormatError("model biases truncated")
                biases.append(np.frombuffer(raw, dtype="<f4").copy())
    return MlpModel(weights, biases=biases if has_biases else None,
                    activation=activation, stanh_states=stanh_states,
                    encode_gains=encode_gains, normalized_inputs=normalized)

