"""Three-branch residual network with a dense sigmoid head, plus model files.

Model file layout (all integers little-endian)::

    magic        8 bytes   b"TRESNET\\0"
    version      u32       FORMAT_VERSION
    meta_len     u32
    metadata     meta_len bytes, UTF-8 JSON with sorted keys
    n_tensors    u32
    n_tensors x:
        name_len u16, name (UTF-8)
        ndim     u8,  dims (u32 each)
        data     prod(dims) float64, little-endian, C order
    checksum     32 bytes  SHA-256 of everything above

Tensors are written in the model's parameter order followed by the BN
running statistics.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import struct
from dataclasses import asdict

import numpy as np

from .errors import (
    ArchitectureError,
    ChecksumError,
    ModelLoadError,
    ModelMismatchError,
    ShapeError,
    StateError,
    UsageError,
)
from .nn import BatchNorm1d, Conv1d, Dense, GlobalAvgPool, ReLU, ResidualBlock, Sequential, Sigmoid
from .sampler import FragmentSpec

MAGIC = b"TRESNET\x00"
FORMAT_VERSION = 1
BRANCHES = ("locality", "periodicity", "tendency")


def num_blocks(length: int) -> int:
    """Stride-2 blocks needed to bring ``length`` down to 2 or less."""
    if length < 2:
        raise ArchitectureError(f"fragment length {length} is below 2")
    n = 0
    while length > 2:
        length = (length + 1) // 2
        n += 1
    return n


def build_branch(length, in_channels, stem_channels, rng):
    # every convolution output reaches a BN through linear paths only, so a
    # conv bias would be a constant shift the BN removes; none are kept
    layers = [("stem", Conv1d(in_channels, stem_channels, 3, stride=1, padding=1, bias=False, rng=rng))]
    channels = stem_channels
    for i in range(num_blocks(length)):
        layers.append((f"block{i}", ResidualBlock(channels, rng=rng, out_bias=False)))
        channels *= 2
    # pre-activation blocks leave the residual sum unnormalized; without this the
    # pooled features grow with depth and the sigmoid head saturates early in training
    layers.append(("bn_out", BatchNorm1d(channels)))
    layers.append(("relu_out", ReLU()))
    layers.append(("pool", GlobalAvgPool()))
    return Sequential(layers), channels


class TResNetModel:
    """Locality, periodicity and tendency branches fused by one dense unit.

    ``metadata`` carries the architecture (fragment spec, K, stem width,
    pooling) and any run information the caller wants stored with the file.
    """

    def __init__(self, spec: FragmentSpec, k: int, stem_channels: int = 16, seed: int = 0,
                 extra: dict | None = None):
        if k < 0:
            raise UsageError("k must be non-negative")
        if stem_channels < 1:
            raise UsageError("stem_channels must be >= 1")
        self.spec = spec
        self.k = k
        self.stem_channels = stem_channels
        self.seed = seed
        self.extra = dict(extra or {})
        rng = np.random.default_rng(seed)
        channels = 3 + k
        lengths = (spec.l_l, spec.l_p, spec.l_t)
        self.branches = {}
        self.feature_sizes = []
        for name, length in zip(BRANCHES, lengths):
            branch, width = build_branch(length, channels, stem_channels, rng)
            self.branches[name] = branch
            self.feature_sizes.append(width)
        self.fusion = Dense(sum(self.feature_sizes), 1, rng=rng)
        self.head = Sigmoid()
        self._forward_done = False

    @property
    def channels(self) -> int:
        return 3 + self.k

    @property
    def block_counts(self) -> dict:
        return {name: num_blocks(n) for name, n in zip(BRANCHES, (self.spec.l_l, self.spec.l_p, self.spec.l_t))}

    @property
    def metadata(self) -> dict:
        return {
            "fragment_spec": asdict(self.spec),
            "k": self.k,
            "stem_channels": self.stem_channels,
            "seed": self.seed,
            "pooling": "global_average",
            "extra": self.extra,
        }

    # parameters --------------------------------------------------------

    def named_params(self):
        for name, branch in self.branches.items():
            yield from branch.named_params(f"{name}.")
        yield from self.fusion.named_params("fusion.")

    def named_grads(self):
        for name, branch in self.branches.items():
            yield from branch.named_grads(f"{name}.")
        yield from self.fusion.named_grads("fusion.")

    def named_buffers(self):
        for name, branch in self.branches.items():
            yield from branch.named_buffers(f"{name}.")

    def parameters(self) -> dict:
        return dict(self.named_params())

    def gradients(self) -> dict:
        return dict(self.named_grads())

    def state_dict(self) -> dict:
        """Copies of every parameter and running statistic."""
        state = {k: v.copy() for k, v in self.named_params()}
        state.update({k: v.copy() for k, v in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict) -> None:
        targets = dict(self.named_params())
        targets.update(self.named_buffers())
        if set(targets) != set(state):
            missing = sorted(set(targets) ^ set(state))
            raise ModelMismatchError(f"state does not match the architecture: {missing[:5]}")
        for name, arr in targets.items():
            src = np.asarray(state[name], dtype=np.float64)
            if src.shape != arr.shape:
                raise ModelMismatchError(f"{name}: shape {src.shape} != {arr.shape}")
            arr[...] = src

    # forward / backward ------------------------------------------------

    def forward(self, locality, periodicity, tendency, training=False):
        """Predictions in (0, 1), one per sample."""
        expected = (self.spec.l_l, self.spec.l_p, self.spec.l_t)
        feats = []
        for (name, branch), x, length in zip(self.branches.items(), (locality, periodicity, tendency), expected):
            if x.ndim != 3 or x.shape[1:] != (length, self.channels):
                raise ShapeError(f"{name} fragment must be (B, {length}, {self.channels}), got {x.shape}")
            feats.append(branch.forward(x, training))
        z = self.fusion.forward(np.concatenate(feats, axis=1), training)
        self._forward_done = training
        return self.head.forward(z, training)[:, 0]

    def backward(self, dpred) -> dict:
        """Fill parameter gradients from dL/dprediction; returns them by name."""
        if not self._forward_done:
            raise StateError("backward needs a preceding training-mode forward")
        self._forward_done = False
        dz = self.head.backward(np.asarray(dpred, dtype=np.float64).reshape(-1, 1))
        dfeat = self.fusion.backward(dz)
        start = 0
        for (_, branch), width in zip(self.branches.items(), self.feature_sizes):
            branch.backward(dfeat[:, start:start + width])
            start += width
        return self.gradients()

    def predict(self, samples, batch_size: int = 512) -> np.ndarray:
        """Inference-mode predictions for a :class:`SampleSet`, in sample order."""
        out = np.empty(len(samples))
        for start in range(0, len(samples), batch_size):
            idx = np.arange(start, min(start + batch_size, len(samples)))
            frags, _ = samples.batch(idx)
            out[idx] = self.forward(*frags, training=False)
        return out

    def check_compatible(self, spec: FragmentSpec | None = None, k: int | None = None,
                         stem_channels: int | None = None) -> None:
        """Raise if a caller-supplied architecture value disagrees with this model."""
        problems = []
        if spec is not None and spec != self.spec:
            problems.append(f"fragment spec {asdict(spec)} != model {asdict(self.spec)}")
        if k is not None and k != self.k:
            problems.append(f"k={k} != model k={self.k}")
        if stem_channels is not None and stem_channels != self.stem_channels:
            problems.append(f"stem_channels={stem_channels} != model {self.stem_channels}")
        if problems:
            raise ModelMismatchError("; ".join(problems))


def build_model(spec: FragmentSpec, k: int, stem_channels: int = 16, seed: int = 0,
                extra: dict | None = None) -> TResNetModel:
    return TResNetModel(spec, k, stem_channels, seed, extra)


def mse_loss(predictions, targets):
    """Mean squared error and its gradient with respect to the predictions."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"predictions {p.shape} and targets {y.shape} differ in shape")
    if p.size == 0:
        raise UsageError("mse_loss needs at least one sample")
    diff = p - y
    return float(diff @ diff) / p.size, 2.0 * diff / p.size


# serialization -----------------------------------------------------------


def model_bytes(model: TResNetModel) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    meta = json.dumps(model.metadata, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<II", FORMAT_VERSION, len(meta)))
    buf.write(meta)
    tensors = list(model.named_params()) + list(model.named_buffers())
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = buf.getvalue()
    return body + hashlib.sha256(body).digest()


def save_model(model: TResNetModel, sink) -> None:
    """Write to a path or a binary stream."""
    data = model_bytes(model)
    if hasattr(sink, "write"):
        sink.write(data)
    else:
        with open(sink, "wb") as fh:
            fh.write(data)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ModelLoadError("model file is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def model_from_bytes(data: bytes) -> TResNetModel:
    if len(data) < len(MAGIC) + 32 or data[:len(MAGIC)] != MAGIC:
        raise ModelLoadError("not a model file (bad magic or truncated)")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("model file checksum mismatch (corrupt or truncated)")
    r = _Reader(body)
    r.take(len(MAGIC))
    version, meta_len = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise ModelLoadError(f"unsupported model format version {version}")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
        spec = FragmentSpec(**meta["fragment_spec"])
        model = TResNetModel(spec, meta["k"], meta["stem_channels"], meta.get("seed", 0), meta.get("extra"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelLoadError(f"bad model metadata: {exc}") from None
    (count,) = r.unpack("<I")
    state = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        n = math.prod(shape)
        state[name] = np.frombuffer(r.take(8 * n), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(body):
        raise ModelLoadError("trailing bytes after the last tensor")
    try:
        model.load_state_dict(state)
    except ModelMismatchError as exc:
        raise ModelLoadError(str(exc)) from None
    return model


def load_model(source) -> TResNetModel:
    """Read from a path or a binary stream."""
    if hasattr(source, "read"):
        return model_from_bytes(source.read())
    with open(source, "rb") as fh:
        return model_from_bytes(fh.read())
