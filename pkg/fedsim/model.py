from __future__ import annotations

import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence, Union

import numpy as np

from . import nn
from .errors import CheckpointError, EmptyShard, LayoutMismatch, ModelError, ShapeMismatch

logger = logging.getLogger(__name__)

KERNEL = 3


@dataclass(frozen=True)
class ModelArch:
    """mlp: média no tempo -> dense(ReLU) -> dense.

    conv_gru: por exemplo (T, D) ->
      conv3x3(c1) + ReLU + maxpool2x2 -> (c1, T//2, D//2)
      conv3x3(c2) + ReLU + maxpool2x2 -> (c2, T//4, D//4)
      GRU(gru_width) sobre T//4 quadros de c2 * (D//4) features
      média no tempo -> dense(hidden, ReLU) -> dense(n_classes)
    """

    kind: Literal["mlp", "conv_gru"] = "mlp"
    input_dims: int = 128
    n_classes: int = 4
    hidden: int = 64
    channels: tuple[int, int] = (16, 32)
    gru_width: int = 64

    def __post_init__(self) -> None:
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))

    def validate(self) -> None:
        if self.kind not in ("mlp", "conv_gru"):
            raise ModelError(f"arquitetura desconhecida {self.kind!r}")
        if self.n_classes < 2:
            raise ModelError("n_classes deve ser >= 2")
        widths = [self.input_dims, self.hidden]
        if self.kind == "conv_gru":
            if len(self.channels) != 2:
                raise ModelError("conv_gru precisa de exatamente dois números de canais")
            widths += [*self.channels, self.gru_width]
            if self.input_dims < 4:
                raise ModelError("conv_gru precisa de input_dims >= 4 (dois pools 2x2)")
        if min(widths) < 1:
            raise ModelError("todas as larguras devem ser >= 1")

    @property
    def gru_input(self) -> int:
        return self.channels[1] * (self.input_dims // 4)

    def tensor_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        if self.kind == "mlp":
            return [
                ("dense1.W", (self.input_dims, self.hidden)),
                ("dense1.b", (self.hidden,)),
                ("dense2.W", (self.hidden, self.n_classes)),
                ("dense2.b", (self.n_classes,)),
            ]
        c1, c2 = self.channels
        h = self.gru_width
        return [
            ("conv1.W", (c1, 1, KERNEL, KERNEL)),
            ("conv1.b", (c1,)),
            ("conv2.W", (c2, c1, KERNEL, KERNEL)),
            ("conv2.b", (c2,)),
            ("gru.Wzx", (self.gru_input, 2 * h)),
            ("gru.Wzh", (h, 2 * h)),
            ("gru.bz", (2 * h,)),
            ("gru.Wax", (self.gru_input, h)),
            ("gru.War", (h, h)),
            ("gru.ba", (h,)),
            ("dense1.W", (h, self.hidden)),
            ("dense1.b", (self.hidden,)),
            ("dense2.W", (self.hidden, self.n_classes)),
            ("dense2.b", (self.n_classes,)),
        ]


@dataclass(frozen=True)
class TensorSpec:
    name: str
    shape: tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))


@dataclass(eq=False)
class ParamVector:
    values: np.ndarray
    layout: tuple[TensorSpec, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.layout = tuple(self.layout)
        expected = 0
        for spec in self.layout:
            if spec.offset != expected:
                raise LayoutMismatch(f"tensor {spec.name} no offset {spec.offset}, esperado {expected}")
            expected += spec.size
        if self.values.ndim != 1 or expected != self.values.size:
            raise LayoutMismatch(f"o layout cobre {expected} valores, o vetor tem {self.values.size}")

    @classmethod
    def from_shapes(cls, shapes: Iterable[tuple[str, tuple[int, ...]]], values: np.ndarray | None = None) -> "ParamVector":
        layout, offset = [], 0
        for name, shape in shapes:
            spec = TensorSpec(name, tuple(int(s) for s in shape), offset)
            layout.append(spec)
            offset += spec.size
        return cls(np.zeros(offset) if values is None else values, tuple(layout))

    def __len__(self) -> int:
        return self.values.size

    def tensor(self, name: str) -> np.ndarray:
        for spec in self.layout:
            if spec.name == name:
                return self.values[spec.offset : spec.offset + spec.size].reshape(spec.shape)
        raise KeyError(name)

    def tensors(self) -> dict[str, np.ndarray]:
        return {s.name: self.values[s.offset : s.offset + s.size].reshape(s.shape) for s in self.layout}

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values, self.layout)

    def zeros_like(self) -> "ParamVector":
        return ParamVector(np.zeros_like(self.values), self.layout)

    def check_layout(self, other: "ParamVector") -> None:
        if self.layout != other.layout:
            raise LayoutMismatch("os layouts de parâmetros são diferentes")


@dataclass(eq=False)
class Batch:
    inputs: list[np.ndarray]
    targets: np.ndarray

    def __post_init__(self) -> None:
        self.targets = np.asarray(self.targets, dtype=np.int64)
        if not self.inputs:
            raise ShapeMismatch("lote vazio")
        if len(self.inputs) != len(self.targets):
            raise ShapeMismatch(f"{len(self.inputs)} entradas para {len(self.targets)} alvos")

    @classmethod
    def from_examples(cls, examples: Sequence[tuple[np.ndarray, int]]) -> "Batch":
        return cls([np.asarray(x, dtype=np.float64) for x, _ in examples], [y for _, y in examples])

    def __len__(self) -> int:
        return len(self.inputs)


SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]


def init_params(arch: ModelArch, seed: SeedLike = 0) -> ParamVector:
    """Pesos Glorot uniformes por tensor, vieses zerados."""
    arch.validate()
    rng = np.random.default_rng(seed)
    params = ParamVector.from_shapes(arch.tensor_shapes())
    for name, tensor in params.tensors().items():
        if tensor.ndim == 1:
            continue
        if tensor.ndim == 4:
            receptive = tensor.shape[2] * tensor.shape[3]
            fan_in, fan_out = tensor.shape[1] * receptive, tensor.shape[0] * receptive
        else:
            fan_in, fan_out = tensor.shape
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        tensor[...] = rng.uniform(-limit, limit, size=tensor.shape)
    return params


def _check_inputs(arch: ModelArch, batch: Batch) -> None:
    for x in batch.inputs:
        if x.ndim != 2 or x.shape[1] != arch.input_dims:
            raise ShapeMismatch(f"entrada com forma {x.shape}, a arquitetura espera (*, {arch.input_dims})")
        if x.shape[0] < (4 if arch.kind == "conv_gru" else 1):
            raise ShapeMismatch(f"entrada com {x.shape[0]} quadros é curta demais para {arch.kind}")
    if np.any(batch.targets < 0) or np.any(batch.targets >= arch.n_classes):
        raise ShapeMismatch("alvo fora de [0, n_classes)")


def _head_forward(pooled: np.ndarray, p: dict[str, np.ndarray]):
    a1, c1 = nn.dense_forward(pooled, p["dense1.W"], p["dense1.b"])
    h1, cr = nn.relu_forward(a1)
    logits, c2 = nn.dense_forward(h1, p["dense2.W"], p["dense2.b"])
    return logits, (c1, cr, c2)


def _head_backward(dlogits: np.ndarray, cache, p: dict[str, np.ndarray], g: dict[str, np.ndarray]) -> np.ndarray:
    c1, cr, c2 = cache
    dh1, dw2, db2 = nn.dense_backward(dlogits, c2, p["dense2.W"])
    da1 = nn.relu_backward(dh1, cr)
    dpooled, dw1, db1 = nn.dense_backward(da1, c1, p["dense1.W"])
    g["dense2.W"] += dw2
    g["dense2.b"] += db2
    g["dense1.W"] += dw1
    g["dense1.b"] += db1
    return dpooled


def _conv_gru_encode(x: np.ndarray, p: dict[str, np.ndarray]):
    img = x[None, :, :]
    a1, cc1 = nn.conv2d_forward(img, p["conv1.W"], p["conv1.b"])
    r1, cr1 = nn.relu_forward(a1)
    m1, cp1 = nn.maxpool2x2_forward(r1)
    a2, cc2 = nn.conv2d_forward(m1, p["conv2.W"], p["conv2.b"])
    r2, cr2 = nn.relu_forward(a2)
    m2, cp2 = nn.maxpool2x2_forward(r2)
    c2, t4, d4 = m2.shape
    seq = m2.transpose(1, 0, 2).reshape(t4, c2 * d4)
    h, cg = nn.gru_forward(seq, p["gru.Wzx"], p["gru.Wzh"], p["gru.bz"], p["gru.Wax"], p["gru.War"], p["gru.ba"])
    pooled = h.mean(axis=0)
    return pooled, (cc1, cr1, cp1, cc2, cr2, cp2, m2.shape, cg, h.shape[0])


def _conv_gru_backward(dpooled: np.ndarray, cache, p: dict[str, np.ndarray], g: dict[str, np.ndarray]) -> None:
    cc1, cr1, cp1, cc2, cr2, cp2, m2_shape, cg, t_len = cache
    dh = np.broadcast_to(dpooled / t_len, (t_len, dpooled.shape[0]))
    dseq, dwzx, dwzh, dbz, dwax, dwar, dba = nn.gru_backward(
        dh, cg, p["gru.Wzx"], p["gru.Wzh"], p["gru.Wax"], p["gru.War"]
    )
    g["gru.Wzx"] += dwzx
    g["gru.Wzh"] += dwzh
    g["gru.bz"] += dbz
    g["gru.Wax"] += dwax
    g["gru.War"] += dwar
    g["gru.ba"] += dba
    c2, t4, d4 = m2_shape
    dm2 = dseq.reshape(t4, c2, d4).transpose(1, 0, 2)
    dr2 = nn.maxpool2x2_backward(dm2, cp2)
    da2 = nn.relu_backward(dr2, cr2)
    dm1, dw, db = nn.conv2d_backward(da2, cc2, p["conv2.W"])
    g["conv2.W"] += dw
    g["conv2.b"] += db
    dr1 = nn.maxpool2x2_backward(dm1, cp1)
    da1 = nn.relu_backward(dr1, cr1)
    _, dw, db = nn.conv2d_backward(da1, cc1, p["conv1.W"])
    g["conv1.W"] += dw
    g["conv1.b"] += db


def _forward_with_cache(params: ParamVector, arch: ModelArch, batch: Batch):
    _check_inputs(arch, batch)
    p = params.tensors()
    if arch.kind == "mlp":
        pooled = np.stack([x.mean(axis=0) for x in batch.inputs])
        logits, head = _head_forward(pooled, p)
        return logits, (None, head)
    encoded = [_conv_gru_encode(x, p) for x in batch.inputs]
    pooled = np.stack([e[0] for e in encoded])
    logits, head = _head_forward(pooled, p)
    return logits, ([e[1] for e in encoded], head)


def forward(params: ParamVector, arch: ModelArch, batch: Batch) -> np.ndarray:
    logits, _ = _forward_with_cache(params, arch, batch)
    return logits


def predict(params: ParamVector, arch: ModelArch, inputs: Sequence[np.ndarray], chunk: int = 256) -> np.ndarray:
    out = []
    for start in range(0, len(inputs), chunk):
        part = list(inputs[start : start + chunk])
        logits = forward(params, arch, Batch(part, np.zeros(len(part), dtype=np.int64)))
        out.append(logits)
    return np.concatenate(out, axis=0)


def loss_and_grad(params: ParamVector, arch: ModelArch, batch: Batch) -> tuple[float, ParamVector]:
    logits, (encoder_caches, head) = _forward_with_cache(params, arch, batch)
    loss, dlogits = nn.softmax_cross_entropy(logits, batch.targets)
    grad = params.zeros_like()
    p, g = params.tensors(), grad.tensors()
    dpooled = _head_backward(dlogits, head, p, g)
    if encoder_caches is not None:
        for i, cache in enumerate(encoder_caches):
            _conv_gru_backward(dpooled[i], cache, p, g)
    return loss, grad


def local_train_stats(
    params: ParamVector,
    arch: ModelArch,
    shard: Sequence[tuple[np.ndarray, int]],
    lr: float,
    epochs: int = 1,
    batch_size: int = 16,
    seed: SeedLike = 0,
) -> tuple[ParamVector, float, int]:
    """SGD simples em minilotes; devolve (params, perda média dos minilotes, passos dados)."""
    if not shard:
        raise EmptyShard("não dá para treinar com um shard vazio")
    if lr < 0:
        raise ModelError("a taxa de aprendizado deve ser >= 0")
    if batch_size < 1 or epochs < 0:
        raise ModelError("batch_size deve ser >= 1 e epochs >= 0")
    rng = np.random.default_rng(seed)
    current = params.copy()
    losses: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(len(shard))
        for start in range(0, len(shard), batch_size):
            batch = Batch.from_examples([shard[i] for i in order[start : start + batch_size]])
            loss, grad = loss_and_grad(current, arch, batch)
            if lr:
                current.values -= lr * grad.values
            losses.append(loss)
    return current, float(np.mean(losses)) if losses else 0.0, len(losses)


def local_train(
    params: ParamVector,
    arch: ModelArch,
    shard: Sequence[tuple[np.ndarray, int]],
    lr: float,
    epochs: int = 1,
    batch_size: int = 16,
    seed: SeedLike = 0,
) -> ParamVector:
    trained, _, _ = local_train_stats(params, arch, shard, lr, epochs, batch_size, seed)
    return trained


# Checkpoints em texto

_TENSOR_RE = re.compile(r"^tensor=(\S+)\s+shape=(\d+(?:x\d+)*)\s+offset=(\d+)$")


def save_params(path: str | os.PathLike, params: ParamVector) -> None:
    lines = [f"tensor={s.name} shape={'x'.join(str(d) for d in s.shape)} offset={s.offset}" for s in params.layout]
    lines.extend(format(v, ".17g") for v in params.values)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_params(path: str | os.PathLike) -> ParamVector:
    shapes: list[tuple[str, tuple[int, ...]]] = []
    offsets: list[int] = []
    values: list[float] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            match = _TENSOR_RE.match(line)
            if match:
                if values:
                    raise CheckpointError(f"{path}:{lineno}: cabeçalho de tensor depois dos valores")
                shapes.append((match.group(1), tuple(int(d) for d in match.group(2).split("x"))))
                offsets.append(int(match.group(3)))
                continue
            try:
                values.append(float(line))
            except ValueError as exc:
                raise CheckpointError(f"{path}:{lineno}: {exc}") from exc
    try:
        params = ParamVector.from_shapes(shapes, np.array(values))
    except LayoutMismatch as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    if [s.offset for s in params.layout] != offsets:
        raise CheckpointError(f"{path}: os offsets do cabeçalho não batem com um layout contíguo")
    return params
