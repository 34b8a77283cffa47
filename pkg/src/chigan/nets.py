"""Generator and per-arm critic networks.

Both are tanh MLPs with a linear output layer. A critic sees its input
shifted by a re-centering vector, ``V(x - shift)``, and its raw output is
mapped through ``gf_transform`` so that ``t = -2 + softplus(v) > -2``; the
likelihood ratio is then ``t / 2 + 1 = softplus(v) / 2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K
from . import ndcore as nd
from .ndcore import Tape, Tensor

MAGIC = "CGAN1"
STD_FLOOR = 1e-8

DEFAULT_NOISE_DIM = 16
DEFAULT_HIDDEN = (64, 64)


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class MlpConfig:
    widths: tuple[int, ...]
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 3:
            raise ValueError("an MLP needs an input width, at least one hidden width and an output width")
        if any(w <= 0 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        if self.activation != "tanh":
            raise ValueError("only tanh hidden activations are supported")


def init_params(config: MlpConfig, seed: int | None = None, zero_last: bool = False) -> list[np.ndarray]:
    """Glorot-normal weights, zero biases, as ``[W0, b0, W1, b1, ...]``."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params = []
    widths = config.widths
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        std = np.sqrt(2.0 / (fan_in + fan_out))
        W = rng.normal(0.0, std, size=(fan_in, fan_out))
        if zero_last and i == len(widths) - 2:
            W = np.zeros_like(W)
        params.append(W)
        params.append(np.zeros(fan_out))
    return params


def mlp_apply(x: np.ndarray, params: Sequence[np.ndarray]) -> np.ndarray:
    """Tape-free forward pass; matches the taped pass bit for bit."""
    h = x
    n_layers = len(params) // 2
    for i in range(n_layers):
        h = h @ params[2 * i] + params[2 * i + 1]
        if i < n_layers - 1:
            h = np.tanh(h)
    return h


def mlp_forward(x: Tensor, params: Sequence[Tensor]) -> Tensor:
    h = x
    n_layers = len(params) // 2
    for i in range(n_layers):
        h = nd.add_bias(nd.matmul(h, params[2 * i]), params[2 * i + 1])
        if i < n_layers - 1:
            h = nd.tanh(h)
    return h


def _bind(tape: Tape, params: Sequence[np.ndarray], trainable: bool) -> list[Tensor]:
    make = tape.param if trainable else tape.constant
    return [make(p) for p in params]


def _check_cols(x: np.ndarray, d: int, what: str) -> None:
    if x.ndim != 2 or x.shape[1] != d:
        raise ValueError(f"{what}: expected a batch with {d} columns, got shape {x.shape}")


@dataclass
class Generator:
    params: list[np.ndarray]
    noise_dim: int
    out_dim: int

    @classmethod
    def create(cls, noise_dim: int, out_dim: int, hidden: Sequence[int] = DEFAULT_HIDDEN,
               seed: int = 0, zero_last: bool = False) -> "Generator":
        cfg = MlpConfig((noise_dim, *hidden, out_dim), seed=seed)
        return cls(init_params(cfg, zero_last=zero_last), noise_dim, out_dim)

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.params[0].shape[0],) + tuple(W.shape[1] for W in self.params[0::2])

    def bind(self, tape: Tape, trainable: bool = True) -> list[Tensor]:
        return _bind(tape, self.params, trainable)

    def forward(self, z: Tensor, bound: Sequence[Tensor]) -> Tensor:
        _check_cols(z.value, self.noise_dim, "generator")
        return mlp_forward(z, bound)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        _check_cols(z, self.noise_dim, "generator")
        return mlp_apply(z, self.params)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self(rng.standard_normal((n, self.noise_dim)))


@dataclass
class Discriminator:
    params: list[np.ndarray]
    dim: int
    shift: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.shift is None:
            self.shift = np.zeros(self.dim)
        self.shift = np.asarray(self.shift, dtype=np.float64)

    @classmethod
    def create(cls, dim: int, hidden: Sequence[int] = DEFAULT_HIDDEN, seed: int = 0,
               zero_last: bool = False) -> "Discriminator":
        cfg = MlpConfig((dim, *hidden, 1), seed=seed)
        return cls(init_params(cfg, zero_last=zero_last), dim)

    def bind(self, tape: Tape, trainable: bool = True) -> list[Tensor]:
        return _bind(tape, self.params, trainable)

    def forward(self, x: Tensor, bound: Sequence[Tensor]) -> Tensor:
        """Raw critic output ``V(x - shift)`` on the tape, shape (M, 1)."""
        _check_cols(x.value, self.dim, "discriminator")
        shifted = nd.add_bias(x, x.tape.constant(-self.shift))
        return mlp_forward(shifted, bound)

    def raw(self, x: np.ndarray) -> np.ndarray:
        """Raw critic output as a flat vector, one value per row."""
        x = np.asarray(x, dtype=np.float64)
        _check_cols(x, self.dim, "discriminator")
        return mlp_apply(x + (-self.shift), self.params)[:, 0]

    def set_shift(self, center: np.ndarray) -> None:
        set_recenter_shift(self, center)


def generator_forward(gen: Generator, z: np.ndarray) -> np.ndarray:
    return gen(z)


def discriminator_raw(disc: Discriminator, x: np.ndarray) -> np.ndarray:
    return disc.raw(x)


def set_recenter_shift(disc: Discriminator, center: np.ndarray) -> None:
    center = np.asarray(center, dtype=np.float64)
    if center.shape != (disc.dim,):
        raise ValueError(f"shift must have length {disc.dim}, got shape {center.shape}")
    disc.shift = center.copy()


def gf_transform(v):
    """``t = -2 + softplus(v)``; accepts a float, an array, or a tape Tensor."""
    if isinstance(v, Tensor):
        sp = nd.softplus(v)
        if sp.value.ndim != 2:
            raise nd.ShapeError("gf_transform", sp.shape)
        return nd.add_bias(sp, v.tape.constant(np.full(sp.shape[1], -2.0)))
    arr = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("gf_transform input must be finite")
    out = -2.0 + K.softplus(arr)
    return float(out) if out.ndim == 0 else out


@dataclass
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        _check_cols(x, self.mean.shape[0], "standardize")
        return (x - self.mean) / self.std

    def invert(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) * self.std + self.mean


# --- checkpoint ----------------------------------------------------------------


def _layers_to_json(params: Sequence[np.ndarray]) -> list[dict]:
    return [
        {"shape": list(W.shape), "W": W.ravel().tolist(), "b": b.tolist()}
        for W, b in zip(params[0::2], params[1::2])
    ]


def _layers_from_json(layers: list[dict]) -> list[np.ndarray]:
    params = []
    for layer in layers:
        shape = tuple(layer["shape"])
        W = np.asarray(layer["W"], dtype=np.float64)
        b = np.asarray(layer["b"], dtype=np.float64)
        if len(shape) != 2 or W.size != shape[0] * shape[1] or b.shape != (shape[1],):
            raise CheckpointError(f"corrupt layer with shape {shape}")
        params += [W.reshape(shape), b]
    return params


def dumps_checkpoint(gen: Generator, discs: Sequence[Discriminator],
                     stats: StandardizationStats, arm_ids: Sequence[str] | None = None) -> str:
    payload = {
        "generator": {"noise_dim": gen.noise_dim, "out_dim": gen.out_dim,
                      "layers": _layers_to_json(gen.params)},
        "discriminators": [
            {"arm_id": None if arm_ids is None else str(arm_ids[i]), "dim": d.dim,
             "shift": d.shift.tolist(), "layers": _layers_to_json(d.params)}
            for i, d in enumerate(discs)
        ],
        "standardization": {"mean": stats.mean.tolist(), "std": stats.std.tolist()},
    }
    return MAGIC + "\n" + json.dumps(payload, sort_keys=True) + "\n"


def loads_checkpoint(text: str):
    """Inverse of :func:`dumps_checkpoint` -> (generator, discriminators, stats, arm_ids)."""
    head, _, body = text.partition("\n")
    if head != MAGIC:
        raise CheckpointError(f"not a {MAGIC} checkpoint (header {head[:16]!r})")
    try:
        payload = json.loads(body)
        g = payload["generator"]
        gen = Generator(_layers_from_json(g["layers"]), int(g["noise_dim"]), int(g["out_dim"]))
        discs = [
            Discriminator(_layers_from_json(d["layers"]), int(d["dim"]), np.asarray(d["shift"]))
            for d in payload["discriminators"]
        ]
        arm_ids = [d.get("arm_id") for d in payload["discriminators"]]
        s = payload["standardization"]
        stats = StandardizationStats(np.asarray(s["mean"]), np.asarray(s["std"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    return gen, discs, stats, arm_ids


def save_checkpoint(path, gen, discs, stats, arm_ids=None) -> None:
    Path(path).write_text(dumps_checkpoint(gen, discs, stats, arm_ids), encoding="utf-8")


def load_checkpoint(path):
    return loads_checkpoint(Path(path).read_text(encoding="utf-8"))
