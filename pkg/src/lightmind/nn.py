"""Parameter store, small layers, Adam and the checkpoint format."""
from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_VERSION = 1


class CheckpointMismatch(ValueError):
    pass


class ParamStore:
    """Named parameters with deterministic, seeded initialisation."""

    def __init__(self, seed: int = 0):
        self.params: dict[str, Tensor] = {}
        self._rng = np.random.default_rng(seed)

    def create(self, name: str, shape: tuple, init: str = "glorot", scale: float = 1.0) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        if init == "zeros":
            data = np.zeros(shape)
        elif init == "glorot":
            fan_in = shape[0] if len(shape) > 1 else 1
            fan_out = shape[-1]
            limit = scale * np.sqrt(6.0 / (fan_in + fan_out))
            data = self._rng.uniform(-limit, limit, size=shape)
        elif init == "normal":
            data = self._rng.normal(0.0, scale, size=shape)
        elif init == "eye":
            data = scale * np.eye(shape[0], shape[1])
        else:
            raise ValueError(init)
        p = ad.parameter(data, name=name)
        self.params[name] = p
        return p

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __iter__(self):
        return iter(self.params.values())

    def __len__(self) -> int:
        return len(self.params)

    def count(self, prefix: str = "") -> int:
        return sum(p.size for n, p in self.params.items() if n.startswith(prefix))

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def fill(self, value: float = 0.0) -> None:
        for p in self.params.values():
            p.data[...] = value

    def state(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) ^ set(state)
        if missing:
            raise CheckpointMismatch(f"parameter names differ: {sorted(missing)[:5]}")
        for n, p in self.params.items():
            arr = np.asarray(state[n], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise CheckpointMismatch(f"{n}: shape {arr.shape} != {p.data.shape}")
            p.data[...] = arr


class Linear:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int, bias: bool = True,
                 scale: float = 1.0):
        self.w = store.create(f"{name}.w", (n_in, n_out), scale=scale)
        self.b = store.create(f"{name}.b", (n_out,), init="zeros") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.w
        return y + self.b if self.b is not None else y


_ACTS: dict[str, Callable] = {"tanh": ad.tanh, "relu": ad.relu, "sigmoid": ad.sigmoid, "none": lambda x: x}


class MLP:
    """Two-layer perceptron; activations given per layer."""

    def __init__(self, store: ParamStore, name: str, n_in: int, n_hidden: int, n_out: int,
                 acts: tuple = ("tanh", "relu"), out_scale: float = 1.0):
        self.l1 = Linear(store, f"{name}.l1", n_in, n_hidden)
        self.l2 = Linear(store, f"{name}.l2", n_hidden, n_out, scale=out_scale)
        self.acts = tuple(_ACTS[a] for a in acts)

    def __call__(self, x: Tensor) -> Tensor:
        return self.acts[1](self.l2(self.acts[0](self.l1(x))))


class GRUCell:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_hidden: int):
        self.n_hidden = n_hidden
        self.wx = store.create(f"{name}.wx", (n_in, 3 * n_hidden))
        self.wh = store.create(f"{name}.wh", (n_hidden, 3 * n_hidden))
        self.b = store.create(f"{name}.b", (3 * n_hidden,), init="zeros")

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        H = self.n_hidden
        gx = x @ self.wx + self.b
        gh = h @ self.wh
        z = ad.sigmoid(gx[0:H] + gh[0:H])
        r = ad.sigmoid(gx[H:2 * H] + gh[H:2 * H])
        n = ad.tanh(gx[2 * H:] + r * gh[2 * H:])
        return (1.0 - z) * n + z * h


class Adam:
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 clip: float | None = 5.0):
        self.params = list(params)
        self.lr, self.b1, self.b2, self.eps, self.clip = lr, betas[0], betas[1], eps, clip
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> float:
        """Apply one update; returns the global gradient norm before clipping."""
        grads = [p.grad for p in self.params]
        norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads if g is not None)))
        if not np.isfinite(norm):
            raise FloatingPointError("non-finite gradient")
        scale = self.clip / norm if self.clip and norm > self.clip else 1.0
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g is None:
                continue
            g = g * scale
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            if self.lr:
                p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.grad = None
        return norm


# -- checkpoints --------------------------------------------------------------

def state_hash(state: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f8")
        h.update(name.encode())
        h.update(repr(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def save_checkpoint(path: str | Path, state: dict[str, np.ndarray], config: dict,
                    extra: dict | None = None) -> str:
    """Write an ``.npz`` of row-major float64 arrays plus a JSON manifest."""
    digest = state_hash(state)
    manifest = {"version": CHECKPOINT_VERSION, "config": config, "hash": digest,
                "shapes": {n: list(a.shape) for n, a in sorted(state.items())}}
    if extra:
        manifest["extra"] = extra
    buf = io.BytesIO()
    np.savez(buf, __manifest__=np.frombuffer(json.dumps(manifest, sort_keys=True).encode(), dtype=np.uint8),
             **{n: np.ascontiguousarray(a, dtype="<f8") for n, a in state.items()})
    Path(path).write_bytes(buf.getvalue())
    return digest


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        with np.load(path, allow_pickle=False) as z:
            manifest = json.loads(bytes(z["__manifest__"]).decode())
            state = {n: z[n].astype(np.float64) for n in z.files if n != "__manifest__"}
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointMismatch(f"unreadable checkpoint {path}: {exc}") from exc
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise CheckpointMismatch("unsupported checkpoint version")
    if state_hash(state) != manifest["hash"]:
        raise CheckpointMismatch("manifest hash does not match parameters")
    return state, manifest
