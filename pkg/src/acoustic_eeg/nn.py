"""Recurrent layers with hand-written backpropagation through time.

All sequence tensors are time-major, ``(T, B, F)``, with an optional validity
mask of shape ``(T, B)`` whose ones form a prefix in every column. At masked
steps a recurrent layer carries its state forward unchanged, so the final
state equals the state at the last valid frame.

Layers record what they need during ``forward`` and accumulate parameter
gradients into ``self.grads`` during ``backward``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GraphNotRecorded, ShapeMismatch

GATES = ("z", "r", "h")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-k, k, size=shape)


class Module:
    """Parameter container; children are visited in insertion order."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.children: dict[str, Module] = {}

    def named_parameters(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + k: v for k, v in self.params.items()}
        for name, child in self.children.items():
            out.update(child.named_parameters(f"{prefix}{name}."))
        return out

    def named_gradients(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + k: v for k, v in self.grads.items()}
        for name, child in self.children.items():
            out.update(child.named_gradients(f"{prefix}{name}."))
        return out

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)
        for child in self.children.values():
            child.zero_grad()

    def load_parameters(self, values: dict[str, np.ndarray], strict: bool = True):
        """Copy values in place (arrays held by optimizers stay valid)."""
        own = self.named_parameters()
        if strict and set(values) != set(own):
            missing = sorted(set(own) - set(values))
            extra = sorted(set(values) - set(own))
            raise ShapeMismatch(f"parameter names differ; missing={missing} extra={extra}")
        for name, arr in own.items():
            if name not in values:
                continue
            src = np.asarray(values[name])
            if src.shape != arr.shape:
                raise ShapeMismatch(f"{name}: expected {arr.shape}, got {src.shape}")
            arr[...] = src

    def _add_param(self, name: str, value: np.ndarray):
        self.params[name] = np.ascontiguousarray(value, dtype=np.float64)
        self.grads[name] = np.zeros_like(self.params[name])


@dataclass
class GruCellParams:
    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "GruCellParams":
        w = lambda: np.zeros((hidden_size, input_size))  # noqa: E731
        u = lambda: np.zeros((hidden_size, hidden_size))  # noqa: E731
        b = lambda: np.zeros(hidden_size)  # noqa: E731
        return cls(w(), w(), w(), u(), u(), u(), b(), b(), b())

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.W_z.shape[0]

    def as_dict(self) -> dict[str, np.ndarray]:
        return dict(self.__dict__)


def gru_cell_forward(x_t: np.ndarray, h_prev: np.ndarray, p: GruCellParams) -> np.ndarray:
    """One GRU step for a single input vector."""
    if x_t.shape[-1] != p.input_size or h_prev.shape[-1] != p.hidden_size:
        raise ShapeMismatch(
            f"cell expects input {p.input_size} / hidden {p.hidden_size}, "
            f"got {x_t.shape[-1]} / {h_prev.shape[-1]}"
        )
    z = sigmoid(p.W_z @ x_t + p.U_z @ h_prev + p.b_z)
    r = sigmoid(p.W_r @ x_t + p.U_r @ h_prev + p.b_r)
    h_cand = np.tanh(p.W_h @ x_t + p.U_h @ (r * h_prev) + p.b_h)
    return (1.0 - z) * h_prev + z * h_cand


class GRU(Module):
    """Unidirectional GRU layer returning the state sequence ``(T, B, H)``."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_size = input_size
        self.hidden_size = hidden_size
        for g in GATES:
            self._add_param(f"W_{g}", uniform_init(rng, (hidden_size, input_size), input_size))
        for g in GATES:
            self._add_param(f"U_{g}", uniform_init(rng, (hidden_size, hidden_size), hidden_size))
        for g in GATES:
            self._add_param(f"b_{g}", np.zeros(hidden_size))
        self._cache = None

    def cell_params(self) -> GruCellParams:
        return GruCellParams(**self.params)

    def forward(self, x: np.ndarray, mask: np.ndarray | None = None, h0: np.ndarray | None = None) -> np.ndarray:
        T, B, I = x.shape
        if I != self.input_size:
            raise ShapeMismatch(f"GRU expects input dim {self.input_size}, got {I}")
        H = self.hidden_size
        p = self.params
        W = np.concatenate([p["W_z"], p["W_r"], p["W_h"]])
        b = np.concatenate([p["b_z"], p["b_r"], p["b_h"]])
        U_zr = np.concatenate([p["U_z"], p["U_r"]])
        U_h = p["U_h"]
        m = np.ones((T, B, 1)) if mask is None else mask.reshape(T, B, 1).astype(np.float64)

        xproj = x @ W.T + b  # (T, B, 3H)
        hs = np.empty((T, B, H))
        h_prev = np.empty((T, B, H))
        zs = np.empty((T, B, H))
        rs = np.empty((T, B, H))
        cands = np.empty((T, B, H))
        h = np.zeros((B, H)) if h0 is None else np.broadcast_to(h0, (B, H)).astype(np.float64)
        for t in range(T):
            h_prev[t] = h
            a = xproj[t]
            zr = sigmoid(a[:, : 2 * H] + h @ U_zr.T)
            z, r = zr[:, :H], zr[:, H:]
            cand = np.tanh(a[:, 2 * H :] + (r * h) @ U_h.T)
            h_new = h + z * (cand - h)
            h = h + m[t] * (h_new - h)
            zs[t], rs[t], cands[t], hs[t] = z, r, cand, h
        self._cache = (x, m, h_prev, zs, rs, cands, W, U_zr, U_h)
        return hs

    def backward(self, dhs: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise GraphNotRecorded("GRU.backward called before forward")
        x, m, h_prev, zs, rs, cands, W, U_zr, U_h = self._cache
        T, B, H = dhs.shape
        da = np.empty((T, B, 3 * H))
        dh = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            dh = dh + dhs[t]
            hp, z, r, cand = h_prev[t], zs[t], rs[t], cands[t]
            dnew = m[t] * dh
            dprev = dh - dnew
            dprev += dnew * (1.0 - z)
            dz = dnew * (cand - hp)
            da_h = dnew * z * (1.0 - cand * cand)
            drh = da_h @ U_h
            dprev += drh * r
            dr = drh * hp
            da_zr = np.concatenate([dz * z * (1.0 - z), dr * r * (1.0 - r)], axis=1)
            dprev += da_zr @ U_zr
            da[t, :, : 2 * H] = da_zr
            da[t, :, 2 * H :] = da_h
            dh = dprev

        g = self.grads
        dW = da.reshape(T * B, 3 * H).T @ x.reshape(T * B, -1)
        db = da.sum(axis=(0, 1))
        hp_flat = h_prev.reshape(T * B, H)
        dU_zr = da[:, :, : 2 * H].reshape(T * B, 2 * H).T @ hp_flat
        dU_h = da[:, :, 2 * H :].reshape(T * B, H).T @ (rs.reshape(T * B, H) * hp_flat)
        for i, gate in enumerate(GATES):
            g[f"W_{gate}"] += dW[i * H : (i + 1) * H]
            g[f"b_{gate}"] += db[i * H : (i + 1) * H]
        g["U_z"] += dU_zr[:H]
        g["U_r"] += dU_zr[H:]
        g["U_h"] += dU_h
        return da @ W


def reversal_index(mask: np.ndarray | None, T: int, B: int) -> np.ndarray:
    """Per-column index reversing each sequence within its valid length."""
    t = np.arange(T)[:, None]
    lengths = np.full(B, T) if mask is None else mask.sum(axis=0).astype(int)
    return np.where(t < lengths[None, :], lengths[None, :] - 1 - t, t)


class BiGRU(Module):
    """Forward and time-reversed GRU, outputs concatenated to ``(T, B, 2H)``."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.fwd = GRU(input_size, hidden_size, rng)
        self.bwd = GRU(input_size, hidden_size, rng)
        self.children = {"fwd": self.fwd, "bwd": self.bwd}
        self._rev = None

    @property
    def output_size(self) -> int:
        return 2 * self.hidden_size

    def forward(self, x: np.ndarray, mask: np.ndarray | None = None, h0: np.ndarray | None = None) -> np.ndarray:
        T, B, _ = x.shape
        rev = reversal_index(mask, T, B)
        cols = np.arange(B)[None, :]
        out_f = self.fwd.forward(x, mask, h0)
        out_b = self.bwd.forward(x[rev, cols], mask, h0)[rev, cols]
        self._rev = rev
        return np.concatenate([out_f, out_b], axis=2)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._rev is None:
            raise GraphNotRecorded("BiGRU.backward called before forward")
        H = self.hidden_size
        rev = self._rev
        cols = np.arange(dout.shape[1])[None, :]
        dx = self.fwd.backward(dout[:, :, :H])
        dx += self.bwd.backward(dout[:, :, H:][rev, cols])[rev, cols]
        return dx


def bigru_layer_forward(
    seq: np.ndarray, fwd: GruCellParams, bwd: GruCellParams, h0: np.ndarray | None = None
) -> np.ndarray:
    """Single-sequence Bi-GRU, ``(T, I) -> (T, 2H)``, from explicit cell parameters.

    Both directions start from ``h0`` (zeros by default).
    """
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise ShapeMismatch("expected a non-empty T x I sequence")
    if fwd.hidden_size != bwd.hidden_size:
        raise ShapeMismatch("forward and backward hidden sizes differ")
    layer = BiGRU(fwd.input_size, fwd.hidden_size)
    layer.fwd.load_parameters(fwd.as_dict())
    layer.bwd.load_parameters(bwd.as_dict())
    return layer.forward(seq[:, None, :], h0=h0)[:, 0, :]


class Dense(Module):
    """Time-distributed affine map with optional sigmoid."""

    def __init__(
        self,
        input_size: int,
        output_size: int,
        activation: str = "linear",
        rng: np.random.Generator | None = None,
    ):
        super().__init__()
        if activation not in ("linear", "sigmoid"):
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_size = input_size
        self.output_size = output_size
        self.activation = activation
        self._add_param("W", uniform_init(rng, (output_size, input_size), input_size))
        self._add_param("b", np.zeros(output_size))
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.input_size:
            raise ShapeMismatch(f"Dense expects input dim {self.input_size}, got {x.shape[-1]}")
        y = x @ self.params["W"].T + self.params["b"]
        if self.activation == "sigmoid":
            y = sigmoid(y)
        self._cache = (x, y)
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise GraphNotRecorded("Dense.backward called before forward")
        x, y = self._cache
        if self.activation == "sigmoid":
            dy = dy * y * (1.0 - y)
        x2 = x.reshape(-1, self.input_size)
        dy2 = dy.reshape(-1, self.output_size)
        self.grads["W"] += dy2.T @ x2
        self.grads["b"] += dy2.sum(axis=0)
        return dy @ self.params["W"]


def time_distributed_dense(seq, W, b, activation: str = "linear") -> np.ndarray:
    seq = np.asarray(seq, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if seq.shape[-1] != W.shape[1] or np.shape(b) != (W.shape[0],):
        raise ShapeMismatch(f"cannot apply {W.shape} weights with {np.shape(b)} bias to {seq.shape}")
    y = seq @ W.T + b
    return sigmoid(y) if activation == "sigmoid" else y


def _check_pair(pred, truth):
    if pred.shape != truth.shape:
        raise ShapeMismatch(f"shapes differ: {pred.shape} vs {truth.shape}")


def mse_loss(pred, truth, mask: np.ndarray | None = None) -> float:
    """Mean squared error over all valid frames and dimensions.

    ``mask`` has the leading (frame) shape of ``pred``; masked frames are ignored.
    """
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    _check_pair(pred, truth)
    sq = (pred - truth) ** 2
    if mask is None:
        return float(sq.mean())
    w = mask.reshape(mask.shape + (1,) * (pred.ndim - mask.ndim)).astype(np.float64)
    return float((sq * w).sum() / (w.sum() * pred.shape[-1]))


def mse_loss_grad(pred, truth, mask: np.ndarray | None = None) -> np.ndarray:
    _check_pair(pred, truth)
    diff = pred - truth
    if mask is None:
        return 2.0 * diff / diff.size
    w = mask.reshape(mask.shape + (1,) * (pred.ndim - mask.ndim)).astype(np.float64)
    return 2.0 * diff * w / (w.sum() * pred.shape[-1])


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState
) -> tuple[dict[str, np.ndarray], AdamState]:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        m = state.first_moment.setdefault(name, np.zeros_like(p))
        v = state.second_moment.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
