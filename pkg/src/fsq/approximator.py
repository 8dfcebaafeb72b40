"""One-hidden-layer ReLU network, masked squared loss and Adam, all in float64.

The network stores ``W1`` (in x hidden), ``b1``, ``W2`` (hidden x out), ``b2``.
In FSQ mode the output is partitioned into ``m`` blocks of 3 heads, block ``j``
occupying columns ``3j .. 3j+2`` (decrease, hold, increase).
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass

import numpy as np

from fsq import kernels
from fsq.core import NumericError, ShapeError

log = logging.getLogger(__name__)

PARAM_NAMES = ("W1", "b1", "W2", "b2")
CHECKPOINT_HEADER = "fsq-ckpt-v1"


class QNetwork:
    """All parameters live in one flat vector ``theta``; ``W1`` etc. are views."""

    def __init__(self, input_dim: int, hidden_units: int, output_dim: int, rng=None, *,
                 action_dims: int | None = None):
        if action_dims is not None and output_dim != 3 * action_dims:
            raise ShapeError(
                f"an FSQ network over {action_dims} action dims needs {3 * action_dims} outputs, "
                f"got {output_dim}"
            )
        self.input_dim = int(input_dim)
        self.hidden_units = int(hidden_units)
        self.output_dim = int(output_dim)
        self.action_dims = action_dims
        self.theta = np.zeros(_layout_size(self.shapes))
        self._bind()
        if rng is not None:
            self.W1[...] = _glorot(rng, input_dim, hidden_units)
            self.W2[...] = _glorot(rng, hidden_units, output_dim)

    @classmethod
    def for_fsq(cls, state_dim: int, action_dims: int, hidden_units: int = 128, rng=None):
        return cls(state_dim + action_dims, hidden_units, 3 * action_dims, rng, action_dims=action_dims)

    @property
    def shapes(self) -> dict[str, tuple]:
        I, H, O = self.input_dim, self.hidden_units, self.output_dim
        return {"W1": (I, H), "b1": (H,), "W2": (H, O), "b2": (O,)}

    def _bind(self):
        for name, view in unflatten(self.theta, self.shapes).items():
            setattr(self, name, view)

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def set_params(self, params: dict[str, np.ndarray]):
        for name, shape in self.shapes.items():
            new = np.asarray(params[name], dtype=np.float64)
            if new.shape != shape:
                raise ShapeError(f"{name}: expected {shape}, got {new.shape}")
            getattr(self, name)[...] = new

    def copy(self) -> "QNetwork":
        twin = copy.copy(self)
        twin.theta = self.theta.copy()
        twin._bind()
        return twin

    def __deepcopy__(self, memo):
        return self.copy()

    def _as_batch(self, v) -> np.ndarray:
        x = np.ascontiguousarray(np.atleast_2d(v), dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(f"input has shape {np.shape(v)}, expected (..., {self.input_dim})")
        if not np.isfinite(x).all():
            raise NumericError("non-finite network input")
        return x

    def forward_batch(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Return (hidden activations, outputs) for a 2-D batch."""
        x = self._as_batch(x)
        return kernels.forward(x, self.W1, self.b1, self.W2, self.b2)

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v)
        out = self.forward_batch(v)[1]
        return out[0] if v.ndim == 1 else out

    def partitions(self, v) -> np.ndarray:
        """Outputs reshaped to (..., m, 3)."""
        out = self(v)
        return out.reshape(out.shape[:-1] + (-1, 3))

    def count_parameters(self) -> int:
        return self.theta.size


def _layout_size(shapes) -> int:
    return sum(math.prod(s) for s in shapes.values())


def unflatten(flat: np.ndarray, shapes: dict[str, tuple]) -> dict[str, np.ndarray]:
    """Views into ``flat`` with the given shapes, in order."""
    out, pos = {}, 0
    for name, shape in shapes.items():
        n = math.prod(shape)
        out[name] = flat[pos : pos + n].reshape(shape)
        pos += n
    return out


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def forward(net: QNetwork, v) -> np.ndarray:
    return net(v)


def clone_parameters(src: QNetwork) -> QNetwork:
    return src.copy()


def copy_parameters(src: QNetwork, dst: QNetwork):
    """In-place ``dst <- src`` (target sync)."""
    np.copyto(dst.theta, src.theta)


def parameters_equal(a: QNetwork, b: QNetwork) -> bool:
    return np.array_equal(a.theta, b.theta)


def masked_l2_loss(pred, target, mask, weights=None) -> float:
    """Sum of squared residuals over masked entries, averaged over the batch."""
    pred, target = np.atleast_2d(pred), np.atleast_2d(target)
    mask = np.atleast_2d(np.asarray(mask, dtype=bool))
    if not (pred.shape == target.shape == mask.shape):
        raise ShapeError(f"shape mismatch: pred {pred.shape}, target {target.shape}, mask {mask.shape}")
    if not mask.any():
        raise ValueError("degenerate loss: mask selects no entries")
    resid = np.where(mask, target - pred, 0.0)
    per_sample = np.sum(resid * resid, axis=1)
    if weights is not None:
        per_sample = per_sample * weights
    return float(per_sample.mean())


class Gradient(dict):
    """Per-layer gradient views backed by one flat vector ``flat``."""

    def __init__(self, flat, shapes):
        super().__init__(unflatten(flat, shapes))
        self.flat = flat


def loss_and_grads(net: QNetwork, x, target, mask, weights=None):
    """Masked loss plus its gradient w.r.t. every parameter.

    Returns ``(loss, grads, pred)`` where ``grads`` maps layer names to arrays
    (and carries the flat vector as ``grads.flat``) and ``pred`` is the
    forward output on ``x``.
    """
    x = net._as_batch(x)
    target = np.ascontiguousarray(target, dtype=np.float64)
    mask = np.ascontiguousarray(mask, dtype=bool)
    if target.shape != (len(x), net.output_dim) or mask.shape != target.shape:
        raise ShapeError(f"target/mask must have shape {(len(x), net.output_dim)}")
    if not mask.any():
        raise ValueError("degenerate loss: mask selects no entries")
    w = np.ones(len(x)) if weights is None else np.ascontiguousarray(weights, dtype=np.float64)
    grads = Gradient(np.empty_like(net.theta), net.shapes)
    loss, pred = kernels.loss_grad(x, net.W1, net.b1, net.W2, net.b2, target, mask, w,
                                   grads["W1"], grads["b1"], grads["W2"], grads["b2"])
    return loss, grads, pred


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_stability: float = 1e-8

    @classmethod
    def for_network(cls, net: QNetwork, **kw):
        return cls(np.zeros_like(net.theta), np.zeros_like(net.theta), **kw)


def adam_step(net: QNetwork, grads, state: AdamState, lr: float):
    """Apply one bias-corrected Adam update in place.

    ``grads`` is a :class:`Gradient`, a dict of per-layer arrays, or a flat
    vector. A non-finite gradient aborts the step before anything changes.
    """
    if isinstance(grads, Gradient):
        flat = grads.flat
    elif isinstance(grads, dict):
        flat = np.concatenate([np.ravel(grads[n]) for n in PARAM_NAMES])
    else:
        flat = np.ascontiguousarray(grads, dtype=np.float64)
    if flat.shape != net.theta.shape:
        raise ShapeError(f"gradient has {flat.size} entries, network has {net.theta.size}")
    if not np.isfinite(flat).all():
        log.warning("non-finite gradient; Adam step skipped")
        raise NumericError("non-finite gradient")
    state.step_count += 1
    kernels.adam_update(net.theta, flat, state.first_moment, state.second_moment, float(lr),
                        state.beta1, state.beta2, state.epsilon_stability, state.step_count)
    return net, state


# -- checkpoints ------------------------------------------------------------
#
#   fsq-ckpt-v1
#   meta <key>=<value>                      (zero or more)
#   array <name> <dim0>x<dim1>...
#   <float.hex values separated by spaces>  (one line per array)


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict[str, str] | None = None):
    lines = [CHECKPOINT_HEADER]
    for key, value in (meta or {}).items():
        if "\n" in str(value) or "=" in str(key):
            raise ValueError(f"unsavable meta entry {key!r}")
        lines.append(f"meta {key}={value}")
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        shape = "x".join(str(d) for d in arr.shape) or "scalar"
        lines.append(f"array {name} {shape}")
        lines.append(" ".join(float(v).hex() for v in arr.ravel()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path) as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise ValueError(f"{path}: not an {CHECKPOINT_HEADER} checkpoint")
    meta, arrays = {}, {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("meta "):
            key, _, value = line[5:].partition("=")
            meta[key] = value
        elif line.startswith("array "):
            _, name, shape = line.split(" ")
            dims = () if shape == "scalar" else tuple(int(d) for d in shape.split("x"))
            i += 1
            values = [float.fromhex(tok) for tok in lines[i].split()]
            arrays[name] = np.array(values, dtype=np.float64).reshape(dims)
        elif line:
            raise ValueError(f"{path}:{i + 1}: unexpected line {line[:40]!r}")
        i += 1
    return arrays, meta


def network_arrays(net: QNetwork, prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}.{k}": v for k, v in net.params().items()}


def set_network_arrays(net: QNetwork, arrays: dict[str, np.ndarray], prefix: str):
    net.set_params({k: arrays[f"{prefix}.{k}"] for k in PARAM_NAMES})


def network_from_arrays(arrays: dict[str, np.ndarray], prefix: str, action_dims=None) -> QNetwork:
    W1, W2 = arrays[f"{prefix}.W1"], arrays[f"{prefix}.W2"]
    net = QNetwork(W1.shape[0], W1.shape[1], W2.shape[1], action_dims=action_dims)
    net.set_params({k: arrays[f"{prefix}.{k}"] for k in PARAM_NAMES})
    return net
