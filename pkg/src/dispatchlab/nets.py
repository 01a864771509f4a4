"""Minimal dense feed-forward network with manual backpropagation.

One fixed architecture family serves every learner: affine layers with ReLU
hidden activations and a linear or row-wise softmax head. Forward passes cache
activations; backward consumes the cache and an output-side loss gradient and
returns exact reverse-mode parameter gradients. Training uses an adaptive
moment (Adam-style) update with global-norm gradient clipping.

All math is float64; checkpoints round-trip weights bit-exactly.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "MlpSpec",
    "MlpParams",
    "OptimizerState",
    "ForwardCache",
    "init_params",
    "forward",
    "backward",
    "apply_update",
    "clone_params",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]

CHECKPOINT_MAGIC = b"DLN1"
CHECKPOINT_VERSION = 1
_HEADS = ("linear", "softmax")


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden: tuple[int, ...] = (512, 256, 128)
    output_head: str = "linear"

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("layer widths must be positive")
        if self.output_head not in _HEADS:
            raise ValueError(f"output_head must be one of {_HEADS}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class MlpParams:
    """Weight matrices (out x in) and bias vectors, one per affine layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flat_norm(self) -> float:
        sq = sum(float(np.sum(w * w)) for w in self.weights)
        sq += sum(float(np.sum(b * b)) for b in self.biases)
        return float(np.sqrt(sq))


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    hidden_outputs: list[np.ndarray]
    outputs: np.ndarray


def init_params(spec: MlpSpec, rng: np.random.Generator) -> MlpParams:
    """Scaled uniform fan-in initialization (ReLU-friendly), zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in spec.layer_dims:
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights=weights, biases=biases)


def clone_params(params: MlpParams) -> MlpParams:
    """Deep copy, used for hard target-network syncs."""
    return MlpParams(
        weights=[w.copy() for w in params.weights],
        biases=[b.copy() for b in params.biases],
    )


def _check_input(spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != spec.input_dim:
        raise ValueError(f"input width {x.shape[1]} != spec input_dim {spec.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    return x


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: MlpParams, spec: MlpSpec, x: np.ndarray, want_cache: bool = False):
    """Batch forward pass. Returns outputs, or (outputs, cache) with want_cache.

    x: (batch, input_dim). Softmax heads return rows that sum to 1.
    """
    x = _check_input(spec, x)
    pre, hidden = [], []
    a = x
    n_layers = len(params.weights)
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        pre.append(z)
        if k < n_layers - 1:
            a = np.maximum(z, 0.0)
            hidden.append(a)
    out = _softmax_rows(pre[-1]) if spec.output_head == "softmax" else pre[-1]
    if want_cache:
        return out, ForwardCache(inputs=x, pre_activations=pre, hidden_outputs=hidden, outputs=out)
    return out


def backward(params: MlpParams, spec: MlpSpec, cache: ForwardCache, grad_out: np.ndarray):
    """Reverse-mode gradients of the cached forward pass.

    grad_out is dLoss/dOutput, shape (batch, output_dim); for softmax heads it
    is the gradient with respect to the probabilities and is pulled back
    through the softmax Jacobian. Returns (weight_grads, bias_grads).
    """
    grad_out = np.asarray(grad_out, dtype=float)
    if grad_out.shape != cache.outputs.shape:
        raise ValueError(f"grad_out shape {grad_out.shape} != outputs shape {cache.outputs.shape}")
    n_layers = len(params.weights)
    w_grads = [None] * n_layers
    b_grads = [None] * n_layers

    if spec.output_head == "softmax":
        p = cache.outputs
        delta = p * (grad_out - np.sum(grad_out * p, axis=1, keepdims=True))
    else:
        delta = grad_out

    for k in range(n_layers - 1, -1, -1):
        a_prev = cache.inputs if k == 0 else cache.hidden_outputs[k - 1]
        w_grads[k] = delta.T @ a_prev
        b_grads[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params.weights[k]) * (cache.pre_activations[k - 1] > 0.0)
    return w_grads, b_grads


@dataclass
class OptimizerState:
    """Adaptive moment estimation state for one parameter set."""

    learning_rate: float = 1e-4
    moment_decay: float = 0.9
    variance_decay: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 10.0
    step: int = 0
    m_weights: list = field(default_factory=list)
    v_weights: list = field(default_factory=list)
    m_biases: list = field(default_factory=list)
    v_biases: list = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def _ensure_moments(opt: OptimizerState, params: MlpParams) -> None:
    if not opt.m_weights:
        opt.m_weights = [np.zeros_like(w) for w in params.weights]
        opt.v_weights = [np.zeros_like(w) for w in params.weights]
        opt.m_biases = [np.zeros_like(b) for b in params.biases]
        opt.v_biases = [np.zeros_like(b) for b in params.biases]


def apply_update(params: MlpParams, w_grads, b_grads, opt: OptimizerState) -> None:
    """One in-place descent step on params; clips the global gradient norm first."""
    flat_sq = sum(float(np.sum(g * g)) for g in w_grads) + sum(float(np.sum(g * g)) for g in b_grads)
    if not np.isfinite(flat_sq):
        log.error("rejecting non-finite gradient (norm^2=%r)", flat_sq)
        raise ValueError("non-finite gradients")
    _ensure_moments(opt, params)
    scale = 1.0
    norm = np.sqrt(flat_sq)
    if opt.clip_norm > 0 and norm > opt.clip_norm:
        scale = opt.clip_norm / norm
    opt.step += 1
    bias_c1 = 1.0 - opt.moment_decay ** opt.step
    bias_c2 = 1.0 - opt.variance_decay ** opt.step
    for group, grads, ms, vs in (
        (params.weights, w_grads, opt.m_weights, opt.v_weights),
        (params.biases, b_grads, opt.m_biases, opt.v_biases),
    ):
        for p, g, m, v in zip(group, grads, ms, vs):
            g = g * scale
            m *= opt.moment_decay
            m += (1.0 - opt.moment_decay) * g
            v *= opt.variance_decay
            v += (1.0 - opt.variance_decay) * (g * g)
            p -= opt.learning_rate * (m / bias_c1) / (np.sqrt(v / bias_c2) + opt.epsilon)


def gradient_check_suite(n_nets: int = 20, seed: int = 0, step: float = 1e-5) -> float:
    """Compare backward() against central finite differences on random small nets.

    Returns the worst relative error seen across n_nets random architectures,
    heads, and batches.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n_nets):
        spec = MlpSpec(
            input_dim=int(rng.integers(2, 6)),
            output_dim=int(rng.integers(1, 4)),
            hidden=tuple(int(h) for h in rng.integers(2, 6, size=rng.integers(1, 3))),
            output_head="softmax" if (k % 2 and True) else "linear",
        )
        if spec.output_head == "softmax" and spec.output_dim < 2:
            spec = MlpSpec(spec.input_dim, 2, spec.hidden, "softmax")
        params = init_params(spec, rng)
        x = rng.normal(size=(int(rng.integers(1, 5)), spec.input_dim))
        # random linear loss L = sum(coeff * output)
        coeff = rng.normal(size=(x.shape[0], spec.output_dim))

        def loss(ps):
            return float(np.sum(coeff * forward(ps, spec, x)))

        out, cache = forward(params, spec, x, want_cache=True)
        w_g, b_g = backward(params, spec, cache, coeff)
        for arrays, grads in ((params.weights, w_g), (params.biases, b_g)):
            for arr, grad in zip(arrays, grads):
                flat = arr.reshape(-1)
                for idx in range(flat.size):
                    orig = flat[idx]
                    flat[idx] = orig + step
                    up = loss(params)
                    flat[idx] = orig - step
                    down = loss(params)
                    flat[idx] = orig
                    numeric = (up - down) / (2 * step)
                    analytic = grad.reshape(-1)[idx]
                    denom = max(abs(numeric), abs(analytic), 1e-8)
                    worst = max(worst, abs(numeric - analytic) / denom)
    return worst


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, spec: MlpSpec, params: MlpParams) -> None:
    """Self-describing binary: magic, version, head, layer dims, float64 weights."""
    head_code = _HEADS.index(spec.output_head)
    dims = [spec.input_dim, *spec.hidden, spec.output_dim]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<BBH", CHECKPOINT_VERSION, head_code, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[MlpSpec, MlpParams]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad checkpoint magic; not a network checkpoint")
    version, head_code, n_dims = struct.unpack_from("<BBH", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if head_code >= len(_HEADS) or n_dims < 2:
        raise CheckpointError("corrupted checkpoint header")
    off = 8
    if len(blob) < off + 4 * n_dims:
        raise CheckpointError("truncated checkpoint header")
    dims = struct.unpack_from(f"<{n_dims}I", blob, off)
    off += 4 * n_dims
    spec = MlpSpec(
        input_dim=dims[0],
        output_dim=dims[-1],
        hidden=tuple(dims[1:-1]),
        output_head=_HEADS[head_code],
    )
    weights, biases = [], []
    for fan_in, fan_out in spec.layer_dims:
        n_w, n_b = fan_out * fan_in, fan_out
        need = 8 * (n_w + n_b)
        if len(blob) < off + need:
            raise CheckpointError("truncated checkpoint payload")
        w = np.frombuffer(blob, dtype="<f8", count=n_w, offset=off).reshape(fan_out, fan_in).copy()
        off += 8 * n_w
        b = np.frombuffer(blob, dtype="<f8", count=n_b, offset=off).copy()
        off += 8 * n_b
        weights.append(w)
        biases.append(b)
    if off != len(blob):
        raise CheckpointError("trailing bytes in checkpoint")
    return spec, MlpParams(weights=weights, biases=biases)
