"""From-scratch bidirectional LSTM sequence-to-one classifier.

One forward cell consumes the feature columns first to last, one
backward cell consumes them last to first, and the two final hidden
states are concatenated into the sequence summary V. A dense softmax
head reads the class distribution off V; inverted dropout is applied to
V only, and only while training. Everything (forward pass, BPTT,
initialization, checkpointing) is written directly against numpy so the
gradients can be audited entry by entry.

Shapes: feature matrices are (D, m) with one column per patch; cell
parameters are W (H, D), U (H, H), b (H,) per gate.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import NumericFault, ValidationError

GATES = ("i", "f", "c", "o")
GATE_NAMES = {"i": "input", "f": "forget", "c": "candidate", "o": "output"}

CHECKPOINT_VERSION = 1


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function, stable for large |z|."""
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LstmCellParams:
    W: Dict[str, np.ndarray]  # gate -> (H, D)
    U: Dict[str, np.ndarray]  # gate -> (H, H)
    b: Dict[str, np.ndarray]  # gate -> (H,)

    @property
    def hidden_units(self) -> int:
        return self.W["i"].shape[0]

    @property
    def input_size(self) -> int:
        return self.W["i"].shape[1]


@dataclass
class BiLstmModel:
    forward_cell: LstmCellParams
    backward_cell: Optional[LstmCellParams]  # None = unidirectional mode
    dense_W: np.ndarray  # (C, V_dim)
    dense_b: np.ndarray  # (C,)
    dropout_rate: float = 0.0

    @property
    def bidirectional(self) -> bool:
        return self.backward_cell is not None

    @property
    def hidden_units(self) -> int:
        return self.forward_cell.hidden_units

    @property
    def input_size(self) -> int:
        return self.forward_cell.input_size

    @property
    def class_count(self) -> int:
        return self.dense_W.shape[0]

    @property
    def summary_size(self) -> int:
        return self.dense_W.shape[1]

    def named_parameters(self) -> List[Tuple[str, np.ndarray]]:
        """Stable (name, tensor) listing used by optimizers and checkpoints."""
        cells = [("forward", self.forward_cell)]
        if self.backward_cell is not None:
            cells.append(("backward", self.backward_cell))
        out = []
        for cell_name, cell in cells:
            for gate in GATES:
                out.append((f"{cell_name}.W_{gate}", cell.W[gate]))
                out.append((f"{cell_name}.U_{gate}", cell.U[gate]))
                out.append((f"{cell_name}.b_{gate}", cell.b[gate]))
        out.append(("dense.W", self.dense_W))
        out.append(("dense.b", self.dense_b))
        return out

    def parameter_count(self) -> int:
        return sum(tensor.size for _, tensor in self.named_parameters())

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: tensor.copy() for name, tensor in self.named_parameters()}

    def load_snapshot(self, snap: Dict[str, np.ndarray]) -> None:
        for name, tensor in self.named_parameters():
            tensor[...] = snap[name]

    def astype(self, dtype) -> "BiLstmModel":
        def convert(cell: LstmCellParams) -> LstmCellParams:
            return LstmCellParams(
                W={g: cell.W[g].astype(dtype) for g in GATES},
                U={g: cell.U[g].astype(dtype) for g in GATES},
                b={g: cell.b[g].astype(dtype) for g in GATES},
            )

        return BiLstmModel(
            forward_cell=convert(self.forward_cell),
            backward_cell=convert(self.backward_cell) if self.backward_cell else None,
            dense_W=self.dense_W.astype(dtype),
            dense_b=self.dense_b.astype(dtype),
            dropout_rate=self.dropout_rate,
        )


def _init_cell(rng: np.random.Generator, input_size: int, hidden: int, dtype) -> LstmCellParams:
    def uniform(fan_in, fan_out, shape):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape).astype(dtype)

    W = {g: uniform(input_size, hidden, (hidden, input_size)) for g in GATES}
    U = {g: uniform(hidden, hidden, (hidden, hidden)) for g in GATES}
    b = {g: np.zeros(hidden, dtype=dtype) for g in GATES}
    b["f"][:] = 1.0  # open forget gates help early gradient flow
    return LstmCellParams(W=W, U=U, b=b)


def init_model(
    input_size: int,
    hidden_units: int,
    class_count: int,
    dropout_rate: float = 0.0,
    seed: int = 0,
    bidirectional: bool = True,
    dtype=np.float32,
) -> BiLstmModel:
    """Seeded uniform initialization, limit sqrt(6/(fan_in+fan_out)) per tensor."""
    if input_size < 1 or hidden_units < 1:
        raise ValidationError("input_size and hidden_units must be >= 1")
    if class_count < 2:
        raise ValidationError(f"need at least 2 classes, got {class_count}")
    if not 0.0 <= dropout_rate < 1.0:
        raise ValidationError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
    rng = np.random.default_rng(seed)
    forward_cell = _init_cell(rng, input_size, hidden_units, dtype)
    backward_cell = _init_cell(rng, input_size, hidden_units, dtype) if bidirectional else None
    summary = 2 * hidden_units if bidirectional else hidden_units
    limit = np.sqrt(6.0 / (summary + class_count))
    dense_W = rng.uniform(-limit, limit, size=(class_count, summary)).astype(dtype)
    dense_b = np.zeros(class_count, dtype=dtype)
    return BiLstmModel(
        forward_cell=forward_cell,
        backward_cell=backward_cell,
        dense_W=dense_W,
        dense_b=dense_b,
        dropout_rate=dropout_rate,
    )


def lstm_cell_step(
    params: LstmCellParams, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """One LSTM step: returns the new hidden and cell state."""
    gates = {}
    for g in GATES:
        z = params.W[g] @ x + params.U[g] @ h_prev + params.b[g]
        if not np.all(np.isfinite(z)):
            raise NumericFault(f"non-finite activation in {GATE_NAMES[g]} gate")
        gates[g] = np.tanh(z) if g == "c" else sigmoid(z)
    c = gates["f"] * c_prev + gates["i"] * gates["c"]
    h = gates["o"] * np.tanh(c)
    return h, c


@dataclass
class CellTrace:
    """Per-step activations cached in consumption order for BPTT."""

    x: np.ndarray  # (m, D)
    h_prev: np.ndarray  # (m, H)
    c_prev: np.ndarray  # (m, H)
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray  # candidate values
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray  # (m, H) states after each step


def _run_cell(params: LstmCellParams, xs: np.ndarray) -> CellTrace:
    """Run the cell over xs (m, D) from zero state, caching activations."""
    m = xs.shape[0]
    hid = params.hidden_units
    dtype = xs.dtype
    trace = CellTrace(
        x=xs,
        h_prev=np.zeros((m, hid), dtype),
        c_prev=np.zeros((m, hid), dtype),
        i=np.zeros((m, hid), dtype),
        f=np.zeros((m, hid), dtype),
        g=np.zeros((m, hid), dtype),
        o=np.zeros((m, hid), dtype),
        c=np.zeros((m, hid), dtype),
        tanh_c=np.zeros((m, hid), dtype),
        h=np.zeros((m, hid), dtype),
    )
    h = np.zeros(hid, dtype)
    c = np.zeros(hid, dtype)
    for t in range(m):
        x = xs[t]
        trace.h_prev[t] = h
        trace.c_prev[t] = c
        acts = {}
        for g in GATES:
            z = params.W[g] @ x + params.U[g] @ h + params.b[g]
            if not np.all(np.isfinite(z)):
                raise NumericFault(
                    f"non-finite activation in {GATE_NAMES[g]} gate at step {t}"
                )
            acts[g] = np.tanh(z) if g == "c" else sigmoid(z)
        c = acts["f"] * c + acts["i"] * acts["c"]
        tanh_c = np.tanh(c)
        h = acts["o"] * tanh_c
        trace.i[t], trace.f[t], trace.g[t], trace.o[t] = (
            acts["i"],
            acts["f"],
            acts["c"],
            acts["o"],
        )
        trace.c[t] = c
        trace.tanh_c[t] = tanh_c
        trace.h[t] = h
    return trace


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def cross_entropy_from_logits(logits: np.ndarray, label: int) -> float:
    shifted = logits - logits.max()
    lse = np.log(np.exp(shifted).sum())
    return float(lse - shifted[label])


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """Negative log-likelihood of the true class, clamped away from log(0)."""
    return float(-np.log(max(float(probs[label]), 1e-300)))


@dataclass
class SequenceStates:
    """Everything the forward pass produced, kept for backprop."""

    probs: np.ndarray
    logits: np.ndarray
    h: np.ndarray  # (H, m): forward state after consuming column t
    g: Optional[np.ndarray]  # (H, m): backward state after consuming column t
    c_f: np.ndarray
    c_b: Optional[np.ndarray]
    V: np.ndarray  # pre-dropout summary [h_m; g_final]
    dropout_mask: Optional[np.ndarray] = None
    forward_trace: Optional[CellTrace] = field(default=None, repr=False)
    backward_trace: Optional[CellTrace] = field(default=None, repr=False)


def bilstm_forward(
    model: BiLstmModel,
    features: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    dropout_mask: Optional[np.ndarray] = None,
) -> SequenceStates:
    """Classify one (D, m) feature matrix; returns probs plus cached states.

    While training, V is scaled by an inverted-dropout mask (resampled per
    call from rng unless one is passed in explicitly).
    """
    features = np.asarray(features)
    if features.ndim != 2:
        raise ValidationError(f"expected a (D, m) matrix, got shape {features.shape}")
    if features.shape[0] != model.input_size:
        raise ValidationError(
            f"feature dimension {features.shape[0]} does not match model input size {model.input_size}"
        )
    if features.shape[1] < 1:
        raise ValidationError("sequence must contain at least one column")
    dtype = model.dense_W.dtype
    xs = np.ascontiguousarray(features.T, dtype=dtype)  # (m, D)

    fwd = _run_cell(model.forward_cell, xs)
    if model.backward_cell is not None:
        bwd = _run_cell(model.backward_cell, xs[::-1])
        V = np.concatenate([fwd.h[-1], bwd.h[-1]])
        g_states = bwd.h[::-1].T  # column t = state after consuming column t
        c_b = bwd.c[::-1].T
    else:
        bwd = None
        V = fwd.h[-1]
        g_states = None
        c_b = None

    mask = None
    if training and model.dropout_rate > 0.0:
        if dropout_mask is not None:
            mask = dropout_mask
        else:
            if rng is None:
                raise ValidationError("training-mode dropout needs an rng or explicit mask")
            keep = 1.0 - model.dropout_rate
            mask = (rng.random(V.shape) < keep).astype(dtype) / dtype.type(keep)
    v_used = V * mask if mask is not None else V

    logits = model.dense_W @ v_used + model.dense_b
    if not np.all(np.isfinite(logits)):
        raise NumericFault("non-finite logits in dense head")
    probs = softmax(logits)
    return SequenceStates(
        probs=probs,
        logits=logits,
        h=fwd.h.T,
        g=g_states,
        c_f=fwd.c.T,
        c_b=c_b,
        V=V,
        dropout_mask=mask,
        forward_trace=fwd,
        backward_trace=bwd,
    )


def _backprop_cell(params: LstmCellParams, trace: CellTrace, dh_final: np.ndarray):
    """BPTT through one cell given the loss gradient at its final state."""
    m, hid = trace.h.shape
    grads = {
        f"W_{g}": np.zeros_like(params.W[g]) for g in GATES
    }
    grads.update({f"U_{g}": np.zeros_like(params.U[g]) for g in GATES})
    grads.update({f"b_{g}": np.zeros_like(params.b[g]) for g in GATES})
    dh = dh_final.copy()
    dc = np.zeros(hid, dtype=dh.dtype)
    for t in range(m - 1, -1, -1):
        i, f, g, o = trace.i[t], trace.f[t], trace.g[t], trace.o[t]
        tanh_c = trace.tanh_c[t]
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
        di = dc * g
        df = dc * trace.c_prev[t]
        dg = dc * i
        dz = {
            "i": di * i * (1.0 - i),
            "f": df * f * (1.0 - f),
            "c": dg * (1.0 - g * g),
            "o": do * o * (1.0 - o),
        }
        x = trace.x[t]
        h_prev = trace.h_prev[t]
        dh = np.zeros(hid, dtype=dh.dtype)
        for gate in GATES:
            grads[f"W_{gate}"] += np.outer(dz[gate], x)
            grads[f"U_{gate}"] += np.outer(dz[gate], h_prev)
            grads[f"b_{gate}"] += dz[gate]
            dh += params.U[gate].T @ dz[gate]
        dc = dc * f
    return grads


def backprop(
    model: BiLstmModel, states: SequenceStates, label: int
) -> Dict[str, np.ndarray]:
    """Full BPTT gradients for one example, keyed like named_parameters()."""
    if not 0 <= label < model.class_count:
        raise ValidationError(f"label {label} outside class range 0..{model.class_count - 1}")
    dlogits = states.probs.copy()
    dlogits[label] -= 1.0

    v_used = states.V if states.dropout_mask is None else states.V * states.dropout_mask
    grads: Dict[str, np.ndarray] = {
        "dense.W": np.outer(dlogits, v_used),
        "dense.b": dlogits,
    }
    dV = model.dense_W.T @ dlogits
    if states.dropout_mask is not None:
        dV = dV * states.dropout_mask

    hid = model.hidden_units
    fwd_grads = _backprop_cell(model.forward_cell, states.forward_trace, dV[:hid])
    for key, value in fwd_grads.items():
        grads[f"forward.{key}"] = value
    if model.backward_cell is not None:
        bwd_grads = _backprop_cell(model.backward_cell, states.backward_trace, dV[hid:])
        for key, value in bwd_grads.items():
            grads[f"backward.{key}"] = value

    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NumericFault(f"non-finite gradient in {name}")
    return grads


def compute_gradients(
    model: BiLstmModel,
    features: np.ndarray,
    label: int,
    dropout_mask: Optional[np.ndarray] = None,
) -> Dict[str, np.ndarray]:
    """Forward + BPTT in one call (dropout only if a mask is supplied)."""
    states = bilstm_forward(
        model, features, training=dropout_mask is not None, dropout_mask=dropout_mask
    )
    return backprop(model, states, label)


def gradient_check(
    model: BiLstmModel, features: np.ndarray, label: int, step: float = 1e-5
) -> float:
    """Max relative error between BPTT and central finite differences.

    Runs in double precision with dropout off; relative error is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
    """
    m64 = model.astype(np.float64)
    m64.dropout_rate = 0.0
    feats = np.asarray(features, dtype=np.float64)
    states = bilstm_forward(m64, feats, training=False)
    analytic = backprop(m64, states, label)

    worst = 0.0
    for name, tensor in m64.named_parameters():
        grad = analytic[name]
        flat = tensor.reshape(-1)
        gflat = grad.reshape(-1)
        for idx in range(flat.size):
            saved = flat[idx]
            flat[idx] = saved + step
            up = cross_entropy_from_logits(
                bilstm_forward(m64, feats, training=False).logits, label
            )
            flat[idx] = saved - step
            down = cross_entropy_from_logits(
                bilstm_forward(m64, feats, training=False).logits, label
            )
            flat[idx] = saved
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(gflat[idx]), abs(numeric), 1e-12)
            worst = max(worst, abs(gflat[idx] - numeric) / denom)
    return worst


def save_model(model: BiLstmModel, path) -> None:
    """Versioned checkpoint: JSON header + exact parameter tensors."""
    header = {
        "version": CHECKPOINT_VERSION,
        "input_size": model.input_size,
        "hidden_units": model.hidden_units,
        "class_count": model.class_count,
        "bidirectional": model.bidirectional,
        "dropout_rate": model.dropout_rate,
        "dtype": str(model.dense_W.dtype),
    }
    arrays = dict(model.named_parameters())
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)


def load_model(path) -> BiLstmModel:
    with np.load(path) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValidationError(
                f"unsupported checkpoint version {header.get('version')}"
            )
        arrays = {k: data[k] for k in data.files if k != "__header__"}

    def cell(prefix: str) -> LstmCellParams:
        return LstmCellParams(
            W={g: arrays[f"{prefix}.W_{g}"] for g in GATES},
            U={g: arrays[f"{prefix}.U_{g}"] for g in GATES},
            b={g: arrays[f"{prefix}.b_{g}"] for g in GATES},
        )

    return BiLstmModel(
        forward_cell=cell("forward"),
        backward_cell=cell("backward") if header["bidirectional"] else None,
        dense_W=arrays["dense.W"],
        dense_b=arrays["dense.b"],
        dropout_rate=float(header["dropout_rate"]),
    )
