"""Matrix-granular reverse-mode differentiation for the model's few kernels.

A Tape records one closure per operation; creation order is already a
topological order of the computation, so backward just replays the closures
in reverse. Vars hold dense arrays; operands passed as plain ndarrays (or
scipy sparse matrices) are constants and receive no gradient. The op set is
deliberately small: products (dense, sparse, mode-3), ReLU, sigmoid,
dropout, masked softmax cross-entropy, and the tensor bookkeeping the
fusion heads need.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .graph import NormAdj


class Var:
    """A tracked array. ``grad`` is filled in during Tape.backward."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Var(shape={self.data.shape})"


def _acc(v, g):
    if not isinstance(v, Var):
        return
    if v.grad is None:
        v.grad = np.array(g, dtype=np.float64)
    else:
        v.grad += g


def _data(x):
    return x.data if isinstance(x, Var) else x


class Tape:
    """Operation log for one forward pass."""

    def __init__(self):
        self._nodes = []

    def _push(self, backward):
        self._nodes.append(backward)

    def backward(self, loss: Var):
        if loss.data.shape != ():
            raise ValueError("backward starts from a scalar loss")
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self._nodes):
            node()


def affine(tape: Tape, x, w: Var) -> Var:
    """x @ w, no bias. x may be a constant ndarray or sparse matrix."""
    xd, wd = _data(x), w.data
    if xd.shape[1] != wd.shape[0]:
        raise ValueError(f"affine shape mismatch: {xd.shape} @ {wd.shape}")
    prod = xd @ wd
    out = Var(np.asarray(prod.toarray() if sp.issparse(prod) else prod))

    def backward():
        _acc(w, xd.T @ out.grad)
        if isinstance(x, Var):
            _acc(x, out.grad @ wd.T)

    tape._push(backward)
    return out


def spmm(tape: Tape, adj: NormAdj, x) -> Var:
    """Normalized-adjacency propagation Â x; backward reuses Â (symmetric)."""
    xd = _data(x)
    if adj.n != xd.shape[0]:
        raise ValueError(f"spmm shape mismatch: {adj.n} rows vs {xd.shape}")
    out = Var(adj.mat @ xd)

    def backward():
        if isinstance(x, Var):
            _acc(x, adj.mat @ out.grad)

    tape._push(backward)
    return out


def mode3(tape: Tape, x: Var, w: Var) -> Var:
    """Mode-3 product: out[i,j,b] = sum_a X[i,j,a] W[a,b]."""
    xd, wd = x.data, w.data
    if xd.ndim != 3 or xd.shape[2] != wd.shape[0]:
        raise ValueError(f"mode3 shape mismatch: {xd.shape} x3 {wd.shape}")
    out = Var(xd @ wd)

    def backward():
        _acc(x, out.grad @ wd.T)
        n, c, s = xd.shape
        _acc(w, xd.reshape(n * c, s).T @ out.grad.reshape(n * c, -1))

    tape._push(backward)
    return out


def relu(tape: Tape, x: Var) -> Var:
    gate = x.data > 0
    out = Var(np.where(gate, x.data, 0.0))

    def backward():
        _acc(x, out.grad * gate)

    tape._push(backward)
    return out


def sigmoid(tape: Tape, x: Var) -> Var:
    out = Var(expit(x.data))

    def backward():
        _acc(x, out.grad * out.data * (1.0 - out.data))

    tape._push(backward)
    return out


def dropout(tape: Tape, x, p: float, training: bool,
            rng: np.random.Generator):
    """Inverted dropout: survivors scaled by 1/(1-p); identity in eval.

    A constant input (plain or sparse array) comes back as a masked
    constant with no tape node; sparse inputs are masked on their stored
    entries only, staying sparse.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    scale_ = 1.0 / (1.0 - p)
    if not isinstance(x, Var):
        if sp.issparse(x):
            out = sp.csr_array(x, copy=True)
            out.data = np.where(rng.random(out.data.shape) >= p,
                                out.data * scale_, 0.0)
            return out
        return np.where(rng.random(x.shape) >= p, x * scale_, 0.0)
    keep = rng.random(x.data.shape) >= p
    out = Var(np.where(keep, x.data * scale_, 0.0))

    def backward():
        _acc(x, np.where(keep, out.grad * scale_, 0.0))

    tape._push(backward)
    return out


def softmax_ce(tape: Tape, logits: Var, labels, mask) -> Var:
    """Mean cross-entropy of row-wise softmax over the masked nodes."""
    mask = np.asarray(mask, dtype=bool)
    m = int(mask.sum())
    if m == 0:
        raise ValueError("softmax_ce over an empty mask")
    lab = np.asarray(labels)[mask]
    z = logits.data[mask]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = Var(-logp[np.arange(m), lab].mean())

    def backward():
        delta = np.exp(logp)
        delta[np.arange(m), lab] -= 1.0
        full = np.zeros_like(logits.data)
        full[mask] = delta / m
        _acc(logits, out.grad * full)

    tape._push(backward)
    return out


def stack3(tape: Tape, slices: list[Var]) -> Var:
    """Stack n x c matrices into an n x c x s tensor along a new last mode."""
    out = Var(np.stack([s.data for s in slices], axis=2))

    def backward():
        for q, s in enumerate(slices):
            _acc(s, out.grad[:, :, q])

    tape._push(backward)
    return out


def slice3(tape: Tape, x: Var, q: int) -> Var:
    out = Var(x.data[:, :, q])

    def backward():
        g = np.zeros_like(x.data)
        g[:, :, q] = out.grad
        _acc(x, g)

    tape._push(backward)
    return out


def squeeze3(tape: Tape, x: Var) -> Var:
    if x.data.ndim != 3 or x.data.shape[2] != 1:
        raise ValueError(f"squeeze3 expects a trailing singleton, got {x.shape}")
    out = Var(x.data[:, :, 0])

    def backward():
        _acc(x, out.grad[:, :, None])

    tape._push(backward)
    return out


def meanpool3(tape: Tape, x: Var) -> Var:
    s = x.data.shape[2]
    out = Var(x.data.mean(axis=2))

    def backward():
        _acc(x, np.repeat(out.grad[:, :, None], s, axis=2) / s)

    tape._push(backward)
    return out


def maxpool3(tape: Tape, x: Var) -> Var:
    arg = x.data.argmax(axis=2)
    out = Var(np.take_along_axis(x.data, arg[:, :, None], axis=2)[:, :, 0])

    def backward():
        g = np.zeros_like(x.data)
        np.put_along_axis(g, arg[:, :, None], out.grad[:, :, None], axis=2)
        _acc(x, g)

    tape._push(backward)
    return out


def softmax_rows(tape: Tape, x: Var) -> Var:
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = Var(e / e.sum(axis=1, keepdims=True))

    def backward():
        inner = (out.grad * out.data).sum(axis=1, keepdims=True)
        _acc(x, out.data * (out.grad - inner))

    tape._push(backward)
    return out


def slicemix(tape: Tape, x: Var, w: Var) -> Var:
    """Per-node weighted sum over slices: out[i,j] = sum_q X[i,j,q] w[i,q]."""
    if x.data.shape[::2] != w.data.shape:
        raise ValueError(f"slicemix shape mismatch: {x.shape} vs {w.shape}")
    out = Var(np.einsum("ncs,ns->nc", x.data, w.data))

    def backward():
        _acc(x, out.grad[:, :, None] * w.data[:, None, :])
        _acc(w, np.einsum("ncs,nc->ns", x.data, out.grad))

    tape._push(backward)
    return out


def concat_cols(tape: Tape, cols: list[Var]) -> Var:
    """Concatenate n x 1 columns into an n x s matrix."""
    out = Var(np.concatenate([c.data for c in cols], axis=1))

    def backward():
        for q, c in enumerate(cols):
            _acc(c, out.grad[:, q: q + 1])

    tape._push(backward)
    return out


def add(tape: Tape, a: Var, b: Var) -> Var:
    out = Var(a.data + b.data)

    def backward():
        _acc(a, out.grad)
        _acc(b, out.grad)

    tape._push(backward)
    return out


def addrow(tape: Tape, x: Var, b: Var) -> Var:
    """Add a (1, k) row vector to every row of x."""
    if b.data.shape != (1, x.data.shape[1]):
        raise ValueError(f"addrow shape mismatch: {x.shape} + {b.shape}")
    out = Var(x.data + b.data)

    def backward():
        _acc(x, out.grad)
        _acc(b, out.grad.sum(axis=0, keepdims=True))

    tape._push(backward)
    return out


def sub(tape: Tape, a: Var, b: Var) -> Var:
    out = Var(a.data - b.data)

    def backward():
        _acc(a, out.grad)
        _acc(b, -out.grad)

    tape._push(backward)
    return out


def scale(tape: Tape, x: Var, c: float) -> Var:
    out = Var(x.data * c)

    def backward():
        _acc(x, out.grad * c)

    tape._push(backward)
    return out


def total(tape: Tape, x: Var) -> Var:
    """Sum of all entries; the scalar sink used by gradient checks."""
    out = Var(x.data.sum())

    def backward():
        _acc(x, np.full_like(x.data, float(out.grad)))

    tape._push(backward)
    return out


def rowscale(tape: Tape, x: Var, s: Var) -> Var:
    """diag(s) @ x for a per-node weight vector s of shape (n,) or (n, 1)."""
    sv = s.data.reshape(-1, 1)
    if sv.shape[0] != x.data.shape[0]:
        raise ValueError(f"rowscale shape mismatch: {x.shape} vs {s.shape}")
    out = Var(x.data * sv)

    def backward():
        _acc(x, out.grad * sv)
        _acc(s, (out.grad * x.data).sum(axis=1).reshape(s.data.shape))

    tape._push(backward)
    return out


class ParamStore:
    """Named trainable matrices plus their Adam moment buffers."""

    def __init__(self):
        self._vars: dict[str, Var] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, data) -> Var:
        if name in self._vars:
            raise ValueError(f"duplicate parameter {name!r}")
        var = Var(np.array(data, dtype=np.float64))
        self._vars[name] = var
        self._m[name] = np.zeros_like(var.data)
        self._v[name] = np.zeros_like(var.data)
        return var

    def glorot(self, name: str, rows: int, cols: int,
               rng: np.random.Generator) -> Var:
        limit = np.sqrt(6.0 / (rows + cols))
        return self.add(name, rng.uniform(-limit, limit, size=(rows, cols)))

    def __getitem__(self, name: str) -> Var:
        return self._vars[name]

    def __contains__(self, name: str) -> bool:
        return name in self._vars

    def items(self):
        return self._vars.items()

    def names(self):
        return tuple(self._vars)

    def zero_grad(self):
        for var in self._vars.values():
            var.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: var.data.copy() for name, var in self._vars.items()}

    def load_snapshot(self, arrays: dict[str, np.ndarray]):
        if set(arrays) != set(self._vars):
            raise ValueError("snapshot names do not match parameters")
        for name, data in arrays.items():
            var = self._vars[name]
            if var.data.shape != data.shape:
                raise ValueError(f"shape mismatch for {name!r}")
            var.data = np.array(data, dtype=np.float64)


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8,
              weight_decay: float = 0.0):
    """One Adam update over every parameter; gradients are cleared after.

    Weight decay enters as an L2 term on the gradient before the moment
    update, so it shares the moment buffers with the data gradient.
    """
    store.step_count += 1
    t = store.step_count
    for name, var in store.items():
        g = var.grad if var.grad is not None else np.zeros_like(var.data)
        if weight_decay:
            g = g + weight_decay * var.data
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        var.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        var.grad = None


@dataclass
class GradcheckReport:
    max_rel_err: float
    worst_param: str
    per_param: dict[str, float] = field(default_factory=dict)

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_err <= tol


def gradcheck(build_loss, params, h: float = 1e-5) -> GradcheckReport:
    """Compare reverse-mode gradients against central finite differences.

    ``build_loss`` must rebuild the whole computation deterministically on
    every call (recreate any dropout rng inside) and return ``(tape, loss)``.
    ``params`` is a ParamStore or a dict of name -> Var. The step is scaled
    per entry as h * max(1, |theta|); relative error uses a 1e-4 floor so
    near-zero gradient pairs compare absolutely.
    """
    named = dict(params.items() if hasattr(params, "items") else params)
    for var in named.values():
        var.grad = None
    tape, loss = build_loss()
    tape.backward(loss)
    analytic = {name: (np.zeros_like(var.data) if var.grad is None
                       else var.grad.copy())
                for name, var in named.items()}
    report = GradcheckReport(max_rel_err=0.0, worst_param="")
    for name, var in named.items():
        worst = 0.0
        flat = var.data.ravel()
        for idx in range(flat.size):
            keep = flat[idx]
            step = h * max(1.0, abs(keep))
            flat[idx] = keep + step
            _, up = build_loss()
            flat[idx] = keep - step
            _, down = build_loss()
            flat[idx] = keep
            numeric = (float(up.data) - float(down.data)) / (2.0 * step)
            a = analytic[name].ravel()[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-4)
            worst = max(worst, err)
        report.per_param[name] = worst
        if worst >= report.max_rel_err:
            report.max_rel_err = worst
            report.worst_param = name
    for name, var in named.items():
        var.grad = None
    return report


CHECKPOINT_VERSION = 1


def save_params(store: ParamStore, path, extra: dict | None = None):
    """Write parameters to one .npz with an embedded JSON manifest."""
    manifest = {
        "version": CHECKPOINT_VERSION,
        "params": [{"name": name, "rows": int(var.data.shape[0]),
                    "cols": int(var.data.shape[1])}
                   for name, var in store.items()],
        "extra": extra or {},
    }
    arrays = {name: var.data for name, var in store.items()}
    np.savez(path, __manifest__=np.frombuffer(
        json.dumps(manifest, sort_keys=True).encode(), dtype=np.uint8),
        **arrays)


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back as (arrays by name, manifest dict)."""
    with np.load(path) as bundle:
        if "__manifest__" not in bundle:
            raise ValueError(f"{path}: not a parameter checkpoint")
        manifest = json.loads(bundle["__manifest__"].tobytes().decode())
        if manifest.get("version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"{path}: unsupported checkpoint version "
                f"{manifest.get('version')!r}")
        arrays = {}
        for entry in manifest["params"]:
            name = entry["name"]
            data = bundle[name]
            if data.shape != (entry["rows"], entry["cols"]):
                raise ValueError(f"{path}: shape mismatch for {name!r}")
            arrays[name] = data
    return arrays, manifest
