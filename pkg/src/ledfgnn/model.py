"""Backbones, layer stacking, fusion heads, and the assembled dual-topology model.

The full model runs one backbone over the original topology, stacks the
propagated logits into a layer tensor per topology, fuses each tensor down
to an n x c embedding (by default with the mode-3 fusion cascade), and
combines the two channels with per-node attention plus a scaled logit
residual:

    H_out = diag(alpha) H + diag(beta) H_R + diag(epsilon) P

Ablation and baseline behavior is selected by ModelVariant: which
topologies contribute, and how the layer tensor collapses to a matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tape, Var
from .datasets import HyperPreset
from .graph import Graph, NormAdj

TOPOLOGY_MODES = ("dual", "original-only", "reconstructed-only")
LAYER_MODES = ("ledf", "last-only", "middle-only", "mean-pool", "max-pool",
               "attention-sum")


@dataclass(frozen=True)
class BackboneConfig:
    """Two-layer backbone shape: mlp or gcn, bias-free by default."""

    kind: str
    d: int
    c: int
    hidden: int = 128
    dropout: float = 0.5
    use_bias: bool = False

    def __post_init__(self):
        if self.kind not in ("mlp", "gcn"):
            raise ValueError(f"backbone kind must be mlp or gcn, got {self.kind!r}")
        if self.hidden < 1:
            raise ValueError("hidden width must be >= 1")


@dataclass(frozen=True)
class ModelVariant:
    """Which topologies feed the output, and how layers collapse."""

    topology_mode: str = "dual"
    layer_mode: str = "ledf"

    def __post_init__(self):
        if self.topology_mode not in TOPOLOGY_MODES:
            raise ValueError(f"topology_mode must be one of {TOPOLOGY_MODES}")
        if self.layer_mode not in LAYER_MODES:
            raise ValueError(f"layer_mode must be one of {LAYER_MODES}")


FULL_VARIANT = ModelVariant("dual", "ledf")


def ledf_widths(q: int, k_depth: int) -> tuple[int, ...]:
    """Fusion matrix widths d_0..d_K for a stack of Q+1 slices.

    d_0 = Q+1 and d_K = 1 are fixed; intermediate widths interpolate
    linearly (round half up, floored at 1), which reproduces the stated
    first and last matrix shapes.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    if k_depth < 2:
        raise ValueError("fusion depth must be >= 2")
    s = q + 1
    return tuple(max(1, int(np.floor(s * (k_depth - j) / k_depth + 0.5)))
                 for j in range(k_depth + 1))


@dataclass
class LedfHead:
    """The fusion cascade's weight matrices W_1..W_K."""

    weights: list[Var]

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],
                *(w.shape[1] for w in self.weights))


@dataclass
class DtpsHead:
    """Channel attention scorer, shared by both topology channels."""

    w1: Var
    w2: Var
    epsilon: float = 0.1


@dataclass
class ForwardResult:
    """Output logits plus the attention diagnostics of one forward pass."""

    logits: Var
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None
    slice_weights: dict[str, np.ndarray] = field(default_factory=dict)


def backbone_forward(tape: Tape, cfg: BackboneConfig, params: dict[str, Var],
                     feats, adj: NormAdj | None, training: bool,
                     rng: np.random.Generator) -> Var:
    """Raw backbone logits P. gcn propagates each affine layer's output.

    The gcn layer computes A(XW) rather than (AX)W; the products are
    algebraically identical and this order keeps sparse feature matrices
    out of the dense propagation.
    """

    def layer(x, w, b):
        out = ad.affine(tape, x, w)
        if b is not None:
            out = ad.addrow(tape, out, b)
        if cfg.kind == "gcn":
            out = ad.spmm(tape, adj, out)
        return out

    b1 = params.get("b1") if cfg.use_bias else None
    b2 = params.get("b2") if cfg.use_bias else None
    h = ad.dropout(tape, feats, cfg.dropout, training, rng)
    h = ad.relu(tape, layer(h, params["w1"], b1))
    h = ad.dropout(tape, h, cfg.dropout, training, rng)
    return layer(h, params["w2"], b2)


def stack_layers(tape: Tape, p: Var, adj: NormAdj, q: int) -> Var:
    """Stack P, A P, .., A^Q P into an n x c x (Q+1) tensor, slice by slice."""
    if q < 1:
        raise ValueError("q must be >= 1")
    slices = [p]
    for _ in range(q):
        slices.append(ad.spmm(tape, adj, slices[-1]))
    return ad.stack3(tape, slices)


def ledf_fuse(tape: Tape, head: LedfHead, x3: Var) -> Var:
    """Cascade of mode-3 products, ReLU between, final product linear."""
    if x3.data.shape[2] != head.widths[0]:
        raise ValueError(
            f"stack depth {x3.data.shape[2]} does not match head width "
            f"{head.widths[0]}")
    out = x3
    last = len(head.weights) - 1
    for j, w in enumerate(head.weights):
        out = ad.mode3(tape, out, w)
        if j < last:
            out = ad.relu(tape, out)
    return ad.squeeze3(tape, out)


def channel_attention(tape: Tape, head: DtpsHead, h: Var,
                      h_r: Var) -> tuple[Var, Var]:
    """Per-node channel weights alpha, beta with alpha + beta = 1.

    Scores s = sigmoid(H W1) W2 per channel; the two-term softmax
    exp(s)/(exp(s)+exp(s_R)) is evaluated as sigmoid(s - s_R), its
    overflow-free form.
    """
    s = ad.affine(tape, ad.sigmoid(tape, ad.affine(tape, h, head.w1)), head.w2)
    s_r = ad.affine(tape, ad.sigmoid(tape, ad.affine(tape, h_r, head.w1)),
                    head.w2)
    alpha = ad.sigmoid(tape, ad.sub(tape, s, s_r))
    beta = ad.sigmoid(tape, ad.sub(tape, s_r, s))
    return alpha, beta


def dtps_fuse(tape: Tape, alpha: Var, beta: Var, h: Var, h_r: Var, p: Var,
              epsilon: float) -> Var:
    """diag(alpha) H + diag(beta) H_R + diag(epsilon) P."""
    out = ad.add(tape, ad.rowscale(tape, h, alpha), ad.rowscale(tape, h_r, beta))
    return ad.add(tape, out, ad.scale(tape, p, epsilon))


def _scorer_hidden(c: int) -> int:
    return -(-c // 2)


class LedfGnn:
    """The assembled model: backbone, per-topology fusion, channel attention.

    Parameter creation order is fixed (backbone, original head,
    reconstructed head, slice scorer, channel scorer) so a seeded rng
    yields identical initializations across runs.
    """

    def __init__(self, variant: ModelVariant, cfg: BackboneConfig, q1: int,
                 q2: int, k_depth: int = 3, epsilon: float = 0.1,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.variant = variant
        self.cfg = cfg
        self.q1 = int(q1)
        self.q2 = int(q2)
        self.k_depth = int(k_depth)
        self.epsilon = float(epsilon)
        self.store = ParamStore()

        self.store.glorot("backbone.w1", cfg.d, cfg.hidden, rng)
        if cfg.use_bias:
            self.store.add("backbone.b1", np.zeros((1, cfg.hidden)))
        self.store.glorot("backbone.w2", cfg.hidden, cfg.c, rng)
        if cfg.use_bias:
            self.store.add("backbone.b2", np.zeros((1, cfg.c)))

        self._heads: dict[str, LedfHead] = {}
        if variant.layer_mode == "ledf":
            if variant.topology_mode in ("dual", "original-only"):
                self._heads["original"] = self._make_head("ledf_o", q1, rng)
            if variant.topology_mode in ("dual", "reconstructed-only"):
                self._heads["reconstructed"] = self._make_head("ledf_r", q2, rng)
        if variant.layer_mode == "attention-sum":
            hid = _scorer_hidden(cfg.c)
            self.store.glorot("att_slice.w1", cfg.c, hid, rng)
            self.store.glorot("att_slice.w2", hid, 1, rng)
        if variant.topology_mode == "dual":
            hid = _scorer_hidden(cfg.c)
            self.store.glorot("dtps.w1", cfg.c, hid, rng)
            self.store.glorot("dtps.w2", hid, 1, rng)

    def _make_head(self, prefix: str, q: int, rng) -> LedfHead:
        widths = ledf_widths(q, self.k_depth)
        weights = [self.store.glorot(f"{prefix}.w{j}", widths[j - 1],
                                     widths[j], rng)
                   for j in range(1, len(widths))]
        return LedfHead(weights=weights)

    def head(self, channel: str) -> LedfHead:
        return self._heads[channel]

    @classmethod
    def from_preset(cls, variant: ModelVariant, graph: Graph,
                    hyper: HyperPreset,
                    rng: np.random.Generator | None = None,
                    use_bias: bool = False) -> "LedfGnn":
        cfg = BackboneConfig(kind=hyper.backbone, d=graph.d, c=graph.c,
                             hidden=hyper.hidden, dropout=hyper.dropout,
                             use_bias=use_bias)
        return cls(variant, cfg, q1=hyper.Q1, q2=hyper.Q2, k_depth=hyper.K,
                   epsilon=hyper.epsilon, rng=rng)

    def _backbone_params(self) -> dict[str, Var]:
        names = {"w1": "backbone.w1", "w2": "backbone.w2",
                 "b1": "backbone.b1", "b2": "backbone.b2"}
        return {short: self.store[full] for short, full in names.items()
                if full in self.store}

    def _channel(self, tape: Tape, p: Var, adj: NormAdj, q: int,
                 channel: str, result: ForwardResult) -> Var:
        mode = self.variant.layer_mode
        if mode in ("last-only", "middle-only"):
            depth = q if mode == "last-only" else -(-q // 2)
            h = p
            for _ in range(depth):
                h = ad.spmm(tape, adj, h)
            return h
        x3 = stack_layers(tape, p, adj, q)
        if mode == "ledf":
            return ledf_fuse(tape, self._heads[channel], x3)
        if mode == "mean-pool":
            return ad.meanpool3(tape, x3)
        if mode == "max-pool":
            return ad.maxpool3(tape, x3)
        # attention-sum: score each slice with the shared scorer, then
        # take the per-node softmax-weighted sum over slices
        w1, w2 = self.store["att_slice.w1"], self.store["att_slice.w2"]
        cols = []
        for idx in range(q + 1):
            sl = ad.slice3(tape, x3, idx)
            cols.append(ad.affine(tape, ad.sigmoid(tape, ad.affine(tape, sl, w1)),
                                  w2))
        wts = ad.softmax_rows(tape, ad.concat_cols(tape, cols))
        result.slice_weights[channel] = wts.data.copy()
        return ad.slicemix(tape, x3, wts)

    def forward(self, tape: Tape, graph: Graph, adj: NormAdj,
                adj_r: NormAdj | None, training: bool = False,
                rng: np.random.Generator | None = None) -> ForwardResult:
        if adj.n != graph.n or (adj_r is not None and adj_r.n != graph.n):
            raise ValueError("adjacency node count does not match graph")
        topo = self.variant.topology_mode
        if topo != "original-only" and adj_r is None:
            raise ValueError(f"{topo} forward needs a reconstructed adjacency")
        rng = rng or np.random.default_rng(0)
        result = ForwardResult(logits=None)
        feats = graph.features
        p = backbone_forward(tape, self.cfg, self._backbone_params(), feats,
                             adj, training, rng)
        if topo == "dual":
            h = self._channel(tape, p, adj, self.q1, "original", result)
            h_r = self._channel(tape, p, adj_r, self.q2, "reconstructed",
                                result)
            dtps = DtpsHead(w1=self.store["dtps.w1"],
                            w2=self.store["dtps.w2"], epsilon=self.epsilon)
            alpha, beta = channel_attention(tape, dtps, h, h_r)
            result.alpha = alpha.data.ravel().copy()
            result.beta = beta.data.ravel().copy()
            result.logits = dtps_fuse(tape, alpha, beta, h, h_r, p,
                                      self.epsilon)
        else:
            if topo == "original-only":
                h = self._channel(tape, p, adj, self.q1, "original", result)
            else:
                h = self._channel(tape, p, adj_r, self.q2, "reconstructed",
                                  result)
            result.logits = ad.add(tape, h, ad.scale(tape, p, self.epsilon))
        return result

    def loss_on(self, graph: Graph, adj: NormAdj, adj_r: NormAdj | None,
                tag: str = "train", training: bool = True,
                rng: np.random.Generator | None = None):
        tape = Tape()
        result = self.forward(tape, graph, adj, adj_r, training, rng)
        loss = ad.softmax_ce(tape, result.logits, graph.labels,
                             graph.mask(tag))
        return tape, loss, result

    def config_dict(self) -> dict:
        return {
            "model": "ledf-gnn",
            "topology_mode": self.variant.topology_mode,
            "layer_mode": self.variant.layer_mode,
            "backbone": self.cfg.kind,
            "d": self.cfg.d, "c": self.cfg.c, "hidden": self.cfg.hidden,
            "dropout": self.cfg.dropout, "use_bias": self.cfg.use_bias,
            "q1": self.q1, "q2": self.q2, "k_depth": self.k_depth,
            "epsilon": self.epsilon,
        }


class BackboneOnly:
    """Baseline: the bare backbone, same training interface as LedfGnn."""

    def __init__(self, cfg: BackboneConfig,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.cfg = cfg
        self.store = ParamStore()
        self.store.glorot("backbone.w1", cfg.d, cfg.hidden, rng)
        if cfg.use_bias:
            self.store.add("backbone.b1", np.zeros((1, cfg.hidden)))
        self.store.glorot("backbone.w2", cfg.hidden, cfg.c, rng)
        if cfg.use_bias:
            self.store.add("backbone.b2", np.zeros((1, cfg.c)))

    @classmethod
    def from_preset(cls, graph: Graph, hyper: HyperPreset,
                    rng: np.random.Generator | None = None) -> "BackboneOnly":
        cfg = BackboneConfig(kind=hyper.backbone, d=graph.d, c=graph.c,
                             hidden=hyper.hidden, dropout=hyper.dropout)
        return cls(cfg, rng=rng)

    def forward(self, tape: Tape, graph: Graph, adj: NormAdj,
                adj_r: NormAdj | None = None, training: bool = False,
                rng: np.random.Generator | None = None) -> ForwardResult:
        rng = rng or np.random.default_rng(0)
        params = {"w1": self.store["backbone.w1"],
                  "w2": self.store["backbone.w2"]}
        if self.cfg.use_bias:
            params["b1"] = self.store["backbone.b1"]
            params["b2"] = self.store["backbone.b2"]
        logits = backbone_forward(tape, self.cfg, params, graph.features, adj,
                                  training, rng)
        return ForwardResult(logits=logits)

    def loss_on(self, graph: Graph, adj: NormAdj, adj_r=None,
                tag: str = "train", training: bool = True,
                rng: np.random.Generator | None = None):
        tape = Tape()
        result = self.forward(tape, graph, adj, adj_r, training, rng)
        loss = ad.softmax_ce(tape, result.logits, graph.labels,
                             graph.mask(tag))
        return tape, loss, result

    def config_dict(self) -> dict:
        return {
            "model": "backbone", "backbone": self.cfg.kind,
            "d": self.cfg.d, "c": self.cfg.c, "hidden": self.cfg.hidden,
            "dropout": self.cfg.dropout, "use_bias": self.cfg.use_bias,
        }


def export_layer_attention(model: LedfGnn, graph: Graph, adj: NormAdj,
                           adj_r: NormAdj | None = None) -> dict[str, dict]:
    """Mean per-slice attention weights of an attention-sum model.

    For each active channel: the node-averaged weight of every slice, and
    the total mass on the shallow half of the stack versus the deep half.
    """
    if model.variant.layer_mode != "attention-sum":
        raise ValueError("layer attention export needs layer_mode attention-sum")
    tape = Tape()
    result = model.forward(tape, graph, adj, adj_r, training=False)
    out = {}
    for channel, wts in result.slice_weights.items():
        per_layer = wts.mean(axis=0)
        half = (per_layer.size + 1) // 2
        out[channel] = {
            "per_layer": per_layer,
            "shallow_mass": float(per_layer[:half].sum()),
            "deep_mass": float(per_layer[half:].sum()),
        }
    return out


def save_model(model, path):
    """Write parameters and the rebuild config to one checkpoint file."""
    ad.save_params(model.store, path, extra=model.config_dict())


def load_model(path):
    """Rebuild a model from a checkpoint written by save_model."""
    arrays, manifest = ad.load_params(path)
    cfg_d = manifest["extra"]
    cfg = BackboneConfig(kind=cfg_d["backbone"], d=cfg_d["d"], c=cfg_d["c"],
                         hidden=cfg_d["hidden"], dropout=cfg_d["dropout"],
                         use_bias=cfg_d.get("use_bias", False))
    if cfg_d["model"] == "backbone":
        model = BackboneOnly(cfg)
    else:
        variant = ModelVariant(cfg_d["topology_mode"], cfg_d["layer_mode"])
        model = LedfGnn(variant, cfg, q1=cfg_d["q1"], q2=cfg_d["q2"],
                        k_depth=cfg_d["k_depth"], epsilon=cfg_d["epsilon"])
    model.store.load_snapshot(arrays)
    return model
