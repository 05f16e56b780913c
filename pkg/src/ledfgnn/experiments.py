"""Experiment drivers behind the CLI.

Each function runs a study end to end and returns a ReportBundle of
CSV-backed tables plus the figures that redraw them. Dataset names are
either directories under the data root or inline SBM descriptors of the
form ``sbm:n=300,c=3,h=0.8,deg=6,signal=0.8,seed=0``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from dataclasses import replace as with_fields
from pathlib import Path

import numpy as np

from .datasets import (
    HyperPreset,
    load_dataset,
    normalize_dataset_name,
    preset,
    save_dataset,
    sbm_preset,
)
from .graph import Graph, NormAdj, SbmSpec, normalize, sbm_generate
from .model import FULL_VARIANT, ModelVariant, export_layer_attention
from .reports import Figure, ReportBundle, Table
from .rewire import rewire, rewire_benchmark
from .training import (
    MAX_EPOCHS,
    PATIENCE,
    build_model,
    multi_seed,
    oversmoothing_sweep,
    train_seeds,
    write_run_log,
)

DEFAULT_SEEDS = (0, 1, 2, 3, 4)

ABLATIONS = (
    ("full", FULL_VARIANT),
    ("original-only", ModelVariant("original-only", "ledf")),
    ("reconstructed-only", ModelVariant("reconstructed-only", "ledf")),
    ("last-only", ModelVariant("dual", "last-only")),
    ("middle-only", ModelVariant("dual", "middle-only")),
)

FUSIONS = ("ledf", "mean-pool", "max-pool", "attention-sum")


@dataclass(frozen=True)
class RunContext:
    """Shared knobs for one CLI invocation."""

    data_root: Path
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    workers: int = 1
    max_epochs: int = MAX_EPOCHS
    patience: int = PATIENCE
    log_root: Path | None = None

    @property
    def environment(self) -> dict:
        return {"seeds": list(self.seeds), "workers": self.workers}


_SBM_FIELDS = {
    "n": ("n", int), "c": ("c", int), "h": ("target_homophily", float),
    "deg": ("avg_degree", float), "signal": ("feature_signal", float),
    "seed": ("seed", int), "d": ("d", int),
}


def parse_sbm_id(name: str) -> SbmSpec:
    """``sbm:key=value,...`` with keys n,c,h,deg,signal,seed,d."""
    kwargs = {"n": 300, "c": 3, "target_homophily": 0.8, "avg_degree": 6.0,
              "feature_signal": 0.8, "seed": 0, "d": 0}
    body = name[len("sbm:"):] if name.startswith("sbm:") else ""
    for part in filter(None, body.split(",")):
        key, _, raw = part.partition("=")
        if key not in _SBM_FIELDS or not raw:
            raise ValueError(
                f"bad SBM descriptor part {part!r}; keys: "
                f"{', '.join(_SBM_FIELDS)}")
        field, cast = _SBM_FIELDS[key]
        kwargs[field] = cast(raw)
    return SbmSpec(**kwargs)


def is_sbm_id(name: str) -> bool:
    return name == "sbm" or name.startswith("sbm:")


def resolve_graph(name: str, ctx: RunContext) -> tuple[Graph, str]:
    """Graph plus the display name used in report rows."""
    if is_sbm_id(name):
        return sbm_generate(parse_sbm_id(name)), name
    canon = normalize_dataset_name(name)
    path = ctx.data_root / canon
    if not (path / "meta.json").is_file():
        raise FileNotFoundError(
            f"dataset {canon!r} not found at {path} "
            f"(set LEDF_DATA or pass --data)")
    return load_dataset(path), canon


def resolve_hyper(name: str, backbone: str) -> HyperPreset:
    if is_sbm_id(name):
        return sbm_preset(backbone)
    return preset(normalize_dataset_name(name), backbone)


def prepared_topologies(graph: Graph, hyper: HyperPreset,
                        workers: int = 1) -> tuple[NormAdj, NormAdj]:
    adj = normalize(graph)
    rewired = rewire(graph, k=hyper.k, metric="lsc", mode="rewire-origin",
                     gamma=hyper.gamma, workers=workers).graph
    return adj, normalize(rewired)


def _runs(ctx: RunContext, variant, graph, adj, adj_r, hyper):
    runs = train_seeds(variant, graph, adj, adj_r, hyper, ctx.seeds,
                       max_epochs=ctx.max_epochs, patience=ctx.patience,
                       workers=ctx.workers)
    if ctx.log_root is not None:
        for run in runs:
            write_run_log(run, ctx.log_root)
    return runs


def apply_sweep(hyper: HyperPreset, param: str, value: str) -> HyperPreset:
    if param == "Q":
        return with_fields(hyper, Q1=int(value), Q2=int(value))
    if param in ("Q1", "Q2", "k", "K", "hidden"):
        return with_fields(hyper, **{param: int(value)})
    if param in ("lr", "weight_decay", "dropout", "gamma", "epsilon"):
        return with_fields(hyper, **{param: float(value)})
    raise ValueError(f"unknown sweep parameter {param!r}")


def run_classify(ctx: RunContext, datasets: list[str], backbones: list[str],
                 sweep: tuple[str, list[str]] | None = None) -> ReportBundle:
    """Baseline vs full model per (dataset, backbone); optional preset sweep."""
    rows, run_rows, sweep_rows = [], [], []
    labels, base_means, ledf_means = [], [], []
    sweep_series: dict[str, np.ndarray] = {}
    for ds in datasets:
        graph, name = resolve_graph(ds, ctx)
        for backbone in backbones:
            hyper = resolve_hyper(ds, backbone)
            adj, adj_r = prepared_topologies(graph, hyper, ctx.workers)
            base_runs = _runs(ctx, None, graph, adj, None, hyper)
            base = multi_seed(base_runs)
            if sweep is None:
                ledf_runs = _runs(ctx, FULL_VARIANT, graph, adj, adj_r, hyper)
                ledf = multi_seed(ledf_runs)
                rows.append((name, backbone, base.mean, base.std,
                             ledf.mean, ledf.std, ledf.mean - base.mean))
                for tag, runs in (("baseline", base_runs), ("ledf", ledf_runs)):
                    run_rows += [(name, backbone, tag, r.seed, r.test_acc,
                                  r.best_epoch, r.epochs_run) for r in runs]
                labels.append(f"{name}/{backbone}")
                base_means.append(base.mean)
                ledf_means.append(ledf.mean)
            else:
                param, values = sweep
                means = []
                for value in values:
                    hyper_v = apply_sweep(hyper, param, value)
                    adj_r_v = adj_r
                    if param in ("k", "gamma"):
                        _, adj_r_v = prepared_topologies(graph, hyper_v,
                                                         ctx.workers)
                    ledf = multi_seed(_runs(ctx, FULL_VARIANT, graph, adj,
                                            adj_r_v, hyper_v))
                    sweep_rows.append((name, backbone, param, value,
                                       ledf.mean, ledf.std, base.mean))
                    means.append(ledf.mean)
                sweep_series[f"{name}/{backbone}"] = np.array(means)

    config = {"experiment": "classify", "datasets": datasets,
              "backbones": backbones, "max_epochs": ctx.max_epochs,
              "patience": ctx.patience,
              "sweep": None if sweep is None else list(sweep)}
    if sweep is None:
        tables = [
            Table("classify",
                  ("dataset", "backbone", "baseline_mean", "baseline_std",
                   "ledf_mean", "ledf_std", "gain"), rows),
            Table("runs", ("dataset", "backbone", "model", "seed", "test_acc",
                           "best_epoch", "epochs_run"), run_rows),
        ]
        figures = [Figure("classify", "bars", {
            "groups": labels,
            "series": {"baseline": np.array(base_means),
                       "ledf": np.array(ledf_means)},
            "title": "Test accuracy", "ylabel": "accuracy"})]
    else:
        param, values = sweep
        tables = [Table("sweep",
                        ("dataset", "backbone", "param", "value", "ledf_mean",
                         "ledf_std", "baseline_mean"), sweep_rows)]
        figures = [Figure("sweep", "line", {
            "x": [float(v) for v in values], "series": sweep_series,
            "title": f"Sensitivity to {param}", "xlabel": param,
            "ylabel": "accuracy"})]
    return ReportBundle("classify", config, ctx.environment, tables, figures)


def run_ablation(ctx: RunContext, datasets: list[str],
                 backbones: list[str]) -> ReportBundle:
    """Full model against the four reduced variants."""
    rows = []
    series = {label: [] for label, _ in ABLATIONS}
    groups = []
    for ds in datasets:
        graph, name = resolve_graph(ds, ctx)
        for backbone in backbones:
            hyper = resolve_hyper(ds, backbone)
            adj, adj_r = prepared_topologies(graph, hyper, ctx.workers)
            means = {}
            for label, variant in ABLATIONS:
                summary = multi_seed(_runs(ctx, variant, graph, adj, adj_r,
                                           hyper))
                means[label] = summary
            groups.append(f"{name}/{backbone}")
            for label, _ in ABLATIONS:
                summary = means[label]
                rows.append((name, backbone, label, summary.mean, summary.std,
                             summary.mean - means["full"].mean))
                series[label].append(summary.mean)
    config = {"experiment": "ablate", "datasets": datasets,
              "backbones": backbones, "max_epochs": ctx.max_epochs,
              "patience": ctx.patience}
    tables = [Table("ablation",
                    ("dataset", "backbone", "variant", "mean_acc", "std_acc",
                     "delta_vs_full"), rows)]
    figures = [Figure("ablation", "bars", {
        "groups": groups,
        "series": {label: np.array(v) for label, v in series.items()},
        "title": "Ablations", "ylabel": "accuracy"})]
    return ReportBundle("ablate", config, ctx.environment, tables, figures)


def run_fusion(ctx: RunContext, datasets: list[str],
               backbones: list[str]) -> ReportBundle:
    """Layer fusion against mean/max pooling and attention sum."""
    rows = []
    series = {mode: [] for mode in FUSIONS}
    groups = []
    for ds in datasets:
        graph, name = resolve_graph(ds, ctx)
        for backbone in backbones:
            hyper = resolve_hyper(ds, backbone)
            adj, adj_r = prepared_topologies(graph, hyper, ctx.workers)
            groups.append(f"{name}/{backbone}")
            for mode in FUSIONS:
                variant = ModelVariant("dual", mode)
                summary = multi_seed(_runs(ctx, variant, graph, adj, adj_r,
                                           hyper))
                rows.append((name, backbone, mode, summary.mean, summary.std))
                series[mode].append(summary.mean)
    config = {"experiment": "fusion", "datasets": datasets,
              "backbones": backbones, "max_epochs": ctx.max_epochs,
              "patience": ctx.patience}
    tables = [Table("fusion", ("dataset", "backbone", "fusion", "mean_acc",
                               "std_acc"), rows)]
    figures = [Figure("fusion", "bars", {
        "groups": groups,
        "series": {mode: np.array(v) for mode, v in series.items()},
        "title": "Fusion operators", "ylabel": "accuracy"})]
    return ReportBundle("fusion", config, ctx.environment, tables, figures)


_TOPOLOGY_CHANNEL = {"original-only": "original",
                     "reconstructed-only": "reconstructed"}


def run_attention(ctx: RunContext, datasets: list[str], backbone: str,
                  topologies: list[str]) -> ReportBundle:
    """Per-layer attention of a 10-slice attention-sum model.

    Each topology is trained on its own; the exported table holds the
    node-mean weight per slice plus the shallow/deep halves of the mass.
    """
    layer_rows, mass_rows, summary_rows = [], [], []
    fig_series = {}
    for ds in datasets:
        graph, name = resolve_graph(ds, ctx)
        hyper = with_fields(resolve_hyper(ds, backbone), Q1=9, Q2=9)
        adj, adj_r = prepared_topologies(graph, hyper, ctx.workers)
        for topology in topologies:
            channel = _TOPOLOGY_CHANNEL[topology]
            variant = ModelVariant(topology, "attention-sum")
            runs = _runs(ctx, variant, graph, adj, adj_r, hyper)
            per_layer, shallow, deep = [], [], []
            for run in runs:
                model = build_model(variant, graph, hyper,
                                    np.random.default_rng(0))
                model.store.load_snapshot(run.best_params)
                export = export_layer_attention(model, graph, adj, adj_r)
                stats = export[channel]
                per_layer.append(stats["per_layer"])
                shallow.append(stats["shallow_mass"])
                deep.append(stats["deep_mass"])
                mass_rows.append((name, topology, run.seed,
                                  stats["shallow_mass"], stats["deep_mass"]))
            mean_layers = np.mean(per_layer, axis=0)
            layer_rows += [(name, topology, layer, mean_layers[layer])
                           for layer in range(mean_layers.size)]
            summary_rows.append((name, topology, float(np.mean(shallow)),
                                 float(np.mean(deep))))
            fig_series[f"{name}/{topology}"] = mean_layers
    config = {"experiment": "attention", "datasets": datasets,
              "backbone": backbone, "topologies": topologies,
              "max_epochs": ctx.max_epochs, "patience": ctx.patience}
    tables = [
        Table("attention_layers", ("dataset", "topology", "layer",
                                   "mean_weight"), layer_rows),
        Table("attention_mass", ("dataset", "topology", "seed",
                                 "shallow_mass", "deep_mass"), mass_rows),
        Table("attention_summary", ("dataset", "topology", "shallow_mean",
                                    "deep_mean"), summary_rows),
    ]
    n_layers = max((s.size for s in fig_series.values()), default=0)
    figures = [Figure("attention", "line", {
        "x": list(range(n_layers)), "series": fig_series,
        "title": "Attention mass per layer", "xlabel": "layer",
        "ylabel": "mean weight"})]
    return ReportBundle("attention", config, ctx.environment, tables, figures)


_REWIRE_HEADER = ("dataset", "metric", "mode", "k", "gamma",
                  "homophily_before", "homophily_after", "seconds",
                  "peak_extra_bytes")


def run_rewire(ctx: RunContext, datasets: list[str], k: int | None,
               gamma: float) -> ReportBundle:
    """Four-way benchmark (both metrics, both modes) per dataset."""
    rows = []
    groups, series = [], {}
    for ds in datasets:
        graph, name = resolve_graph(ds, ctx)
        kk = k if k is not None else resolve_hyper(ds, "gcn").k
        groups.append(name)
        for rec in rewire_benchmark(graph, kk, gamma, workers=ctx.workers):
            rows.append((name,) + tuple(rec[col] for col in
                                        _REWIRE_HEADER[1:]))
            key = f"{rec['metric']}/{rec['mode']}"
            series.setdefault(key, []).append(rec["homophily_after"])
    config = {"experiment": "rewire", "datasets": datasets, "k": k,
              "gamma": gamma}
    tables = [Table("rewire", _REWIRE_HEADER, rows)]
    figures = [Figure("rewire", "bars", {
        "groups": groups,
        "series": {key: np.array(v) for key, v in series.items()},
        "title": "Homophily after reconstruction", "ylabel": "homophily"})]
    return ReportBundle("rewire", config, ctx.environment, tables, figures)


def run_rewire_single(ctx: RunContext, dataset: str, metric: str, mode: str,
                      k: int | None, gamma: float,
                      out_root) -> ReportBundle:
    """One reconstruction pass; writes the rewired graph as a DatasetDir."""
    graph, name = resolve_graph(dataset, ctx)
    kk = k if k is not None else resolve_hyper(dataset, "gcn").k
    t0 = time.perf_counter()
    result = rewire(graph, k=kk, metric=metric, mode=mode, gamma=gamma,
                    workers=ctx.workers)
    seconds = time.perf_counter() - t0
    safe = name.replace(":", "_").replace(",", "_").replace("=", "-")
    out_dir = Path(out_root) / "rewire" / "datasets" / f"{safe}-{metric}-{mode}"
    save_dataset(result.graph, out_dir, name=f"{safe}-{metric}-{mode}")
    rows = [(name, metric, mode, kk, gamma, result.homophily_before,
             result.homophily_after, seconds, 0)]
    config = {"experiment": "rewire", "dataset": dataset, "metric": metric,
              "mode": mode, "k": kk, "gamma": gamma}
    return ReportBundle("rewire", config, ctx.environment,
                        [Table("rewire", _REWIRE_HEADER, rows)], [])


def run_oversmooth(ctx: RunContext, datasets: list[str],
                   l_max: int) -> ReportBundle:
    """Propagation-depth sweep per dataset, raw and normalized."""
    rows = []
    series = {}
    for ds in datasets:
        graph, name = resolve_graph(ds, ctx)
        curve = oversmoothing_sweep(graph, l_max, seed=ctx.seeds[0])
        for l in range(l_max + 1):
            rows.append((name, l, curve.raw[l], curve.normalized[l],
                         int(l == curve.best_round)))
        series[name] = curve.normalized
    config = {"experiment": "oversmooth", "datasets": datasets,
              "l_max": l_max}
    tables = [Table("oversmooth", ("dataset", "l", "raw_acc", "norm_acc",
                                   "is_best"), rows)]
    figures = [Figure("oversmooth", "line", {
        "x": list(range(l_max + 1)), "series": series,
        "title": "Accuracy vs propagation depth", "xlabel": "rounds",
        "ylabel": "normalized accuracy"})]
    return ReportBundle("oversmooth", config, ctx.environment, tables,
                        figures)


def run_overhead(ctx: RunContext, datasets: list[str], backbone: str,
                 epochs: int) -> ReportBundle:
    """Mean epoch time of the full model relative to its backbone.

    Runs a fixed number of epochs with early stopping disabled so both
    models time the same amount of work; the first epoch of each run is
    dropped as allocation warm-up.
    """
    rows = []
    groups, base_times, ledf_times = [], [], []
    for ds in datasets:
        graph, name = resolve_graph(ds, ctx)
        hyper = resolve_hyper(ds, backbone)
        adj, adj_r = prepared_topologies(graph, hyper, ctx.workers)
        timings = {}
        for tag, variant, a_r in (("backbone", None, None),
                                  ("ledf", FULL_VARIANT, adj_r)):
            runs = train_seeds(variant, graph, adj, a_r, hyper, ctx.seeds,
                               max_epochs=epochs, patience=epochs,
                               workers=1)
            secs = np.concatenate([r.epoch_seconds[1:] if r.epochs_run > 1
                                   else r.epoch_seconds for r in runs])
            timings[tag] = float(secs.mean())
        ratio = timings["ledf"] / timings["backbone"]
        rows.append((name, backbone, "backbone", timings["backbone"], 1.0))
        rows.append((name, backbone, "ledf", timings["ledf"], ratio))
        groups.append(name)
        base_times.append(timings["backbone"])
        ledf_times.append(timings["ledf"])
    config = {"experiment": "overhead", "datasets": datasets,
              "backbone": backbone, "epochs": epochs}
    tables = [Table("overhead", ("dataset", "backbone", "model",
                                 "mean_epoch_seconds", "ratio"), rows)]
    figures = [Figure("overhead", "bars", {
        "groups": groups,
        "series": {"backbone": np.array(base_times),
                   "ledf": np.array(ledf_times)},
        "title": "Mean epoch time", "ylabel": "seconds"})]
    return ReportBundle("overhead", config, ctx.environment, tables, figures)


def run_export(ctx: RunContext, dataset: str, backbone: str) -> ReportBundle:
    """Final logits and labels for external projection tooling."""
    graph, name = resolve_graph(dataset, ctx)
    hyper = resolve_hyper(dataset, backbone)
    adj, adj_r = prepared_topologies(graph, hyper, ctx.workers)
    run = train_seeds(FULL_VARIANT, graph, adj, adj_r, hyper,
                      (ctx.seeds[0],), max_epochs=ctx.max_epochs,
                      patience=ctx.patience)[0]
    if ctx.log_root is not None:
        write_run_log(run, ctx.log_root)
    model = build_model(FULL_VARIANT, graph, hyper, np.random.default_rng(0))
    model.store.load_snapshot(run.best_params)
    from .autodiff import Tape
    logits = model.forward(Tape(), graph, adj, adj_r,
                           training=False).logits.data
    header = ("node",) + tuple(f"logit_{j}" for j in range(graph.c)) \
        + ("label", "split")
    rows = [(i,) + tuple(logits[i]) + (int(graph.labels[i]), graph.split[i])
            for i in range(graph.n)]
    config = {"experiment": "export", "dataset": dataset,
              "backbone": backbone, "seed": ctx.seeds[0],
              "max_epochs": ctx.max_epochs, "patience": ctx.patience}
    env = {"seeds": [ctx.seeds[0]], "workers": ctx.workers}
    return ReportBundle("export", config, env,
                        [Table("embeddings", header, rows)], [])
