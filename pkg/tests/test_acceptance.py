"""Acceptance criteria A1-A11, one test and one PASS/FAIL line each.

Criteria tied to the benchmark datasets skip with an explanatory
message when no data directory is present (see conftest.require_dataset);
the property suite (A10) and the synthetic analogues at the bottom run
everywhere. Accuracy figures below are percentages.
"""

import functools
import time

import numpy as np

import test_autodiff
from conftest import require_dataset
from ledfgnn import (
    FULL_VARIANT,
    LedfGnn,
    ModelVariant,
    SbmSpec,
    is_connected,
    load_dataset,
    multi_seed,
    normalize,
    oversmoothing_sweep,
    preset,
    rank1_distance,
    rewire_benchmark,
    sbm_generate,
    sbm_preset,
    train_seeds,
)
from ledfgnn.autodiff import Tape, gradcheck
from ledfgnn.experiments import prepared_topologies
from ledfgnn.rewire import discretize, lsc_pair, topk_select

SEEDS = (0, 1, 2, 3, 4)


def report(cid: str, ok: bool, detail: str) -> None:
    line = f"{cid}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    assert ok, line


@functools.lru_cache(maxsize=None)
def real_graph(name: str):
    return load_dataset(require_dataset(name))


@functools.lru_cache(maxsize=None)
def classify_pair(name: str, backbone: str):
    """(baseline %, ledf %) 5-seed means under the published preset."""
    graph = real_graph(name)
    hyper = preset(name, backbone)
    adj, adj_r = prepared_topologies(graph, hyper)
    base = multi_seed(train_seeds(None, graph, adj, None, hyper, SEEDS))
    ledf = multi_seed(train_seeds(FULL_VARIANT, graph, adj, adj_r, hyper,
                                  SEEDS))
    return base.mean * 100, ledf.mean * 100


@functools.lru_cache(maxsize=None)
def variant_acc(name: str, backbone: str, topology: str, layer: str):
    graph = real_graph(name)
    hyper = preset(name, backbone)
    adj, adj_r = prepared_topologies(graph, hyper)
    variant = ModelVariant(topology, layer)
    return multi_seed(train_seeds(variant, graph, adj, adj_r, hyper,
                                  SEEDS)).mean * 100


def test_a1_cora_gcn_accuracy_and_gain():
    require_dataset("cora")
    t0 = time.perf_counter()
    base, ledf = classify_pair("cora", "gcn")
    elapsed = time.perf_counter() - t0
    ok = (abs(base - 82.4) <= 1.5 and abs(ledf - 84.0) <= 1.5
          and ledf - base >= 0.8 and elapsed < 300)
    report("A1", ok, f"baseline {base:.1f} vs 82.4±1.5, ledf {ledf:.1f} vs "
           f"84.0±1.5, gain {ledf - base:.1f} >= 0.8, {elapsed:.0f}s < 300s")


def test_a2_wisconsin_gcn_accuracy_and_gain():
    require_dataset("wisconsin")
    base, ledf = classify_pair("wisconsin", "gcn")
    ok = (abs(base - 48.0) <= 4.0 and abs(ledf - 60.0) <= 4.0
          and ledf - base >= 8.0)
    report("A2", ok, f"baseline {base:.1f} vs 48.0±4, ledf {ledf:.1f} vs "
           f"60.0±4, gain {ledf - base:.1f} >= 8")


def test_a3_texas_mlp_accuracy():
    require_dataset("texas")
    base, ledf = classify_pair("texas", "mlp")
    ok = ledf >= base and abs(ledf - 79.0) <= 5.0
    report("A3", ok, f"ledf {ledf:.1f} >= baseline {base:.1f}, "
           f"ledf vs 79.0±5")


def test_a4_blogcatalog_gcn_gain():
    require_dataset("blogcatalog")
    base, ledf = classify_pair("blogcatalog", "gcn")
    ok = ledf - base >= 20.0 and abs(ledf - 79.6) <= 5.0
    report("A4", ok, f"gain {ledf - base:.1f} >= 20, ledf {ledf:.1f} vs "
           f"79.6±5")


# reference homophily (%) per dataset: {mode: {metric: value}}
A5_TABLE = {
    "cora": {"from-empty": {"cosine": 61.8, "lsc": 63.2},
             "rewire-origin": {"cosine": 71.1, "lsc": 75.0}},
    "citeseer": {"from-empty": {"cosine": 64.0, "lsc": 64.7},
                 "rewire-origin": {"cosine": 67.0, "lsc": 69.5}},
    "chameleon": {"from-empty": {"cosine": 24.2, "lsc": 30.0},
                  "rewire-origin": {"cosine": 23.7, "lsc": 28.4}},
    "wisconsin": {"from-empty": {"cosine": 63.9, "lsc": 66.6},
                  "rewire-origin": {"cosine": 60.5, "lsc": 62.6}},
}


def test_a5_lsc_beats_cosine_homophily():
    for name in A5_TABLE:
        require_dataset(name)
    problems = []
    for name, expected in A5_TABLE.items():
        graph = real_graph(name)
        k = preset(name, "gcn").k
        got = {}
        for row in rewire_benchmark(graph, k):
            got.setdefault(row["mode"], {})[row["metric"]] = \
                row["homophily_after"] * 100
        for mode in ("from-empty", "rewire-origin"):
            if got[mode]["lsc"] < got[mode]["cosine"]:
                problems.append(f"{name}/{mode}: lsc {got[mode]['lsc']:.1f} "
                                f"< cosine {got[mode]['cosine']:.1f}")
            for metric in ("lsc", "cosine"):
                want = expected[mode][metric]
                if abs(got[mode][metric] - want) > 3.0:
                    problems.append(
                        f"{name}/{mode}/{metric}: {got[mode][metric]:.1f} "
                        f"vs {want}±3")
    report("A5", not problems,
           "; ".join(problems) if problems else
           "lsc >= cosine in both modes on all four datasets, values ±3pp")


def test_a6_depth_sweep_orderings():
    for name in ("texas", "wisconsin", "cora", "citeseer"):
        require_dataset(name)
    best, norm_at_10 = {}, {}
    for name in ("texas", "wisconsin", "cora", "citeseer"):
        curve = oversmoothing_sweep(real_graph(name), l_max=10, seed=0)
        best[name] = curve.best_round
        norm_at_10[name] = curve.normalized[10]
    het_max = max(best["texas"], best["wisconsin"])
    hom_min = min(best["cora"], best["citeseer"])
    ok = (het_max < hom_min and norm_at_10["texas"] < 0.5
          and norm_at_10["wisconsin"] < 0.5)
    report("A6", ok, f"best rounds {best}, heterophilic max {het_max} < "
           f"homophilic min {hom_min}, normalized@10 texas "
           f"{norm_at_10['texas']:.2f} wisconsin "
           f"{norm_at_10['wisconsin']:.2f} < 0.5")


ABLATION_MODES = (("original-only", "ledf"), ("reconstructed-only", "ledf"),
                  ("dual", "last-only"), ("dual", "middle-only"))


def test_a7_ablations_directionality():
    for name in ("wisconsin", "blogcatalog", "cora", "acm"):
        require_dataset(name)
    problems = []
    for name in ("wisconsin", "blogcatalog"):
        full = classify_pair(name, "gcn")[1]
        for topology, layer in (("original-only", "ledf"),
                                ("dual", "last-only"),
                                ("dual", "middle-only")):
            acc = variant_acc(name, "gcn", topology, layer)
            if not full > acc:
                problems.append(f"{name}: full {full:.1f} !> "
                                f"{topology}/{layer} {acc:.1f}")
    for name in ("cora", "acm"):
        full = classify_pair(name, "gcn")[1]
        for topology, layer in ABLATION_MODES:
            acc = variant_acc(name, "gcn", topology, layer)
            if not full >= acc - 1.0:
                problems.append(f"{name}: full {full:.1f} < "
                                f"{topology}/{layer} {acc:.1f} - 1")
    report("A7", not problems,
           "; ".join(problems) if problems else
           "full beats ablations on heterophilic data, within 1pp elsewhere")


def test_a8_fusion_ordering():
    for name in ("wisconsin", "blogcatalog"):
        require_dataset(name)
    problems = []
    for name in ("wisconsin", "blogcatalog"):
        ledf = classify_pair(name, "gcn")[1]
        for layer in ("mean-pool", "max-pool", "attention-sum"):
            acc = variant_acc(name, "gcn", "dual", layer)
            if not ledf >= acc:
                problems.append(f"{name}: ledf {ledf:.1f} < {layer} "
                                f"{acc:.1f}")
    report("A8", not problems,
           "; ".join(problems) if problems else
           "ledf >= mean/max/attention-sum on both datasets")


def test_a9_attention_mass_shift():
    require_dataset("blogcatalog")
    from ledfgnn.experiments import RunContext, run_attention
    ctx = RunContext(data_root=require_dataset("blogcatalog").parent,
                     seeds=SEEDS)
    bundle = run_attention(ctx, ["blogcatalog"], "mlp",
                           ["original-only", "reconstructed-only"])
    rows = {row[1]: (row[2], row[3])
            for row in bundle.table("attention_summary").rows}
    shallow_orig, deep_orig = rows["original-only"]
    shallow_rec, _ = rows["reconstructed-only"]
    ok = shallow_orig > deep_orig and shallow_rec < shallow_orig
    report("A9", ok, f"original shallow {shallow_orig:.3f} > deep "
           f"{deep_orig:.3f}; reconstructed shallow {shallow_rec:.3f} < "
           f"original shallow")


class TestA10PropertySuite:
    def test_a10a_kernel_gradchecks_twenty_seeds(self):
        worst = 0.0
        for name, factory in test_autodiff._CASES.items():
            for seed in range(20):
                params, build = factory(np.random.default_rng(seed))
                result = gradcheck(build, params)
                assert result.ok(1e-4), (name, seed, result.max_rel_err)
                worst = max(worst, result.max_rel_err)
        report("A10a-kernels", True,
               f"15 kernels x 20 seeds, worst rel err {worst:.2e} < 1e-4")

    def test_a10a_full_model_gradchecks_twenty_seeds(self):
        worst = 0.0
        hyper = sbm_preset("gcn", hidden=6, k=2, Q1=3, Q2=3)
        for seed in range(20):
            graph = sbm_generate(SbmSpec(
                n=8, c=2, target_homophily=0.6, avg_degree=3.0,
                feature_signal=0.8, seed=seed, d=5))
            adj = normalize(graph)
            adj_r = normalize(graph.with_edges(
                np.array([[i, (i + 2) % 8] for i in range(8)])))
            model = LedfGnn.from_preset(FULL_VARIANT, graph, hyper,
                                        rng=np.random.default_rng(seed))

            def build():
                tape, loss, _ = model.loss_on(graph, adj, adj_r, "train",
                                              training=False)
                return tape, loss

            result = gradcheck(build, dict(model.store.items()))
            assert result.ok(1e-4), (seed, result.max_rel_err,
                                     result.worst_param)
            worst = max(worst, result.max_rel_err)
        report("A10a-model", True,
               f"full model x 20 seeds, worst rel err {worst:.2e} < 1e-4")

    def test_a10b_kernels_match_brute_force(self):
        rng = np.random.default_rng(42)
        # mode-3 contraction against the triple loop
        x = rng.normal(size=(6, 4, 5))
        w = rng.normal(size=(5, 3))
        want = np.zeros((6, 4, 3))
        for i in range(6):
            for j in range(4):
                for t in range(3):
                    want[i, j, t] = x[i, j, :] @ w[:, t]
        from ledfgnn.autodiff import Var, mode3
        got = mode3(Tape(), Var(x), Var(w)).data
        assert np.max(np.abs(got - want)) <= 1e-10

        # spmm against dense multiplication on a 64-node graph
        graph = sbm_generate(SbmSpec(n=64, c=4, target_homophily=0.6,
                                     avg_degree=5.0, feature_signal=0.5,
                                     seed=7))
        adj = normalize(graph)
        h = rng.normal(size=(64, 4))
        from ledfgnn.autodiff import spmm
        got = spmm(Tape(), adj, Var(h)).data
        assert np.max(np.abs(got - adj.mat.toarray() @ h)) <= 1e-10

        # bitset similarity against integer popcounts
        mat = discretize(graph.features)
        bits = mat.unpacked()
        for i in range(0, 64, 7):
            for j in range(0, 64, 5):
                a, b = bits[i].astype(bool), bits[j].astype(bool)
                want_ij = np.sum(a & b) - 0.5 * np.sum(a ^ b)
                assert lsc_pair(mat.bits[i], mat.bits[j], 0.5) == want_ij

        # exact top-k against a stable sort
        scores = rng.normal(size=(64, 64))
        picks = topk_select(scores, 6)
        for i in range(64):
            row = scores[i].copy()
            row[i] = -np.inf
            want_i = np.sort(np.argsort(-row, kind="stable")[:6])
            assert np.array_equal(np.sort(picks[i]), want_i)
        report("A10b", True, "mode3/spmm/lsc/topk match brute force <=1e-10")

    def test_a10c_fusion_weight_partitions(self):
        worst_ab, worst_att = 0.0, 0.0
        for seed in range(5):
            graph = sbm_generate(SbmSpec(n=20, c=3, target_homophily=0.5,
                                         avg_degree=4.0, feature_signal=0.7,
                                         seed=seed))
            adj = normalize(graph)
            adj_r = normalize(graph.with_edges(
                np.array([[i, (i + 3) % 20] for i in range(20)])))
            hyper = sbm_preset("mlp", hidden=8, Q1=4, Q2=4)
            rng = np.random.default_rng(seed)
            dual = LedfGnn.from_preset(FULL_VARIANT, graph, hyper, rng=rng)
            result = dual.forward(Tape(), graph, adj, adj_r)
            worst_ab = max(worst_ab,
                           np.max(np.abs(result.alpha + result.beta - 1.0)))
            att = LedfGnn.from_preset(
                ModelVariant("dual", "attention-sum"), graph, hyper,
                rng=np.random.default_rng(seed + 100))
            result = att.forward(Tape(), graph, adj, adj_r)
            for wts in result.slice_weights.values():
                worst_att = max(worst_att,
                                np.max(np.abs(wts.sum(axis=1) - 1.0)))
        ok = worst_ab <= 1e-9 and worst_att <= 1e-9
        report("A10c", ok, f"max |alpha+beta-1| {worst_ab:.1e}, max "
               f"|sum(att)-1| {worst_att:.1e}, both <= 1e-9")

    def test_a10d_rank1_distance_non_increasing(self):
        checked = 0
        seed = 0
        while checked < 50:
            seed += 1
            spec = SbmSpec(n=20 + (seed % 5) * 8, c=2 + seed % 3,
                           target_homophily=0.3 + 0.1 * (seed % 5),
                           avg_degree=6.0, feature_signal=0.5, seed=seed)
            graph = sbm_generate(spec)
            if not is_connected(graph):
                continue
            adj = normalize(graph)
            dists = [rank1_distance(adj, l) for l in (1, 2, 4, 8, 16, 32)]
            assert all(a >= b - 1e-12 for a, b in zip(dists, dists[1:])), \
                (seed, dists)
            checked += 1
        report("A10d", True,
               "rank-1 distance non-increasing on 50 connected graphs")


def test_a11_epoch_time_overhead():
    for name in ("cora", "wisconsin"):
        require_dataset(name)
    from ledfgnn.experiments import RunContext, run_overhead
    ctx = RunContext(data_root=require_dataset("cora").parent,
                     seeds=(0, 1, 2))
    bundle = run_overhead(ctx, ["cora", "wisconsin"], "gcn", epochs=50)
    ratios = {row[0]: row[4] for row in bundle.table("overhead").rows
              if row[2] == "ledf"}
    ok = all(r <= 3.5 for r in ratios.values())
    report("A11", ok, ", ".join(f"{name} ratio {r:.2f}"
                                for name, r in ratios.items()) + " <= 3.5")


class TestSyntheticAnalogues:
    """Directional claims on synthetic graphs; these always run."""

    def test_ledf_at_least_baseline_homophilic(self):
        # features too weak for the bare backbone; propagation supplies
        # the class signal
        graph = sbm_generate(SbmSpec(n=160, c=4, target_homophily=0.9,
                                     avg_degree=6.0, feature_signal=0.15,
                                     seed=1))
        hyper = sbm_preset("mlp", hidden=32)
        adj, adj_r = prepared_topologies(graph, hyper)
        base = multi_seed(train_seeds(None, graph, adj, None, hyper,
                                      (0, 1, 2), max_epochs=100))
        ledf = multi_seed(train_seeds(FULL_VARIANT, graph, adj, adj_r, hyper,
                                      (0, 1, 2), max_epochs=100))
        assert ledf.mean >= base.mean

    def test_rewiring_lifts_separable_heterophilic_graph(self):
        # class-separable features, dense heterophilic edges: the
        # reconstructed channel supplies the signal the original
        # topology destroys
        graph = sbm_generate(SbmSpec(n=150, c=5, target_homophily=0.1,
                                     avg_degree=12.0, feature_signal=1.0,
                                     seed=2))
        hyper = sbm_preset("gcn", hidden=16, k=8)
        adj, adj_r = prepared_topologies(graph, hyper)
        full = multi_seed(train_seeds(FULL_VARIANT, graph, adj, adj_r, hyper,
                                      (0, 1, 2), max_epochs=100))
        orig = multi_seed(train_seeds(ModelVariant("original-only", "ledf"),
                                      graph, adj, adj_r, hyper, (0, 1, 2),
                                      max_epochs=100))
        assert full.mean * 100 - orig.mean * 100 >= 5.0

    def test_depth_sweep_ordering_matches_homophily(self):
        het = oversmoothing_sweep(
            sbm_generate(SbmSpec(n=90, c=3, target_homophily=0.1,
                                 avg_degree=6.0, feature_signal=0.7,
                                 seed=11)), l_max=6, seed=0, hidden=32)
        hom = oversmoothing_sweep(
            sbm_generate(SbmSpec(n=90, c=3, target_homophily=0.9,
                                 avg_degree=6.0, feature_signal=0.2,
                                 seed=11)), l_max=6, seed=0, hidden=32)
        assert het.best_round < hom.best_round

    def test_epoch_time_grows_sublinearly_in_depth(self):
        graph = sbm_generate(SbmSpec(n=300, c=3, target_homophily=0.7,
                                     avg_degree=6.0, feature_signal=0.7,
                                     seed=3))
        adj, adj_r = prepared_topologies(graph, sbm_preset("gcn"))

        def mean_epoch(q):
            hyper = sbm_preset("gcn", Q1=q, Q2=q)
            runs = train_seeds(FULL_VARIANT, graph, adj, adj_r, hyper,
                               (0,), max_epochs=30, patience=30)
            return float(np.mean(runs[0].epoch_seconds[1:]))

        slow, fast = mean_epoch(10), mean_epoch(5)
        assert slow / fast < 2.0, (slow, fast)
