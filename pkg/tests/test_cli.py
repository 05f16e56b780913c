"""End-to-end CLI runs on synthetic graphs, plus argument plumbing."""

import csv
import json

import numpy as np
import pytest

from ledfgnn import config_hash, edge_homophily, load_dataset
from ledfgnn.cli import _collect, _int_list, _sweep_arg, main
from ledfgnn.experiments import parse_sbm_id

EASY = "sbm:n=60,c=2,h=0.8,deg=4,signal=0.5,seed=1"
HOMOPHILIC = "sbm:n=80,c=2,h=0.9,deg=5,signal=0.3,seed=2"
FAST = ["--seeds", "0,1", "--max-epochs", "15", "--patience", "100"]


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class TestArgHelpers:
    def test_int_list(self):
        assert _int_list("0,1,2") == (0, 1, 2)
        with pytest.raises(Exception, match="bad integer list"):
            _int_list("0,x")

    def test_sweep_arg(self):
        assert _sweep_arg("Q=1,2,3") == ("Q", ["1", "2", "3"])
        with pytest.raises(Exception, match="PARAM=v1,v2"):
            _sweep_arg("Q")

    def test_collect_keeps_sbm_descriptors_whole(self):
        assert _collect(["cora,citeseer", "sbm:n=10,c=2"]) == \
            ["cora", "citeseer", "sbm:n=10,c=2"]

    def test_parse_sbm_id_defaults_and_overrides(self):
        spec = parse_sbm_id("sbm:n=50,h=0.3,seed=7")
        assert (spec.n, spec.target_homophily, spec.seed) == (50, 0.3, 7)
        assert spec.c == 3
        with pytest.raises(ValueError, match="bad SBM descriptor"):
            parse_sbm_id("sbm:volume=11")


class TestClassify:
    def test_table_runs_and_config(self, tmp_path):
        out = str(tmp_path)
        code = main(["classify", "--dataset", EASY, "--backbone", "mlp",
                     "--out", out] + FAST)
        assert code == 0
        header, rows = read_csv(tmp_path / "classify" / "classify.csv")
        assert header == ["dataset", "backbone", "baseline_mean",
                          "baseline_std", "ledf_mean", "ledf_std", "gain"]
        assert len(rows) == 1
        row = rows[0]
        assert row[0] == EASY and row[1] == "mlp"
        gain = float(row[6])
        assert gain == pytest.approx(float(row[4]) - float(row[2]), abs=1e-4)

        _, run_rows = read_csv(tmp_path / "classify" / "runs.csv")
        assert len(run_rows) == 4  # 2 models x 2 seeds
        config = json.loads((tmp_path / "classify" / "config.json")
                            .read_text())
        assert config_hash(config["config"]) == config["config_hash"]
        assert config["environment"]["seeds"] == [0, 1]

    def test_ledf_at_least_baseline_on_homophilic_sbm(self, tmp_path):
        code = main(["classify", "--dataset", HOMOPHILIC, "--backbone",
                     "mlp", "--out", str(tmp_path), "--seeds", "0,1,2",
                     "--max-epochs", "40"])
        assert code == 0
        _, rows = read_csv(tmp_path / "classify" / "classify.csv")
        baseline, ledf = float(rows[0][2]), float(rows[0][4])
        assert ledf >= baseline

    def test_outputs_byte_stable_across_runs(self, tmp_path):
        def run(sub):
            root = tmp_path / sub
            assert main(["classify", "--dataset", EASY, "--backbone", "mlp",
                         "--out", str(root)] + FAST) == 0
            return ((root / "classify" / "classify.csv").read_bytes(),
                    (root / "classify" / "classify.svg").read_bytes())

        assert run("one") == run("two")

    def test_sweep_writes_per_value_rows(self, tmp_path):
        code = main(["classify", "--dataset", EASY, "--backbone", "mlp",
                     "--sweep", "Q=1,2", "--out", str(tmp_path)] + FAST)
        assert code == 0
        header, rows = read_csv(tmp_path / "classify" / "sweep.csv")
        assert header == ["dataset", "backbone", "param", "value",
                          "ledf_mean", "ledf_std", "baseline_mean"]
        assert [(r[2], r[3]) for r in rows] == [("Q", "1"), ("Q", "2")]

    def test_unknown_dataset_exits_nonzero(self, tmp_path, capsys):
        code = main(["classify", "--dataset", "atlantis", "--data",
                     str(tmp_path / "nope"), "--out", str(tmp_path)] + FAST)
        assert code == 1
        assert "atlantis" in capsys.readouterr().err

    def test_missing_dataset_flag_exits_nonzero(self, tmp_path):
        assert main(["classify", "--out", str(tmp_path)] + FAST) == 1


class TestAblate:
    def test_five_variants_with_full_delta_zero(self, tmp_path):
        code = main(["ablate", "--dataset", EASY, "--backbone", "mlp",
                     "--out", str(tmp_path)] + FAST)
        assert code == 0
        _, rows = read_csv(tmp_path / "ablate" / "ablation.csv")
        variants = [r[2] for r in rows]
        assert variants == ["full", "original-only", "reconstructed-only",
                            "last-only", "middle-only"]
        by_name = {r[2]: r for r in rows}
        assert float(by_name["full"][5]) == 0.0


class TestFusion:
    def test_all_four_fusions_finish_with_finite_accuracy(self, tmp_path):
        code = main(["fusion", "--dataset", "sbm:n=60,c=2,h=0.5,deg=4,seed=3",
                     "--backbone", "mlp", "--out", str(tmp_path)] + FAST)
        assert code == 0
        _, rows = read_csv(tmp_path / "fusion" / "fusion.csv")
        assert [r[2] for r in rows] == ["ledf", "mean-pool", "max-pool",
                                       "attention-sum"]
        for row in rows:
            acc = float(row[3])
            assert np.isfinite(acc) and 0.0 <= acc <= 1.0


class TestAttention:
    def test_layers_sum_to_one_per_topology(self, tmp_path):
        code = main(["attention", "--dataset", EASY, "--backbone", "mlp",
                     "--out", str(tmp_path), "--seeds", "0",
                     "--max-epochs", "10"])
        assert code == 0
        _, rows = read_csv(tmp_path / "attention" / "attention_layers.csv")
        # CSV cells carry 6 significant digits, so the 1e-9 invariant on
        # the raw weights (covered by the model tests) relaxes here
        for topology in ("original-only", "reconstructed-only"):
            weights = [float(r[3]) for r in rows if r[1] == topology]
            assert len(weights) == 10  # Q=9 stack
            assert sum(weights) == pytest.approx(1.0, abs=1e-4)
        _, mass = read_csv(tmp_path / "attention" / "attention_mass.csv")
        for row in mass:
            assert float(row[3]) + float(row[4]) == pytest.approx(1.0,
                                                                  abs=1e-4)


class TestRewire:
    def test_benchmark_rows_and_schema(self, tmp_path):
        ds = "sbm:n=50,c=2,h=0.4,deg=4,seed=3"
        code = main(["rewire", "--dataset", ds, "--k", "3",
                     "--out", str(tmp_path)])
        assert code == 0
        header, rows = read_csv(tmp_path / "rewire" / "rewire.csv")
        assert header == ["dataset", "metric", "mode", "k", "gamma",
                          "homophily_before", "homophily_after", "seconds",
                          "peak_extra_bytes"]
        assert [(r[1], r[2]) for r in rows] == [
            ("lsc", "rewire-origin"), ("lsc", "from-empty"),
            ("cosine", "rewire-origin"), ("cosine", "from-empty")]

    def test_single_pass_saves_rewired_dataset(self, tmp_path):
        ds = "sbm:n=50,c=2,h=0.4,deg=4,signal=1,seed=3"
        code = main(["rewire", "--dataset", ds, "--k", "3", "--metric",
                     "lsc", "--mode", "from-empty", "--out", str(tmp_path)])
        assert code == 0
        dirs = list((tmp_path / "rewire" / "datasets").iterdir())
        assert len(dirs) == 1
        saved = load_dataset(dirs[0])
        _, rows = read_csv(tmp_path / "rewire" / "rewire.csv")
        assert float(rows[0][6]) == pytest.approx(edge_homophily(saved),
                                                  abs=1e-6)

    def test_metric_without_mode_exits_nonzero(self, tmp_path):
        assert main(["rewire", "--dataset", EASY, "--metric", "lsc",
                     "--out", str(tmp_path)]) == 1


class TestOversmooth:
    def test_curve_rows_and_normalization(self, tmp_path):
        # heterophilic, feature-driven: accuracy degrades with depth, so
        # the curve is not flat and the min/max normalization is visible
        ds = "sbm:n=80,c=3,h=0.1,deg=6,signal=0.7,seed=2"
        code = main(["oversmooth", "--dataset", ds, "--l-max", "3",
                     "--out", str(tmp_path)])
        assert code == 0
        _, rows = read_csv(tmp_path / "oversmooth" / "oversmooth.csv")
        assert [int(r[1]) for r in rows] == [0, 1, 2, 3]
        norm = np.array([float(r[3]) for r in rows])
        assert norm.min() == 0.0 and norm.max() == 1.0
        assert sum(int(r[4]) for r in rows) == 1


class TestOverhead:
    def test_ratio_consistent_with_times(self, tmp_path):
        code = main(["overhead", "--dataset", EASY, "--backbone", "gcn",
                     "--seeds", "0", "--epochs", "5", "--out",
                     str(tmp_path)])
        assert code == 0
        _, rows = read_csv(tmp_path / "overhead" / "overhead.csv")
        assert [r[2] for r in rows] == ["backbone", "ledf"]
        base, ledf = float(rows[0][3]), float(rows[1][3])
        assert float(rows[1][4]) == pytest.approx(ledf / base, rel=1e-3)


class TestExport:
    def test_row_per_node_and_deterministic(self, tmp_path):
        args = ["export", "--dataset", EASY, "--backbone", "mlp",
                "--seeds", "0", "--max-epochs", "10"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        header, rows = read_csv(tmp_path / "a" / "export" / "embeddings.csv")
        assert header == ["node", "logit_0", "logit_1", "label", "split"]
        assert len(rows) == 60
        assert (tmp_path / "a" / "export" / "embeddings.csv").read_bytes() \
            == (tmp_path / "b" / "export" / "embeddings.csv").read_bytes()

    def test_two_datasets_rejected(self, tmp_path):
        assert main(["export", "--dataset", EASY, "--dataset", HOMOPHILIC,
                     "--out", str(tmp_path)]) == 1
