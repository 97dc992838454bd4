"""Config parsing, output files, replication driving, and the entry point."""

import json

import numpy as np
import pytest

from smc_mmle import RunTrace, SbmModel, ToyGaussianModel
from smc_mmle.cli import (
    ExperimentConfig,
    build_model,
    cmd_compare,
    cmd_oracle,
    cmd_run,
    main,
    make_runner,
    stop_rule,
    write_trace_csv,
)

TOY_INI = """\
[model]
name = toy
theta_true = 1.0
d_x = 4
data_seed = 11

[algorithm]
name = mirror
gamma = 0.05
iterations = 5
particles = 30

[run]
seed = 3
output = {out}
"""

GMM_COMPARE_INI = """\
[model]
name = gmm
alpha = 0.8
theta_true = 1.0
num_data = 40
data_seed = 5

[algorithm.fast]
name = mirror
gamma = 0.05
iterations = 4
particles = 40
proposal = prior
grad_scale = per-datum

[algorithm.em]
name = em
iterations = 4

[run]
seed = 2
replications = 2
output = {out}
"""


def read_csv(path):
    lines = path.read_text().strip().split("\n")
    rows = [line.split(",") for line in lines]
    return rows[0], rows[1:]


class TestExperimentConfig:
    def test_minimal_parse(self):
        cfg = ExperimentConfig.from_ini(TOY_INI.format(out="/tmp/x"))
        assert cfg.model["name"] == "toy"
        assert len(cfg.algorithms) == 1
        label, settings = cfg.algorithms[0]
        assert label == "mirror" and settings["gamma"] == "0.05"
        assert cfg.run["seed"] == "3"

    def test_labelled_sections(self):
        cfg = ExperimentConfig.from_ini(GMM_COMPARE_INI.format(out="/tmp/x"))
        assert [label for label, _ in cfg.algorithms] == ["fast", "em"]

    def test_roundtrip_through_ini(self):
        for text in (TOY_INI, GMM_COMPARE_INI):
            cfg = ExperimentConfig.from_ini(text.format(out="/tmp/x"))
            again = ExperimentConfig.from_ini(cfg.to_ini())
            assert again == cfg

    def test_echo_rebuilds_equal_config(self):
        cfg = ExperimentConfig.from_ini(GMM_COMPARE_INI.format(out="/tmp/x"))
        echo = cfg.echo()
        rebuilt = ExperimentConfig(echo["model"],
                                   tuple((l, dict(s)) for l, s in echo["algorithms"]),
                                   echo["run"])
        assert rebuilt == cfg

    def test_missing_model_section(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_ini("[algorithm]\nname = em\n")

    def test_missing_algorithm_section(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_ini("[model]\nname = toy\n")

    def test_duplicate_labels(self):
        text = ("[model]\nname = toy\n"
                "[algorithm]\nname = em\n"
                "[algorithm.em]\nname = em\n")
        with pytest.raises(ValueError, match="duplicate"):
            ExperimentConfig.from_ini(text)

    def test_percent_values_survive(self):
        text = "[model]\nname = toy\nnote = 100%\n[algorithm]\nname = mirror\n"
        cfg = ExperimentConfig.from_ini(text)
        assert cfg.model["note"] == "100%"


class TestBuildModel:
    def test_toy(self):
        model, info = build_model({"name": "toy", "d_x": "6", "theta_true": "2.0"})
        assert isinstance(model, ToyGaussianModel)
        assert model.d_x == 6
        assert np.isclose(info["truth_theta"][0], model.y.mean())

    def test_data_seed_reproducible(self):
        a, _ = build_model({"name": "toy", "d_x": "6", "data_seed": "9"})
        b, _ = build_model({"name": "toy", "d_x": "6", "data_seed": "9"})
        c, _ = build_model({"name": "toy", "d_x": "6", "data_seed": "10"})
        assert np.array_equal(a.y, b.y)
        assert not np.array_equal(a.y, c.y)

    def test_gmm_needs_alpha(self):
        with pytest.raises(ValueError, match="alpha"):
            build_model({"name": "gmm"})

    def test_multimodal_defaults(self):
        model, info = build_model({"name": "multimodal"})
        assert np.array_equal(model.data, [-20.0, 1.0, 2.0, 3.0])
        assert info["truth_theta"] is None

    def test_blr(self):
        model, info = build_model({"name": "blr", "theta_true": "1 2 3",
                                   "num_data": "20"})
        assert model.d_theta == 3
        assert np.array_equal(info["truth_theta"], [1.0, 2.0, 3.0])

    def test_sbm_from_edge_list(self, tmp_path):
        graph = tmp_path / "g.txt"
        graph.write_text("0 1\n1 2\n2 0\n3 4\n")
        labels = tmp_path / "labels.txt"
        labels.write_text("0\n0\n0\n1\n1\n")
        model, info = build_model({"name": "sbm", "graph": str(graph),
                                   "labels": str(labels), "num_blocks": "2"})
        assert isinstance(model, SbmModel)
        assert model.d_x == 5
        assert info["truth_labels"].tolist() == [0, 0, 0, 1, 1]

    def test_sbm_karate(self):
        model, info = build_model({"name": "sbm", "graph": "karate"})
        assert model.d_x == 34
        assert info["truth_labels"].shape == (34,)

    def test_sbm_simulated(self):
        model, info = build_model({"name": "sbm", "num_blocks": "2",
                                   "p_true": "0.6 0.4",
                                   "nu_true": "0.25 0.1 0.2",
                                   "d_x": "30"})
        assert model.d_x == 30
        assert info["truth_labels"].shape == (30,)
        # packed truth: (p1, p2, nu_11, nu_12, nu_22)
        assert np.allclose(info["truth_theta"], [0.6, 0.4, 0.25, 0.1, 0.2])

    def test_unknown_model(self):
        with pytest.raises(ValueError, match="unknown model"):
            build_model({"name": "mystery"})


class TestMakeRunner:
    def test_unknown_algorithm(self):
        model, info = build_model({"name": "toy", "d_x": "3"})
        with pytest.raises(ValueError, match="unknown algorithm"):
            make_runner({"name": "vi", "iterations": "2"}, model, info)

    def test_em_requires_gmm(self):
        model, info = build_model({"name": "toy", "d_x": "3"})
        with pytest.raises(ValueError, match="gmm"):
            make_runner({"name": "em", "iterations": "2"}, model, info)

    def test_saem_requires_sbm(self):
        model, info = build_model({"name": "toy", "d_x": "3"})
        with pytest.raises(ValueError, match="sbm"):
            make_runner({"name": "saem", "iterations": "2"}, model, info)

    def test_mirror_runs(self):
        from smc_mmle import RngStream
        model, info = build_model({"name": "toy", "d_x": "3"})
        runner = make_runner({"name": "mirror", "gamma": "0.1",
                              "iterations": "3", "particles": "20"}, model, info)
        trace = runner(RngStream(0))
        assert trace.thetas.shape == (4, 1)
        assert trace.metadata["variant"] == "fast"

    def test_mirror_exact_variant(self):
        from smc_mmle import RngStream
        model, info = build_model({"name": "toy", "d_x": "3"})
        runner = make_runner({"name": "mirror-exact", "gamma": "0.1",
                              "iterations": "3", "particles": "20"}, model, info)
        assert runner(RngStream(0)).metadata["variant"] == "exact"

    def test_stop_key_threads_through(self):
        from smc_mmle import RngStream
        model, info = build_model({"name": "toy", "d_x": "3"})
        runner = make_runner({"name": "mirror", "gamma": "0.01",
                              "iterations": "500", "particles": "40",
                              "stop": "1e-6"}, model, info)
        trace = runner(RngStream(0))
        assert trace.metadata["stopped_at"] is not None
        assert trace.thetas.shape[0] < 501


class TestCmdRun:
    def run_once(self, tmp_path, name, extra=""):
        out = tmp_path / name
        text = TOY_INI.format(out=out)
        if extra:
            text = text.replace("[run]", "[run]\n%s" % extra)
        cfg = ExperimentConfig.from_ini(text)
        assert cmd_run(cfg, out) == 0
        return out

    def test_writes_expected_files(self, tmp_path):
        out = self.run_once(tmp_path, "a")
        header, rows = read_csv(out / "trace.csv")
        assert header == ["iter", "theta_0", "ess", "accept", "elapsed_ns"]
        assert len(rows) == 6  # iterations + 1
        assert [r[0] for r in rows] == [str(i) for i in range(6)]
        summary = json.loads((out / "summary.json").read_text())
        assert summary["algorithm"] == "mirror"
        assert summary["seed"] == 3
        assert np.isclose(float(rows[-1][1]), summary["final_theta"][0])
        p_header, p_rows = read_csv(out / "particles.csv")
        assert p_header == ["particle", "x_0", "x_1", "x_2", "x_3", "weight"]
        assert len(p_rows) == 30
        weights = np.array([float(r[-1]) for r in p_rows])
        assert np.isclose(weights.sum(), 1.0)

    def test_theta_full_precision(self, tmp_path):
        out = self.run_once(tmp_path, "b")
        _, rows = read_csv(out / "trace.csv")
        summary = json.loads((out / "summary.json").read_text())
        # 17 significant digits round-trip the float exactly
        assert float(rows[-1][1]) == summary["final_theta"][0]
        assert any("." in r[1] and len(r[1].split(".")[1]) > 10 for r in rows[1:])

    def test_rerun_identical_modulo_timing(self, tmp_path):
        out1 = self.run_once(tmp_path, "c1")
        out2 = self.run_once(tmp_path, "c2")
        _, rows1 = read_csv(out1 / "trace.csv")
        _, rows2 = read_csv(out2 / "trace.csv")
        assert [r[:-1] for r in rows1] == [r[:-1] for r in rows2]

    def test_zero_iterations(self, tmp_path):
        out = tmp_path / "z"
        text = TOY_INI.format(out=out).replace("iterations = 5", "iterations = 0")
        assert cmd_run(ExperimentConfig.from_ini(text), out) == 0
        _, rows = read_csv(out / "trace.csv")
        assert len(rows) == 1 and rows[0][0] == "0"

    def test_replications_layout_and_aggregate(self, tmp_path):
        out = self.run_once(tmp_path, "d", extra="replications = 3")
        seeds = []
        for rep in range(3):
            summary = json.loads((out / ("rep%03d" % rep) / "summary.json")
                                 .read_text())
            seeds.append(summary["seed"])
        assert seeds == [3, 4, 5]  # base seed 3 plus replication index
        agg = json.loads((out / "summary.json").read_text())
        assert agg["replications"] == 3
        assert len(agg["final_theta_mean"]) == 1
        assert agg["final_theta_variance"][0] > 0.0

    def test_rejects_multiple_algorithms(self, tmp_path):
        cfg = ExperimentConfig.from_ini(GMM_COMPARE_INI.format(out=tmp_path))
        with pytest.raises(ValueError, match="exactly one"):
            cmd_run(cfg, tmp_path)

    def test_em_particles_file_is_bare(self, tmp_path):
        out = tmp_path / "em"
        text = ("[model]\nname = gmm\nalpha = 0.8\nnum_data = 20\n"
                "[algorithm]\nname = em\niterations = 3\n"
                "[run]\noutput = %s\n" % out)
        assert cmd_run(ExperimentConfig.from_ini(text), out) == 0
        assert (out / "particles.csv").read_text() == "particle\n"


class TestCmdCompare:
    def compare(self, tmp_path, env=None, monkeypatch=None):
        out = tmp_path / "cmp"
        cfg = ExperimentConfig.from_ini(GMM_COMPARE_INI.format(out=out))
        if monkeypatch is not None:
            monkeypatch.setenv("SMC_MMLE_THREADS", env)
        assert cmd_compare(cfg, out) == 0
        return out

    def test_table_layout(self, tmp_path):
        out = self.compare(tmp_path)
        header, rows = read_csv(out / "comparison.csv")
        assert header == ["algorithm", "replication", "seed", "theta_0",
                          "mse", "ari", "iterations", "runtime_ns"]
        assert len(rows) == 4  # two algorithms times two replications
        by_algo = {}
        for r in rows:
            by_algo.setdefault(r[0], []).append(r)
        assert set(by_algo) == {"fast", "em"}
        # identical seeds per replication across algorithms
        assert [r[2] for r in by_algo["fast"]] == [r[2] for r in by_algo["em"]]
        for r in rows:
            assert r[4] != ""  # gmm truth known, mse filled
            assert float(r[4]) >= 0.0
        # per-run files land under <label>/rep<k>/
        assert (out / "fast" / "rep000" / "trace.csv").exists()
        assert (out / "em" / "rep001" / "summary.json").exists()

    def test_discrete_cloud_gets_ari(self, tmp_path):
        graph = tmp_path / "g.txt"
        graph.write_text("0 1\n0 2\n1 2\n3 4\n3 5\n4 5\n2 3\n")
        labels = tmp_path / "l.txt"
        labels.write_text("0\n0\n0\n1\n1\n1\n")
        out = tmp_path / "sbm"
        text = ("[model]\nname = sbm\ngraph = %s\nlabels = %s\nnum_blocks = 2\n"
                "[algorithm]\nname = saem\niterations = 20\n"
                "[run]\noutput = %s\n" % (graph, labels, out))
        assert cmd_compare(ExperimentConfig.from_ini(text), out) == 0
        _, rows = read_csv(out / "comparison.csv")
        assert rows[0][5] != ""
        assert -1.0 <= float(rows[0][5]) <= 1.0

    def test_single_algorithm_compare_matches_run(self, tmp_path):
        out_run = tmp_path / "r"
        cfg = ExperimentConfig.from_ini(TOY_INI.format(out=out_run))
        cmd_run(cfg, out_run)
        out_cmp = tmp_path / "c"
        cmd_compare(cfg, out_cmp)
        _, rows_run = read_csv(out_run / "trace.csv")
        _, rows_cmp = read_csv(out_cmp / "mirror" / "trace.csv")
        assert [r[:-1] for r in rows_run] == [r[:-1] for r in rows_cmp]

    def test_parallel_matches_serial(self, tmp_path, monkeypatch):
        serial = self.compare(tmp_path / "s", env="", monkeypatch=monkeypatch)
        parallel = self.compare(tmp_path / "p", env="2", monkeypatch=monkeypatch)
        _, rows_s = read_csv(serial / "comparison.csv")
        _, rows_p = read_csv(parallel / "comparison.csv")
        assert [r[:-1] for r in rows_s] == [r[:-1] for r in rows_p]


class TestStopRuleWrapper:
    def trace(self, thetas):
        thetas = np.asarray(thetas, dtype=float)
        n = thetas.shape[0]
        return RunTrace(thetas, np.full(n, np.nan), np.full(n, np.nan),
                        np.zeros(n, dtype=np.int64))

    def test_below_threshold_stops(self):
        # squared last move 1e-10: stops at 1e-7, not at 1e-11
        assert stop_rule(self.trace([[0.0], [1e-5]]), 1e-7) is True
        assert stop_rule(self.trace([[0.0], [1e-5]]), 1e-11) is False
        assert stop_rule(self.trace([[0.0], [1.0]]), 1e-7) is False

    def test_exact_threshold_does_not_stop(self):
        step = np.sqrt(1e-7)
        assert stop_rule(self.trace([[0.0], [step]]), 1e-7) is False

    def test_only_last_step_counts(self):
        assert stop_rule(self.trace([[0.0], [5.0], [5.0]]), 1e-7) is True

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            stop_rule(self.trace([[0.0]]), 1e-7)


class TestMain:
    def test_oracle_pass(self, capsys):
        assert main(["oracle", "ratio-identity"]) == 0
        out = capsys.readouterr().out
        assert "ratio-identity: PASS" in out

    def test_oracle_unknown_check(self, capsys):
        assert main(["oracle", "nonsense"]) == 1
        assert "unknown check" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "nope.ini")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_malformed_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("not an ini at all\n")
        assert main(["run", "--config", str(bad)]) == 2

    def test_run_needs_output_somewhere(self, tmp_path, capsys):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[model]\nname = toy\nd_x = 3\n"
                       "[algorithm]\nname = mirror\ngamma = 0.1\n"
                       "iterations = 2\nparticles = 10\n")
        assert main(["run", "--config", str(cfg)]) == 2
        assert "output" in capsys.readouterr().err

    def test_run_with_overrides(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[model]\nname = toy\nd_x = 3\n"
                       "[algorithm]\nname = mirror\ngamma = 0.1\n"
                       "iterations = 2\nparticles = 10\n")
        out = tmp_path / "o"
        assert main(["run", "--config", str(cfg), "--out", str(out),
                     "--seed", "42", "--reps", "2"]) == 0
        summary = json.loads((out / "rep000" / "summary.json").read_text())
        assert summary["seed"] == 42
        assert (out / "rep001" / "trace.csv").exists()


class TestWriteTraceCsv:
    def test_nan_cells_render(self, tmp_path):
        trace = RunTrace(np.array([[0.5]]), np.array([np.nan]),
                         np.array([np.nan]), np.zeros(1, dtype=np.int64))
        path = tmp_path / "t.csv"
        write_trace_csv(path, trace)
        _, rows = read_csv(path)
        assert rows[0][2] == "nan" and rows[0][3] == "nan"
