"""Command-line contract tests: file formats, determinism, exit codes, and
the case-study ingestion pipeline (on small synthetic inputs)."""

import json
import os

import numpy as np
import pytest

from latentgp.cli import main
from latentgp.io import read_dataset, read_draws, read_json, write_dataset
from latentgp.simulate import PCGP, ScenarioConfig, generate


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestSimulateCommand:
    def test_pcgp_dataset_shape(self, tmp_path, capsys):
        out = tmp_path / "sim.csv"
        assert run_cli("simulate", "--scenario", "pcgp", "--n", 20, "--d", 5,
                       "--seed", 1, "--out", out) == 0
        with open(out) as fh:
            header = fh.readline().strip().split(",")
            rows = fh.read().strip().splitlines()
        assert len(rows) == 20
        assert header == (["id", "x_true", "x_tilde"]
                          + [f"y_f_{k}" for k in range(1, 6)]
                          + [f"y_g_{k}" for k in range(1, 6)])
        assert os.path.exists(tmp_path / "sim.truth.json")
        assert os.path.exists(tmp_path / "sim.manifest.json")

    def test_trials_use_consecutive_seeds(self, tmp_path):
        out = tmp_path / "sim.csv"
        assert run_cli("simulate", "--scenario", "dgp", "--n", 5, "--d", 2,
                       "--seed", 10, "--out", out, "--trials", 3) == 0
        for trial, seed in enumerate(range(10, 13)):
            path = tmp_path / f"sim_t{trial:03d}.csv"
            truth = read_json(tmp_path / f"sim_t{trial:03d}.truth.json")
            assert truth["seed"] == seed
            parsed = read_dataset(str(path))
            direct = generate(ScenarioConfig(process="dgp", N=5, D=2, seed=seed))
            np.testing.assert_array_equal(parsed.x_true, direct.x_true)

    def test_round_trip_exact(self, tmp_path):
        data = generate(ScenarioConfig(process=PCGP, N=15, D=3, seed=3))
        path = tmp_path / "roundtrip.csv"
        write_dataset(str(path), data)
        back = read_dataset(str(path))
        np.testing.assert_array_equal(back.x_true, data.x_true)
        np.testing.assert_array_equal(back.x_tilde, data.x_tilde)
        np.testing.assert_array_equal(back.y_f, data.y_f)
        np.testing.assert_array_equal(back.y_g, data.y_g)

    def test_missing_out_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run_cli("simulate", "--scenario", "pcgp", "--n", 5, "--d", 2, "--seed", 1)
        assert exc.value.code == 2


class TestFitCommand:
    @pytest.fixture(scope="class")
    def dataset(self, tmp_path_factory):
        path = tmp_path_factory.mktemp("data") / "train.csv"
        run_cli("simulate", "--scenario", "pcgp", "--n", 8, "--d", 2,
                "--seed", 2, "--out", path)
        return path

    def test_fit_outputs_and_determinism(self, dataset, tmp_path):
        out1 = tmp_path / "draws1.csv"
        out2 = tmp_path / "draws2.csv"
        for out in (out1, out2):
            code = run_cli("fit", "--model", "pchsgp", "--data", dataset,
                           "--out", out, "--m", 5, "--iters", 300,
                           "--warmup", 150, "--seed", 99)
            assert code == 0
        assert out1.read_bytes() == out2.read_bytes()
        names, arr = read_draws(str(out1))
        assert arr.shape[0] == 150  # iters - warmup retained rows
        diag = read_json(tmp_path / "draws1.diagnostics.json")
        assert set(diag["params"]) == set(names)
        for key in ("divergences", "wall_time_s", "clamp_count", "treedepth_hist"):
            assert key in diag
        assert any(n.startswith("rho_f[") for n in names)
        assert any(n.startswith("Cf[") for n in names)

    def test_retained_rows_follow_iters_minus_warmup(self, dataset, tmp_path):
        out = tmp_path / "draws.csv"
        run_cli("fit", "--model", "shsgp", "--data", dataset, "--out", out,
                "--m", 4, "--iters", 120, "--warmup", 40, "--seed", 5)
        _, arr = read_draws(str(out))
        assert arr.shape[0] == 80

    def test_single_block_model_warns_and_runs(self, dataset, tmp_path, capsys):
        out = tmp_path / "draws.csv"
        code = run_cli("fit", "--model", "sdhsgp", "--data", dataset, "--out", out,
                       "--m", 4, "--iters", 60, "--warmup", 30, "--seed", 5)
        assert code == 0
        assert "ignores" in capsys.readouterr().err

    def test_composite_model_single_block_fatal(self, tmp_path, capsys):
        # hand-build a dataset CSV with only the y_f block
        path = tmp_path / "single.csv"
        lines = ["id,x_true,x_tilde,y_f_1"]
        rng = np.random.default_rng(0)
        for i in range(6):
            x = rng.uniform(0, 10)
            lines.append(f"{i+1},{x},{x + rng.normal(0, 0.3)},{rng.normal()}")
        path.write_text("\n".join(lines) + "\n")
        code = run_cli("fit", "--model", "pdhsgp", "--data", path,
                       "--out", tmp_path / "draws.csv", "--iters", 60,
                       "--warmup", 30, "--seed", 1)
        assert code == 1
        assert "both output blocks" in capsys.readouterr().err

    def test_prior_override_file(self, dataset, tmp_path):
        priors = tmp_path / "priors.txt"
        priors.write_text("rho_f.loc=2.0\nrho_f.scale=0.01\n# comment\neta=2.0\n")
        out = tmp_path / "draws.csv"
        code = run_cli("fit", "--model", "pchsgp", "--data", dataset, "--out", out,
                       "--m", 4, "--iters", 80, "--warmup", 40, "--seed", 7,
                       "--priors", priors)
        assert code == 0
        _, arr = read_draws(str(out))
        names, _ = read_draws(str(out))
        rho_cols = [i for i, n in enumerate(names) if n.startswith("rho_f[")]
        # the tight prior at 2.0 dominates these few noisy observations
        assert abs(arr[:, rho_cols].mean() - 2.0) < 0.2

    def test_bad_prior_key_fails(self, dataset, tmp_path, capsys):
        priors = tmp_path / "priors.txt"
        priors.write_text("rho_q.loc=2.0\n")
        code = run_cli("fit", "--model", "pchsgp", "--data", dataset,
                       "--out", tmp_path / "d.csv", "--iters", 60, "--warmup", 30,
                       "--seed", 1, "--priors", priors)
        assert code == 1
        assert "unknown prior key" in capsys.readouterr().err


class TestSbcCommand:
    def test_refuses_too_few_trials(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("sbc", "--model", "shsgp", "--trials", 5, "--n", 4, "--d", 1,
                    "--seed", 1, "--out", tmp_path / "sbc.json")
        assert exc.value.code == 2

    def test_small_run_report_and_determinism(self, tmp_path):
        args = ("sbc", "--model", "shsgp", "--trials", 20, "--n", 4, "--d", 1,
                "--m", 3, "--iters", 120, "--warmup", 60, "--seed", 11,
                "--no-strict")
        assert run_cli(*args, "--out", tmp_path / "a.json") == 0
        assert run_cli(*args, "--out", tmp_path / "b.json") == 0
        a = read_json(tmp_path / "a.json")
        b = read_json(tmp_path / "b.json")
        assert a["ranks"] == b["ranks"]
        assert set(a["classes"]) == {"x", "rho", "alpha", "sigma", "mu", "beta"}
        assert (tmp_path / "a.ranks.csv").exists()


class TestCaseStudyCommand:
    @pytest.fixture()
    def expression_files(self, tmp_path):
        rng = np.random.default_rng(8)
        n = 25
        t = np.round(np.linspace(0.0, 1.0, n), 6)
        x = np.clip(t + rng.normal(0, 0.05, n), 0, 1)
        genes = ["geneA", "geneB"]
        spliced = tmp_path / "spliced.csv"
        velocity = tmp_path / "velocity.csv"
        header = "cell_id,exp_time," + ",".join(genes)
        s_lines, v_lines = [header], [header]
        for i in range(n):
            f1 = np.sin(2 * x[i]) * 2
            f2 = np.cos(3 * x[i])
            s_lines.append(f"cell{i:03d},{t[i]},{f1 + rng.normal(0, 0.1)},"
                           f"{f2 + rng.normal(0, 0.1)}")
            v_lines.append(f"cell{i:03d},{t[i]},{2 * np.cos(2 * x[i]) + rng.normal(0, 0.2)},"
                           f"{-3 * np.sin(3 * x[i]) + rng.normal(0, 0.2)}")
        spliced.write_text("\n".join(s_lines) + "\n")
        velocity.write_text("\n".join(v_lines) + "\n")
        return spliced, velocity

    def test_derivative_mode_end_to_end(self, expression_files, tmp_path):
        spliced, velocity = expression_files
        out = tmp_path / "ordering.csv"
        code = run_cli("casestudy", "--spliced", spliced, "--velocity", velocity,
                       "--m", 4, "--iters", 150, "--warmup", 75, "--seed", 3,
                       "--out", out)
        assert code == 0
        with open(out) as fh:
            header = fh.readline().strip().split(",")
            rows = [line.split(",") for line in fh.read().strip().splitlines()]
        assert header == ["cell_id", "exp_time", "post_mean", "q05", "q50", "q95"]
        assert len(rows) == 25
        means = np.array([float(r[2]) for r in rows])
        assert np.all((means > 0) & (means < 1))  # uniform prior bounds respected
        assert (tmp_path / "ordering.draws.csv").exists()
        assert (tmp_path / "ordering.diagnostics.json").exists()

    def test_subsample_determinism(self, expression_files, tmp_path):
        spliced, velocity = expression_files
        outs = []
        for name in ("s1.csv", "s2.csv"):
            out = tmp_path / name
            assert run_cli("casestudy", "--spliced", spliced, "--velocity", velocity,
                           "--m", 3, "--iters", 80, "--warmup", 40, "--seed", 7,
                           "--subsample", 10, "--out", out) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_standardization_is_exact(self, expression_files, tmp_path):
        spliced, velocity = expression_files
        out = tmp_path / "ordering.csv"
        run_cli("casestudy", "--spliced", spliced, "--velocity", velocity,
                "--m", 3, "--iters", 60, "--warmup", 30, "--seed", 3, "--out", out)
        # reconstruct the standardized design exactly as the command does
        from latentgp.cli import _read_expression
        _, _, _, expr = _read_expression(str(spliced))
        standardized = (expr - expr.mean(axis=0)) / expr.std(axis=0)
        assert np.all(np.abs(standardized.mean(axis=0)) < 1e-12)
        assert np.all(np.abs(standardized.std(axis=0) - 1.0) < 1e-12)

    def test_mismatched_cells_fatal(self, expression_files, tmp_path, capsys):
        spliced, velocity = expression_files
        broken = tmp_path / "broken.csv"
        lines = velocity.read_text().splitlines()
        lines[1] = lines[1].replace("cell000", "cellXXX")
        broken.write_text("\n".join(lines) + "\n")
        code = run_cli("casestudy", "--spliced", spliced, "--velocity", broken,
                       "--m", 3, "--iters", 60, "--warmup", 30, "--seed", 1,
                       "--out", tmp_path / "o.csv")
        assert code == 1
        assert "cell_id sets differ" in capsys.readouterr().err

    def test_unknown_gene_fatal(self, expression_files, tmp_path, capsys):
        spliced, velocity = expression_files
        code = run_cli("casestudy", "--spliced", spliced, "--velocity", velocity,
                       "--genes", "geneA,nope", "--m", 3, "--iters", 60,
                       "--warmup", 30, "--seed", 1, "--out", tmp_path / "o.csv")
        assert code == 1
        err = capsys.readouterr().err
        assert "nope" in err and "geneA" in err

    def test_non_numeric_cell_fatal(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("cell_id,exp_time,g1\nc1,0.5,oops\nc2,0.6,1.0\n")
        code = run_cli("casestudy", "--spliced", bad, "--velocity", bad,
                       "--m", 3, "--iters", 60, "--warmup", 30, "--seed", 1,
                       "--out", tmp_path / "o.csv")
        assert code == 1
        assert "row 1" in capsys.readouterr().err

    def test_mode_flags_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("casestudy", "--spliced", "x.csv", "--out", tmp_path / "o.csv")
        assert exc.value.code == 2


class TestReportCommand:
    def test_report_from_fit_and_dataset(self, tmp_path):
        data = tmp_path / "sim.csv"
        run_cli("simulate", "--scenario", "pcgp", "--n", 6, "--d", 2,
                "--seed", 4, "--out", data)
        draws = tmp_path / "draws.csv"
        run_cli("fit", "--model", "pchsgp", "--data", data, "--out", draws,
                "--m", 4, "--iters", 100, "--warmup", 50, "--seed", 4)
        outdir = tmp_path / "figs"
        code = run_cli("report", "--draws", draws, "--data", data,
                       "--diagnostics", tmp_path / "draws.diagnostics.json",
                       "--out", outdir)
        assert code == 0
        assert (outdir / "recovery.png").exists()
        assert (outdir / "recovery.csv").exists()
        assert (outdir / "fit_diagnostics.png").exists()
        assert (outdir / "fit_diagnostics.csv").exists()

    def test_requires_an_input(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("report", "--out", tmp_path)
        assert exc.value.code == 2
