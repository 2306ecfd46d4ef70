"""End-to-end command line tests; every command runs in-process via main()."""

import os
import shutil

import numpy as np
import pytest

import splitlearn as sl
from splitlearn.cli import main


def run(*argv):
    return main(list(argv))


def usage_error(*argv):
    with pytest.raises(SystemExit) as exc:
        run(*argv)
    return exc.value.code


@pytest.fixture(scope="module")
def train_dir(tmp_path_factory):
    d = str(tmp_path_factory.mktemp("cli") / "train")
    assert run(
        "gen-data", "--count", "12", "--seed", "3", "--dist", "u1",
        "--M", "64", "--T", "2", "--out", d,
    ) == 0
    return d


@pytest.fixture(scope="module")
def valid_dir(tmp_path_factory):
    d = str(tmp_path_factory.mktemp("cli") / "valid")
    assert run(
        "gen-data", "--count", "6", "--seed", "4", "--dist", "u1",
        "--M", "64", "--T", "2", "--out", d,
    ) == 0
    return d


class TestGenData:
    def test_writes_dataset_and_manifest(self, train_dir):
        assert os.path.exists(os.path.join(train_dir, "manifest.txt"))
        assert os.path.exists(os.path.join(train_dir, "data.bin"))
        ds = sl.load_dataset(train_dir)
        assert len(ds) == 12
        assert ds.meta.T == 2.0
        assert ds.grid.M == 64
        text = open(os.path.join(train_dir, "run_manifest.txt")).read()
        assert "command = gen-data" in text
        assert "argv = " in text

    def test_count_zero_is_valid(self, tmp_path):
        out = str(tmp_path / "empty")
        assert run("gen-data", "--count", "0", "--M", "64", "--out", out) == 0
        assert len(sl.load_dataset(out)) == 0

    def test_custom_potential_and_distribution(self, tmp_path):
        out = str(tmp_path / "custom")
        code = run(
            "gen-data", "--count", "2", "--M", "64", "--T", "1",
            "--potential", "3,-50,20", "--xcent", "1.5", "--xstd", "0.1",
            "--sigma", "0.4", "--out", out,
        )
        assert code == 0
        ds = sl.load_dataset(out)
        assert (ds.potential.c4, ds.potential.c2, ds.potential.c1) == (3.0, -50.0, 20.0)
        assert ds.meta.params.x_cent == 1.5

    def test_usage_errors_exit_2(self, tmp_path):
        out = str(tmp_path / "x")
        assert usage_error("gen-data", "--count", "-1", "--out", out) == 2
        assert usage_error("gen-data", "--M", "201", "--out", out) == 2
        assert usage_error("gen-data", "--M", "2", "--out", out) == 2
        assert usage_error("gen-data", "--T", "0", "--out", out) == 2
        assert usage_error("gen-data", "--L", "-3", "--out", out) == 2
        assert usage_error("gen-data", "--potential", "1,-10", "--out", out) == 2
        assert usage_error("gen-data", "--potential", "v9", "--out", out) == 2

    def test_replay_reproduces_bitwise(self, tmp_path):
        out = str(tmp_path / "orig")
        assert run(
            "gen-data", "--count", "5", "--seed", "8", "--M", "64",
            "--T", "1", "--out", out,
        ) == 0
        first = sl.load_dataset(out)
        manifest = str(tmp_path / "saved_manifest.txt")
        shutil.copy(os.path.join(out, "run_manifest.txt"), manifest)
        shutil.rmtree(out)
        assert run("replay", manifest) == 0
        second = sl.load_dataset(out)
        assert np.array_equal(first.u0, second.u0)
        assert np.array_equal(first.u_ref, second.u_ref)


class TestEval:
    def test_loss_matches_library(self, valid_dir, tmp_path, capsys):
        out = str(tmp_path / "eval")
        assert run(
            "eval", "--schemes", "strang", "--data", valid_dir, "--h", "0.25",
            "--out", out,
        ) == 0
        ds = sl.load_dataset(valid_dir)
        from splitlearn.train import batch_loss

        red = sl.reduce_coeffs(sl.named_scheme("strang").coeffs)
        want = batch_loss(red, ds, 2.0, 0.25)
        text = open(os.path.join(out, "result.txt")).read()
        fields = dict(
            line.split(" = ") for line in text.strip().split("\n")
        )
        assert fields["scheme"] == "strang"
        assert float(fields["loss"]) == want
        assert f"loss = {want!r}" in capsys.readouterr().out

    def test_fractional_h(self, valid_dir, tmp_path):
        out = str(tmp_path / "evalfrac")
        assert run(
            "eval", "--schemes", "learn5a", "--data", valid_dir, "--h", "1/7",
            "--out", out,
        ) == 0

    def test_non_integral_horizon_fails(self, valid_dir, tmp_path):
        out = str(tmp_path / "evalbad")
        assert run(
            "eval", "--schemes", "strang", "--data", valid_dir, "--h", "0.3",
            "--out", out,
        ) == 1

    def test_exactly_one_scheme_required(self, valid_dir, tmp_path):
        out = str(tmp_path / "e2")
        code = usage_error(
            "eval", "--schemes", "strang,yoshida", "--data", valid_dir, "--out", out
        )
        assert code == 2
        assert usage_error("eval", "--data", valid_dir, "--out", out) == 2

    def test_unknown_scheme_name(self, valid_dir, tmp_path):
        out = str(tmp_path / "e3")
        assert usage_error(
            "eval", "--schemes", "nope", "--data", valid_dir, "--out", out
        ) == 2

    def test_missing_dataset(self, tmp_path):
        out = str(tmp_path / "e4")
        assert usage_error(
            "eval", "--schemes", "strang", "--data", str(tmp_path / "nodir"),
            "--out", out,
        ) == 2


class TestConverge:
    def test_records_csv(self, valid_dir, tmp_path):
        out = str(tmp_path / "conv")
        assert run(
            "converge", "--schemes", "strang,learn5a", "--data", valid_dir,
            "--Ns", "8,16", "--out", out,
        ) == 0
        lines = open(os.path.join(out, "convergence.csv")).read().strip().split("\n")
        assert lines[0] == "scheme,N,subflowEvals,q15.9,median,q84.1"
        assert len(lines) == 5
        rows = [ln.split(",") for ln in lines[1:]]
        got = {(r[0], int(r[1])): int(r[2]) for r in rows}
        # merged symmetric cost: 2*(K-1)*N + 1
        assert got[("strang", 8)] == 17
        assert got[("learn5a", 8)] == 65
        assert got[("learn5a", 16)] == 129

    def test_single_scheme_subflow_budget(self, valid_dir, tmp_path):
        out = str(tmp_path / "conv70")
        assert run(
            "converge", "--schemes", "learn5a", "--data", valid_dir,
            "--Ns", "70", "--out", out,
        ) == 0
        line = open(os.path.join(out, "convergence.csv")).read().strip().split("\n")[1]
        assert int(line.split(",")[2]) == 561

    def test_advantage_requires_reference(self, valid_dir, tmp_path):
        out = str(tmp_path / "convadv")
        code = run(
            "converge", "--schemes", "strang", "--data", valid_dir,
            "--Ns", "8,16", "--budget", "30", "--out", out,
        )
        assert code == 1  # no yoshida records to compare against

    def test_advantage_table_written(self, valid_dir, tmp_path):
        out = str(tmp_path / "convadv2")
        assert run(
            "converge", "--schemes", "yoshida,learn5a", "--data", valid_dir,
            "--Ns", "8,16", "--budget", "60", "--out", out,
        ) == 0
        lines = open(os.path.join(out, "advantage.csv")).read().strip().split("\n")
        assert lines[0] == "scheme,error,relAccuracy,relSpeed,extrapolated"
        ref = next(ln for ln in lines[1:] if ln.startswith("yoshida,"))
        parts = ref.split(",")
        assert float(parts[2]) == 1.0 and float(parts[3]) == 1.0

    def test_bad_step_counts(self, valid_dir, tmp_path):
        out = str(tmp_path / "convbad")
        assert usage_error(
            "converge", "--schemes", "strang", "--data", valid_dir,
            "--Ns", "0,8", "--out", out,
        ) == 2


@pytest.fixture(scope="module")
def conv_csv(valid_dir, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("fit") / "conv")
    assert run(
        "converge", "--schemes", "strang,yoshida", "--data", valid_dir,
        "--Ns", "16,20,24,32,40,48,64,80", "--out", out,
    ) == 0
    return os.path.join(out, "convergence.csv")


class TestFit:
    @pytest.mark.filterwarnings("ignore::UserWarning")
    def test_fit_from_converge_output(self, conv_csv, tmp_path, capsys):
        # higher-order coefficients are underdetermined by pure 2nd-order
        # data, so the unconstrained-direction warning may fire
        out = str(tmp_path / "fit")
        assert run(
            "fit", "--in", conv_csv, "--scheme", "strang", "--T", "2", "--out", out
        ) == 0
        text = open(os.path.join(out, "expansion.txt")).read()
        fields = dict(line.split(" = ") for line in text.strip().split("\n"))
        assert fields["scheme"] == "strang"
        assert float(fields["C2"]) > 0.0
        assert "C2 = " in capsys.readouterr().out

    def test_scheme_flag_required_when_ambiguous(self, conv_csv, tmp_path):
        out = str(tmp_path / "fit2")
        assert usage_error("fit", "--in", conv_csv, "--T", "2", "--out", out) == 2

    def test_unknown_scheme_in_csv(self, conv_csv, tmp_path):
        out = str(tmp_path / "fit3")
        assert usage_error(
            "fit", "--in", conv_csv, "--scheme", "trotter", "--T", "2", "--out", out
        ) == 2

    def test_missing_input_file(self, tmp_path):
        out = str(tmp_path / "fit4")
        assert usage_error(
            "fit", "--in", str(tmp_path / "none.csv"), "--out", out
        ) == 2

    def test_unfittable_data_is_runtime_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        lines = ["scheme,N,subflowEvals,q15.9,median,q84.1"]
        for n in (8, 16, 32, 64, 128, 256, 512):
            lines.append(f"s,{n},{n},0.0,0.0,0.0")
        bad.write_text("\n".join(lines) + "\n")
        out = str(tmp_path / "fit5")
        assert run("fit", "--in", str(bad), "--T", "2", "--out", out) == 1


class TestProject:
    def test_projection_output(self, tmp_path, capsys):
        out = str(tmp_path / "proj")
        assert run("project", "--schemes", "learn5a", "--out", out) == 0
        desc = sl.load_scheme(os.path.join(out, "projected_scheme.txt"))
        assert desc.K == 5
        w112, w122 = sl.order_residuals(desc.coeffs)
        assert abs(w112) + abs(w122) <= 1e-10
        assert "gamma = " in capsys.readouterr().out

    def test_low_stage_count_rejected(self, tmp_path):
        out = str(tmp_path / "proj2")
        assert usage_error("project", "--schemes", "yoshida", "--out", out) == 2


class TestVisualize:
    def test_writes_csv_and_svg(self, tmp_path):
        out = str(tmp_path / "vis")
        assert run("visualize", "--schemes", "strang,yoshida", "--out", out) == 0
        for name in ("strang", "yoshida"):
            csv_text = open(os.path.join(out, f"{name}.csv")).read()
            assert csv_text.startswith("x,y\n")
            svg = open(os.path.join(out, f"{name}.svg")).read()
            assert svg.startswith("<?xml") and "<polyline" in svg

    def test_scheme_file_input(self, tmp_path):
        scheme_path = str(tmp_path / "s.txt")
        sl.save_scheme(sl.named_scheme("strang"), scheme_path)
        out = str(tmp_path / "vis2")
        assert run("visualize", "--scheme-file", scheme_path, "--out", out) == 0
        assert os.path.exists(os.path.join(out, "strang.svg"))


class TestTrain:
    def test_tiny_pipeline(self, train_dir, valid_dir, tmp_path):
        out = str(tmp_path / "run")
        code = run(
            "train", "--K", "3", "--candidates", "grid:-0.2,0.2,0.1",
            "--keep", "3", "--iters", "2", "--batch", "4", "--h", "0.25",
            "--val-every", "1", "--seed", "7", "--threads", "1",
            "--train", train_dir, "--valid", valid_dir, "--out", out,
        )
        assert code == 0
        lines = open(os.path.join(out, "leaderboard.csv")).read().strip().split("\n")
        assert lines[0] == "rank,gamma1,valLoss,flag"
        assert len(lines) >= 2
        best = sl.load_scheme(os.path.join(out, "best_scheme.txt"))
        assert best.K == 3
        assert best.name == "learned-K3"
        traces = [f for f in os.listdir(out) if f.startswith("trace_cand")]
        assert len(traces) == len(lines) - 1

    def test_mismatched_horizons_rejected(self, train_dir, tmp_path):
        other = str(tmp_path / "t1")
        assert run(
            "gen-data", "--count", "4", "--seed", "9", "--M", "64", "--T", "1",
            "--out", other,
        ) == 0
        out = str(tmp_path / "run2")
        code = usage_error(
            "train", "--K", "3", "--h", "0.25", "--train", train_dir,
            "--valid", other, "--out", out,
        )
        assert code == 2

    def test_bad_candidate_specs(self, train_dir, valid_dir, tmp_path):
        out = str(tmp_path / "run3")
        for spec in ("foo", "grid:1,2", "random:"):
            assert usage_error(
                "train", "--K", "3", "--candidates", spec, "--h", "0.25",
                "--train", train_dir, "--valid", valid_dir, "--out", out,
            ) == 2

    def test_invalid_k(self, train_dir, valid_dir, tmp_path):
        out = str(tmp_path / "run4")
        assert usage_error(
            "train", "--K", "2", "--h", "0.25", "--train", train_dir,
            "--valid", valid_dir, "--out", out,
        ) == 2


class TestTopLevel:
    def test_version_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            run("--version")
        assert exc.value.code == 0

    def test_missing_subcommand(self):
        assert usage_error() == 2

    def test_replay_rejects_bad_manifest(self, tmp_path):
        assert usage_error("replay", str(tmp_path / "none.txt")) == 2
        empty = tmp_path / "empty.txt"
        empty.write_text("tool = splitlearn\n")
        assert usage_error("replay", str(empty)) == 2
