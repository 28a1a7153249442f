import json
from unittest import mock

import numpy as np
import pytest

from etherphase import cli
from etherphase.cli import (
    EXIT_CONFIG_ERROR,
    EXIT_IDENTITY_FAILURE,
    EXIT_OK,
    build_parser,
    describe,
    main,
    reason_code,
    run_compute,
)
from etherphase.config import GridSpec, RunConfig
from etherphase.exceptions import (
    AmbiguityException,
    ConditioningException,
    DomainException,
    EtherPhaseException,
    InvalidConfigException,
    IterationLimitException,
    StageException,
)
from etherphase.utils import Experiment

SMALL_GRID = "-0.5:0.5:3,-0.5:0.5:3"


class TestReasonCode:
    @pytest.mark.parametrize(
        "error,code",
        [
            (AmbiguityException("two chords"), "ambiguous"),
            (StageException("singular", "chord"), "stage-failed"),
            (IterationLimitException("slow", 1.0, 50), "no-convergence"),
            (ConditioningException("singular"), "ill-conditioned"),
            (DomainException("far"), "outside-domain"),
            (EtherPhaseException("other"), "error"),
        ],
    )
    def test_codes(self, error, code):
        assert reason_code(error) == code


class TestParser:
    def test_verify_flags(self):
        args = build_parser().parse_args(
            [
                "verify",
                "--fixture",
                "sphere_chart",
                "--check",
                "eq2.3-skew",
                "--check",
                "eq2.4-fixed-point",
            ]
        )
        assert args.fixture == "sphere_chart"
        assert args.checks == ["eq2.3-skew", "eq2.4-fixed-point"]

    def test_experiment_choices(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["compute", "--experiment", "verify"])

    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestDescribe:
    def test_lists_fixtures_and_identities(self):
        text = describe()
        assert "  euclid_weyl_2n" in text
        assert "  torsion_const" in text
        assert "  eq2.3-skew: H_x(s_x z) = -H_x(z)" in text

    def test_describe_command(self, capsys):
        assert main(["describe", "euclid_weyl_2n"]) == EXIT_OK
        assert "euclid_weyl_2n" in capsys.readouterr().out

    def test_unwritable_output(self, tmp_path):
        out = tmp_path / "missing" / "report.csv"
        assert main(["verify", "--check", "eq2.4-fixed-point", "--out", str(out)]) == (
            EXIT_CONFIG_ERROR
        )

    def test_unknown_fixture(self):
        assert main(["describe", "klein_bottle"]) == EXIT_CONFIG_ERROR


class TestVerify:
    def test_passing_identities(self, capsys):
        code = main(["verify", "--check", "eq2.4-fixed-point", "--check", "eq8.2-chord-circle"])
        out = capsys.readouterr().out
        assert code == EXIT_OK
        lines = out.splitlines()
        assert lines[0] == "# fixture euclid_weyl_2n, seed 0"
        rows = [line for line in lines if line.startswith("eq")]
        assert [row.split(",")[0] for row in rows] == ["eq2.4-fixed-point", "eq8.2-chord-circle"]
        assert all(row.split(",")[2] == "pass" for row in rows)

    def test_corrupted_structure(self, tmp_path, capsys):
        config = tmp_path / "corrupt.json"
        config.write_text(
            json.dumps({"corrupt": "scale_H 1.1", "checks": ["eq2.1-zero-curvature"]})
        )
        assert main(["verify", "--config", str(config)]) == EXIT_IDENTITY_FAILURE
        assert ",fail," in capsys.readouterr().out

    def test_jsonl_to_file(self, tmp_path):
        out = tmp_path / "report.jsonl"
        code = main(
            ["verify", "--check", "eq2.4-fixed-point", "--format", "jsonl", "--out", str(out)]
        )
        assert code == EXIT_OK
        (line,) = out.read_text().splitlines()
        record = json.loads(line)
        assert record["identity"] == "eq2.4-fixed-point"
        assert record["status"] == "pass"
        assert record["samples"] == 100

    def test_unknown_fixture(self):
        assert main(["verify", "--fixture", "klein_bottle"]) == EXIT_CONFIG_ERROR

    def test_unknown_identity(self):
        assert main(["verify", "--check", "eq99.9-missing"]) == EXIT_CONFIG_ERROR

    def test_invalid_config_file(self, tmp_path):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"colour": "blue"}))
        assert main(["verify", "--config", str(config)]) == EXIT_CONFIG_ERROR

    def test_deterministic_output(self, tmp_path):
        paths = [tmp_path / "first.csv", tmp_path / "second.csv"]
        for path in paths:
            main(["verify", "--check", "eq2.3-skew", "--seed", "5", "--out", str(path)])

        def without_wall_time(path):
            return [line.rsplit(",", 1)[0] for line in path.read_text().splitlines()]

        assert without_wall_time(paths[0]) == without_wall_time(paths[1])


class TestCompute:
    def test_chord_grid(self, tmp_path):
        out = tmp_path / "chord.jsonl"
        code = main(
            [
                "compute",
                "--experiment",
                "chord",
                "--grid",
                SMALL_GRID,
                "--format",
                "jsonl",
                "--out",
                str(out),
            ]
        )
        assert code == EXIT_OK
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(rows) == 9
        center = rows[4]
        assert (center["q"], center["p"]) == (0.0, 0.0)
        assert center["status"] == "nan"
        assert center["reason"] == "ambiguous"
        assert center["chord"] is None
        assert all(row["status"] == "ok" for i, row in enumerate(rows) if i != 4)

    def test_chord_outside_circle(self):
        config = RunConfig(
            experiment=Experiment.CHORD,
            grid=GridSpec((0.5, 0.9, 2), (0.0, 0.9, 2)),
        )
        rows = run_compute(config).rows
        assert rows[0]["status"] == "ok"
        corner = rows[-1]
        assert corner["status"] == "nan"
        assert corner["reason"] == "outside-domain"
        assert np.isnan(corner["chord"])

    def test_solver_failures_become_reasons(self):
        config = RunConfig(
            experiment=Experiment.CHORD, grid=GridSpec((0.5, 0.5, 1), (0.0, 0.0, 1))
        )
        failure = ConditioningException("singular Jacobian")
        with mock.patch.object(cli, "chord_phase", side_effect=failure):
            (row,) = run_compute(config).rows
        assert row["status"] == "nan"
        assert row["reason"] == "ill-conditioned"
        assert np.isnan(row["chord"])

    def test_phase_csv(self, capsys):
        assert main(["compute", "--experiment", "phase", "--grid", SMALL_GRID]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert "q,p,phase,iterations,status,reason" in lines
        assert len([line for line in lines if not line.startswith("#")]) == 10

    def test_phase_values(self):
        config = RunConfig(
            experiment=Experiment.PHASE, grid=GridSpec((1.0, 1.0, 1), (0.0, 0.0, 1)), time=0.5
        )
        (row,) = run_compute(config).rows
        assert row["phase"] == pytest.approx(-np.tan(0.25), abs=1e-6)
        assert row["iterations"] > 0

    def test_groupoid_columns_follow_dimension(self):
        config = RunConfig(
            fixture_params={"n": 2},
            experiment=Experiment.GROUPOID,
            grid=GridSpec((0.0, 0.1, 2), (0.0, 0.1, 2)),
        )
        table = run_compute(config)
        assert table.columns == (
            "q",
            "p",
            "left_0",
            "left_1",
            "left_2",
            "left_3",
            "right_0",
            "right_1",
            "right_2",
            "right_3",
            "iterations",
            "status",
            "reason",
        )
        assert len(table.rows) == 4

    def test_product(self):
        config = RunConfig(
            experiment=Experiment.PRODUCT,
            grid=GridSpec((0.0, 0.0, 1), (0.0, 0.0, 1)),
            params={"y": [1.0, 0.0], "z": [0.0, 1.0]},
        )
        (row,) = run_compute(config).rows
        assert row["triangle"] == pytest.approx(-2.0)

    def test_invalid_params(self):
        config = RunConfig(experiment=Experiment.TORSION, params={"shift": "east"})
        with pytest.raises(InvalidConfigException):
            run_compute(config)

    def test_grid_outside_domain(self):
        grid = GridSpec((0.0, 50.0, 2), (0.0, 0.0, 1))
        config = RunConfig(experiment=Experiment.PHASE, grid=grid)
        with pytest.raises(InvalidConfigException):
            run_compute(config)

    def test_needs_experiment(self):
        assert main(["compute", "--grid", SMALL_GRID]) == EXIT_CONFIG_ERROR
