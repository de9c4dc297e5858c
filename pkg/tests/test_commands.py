import json

import numpy as np
import pytest

from main import main
from src.api.commands import (
    EXIT_CONFIG_ERROR,
    EXIT_NONCONVERGENCE,
    EXIT_OK,
    build_run_config,
    parse_k_values,
    run_command,
)
from src.api.models import ConvergenceTable, ErrorRecord, NewtonTrace, SweepRecord
from src.core.config import settings
from src.core.exceptions import NonConvergenceError, ValidationError
from src.services.mesh import generate_square_mesh
from src.utils.hash_utils import validate_hash


def test_defaults_per_command():
    cfg = build_run_config("sweep", {"k_values": "0.1"})
    assert (cfg.n, cfg.half_width, cfg.problem) == (24, 0.57, "constant-k")
    assert cfg.perturb == settings.DEFAULT_PERTURB
    assert cfg.continuation and cfg.line_search
    assert build_run_config("converge").perturb == 0.0
    cfg = build_run_config("converge")
    assert (cfg.n, cfg.levels, cfg.problem) == (4, 4, "quartic")


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "experiment.cfg"
    path.write_text("levels=3\nhalf-width=0.5\nk=0.1,0.2\nseed=11\n")
    cfg = build_run_config("sweep", {"seed": 5, "n": None}, path)
    assert cfg.levels == 3
    assert cfg.half_width == 0.5
    assert cfg.k_values == [0.1, 0.2]
    assert cfg.seed == 5
    assert cfg.n == 24


def test_unknown_config_key(tmp_path):
    path = tmp_path / "experiment.cfg"
    path.write_text("resolution=8\n")
    with pytest.raises(ValidationError):
        build_run_config("converge", config_path=path)


def test_missing_config_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        build_run_config("converge", config_path=tmp_path / "missing.cfg")


@pytest.mark.parametrize(
    "command,overrides",
    [
        ("converge", {"levels": 1}),
        ("converge", {"problem": "constant-k"}),
        ("sweep", {"k_values": "-1"}),
        ("sweep", {}),
        ("solve-linear", {"coefficient": "laplace"}),
        ("mesh-info", {"perturb": 0.3}),
    ],
)
def test_invalid_configurations(command, overrides):
    with pytest.raises(ValidationError):
        build_run_config(command, overrides)


def test_parse_k_values():
    assert parse_k_values("0.01, 0.1,2") == [0.01, 0.1, 2.0]
    assert parse_k_values(1.5) == [1.5]
    with pytest.raises(ValidationError):
        parse_k_values("0.1,abc")


def test_fingerprint_ignores_output_dir():
    a = build_run_config("converge", {"out_dir": "a"})
    b = build_run_config("converge", {"out_dir": "b"})
    assert a.fingerprint_payload() == b.fingerprint_payload()


def test_cli_rejects_single_level(tmp_path):
    assert main(["converge", "--levels", "1", "--out", str(tmp_path)]) == EXIT_CONFIG_ERROR


def test_cli_rejects_negative_curvature(tmp_path):
    assert main(["sweep", "--k=-1", "--out", str(tmp_path)]) == EXIT_CONFIG_ERROR


def test_cli_rejects_unknown_coefficient(tmp_path):
    assert main(["solve-linear", "--coefficient", "laplace", "--out", str(tmp_path)]) == EXIT_CONFIG_ERROR


def test_unwritable_output_directory(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    out = blocker / "results"
    assert main(["mesh-info", "--levels", "1", "--out", str(out)]) == EXIT_CONFIG_ERROR


def test_mesh_info_writes_meshes(tmp_path, capsys):
    assert main(["mesh-info", "--n", "2", "--levels", "2", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "mesh_0.txt").read_text().splitlines()[0] == "13 16 8"
    assert (tmp_path / "mesh_1.txt").exists()
    assert "p2_dofs" in capsys.readouterr().out


def test_solve_linear_quadratic_case(tmp_path):
    code = main(["solve-linear", "--coefficient", "constant-spd", "--n", "2", "--levels", "2", "--out", str(tmp_path)])
    assert code == EXIT_OK
    lines = (tmp_path / "solve_linear.csv").read_text().splitlines()
    assert len(lines) == 3
    errors = [float(row.split(",")[3]) for row in lines[1:]]
    assert max(errors) <= 1e-9
    assert (tmp_path / "field_linear_L0.dat").exists()
    assert (tmp_path / "field_linear_L1.dat").exists()


def test_converge_writes_table_and_fields(tmp_path):
    code = main(["converge", "--problem", "sphere", "--n", "2", "--levels", "2", "--out", str(tmp_path)])
    assert code == EXIT_OK
    lines = (tmp_path / "convergence.csv").read_text().splitlines()
    assert lines[0] == "level,h,ndof,err_l2,eoc_l2,err_h1,eoc_h1,err_h2,eoc_h2,newton_iters"
    assert len(lines) == 3
    assert lines[1].split(",")[4] == ""
    assert lines[2].split(",")[4] != ""
    assert (tmp_path / "field_sphere_L1.dat").exists()
    assert (tmp_path / "mesh_1.txt").exists()


def test_converge_is_deterministic(tmp_path):
    args = ["converge", "--problem", "sphere", "--n", "2", "--levels", "2", "--perturb", "0.2", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    first = (tmp_path / "a" / "convergence.csv").read_bytes()
    assert first == (tmp_path / "b" / "convergence.csv").read_bytes()


def test_converge_partial_table_on_nonconvergence(tmp_path, mocker):
    table = ConvergenceTable(
        problem="quartic",
        records=[ErrorRecord(level=0, h=0.25, ndof=145, err_l2=1e-4, err_h1=1e-3, err_h2=1e-1, newton_iters=6)],
    )
    mocker.patch(
        "src.api.commands.run_convergence_study",
        side_effect=NonConvergenceError("Level 1: diverged", table=table),
    )
    cfg = build_run_config("converge", {"out_dir": str(tmp_path)})
    assert run_command(cfg) == EXIT_NONCONVERGENCE
    lines = (tmp_path / "convergence.csv").read_text().splitlines()
    assert len(lines) == 2


def test_sweep_records_failures(tmp_path, mocker):
    trace = NewtonTrace()
    mocker.patch(
        "src.services.analysis.newton_solve",
        side_effect=NonConvergenceError("did not converge", trace=trace),
    )
    cfg = build_run_config("sweep", {"k_values": "2,0.5", "n": 2, "out_dir": str(tmp_path)})
    assert run_command(cfg) == EXIT_NONCONVERGENCE

    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines == ["K,converged,iterations,min_u,min_eig_H", "0.5,false,0,,", "2,false,0,,"]

    report = json.loads((tmp_path / "sweep_report.json").read_text())
    assert report["smallest_failed_K"] == 0.5
    assert report["largest_converged_K"] is None
    assert validate_hash(report["config_fingerprint"])


def test_sweep_converged_entry(tmp_path):
    cfg = build_run_config("sweep", {"k_values": "0.1", "n": 4, "out_dir": str(tmp_path)})
    assert run_command(cfg) == EXIT_OK
    row = (tmp_path / "sweep.csv").read_text().splitlines()[1].split(",")
    assert float(row[0]) == 0.1
    assert row[1] == "true"
    assert float(row[3]) < 0
    assert (tmp_path / "field_K0.1.dat").exists()


def _failed_record():
    return [SweepRecord(K=0.1, converged=False, iterations=0, message="did not converge")]


def test_sweep_mesh_is_perturbed_by_default(tmp_path, mocker):
    sweep = mocker.patch("src.api.commands.run_curvature_sweep", return_value=_failed_record())
    cfg = build_run_config("sweep", {"k_values": "0.1", "n": 2, "out_dir": str(tmp_path)})
    assert run_command(cfg) == EXIT_NONCONVERGENCE
    mesh = sweep.call_args.args[1]
    plain = generate_square_mesh(-0.57, 0.57, 2)
    assert not np.allclose(mesh.vertices, plain.vertices)


def test_sweep_flags_reach_the_solver(tmp_path, mocker):
    sweep = mocker.patch("src.api.commands.run_curvature_sweep", return_value=_failed_record())
    main(["sweep", "--k", "0.1", "--n", "2", "--no-continuation", "--no-line-search", "--out", str(tmp_path)])
    args = sweep.call_args.args
    assert args[3].line_search is False
    assert args[4] is False
